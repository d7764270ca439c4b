use mtpipe::bleu::*;
use mtpipe::Lang;
use proptest::prelude::*;

/// Straight from the definition: count with linear scans, no hashing.
fn naive_bleu(pairs: &[(Vec<&str>, Vec<&str>)]) -> f64 {
    let mut m = [0f64; 4];
    let mut t = [0f64; 4];
    let (mut c, mut r) = (0f64, 0f64);
    for (h, rf) in pairs {
        c += h.len() as f64;
        r += rf.len() as f64;
        for n in 1..=4 {
            if h.len() < n {
                continue;
            }
            let hg: Vec<&[&str]> = h.windows(n).collect();
            let rg: Vec<&[&str]> = rf.windows(n).collect();
            t[n - 1] += hg.len() as f64;
            let mut seen: Vec<&[&str]> = Vec::new();
            for g in &hg {
                if seen.contains(g) {
                    continue;
                }
                seen.push(g);
                let in_h = hg.iter().filter(|x| *x == g).count();
                let in_r = rg.iter().filter(|x| *x == g).count();
                m[n - 1] += in_h.min(in_r) as f64;
            }
        }
    }
    if c == 0.0 {
        return 0.0;
    }
    let mut logs = 0.0;
    let mut s = 1.0;
    for n in 0..4 {
        if t[n] == 0.0 {
            return 0.0;
        }
        let p = if m[n] == 0.0 {
            s *= 2.0;
            1.0 / (s * t[n])
        } else {
            m[n] / t[n]
        };
        logs += p.ln();
    }
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    100.0 * bp * (logs / 4.0).exp()
}

fn sentence() -> impl Strategy<Value = Vec<&'static str>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]), 0..12)
}

fn corpus() -> impl Strategy<Value = Vec<(Vec<&'static str>, Vec<&'static str>)>> {
    prop::collection::vec((sentence(), sentence()), 1..6)
}

fn score(pairs: &[(Vec<&str>, Vec<&str>)]) -> BleuScore {
    let hyps: Vec<String> = pairs.iter().map(|p| p.0.join(" ")).collect();
    let refs: Vec<String> = pairs.iter().map(|p| p.1.join(" ")).collect();
    corpus_bleu(&hyps, &refs, Lang::Vi).unwrap()
}

#[test]
fn zero_four_gram_overlap_matches_oracle() {
    let pairs = vec![(vec!["a", "b", "c", "x", "e"], vec!["a", "b", "c", "d", "e"])];
    let s = score(&pairs);
    assert!(s.precisions[3] > 0.0);
    assert!((s.bleu - naive_bleu(&pairs)).abs() < 1e-9);
}

proptest! {
    #[test]
    fn agrees_with_naive_definition(pairs in corpus()) {
        let s = score(&pairs);
        prop_assert!((s.bleu - naive_bleu(&pairs)).abs() < 1e-9, "{} vs {}", s.bleu, naive_bleu(&pairs));
    }

    #[test]
    fn order_does_not_matter(pairs in corpus(), seed in any::<u64>()) {
        let mut shuffled = pairs.clone();
        let k = (seed as usize) % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        prop_assert_eq!(score(&pairs).bleu, score(&shuffled).bleu);
    }

    #[test]
    fn stats_are_additive(a in corpus(), b in corpus()) {
        let stats = |p: &[(Vec<&str>, Vec<&str>)]| {
            let h: Vec<String> = p.iter().map(|x| x.0.join(" ")).collect();
            let r: Vec<String> = p.iter().map(|x| x.1.join(" ")).collect();
            corpus_stats(&h, &r, Lang::Vi).unwrap()
        };
        let joined: Vec<_> = a.iter().chain(b.iter()).cloned().collect();
        prop_assert_eq!(stats(&a).merge(&stats(&b)), stats(&joined));
        prop_assert_eq!(stats(&a).merge(&stats(&b)).score().bleu, score(&joined).bleu);
    }

    #[test]
    fn identical_is_perfect(s in prop::collection::vec(sentence(), 1..5)) {
        let texts: Vec<String> = s.iter().map(|x| x.join(" ")).collect();
        if texts.iter().any(|t| t.split(' ').count() >= 4) {
            for lang in [Lang::Zh, Lang::Vi] {
                let sc = corpus_bleu(&texts, &texts, lang).unwrap();
                prop_assert_eq!(sc.rounded(), 100.0);
                prop_assert_eq!(sc.bp, 1.0);
            }
        }
    }
}

#[test]
fn shorter_output_lowers_bp() {
    let stats = |sys_len| BleuStats { matches: [3, 2, 1, 1], totals: [4, 3, 2, 1], sys_len, ref_len: 10 };
    let mut last = f64::INFINITY;
    for len in (1..=10).rev() {
        let bp = stats(len).score().bp;
        assert!(bp < last || len == 10);
        last = bp;
    }
}
