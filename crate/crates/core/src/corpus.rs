//! Monolingual and parallel corpora: loading, statistics, length filtering,
//! uniform sampling and exact deduplication.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::SplitMix64;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: invalid UTF-8")]
    InvalidUtf8 { path: PathBuf, line: usize },
    #[error("parallel corpus line counts differ: {src_lines} source vs {tgt_lines} target")]
    Misaligned { src_lines: usize, tgt_lines: usize },
    #[error("cannot sample {requested} sentences from a corpus of {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("invalid length filter: min_len={min_len}, max_len={max_len}")]
    InvalidFilter { min_len: usize, max_len: usize },
}

/// One line of a corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    /// 0-based line number in the source file.
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizationPolicy {
    /// Every CJK ideograph is a token; remaining runs split on whitespace.
    CharCjk,
    /// Split on Unicode whitespace.
    Whitespace,
}

impl TokenizationPolicy {
    /// The convention used for length filtering and statistics: Chinese is
    /// measured in characters, Vietnamese in syllables.
    pub fn for_lang(lang: crate::Lang) -> Self {
        match lang {
            crate::Lang::Zh => TokenizationPolicy::CharCjk,
            crate::Lang::Vi => TokenizationPolicy::Whitespace,
        }
    }

    pub fn tokenize<'a>(&self, text: &'a str) -> Vec<&'a str> {
        match self {
            TokenizationPolicy::Whitespace => text.split_whitespace().collect(),
            TokenizationPolicy::CharCjk => {
                let mut out = Vec::new();
                for word in text.split_whitespace() {
                    let mut run_start = None;
                    for (i, c) in word.char_indices() {
                        if is_cjk(c) {
                            if let Some(s) = run_start.take() {
                                out.push(&word[s..i]);
                            }
                            out.push(&word[i..i + c.len_utf8()]);
                        } else if run_start.is_none() {
                            run_start = Some(i);
                        }
                    }
                    if let Some(s) = run_start {
                        out.push(&word[s..]);
                    }
                }
                out
            }
        }
    }

    pub fn count_tokens(&self, text: &str) -> usize {
        match self {
            TokenizationPolicy::Whitespace => text.split_whitespace().count(),
            TokenizationPolicy::CharCjk => self.tokenize(text).len(),
        }
    }
}

impl std::str::FromStr for TokenizationPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "char_cjk" => Ok(TokenizationPolicy::CharCjk),
            "whitespace" => Ok(TokenizationPolicy::Whitespace),
            other => Err(format!("unknown tokenization policy `{other}` (expected char_cjk or whitespace)")),
        }
    }
}

/// CJK Unified Ideographs and Extension A.
pub fn is_cjk(c: char) -> bool {
    matches!(c, '\u{4E00}'..='\u{9FFF}' | '\u{3400}'..='\u{4DBF}')
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub sentences: Vec<Sentence>,
}

/// Outcome of reading a corpus file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub lines_read: usize,
    pub blank_dropped: usize,
}

impl Corpus {
    /// Builds a corpus from in-memory lines, dropping blank ones.
    pub fn from_lines<I, S>(lines: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let sentences = lines
            .into_iter()
            .enumerate()
            .filter_map(|(index, line)| {
                let text = line.as_ref().trim_end_matches('\r');
                (!text.trim().is_empty()).then(|| Sentence { text: text.to_string(), index })
            })
            .collect();
        Corpus { sentences }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().map(|s| s.text.as_str())
    }

    /// One sentence per line, LF-terminated.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.sentences {
            out.push_str(&s.text);
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>, CorpusError> {
    let bytes = fs::read(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
    if bytes.is_empty() {
        return Ok(Vec::new());
    }
    let body = bytes.strip_suffix(b"\n").unwrap_or(&bytes);
    body.split(|&b| b == b'\n')
        .enumerate()
        .map(|(i, line)| {
            std::str::from_utf8(line)
                .map(|s| s.trim_end_matches('\r').to_string())
                .map_err(|_| CorpusError::InvalidUtf8 { path: path.to_path_buf(), line: i + 1 })
        })
        .collect()
}

/// Reads a one-sentence-per-line UTF-8 file. Blank and whitespace-only lines
/// are dropped and counted in the report.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<(Corpus, LoadReport), CorpusError> {
    let lines = read_lines(path.as_ref())?;
    let lines_read = lines.len();
    let corpus = Corpus::from_lines(&lines);
    let report = LoadReport { lines_read, blank_dropped: lines_read - corpus.len() };
    Ok((corpus, report))
}

/// Aligned source/target sentences.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelCorpus {
    pub src: Vec<String>,
    pub tgt: Vec<String>,
}

impl ParallelCorpus {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn push(&mut self, src: impl Into<String>, tgt: impl Into<String>) {
        self.src.push(src.into());
        self.tgt.push(tgt.into());
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.src.iter().map(String::as_str).zip(self.tgt.iter().map(String::as_str))
    }

    pub fn src_corpus(&self) -> Corpus {
        Corpus::from_lines(&self.src)
    }

    pub fn tgt_corpus(&self) -> Corpus {
        Corpus::from_lines(&self.tgt)
    }

    pub fn write(&self, src_path: impl AsRef<Path>, tgt_path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let join = |lines: &[String]| lines.iter().map(|l| format!("{l}\n")).collect::<String>();
        for (path, lines) in [(src_path.as_ref(), &self.src), (tgt_path.as_ref(), &self.tgt)] {
            fs::write(path, join(lines)).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
        }
        Ok(())
    }
}

/// Reads two aligned files. Line counts must match; a pair where either side
/// is blank is dropped and counted as blank.
pub fn load_parallel(
    src_path: impl AsRef<Path>,
    tgt_path: impl AsRef<Path>,
) -> Result<(ParallelCorpus, LoadReport), CorpusError> {
    let src = read_lines(src_path.as_ref())?;
    let tgt = read_lines(tgt_path.as_ref())?;
    if src.len() != tgt.len() {
        return Err(CorpusError::Misaligned { src_lines: src.len(), tgt_lines: tgt.len() });
    }
    let lines_read = src.len();
    let mut corpus = ParallelCorpus::default();
    for (s, t) in src.into_iter().zip(tgt) {
        if !s.trim().is_empty() && !t.trim().is_empty() {
            corpus.push(s, t);
        }
    }
    let report = LoadReport { lines_read, blank_dropped: lines_read - corpus.len() };
    Ok((corpus, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_sents: usize,
    pub vocab_size: usize,
    /// Mean tokens per sentence, full precision.
    pub avg_len: f64,
}

impl CorpusStats {
    /// Average length as shown in summary tables.
    pub fn avg_len_rounded(&self) -> u64 {
        (self.avg_len + 0.5).floor() as u64
    }
}

pub fn compute_stats(corpus: &Corpus, policy: TokenizationPolicy) -> CorpusStats {
    compute_stats_texts(corpus.texts(), policy)
}

pub(crate) fn compute_stats_texts<'a>(texts: impl Iterator<Item = &'a str>, policy: TokenizationPolicy) -> CorpusStats {
    let mut vocab: HashSet<&str> = HashSet::new();
    let mut n_sents = 0usize;
    let mut n_tokens = 0usize;
    for text in texts {
        let tokens = policy.tokenize(text);
        n_sents += 1;
        n_tokens += tokens.len();
        vocab.extend(tokens);
    }
    CorpusStats {
        n_sents,
        vocab_size: vocab.len(),
        avg_len: if n_sents == 0 { 0.0 } else { n_tokens as f64 / n_sents as f64 },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthFilter {
    pub min_len: usize,
    pub max_len: usize,
    pub policy: TokenizationPolicy,
}

impl LengthFilter {
    pub fn new(min_len: usize, max_len: usize, policy: TokenizationPolicy) -> Result<Self, CorpusError> {
        if min_len < 1 || min_len > max_len {
            return Err(CorpusError::InvalidFilter { min_len, max_len });
        }
        Ok(Self { min_len, max_len, policy })
    }

    /// The 10–60 token window.
    pub fn default_for(policy: TokenizationPolicy) -> Self {
        Self { min_len: 10, max_len: 60, policy }
    }

    pub fn accepts(&self, text: &str) -> bool {
        let n = self.policy.count_tokens(text);
        (self.min_len..=self.max_len).contains(&n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept: usize,
    pub dropped: usize,
    /// Fraction of input sentences inside the window.
    pub coverage: f64,
}

pub fn filter_by_length(corpus: &Corpus, filter: &LengthFilter) -> (Corpus, FilterReport) {
    let keep: Vec<bool> = corpus.sentences.par_iter().map(|s| filter.accepts(&s.text)).collect();
    let sentences: Vec<Sentence> =
        corpus.sentences.iter().zip(&keep).filter(|(_, &k)| k).map(|(s, _)| s.clone()).collect();
    let kept = sentences.len();
    let total = corpus.len();
    let report = FilterReport {
        kept,
        dropped: total - kept,
        coverage: if total == 0 { 0.0 } else { kept as f64 / total as f64 },
    };
    (Corpus { sentences }, report)
}

/// Sorted indices of a uniform `n`-subset of `0..len` (partial Fisher-Yates
/// driven by [`SplitMix64`]).
pub fn sample_indices(len: usize, n: usize, seed: u64) -> Result<Vec<usize>, CorpusError> {
    if n > len {
        return Err(CorpusError::SampleTooLarge { requested: n, available: len });
    }
    let mut rng = SplitMix64::new(seed);
    let mut pool: Vec<usize> = (0..len).collect();
    for i in 0..n {
        let j = i + rng.below((len - i) as u64) as usize;
        pool.swap(i, j);
    }
    let mut chosen = pool[..n].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Uniform sample without replacement, in original order.
pub fn sample_uniform(corpus: &Corpus, n: usize, seed: u64) -> Result<Corpus, CorpusError> {
    let idx = sample_indices(corpus.len(), n, seed)?;
    Ok(Corpus { sentences: idx.into_iter().map(|i| corpus.sentences[i].clone()).collect() })
}

/// Removes exact duplicates, keeping first occurrences.
pub fn dedup(corpus: &Corpus) -> (Corpus, usize) {
    let mut seen = HashSet::new();
    let sentences: Vec<Sentence> = corpus.sentences.iter().filter(|s| seen.insert(s.text.as_str())).cloned().collect();
    let removed = corpus.len() - sentences.len();
    (Corpus { sentences }, removed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn corpus(lines: &[&str]) -> Corpus {
        Corpus::from_lines(lines)
    }

    fn tmpfile(bytes: &[u8]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(bytes).unwrap();
        f
    }

    #[test]
    fn load_drops_blank_lines() {
        let f = tmpfile(b"a b\n\nc\n");
        let (c, report) = load_corpus(f.path()).unwrap();
        assert_eq!(c.texts().collect::<Vec<_>>(), ["a b", "c"]);
        assert_eq!(report.blank_dropped, 1);
        assert_eq!(report.lines_read, 3);
        assert_eq!(c.sentences[1].index, 2);
    }

    #[test]
    fn load_empty_file() {
        let f = tmpfile(b"");
        let (c, report) = load_corpus(f.path()).unwrap();
        assert!(c.is_empty());
        assert_eq!(report, LoadReport::default());
    }

    #[test]
    fn load_preserves_order_and_strips_cr() {
        let f = tmpfile("你好\r\n世界\n中文\n".as_bytes());
        let (c, _) = load_corpus(f.path()).unwrap();
        assert_eq!(c.texts().collect::<Vec<_>>(), ["你好", "世界", "中文"]);
    }

    #[test]
    fn load_whitespace_only_counts_as_blank() {
        let f = tmpfile(b"x\n   \t\ny");
        let (c, report) = load_corpus(f.path()).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(report.blank_dropped, 1);
    }

    #[test]
    fn load_reports_bad_utf8_line() {
        let f = tmpfile(b"ok\nfine\n\xff\xfe\n");
        match load_corpus(f.path()) {
            Err(CorpusError::InvalidUtf8 { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn load_missing_file_is_io_error() {
        assert!(matches!(load_corpus("/nonexistent/corpus.txt"), Err(CorpusError::Io { .. })));
    }

    #[test]
    fn parallel_requires_equal_line_counts() {
        let s = tmpfile(b"a\nb\n");
        let t = tmpfile(b"x\n");
        assert!(matches!(
            load_parallel(s.path(), t.path()),
            Err(CorpusError::Misaligned { src_lines: 2, tgt_lines: 1 })
        ));
    }

    #[test]
    fn parallel_drops_pairs_with_a_blank_side() {
        let s = tmpfile(b"a\n\nc\n");
        let t = tmpfile(b"x\ny\nz\n");
        let (p, report) = load_parallel(s.path(), t.path()).unwrap();
        assert_eq!(p.src, ["a", "c"]);
        assert_eq!(p.tgt, ["x", "z"]);
        assert_eq!(report.lines_read, 3);
        assert_eq!(report.blank_dropped, 1);
    }

    #[test]
    fn char_cjk_splits_ideographs() {
        let p = TokenizationPolicy::CharCjk;
        assert_eq!(p.tokenize("我爱ABC 北京"), ["我", "爱", "ABC", "北", "京"]);
        assert_eq!(p.tokenize("x中y"), ["x", "中", "y"]);
        assert_eq!(p.tokenize("  "), Vec::<&str>::new());
        // Extension A
        assert_eq!(p.tokenize("\u{3400}\u{4DBF}"), ["\u{3400}", "\u{4DBF}"]);
    }

    #[test]
    fn stats_examples() {
        let s = compute_stats(&corpus(&["a b a", "b c"]), TokenizationPolicy::Whitespace);
        assert_eq!((s.n_sents, s.vocab_size, s.avg_len), (2, 3, 2.5));

        let s = compute_stats(&corpus(&["你好"]), TokenizationPolicy::CharCjk);
        assert_eq!((s.n_sents, s.vocab_size, s.avg_len), (1, 2, 2.0));

        let s = compute_stats(&Corpus::default(), TokenizationPolicy::CharCjk);
        assert_eq!((s.n_sents, s.vocab_size, s.avg_len), (0, 0, 0.0));
    }

    #[test]
    fn avg_len_rounds_half_up() {
        let s = CorpusStats { n_sents: 2, vocab_size: 3, avg_len: 2.5 };
        assert_eq!(s.avg_len_rounded(), 3);
    }

    fn of_length(n: usize) -> String {
        vec!["w"; n].join(" ")
    }

    #[test]
    fn filter_boundaries_are_inclusive() {
        let c = Corpus::from_lines([5, 10, 60, 61].map(of_length));
        let f = LengthFilter::default_for(TokenizationPolicy::Whitespace);
        let (kept, report) = filter_by_length(&c, &f);
        let lens: Vec<usize> = kept.texts().map(|t| t.split(' ').count()).collect();
        assert_eq!(lens, [10, 60]);
        assert_eq!((report.kept, report.dropped), (2, 2));
    }

    #[test]
    fn filter_coverage() {
        let f = LengthFilter::default_for(TokenizationPolicy::Whitespace);
        let c = Corpus::from_lines((0..4).map(|_| of_length(30)));
        assert_eq!(filter_by_length(&c, &f).1.coverage, 1.0);

        let c = Corpus::from_lines((9..=61).map(of_length));
        assert_eq!(filter_by_length(&c, &f).1.coverage, 51.0 / 53.0);
    }

    #[test]
    fn filter_rejects_bad_bounds() {
        assert!(LengthFilter::new(0, 5, TokenizationPolicy::Whitespace).is_err());
        assert!(LengthFilter::new(6, 5, TokenizationPolicy::Whitespace).is_err());
        assert!(LengthFilter::new(5, 5, TokenizationPolicy::Whitespace).is_ok());
    }

    #[test]
    fn sample_full_size_is_identity() {
        let c = corpus(&["a", "b", "c", "d"]);
        assert_eq!(sample_uniform(&c, 4, 123).unwrap(), c);
    }

    #[test]
    fn sample_is_deterministic_and_ordered() {
        let c = Corpus::from_lines((0..100).map(|i| i.to_string()));
        let a = sample_uniform(&c, 10, 42).unwrap();
        let b = sample_uniform(&c, 10, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.sentences.windows(2).all(|w| w[0].index < w[1].index));
        assert_ne!(a, sample_uniform(&c, 10, 43).unwrap());
    }

    #[test]
    fn sample_too_large() {
        let c = corpus(&["a"]);
        assert!(matches!(sample_uniform(&c, 2, 0), Err(CorpusError::SampleTooLarge { requested: 2, available: 1 })));
    }

    #[test]
    fn sample_frequencies_match_binomial() {
        // 10 items choose 1, 10_000 trials: each count ~ Binomial(10_000, 0.1),
        // mean 1000, sigma = sqrt(10_000 * 0.1 * 0.9) = 30.
        let mut counts = [0usize; 10];
        for seed in 0..10_000u64 {
            let idx = sample_indices(10, 1, seed).unwrap();
            counts[idx[0]] += 1;
        }
        for c in counts {
            assert!((c as f64 - 1000.0).abs() <= 90.0, "count {c} outside 3 sigma");
        }
    }

    #[test]
    fn dedup_examples() {
        let (c, n) = dedup(&corpus(&["a", "b", "a"]));
        assert_eq!((c.texts().collect::<Vec<_>>(), n), (vec!["a", "b"], 1));
        let (c, n) = dedup(&corpus(&["a", "b"]));
        assert_eq!((c.len(), n), (2, 0));
        let (c, n) = dedup(&corpus(&["x", "x", "x"]));
        assert_eq!((c.texts().collect::<Vec<_>>(), n), (vec!["x"], 2));
    }
}
