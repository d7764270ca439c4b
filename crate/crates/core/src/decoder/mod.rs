//! Greedy, beam and top-k sampling decoders over a [`StepModel`].

mod backend;
mod toy;

pub use backend::{
    serve_connection, serve_tcp, toy_backend, BackendClient, BackendSpec, ClientOptions, LocalBackend, TranslateError,
    TranslationRequest, TranslationResponse, Translator,
};
pub use toy::{CharCodec, ToyCipherModel};

use serde::{Deserialize, Serialize};

use crate::rng::SplitMix64;

/// Logit assigned to impossible tokens. Finite, and small enough that
/// `exp(NEG_LOGIT - max)` underflows to exactly zero.
pub const NEG_LOGIT: f64 = -1.0e30;

/// Scores the next target token given the source and the generated prefix.
pub trait StepModel: Sync {
    fn vocab_size(&self) -> usize;
    fn eos_id(&self) -> u32;
    /// One finite logit per target token.
    fn next_logits(&self, src: &[u32], prefix: &[u32]) -> Vec<f64>;
}

impl<M: StepModel + ?Sized> StepModel for &M {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn eos_id(&self) -> u32 {
        (**self).eos_id()
    }
    fn next_logits(&self, src: &[u32], prefix: &[u32]) -> Vec<f64> {
        (**self).next_logits(src, prefix)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tokens: Vec<u32>,
    /// Sum of the full-vocabulary log-softmax of each chosen token.
    pub score: f64,
    /// 1-based rank of each chosen token among its step's logits
    /// (higher logit first, lower id first on ties).
    pub ranks: Vec<u32>,
    /// Generation hit `max_len` before EOS.
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    Greedy,
    Beam,
    SampleTopk,
}

impl std::str::FromStr for DecodeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "greedy" => Ok(DecodeMode::Greedy),
            "beam" => Ok(DecodeMode::Beam),
            "sample_topk" => Ok(DecodeMode::SampleTopk),
            other => Err(format!("unknown decode mode `{other}`")),
        }
    }
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&l| (l - max).exp()).sum();
    let log_z = max + sum.ln();
    logits.iter().map(|&l| l - log_z).collect()
}

/// Token ids ordered by logit descending, lower id first on ties.
fn ranked(logits: &[f64]) -> Vec<u32> {
    let mut ids: Vec<u32> = (0..logits.len() as u32).collect();
    ids.sort_by(|&a, &b| logits[b as usize].total_cmp(&logits[a as usize]).then(a.cmp(&b)));
    ids
}

fn rank_of(logits: &[f64], token: u32) -> u32 {
    let l = logits[token as usize];
    let above = logits.iter().enumerate().filter(|&(j, &x)| x > l || (x == l && (j as u32) < token)).count();
    above as u32 + 1
}

/// Re-scores `tokens` under `model`, independently of how they were chosen.
pub fn rescore<M: StepModel + ?Sized>(model: &M, src: &[u32], tokens: &[u32]) -> f64 {
    (0..tokens.len()).map(|i| log_softmax(&model.next_logits(src, &tokens[..i]))[tokens[i] as usize]).sum()
}

pub fn decode_greedy<M: StepModel + ?Sized>(model: &M, src: &[u32], max_len: usize) -> Hypothesis {
    sample_with(model, src, 1, max_len, &mut SplitMix64::new(0))
}

/// Length-unnormalized beam search. Returns up to `beam` hypotheses, best
/// first; equal scores are ordered by token sequence.
pub fn decode_beam<M: StepModel + ?Sized>(model: &M, src: &[u32], beam: usize, max_len: usize) -> Vec<Hypothesis> {
    let beam = beam.max(1);
    let eos = model.eos_id();
    let mut alive = vec![Hypothesis { tokens: Vec::new(), score: 0.0, ranks: Vec::new(), truncated: false }];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for _ in 0..max_len {
        if alive.is_empty() {
            break;
        }
        let mut candidates: Vec<Hypothesis> = Vec::new();
        for hyp in &alive {
            let logits = model.next_logits(src, &hyp.tokens);
            let logp = log_softmax(&logits);
            for (rank, &tok) in ranked(&logits).iter().take(beam).enumerate() {
                let mut next = hyp.clone();
                next.tokens.push(tok);
                next.ranks.push(rank as u32 + 1);
                next.score += logp[tok as usize];
                candidates.push(next);
            }
        }
        sort_hypotheses(&mut candidates);
        candidates.truncate(beam);
        alive.clear();
        for c in candidates {
            if c.tokens.last() == Some(&eos) {
                finished.push(c);
            } else {
                alive.push(c);
            }
        }
    }
    for mut h in alive {
        h.truncated = true;
        finished.push(h);
    }
    sort_hypotheses(&mut finished);
    finished.truncate(beam);
    finished
}

fn sort_hypotheses(hyps: &mut [Hypothesis]) {
    hyps.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.tokens.cmp(&b.tokens)));
}

/// Top-k sampling: each step keeps the `k` highest logits, renormalizes them
/// with a softmax and draws one token. `k` larger than the vocabulary is
/// clamped.
pub fn decode_topk_sample<M: StepModel + ?Sized>(
    model: &M,
    src: &[u32],
    k: usize,
    seed: u64,
    max_len: usize,
) -> Hypothesis {
    let vocab = model.vocab_size();
    let k = if k > vocab {
        log::warn!("top-k of {k} exceeds vocabulary size {vocab}; clamping");
        vocab
    } else {
        k.max(1)
    };
    sample_with(model, src, k, max_len, &mut SplitMix64::new(seed))
}

fn sample_with<M: StepModel + ?Sized>(
    model: &M,
    src: &[u32],
    k: usize,
    max_len: usize,
    rng: &mut SplitMix64,
) -> Hypothesis {
    let eos = model.eos_id();
    let mut hyp = Hypothesis { tokens: Vec::new(), score: 0.0, ranks: Vec::new(), truncated: false };
    for _ in 0..max_len.max(1) {
        let logits = model.next_logits(src, &hyp.tokens);
        let (tok, rank) = if k == 1 {
            let best = ranked_first(&logits);
            (best, 1)
        } else {
            let support: Vec<u32> = ranked(&logits).into_iter().take(k).collect();
            let pos = draw(&support.iter().map(|&t| logits[t as usize]).collect::<Vec<_>>(), rng);
            (support[pos], pos as u32 + 1)
        };
        debug_assert_eq!(rank, rank_of(&logits, tok));
        hyp.score += log_softmax(&logits)[tok as usize];
        hyp.tokens.push(tok);
        hyp.ranks.push(rank);
        if tok == eos {
            return hyp;
        }
    }
    hyp.truncated = true;
    hyp
}

fn ranked_first(logits: &[f64]) -> u32 {
    let mut best = 0usize;
    for (i, &l) in logits.iter().enumerate().skip(1) {
        if l > logits[best] {
            best = i;
        }
    }
    best as u32
}

/// Index drawn from `softmax(logits)`.
fn draw(logits: &[f64], rng: &mut SplitMix64) -> usize {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let u = rng.next_f64() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // Rounding left u at the top of the range: last token with mass.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}
