//! Backtranslation: turn target-language monolingual text into synthetic
//! parallel data by translating it back into the source language.
//!
//! Each sentence gets its own sampling seed derived from the run seed and
//! its position, so the output depends only on the inputs and never on
//! batching or on the order in which a backend answers.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{compute_stats_texts, Corpus, CorpusError, CorpusStats, ParallelCorpus, TokenizationPolicy};
use crate::decoder::{DecodeMode, TranslateError, TranslationRequest, Translator};
use crate::rng::stream_seed;
use crate::Lang;

#[derive(Debug, thiserror::Error)]
pub enum BtError {
    #[error("invalid pair filter: {0}")]
    InvalidFilter(String),
    #[error("backend unreachable: {0}")]
    BackendUnreachable(TranslateError),
    #[error("upsample factor must be at least 1")]
    ZeroUpsample,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Why a synthetic pair was discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Empty,
    SrcEqTgt,
    TooShort,
    TooLong,
    LenRatio,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DropReason::Empty => "empty",
            DropReason::SrcEqTgt => "src_eq_tgt",
            DropReason::TooShort => "too_short",
            DropReason::TooLong => "too_long",
            DropReason::LenRatio => "len_ratio",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairFilter {
    /// Token window applied to both sides.
    pub min_len: usize,
    pub max_len: usize,
    /// Longer side over shorter side, in tokens. May be infinite.
    #[serde(with = "ratio_serde")]
    pub max_len_ratio: f64,
    pub drop_empty: bool,
    pub drop_src_eq_tgt: bool,
}

/// JSON has no infinity, so a missing bound travels as the string "inf".
mod ratio_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str("inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Ratio {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Ratio::deserialize(d)? {
            Ratio::Num(v) => Ok(v),
            Ratio::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Ratio::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
        }
    }
}

impl Default for PairFilter {
    fn default() -> Self {
        Self { min_len: 10, max_len: 60, max_len_ratio: 1.5, drop_empty: true, drop_src_eq_tgt: true }
    }
}

impl PairFilter {
    /// Keeps everything.
    pub fn permissive() -> Self {
        Self {
            min_len: 0,
            max_len: usize::MAX,
            max_len_ratio: f64::INFINITY,
            drop_empty: false,
            drop_src_eq_tgt: false,
        }
    }

    pub fn validate(&self) -> Result<(), BtError> {
        if self.max_len_ratio.is_nan() || self.max_len_ratio < 1.0 {
            return Err(BtError::InvalidFilter(format!("max_len_ratio {} is below 1", self.max_len_ratio)));
        }
        if self.min_len > self.max_len {
            return Err(BtError::InvalidFilter(format!("min_len {} exceeds max_len {}", self.min_len, self.max_len)));
        }
        Ok(())
    }

    /// First failing check, in the order the fields are declared.
    pub fn check(&self, src_len: usize, tgt_len: usize, src: &str, tgt: &str) -> Result<(), DropReason> {
        if self.drop_empty && (src.trim().is_empty() || tgt.trim().is_empty()) {
            return Err(DropReason::Empty);
        }
        if self.drop_src_eq_tgt && src.trim() == tgt.trim() {
            return Err(DropReason::SrcEqTgt);
        }
        if src_len.min(tgt_len) < self.min_len {
            return Err(DropReason::TooShort);
        }
        if src_len.max(tgt_len) > self.max_len {
            return Err(DropReason::TooLong);
        }
        let (short, long) = (src_len.min(tgt_len) as f64, src_len.max(tgt_len) as f64);
        if long > 0.0 && self.max_len_ratio.is_finite() && long > self.max_len_ratio * short {
            return Err(DropReason::LenRatio);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BtConfig {
    pub k: u32,
    pub seed: u64,
    /// Language of the synthetic side.
    pub src_lang: Lang,
    /// Language of the monolingual input.
    pub tgt_lang: Lang,
    pub filter: PairFilter,
    /// Requests handed to the backend per call.
    pub batch_size: usize,
}

impl BtConfig {
    pub fn new(src_lang: Lang, tgt_lang: Lang, k: u32, seed: u64) -> Self {
        Self { k, seed, src_lang, tgt_lang, filter: PairFilter::default(), batch_size: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// The per-sentence sampling seed actually sent.
    pub seed: u64,
    pub model_id: String,
    pub k: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticPair {
    pub src: String,
    /// Verbatim monolingual sentence.
    pub tgt: String,
    /// Position in the monolingual corpus.
    pub index: usize,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BtReport {
    pub n_mono: usize,
    pub n_pairs: usize,
    pub n_failures: usize,
    pub drops: BTreeMap<DropReason, usize>,
    pub failures: Vec<Failure>,
    pub src_stats: CorpusStats,
    pub tgt_stats: CorpusStats,
    pub model_id: String,
    pub k: u32,
    pub seed: u64,
}

impl BtReport {
    pub fn n_dropped(&self) -> usize {
        self.drops.values().sum()
    }

    /// Every input sentence is either kept, dropped or failed.
    pub fn is_consistent(&self) -> bool {
        self.n_pairs + self.n_dropped() + self.n_failures == self.n_mono
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BtRun {
    pub pairs: Vec<SyntheticPair>,
    pub report: BtReport,
}

impl BtRun {
    pub fn corpus(&self) -> ParallelCorpus {
        let mut pc = ParallelCorpus::default();
        for p in &self.pairs {
            pc.push(p.src.clone(), p.tgt.clone());
        }
        pc
    }
}

fn connection_lost(e: &TranslateError) -> bool {
    matches!(e, TranslateError::Closed | TranslateError::Transport(_))
}

/// Translates every sentence of `mono` once with top-k sampling, then keeps
/// the pairs accepted by the filter.
///
/// A lost connection aborts the run; any other per-sentence error is
/// recorded in the report and the sentence is skipped.
pub fn run_backtranslation(mono: &Corpus, backend: &dyn Translator, cfg: &BtConfig) -> Result<BtRun, BtError> {
    cfg.filter.validate()?;
    let src_policy = TokenizationPolicy::for_lang(cfg.src_lang);
    let tgt_policy = TokenizationPolicy::for_lang(cfg.tgt_lang);
    let model_id = backend.model_id();
    let texts: Vec<&str> = mono.texts().collect();
    let mut pairs = Vec::new();
    let mut drops = BTreeMap::new();
    let mut failures = Vec::new();

    for (chunk_no, chunk) in texts.chunks(cfg.batch_size.max(1)).enumerate() {
        let base = chunk_no * cfg.batch_size.max(1);
        let requests: Vec<TranslationRequest> = chunk
            .iter()
            .enumerate()
            .map(|(j, text)| TranslationRequest {
                id: (base + j) as u64,
                text: text.to_string(),
                mode: DecodeMode::SampleTopk,
                k: cfg.k,
                seed: stream_seed(cfg.seed, (base + j) as u64),
            })
            .collect();
        let results = backend.translate_batch(&requests);
        for (req, result) in requests.into_iter().zip(results) {
            let index = req.id as usize;
            let src = match result {
                Ok(s) => s,
                Err(e) if connection_lost(&e) => return Err(BtError::BackendUnreachable(e)),
                Err(e) => {
                    log::debug!("sentence {index}: {e}");
                    failures.push(Failure { index, error: e.to_string() });
                    continue;
                }
            };
            let (sl, tl) = (src_policy.count_tokens(&src), tgt_policy.count_tokens(&req.text));
            match cfg.filter.check(sl, tl, &src, &req.text) {
                Ok(()) => pairs.push(SyntheticPair {
                    src,
                    tgt: req.text,
                    index,
                    provenance: Provenance { seed: req.seed, model_id: model_id.clone(), k: cfg.k },
                }),
                Err(reason) => *drops.entry(reason).or_insert(0) += 1,
            }
        }
    }

    let report = BtReport {
        n_mono: texts.len(),
        n_pairs: pairs.len(),
        n_failures: failures.len(),
        drops,
        failures,
        src_stats: compute_stats_texts(pairs.iter().map(|p| p.src.as_str()), src_policy),
        tgt_stats: compute_stats_texts(pairs.iter().map(|p| p.tgt.as_str()), tgt_policy),
        model_id,
        k: cfg.k,
        seed: cfg.seed,
    };
    debug_assert!(report.is_consistent());
    Ok(BtRun { pairs, report })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "origin", rename_all = "lowercase")]
pub enum Origin {
    Bitext { index: usize, copy: usize },
    Synthetic { index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Merged {
    pub corpus: ParallelCorpus,
    /// One entry per pair of `corpus`.
    pub origins: Vec<Origin>,
}

impl Merged {
    /// Tab-separated sidecar: origin, index into that input, copy number.
    pub fn origin_sidecar(&self) -> String {
        self.origins
            .iter()
            .map(|o| match o {
                Origin::Bitext { index, copy } => format!("bitext\t{index}\t{copy}\n"),
                Origin::Synthetic { index } => format!("synthetic\t{index}\t0\n"),
            })
            .collect()
    }
}

/// `bitext` repeated `upsample` times, followed by `synthetic`.
pub fn merge_corpora(bitext: &ParallelCorpus, synthetic: &ParallelCorpus, upsample: usize) -> Result<Merged, BtError> {
    if upsample == 0 {
        return Err(BtError::ZeroUpsample);
    }
    let mut corpus = ParallelCorpus::default();
    let mut origins = Vec::with_capacity(bitext.len() * upsample + synthetic.len());
    for copy in 0..upsample {
        for (index, (s, t)) in bitext.pairs().enumerate() {
            corpus.push(s, t);
            origins.push(Origin::Bitext { index, copy });
        }
    }
    for (index, (s, t)) in synthetic.pairs().enumerate() {
        corpus.push(s, t);
        origins.push(Origin::Synthetic { index });
    }
    Ok(Merged { corpus, origins })
}

/// Hex SHA-256 of the file contents a corpus side is written as.
pub fn lines_checksum(lines: &[String]) -> String {
    let mut h = Sha256::new();
    for l in lines {
        h.update(l.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BtManifest {
    pub config: BtConfig,
    pub report: BtReport,
    pub src_sha256: String,
    pub tgt_sha256: String,
}

/// Writes the synthetic pair files and a JSON manifest next to them.
pub fn write_bt_outputs(
    run: &BtRun,
    cfg: &BtConfig,
    src_path: &Path,
    tgt_path: &Path,
    manifest_path: &Path,
) -> Result<BtManifest, BtError> {
    let corpus = run.corpus();
    corpus.write(src_path, tgt_path)?;
    let manifest = BtManifest {
        config: cfg.clone(),
        report: run.report.clone(),
        src_sha256: lines_checksum(&corpus.src),
        tgt_sha256: lines_checksum(&corpus.tgt),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(manifest_path, json + "\n")
        .map_err(|source| BtError::Io { path: manifest_path.display().to_string(), source })?;
    Ok(manifest)
}
