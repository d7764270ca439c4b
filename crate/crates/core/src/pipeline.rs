//! Config-driven runs that chain the stages and record what they did.
//!
//! A run reads a TOML config (see [`PipelineConfig`]), executes the enabled
//! stages in a fixed order and writes every output plus `manifest.json` into
//! `data.out_dir`. If any stage fails, the files the run already wrote are
//! deleted again.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backtranslate::{self, BtConfig, BtReport, PairFilter};
use crate::bleu::{corpus_bleu, BleuScore};
use crate::corpus::{
    compute_stats, filter_by_length, load_corpus, load_parallel, sample_uniform, Corpus, CorpusStats, FilterReport,
    LengthFilter, ParallelCorpus, TokenizationPolicy,
};
use crate::decoder::{BackendSpec, ClientOptions};
use crate::modelstore::{self, PruneReport, DEFAULT_N_LAST};
use crate::postedit::{self, PatternSet};
use crate::subword::{self, SubwordModel};
use crate::Lang;

// ------------------------------------------------------------------ config

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub src_lang: Lang,
    pub tgt_lang: Lang,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bitext_src: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bitext_tgt: Option<PathBuf>,
    /// Monolingual text in the target language.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mono: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            src_lang: Lang::Zh,
            tgt_lang: Lang::Vi,
            bitext_src: None,
            bitext_tgt: None,
            mono: None,
            out_dir: PathBuf::from("run"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageToggles {
    pub stats: bool,
    pub filter: bool,
    pub sample: bool,
    pub backtranslate: bool,
    pub merge: bool,
    pub subword: bool,
    pub average: bool,
    pub prune: bool,
    pub score: bool,
    pub postedit: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        Self {
            stats: true,
            filter: true,
            sample: false,
            backtranslate: false,
            merge: false,
            subword: false,
            average: false,
            prune: false,
            score: false,
            postedit: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { min_len: 10, max_len: 60 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleConfig {
    /// Sentences drawn from the monolingual corpus; the whole corpus is
    /// kept if it is smaller.
    pub size: usize,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self { size: 1_500_000, seed: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubwordConfig {
    pub n_merges: usize,
}

impl Default for SubwordConfig {
    fn default() -> Self {
        Self { n_merges: 8000 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub n_last: usize,
    pub checkpoints: Vec<PathBuf>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { n_last: DEFAULT_N_LAST, checkpoints: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BacktranslateConfig {
    /// `toy:<shift>:<noise>`, `tcp://host:port` or `cmd:<program> [args]`.
    pub backend: String,
    pub k: u32,
    pub seed: u64,
    pub upsample_bitext: usize,
    pub batch_size: usize,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
    pub pair_filter: PairFilter,
}

impl Default for BacktranslateConfig {
    fn default() -> Self {
        Self {
            backend: "toy:3:0.1".into(),
            k: 5,
            seed: 1,
            upsample_bitext: 1,
            batch_size: 256,
            max_in_flight: 64,
            timeout_secs: 60,
            pair_filter: PairFilter::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PruneConfig {
    /// Defaults to the output of the average stage.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    /// Subword model whose vocabulary matches the checkpoint.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subword_model: Option<PathBuf>,
    pub embed_name: String,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self { checkpoint: None, subword_model: None, embed_name: "embed_tokens".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid_hyp: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid_ref: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_hyp: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_ref: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoreConfig {
    /// Defaults to `data.tgt_lang`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lang: Option<Lang>,
    pub systems: Vec<SystemConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PosteditConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub src: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hyp: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rules: Option<PathBuf>,
}

/// Training hyper-parameters. Training happens elsewhere; these are kept
/// so a manifest records the full recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub max_updates: u64,
    pub patience: u32,
    pub adam_eps: f64,
    pub adam_betas: [f64; 2],
    pub warmup_updates: u64,
    pub lr: f64,
    pub dropout: f64,
    pub attention_dropout: f64,
    pub max_tokens: u64,
    pub save_interval_updates: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            max_updates: 120_000,
            patience: 10,
            adam_eps: 1e-6,
            adam_betas: [0.9, 0.98],
            warmup_updates: 2500,
            lr: 3e-5,
            dropout: 0.3,
            attention_dropout: 0.1,
            max_tokens: 1024,
            save_interval_updates: 5000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub data: DataConfig,
    pub stages: StageToggles,
    pub filter: FilterConfig,
    pub sample: SampleConfig,
    pub subword: SubwordConfig,
    pub ensemble: EnsembleConfig,
    pub backtranslate: BacktranslateConfig,
    pub prune: PruneConfig,
    pub score: ScoreConfig,
    pub postedit: PosteditConfig,
    pub training: TrainingConfig,
}

impl PipelineConfig {
    /// Parses and validates; errors carry the line and key from the parser.
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            PipelineError::Config(msg) => PipelineError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Rewrites relative paths against `base` (the config file's directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let fix_opt = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                fix(p);
            }
        };
        fix_opt(&mut self.data.bitext_src);
        fix_opt(&mut self.data.bitext_tgt);
        fix_opt(&mut self.data.mono);
        fix(&mut self.data.out_dir);
        self.ensemble.checkpoints.iter_mut().for_each(fix);
        fix_opt(&mut self.prune.checkpoint);
        fix_opt(&mut self.prune.subword_model);
        for s in &mut self.score.systems {
            fix_opt(&mut s.valid_hyp);
            fix_opt(&mut s.valid_ref);
            fix_opt(&mut s.test_hyp);
            fix_opt(&mut s.test_ref);
        }
        fix_opt(&mut self.postedit.src);
        fix_opt(&mut self.postedit.hyp);
        fix_opt(&mut self.postedit.rules);
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::Config(msg));
        if self.data.src_lang == self.data.tgt_lang {
            return bad("data.src_lang and data.tgt_lang must differ".into());
        }
        if self.filter.min_len < 1 || self.filter.min_len > self.filter.max_len {
            return bad(format!(
                "filter: need 1 <= min_len <= max_len, got {}/{}",
                self.filter.min_len, self.filter.max_len
            ));
        }
        if self.data.bitext_src.is_some() != self.data.bitext_tgt.is_some() {
            return bad("data.bitext_src and data.bitext_tgt must be given together".into());
        }
        if self.ensemble.n_last == 0 {
            return bad("ensemble.n_last must be at least 1".into());
        }
        if self.backtranslate.upsample_bitext == 0 {
            return bad("backtranslate.upsample_bitext must be at least 1".into());
        }
        self.backtranslate
            .pair_filter
            .validate()
            .map_err(|e| PipelineError::Config(format!("backtranslate.pair_filter: {e}")))?;
        self.backtranslate
            .backend
            .parse::<BackendSpec>()
            .map_err(|e| PipelineError::Config(format!("backtranslate.backend: {e}")))?;
        let st = &self.stages;
        if st.merge && !st.backtranslate {
            return bad("stages.merge needs stages.backtranslate".into());
        }
        if st.prune && self.prune.checkpoint.is_none() && !st.average {
            return bad("stages.prune needs prune.checkpoint or stages.average".into());
        }
        Ok(())
    }

    /// Every input file the enabled stages read, by config field name.
    pub fn required_inputs(&self) -> Result<Vec<(String, PathBuf)>, PipelineError> {
        let st = &self.stages;
        let d = &self.data;
        let mut out = Vec::new();
        let mut need = |field: &str, p: &Option<PathBuf>| -> Result<(), PipelineError> {
            match p {
                Some(p) => {
                    out.push((field.to_string(), p.clone()));
                    Ok(())
                }
                None => Err(PipelineError::Config(format!("`{field}` is required by the enabled stages"))),
            }
        };
        let has_bitext = d.bitext_src.is_some();
        if has_bitext {
            need("data.bitext_src", &d.bitext_src)?;
            need("data.bitext_tgt", &d.bitext_tgt)?;
        }
        if d.mono.is_some() {
            need("data.mono", &d.mono)?;
        }
        if (st.stats || st.filter) && !has_bitext && d.mono.is_none() {
            return Err(PipelineError::Config("stats/filter need data.bitext_* or data.mono".into()));
        }
        if st.sample || st.backtranslate {
            need("data.mono", &d.mono)?;
        }
        if st.merge || st.subword {
            need("data.bitext_src", &d.bitext_src)?;
        }
        if st.average {
            if self.ensemble.checkpoints.is_empty() {
                return Err(PipelineError::Config("`ensemble.checkpoints` is required by stages.average".into()));
            }
            for p in &self.ensemble.checkpoints {
                need("ensemble.checkpoints", &Some(p.clone()))?;
            }
        }
        if st.prune {
            need("prune.subword_model", &self.prune.subword_model)?;
            if !st.average {
                need("prune.checkpoint", &self.prune.checkpoint)?;
            }
            need("data.bitext_src", &d.bitext_src)?;
        }
        if st.score {
            if self.score.systems.is_empty() {
                return Err(PipelineError::Config("`score.systems` is required by stages.score".into()));
            }
            for (i, s) in self.score.systems.iter().enumerate() {
                for (name, hyp, rf) in [("valid", &s.valid_hyp, &s.valid_ref), ("test", &s.test_hyp, &s.test_ref)] {
                    if hyp.is_some() || rf.is_some() {
                        need(&format!("score.systems[{i}].{name}_hyp"), hyp)?;
                        need(&format!("score.systems[{i}].{name}_ref"), rf)?;
                    }
                }
            }
        }
        if st.postedit {
            need("postedit.src", &self.postedit.src)?;
            need("postedit.hyp", &self.postedit.hyp)?;
            if self.postedit.rules.is_some() {
                need("postedit.rules", &self.postedit.rules)?;
            }
        }
        Ok(out)
    }
}

// ------------------------------------------------------------------ errors

/// Broad class of a failure, for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Backend,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("`{field}`: file not found: {}", path.display())]
    MissingFile { field: String, path: PathBuf },
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        class: ErrorClass,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

impl PipelineError {
    pub fn class(&self) -> ErrorClass {
        match self {
            PipelineError::Config(_) | PipelineError::MissingFile { .. } => ErrorClass::Config,
            PipelineError::Stage { class, .. } => *class,
        }
    }
}

fn stage_err<E: std::error::Error + Send + Sync + 'static>(stage: &'static str) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::Stage { stage, class: ErrorClass::Data, source: Box::new(e) }
}

fn io_err(stage: &'static str, path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError {
    let path = path.to_path_buf();
    move |e| PipelineError::Stage { stage, class: ErrorClass::Data, source: format!("{}: {e}", path.display()).into() }
}

// ---------------------------------------------------------------- manifest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub name: String,
    pub lang: Lang,
    pub stats: CorpusStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemScore {
    pub name: String,
    pub valid: Option<BleuScore>,
    pub test: Option<BleuScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum StageReport {
    Stats { rows: Vec<StatsRow> },
    Filter { bitext: Option<FilterReport>, mono: Option<FilterReport> },
    Sample { available: usize, kept: usize, seed: u64 },
    Backtranslate { report: BtReport },
    Merge { bitext_pairs: usize, upsample: usize, synthetic_pairs: usize, total: usize },
    Subword { n_merges: usize, vocab_size: usize },
    Average { n_last: usize, steps: Vec<u64> },
    Prune { report: PruneReport, pruned_tensors: Vec<String> },
    Score { lang: Lang, systems: Vec<SystemScore> },
    Postedit { lines: usize, lines_changed: usize, edits: usize, unaligned: usize },
}

impl StageReport {
    pub fn name(&self) -> &'static str {
        match self {
            StageReport::Stats { .. } => "stats",
            StageReport::Filter { .. } => "filter",
            StageReport::Sample { .. } => "sample",
            StageReport::Backtranslate { .. } => "backtranslate",
            StageReport::Merge { .. } => "merge",
            StageReport::Subword { .. } => "subword",
            StageReport::Average { .. } => "average",
            StageReport::Prune { .. } => "prune",
            StageReport::Score { .. } => "score",
            StageReport::Postedit { .. } => "postedit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// Unix seconds.
    pub started_at: u64,
    pub finished_at: u64,
    pub config: PipelineConfig,
    /// File path → hex SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub stages: Vec<StageReport>,
}

impl RunManifest {
    pub fn stage(&self, name: &str) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.name() == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

// ------------------------------------------------------------------- run

struct Run<'c> {
    cfg: &'c PipelineConfig,
    written: Vec<PathBuf>,
    stages: Vec<StageReport>,
}

impl Run<'_> {
    fn out(&self, name: &str) -> PathBuf {
        self.cfg.data.out_dir.join(name)
    }

    fn write(&mut self, stage: &'static str, path: PathBuf, contents: impl AsRef<[u8]>) -> Result<(), PipelineError> {
        self.written.push(path.clone());
        fs::write(&path, contents).map_err(io_err(stage, &path))
    }

    fn write_parallel(&mut self, stage: &'static str, stem: &str, pc: &ParallelCorpus) -> Result<(), PipelineError> {
        let d = &self.cfg.data;
        let join = |lines: &[String]| lines.iter().map(|l| format!("{l}\n")).collect::<String>();
        self.write(stage, self.out(&format!("{stem}.{}", d.src_lang)), join(&pc.src))?;
        self.write(stage, self.out(&format!("{stem}.{}", d.tgt_lang)), join(&pc.tgt))
    }

    fn write_mono(&mut self, stage: &'static str, stem: &str, c: &Corpus) -> Result<(), PipelineError> {
        let name = format!("{stem}.{}", self.cfg.data.tgt_lang);
        self.write(stage, self.out(&name), c.to_text())
    }
}

/// Executes the enabled stages of `cfg`.
///
/// Paths are used as given; call [`PipelineConfig::resolve_paths`] first to
/// make them relative to the config file. On failure every file this run
/// wrote is removed before the error is returned.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunManifest, PipelineError> {
    cfg.validate()?;
    let inputs = cfg.required_inputs()?;
    for (field, path) in &inputs {
        if !path.is_file() {
            return Err(PipelineError::MissingFile { field: field.clone(), path: path.clone() });
        }
    }
    let started_at = now();
    let mut input_sums = BTreeMap::new();
    for (_, path) in &inputs {
        let sum = sha256_file(path).map_err(|e| PipelineError::MissingFile {
            field: format!("{} ({e})", path.display()),
            path: path.clone(),
        })?;
        input_sums.insert(path.display().to_string(), sum);
    }
    fs::create_dir_all(&cfg.data.out_dir).map_err(io_err("setup", &cfg.data.out_dir))?;

    let mut run = Run { cfg, written: Vec::new(), stages: Vec::new() };
    match run_stages(&mut run) {
        Ok(()) => {}
        Err(e) => {
            for p in &run.written {
                let _ = fs::remove_file(p);
            }
            return Err(e);
        }
    }
    let mut outputs = BTreeMap::new();
    for p in &run.written {
        let sum = sha256_file(p).map_err(io_err("manifest", p))?;
        outputs.insert(p.display().to_string(), sum);
    }
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        started_at,
        finished_at: now(),
        config: cfg.clone(),
        inputs: input_sums,
        outputs,
        stages: run.stages,
    };
    let path = cfg.data.out_dir.join("manifest.json");
    fs::write(&path, manifest.to_json() + "\n").map_err(io_err("manifest", &path))?;
    Ok(manifest)
}

fn run_stages(run: &mut Run<'_>) -> Result<(), PipelineError> {
    let cfg = run.cfg;
    let d = &cfg.data;
    let st = cfg.stages;
    let src_policy = TokenizationPolicy::for_lang(d.src_lang);
    let tgt_policy = TokenizationPolicy::for_lang(d.tgt_lang);

    let mut bitext = match (&d.bitext_src, &d.bitext_tgt) {
        (Some(s), Some(t)) => Some(load_parallel(s, t).map_err(stage_err("load"))?.0),
        _ => None,
    };
    let mut mono = match &d.mono {
        Some(m) => Some(load_corpus(m).map_err(stage_err("load"))?.0),
        None => None,
    };
    let mut synthetic: Option<ParallelCorpus> = None;
    let mut training: Option<ParallelCorpus> = None;
    let mut averaged: Option<PathBuf> = None;

    if st.stats {
        let mut rows = Vec::new();
        if let Some(b) = &bitext {
            rows.push(StatsRow {
                name: format!("bitext.{}", d.src_lang),
                lang: d.src_lang,
                stats: compute_stats(&b.src_corpus(), src_policy),
            });
            rows.push(StatsRow {
                name: format!("bitext.{}", d.tgt_lang),
                lang: d.tgt_lang,
                stats: compute_stats(&b.tgt_corpus(), tgt_policy),
            });
        }
        if let Some(m) = &mono {
            rows.push(StatsRow {
                name: format!("mono.{}", d.tgt_lang),
                lang: d.tgt_lang,
                stats: compute_stats(m, tgt_policy),
            });
        }
        run.stages.push(StageReport::Stats { rows });
    }

    if st.filter {
        let sf = LengthFilter::new(cfg.filter.min_len, cfg.filter.max_len, src_policy).map_err(stage_err("filter"))?;
        let tf = LengthFilter { policy: tgt_policy, ..sf };
        let mut bitext_report = None;
        if let Some(b) = &bitext {
            let mut kept = ParallelCorpus::default();
            for (s, t) in b.pairs() {
                if sf.accepts(s) && tf.accepts(t) {
                    kept.push(s, t);
                }
            }
            let total = b.len();
            bitext_report = Some(FilterReport {
                kept: kept.len(),
                dropped: total - kept.len(),
                coverage: if total == 0 { 0.0 } else { kept.len() as f64 / total as f64 },
            });
            run.write_parallel("filter", "bitext.filtered", &kept)?;
            bitext = Some(kept);
        }
        let mut mono_report = None;
        if let Some(m) = &mono {
            let (kept, report) = filter_by_length(m, &tf);
            run.write_mono("filter", "mono.filtered", &kept)?;
            mono_report = Some(report);
            mono = Some(kept);
        }
        run.stages.push(StageReport::Filter { bitext: bitext_report, mono: mono_report });
    }

    if st.sample {
        let m = mono.as_ref().expect("checked by required_inputs");
        let available = m.len();
        let n = cfg.sample.size.min(available);
        if n < cfg.sample.size {
            log::warn!("sample size {} exceeds the {available} available sentences; keeping all", cfg.sample.size);
        }
        let s = sample_uniform(m, n, cfg.sample.seed).map_err(stage_err("sample"))?;
        run.write_mono("sample", "mono.sample", &s)?;
        run.stages.push(StageReport::Sample { available, kept: s.len(), seed: cfg.sample.seed });
        mono = Some(s);
    }

    if st.backtranslate {
        let b = &cfg.backtranslate;
        let spec: BackendSpec = b.backend.parse().map_err(|e: String| PipelineError::Config(e))?;
        let opts =
            ClientOptions { max_in_flight: b.max_in_flight.max(1), timeout: Duration::from_secs(b.timeout_secs) };
        let backend = spec.open(opts).map_err(|e| PipelineError::Stage {
            stage: "backtranslate",
            class: ErrorClass::Backend,
            source: format!("cannot open backend {spec}: {e}").into(),
        })?;
        let bt_cfg = BtConfig {
            k: b.k,
            seed: b.seed,
            src_lang: d.src_lang,
            tgt_lang: d.tgt_lang,
            filter: b.pair_filter,
            batch_size: b.batch_size.max(1),
        };
        let m = mono.as_ref().expect("checked by required_inputs");
        let bt = backtranslate::run_backtranslation(m, backend.as_ref(), &bt_cfg).map_err(|e| {
            let class = match e {
                backtranslate::BtError::BackendUnreachable(_) => ErrorClass::Backend,
                _ => ErrorClass::Data,
            };
            PipelineError::Stage { stage: "backtranslate", class, source: Box::new(e) }
        })?;
        let pc = bt.corpus();
        run.write_parallel("backtranslate", "synthetic", &pc)?;
        run.stages.push(StageReport::Backtranslate { report: bt.report });
        synthetic = Some(pc);
    }

    if st.merge {
        let b = bitext.as_ref().expect("checked by required_inputs");
        let s = synthetic.as_ref().expect("checked by validate");
        let up = cfg.backtranslate.upsample_bitext;
        let merged = backtranslate::merge_corpora(b, s, up).map_err(stage_err("merge"))?;
        run.write_parallel("merge", "train", &merged.corpus)?;
        run.write("merge", run.out("train.origin.tsv"), merged.origin_sidecar())?;
        run.stages.push(StageReport::Merge {
            bitext_pairs: b.len(),
            upsample: up,
            synthetic_pairs: s.len(),
            total: merged.corpus.len(),
        });
        training = Some(merged.corpus);
    }
    let training = training.or(bitext);

    if st.subword {
        let t = training.as_ref().expect("checked by required_inputs");
        let joint = Corpus::from_lines(t.src.iter().chain(&t.tgt));
        let model = subword::train_bpe(&joint, cfg.subword.n_merges).map_err(stage_err("subword"))?;
        run.write("subword", run.out("bpe.model"), model.to_text())?;
        run.stages.push(StageReport::Subword { n_merges: model.merges.len(), vocab_size: model.vocab.len() });
    }

    if st.average {
        let ckpts = &cfg.ensemble.checkpoints;
        let avg = modelstore::average_checkpoint_files(ckpts, cfg.ensemble.n_last).map_err(stage_err("average"))?;
        let mut steps: Vec<u64> = Vec::new();
        for p in ckpts {
            steps.push(modelstore::read_checkpoint(p).map_err(stage_err("average"))?.meta.step);
        }
        steps.sort_unstable();
        let steps = steps.split_off(steps.len().saturating_sub(cfg.ensemble.n_last));
        let path = run.out("averaged.mtck");
        run.write("average", path.clone(), avg.to_bytes())?;
        run.stages.push(StageReport::Average { n_last: cfg.ensemble.n_last, steps });
        averaged = Some(path);
    }

    if st.prune {
        let ckpt_path = cfg.prune.checkpoint.clone().or(averaged).expect("checked by validate");
        let ckpt = modelstore::read_checkpoint(&ckpt_path).map_err(stage_err("prune"))?;
        let model_path = cfg.prune.subword_model.as_ref().expect("checked by required_inputs");
        let model = SubwordModel::load(model_path).map_err(stage_err("prune"))?;
        let t = training.as_ref().expect("checked by required_inputs");
        let corpora = [t.src_corpus(), t.tgt_corpus()];
        let keep = model.corpus_vocab(corpora.iter());
        let pruned = modelstore::prune_embeddings(&ckpt, &cfg.prune.embed_name, &model.vocab, &keep)
            .map_err(stage_err("prune"))?;
        let small = SubwordModel { merges: model.merges.clone(), vocab: pruned.vocab.clone() };
        run.write("prune", run.out("pruned.mtck"), pruned.checkpoint.to_bytes())?;
        run.write("prune", run.out("pruned.bpe.model"), small.to_text())?;
        run.stages.push(StageReport::Prune { report: pruned.report, pruned_tensors: pruned.pruned_tensors });
    }

    if st.score {
        let lang = cfg.score.lang.unwrap_or(d.tgt_lang);
        let read = |p: &PathBuf| -> Result<Vec<String>, PipelineError> {
            let text = fs::read_to_string(p).map_err(io_err("score", p))?;
            Ok(text.lines().map(String::from).collect())
        };
        let mut systems = Vec::new();
        for s in &cfg.score.systems {
            let score = |h: &Option<PathBuf>, r: &Option<PathBuf>| -> Result<Option<BleuScore>, PipelineError> {
                match (h, r) {
                    (Some(h), Some(r)) => {
                        Ok(Some(corpus_bleu(&read(h)?, &read(r)?, lang).map_err(stage_err("score"))?))
                    }
                    _ => Ok(None),
                }
            };
            let valid = score(&s.valid_hyp, &s.valid_ref)?;
            let test = score(&s.test_hyp, &s.test_ref)?;
            systems.push(SystemScore { name: s.name.clone(), valid, test });
        }
        run.stages.push(StageReport::Score { lang, systems });
    }

    if st.postedit {
        let p = &cfg.postedit;
        let rules = match &p.rules {
            Some(r) => PatternSet::load(r).map_err(stage_err("postedit"))?,
            None => PatternSet::default(),
        };
        let src_path = p.src.as_ref().expect("checked by required_inputs");
        let hyp_path = p.hyp.as_ref().expect("checked by required_inputs");
        let src = fs::read_to_string(src_path).map_err(io_err("postedit", src_path))?;
        let hyp = fs::read_to_string(hyp_path).map_err(io_err("postedit", hyp_path))?;
        let (src, hyp): (Vec<&str>, Vec<&str>) = (src.lines().collect(), hyp.lines().collect());
        if src.len() != hyp.len() {
            return Err(PipelineError::Stage {
                stage: "postedit",
                class: ErrorClass::Data,
                source: format!("{} source lines but {} hypothesis lines", src.len(), hyp.len()).into(),
            });
        }
        let (out, report) = postedit_lines(&src, &hyp, d.src_lang, &rules);
        run.write("postedit", run.out(&format!("postedit.{}", d.tgt_lang)), out.text)?;
        run.write("postedit", run.out("postedit.edits.jsonl"), out.edits_jsonl)?;
        run.stages.push(report);
    }
    Ok(())
}

/// Corrected text and a JSON-lines edit log from a batch correction.
pub struct PosteditOutput {
    pub text: String,
    pub edits_jsonl: String,
}

/// Corrects each hypothesis line against its source line. `src_lang`
/// picks the direction; Vietnamese sources use the experimental path.
pub fn postedit_lines(src: &[&str], hyp: &[&str], src_lang: Lang, rules: &PatternSet) -> (PosteditOutput, StageReport) {
    use rayon::prelude::*;
    let corrections: Vec<postedit::Correction> = src
        .par_iter()
        .zip(hyp.par_iter())
        .map(|(s, h)| match src_lang {
            Lang::Zh => postedit::correct_translation_with(s, h, rules),
            Lang::Vi => postedit::correct_translation_vi_zh(s, h, rules),
        })
        .collect();
    let mut text = String::new();
    let mut edits_jsonl = String::new();
    let (mut changed, mut edits, mut unaligned) = (0, 0, 0);
    for (i, c) in corrections.iter().enumerate() {
        text.push_str(&c.text);
        text.push('\n');
        changed += usize::from(!c.edits.is_empty());
        edits += c.edits.len();
        unaligned += c.unaligned.len();
        for e in &c.edits.edits {
            let line = serde_json::json!({
                "line": i + 1,
                "span": [e.span.0, e.span.1],
                "before": e.before,
                "after": e.after,
                "reason": e.reason,
            });
            edits_jsonl.push_str(&line.to_string());
            edits_jsonl.push('\n');
        }
    }
    let report = StageReport::Postedit { lines: src.len(), lines_changed: changed, edits, unaligned };
    (PosteditOutput { text, edits_jsonl }, report)
}

// ----------------------------------------------------------------- tables

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Table {
    DataStats,
    SyntheticStats,
    Results,
}

impl std::str::FromStr for Table {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "data_stats" => Ok(Table::DataStats),
            "synthetic_stats" => Ok(Table::SyntheticStats),
            "results" => Ok(Table::Results),
            other => Err(format!("unknown table `{other}` (data_stats, synthetic_stats, results)")),
        }
    }
}

impl std::fmt::Display for Table {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Table::DataStats => "data_stats",
            Table::SyntheticStats => "synthetic_stats",
            Table::Results => "results",
        })
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("manifest has no data for table {table} (needs the {stage} stage)")]
pub struct MissingData {
    pub table: String,
    pub stage: &'static str,
}

/// Plain-text table: first column left-aligned, the rest right-aligned.
pub fn format_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out.push_str(&(widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("  ") + "\n"));
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

fn stats_cells(name: &str, s: &CorpusStats) -> Vec<String> {
    vec![name.to_string(), s.n_sents.to_string(), s.vocab_size.to_string(), s.avg_len_rounded().to_string()]
}

pub fn report_table(manifest: &RunManifest, table: Table) -> Result<String, MissingData> {
    let missing = |stage| MissingData { table: table.to_string(), stage };
    match table {
        Table::DataStats => {
            let Some(StageReport::Stats { rows }) = manifest.stage("stats") else {
                return Err(missing("stats"));
            };
            let rows: Vec<Vec<String>> = rows.iter().map(|r| stats_cells(&r.name, &r.stats)).collect();
            Ok(format_table(&["Dataset", "#Sents", "#Vocab", "Avg.Len"], &rows))
        }
        Table::SyntheticStats => {
            let Some(StageReport::Backtranslate { report }) = manifest.stage("backtranslate") else {
                return Err(missing("backtranslate"));
            };
            let d = &manifest.config.data;
            let rows = vec![
                stats_cells(&format!("synthetic.{}", d.src_lang), &report.src_stats),
                stats_cells(&format!("synthetic.{}", d.tgt_lang), &report.tgt_stats),
            ];
            Ok(format_table(&["Dataset", "#Sents", "#Vocab", "Avg.Len"], &rows))
        }
        Table::Results => {
            let Some(StageReport::Score { systems, .. }) = manifest.stage("score") else {
                return Err(missing("score"));
            };
            let cell = |s: &Option<BleuScore>| s.map_or("-".to_string(), |s| format!("{:.1}", s.rounded()));
            let rows: Vec<Vec<String>> =
                systems.iter().map(|s| vec![s.name.clone(), cell(&s.valid), cell(&s.test)]).collect();
            Ok(format_table(&["System", "Valid", "Test"], &rows))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_training_block() {
        let t = PipelineConfig::default().training;
        assert_eq!(t.max_updates, 120_000);
        assert_eq!(t.patience, 10);
        assert_eq!(t.adam_eps, 1e-6);
        assert_eq!(t.adam_betas, [0.9, 0.98]);
        assert_eq!(t.warmup_updates, 2500);
        assert_eq!(t.lr, 3e-5);
        assert_eq!(t.dropout, 0.3);
        assert_eq!(t.attention_dropout, 0.1);
        assert_eq!(t.max_tokens, 1024);
        assert_eq!(t.save_interval_updates, 5000);
    }

    #[test]
    fn config_roundtrip() {
        let mut c = PipelineConfig::default();
        c.data.mono = Some("mono.vi".into());
        c.score.systems.push(SystemConfig {
            name: "baseline".into(),
            valid_hyp: Some("v.hyp".into()),
            valid_ref: Some("v.ref".into()),
            test_hyp: None,
            test_ref: None,
        });
        let text = c.to_toml();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), c);
        assert_eq!(PipelineConfig::from_toml("").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let err = PipelineConfig::from_toml("[filter]\nmin_len = 10\nmax_lenn = 60\n").unwrap_err().to_string();
        assert!(err.contains("max_lenn"), "{err}");
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn table_layout() {
        let t = format_table(&["System", "Valid", "Test"], &[vec!["a".into(), "38.0".into(), "37.9".into()]]);
        assert_eq!(t, "System  Valid  Test\n------  -----  ----\na        38.0  37.9\n");
    }
}
