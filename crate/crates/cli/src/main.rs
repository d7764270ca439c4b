//! `mtpipe`: every pipeline stage as a subcommand.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 data error, 3 backend
//! error.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mtpipe::backtranslate::{self, BtConfig, BtError, PairFilter};
use mtpipe::corpus::{self, Corpus, LengthFilter, TokenizationPolicy};
use mtpipe::decoder::{toy_backend, BackendSpec, ClientOptions};
use mtpipe::modelstore;
use mtpipe::pipeline::{self, ErrorClass, PipelineConfig, RunManifest, Table};
use mtpipe::postedit::PatternSet;
use mtpipe::subword::{train_bpe, SubwordModel};
use mtpipe::{bleu, Lang};

#[derive(Parser)]
#[command(name = "mtpipe", version, about = "Chinese-Vietnamese MT pipeline tools")]
struct Cli {
    /// Worker threads for data-parallel work (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sentence count, vocabulary size and average length per file.
    Stats(StatsArgs),
    /// Keep sentences whose token count lies in [min, max].
    Filter(FilterArgs),
    /// Uniform sample without replacement, original order kept.
    Sample(SampleArgs),
    /// Train and apply BPE subword models.
    #[command(subcommand)]
    Spm(SpmCmd),
    /// Average, prune and inspect MTCK checkpoints.
    #[command(subcommand)]
    Ckpt(CkptCmd),
    /// Backtranslation with top-k sampling.
    #[command(subcommand)]
    Bt(BtCmd),
    /// Rule-based number and date correction.
    #[command(subcommand)]
    Postedit(PosteditCmd),
    /// Corpus BLEU.
    Score(ScoreArgs),
    /// Config-driven runs and report tables.
    #[command(subcommand)]
    Pipeline(PipelineCmd),
}

#[derive(Args)]
struct StatsArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Tokenization: zh counts CJK characters, vi splits on whitespace.
    #[arg(long)]
    lang: Lang,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    lang: Lang,
    #[arg(long, default_value_t = 10)]
    min_len: usize,
    #[arg(long, default_value_t = 60)]
    max_len: usize,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    size: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Subcommand)]
enum SpmCmd {
    /// Learn merges from one or more corpus files.
    Train {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        merges: usize,
        #[arg(long)]
        model: PathBuf,
    },
    /// Text lines to subword pieces (or ids with --ids).
    Encode {
        #[arg(long)]
        model: PathBuf,
        /// Defaults to stdin.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        ids: bool,
    },
    /// Whitespace-separated ids back to text.
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CkptCmd {
    /// Element-wise mean of the last --n-last checkpoints, ordered by step.
    Avg {
        #[arg(required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long, default_value_t = modelstore::DEFAULT_N_LAST)]
        n_last: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Drop embedding rows for tokens the given corpora never use.
    Prune {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "corpus", required = true)]
        corpora: Vec<PathBuf>,
        #[arg(long, default_value = "embed_tokens")]
        embed_name: String,
        #[arg(long)]
        out_ckpt: PathBuf,
        #[arg(long)]
        out_model: PathBuf,
    },
    /// Tensor names, shapes and checksums.
    Inspect {
        checkpoint: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand)]
enum BtCmd {
    /// Translate a monolingual corpus into synthetic source sentences.
    Run(BtRunArgs),
    /// Serve the toy cipher model over the line protocol.
    Serve {
        #[arg(long, default_value_t = 3)]
        shift: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Listen on this address instead of stdin/stdout.
        #[arg(long)]
        tcp: Option<String>,
    },
}

#[derive(Args)]
struct BtRunArgs {
    #[arg(long)]
    mono: PathBuf,
    /// toy:<shift>:<noise>, tcp://host:port or "cmd:<program> [args]".
    #[arg(long)]
    backend: BackendSpec,
    #[arg(long, default_value_t = 5)]
    k: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "zh")]
    src_lang: Lang,
    #[arg(long, default_value = "vi")]
    tgt_lang: Lang,
    #[arg(long)]
    out_src: PathBuf,
    #[arg(long)]
    out_tgt: PathBuf,
    /// Defaults to <out_src>.manifest.json.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    min_len: usize,
    #[arg(long, default_value_t = 60)]
    max_len: usize,
    /// Use "inf" to disable the ratio check.
    #[arg(long, default_value_t = 1.5)]
    max_len_ratio: f64,
    /// Keep every non-failed pair.
    #[arg(long, conflicts_with_all = ["min_len", "max_len", "max_len_ratio"])]
    no_filter: bool,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, default_value_t = 64)]
    max_in_flight: usize,
    #[arg(long, default_value_t = 60)]
    timeout_secs: u64,
}

#[derive(Subcommand)]
enum PosteditCmd {
    /// Correct each hypothesis line against its source line.
    Run {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long, default_value = "zh")]
        src_lang: Lang,
        /// TOML pattern set; built-in units when absent.
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Corrected text; defaults to <hyp>.pe.
        #[arg(long)]
        output: Option<PathBuf>,
        /// JSON-lines edit report; defaults to <output>.edits.jsonl.
        #[arg(long)]
        edits: Option<PathBuf>,
    },
    /// Print the built-in pattern set as a rules file.
    Rules,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    lang: Lang,
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum PipelineCmd {
    /// Run the stages enabled in a config file.
    Run {
        #[arg(long, env = "MTPIPE_CONFIG")]
        config: PathBuf,
    },
    /// Render a table from a run manifest.
    Report {
        #[arg(long)]
        manifest: PathBuf,
        /// data_stats, synthetic_stats or results.
        #[arg(long)]
        table: Table,
    },
    /// Print the default config.
    Init,
}

// ------------------------------------------------------------------ errors

#[derive(Debug)]
struct Classified(ErrorClass, String);

impl fmt::Display for Classified {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Classified {}

trait ClassExt<T> {
    fn class(self, class: ErrorClass) -> Result<T>;
}

impl<T, E: fmt::Display> ClassExt<T> for std::result::Result<T, E> {
    fn class(self, class: ErrorClass) -> Result<T> {
        self.map_err(|e| Classified(class, e.to_string()).into())
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let class = err.chain().find_map(|e| e.downcast_ref::<Classified>().map(|c| c.0));
    match class {
        Some(ErrorClass::Config) => 1,
        Some(ErrorClass::Backend) => 3,
        Some(ErrorClass::Data) | None => 2,
    }
}

// ---------------------------------------------------------------- helpers

fn read_input(path: Option<&Path>) -> Result<String> {
    match path {
        Some(p) => fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display())),
        None => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s).context("cannot read stdin")?;
            Ok(s)
        }
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn load(path: &Path) -> Result<Corpus> {
    let (c, report) = corpus::load_corpus(path)?;
    if report.blank_dropped > 0 {
        log::info!("{}: skipped {} blank lines", path.display(), report.blank_dropped);
    }
    Ok(c)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

// ---------------------------------------------------------------- commands

fn stats(a: StatsArgs) -> Result<()> {
    let policy = TokenizationPolicy::for_lang(a.lang);
    let mut rows = Vec::new();
    for path in &a.inputs {
        let s = corpus::compute_stats(&load(path)?, policy);
        rows.push((path.display().to_string(), s));
    }
    if a.json {
        let v: Vec<_> = rows.iter().map(|(name, s)| serde_json::json!({ "file": name, "stats": s })).collect();
        println!("{}", serde_json::to_string_pretty(&v)?);
    } else {
        let cells: Vec<Vec<String>> = rows
            .iter()
            .map(|(name, s)| {
                vec![name.clone(), s.n_sents.to_string(), s.vocab_size.to_string(), format!("{:.2}", s.avg_len)]
            })
            .collect();
        print!("{}", pipeline::format_table(&["File", "#Sents", "#Vocab", "Avg.Len"], &cells));
    }
    Ok(())
}

fn filter(a: FilterArgs) -> Result<()> {
    let f = LengthFilter::new(a.min_len, a.max_len, TokenizationPolicy::for_lang(a.lang)).class(ErrorClass::Config)?;
    let (kept, report) = corpus::filter_by_length(&load(&a.input)?, &f);
    kept.write(&a.output)?;
    eprintln!("kept {} dropped {} ({:.1}% in window)", report.kept, report.dropped, 100.0 * report.coverage);
    Ok(())
}

fn sample(a: SampleArgs) -> Result<()> {
    let out = corpus::sample_uniform(&load(&a.input)?, a.size, a.seed)?;
    out.write(&a.output)?;
    eprintln!("sampled {} sentences", out.len());
    Ok(())
}

fn spm(cmd: SpmCmd) -> Result<()> {
    match cmd {
        SpmCmd::Train { inputs, merges, model } => {
            let mut all = Corpus::default();
            for p in &inputs {
                all.sentences.extend(load(p)?.sentences);
            }
            let m = train_bpe(&all, merges)?;
            m.save(&model)?;
            eprintln!("{} merges, {} vocabulary entries", m.merges.len(), m.vocab.len());
        }
        SpmCmd::Encode { model, input, ids } => {
            let m = SubwordModel::load(&model)?;
            let text = read_input(input.as_deref())?;
            let mut out = io::stdout().lock();
            for (i, line) in text.lines().enumerate() {
                let pieces = if ids {
                    m.encode(line).map(|v| v.iter().map(u32::to_string).collect::<Vec<_>>())
                } else {
                    m.segment(line)
                };
                let pieces = pieces.with_context(|| format!("line {}", i + 1))?;
                writeln!(out, "{}", pieces.join(" "))?;
            }
        }
        SpmCmd::Decode { model, input } => {
            let m = SubwordModel::load(&model)?;
            let text = read_input(input.as_deref())?;
            let mut out = io::stdout().lock();
            for (i, line) in text.lines().enumerate() {
                let ids = line
                    .split_whitespace()
                    .map(str::parse::<u32>)
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .with_context(|| format!("line {}: expected whitespace-separated ids", i + 1))?;
                writeln!(out, "{}", m.decode(&ids))?;
            }
        }
    }
    Ok(())
}

fn ckpt(cmd: CkptCmd) -> Result<()> {
    match cmd {
        CkptCmd::Avg { checkpoints, n_last, out } => {
            let avg = modelstore::average_checkpoint_files(&checkpoints, n_last)?;
            modelstore::write_checkpoint(&avg, &out)?;
            eprintln!("averaged {} checkpoints into step {}", n_last, avg.meta.step);
        }
        CkptCmd::Prune { ckpt, model, corpora, embed_name, out_ckpt, out_model } => {
            let c = modelstore::read_checkpoint(&ckpt)?;
            let m = SubwordModel::load(&model)?;
            let texts = corpora.iter().map(|p| load(p)).collect::<Result<Vec<_>>>()?;
            let keep: BTreeSet<u32> = m.corpus_vocab(texts.iter());
            let pruned = modelstore::prune_embeddings(&c, &embed_name, &m.vocab, &keep)?;
            modelstore::write_checkpoint(&pruned.checkpoint, &out_ckpt)?;
            SubwordModel { merges: m.merges.clone(), vocab: pruned.vocab.clone() }.save(&out_model)?;
            let r = pruned.report;
            println!(
                "vocab {} -> {} ({:.2}x smaller); rows pruned in {}",
                r.original_vocab,
                r.kept_vocab,
                r.ratio,
                pruned.pruned_tensors.join(", ")
            );
        }
        CkptCmd::Inspect { checkpoint, json } => {
            let c = modelstore::read_checkpoint(&checkpoint)?;
            let rows = modelstore::inspect(&c);
            if json {
                let v = serde_json::json!({ "step": c.meta.step, "format_version": c.meta.format_version, "tensors": rows });
                println!("{}", serde_json::to_string_pretty(&v)?);
            } else {
                println!("step {} (format v{})", c.meta.step, c.meta.format_version);
                for r in rows {
                    println!("{}\t{:?}\t{}", r.name, r.shape, r.sha256);
                }
            }
        }
    }
    Ok(())
}

fn bt(cmd: BtCmd) -> Result<()> {
    match cmd {
        BtCmd::Run(a) => bt_run(a),
        BtCmd::Serve { shift, noise, tcp } => {
            if !(0.0..1.0).contains(&noise) {
                return Err(Classified(ErrorClass::Config, format!("--noise must lie in [0, 1), got {noise}")).into());
            }
            let backend = toy_backend(shift, noise);
            let handler = move |r: &_| backend.translate_one(r).map_err(|e| e.to_string());
            match tcp {
                Some(addr) => {
                    let listener = std::net::TcpListener::bind(&addr).class(ErrorClass::Backend)?;
                    eprintln!("listening on {}", listener.local_addr()?);
                    mtpipe::decoder::serve_tcp(listener, handler).class(ErrorClass::Backend)
                }
                None => mtpipe::decoder::serve_connection(io::stdin().lock(), io::stdout().lock(), handler)
                    .class(ErrorClass::Backend),
            }
        }
    }
}

fn bt_run(a: BtRunArgs) -> Result<()> {
    let mut cfg = BtConfig::new(a.src_lang, a.tgt_lang, a.k, a.seed);
    cfg.batch_size = a.batch_size;
    cfg.filter = if a.no_filter {
        PairFilter::permissive()
    } else {
        PairFilter { min_len: a.min_len, max_len: a.max_len, max_len_ratio: a.max_len_ratio, ..PairFilter::default() }
    };
    cfg.filter.validate().class(ErrorClass::Config)?;
    let mono = load(&a.mono)?;
    let opts = ClientOptions { max_in_flight: a.max_in_flight, timeout: Duration::from_secs(a.timeout_secs) };
    let backend = a.backend.open(opts).class(ErrorClass::Backend).with_context(|| format!("backend {}", a.backend))?;
    let run = backtranslate::run_backtranslation(&mono, backend.as_ref(), &cfg).map_err(|e| match e {
        BtError::BackendUnreachable(_) => Classified(ErrorClass::Backend, e.to_string()).into(),
        other => anyhow::Error::from(other),
    })?;
    let manifest = a.manifest.unwrap_or_else(|| with_suffix(&a.out_src, ".manifest.json"));
    let m = backtranslate::write_bt_outputs(&run, &cfg, &a.out_src, &a.out_tgt, &manifest)?;
    let r = &m.report;
    eprintln!("{} sentences: {} pairs, {} dropped, {} failed", r.n_mono, r.n_pairs, r.n_dropped(), r.n_failures);
    Ok(())
}

fn postedit(cmd: PosteditCmd) -> Result<()> {
    let (src, hyp, src_lang, rules, output, edits) = match cmd {
        PosteditCmd::Rules => {
            print!("{}", PatternSet::default().to_toml());
            return Ok(());
        }
        PosteditCmd::Run { src, hyp, src_lang, rules, output, edits } => (src, hyp, src_lang, rules, output, edits),
    };
    let rules = match rules {
        Some(p) => PatternSet::load(&p).class(ErrorClass::Config).with_context(|| p.display().to_string())?,
        None => PatternSet::default(),
    };
    let (s, h) = (read_lines(&src)?, read_lines(&hyp)?);
    if s.len() != h.len() {
        bail!("{} has {} lines but {} has {}", src.display(), s.len(), hyp.display(), h.len());
    }
    let s: Vec<&str> = s.iter().map(String::as_str).collect();
    let h: Vec<&str> = h.iter().map(String::as_str).collect();
    let (out, report) = pipeline::postedit_lines(&s, &h, src_lang, &rules);
    let output = output.unwrap_or_else(|| with_suffix(&hyp, ".pe"));
    let edits = edits.unwrap_or_else(|| with_suffix(&output, ".edits.jsonl"));
    write_file(&output, out.text)?;
    write_file(&edits, out.edits_jsonl)?;
    eprintln!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn score(a: ScoreArgs) -> Result<()> {
    let (h, r) = (read_lines(&a.hyp)?, read_lines(&a.reference)?);
    let s = bleu::corpus_bleu(&h, &r, a.lang)?;
    if a.json {
        let v = serde_json::json!({
            "bleu": s.rounded(),
            "bleu_unrounded": s.bleu,
            "precisions": s.precisions,
            "bp": s.bp,
            "sys_len": s.sys_len,
            "ref_len": s.ref_len,
        });
        println!("{v}");
    } else {
        println!("{s}");
    }
    Ok(())
}

fn pipeline_cmd(cmd: PipelineCmd) -> Result<()> {
    match cmd {
        PipelineCmd::Run { config } => {
            let mut cfg = PipelineConfig::load(&config).class(ErrorClass::Config)?;
            cfg.resolve_paths(config.parent().unwrap_or(Path::new(".")));
            let manifest = pipeline::run_pipeline(&cfg).map_err(|e| Classified(e.class(), e.to_string()))?;
            for s in &manifest.stages {
                eprintln!("stage {} done", s.name());
            }
            println!("{}", cfg.data.out_dir.join("manifest.json").display());
        }
        PipelineCmd::Report { manifest, table } => {
            let text = fs::read_to_string(&manifest).with_context(|| format!("cannot read {}", manifest.display()))?;
            let m = RunManifest::from_json(&text).with_context(|| manifest.display().to_string())?;
            print!("{}", pipeline::report_table(&m, table)?);
        }
        PipelineCmd::Init => print!("{}", PipelineConfig::default().to_toml()),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow!(e))
            .class(ErrorClass::Config)?;
    }
    match cli.cmd {
        Cmd::Stats(a) => stats(a),
        Cmd::Filter(a) => filter(a),
        Cmd::Sample(a) => sample(a),
        Cmd::Spm(c) => spm(c),
        Cmd::Ckpt(c) => ckpt(c),
        Cmd::Bt(c) => bt(c),
        Cmd::Postedit(c) => postedit(c),
        Cmd::Score(a) => score(a),
        Cmd::Pipeline(c) => pipeline_cmd(c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
