//! Command-line front end. [`run`] parses arguments and writes to the given
//! output so the binary stays a one-liner and tests can drive it.

use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis::{
    breakdown_study, estimate_peak_memory, pareto_table, sample_architectures,
    write_csv, ArchitectureSpace, MemoryMode, ParetoEntry, BREAKDOWN_SEED,
};
use crate::corpus::{make_prompts, oov_ngram_report, Granularity, Vocabulary};
use crate::decoding::{prompt_feed, suggest, DecodeOptions, Decoder};
use crate::error::{Error, Result};
use crate::experiments::{run_pipeline, PipelineReport, PipelineSettings, Preset};
use crate::metrics::{
    evaluate_prompts, summarize, write_records_csv, write_summary_json, OverallWeighting,
};
use crate::model::{build_model, count_params, load_checkpoint, save_checkpoint, Component, DecoderModel, ModelConfig};
use crate::tensor::Rng;
use crate::training::{evaluate_nll, train, write_loss_trace, TrainConfig};

/// Evaluation settings of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    /// Share of each paragraph's words given as the prompt.
    pub context_percent: f64,
    pub k_words: usize,
    pub decoder: Decoder,
    pub beam_size: usize,
    /// Cap on evaluated prompts; `None` evaluates all.
    pub max_prompts: Option<usize>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            context_percent: 0.2,
            k_words: 3,
            decoder: Decoder::Greedy,
            beam_size: 5,
            max_prompts: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathSettings {
    pub corpus: Option<PathBuf>,
    pub valid_corpus: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

/// Complete description of a training/evaluation run. Missing sections and
/// fields take their defaults; unknown keys are rejected.
///
/// `model.tgt_len` and `model.mem_len` are authoritative: the training
/// section's copies are overwritten with them.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalSettings,
    pub paths: PathSettings,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|_| Error::NotFound {
            what: "config",
            path: path.to_path_buf(),
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies `section.field=value` overrides. Values parse as JSON when
    /// they can and as strings otherwise.
    pub fn with_overrides(self, sets: &[String]) -> Result<Self> {
        if sets.is_empty() {
            return Ok(self);
        }
        let mut doc = serde_json::to_value(&self)?;
        for set in sets {
            let (key, raw) = set
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{set}` is not key=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut slot = &mut doc;
            for part in key.split('.') {
                slot = slot
                    .as_object_mut()
                    .ok_or_else(|| Error::Config(format!("`{key}` does not name a field")))?
                    .entry(part)
                    .or_insert(Value::Null);
            }
            *slot = value;
        }
        serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Parser, Debug)]
#[command(name = "autocomplete", version, about = "Character and word autocomplete models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a vocabulary from a corpus and save it as JSON.
    BuildVocab(BuildVocabArgs),
    /// Train a model; writes model.ckpt, vocab.json, loss_trace.csv
    /// (step,loss,lr,grad_norm) and run_config.json to the output directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint on held-out text; writes records.csv
    /// (prompt_id,context_percent,em_at,pm_at,suggestion,ground_truth_words,oov_score)
    /// and summary.json, or sweep.csv (context_percent,n_prompts,em_overall,pm_overall)
    /// with --context-sweep.
    Eval(EvalArgs),
    /// Interactive suggestion loop: one prompt per line on stdin.
    Suggest(SuggestArgs),
    /// Parameter breakdown over sampled architectures; --out writes
    /// granularity,n_layer,n_head,d_head,d_embed,d_inner,d_model,total and per-component shares.
    AnalyzeParams(AnalyzeParamsArgs),
    /// Share of test n-grams unseen in the training text.
    AnalyzeOov(AnalyzeOovArgs),
    /// Memory/accuracy table for a pipeline report directory; writes pareto.csv
    /// (label,params,memory_bytes,em_overall,pareto_optimal).
    Pareto(ParetoArgs),
    /// ExactMatch and NLL on single-token cases; --out writes case,truth,prediction,exact_match,nll.
    TheoryTable(TheoryTableArgs),
    /// Train and compare every model variant at a matched budget.
    Pipeline(PipelineArgs),
}

#[derive(Args, Debug)]
pub struct BuildVocabArgs {
    #[arg(long, env = "AUTOCOMPLETE_CORPUS")]
    pub corpus: PathBuf,
    #[arg(long, default_value = "char")]
    pub granularity: Granularity,
    /// Keep at most this many entries (specials included).
    #[arg(long)]
    pub max_size: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Flags shared by commands that read a [`RunConfig`].
#[derive(Args, Debug, Default)]
pub struct ConfigArgs {
    /// JSON run config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override any config field, e.g. `--set model.n_layer=4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long, env = "AUTOCOMPLETE_CORPUS")]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub valid_corpus: Option<PathBuf>,
    /// Reuse a saved vocabulary instead of building one.
    #[arg(long, env = "AUTOCOMPLETE_VOCAB")]
    pub vocab: Option<PathBuf>,
    #[arg(long, env = "AUTOCOMPLETE_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub granularity: Option<Granularity>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_layer: Option<usize>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub d_inner: Option<usize>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long, env = "AUTOCOMPLETE_CHECKPOINT")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, env = "AUTOCOMPLETE_VOCAB")]
    pub vocab: Option<PathBuf>,
    /// Held-out text to build prompts from; paragraphs are separated by
    /// blank lines and `= Heading =` lines are skipped.
    #[arg(long, env = "AUTOCOMPLETE_CORPUS")]
    pub corpus: Option<PathBuf>,
    #[arg(long, env = "AUTOCOMPLETE_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub context_percent: Option<f64>,
    /// `start:end:step`, inclusive of `end`.
    #[arg(long, conflicts_with = "context_percent")]
    pub context_sweep: Option<String>,
    #[arg(long)]
    pub k_words: Option<usize>,
    #[arg(long)]
    pub decoder: Option<Decoder>,
    #[arg(long)]
    pub beam_size: Option<usize>,
    #[arg(long)]
    pub max_prompts: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SuggestArgs {
    #[arg(long, env = "AUTOCOMPLETE_CHECKPOINT")]
    pub checkpoint: PathBuf,
    #[arg(long, env = "AUTOCOMPLETE_VOCAB")]
    pub vocab: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub k_words: usize,
    #[arg(long, default_value = "greedy")]
    pub decoder: Decoder,
    #[arg(long, default_value_t = 5)]
    pub beam_size: usize,
    /// Answer one prompt and exit instead of reading stdin.
    #[arg(long)]
    pub prompt: Option<String>,
}

#[derive(Args, Debug)]
pub struct AnalyzeParamsArgs {
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = BREAKDOWN_SEED)]
    pub seed: u64,
    /// Break down a single model config (JSON) instead of sampling.
    #[arg(long)]
    pub model_config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AnalyzeOovArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub max_n: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ParetoArgs {
    /// Directory written by `pipeline`.
    #[arg(long, env = "AUTOCOMPLETE_OUT_DIR")]
    pub report_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
}

#[derive(Args, Debug)]
pub struct TheoryTableArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    #[arg(long, default_value = "smoke")]
    pub preset: Preset,
    #[arg(long, env = "AUTOCOMPLETE_CORPUS", required_unless_present = "synthetic_bytes")]
    pub corpus: Option<PathBuf>,
    /// Generate a synthetic corpus of about this many bytes instead.
    #[arg(long, conflicts_with = "corpus")]
    pub synthetic_bytes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "AUTOCOMPLETE_OUT_DIR")]
    pub out_dir: PathBuf,
    /// Train independent variants concurrently.
    #[arg(long)]
    pub parallel: bool,
    #[arg(long)]
    pub steps: Option<usize>,
}

/// Parses `start:end:step` into an inclusive list of context percents.
pub fn parse_sweep(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::invalid(format!("bad sweep `{spec}`; expected start:end:step")))?;
    let [start, end, step] = parts[..] else {
        return Err(Error::invalid(format!("bad sweep `{spec}`; expected start:end:step")));
    };
    if !(step > 0.0) || end < start {
        return Err(Error::invalid(format!("bad sweep `{spec}`; need step > 0 and end >= start")));
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| ((start + step * i as f64) * 1e9).round() / 1e9).collect())
}

fn read_text(path: &Path, what: &'static str) -> Result<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound {
            what,
            path: path.to_path_buf(),
        },
        _ => e.into(),
    })
}

fn require(p: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    p.ok_or_else(|| Error::invalid(format!("missing required --{flag}")))
}

fn set_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        // a second call in one process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn load_run_config(args: &ConfigArgs) -> Result<RunConfig> {
    let base = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    base.with_overrides(&args.sets)
}

/// Loads a checkpoint and the vocabulary it was trained with, refusing
/// mismatched pairs.
fn load_model_and_vocab(checkpoint: &Path, vocab: &Path) -> Result<(DecoderModel, Vocabulary)> {
    let model = load_checkpoint(checkpoint)?;
    let vocab = Vocabulary::load(vocab)?;
    let cfg = model.config();
    if cfg.vocab_size != vocab.len() || cfg.granularity != vocab.granularity() {
        return Err(Error::Checkpoint(format!(
            "{} expects a {:?} vocabulary of {} entries, got {:?} with {}",
            checkpoint.display(),
            cfg.granularity,
            cfg.vocab_size,
            vocab.granularity(),
            vocab.len()
        )));
    }
    Ok((model, vocab))
}

fn echo_config<T: Serialize>(out: &mut dyn Write, label: &str, cfg: &T) -> Result<()> {
    writeln!(out, "effective {label}:\n{}", serde_json::to_string_pretty(cfg)?)?;
    Ok(())
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, S>(args: I, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            write!(out, "{e}")?;
            return Ok(());
        }
        Err(e) => return Err(Error::invalid(e.to_string().trim_end().to_string())),
    };
    match cli.command {
        Command::BuildVocab(a) => build_vocab(a, out),
        Command::Train(a) => train_cmd(a, out),
        Command::Eval(a) => eval_cmd(a, out),
        Command::Suggest(a) => suggest_cmd(a, input, out),
        Command::AnalyzeParams(a) => analyze_params(a, out),
        Command::AnalyzeOov(a) => analyze_oov(a, out),
        Command::Pareto(a) => pareto_cmd(a, out),
        Command::TheoryTable(a) => theory_table(a, out),
        Command::Pipeline(a) => pipeline_cmd(a, out),
    }
}

fn build_vocab(a: BuildVocabArgs, out: &mut dyn Write) -> Result<()> {
    let text = read_text(&a.corpus, "corpus")?;
    let vocab = Vocabulary::build(&text, a.granularity, a.max_size)?;
    vocab.save(&a.out)?;
    writeln!(out, "wrote {} entries to {}", vocab.len(), a.out.display())?;
    Ok(())
}

fn train_cmd(a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let mut rc = load_run_config(&a.cfg)?;
    let paths = &mut rc.paths;
    paths.corpus = a.corpus.or(paths.corpus.take());
    paths.valid_corpus = a.valid_corpus.or(paths.valid_corpus.take());
    paths.vocab = a.vocab.or(paths.vocab.take());
    paths.out_dir = a.out_dir.or(paths.out_dir.take());
    if let Some(g) = a.granularity {
        rc.model.granularity = g;
    }
    let t = &mut rc.train;
    t.max_steps = a.steps.unwrap_or(t.max_steps);
    t.batch_size = a.batch_size.unwrap_or(t.batch_size);
    t.learning_rate = a.learning_rate.unwrap_or(t.learning_rate);
    t.seed = a.seed.unwrap_or(t.seed);
    let m = &mut rc.model;
    m.n_layer = a.n_layer.unwrap_or(m.n_layer);
    if let Some(d) = a.d_model {
        m.d_model = d;
        m.d_embed = d;
    }
    m.d_inner = a.d_inner.unwrap_or(m.d_inner);
    set_threads(a.threads);

    let corpus_path = require(rc.paths.corpus.clone(), "corpus")?;
    let out_dir = require(rc.paths.out_dir.clone(), "out-dir")?;
    let text = read_text(&corpus_path, "corpus")?;
    let vocab = match &rc.paths.vocab {
        Some(p) => Vocabulary::load(p)?,
        None => Vocabulary::build(&text, rc.model.granularity, None)?,
    };
    if vocab.granularity() != rc.model.granularity {
        return Err(Error::Config(format!(
            "vocabulary is {:?} but the model is {:?}",
            vocab.granularity(),
            rc.model.granularity
        )));
    }
    rc.model.vocab_size = vocab.len();
    rc.train.tgt_len = rc.model.tgt_len;
    rc.train.mem_len = rc.model.mem_len;
    rc.model.validate()?;
    rc.train.validate()?;

    fs::create_dir_all(&out_dir)?;
    echo_config(out, "config", &rc)?;
    fs::write(out_dir.join("run_config.json"), serde_json::to_string_pretty(&rc)?)?;
    vocab.save(&out_dir.join("vocab.json"))?;

    let tokens = vocab.encode_corpus(&text);
    let valid = match &rc.paths.valid_corpus {
        Some(p) => Some(vocab.encode_corpus(&read_text(p, "validation corpus")?)),
        None => None,
    };
    let mut model = build_model(&rc.model, &mut Rng::new(rc.train.seed))?;
    writeln!(out, "training {} parameters on {} tokens", model.num_params(), tokens.len())?;
    let report = train(&mut model, &tokens, &rc.train, valid.as_deref())?;
    write_loss_trace(&out_dir.join("loss_trace.csv"), &report.trace)?;
    save_checkpoint(&model, &out_dir.join("model.ckpt"))?;
    if let Some((first, last)) = report.loss_trend(10) {
        writeln!(out, "loss {first:.4} -> {last:.4} over {} steps", report.trace.len())?;
    }
    for e in &report.evals {
        writeln!(out, "step {} valid nll {:.4}", e.step, e.nll)?;
    }
    writeln!(out, "wrote {}", out_dir.display())?;
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    context_percent: f64,
    n_prompts: usize,
    em_overall: f64,
    pm_overall: f64,
}

fn eval_cmd(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let mut rc = load_run_config(&a.cfg)?;
    let e = &mut rc.eval;
    e.context_percent = a.context_percent.unwrap_or(e.context_percent);
    e.k_words = a.k_words.unwrap_or(e.k_words);
    e.decoder = a.decoder.unwrap_or(e.decoder);
    e.beam_size = a.beam_size.unwrap_or(e.beam_size);
    e.max_prompts = a.max_prompts.or(e.max_prompts);
    let p = &mut rc.paths;
    p.checkpoint = a.checkpoint.or(p.checkpoint.take());
    p.vocab = a.vocab.or(p.vocab.take());
    p.corpus = a.corpus.or(p.corpus.take());
    p.out_dir = a.out_dir.or(p.out_dir.take());
    set_threads(a.threads);

    let checkpoint = require(rc.paths.checkpoint.clone(), "checkpoint")?;
    let vocab_path = require(rc.paths.vocab.clone(), "vocab")?;
    let corpus = require(rc.paths.corpus.clone(), "corpus")?;
    let out_dir = require(rc.paths.out_dir.clone(), "out-dir")?;
    let (model, vocab) = load_model_and_vocab(&checkpoint, &vocab_path)?;
    let text = read_text(&corpus, "corpus")?;
    let sweep = match &a.context_sweep {
        Some(s) => Some(parse_sweep(s)?),
        None => None,
    };
    echo_config(out, "eval settings", &rc.eval)?;
    fs::create_dir_all(&out_dir)?;
    fs::write(out_dir.join("eval_config.json"), serde_json::to_string_pretty(&rc)?)?;

    let opts = DecodeOptions {
        k_words: rc.eval.k_words,
        max_tokens: None,
        decoder: rc.eval.decoder,
        beam_size: rc.eval.beam_size,
    };
    let run_at = |cp: f64| -> Result<_> {
        let mut prompts = make_prompts(&text, cp, rc.eval.k_words, &vocab)?;
        if let Some(n) = rc.eval.max_prompts {
            prompts.truncate(n);
        }
        let records = evaluate_prompts(&model, &vocab, &prompts, &opts)?;
        let summary = summarize(&records, rc.eval.k_words, OverallWeighting::Linear)?;
        Ok((records, summary))
    };
    match sweep {
        None => {
            let (records, mut summary) = run_at(rc.eval.context_percent)?;
            let (nll, _) = evaluate_nll(&model, &vocab.encode_corpus(&text), model.config().eval_mem_len)?;
            summary.nll_per_token = Some(nll);
            summary.perplexity = Some(nll.exp());
            write_records_csv(&out_dir.join("records.csv"), &records)?;
            write_summary_json(&out_dir.join("summary.json"), &summary)?;
            writeln!(
                out,
                "{} prompts: EM@overall {:.2}  PM@overall {:.2}  nll/token {:.4}",
                summary.n_prompts, summary.em_overall, summary.pm_overall, nll
            )?;
        }
        Some(points) => {
            let mut rows = Vec::new();
            for cp in points {
                let (_, s) = run_at(cp)?;
                writeln!(out, "context {cp:.2}: EM {:.2}  PM {:.2}", s.em_overall, s.pm_overall)?;
                rows.push(SweepRow {
                    context_percent: cp,
                    n_prompts: s.n_prompts,
                    em_overall: s.em_overall,
                    pm_overall: s.pm_overall,
                });
            }
            write_csv(&out_dir.join("sweep.csv"), &rows)?;
        }
    }
    Ok(())
}

fn suggest_cmd(a: SuggestArgs, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<()> {
    let (model, vocab) = load_model_and_vocab(&a.checkpoint, &a.vocab)?;
    let opts = DecodeOptions {
        k_words: a.k_words,
        max_tokens: None,
        decoder: a.decoder,
        beam_size: a.beam_size,
    };
    let answer = |line: &str, out: &mut dyn Write| -> Result<()> {
        let mut text = line.trim().to_string();
        if vocab.granularity() == Granularity::Character {
            text.push(' ');
        }
        let ids = vocab.tokenize(&text);
        // validate up front so an empty prompt gets a readable message
        prompt_feed(&model, &ids)?;
        let s = suggest(&model, &vocab, &ids, &opts)?;
        writeln!(out, "{}", s.text())?;
        Ok(())
    };
    if let Some(p) = &a.prompt {
        return answer(p, out);
    }
    loop {
        write!(out, "> ")?;
        out.flush()?;
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            break;
        }
        if line.trim().is_empty() {
            continue;
        }
        if let Err(e) = answer(&line, out) {
            writeln!(out, "error: {e}")?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct BreakdownRow {
    granularity: Granularity,
    n_layer: usize,
    n_head: usize,
    d_head: usize,
    d_embed: usize,
    d_inner: usize,
    d_model: usize,
    total: u64,
    ada_emb_share: f64,
    attn_share: f64,
    ffn_share: f64,
    softmax_share: f64,
}

fn analyze_params(a: AnalyzeParamsArgs, out: &mut dyn Write) -> Result<()> {
    if let Some(p) = &a.model_config {
        let cfg: ModelConfig = serde_json::from_str(&read_text(p, "config")?)
            .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
        cfg.validate()?;
        let b = count_params(&cfg);
        writeln!(out, "total {}", b.total())?;
        for (c, share) in Component::ALL.iter().zip(b.shares()) {
            writeln!(out, "{c:?}\t{}\t{share:.2}%", b.get(*c))?;
        }
        return Ok(());
    }
    let space = ArchitectureSpace::breakdown_space();
    let mut rows = Vec::new();
    writeln!(out, "granularity\tcomponent\tmean%\tstd%")?;
    for g in [Granularity::Word, Granularity::Character] {
        let cfgs = sample_architectures(&space, a.samples, a.seed, g)?;
        let study = breakdown_study(&cfgs)?;
        for (i, c) in Component::ALL.iter().enumerate() {
            writeln!(out, "{g:?}\t{c:?}\t{:.2}\t{:.2}", study.mean_shares[i], study.std_shares[i])?;
        }
        for (cfg, s) in cfgs.iter().zip(&study.per_config) {
            rows.push(BreakdownRow {
                granularity: g,
                n_layer: cfg.n_layer,
                n_head: cfg.n_head,
                d_head: cfg.d_head,
                d_embed: cfg.d_embed,
                d_inner: cfg.d_inner,
                d_model: cfg.d_model,
                total: s.total,
                ada_emb_share: s.shares[0],
                attn_share: s.shares[1],
                ffn_share: s.shares[2],
                softmax_share: s.shares[3],
            });
        }
    }
    if let Some(p) = &a.out {
        write_csv(p, &rows)?;
    }
    Ok(())
}

fn analyze_oov(a: AnalyzeOovArgs, out: &mut dyn Write) -> Result<()> {
    let train = read_text(&a.train, "training corpus")?;
    let test = read_text(&a.test, "test corpus")?;
    let report = oov_ngram_report(&train, &test, a.max_n)?;
    writeln!(out, "n\toov\tunique\tpercent")?;
    for (n, pct) in &report.per_n {
        let (oov, total) = report.counts[n];
        writeln!(out, "{n}\t{oov}\t{total}\t{pct:.2}")?;
    }
    if let Some(p) = &a.out {
        fs::write(p, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

fn pareto_cmd(a: ParetoArgs, out: &mut dyn Write) -> Result<()> {
    let summary = a.report_dir.join("summary.json");
    let report: PipelineReport = serde_json::from_str(&read_text(&summary, "pipeline summary")?)?;
    let mut entries = Vec::new();
    for v in &report.variants {
        let name = v.variant.name();
        let model = load_checkpoint(&a.report_dir.join(format!("checkpoints/{name}.ckpt")))?;
        let cfg = model.config();
        let est = estimate_peak_memory(cfg, a.batch, cfg.tgt_len, MemoryMode::Inference);
        entries.push(ParetoEntry {
            label: name.to_string(),
            params: v.params,
            memory_bytes: est.total_peak_bytes,
            em_overall: v.metrics.em_overall,
        });
    }
    let rows = pareto_table(&entries)?;
    writeln!(out, "label\tparams\tmemory_bytes\tem_overall\tpareto_optimal")?;
    for r in &rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{:.2}\t{}",
            r.label, r.params, r.memory_bytes, r.em_overall, r.pareto_optimal
        )?;
    }
    write_csv(&a.report_dir.join("pareto.csv"), &rows)?;
    Ok(())
}

#[derive(Serialize)]
struct TheoryCsvRow {
    case: String,
    truth: String,
    prediction: String,
    exact_match: u8,
    nll: f64,
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
    format!("[{}]", parts.join(", "))
}

fn theory_table(a: TheoryTableArgs, out: &mut dyn Write) -> Result<()> {
    let rows = crate::metrics::em_ppl_theory_table();
    writeln!(out, "case\ttruth\tprediction\tEM\tNLL")?;
    for r in &rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:.2}",
            r.case,
            fmt_vec(&r.truth),
            fmt_vec(&r.prediction),
            r.exact_match,
            r.nll
        )?;
    }
    if let Some(p) = &a.out {
        let csv_rows: Vec<TheoryCsvRow> = rows
            .iter()
            .map(|r| TheoryCsvRow {
                case: r.case.clone(),
                truth: fmt_vec(&r.truth),
                prediction: fmt_vec(&r.prediction),
                exact_match: r.exact_match,
                nll: r.nll,
            })
            .collect();
        write_csv(p, &csv_rows)?;
    }
    Ok(())
}

fn pipeline_cmd(a: PipelineArgs, out: &mut dyn Write) -> Result<()> {
    let text = match (&a.corpus, a.synthetic_bytes) {
        (Some(p), _) => read_text(p, "corpus")?,
        (None, Some(n)) => crate::corpus::synthetic_corpus(a.seed, n),
        (None, None) => return Err(Error::invalid("missing required --corpus")),
    };
    let mut settings = PipelineSettings::preset(a.preset, a.seed);
    settings.parallel = a.parallel;
    if let Some(s) = a.steps {
        settings.steps = s;
    }
    echo_config(out, "pipeline settings", &settings)?;
    let report = run_pipeline(&text, &settings, &a.out_dir)?;
    writeln!(out, "model\tparams\tadded\tEM\tPM\tloss first->last")?;
    for v in &report.variants {
        writeln!(
            out,
            "{}\t{}\t{}\t{:.2}\t{:.2}\t{:.3}->{:.3}",
            v.variant.name(),
            v.params,
            v.added_params,
            v.metrics.em_overall,
            v.metrics.pm_overall,
            v.first_loss_mean,
            v.last_loss_mean
        )?;
    }
    writeln!(out, "wrote {} in {:.1?}", a.out_dir.display(), report.elapsed)?;
    Ok(())
}
