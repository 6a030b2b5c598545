//! Scripted desk-scale reproduction: trains the word and character
//! baselines plus every character-model method at a matched parameter
//! budget, evaluates them and writes a comparison report.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{cutoff_curve, em_vs_n_curve, write_csv, CutoffOrder};
use crate::corpus::{
    make_prompts, oov_prompt_score, Granularity, NgramIndex, PromptExample, Vocabulary,
};
use crate::decoding::{DecodeOptions, Decoder};
use crate::error::{Error, Result};
use crate::methods::{transfer_layers, TransferPlan};
use crate::metrics::{evaluate_prompts, summarize, write_records_csv, MetricSummary, OverallWeighting};
use crate::model::{
    build_model, count_params, save_checkpoint, DecoderModel, Method, ModelConfig,
};
use crate::tensor::Rng;
use crate::training::{evaluate_nll, train, write_loss_trace, TrainConfig, TrainReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Smoke,
    Desk,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smoke" => Ok(Preset::Smoke),
            "desk" => Ok(Preset::Desk),
            other => Err(Error::invalid(format!("unknown preset `{other}`"))),
        }
    }
}

/// Every knob of a pipeline run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSettings {
    pub preset: Preset,
    pub seed: u64,
    /// Corpus prefix used, cut at a line boundary.
    pub max_corpus_bytes: usize,
    /// Share of lines (from the end) held out for evaluation.
    pub test_fraction: f64,
    pub word_vocab_max: usize,
    pub n_head: usize,
    pub d_head: usize,
    pub d_model: usize,
    pub word_layers: usize,
    pub word_d_inner: usize,
    pub char_layers: usize,
    /// Depth of the word model that donates layers, as a multiple of the
    /// character depth.
    pub source_depth_factor: usize,
    pub transfer_percent: u32,
    pub max_words_per_seq: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub max_prompts: usize,
    pub k_words: usize,
    pub context_percent: f64,
    pub context_sweep: Vec<f64>,
    pub beam_contexts: Vec<f64>,
    pub beam_size: usize,
    /// Allowed relative gap between a variant's size and the word baseline.
    pub budget_tolerance: f64,
    pub parallel: bool,
}

impl PipelineSettings {
    pub fn preset(preset: Preset, seed: u64) -> Self {
        let smoke = Self {
            preset,
            seed,
            max_corpus_bytes: 1 << 20,
            test_fraction: 0.1,
            word_vocab_max: 2_000,
            n_head: 2,
            d_head: 16,
            d_model: 32,
            word_layers: 2,
            word_d_inner: 64,
            char_layers: 4,
            source_depth_factor: 2,
            transfer_percent: 50,
            max_words_per_seq: 16,
            steps: 150,
            batch_size: 8,
            learning_rate: 0.003,
            warmup_steps: 15,
            max_prompts: 40,
            k_words: 3,
            context_percent: 0.2,
            context_sweep: vec![0.2, 0.4, 0.6, 0.8],
            beam_contexts: vec![0.05, 0.2],
            beam_size: 5,
            budget_tolerance: 0.02,
            parallel: false,
        };
        match preset {
            Preset::Smoke => smoke,
            Preset::Desk => Self {
                max_corpus_bytes: 5 << 20,
                word_vocab_max: 5_000,
                d_head: 32,
                d_model: 64,
                word_d_inner: 128,
                steps: 1_000,
                batch_size: 16,
                warmup_steps: 100,
                max_prompts: 300,
                context_sweep: (0..=12).map(|i| 0.2 + 0.05 * f64::from(i)).collect(),
                ..smoke
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    WordBaseline,
    CharBaseline,
    CharWordSegment,
    CharPoolSum,
    CharPoolMean,
    CharPoolMax,
    CharTransfer,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::WordBaseline,
        Variant::CharBaseline,
        Variant::CharWordSegment,
        Variant::CharPoolSum,
        Variant::CharPoolMean,
        Variant::CharPoolMax,
        Variant::CharTransfer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::WordBaseline => "word_baseline",
            Variant::CharBaseline => "char_baseline",
            Variant::CharWordSegment => "char_word_segment",
            Variant::CharPoolSum => "char_pool_sum",
            Variant::CharPoolMean => "char_pool_mean",
            Variant::CharPoolMax => "char_pool_max",
            Variant::CharTransfer => "char_transfer",
        }
    }

    fn method(self) -> Method {
        match self {
            Variant::CharWordSegment => Method::WordSegment,
            Variant::CharPoolSum => Method::CharPoolSum,
            Variant::CharPoolMean => Method::CharPoolMean,
            Variant::CharPoolMax => Method::CharPoolMax,
            _ => Method::Baseline,
        }
    }

    fn granularity(self) -> Granularity {
        match self {
            Variant::WordBaseline => Granularity::Word,
            _ => Granularity::Character,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub variant: Variant,
    pub params: u64,
    /// Parameters beyond the matched budget the method itself introduces.
    pub added_params: u64,
    pub first_loss_mean: f64,
    pub last_loss_mean: f64,
    pub test_nll_per_token: f64,
    pub metrics: MetricSummary,
}

impl VariantReport {
    pub fn loss_decreased(&self) -> bool {
        self.last_loss_mean < self.first_loss_mean
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub settings: PipelineSettings,
    pub budget: u64,
    pub char_d_inner: usize,
    pub transfer_plan: TransferPlan,
    pub variants: Vec<VariantReport>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl PipelineReport {
    pub fn variant(&self, v: Variant) -> Option<&VariantReport> {
        self.variants.iter().find(|r| r.variant == v)
    }
}

/// First `max_bytes` of `text`, cut at a line boundary.
fn clip_corpus(text: &str, max_bytes: usize) -> &str {
    if text.len() <= max_bytes {
        return text;
    }
    match text[..text.floor_char_boundary(max_bytes)].rfind('\n') {
        Some(i) => &text[..=i],
        None => &text[..text.floor_char_boundary(max_bytes)],
    }
}

/// Splits by lines: the last `test_fraction` of lines form the test text.
pub fn split_corpus(text: &str, test_fraction: f64) -> (String, String) {
    let lines: Vec<&str> = text.lines().collect();
    let n_test = ((lines.len() as f64 * test_fraction).round() as usize).clamp(1, lines.len().max(1));
    let cut = lines.len().saturating_sub(n_test);
    (lines[..cut].join("\n"), lines[cut..].join("\n"))
}

fn base_config(s: &PipelineSettings, granularity: Granularity, vocab_size: usize) -> ModelConfig {
    let base = match granularity {
        Granularity::Character => ModelConfig::desk_char(),
        Granularity::Word => ModelConfig::desk_word(vocab_size),
    };
    ModelConfig {
        n_head: s.n_head,
        d_head: s.d_head,
        d_model: s.d_model,
        d_embed: s.d_model,
        vocab_size,
        max_words_per_seq: s.max_words_per_seq,
        ..base
    }
}

/// Smallest-gap `d_inner` for `cfg` so its size approaches `budget`.
pub fn match_budget(cfg: &ModelConfig, budget: u64) -> (usize, u64) {
    let at = |di: usize| {
        count_params(&ModelConfig {
            d_inner: di,
            ..cfg.clone()
        })
        .total()
    };
    let (base, slope) = (at(1), at(2) - at(1));
    let guess = if budget > base {
        1 + ((budget - base) as f64 / slope as f64).round() as usize
    } else {
        1
    };
    let best = (guess.saturating_sub(1).max(1)..=guess + 1)
        .min_by_key(|&di| at(di).abs_diff(budget))
        .expect("non-empty range");
    (best, at(best))
}

type InitFn<'a> = &'a dyn Fn(&mut DecoderModel) -> Result<()>;

struct Trained {
    model: DecoderModel,
    report: TrainReport,
}

fn train_variant(
    cfg: &ModelConfig,
    tokens: &[u32],
    s: &PipelineSettings,
    stream: u64,
    init: Option<InitFn<'_>>,
) -> Result<Trained> {
    let mut rng = Rng::new(s.seed).fork(stream);
    let mut model = build_model(cfg, &mut rng)?;
    if let Some(f) = init {
        f(&mut model)?;
    }
    let tc = TrainConfig {
        learning_rate: s.learning_rate,
        warmup_steps: s.warmup_steps,
        max_steps: s.steps,
        batch_size: s.batch_size,
        seed: s.seed.wrapping_add(stream),
        ..TrainConfig::desk_for(cfg)
    };
    let report = train(&mut model, tokens, &tc, None)?;
    Ok(Trained { model, report })
}

fn prompts_for(test: &str, cp: f64, s: &PipelineSettings, vocab: &Vocabulary) -> Result<Vec<PromptExample>> {
    let mut p = make_prompts(test, cp, s.k_words, vocab)?;
    p.truncate(s.max_prompts);
    if p.is_empty() {
        return Err(Error::CorpusTooSmall {
            needed: s.k_words + 1,
            got: 0,
        });
    }
    Ok(p)
}

#[derive(Serialize)]
struct Table2Row {
    model: &'static str,
    params: u64,
    added_params: u64,
    em_overall: f64,
    em_rel_to_word: f64,
    pm_overall: f64,
    pm_rel_to_word: f64,
}

#[derive(Serialize)]
struct SweepRow {
    model: &'static str,
    context_percent: f64,
    n_prompts: usize,
    em_overall: f64,
    pm_overall: f64,
}

#[derive(Serialize)]
struct BeamRow {
    model: &'static str,
    context_percent: f64,
    decoder: Decoder,
    beam_size: usize,
    n_prompts: usize,
    em_overall: f64,
    pm_overall: f64,
}

#[derive(Serialize)]
struct EmCurveRow {
    model: &'static str,
    n: usize,
    exact_match: f64,
}

#[derive(Serialize)]
struct CutoffRow {
    model: &'static str,
    k_requested: usize,
    k_used: usize,
    exact_match_at_1: f64,
}

/// Record-count cutoffs for the OOV curve: tenths of the prompt set.
fn oov_cutoffs(n: usize) -> Vec<usize> {
    (1..=10).map(|i| (n * i).div_ceil(10).max(1)).collect()
}

/// Runs the whole comparison and writes the report directory:
/// `summary.json`, `table2.csv`, `context_sweep.csv`, `greedy_vs_beam.csv`,
/// `em_vs_n.csv`, `oov_cutoff.csv`, `transfer_plan.json`, `settings.json`,
/// `char_vocab.json`, `word_vocab.json`, and per-model `checkpoints/`,
/// `traces/` and `records/`.
pub fn run_pipeline(corpus: &str, settings: &PipelineSettings, out_dir: &Path) -> Result<PipelineReport> {
    let start = Instant::now();
    let s = settings;
    let stage = |name: &str| {
        let label = format!("{name} (preset {:?}, seed {})", s.preset, s.seed).to_lowercase();
        move |e: Error| e.in_stage(label)
    };
    for dir in ["checkpoints", "traces", "records"] {
        fs::create_dir_all(out_dir.join(dir))?;
    }
    fs::write(out_dir.join("settings.json"), serde_json::to_string_pretty(s)?)?;

    let corpus = clip_corpus(corpus, s.max_corpus_bytes);
    let (train_text, test_text) = split_corpus(corpus, s.test_fraction);
    let char_vocab = Vocabulary::build(&train_text, Granularity::Character, None).map_err(stage("vocab"))?;
    let word_vocab =
        Vocabulary::build(&train_text, Granularity::Word, Some(s.word_vocab_max)).map_err(stage("vocab"))?;
    char_vocab.save(&out_dir.join("char_vocab.json"))?;
    word_vocab.save(&out_dir.join("word_vocab.json"))?;
    let char_tokens = char_vocab.encode_corpus(&train_text);
    let word_tokens = word_vocab.encode_corpus(&train_text);
    let index = NgramIndex::build(&train_text, 3);

    let word_cfg = ModelConfig {
        n_layer: s.word_layers,
        d_inner: s.word_d_inner,
        ..base_config(s, Granularity::Word, word_vocab.len())
    };
    let budget = count_params(&word_cfg).total();
    let char_base = ModelConfig {
        n_layer: s.char_layers,
        ..base_config(s, Granularity::Character, char_vocab.len())
    };
    let (char_d_inner, char_total) = match_budget(&char_base, budget);
    let gap = char_total.abs_diff(budget) as f64 / budget as f64;
    if gap > s.budget_tolerance {
        return Err(stage("budget")(Error::Config(format!(
            "cannot match the word budget {budget}: closest character model has {char_total} parameters"
        ))));
    }
    let char_cfg = ModelConfig {
        d_inner: char_d_inner,
        ..char_base
    };

    // the donor: a deeper word model with the character model's shape
    let source_cfg = ModelConfig {
        n_layer: s.char_layers * s.source_depth_factor,
        d_inner: char_d_inner,
        ..word_cfg.clone()
    };
    let plan = TransferPlan::new(
        &source_cfg,
        &char_cfg,
        s.transfer_percent,
        Some(PathBuf::from("checkpoints/transfer_source.ckpt")),
    )
    .map_err(stage("transfer"))?;
    let source =
        train_variant(&source_cfg, &word_tokens, s, 100, None).map_err(stage("train transfer_source"))?;
    save_checkpoint(&source.model, &out_dir.join("checkpoints/transfer_source.ckpt"))?;
    write_loss_trace(&out_dir.join("traces/transfer_source.csv"), &source.report.trace)?;
    plan.save(&out_dir.join("transfer_plan.json"))?;

    let apply_transfer = |m: &mut DecoderModel| -> Result<()> {
        let copied = transfer_layers(m, &source.model, &plan)?;
        for name in &copied {
            let theirs = source.model.param(name).expect("copied from source");
            if m.param(name) != Some(theirs) {
                return Err(Error::Transfer(format!("{name} differs from the source after transfer")));
            }
        }
        Ok(())
    };

    let job = |(i, v): (usize, &Variant)| -> Result<(Variant, Trained)> {
        let (cfg, tokens) = match v.granularity() {
            Granularity::Word => (word_cfg.clone(), &word_tokens),
            Granularity::Character => (
                ModelConfig {
                    method: v.method(),
                    ..char_cfg.clone()
                },
                &char_tokens,
            ),
        };
        let init: Option<InitFn<'_>> =
            (*v == Variant::CharTransfer).then_some(&apply_transfer);
        let t = train_variant(&cfg, tokens, s, i as u64, init).map_err(stage(&format!("train {}", v.name())))?;
        Ok((*v, t))
    };
    let trained: Vec<(Variant, Trained)> = if s.parallel {
        Variant::ALL.par_iter().enumerate().map(job).collect::<Result<_>>()?
    } else {
        Variant::ALL.iter().enumerate().map(job).collect::<Result<_>>()?
    };

    let greedy = DecodeOptions {
        k_words: s.k_words,
        ..DecodeOptions::default()
    };
    let mut variants = Vec::new();
    let mut sweep_rows = Vec::new();
    let mut beam_rows = Vec::new();
    let mut curve_rows = Vec::new();
    let mut cutoff_rows = Vec::new();
    for (v, t) in &trained {
        let name = v.name();
        let vocab = match v.granularity() {
            Granularity::Word => &word_vocab,
            Granularity::Character => &char_vocab,
        };
        save_checkpoint(&t.model, &out_dir.join(format!("checkpoints/{name}.ckpt")))?;
        write_loss_trace(&out_dir.join(format!("traces/{name}.csv")), &t.report.trace)?;

        let eval = |cp: f64, opts: &DecodeOptions| -> Result<(Vec<_>, MetricSummary)> {
            let prompts = prompts_for(&test_text, cp, s, vocab)?;
            let mut records = evaluate_prompts(&t.model, vocab, &prompts, opts)?;
            for r in records.iter_mut().zip(&prompts) {
                r.0.oov_score = Some(oov_prompt_score(&r.1.prompt_words(), &index, 3));
            }
            let summary = summarize(&records, s.k_words, OverallWeighting::Linear)?;
            Ok((records, summary))
        };
        let eval_stage = format!("eval {name}");
        let (records, mut metrics) = eval(s.context_percent, &greedy).map_err(stage(&eval_stage))?;
        write_records_csv(&out_dir.join(format!("records/{name}.csv")), &records)?;
        let test_tokens = vocab.encode_corpus(&test_text);
        let (nll, _) =
            evaluate_nll(&t.model, &test_tokens, t.model.config().eval_mem_len).map_err(stage(&eval_stage))?;
        for p in em_vs_n_curve(&records, s.k_words)? {
            curve_rows.push(EmCurveRow {
                model: name,
                n: p.n,
                exact_match: p.exact_match,
            });
        }
        for p in cutoff_curve(&records, &oov_cutoffs(records.len()), CutoffOrder::Ascending)? {
            cutoff_rows.push(CutoffRow {
                model: name,
                k_requested: p.k_requested,
                k_used: p.k_used,
                exact_match_at_1: p.exact_match_at_1,
            });
        }
        metrics.nll_per_token = Some(nll);
        metrics.perplexity = Some(nll.exp());

        for &cp in &s.context_sweep {
            let (_, m) = eval(cp, &greedy).map_err(stage(&format!("context sweep {name}")))?;
            sweep_rows.push(SweepRow {
                model: name,
                context_percent: cp,
                n_prompts: m.n_prompts,
                em_overall: m.em_overall,
                pm_overall: m.pm_overall,
            });
        }
        if matches!(v, Variant::WordBaseline | Variant::CharBaseline) {
            for &cp in &s.beam_contexts {
                for (decoder, beam_size) in [(Decoder::Greedy, 1), (Decoder::Beam, s.beam_size)] {
                    let opts = DecodeOptions {
                        decoder,
                        beam_size,
                        ..greedy.clone()
                    };
                    let (_, m) = eval(cp, &opts).map_err(stage(&format!("beam comparison {name}")))?;
                    beam_rows.push(BeamRow {
                        model: name,
                        context_percent: cp,
                        decoder,
                        beam_size,
                        n_prompts: m.n_prompts,
                        em_overall: m.em_overall,
                        pm_overall: m.pm_overall,
                    });
                }
            }
        }

        let (first, last) = t.report.loss_trend(10).expect("training ran");
        let params = t.model.num_params();
        variants.push(VariantReport {
            variant: *v,
            params,
            added_params: if *v == Variant::CharWordSegment {
                (t.model.config().max_words_per_seq * t.model.config().d_embed) as u64
            } else {
                0
            },
            first_loss_mean: first,
            last_loss_mean: last,
            test_nll_per_token: nll,
            metrics,
        });
    }

    let word = variants[0].metrics.clone();
    let rel = |x: f64, base: f64| if base > 0.0 { 100.0 * (x - base) / base } else { 0.0 };
    let table: Vec<Table2Row> = variants
        .iter()
        .map(|r| Table2Row {
            model: r.variant.name(),
            params: r.params,
            added_params: r.added_params,
            em_overall: r.metrics.em_overall,
            em_rel_to_word: rel(r.metrics.em_overall, word.em_overall),
            pm_overall: r.metrics.pm_overall,
            pm_rel_to_word: rel(r.metrics.pm_overall, word.pm_overall),
        })
        .collect();
    write_csv(&out_dir.join("table2.csv"), &table)?;
    write_csv(&out_dir.join("context_sweep.csv"), &sweep_rows)?;
    write_csv(&out_dir.join("greedy_vs_beam.csv"), &beam_rows)?;
    write_csv(&out_dir.join("em_vs_n.csv"), &curve_rows)?;
    write_csv(&out_dir.join("oov_cutoff.csv"), &cutoff_rows)?;

    let report = PipelineReport {
        settings: s.clone(),
        budget,
        char_d_inner,
        transfer_plan: plan,
        variants,
        elapsed: start.elapsed(),
    };
    fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_match_is_tight() {
        let cfg = ModelConfig {
            n_layer: 4,
            ..ModelConfig::desk_char()
        };
        let target = 90_000;
        let (di, total) = match_budget(&cfg, target);
        assert!(total.abs_diff(target) as f64 / (target as f64) < 0.01, "{di} {total}");
    }

    #[test]
    fn split_keeps_every_line() {
        let text = "a\nb\nc\nd\ne\nf\ng\nh\ni\nj";
        let (train, test) = split_corpus(text, 0.2);
        assert_eq!(train.lines().count() + test.lines().count(), 10);
        assert_eq!(test, "i\nj");
    }

    #[test]
    fn failures_name_their_stage() {
        let dir = tempfile::tempdir().unwrap();
        let settings = PipelineSettings::preset(Preset::Smoke, 1);
        let err = run_pipeline("tiny text\n\nmore tiny text\n", &settings, dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("stage `") && msg.contains("preset smoke, seed 1"), "{msg}");
    }

    #[test]
    fn clipping_respects_lines() {
        assert_eq!(clip_corpus("ab\ncd\nef", 6), "ab\ncd\n");
        assert_eq!(clip_corpus("ab", 6), "ab");
    }
}
