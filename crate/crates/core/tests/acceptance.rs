//! One pass/fail line per acceptance criterion. Runs without the libtest
//! harness so every line is printed; exits nonzero if any criterion fails.

use std::collections::hash_map::DefaultHasher;
use std::fs;
use std::hash::{Hash, Hasher};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use autocomplete::analysis::{breakdown_study, sample_architectures, ArchitectureSpace, BREAKDOWN_SEED};
use autocomplete::corpus::{make_prompts, oov_ngram_report, synthetic_corpus, Granularity, Vocabulary, CHAR_SPACE_ID};
use autocomplete::decoding::{beam_suggest, greedy_suggest, DecodeOptions, Decoder, FnModel, StopReason};
use autocomplete::experiments::{run_pipeline, PipelineSettings, Preset, Variant};
use autocomplete::methods::{char_pool_embed, transfer_layers, transferred_layer_count, TransferPlan, TRANSFER_PERCENTS};
use autocomplete::metrics::{
    em_ppl_theory_table, evaluate_prompts, exact_match_at_n, partial_match_at_n, summarize, OverallWeighting,
};
use autocomplete::model::{
    build_model, count_params, decode_checkpoint, encode_checkpoint, layer_prefix, load_checkpoint,
    loss_grad_check, param_specs, save_checkpoint, Component, DecoderModel, Memory, Method, ModelConfig,
};
use autocomplete::tensor::{PoolKind, Rng, Tensor};
use autocomplete::training::{train, TrainConfig};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn c1_theory_table() -> Outcome {
    let start = Instant::now();
    // (p(truth), EM, NLL) as published; the first row's NLL is printed as -9.9e-10
    let published = [
        (1.0, 1, 0.0),
        (0.9, 1, 0.11),
        (0.8, 1, 0.22),
        (0.7, 1, 0.36),
        (0.6, 1, 0.51),
        (0.51, 1, 0.67),
        (0.5, 0, 0.69),
        (0.49, 0, 0.71),
        (0.4, 0, 0.92),
        (0.3, 0, 1.2),
        (0.2, 0, 1.61),
        (0.1, 0, 2.3),
        (0.0, 0, 20.72),
    ];
    let table = em_ppl_theory_table();
    ensure!(table.len() == 17, "expected 17 rows, got {}", table.len());
    let mut worst: f64 = 0.0;
    for (row, &(p, em, nll)) in table.iter().zip(&published) {
        ensure!(row.truth == [0.0, 1.0], "truth {:?}", row.truth);
        ensure!((row.prediction[1] - p).abs() < 1e-12, "prediction {:?} vs p {p}", row.prediction);
        ensure!(row.exact_match == em, "p {p}: EM {} vs {em}", row.exact_match);
        worst = worst.max((row.nll - nll).abs());
    }
    ensure!(worst < 0.01, "largest NLL gap {worst}");
    // analytic cases: NLL = -ln max(p, 1e-9), EM = argmax (lowest id on ties) equals truth
    let analytic: [(usize, f64, u8); 4] = [(1, 1.0, 1), (1, 0.0, 0), (0, 0.5, 1), (1, 0.5, 0)];
    for (row, &(truth, p_truth, em)) in table[13..].iter().zip(&analytic) {
        let expected = -p_truth.max(1e-9).ln();
        ensure!(row.truth[truth] == 1.0, "{}: truth {:?}", row.case, row.truth);
        ensure!(row.exact_match == em, "{}: EM {}", row.case, row.exact_match);
        ensure!((row.nll - expected).abs() < 1e-9, "{}: NLL {} vs {expected}", row.case, row.nll);
    }
    let mut out = Vec::new();
    ok(autocomplete::cli::run(["autocomplete", "theory-table"], &mut &b""[..], &mut out))?;
    let text = String::from_utf8_lossy(&out);
    ensure!(text.lines().count() == 18 && text.contains("20.72"), "CLI output:\n{text}");
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!("13 sweep rows within {worst:.4} nats, 4 analytic cases exact, {elapsed:.1?}"))
}

fn c2_breakdown() -> Outcome {
    let start = Instant::now();
    let space = ArchitectureSpace::breakdown_space();
    let word = ok(breakdown_study(&ok(sample_architectures(&space, 100, BREAKDOWN_SEED, Granularity::Word))?))?;
    let chars = ok(breakdown_study(&ok(sample_architectures(
        &space,
        100,
        BREAKDOWN_SEED,
        Granularity::Character,
    ))?))?;
    let w = |c| word.mean_share(c);
    let c = |k| chars.mean_share(k);
    ensure!(w(Component::AdaEmb) > 77.0, "word AdaEmb {:.2}", w(Component::AdaEmb));
    ensure!(w(Component::Attn) < 14.0, "word Attn {:.2}", w(Component::Attn));
    ensure!(w(Component::Ffn) < 8.0, "word FFN {:.2}", w(Component::Ffn));
    ensure!(c(Component::AdaEmb) < 4.0, "char AdaEmb {:.2}", c(Component::AdaEmb));
    let non_emb = 100.0 - c(Component::AdaEmb);
    ensure!(non_emb > 90.0, "char non-embedding {non_emb:.2}");
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!(
        "word AdaEmb {:.2}% Attn {:.2}% FFN {:.2}%; char AdaEmb {:.2}%; {elapsed:.1?}",
        w(Component::AdaEmb),
        w(Component::Attn),
        w(Component::Ffn),
        c(Component::AdaEmb)
    ))
}

fn c3_param_counts() -> Outcome {
    // built models: a scaled-down space small enough to allocate
    let mut rng = Rng::new(3);
    let methods = [
        Method::Baseline,
        Method::WordSegment,
        Method::CharPoolSum,
        Method::CharPoolMean,
        Method::CharPoolMax,
    ];
    let mut built = 0;
    while built < 100 {
        let word = rng.below(2) == 0;
        let d_model = *rng.choose(&[8, 16, 24, 32]);
        let vocab_size = if word { 40 + rng.below(400) } else { 10 + rng.below(120) };
        let cfg = ModelConfig {
            n_layer: 1 + rng.below(4),
            n_head: *rng.choose(&[1, 2, 4]),
            d_head: *rng.choose(&[4, 8, 16]),
            d_model,
            d_embed: if rng.below(2) == 0 { d_model } else { *rng.choose(&[8, 16, 24, 32]) },
            d_inner: *rng.choose(&[8, 16, 48, 64]),
            vocab_size,
            granularity: if word { Granularity::Word } else { Granularity::Character },
            adaptive: word && rng.below(2) == 0,
            adaptive_cutoffs: vec![vocab_size / 4, vocab_size / 2],
            method: if word { Method::Baseline } else { *rng.choose(&methods) },
            max_words_per_seq: 4 + rng.below(20),
            ..ModelConfig::desk_char()
        };
        let cfg = ModelConfig {
            adaptive_cutoffs: if cfg.adaptive { cfg.adaptive_cutoffs.clone() } else { Vec::new() },
            ..cfg
        };
        if cfg.validate().is_err() {
            continue;
        }
        let model: DecoderModel = ok(build_model(&cfg, &mut Rng::new(built)))?;
        let enumerated: u64 = model.params().values().map(|p| p.tensor.numel() as u64).sum();
        let closed = count_params(&cfg).total();
        ensure!(enumerated == closed, "{cfg:?}: built {enumerated} vs closed form {closed}");
        built += 1;
    }
    // the published space, too large to allocate: closed form vs the layout
    let space = ArchitectureSpace::breakdown_space();
    let mut checked = 0;
    for g in [Granularity::Word, Granularity::Character] {
        for cfg in ok(sample_architectures(&space, 50, 17, g))? {
            let layout: u64 = param_specs(&cfg)
                .iter()
                .map(|s| s.shape.iter().product::<usize>() as u64)
                .sum();
            let closed = count_params(&cfg).total();
            ensure!(layout == closed, "{cfg:?}: layout {layout} vs closed form {closed}");
            checked += 1;
        }
    }
    Ok(format!("{built} built models and {checked} published-space layouts match exactly"))
}

fn c4_gradients() -> Outcome {
    let cfg = ModelConfig {
        n_layer: 2,
        n_head: 2,
        d_head: 8,
        d_model: 16,
        d_embed: 16,
        d_inner: 32,
        tgt_len: 6,
        mem_len: 6,
        eval_mem_len: 6,
        vocab_size: 12,
        dropout: 0.0,
        ..ModelConfig::desk_char()
    };
    let model: DecoderModel<f64> = ok(build_model(&cfg, &mut Rng::new(4)))?;
    let tokens: Vec<u32> = [4, 5, 3, 6, 7, 3, 8, 9, 4, 3, 10, 11, 5].to_vec();
    // a first segment fills the memory so its path is exercised
    let mut memory = Memory::default();
    ok(model.forward_with(&mut memory, &tokens[..6], cfg.mem_len))?;
    let err = ok(loss_grad_check(&model, &tokens[6..12], &tokens[7..13], &memory, 1e-5, None))?;
    ensure!(err < 1e-3, "max relative error {err:e}");
    Ok(format!("{} parameters, max relative error {err:.2e}", model.num_params()))
}

fn all_strings(alphabet: &[u32], max_len: usize) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for &c in alphabet {
                let mut t: Vec<u32> = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out.retain(|s| !s.is_empty());
    out
}

fn c5_pool_causality() -> Outcome {
    let space = CHAR_SPACE_ID;
    let alphabet = [space, 4, 5];
    let mut rng = Rng::new(5);
    let table = Tensor::from_fn(&[6, 4], |_| rng.normal(0.0, 1.0) as f32);
    let rows_for = |s: &[u32]| {
        let d = table.cols();
        Tensor::from_fn(&[s.len(), d], |i| table.at(s[i / d] as usize, i % d))
    };
    let mut comparisons = 0u64;
    let mut violations = 0u64;
    for s in all_strings(&alphabet, 6) {
        for kind in [PoolKind::Sum, PoolKind::Mean, PoolKind::Max] {
            let base = ok(char_pool_embed(&s, &rows_for(&s), kind, space))?;
            for later in 1..s.len() {
                for &c in &alphabet {
                    if c == s[later] {
                        continue;
                    }
                    let mut p = s.clone();
                    p[later] = c;
                    let pert = ok(char_pool_embed(&p, &rows_for(&p), kind, space))?;
                    for t in 0..later {
                        comparisons += 1;
                        let same = base
                            .row(t)
                            .iter()
                            .zip(pert.row(t))
                            .all(|(a, b)| a.to_bits() == b.to_bits());
                        violations += u64::from(!same);
                    }
                }
            }
        }
    }
    ensure!(violations == 0, "{violations} violations in {comparisons} comparisons");
    Ok(format!("{comparisons} prefix comparisons over 1092 strings, 0 violations"))
}

fn c6_transfer() -> Outcome {
    let mut cases = 0;
    for (target_layers, depth_factor) in [(4, 2), (6, 2), (10, 2), (3, 3)] {
        let target_cfg = ModelConfig {
            n_layer: target_layers,
            vocab_size: 30,
            ..ModelConfig::desk_char()
        };
        let source_cfg = ModelConfig {
            n_layer: target_layers * depth_factor,
            ..ModelConfig::desk_word(200)
        };
        let source: DecoderModel = ok(build_model(&source_cfg, &mut Rng::new(60)))?;
        for percent in TRANSFER_PERCENTS {
            let fresh: DecoderModel = ok(build_model(&target_cfg, &mut Rng::new(61)))?;
            let mut target = fresh.clone();
            let plan = ok(TransferPlan::new(&source_cfg, &target_cfg, percent, None))?;
            let n = transferred_layer_count(percent, target_layers);
            let expected_n = ((percent as usize * target_layers) / 100).max(1);
            ensure!(n == expected_n, "{percent}% of {target_layers}: {n} layers");
            ok(transfer_layers(&mut target, &source, &plan))?;
            let mapped: Vec<String> = (0..n).map(|l| format!("{}.", layer_prefix(l))).collect();
            for (name, p) in target.params() {
                let bits = |t: &Tensor<f32>| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
                if mapped.iter().any(|m| name.starts_with(m.as_str())) {
                    let src = source.param(name).ok_or(format!("source lacks {name}"))?;
                    ensure!(bits(&p.tensor) == bits(src), "{name} differs from source at {percent}%");
                } else {
                    let init = fresh.param(name).expect("same config");
                    ensure!(bits(&p.tensor) == bits(init), "{name} changed at {percent}%");
                }
            }
            cases += 1;
        }
    }
    let base = ModelConfig {
        n_layer: 4,
        ..ModelConfig::desk_char()
    };
    let deeper = ModelConfig {
        n_layer: 8,
        ..ModelConfig::desk_word(200)
    };
    for bad in [
        ModelConfig { d_model: 64, d_embed: 64, ..deeper.clone() },
        ModelConfig { d_inner: 128, ..deeper.clone() },
        ModelConfig { n_head: 4, d_head: 8, ..deeper.clone() },
    ] {
        ensure!(
            TransferPlan::new(&bad, &base, 50, None).is_err(),
            "mismatched plan accepted: {bad:?}"
        );
        let src: DecoderModel = ok(build_model(&bad, &mut Rng::new(1)))?;
        let mut tgt: DecoderModel = ok(build_model(&base, &mut Rng::new(2)))?;
        let plan = ok(TransferPlan::new(&deeper, &base, 50, None))?;
        ensure!(transfer_layers(&mut tgt, &src, &plan).is_err(), "mismatched copy accepted");
    }
    Ok(format!("{cases} plans bitwise-correct, 3 shape mismatches rejected"))
}

/// Random next-character distributions keyed on the context. Words end
/// with probability `q`, and always by their sixth character: finishing
/// the prompt's word plus k words then needs at most 6 + 7k tokens, inside
/// the 15k cap, so only the word-count rule can stop decoding.
fn stub(case: u64, vocab_size: usize, q: f64) -> impl Fn(&[u32]) -> Vec<f64> {
    move |ctx: &[u32]| {
        let mut h = DefaultHasher::new();
        (case, ctx).hash(&mut h);
        let mut rng = Rng::new(h.finish());
        let mut dist: Vec<f64> = (0..vocab_size).map(|_| rng.uniform()).collect();
        for special in 0..3 {
            dist[special] = 0.0;
        }
        let word_len = ctx.iter().rev().take_while(|&&t| t != CHAR_SPACE_ID).count();
        if word_len >= 6 || (word_len > 0 && rng.uniform() < q) {
            dist[CHAR_SPACE_ID as usize] = 2.0;
        } else {
            dist[CHAR_SPACE_ID as usize] *= 0.1;
        }
        let total: f64 = dist.iter().sum();
        dist.iter().map(|p| p / total).collect()
    }
}

fn c7_decoding() -> Outcome {
    let vocab = ok(Vocabulary::build("abcdefghijklmnopqrstuvwxyz ", Granularity::Character, None))?;
    ensure!(vocab.space_id() == Some(CHAR_SPACE_ID), "space id {:?}", vocab.space_id());
    let mut rng = Rng::new(7);
    for case in 0..1000u64 {
        let q = 0.1 + 0.4 * rng.uniform();
        let model = FnModel::new(stub(case, vocab.len(), q));
        let prompt_len = 1 + rng.below(12);
        let mut prompt: Vec<u32> = (0..prompt_len).map(|_| 4 + rng.below(vocab.len() - 4) as u32).collect();
        if rng.below(2) == 0 {
            prompt.push(CHAR_SPACE_ID);
        }
        let k = 1 + rng.below(5);
        let greedy_opts = DecodeOptions {
            k_words: k,
            ..DecodeOptions::default()
        };
        let g = ok(greedy_suggest(&model, &vocab, &prompt, &greedy_opts))?;
        ensure!(g.words.len() == k, "case {case}: {} words for k={k}: {:?}", g.words.len(), g.words);
        ensure!(
            g.stopped_by == StopReason::WordCount,
            "case {case}: stopped by {:?} after {:?} (k={k}, prompt {:?})",
            g.stopped_by,
            vocab.detokenize(&g.raw_tokens),
            vocab.detokenize(&prompt)
        );
        ensure!(g.words.iter().all(|w| !w.is_empty() && !w.contains(' ')), "case {case}: {:?}", g.words);
        let b = ok(beam_suggest(
            &model,
            &vocab,
            &prompt,
            &DecodeOptions {
                decoder: Decoder::Beam,
                beam_size: 1,
                ..greedy_opts
            },
        ))?;
        ensure!(b.raw_tokens == g.raw_tokens, "case {case}: beam-1 {:?} vs greedy {:?}", b.raw_tokens, g.raw_tokens);
    }

    // the published beam comparison settings on a briefly trained model
    let text = synthetic_corpus(8, 40_000);
    let vocab = ok(Vocabulary::build(&text, Granularity::Character, None))?;
    let cfg = ModelConfig {
        vocab_size: vocab.len(),
        ..ModelConfig::desk_char()
    };
    let mut model: DecoderModel = ok(build_model(&cfg, &mut Rng::new(8)))?;
    let tc = TrainConfig {
        max_steps: 20,
        warmup_steps: 2,
        ..TrainConfig::desk_for(&cfg)
    };
    ok(train(&mut model, &vocab.encode_corpus(&text), &tc, None))?;
    let mut summaries = Vec::new();
    for cp in [0.05, 0.2] {
        let mut prompts = ok(make_prompts(&text, cp, 3, &vocab))?;
        prompts.truncate(8);
        let opts = DecodeOptions {
            decoder: Decoder::Beam,
            beam_size: 5,
            ..DecodeOptions::default()
        };
        let records = ok(evaluate_prompts(&model, &vocab, &prompts, &opts))?;
        let s = ok(summarize(&records, 3, OverallWeighting::Linear))?;
        ensure!(s.n_prompts == prompts.len() && !prompts.is_empty(), "no prompts at {cp}");
        summaries.push(format!("{cp}: EM {:.1} PM {:.1}", s.em_overall, s.pm_overall));
    }
    Ok(format!("1000 stub cases exact, beam-1 == greedy; beam 5 ran ({})", summaries.join(", ")))
}

fn oracle_em(pred: &[String], truth: &[String], n: usize) -> u8 {
    if pred.len() < n || truth.len() < n {
        return 0;
    }
    u8::from(pred[..n].join("\u{0}") == truth[..n].join("\u{0}"))
}

fn oracle_pm(pred: &[String], truth: &[String], n: usize) -> f64 {
    let mut hit = 0usize;
    let mut total = 0usize;
    for i in 0..n.min(truth.len()) {
        let t: Vec<char> = truth[i].chars().collect();
        let p: Vec<char> = pred.get(i).map(|w| w.chars().collect()).unwrap_or_default();
        for j in 0..t.len() {
            total += 1;
            if j < p.len() && p[j] == t[j] {
                hit += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

fn c8_metrics() -> Outcome {
    let pred = ["the", "west", "or"];
    let truth = ["the", "west", "of"];
    let em: Vec<u8> = (1..=3).map(|n| exact_match_at_n(&pred, &truth, n)).collect();
    ensure!(em == [1, 1, 0], "EM {em:?}");
    let pm3 = partial_match_at_n(&pred, &truth, 3);
    ensure!((pm3 - 8.0 / 9.0).abs() < 1e-12, "PM@3 {pm3}");

    let mut rng = Rng::new(8);
    let letters = ['a', 'b', 'c', 'é'];
    let word = |rng: &mut Rng| -> String { (0..rng.below(5)).map(|_| *rng.choose(&letters)).collect() };
    let mut pm_worst: f64 = 0.0;
    for case in 0..1000 {
        let truth: Vec<String> = (0..1 + rng.below(5)).map(|_| word(&mut rng)).filter(|w| !w.is_empty()).collect();
        let mut pred: Vec<String> = (0..rng.below(6)).map(|_| word(&mut rng)).collect();
        if rng.below(3) == 0 {
            pred = truth.clone();
            if let Some(w) = pred.last_mut() {
                w.push('a');
            }
        }
        for n in 1..=5 {
            let em = exact_match_at_n(&pred, &truth, n);
            ensure!(em == oracle_em(&pred, &truth, n), "case {case} n {n}: EM {em} for {pred:?} vs {truth:?}");
            let pm = partial_match_at_n(&pred, &truth, n);
            pm_worst = pm_worst.max((pm - oracle_pm(&pred, &truth, n)).abs());
        }
    }
    ensure!(pm_worst <= 1e-12, "PM differs by {pm_worst:e}");
    Ok(format!("near-miss pair EM 1,1,0 PM@3 8/9; 1000 random cases, PM gap {pm_worst:.1e}"))
}

fn c9_oov() -> Outcome {
    let check = |train: &str, test: &str, expected: &[(usize, usize, usize)]| -> Result<(), String> {
        let r = ok(oov_ngram_report(train, test, 3))?;
        for &(n, oov, total) in expected {
            let got = r.counts.get(&n).copied();
            ensure!(got == Some((oov, total)), "{train:?}/{test:?} n={n}: {got:?} vs ({oov}, {total})");
            let pct = 100.0 * oov as f64 / total as f64;
            ensure!((r.per_n[&n] - pct).abs() < 1e-12, "n={n}: {} vs {pct}", r.per_n[&n]);
        }
        Ok(())
    };
    // unigrams {a,b,d} with d unseen; bigrams {a b, b d}; trigram {a b d}
    check("a b c", "a b d", &[(1, 1, 3), (2, 1, 2), (3, 1, 1)])?;
    let r = ok(oov_ngram_report("a b c", "a b d", 3))?;
    ensure!(format!("{:.2}", r.per_n[&1]) == "33.33", "unigram {}", r.per_n[&1]);
    // repeats count once: unigrams {x,y,z}; bigrams {x y, y z, z x}; trigrams {x y z, y z x, z x y}
    check("x y x y", "x y z x y", &[(1, 1, 3), (2, 2, 3), (3, 3, 3)])?;
    check("the cat sat on the mat", "the mat sat", &[(1, 0, 3), (2, 1, 2), (3, 1, 1)])?;
    let text = synthetic_corpus(9, 20_000);
    let same = ok(oov_ngram_report(&text, &text, 3))?;
    ensure!(same.per_n.len() == 3 && same.per_n.values().all(|&p| p == 0.0), "identical text: {:?}", same.per_n);
    Ok("hand-enumerated micro-corpora exact (33.33% unigram case), identical text 0%".into())
}

fn c10_pipeline() -> Outcome {
    let corpus = synthetic_corpus(10, 300_000);
    ensure!(corpus.len() <= 1 << 20, "corpus {} bytes", corpus.len());
    let settings = PipelineSettings::preset(Preset::Smoke, 10);
    let dirs = [ok(tempfile::tempdir())?, ok(tempfile::tempdir())?];
    let start = Instant::now();
    let a = ok(run_pipeline(&corpus, &settings, dirs[0].path()))?;
    let first = start.elapsed();
    let b = ok(run_pipeline(&corpus, &settings, dirs[1].path()))?;
    ensure!(first < Duration::from_secs(600), "one run took {first:?}");

    ensure!(a.variants == b.variants, "reports differ between runs with one seed");
    ensure!(a.variants.len() == Variant::ALL.len(), "{} variants", a.variants.len());
    for v in &a.variants {
        ensure!(
            v.loss_decreased(),
            "{}: last-10 mean {:.4} not below first-10 mean {:.4}",
            v.variant.name(),
            v.last_loss_mean,
            v.first_loss_mean
        );
        ensure!(v.metrics.pm_overall >= v.metrics.em_overall, "{}: PM < EM", v.variant.name());
        let gap = v.params.abs_diff(a.budget) as f64 / a.budget as f64;
        let extra = v.added_params as f64 / a.budget as f64;
        ensure!(gap <= 0.02 + extra, "{}: {} params vs budget {}", v.variant.name(), v.params, a.budget);
    }
    let seg = a.variant(Variant::CharWordSegment).expect("trained");
    ensure!(seg.added_params == (settings.max_words_per_seq * settings.d_model) as u64, "segment params {}", seg.added_params);
    ensure!(a.variant(Variant::CharTransfer).expect("trained").added_params == 0, "transfer adds params");

    let mut files = vec![
        "summary.json".to_string(),
        "table2.csv".into(),
        "context_sweep.csv".into(),
        "greedy_vs_beam.csv".into(),
        "em_vs_n.csv".into(),
        "oov_cutoff.csv".into(),
        "transfer_plan.json".into(),
    ];
    for v in Variant::ALL {
        files.push(format!("checkpoints/{}.ckpt", v.name()));
        files.push(format!("traces/{}.csv", v.name()));
        files.push(format!("records/{}.csv", v.name()));
    }
    for f in &files {
        let x = ok(fs::read(dirs[0].path().join(f)))?;
        let y = ok(fs::read(dirs[1].path().join(f)))?;
        ensure!(x == y, "{f} differs between runs with one seed");
    }
    Ok(format!(
        "{} variants, loss fell for all, {} report files identical across runs, {:.0?} per run",
        a.variants.len(),
        files.len(),
        first
    ))
}

fn c11_checkpoint() -> Outcome {
    let dir = ok(tempfile::tempdir())?;
    let mut configs: Vec<ModelConfig> = [
        Method::Baseline,
        Method::WordSegment,
        Method::CharPoolSum,
        Method::CharPoolMean,
        Method::CharPoolMax,
    ]
    .into_iter()
    .map(|method| ModelConfig {
        method,
        ..ModelConfig::desk_char()
    })
    .collect();
    configs.push(ModelConfig {
        adaptive: true,
        adaptive_cutoffs: vec![50, 200],
        ..ModelConfig::desk_word(400)
    });
    for (i, cfg) in configs.iter().enumerate() {
        let mut model: DecoderModel = ok(build_model(cfg, &mut Rng::new(11 + i as u64)))?;
        let path = dir.path().join(format!("m{i}.ckpt"));
        ok(save_checkpoint(&model, &path))?;
        let mut loaded = ok(load_checkpoint(&path))?;
        let again = ok(decode_checkpoint(&ok(encode_checkpoint(&loaded))?))?;
        ensure!(ok(encode_checkpoint(&again))? == ok(fs::read(&path))?, "re-encoding changed bytes");
        let input: Vec<u32> = (0..cfg.tgt_len).map(|t| ((t * 7 + 4) % cfg.vocab_size) as u32).collect();
        for use_memory in [false, true, true] {
            let x = ok(model.forward(&input, use_memory))?;
            let y = ok(loaded.forward(&input, use_memory))?;
            let same = x.data().iter().zip(y.data()).all(|(a, b)| a.to_bits() == b.to_bits());
            ensure!(same && x.shape() == y.shape(), "{:?}: forward differs after reload", cfg.method);
        }
    }
    Ok(format!("{} configs: forward bitwise identical after save/load", configs.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("metric theory table", c1_theory_table),
        ("parameter breakdown shares", c2_breakdown),
        ("parameter count exactness", c3_param_counts),
        ("gradient correctness", c4_gradients),
        ("character pooling causality", c5_pool_causality),
        ("layer transfer", c6_transfer),
        ("decoding contract", c7_decoding),
        ("metric equivalence", c8_metrics),
        ("OOV report", c9_oov),
        ("desk-scale training pipeline", c10_pipeline),
        ("checkpoint round trip", c11_checkpoint),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
