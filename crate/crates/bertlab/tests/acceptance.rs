//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs without the libtest harness so the lines always print.

use std::collections::BTreeMap;
use std::time::Instant;

use bertlab::checkpoint::Checkpoint;
use bertlab::experiment::{run_experiment, ExperimentSpec};
use bertlab::formats::{write_corpus, write_labeled};
use bertlab_core::encoder::{Pass, TokenBatch};
use bertlab_core::finetune::{evaluate, finetune_run, ClassifierHead, FinetuneConfig, LabeledSet};
use bertlab_core::gradcheck::{check_store, relative_error};
use bertlab_core::parity::{check_parity, count_params};
use bertlab_core::pretrain::*;
use bertlab_core::synthetic::{separable_set, TopicCorpus};
use bertlab_core::tape::{Graph, Var};
use bertlab_core::variants::{build, EncoderModel, Tier, VariantConfig, VariantKind};
use bertlab_core::vocab::Vocab;
use bertlab_core::{ParamStore, SeedRng, Tensor};

const H: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-3;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random(shape: &[usize], rng: &mut SeedRng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.normal()).collect()).unwrap()
}

/// Max relative error between tape gradients and central differences of
/// `sum(f(inputs) * w)` with respect to every input element.
fn op_check(inputs: &[Tensor], seed: u64, f: &dyn Fn(&mut Graph, &[Var]) -> Var) -> f64 {
    let mut rng = SeedRng::new(seed);
    let out_shape = {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
        let y = f(&mut g, &vars);
        g.shape(y).to_vec()
    };
    let weights = random(&out_shape, &mut rng);
    let eval = |xs: &[Tensor]| -> (f64, Graph, Var, Vec<Var>) {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.variable(t.clone())).collect();
        let y = f(&mut g, &vars);
        let w = g.constant(weights.clone());
        let p = g.mul(y, w).unwrap();
        let l = g.sum(p);
        (g.value(l).data()[0], g, l, vars)
    };
    let (_, g, l, vars) = eval(inputs);
    let grads = g.backward(l).unwrap();
    let mut worst = 0.0f64;
    let mut probe = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).map(|t| t.data().to_vec()).unwrap_or_else(|| vec![0.0; inputs[i].len()]);
        for k in 0..inputs[i].len() {
            let orig = inputs[i].data()[k];
            probe[i].data_mut()[k] = orig + H;
            let up = eval(&probe).0;
            probe[i].data_mut()[k] = orig - H;
            let down = eval(&probe).0;
            probe[i].data_mut()[k] = orig;
            worst = worst.max(relative_error(analytic[k], (up - down) / (2.0 * H)));
        }
    }
    worst
}

fn op_suite() -> Vec<(&'static str, f64)> {
    let mut rng = SeedRng::new(100);
    let mut r = |shape: &[usize]| random(shape, &mut rng);
    let mask_rng = SeedRng::new(7);
    let cases: Vec<(&'static str, Vec<Tensor>, Box<dyn Fn(&mut Graph, &[Var]) -> Var>)> = vec![
        ("add", vec![r(&[3, 4]), r(&[4])], Box::new(|g, v| g.add(v[0], v[1]).unwrap())),
        ("sub", vec![r(&[2, 3, 4]), r(&[3, 1])], Box::new(|g, v| g.sub(v[0], v[1]).unwrap())),
        ("mul", vec![r(&[2, 3, 4]), r(&[1, 3, 4])], Box::new(|g, v| g.mul(v[0], v[1]).unwrap())),
        ("scale", vec![r(&[5])], Box::new(|g, v| g.scale(v[0], -2.5))),
        ("matmul", vec![r(&[4, 5]), r(&[5, 3])], Box::new(|g, v| g.matmul(v[0], v[1]).unwrap())),
        ("batched matmul", vec![r(&[2, 3, 4, 5]), r(&[5, 2])], Box::new(|g, v| g.matmul(v[0], v[1]).unwrap())),
        ("permute", vec![r(&[2, 3, 4])], Box::new(|g, v| g.permute(v[0], &[2, 0, 1]).unwrap())),
        ("transpose", vec![r(&[3, 5])], Box::new(|g, v| g.transpose(v[0]).unwrap())),
        ("reshape", vec![r(&[2, 6])], Box::new(|g, v| g.reshape(v[0], &[3, 4]).unwrap())),
        ("concat", vec![r(&[2, 3]), r(&[2, 2])], Box::new(|g, v| g.concat(&[v[0], v[1]], 1).unwrap())),
        ("slice", vec![r(&[2, 5, 3])], Box::new(|g, v| g.slice(v[0], 1, 1, 3).unwrap())),
        ("gather", vec![r(&[6, 4])], Box::new(|g, v| g.gather(v[0], &[5, 0, 5, 2]).unwrap())),
        ("softmax", vec![r(&[3, 6])], Box::new(|g, v| g.softmax(v[0], 1).unwrap())),
        (
            "layer_norm",
            vec![r(&[3, 5]), r(&[5]), r(&[5])],
            Box::new(|g, v| g.layer_norm(v[0], v[1], v[2], 1e-12).unwrap()),
        ),
        ("gelu", vec![r(&[10])], Box::new(|g, v| g.gelu(v[0]))),
        ("tanh", vec![r(&[10])], Box::new(|g, v| g.tanh(v[0]))),
        ("sigmoid", vec![r(&[10])], Box::new(|g, v| g.sigmoid(v[0]))),
        ("relu", vec![r(&[10])], Box::new(|g, v| g.relu(v[0]))),
        (
            "dropout",
            vec![r(&[4, 6])],
            Box::new(move |g, v| g.dropout(v[0], 0.3, Some(&mut mask_rng.clone())).unwrap()),
        ),
        ("sum", vec![r(&[3, 4])], Box::new(|g, v| g.sum(v[0]))),
        ("mean", vec![r(&[3, 4])], Box::new(|g, v| g.mean(v[0]))),
        ("cross_entropy", vec![r(&[4, 5])], Box::new(|g, v| g.cross_entropy(v[0], &[0, 4, 2, 2]).unwrap())),
    ];
    cases
        .into_iter()
        .enumerate()
        .map(|(i, (name, inputs, f))| (name, op_check(&inputs, 200 + i as u64, &*f)))
        .collect()
}

fn toy_corpus(sentences: usize, seed: u64) -> (Vec<Vec<String>>, Vocab) {
    let docs = TopicCorpus::default().generate(sentences, &mut SeedRng::new(seed));
    let vocab = Vocab::build(docs.iter().flatten().map(String::as_str), 1000, 1).unwrap();
    (docs, vocab)
}

fn generator(docs: &[Vec<String>], vocab: &Vocab, len: usize, masking: MaskingConfig) -> ExampleGenerator {
    ExampleGenerator::new(docs.iter().map(|d| d.iter()), vocab, len, masking).unwrap()
}

fn criterion_1() -> Outcome {
    let ops = op_suite();
    let (worst_op, op_err) = ops.iter().copied().fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let mut failures: Vec<String> = ops.iter().filter(|(_, e)| *e >= GRAD_TOL).map(|(n, e)| format!("{n} {e:.2e}")).collect();

    let (docs, vocab) = toy_corpus(200, 1);
    let masking = MaskingConfig {
        mask_rate: 0.5,
        ..MaskingConfig::default()
    };
    let mut variant_worst = 0.0f64;
    for kind in VariantKind::IMPLEMENTED {
        let config = VariantConfig::tiny(kind);
        assert_eq!((config.vocab, config.max_len, config.hidden, config.heads, config.layers), (100, 8, 16, 2, 2));
        let model = build(&config, &mut SeedRng::new(1)).unwrap();
        let mut rng = SeedRng::new(2);
        let mut gen = generator(&docs, &vocab, 8, masking);
        let examples: Vec<_> = (0..2).map(|_| gen.next_example(&mut rng).unwrap()).collect();
        let batch = PretrainBatch::from_examples(&examples).unwrap();
        let run = |s: &ParamStore| {
            let mut pass = Pass::eval();
            let loss = pretrain_loss_with(&model, s, &mut pass, &batch, true).unwrap();
            (pass.g.value(loss.total).data()[0], pass.g, loss.total)
        };
        let (_, g, loss) = run(&model.store);
        let grads = g.backward(loss).unwrap().for_store(&model.store);
        let report = check_store(&model.store, &grads, H, 1, |s| Ok(run(s).0)).unwrap();
        variant_worst = variant_worst.max(report.max_rel_err);
        if report.max_rel_err >= GRAD_TOL {
            failures.push(format!("{kind} {:.2e} at {:?}", report.max_rel_err, report.worst));
        }
    }
    ensure(
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "{} ops worst {worst_op} {op_err:.1e}; 8 variants, every parameter, worst {variant_worst:.1e}",
                ops.len()
            )
        } else {
            failures.join("; ")
        },
    )
}

fn eval_forward(model: &EncoderModel, batch: &TokenBatch) -> (Tensor, Tensor) {
    let mut pass = Pass::eval();
    let out = model.forward(&mut pass, batch).unwrap();
    (pass.g.value(out.sequence).clone(), pass.g.value(out.pooled).clone())
}

fn criterion_2() -> Outcome {
    let config = VariantConfig::sized(VariantKind::Origin, 3, 16, 2, 100, 8);
    let origin = build(&config, &mut SeedRng::new(5)).unwrap();
    let mut rng = SeedRng::new(6);
    let ids = (0..3 * 8).map(|_| 5 + rng.below(95)).collect();
    let valid = (0..24).map(|i| i % 8 < 6 || i < 8).collect();
    let batch = TokenBatch::new(3, 8, ids, vec![0; 24], valid).unwrap();
    let (seq, pooled) = eval_forward(&origin, &batch);
    let mut diffs = Vec::new();
    for kind in [VariantKind::Rnn, VariantKind::RnnIn, VariantKind::Dense] {
        let mut model = build(&config.with_kind(kind), &mut SeedRng::new(9)).unwrap();
        if model.load_matching(&origin.store) != origin.store.len() {
            return Err(format!("{kind} does not share every ORIGIN tensor"));
        }
        for block in model.lstm_blocks() {
            for id in block.params() {
                model.store.get_mut(id).data_mut().fill(0.0);
            }
        }
        for (t, id) in model.dense.clone().into_iter().enumerate() {
            let rows = (t + 1) * 16;
            let mut w = vec![0.0; rows * 16];
            (0..16).for_each(|i| w[(rows - 16 + i) * 16 + i] = 1.0);
            *model.store.get_mut(id) = Tensor::new(&[rows, 16], w).unwrap();
        }
        let (s, p) = eval_forward(&model, &batch);
        diffs.push((kind, s.max_abs_diff(&seq).max(p.max_abs_diff(&pooled))));
    }
    let ok = diffs.iter().all(|(_, d)| *d < 1e-9);
    ensure(ok, diffs.iter().map(|(k, d)| format!("{k} {d:.1e}")).collect::<Vec<_>>().join(", "))
}

/// Trainable scalars from the architecture definitions alone.
fn closed_form(c: &VariantConfig) -> usize {
    let (n, v, l, t) = (c.hidden, c.vocab, c.max_len, c.layers);
    let embeddings = v * n + l * n + 2 * n + 2 * n;
    let attention = 4 * n * n + 4 * n;
    let ffn = n * 4 * n + 4 * n + 4 * n * n + n;
    let norms = 4 * n;
    let pooler = n * n + n;
    let heads = v + 2 * n + 2;
    let base = embeddings + t * (attention + ffn + norms) + pooler + heads;
    let h = c.lstm_hidden;
    let lstm = 4 * h * (n + h + 1) + if h == n { 0 } else { h * n };
    let head_dim = n / c.heads;
    match c.kind {
        VariantKind::TextCnn => base + n * n + n,
        VariantKind::Ngram => base + 2 * n * n,
        VariantKind::Dense => base + n * n * t * (t - 1) / 2,
        VariantKind::Rte => base + t * 2 * (2 * c.relative_clip + 1) * head_dim - l * n,
        VariantKind::Rnn => base + lstm,
        VariantKind::RnnIn => base + t * lstm,
        _ => base,
    }
}

fn criterion_3() -> Outcome {
    let mut baselines = BTreeMap::new();
    for tier in [Tier::Base, Tier::Large] {
        let model = build(&VariantConfig::baseline(tier, 1000), &mut SeedRng::new(0)).unwrap();
        baselines.insert(tier, count_params(&model).total);
    }
    let mut counts = Vec::new();
    let mut mismatches = Vec::new();
    for kind in VariantKind::IMPLEMENTED {
        let config = VariantConfig::preset(kind, 1000);
        let count = count_params(&build(&config, &mut SeedRng::new(0)).unwrap()).total;
        if count != closed_form(&config) {
            mismatches.push(format!("{kind}: built {count} vs oracle {}", closed_form(&config)));
        }
        counts.push((kind, count));
    }
    let verdicts = check_parity(&counts, &baselines).map_err(|e| e.to_string())?;
    let worst = verdicts.iter().max_by(|a, b| a.ratio.total_cmp(&b.ratio)).unwrap();
    let failing: Vec<String> = verdicts.iter().filter(|v| !v.pass).map(|v| format!("{} {:.3}", v.kind, v.ratio)).collect();
    ensure(
        mismatches.is_empty() && failing.is_empty(),
        format!(
            "8 presets at V=1000 match the closed form{}; worst deviation {} {:.1}%{}",
            if mismatches.is_empty() { String::new() } else { format!(" EXCEPT {}", mismatches.join(", ")) },
            worst.kind,
            worst.ratio * 100.0,
            if failing.is_empty() { String::new() } else { format!("; over budget: {}", failing.join(", ")) }
        ),
    )
}

fn criterion_4() -> Outcome {
    let (docs, vocab) = toy_corpus(1000, 3);
    let mut gen = generator(&docs, &vocab, 24, MaskingConfig::default());
    let mut rng = SeedRng::new(4);
    let (mut candidates, mut selected, mut actions, mut special_hits) = (0usize, 0usize, [0usize; 3], 0usize);
    while candidates < 100_000 {
        let ex = gen.next_example(&mut rng).unwrap();
        candidates += ex.candidate_count();
        selected += ex.mlm_positions.len();
        let seps = ex.sep_positions();
        special_hits += ex.mlm_positions.iter().filter(|&&p| p == 0 || seps.contains(&p)).count();
        ex.mlm_actions.iter().for_each(|&a| actions[a as usize] += 1);
    }
    let rate = selected as f64 / candidates as f64;
    let split = actions.map(|a| a as f64 / selected as f64);
    let mut nsp_rng = SeedRng::new(5);
    let is_next = (0..10_000).filter(|_| gen.next_example(&mut nsp_rng).unwrap().nsp_label == NspLabel::IsNext).count();
    let balance = is_next as f64 / 10_000.0;
    let ok = (rate - 0.15).abs() <= 0.01
        && (split[0] - 0.8).abs() <= 0.02
        && (split[1] - 0.1).abs() <= 0.02
        && (split[2] - 0.1).abs() <= 0.02
        && (balance - 0.5).abs() <= 0.02
        && special_hits == 0;
    ensure(
        ok,
        format!(
            "{candidates} candidates, rate {rate:.4}, split {:.3}/{:.3}/{:.3}, NSP is-next {balance:.4}, special positions hit {special_hits}",
            split[0], split[1], split[2]
        ),
    )
}

fn criterion_5() -> Outcome {
    let (len, clip) = (12usize, 4usize);
    let mut config = VariantConfig::sized(VariantKind::Rte, 2, 16, 2, 100, len);
    config.relative_clip = clip;
    let model = build(&config, &mut SeedRng::new(8)).unwrap();
    let batch = TokenBatch::from_ids(1, len, vec![17; len]).unwrap();
    let mut pass = Pass::eval();
    let out = model.forward(&mut pass, &batch).unwrap();
    let logits = pass.g.value(out.traces[0].logits);
    let offset = |i: usize, j: usize| (j as isize - i as isize).clamp(-(clip as isize), clip as isize);
    let mut worst = 0.0f64;
    let mut pairs = 0usize;
    for h in 0..config.heads {
        for i in 0..len {
            for j in 0..len {
                for i2 in 0..len {
                    for j2 in 0..len {
                        if offset(i, j) == offset(i2, j2) {
                            worst = worst.max((logits.at(&[0, h, i, j]) - logits.at(&[0, h, i2, j2])).abs());
                            pairs += 1;
                        }
                    }
                }
            }
        }
    }
    // the logits must actually vary with the offset, or the check is vacuous
    let spread = (logits.at(&[0, 0, 0, 0]) - logits.at(&[0, 0, 0, clip])).abs();
    ensure(worst <= 1e-9 && spread > 1e-12, format!("{pairs} equal-offset pairs, max difference {worst:.1e}, offset spread {spread:.1e}"))
}

fn criterion_6() -> Outcome {
    let (docs, vocab) = toy_corpus(1000, 1);
    if docs.iter().map(Vec::len).sum::<usize>() != 1000 {
        return Err("toy corpus size".into());
    }
    let uniform = (vocab.len() as f64).ln();
    let mut lines = Vec::new();
    let mut ok = vocab.len() >= 100;
    let items = separable_set(64, 6, &mut SeedRng::new(77));
    let sep_vocab_ok = items.iter().all(|(s, _)| s.chars().all(|c| vocab.char_id(c) != bertlab_core::vocab::UNK));
    ok &= sep_vocab_ok;
    for kind in VariantKind::IMPLEMENTED {
        let started = Instant::now();
        let config = VariantConfig::sized(kind, 2, 32, 2, vocab.len(), 24);
        let mut model = build(&config, &mut SeedRng::new(2)).unwrap();
        let mut gen = generator(&docs, &vocab, 24, MaskingConfig::default());
        let run = PretrainConfig {
            steps: 500,
            batch_size: 32,
            learning_rate: 2e-3,
            with_nsp: true,
            checkpoint_every: None,
        };
        let log = pretrain_run(&mut model, &mut gen, &run, &mut SeedRng::new(3), &mut Silent).unwrap();
        let (first, last) = (log.mean_total(0..50), log.mean_total(450..500));
        let mlm0 = log.records[0].mlm;
        let init_ok = (mlm0 - uniform).abs() <= 0.15 * uniform;
        let progress_ok = last <= 0.7 * first;

        let set = LabeledSet::encode(&vocab, &items, 24, 2).unwrap();
        let mut head = ClassifierHead::new(32, 2, &mut SeedRng::new(4)).unwrap();
        let ft = FinetuneConfig {
            epochs: 1000,
            batch_size: 16,
            learning_rate: 1e-3,
            max_steps: Some(300),
        };
        let outcome = finetune_run(&mut model, &mut head, &set, &set, &ft, &mut SeedRng::new(5)).unwrap();
        let accuracy = evaluate(&outcome.best_model, &outcome.best_head, &set).unwrap();
        let first_perfect = outcome.log.iter().find(|r| r.dev_accuracy >= 0.99).map(|r| r.epoch * set.len().div_ceil(16));
        let ft_ok = accuracy >= 0.99 && outcome.steps <= 300;
        ok &= init_ok && progress_ok && ft_ok;
        lines.push(format!(
            "{kind}: loss {first:.2}->{last:.2} ({:.2}), init mlm {mlm0:.2}/ln V {uniform:.2}, finetune {:.0}% (>=99% by step {}) [{:.0}s]",
            last / first,
            accuracy * 100.0,
            first_perfect.map_or("-".into(), |s| s.to_string()),
            started.elapsed().as_secs_f64()
        ));
    }
    let detail = format!("V={}\n    {}", vocab.len(), lines.join("\n    "));
    ensure(ok, detail)
}

fn criterion_7() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let mut rng = SeedRng::new(21);
    write_corpus(&d.join("corpus.txt"), &TopicCorpus::default().generate(200, &mut rng)).unwrap();
    write_labeled(&d.join("train.tsv"), &separable_set(32, 6, &mut rng)).unwrap();
    write_labeled(&d.join("dev.tsv"), &separable_set(16, 6, &mut rng)).unwrap();
    let names: Vec<String> = VariantKind::TABLE_ORDER.iter().map(|k| format!("\"{}\"", k.name())).collect();
    let spec = |out: &str| {
        let text = format!(
            "variants = [{}]\nlayers = 2\nhidden = 16\nheads = 2\ncorpus_path = \"corpus.txt\"\ntrain_path = \"train.tsv\"\n\
             dev_path = \"dev.tsv\"\npretrain_steps = 4\npretrain_batch = 8\npretrain_lr = 1e-3\nepochs = 1\nbatch = 8\n\
             lr = 1e-3\nseq_len = 16\nseed = 3\nout_dir = \"{out}\"\n",
            names.join(", ")
        );
        ExperimentSpec::from_toml(&text, d).unwrap()
    };
    run_experiment(&spec("a")).map_err(|e| e.to_string())?;
    run_experiment(&spec("b")).map_err(|e| e.to_string())?;
    let a = std::fs::read(d.join("a/report.tsv")).unwrap();
    let b = std::fs::read(d.join("b/report.tsv")).unwrap();
    let reports_equal = a == b;

    let mut exact = 0;
    for kind in VariantKind::IMPLEMENTED {
        let model = build(&VariantConfig::tiny(kind), &mut SeedRng::new(30)).unwrap();
        let restored = Checkpoint::from_bytes(&Checkpoint::from_model(&model).to_bytes(), "mem".as_ref())
            .and_then(|c| c.model())
            .map_err(|e| e.to_string())?;
        let ids = (0..16).map(|i| 5 + (i * 13) % 95).collect();
        let batch = TokenBatch::from_ids(2, 8, ids).unwrap();
        let (x, y) = (eval_forward(&model, &batch), eval_forward(&restored, &batch));
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        if bits(&x.0) == bits(&y.0) && bits(&x.1) == bits(&y.1) {
            exact += 1;
        }
    }
    ensure(
        reports_equal && exact == 8,
        format!(
            "report.tsv {} across two runs ({} bytes); checkpoint round-trip bit-exact for {exact}/8 variants",
            if reports_equal { "identical" } else { "DIFFERS" },
            a.len()
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut wrong = Vec::new();
    for kind in VariantKind::IMPLEMENTED {
        let expected = if matches!(kind, VariantKind::TextCnn | VariantKind::Ngram) { 16 } else { 8 };
        let model = build(&VariantConfig::tiny(kind), &mut SeedRng::new(0)).unwrap();
        let batch = TokenBatch::from_ids(1, 8, (5..13).collect()).unwrap();
        let mut pass = Pass::eval();
        let out = model.forward(&mut pass, &batch).unwrap();
        let weights_ok = out.traces.iter().all(|t| pass.g.shape(t.weights) == [1, 2, expected, expected]);
        let preset = VariantConfig::preset(kind, 1000);
        if out.attention_len != expected
            || !weights_ok
            || pass.g.shape(out.sequence)[1] != expected
            || preset.attention_len(64) != expected * 8
        {
            wrong.push(kind.name());
        }
    }
    ensure(
        wrong.is_empty(),
        if wrong.is_empty() {
            "textcnn, ngram attend over 2L; the other six over L".into()
        } else {
            format!("wrong attention length: {}", wrong.join(", "))
        },
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("gradient suite", criterion_1),
        ("zero-ablation equivalence", criterion_2),
        ("parameter parity", criterion_3),
        ("masking statistics", criterion_4),
        ("relative-attention Toeplitz", criterion_5),
        ("training progress", criterion_6),
        ("determinism and persistence", criterion_7),
        ("sequence-length contract", criterion_8),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({secs:.1}s) {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({secs:.1}s) {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
