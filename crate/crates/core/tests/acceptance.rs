//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion does.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use sha_asr::config::RunConfig;
use sha_asr::decoder::{decode, DecodeConfig};
use sha_asr::gradcheck::{finite_diff_grad, max_relative_error};
use sha_asr::graph::{Graph, Var};
use sha_asr::lexicon::Lexicon;
use sha_asr::lm::{parse_arpa, render_arpa, count_ngrams, InterpolatedLM, LanguageModel, NGramModel, BOS, EOS};
use sha_asr::model::{build_chunks, AcousticModel, HeadMode, ModelConfig, ParamGroup, Posteriors};
use sha_asr::pipeline::{prepare, reproduce_trend, TrendOutcome};
use sha_asr::trainer::{
    compute_gradients, train_stage, Batch, DistillConfig, EnsembleWeights, Stage, StagePlan, TrainData,
};
use sha_asr::{seed, Tensor, UttLang};

type Outcome = std::result::Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_tensor(rng: &mut seed::Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

fn random_distribution_rows(rng: &mut seed::Rng, rows: usize, k: usize) -> Tensor {
    let mut data = Vec::with_capacity(rows * k);
    for _ in 0..rows {
        let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        data.extend(raw.iter().map(|v| v / s));
    }
    Tensor::new(vec![rows, k], data).unwrap()
}

fn jitter(model: &mut AcousticModel, rng: &mut seed::Rng, scale: f64) {
    for t in model.params_mut() {
        for v in t.data_mut() {
            *v += rng.gen_range(-scale..scale);
        }
    }
}

type OpBuilder = fn(&mut Graph, &[Var], &mut seed::Rng) -> sha_asr::Result<Var>;

/// Every graph op on random inputs, reduced to a scalar through a random
/// linear functional. Returns the number of cases and the worst error.
fn op_gradchecks(rng: &mut seed::Rng) -> std::result::Result<(usize, f64), String> {
    const R: usize = 3;
    const C: usize = 4;
    let (r, c, k) = (R, C, 2);
    let ops: Vec<(&str, Vec<Vec<usize>>, OpBuilder)> = vec![
        ("matmul", vec![vec![r, k], vec![k, c]], |g, v, _| g.matmul(v[0], v[1])),
        ("add_bias", vec![vec![r, c], vec![c]], |g, v, _| g.add_bias(v[0], v[1])),
        ("affine", vec![vec![r, k], vec![k, c], vec![c]], |g, v, _| g.affine(v[0], v[1], v[2])),
        ("add", vec![vec![r, c], vec![r, c]], |g, v, _| g.add(v[0], v[1])),
        ("relu", vec![vec![r, c]], |g, v, _| g.relu(v[0])),
        ("scale", vec![vec![r, c]], |g, v, _| g.scale(v[0], -1.7)),
        ("softmax", vec![vec![r, c]], |g, v, _| g.softmax(v[0])),
        ("log_softmax", vec![vec![r, c]], |g, v, _| g.log_softmax(v[0])),
        ("reshape", vec![vec![r, c]], |g, v, _| g.reshape(v[0], vec![C, R])),
        ("gather_rows", vec![vec![r, c]], |g, v, _| g.gather_rows(v[0], vec![2, 0, 2])),
        ("group_weighted_sum", vec![vec![2, r], vec![2 * r, c]], |g, v, _| g.group_weighted_sum(v[0], v[1])),
        ("scale_rows", vec![vec![r, c], vec![r, 2]], |g, v, _| g.scale_rows(v[0], v[1], 1)),
        ("cross_entropy", vec![vec![r, c]], |g, v, rng| {
            let lp = g.log_softmax(v[0])?;
            let labels: Vec<usize> = (0..R).map(|_| rng.gen_range(0..C)).collect();
            g.cross_entropy(lp, &labels)
        }),
        ("kl_divergence", vec![vec![r, c]], |g, v, rng| {
            let lp = g.log_softmax(v[0])?;
            let teacher = random_distribution_rows(rng, R, C);
            g.kl_divergence(&teacher, lp)
        }),
    ];
    let reps = 8;
    let mut worst: f64 = 0.0;
    for (name, shapes, build) in &ops {
        for rep in 0..reps {
            let inputs: Vec<Tensor> = shapes.iter().map(|s| random_tensor(rng, s, 2.0)).collect();
            let op_seed = rng.gen::<u64>();
            let objective = |xs: &[Tensor]| -> sha_asr::Result<(f64, Vec<Tensor>)> {
                let mut g = Graph::new();
                let vars: Vec<Var> = xs.iter().map(|x| g.leaf(x.clone())).collect::<sha_asr::Result<_>>()?;
                let out = build(&mut g, &vars, &mut seed::rng(op_seed, "op"))?;
                let n = g.value(out).len();
                let flat = g.reshape(out, vec![1, n])?;
                let coeffs = g.leaf(random_tensor(&mut seed::rng(op_seed, "functional"), &[n, 1], 1.0))?;
                let y = g.matmul(flat, coeffs)?;
                let value = g.value(y).data()[0];
                g.backward(y)?;
                Ok((value, vars.iter().map(|&v| g.grad(v)).collect()))
            };
            let (_, grads) = objective(&inputs).map_err(|e| e.to_string())?;
            for (i, analytic) in grads.iter().enumerate() {
                let numeric = finite_diff_grad(
                    |x| {
                        let mut xs = inputs.clone();
                        xs[i] = x.clone();
                        objective(&xs).map(|r| r.0)
                    },
                    &inputs[i],
                    1e-5,
                )
                .map_err(|e| e.to_string())?;
                let err = max_relative_error(analytic, &numeric, 1e-5);
                worst = worst.max(err);
                if err >= 1e-4 {
                    return Err(format!("{name} case {rep} input {i}: relative error {err:.3e}"));
                }
            }
        }
    }
    Ok((ops.len() * reps, worst))
}

fn criterion_1_gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = seed::rng(101, "acceptance/gradcheck");
    let (op_cases, op_worst) = op_gradchecks(&mut rng)?;
    let stages = [Stage::Single, Stage::Split, Stage::AttentionOnly, Stage::Full, Stage::Distill];
    let cases = 120;
    let mut worst: f64 = 0.0;
    let mut counted = BTreeMap::new();
    for case in 0..cases {
        let stage = stages[case % stages.len()];
        let blocks = rng.gen_range(1..=3);
        let cfg = ModelConfig {
            feature_dim: rng.gen_range(2..=4),
            hidden_dim: rng.gen_range(3..=6),
            num_shared_blocks: blocks,
            num_chenones: rng.gen_range(3..=6),
            split_depth: rng.gen_range(0..=blocks),
            lookahead: rng.gen_range(0..=2),
        };
        let single = AcousticModel::single_head(cfg.clone(), &mut rng).unwrap();
        let mut model = if stage == Stage::Single {
            single
        } else {
            AcousticModel::split_from_single(&single, &mut rng).unwrap()
        };
        jitter(&mut model, &mut rng, 0.3);
        let b = rng.gen_range(1..=4);
        let lang = if rng.gen_bool(0.5) { UttLang::En } else { UttLang::Hi };
        let batch = Batch {
            chunks: random_tensor(&mut rng, &[b * cfg.chunk_len(), cfg.feature_dim], 1.5),
            labels: (0..b).map(|_| rng.gen_range(0..cfg.num_chenones)).collect(),
            lang,
            teacher: (stage == Stage::Distill).then(|| random_distribution_rows(&mut rng, b, cfg.num_chenones)),
        };
        let plan = StagePlan::new(stage);
        let dcfg = DistillConfig::new(rng.gen_range(0.0..=1.0), EnsembleWeights::default()).unwrap();
        let (_, grads) = compute_gradients(&model, &batch, &plan, Some(&dcfg)).unwrap();
        for (i, analytic) in grads.iter().enumerate() {
            let numeric = finite_diff_grad(
                |p| {
                    let mut m = model.clone();
                    *m.params_mut()[i] = p.clone();
                    compute_gradients(&m, &batch, &plan, Some(&dcfg)).map(|r| r.0)
                },
                model.params()[i].1,
                1e-5,
            )
            .unwrap();
            let err = max_relative_error(analytic, &numeric, 1e-5);
            worst = worst.max(err);
            if err >= 1e-4 {
                return Err(format!("case {case} ({stage}) parameter {i}: relative error {err:.3e}"));
            }
        }
        *counted.entry(stage.as_str()).or_insert(0) += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "{op_cases} op cases (worst {op_worst:.2e}); {cases} model loss cases {counted:?} (worst {worst:.2e}); {secs:.1}s"
    ))
}

fn criterion_2_split_equivalence() -> Outcome {
    let mut rng = seed::rng(202, "acceptance/split");
    let mut worst: f64 = 0.0;
    let per_depth = 250;
    for depth in [0, 1, 2, 4] {
        let cfg = ModelConfig {
            num_shared_blocks: 4,
            split_depth: depth,
            ..ModelConfig::default()
        };
        let mut single = AcousticModel::single_head(cfg.clone(), &mut rng).unwrap();
        jitter(&mut single, &mut rng, 0.1);
        let mut sha = AcousticModel::split_from_single(&single, &mut rng).unwrap();
        // The identity must hold whatever the attention head says.
        let att = sha.attention.as_mut().unwrap();
        for v in att.output.weight.data_mut().iter_mut().chain(att.query.data_mut()) {
            *v = rng.gen_range(-2.0..2.0);
        }
        for _ in 0..per_depth {
            let chunk = random_tensor(&mut rng, &[cfg.chunk_len(), cfg.feature_dim], 3.0);
            let a = single.forward_singlehead(&chunk).unwrap();
            let b = sha.forward_sha(&chunk).unwrap();
            let d = a
                .tensor()
                .data()
                .iter()
                .zip(b.tensor().data())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            worst = worst.max(d);
        }
    }
    ensure(worst <= 1e-9, || format!("max difference {worst:.3e}"))?;
    Ok(format!("{} chunks over split depths 0/1/2/4, max difference {worst:.2e}", 4 * per_depth))
}

fn snapshot(m: &AcousticModel, keep: impl Fn(ParamGroup) -> bool) -> Vec<Vec<u64>> {
    m.params()
        .into_iter()
        .filter(|(g, _)| keep(*g))
        .map(|(_, t)| t.data().iter().map(|v| v.to_bits()).collect())
        .collect()
}

fn trained_sha(seed_: u64) -> AcousticModel {
    let cfg = ModelConfig {
        split_depth: 1,
        ..ModelConfig::default()
    };
    let single = AcousticModel::single_head(cfg, &mut seed::rng(seed_, "init")).unwrap();
    let mut sha = AcousticModel::split_from_single(&single, &mut seed::rng(seed_, "split")).unwrap();
    jitter(&mut sha, &mut seed::rng(seed_, "jitter"), 0.05);
    sha
}

fn criterion_3_freezing() -> Outcome {
    let w = common::small_world(31, 10);
    let data = TrainData { en: &w.en, hi: &w.hi, mix: &w.mix };
    let before = trained_sha(32);
    let plan = StagePlan {
        epochs: 2,
        ..StagePlan::new(Stage::AttentionOnly)
    };
    let (after, _) = train_stage(before.clone(), &data, &plan, 33).map_err(|e| e.to_string())?;
    let frozen = |g| g != ParamGroup::Attention;
    ensure(snapshot(&before, frozen) == snapshot(&after, frozen), || {
        "attention-only stage changed a frozen parameter".into()
    })?;
    let attention = |g| g == ParamGroup::Attention;
    ensure(snapshot(&before, attention) != snapshot(&after, attention), || {
        "attention-only stage left the attention head untouched".into()
    })?;

    let items: Vec<(usize, usize)> = w
        .en
        .iter()
        .enumerate()
        .flat_map(|(u, utt)| (0..utt.num_frames()).step_by(3).map(move |t| (u, t)))
        .collect();
    let batch = Batch::gather(&before, &w.en, &items, UttLang::En, None).map_err(|e| e.to_string())?;
    let (_, grads) = compute_gradients(&before, &batch, &StagePlan::new(Stage::Split), None).unwrap();
    let mut hi_scalars = 0;
    for ((g, _), grad) in before.params().iter().zip(&grads) {
        if *g == ParamGroup::Tower(1) {
            hi_scalars += grad.len();
            ensure(grad.data().iter().all(|v| *v == 0.0), || "tower-hi received gradient from en batch".into())?;
        }
    }
    Ok(format!(
        "frozen groups bitwise equal; {hi_scalars} tower-hi gradients exactly zero on {} en frames",
        items.len()
    ))
}

fn criterion_4_distillation() -> Outcome {
    let w = common::small_world(41, 4);
    let model = trained_sha(42);
    let items: Vec<(usize, usize)> = (0..w.hi.len()).flat_map(|u| [(u, 0), (u, 1), (u, 3)]).collect();
    let own: Vec<Posteriors> = w.hi.iter().map(|u| model.posteriors(&u.frames, HeadMode::Sha).unwrap()).collect();
    let batch = Batch::gather(&model, &w.hi, &items, UttLang::Hi, Some(&own)).unwrap();
    let loss = |b: &Batch, w_kld: f64| {
        let cfg = DistillConfig::new(w_kld, EnsembleWeights::default()).unwrap();
        compute_gradients(&model, b, &StagePlan::new(Stage::Distill), Some(&cfg)).unwrap().0
    };
    let ce = compute_gradients(&model, &batch, &StagePlan::new(Stage::Full), None).unwrap().0;
    let d0 = (loss(&batch, 0.0) - ce).abs();
    ensure(d0 <= 1e-12, || format!("w_kld=0 differs from CE by {d0:.3e}"))?;
    let self_kl = loss(&batch, 1.0).abs();
    ensure(self_kl <= 1e-12, || format!("w_kld=1 against itself gives {self_kl:.3e}"))?;

    let k = model.config.num_chenones;
    let teacher = random_distribution_rows(&mut seed::rng(43, "teacher"), 1, k);
    let one = Batch {
        teacher: Some(teacher.clone()),
        ..Batch::gather(&model, &w.hi, &items[..1], UttLang::Hi, Some(&own)).unwrap()
    };
    let chunk = build_chunks(&w.hi[0].frames, &[0], model.config.chunk_len()).unwrap();
    let p = model.forward_sha(&chunk).unwrap();
    let label = one.labels[0];
    let ce1 = -p.row(0)[label].ln();
    let kl1: f64 = (0..k).map(|c| teacher.get2(0, c) * (teacher.get2(0, c) / p.row(0)[c]).ln()).sum();
    let want = 0.05 * ce1 + 0.95 * kl1;
    let got = loss(&one, 0.95);
    ensure((got - want).abs() <= 1e-12, || format!("hand-built frame: {got} vs {want}"))?;
    Ok(format!("w_kld=0 gap {d0:.1e}, self-distill {self_kl:.1e}, one-frame loss {got:.6} matches"))
}

fn wer_of(o: &TrendOutcome, system: &str, testset: &str) -> std::result::Result<f64, String> {
    o.report
        .get(system, testset)
        .map(|r| r.counts.wer())
        .ok_or_else(|| format!("report has no row {system}/{testset}"))
}

fn criterion_5_trend(o: &TrendOutcome, secs: f64) -> Outcome {
    let i_hi = wer_of(o, "I", "hi")?;
    let i_en = wer_of(o, "I", "en")?;
    let ii_hi = wer_of(o, "II", "hi")?;
    let ii_en = wer_of(o, "II", "en")?;
    let vii_hi = wer_of(o, "VII", "hi")?;
    let vii_en = wer_of(o, "VII", "en")?;
    let head_en = wer_of(o, "IV/head-en", "hi")?;
    let head_hi = wer_of(o, "IV/head-hi", "hi")?;
    let summary = format!(
        "hi WER I {i_hi:.1} / II {ii_hi:.1} / VII {vii_hi:.1}; en WER I {i_en:.1} / II {ii_en:.1} / VII {vii_en:.1}; \
         hi test head-en {head_en:.1} vs head-hi {head_hi:.1}; {secs:.0}s"
    );
    let checks = [
        ("(a) baseline hi WER >= 60", i_hi >= 60.0),
        ("(b) LM-only relative hi reduction >= 30%", ii_hi <= 0.7 * i_hi),
        ("(b) LM-only en regression <= 1 abs", ii_en - i_en <= 1.0),
        ("(c) final relative hi reduction >= 50%", vii_hi <= 0.5 * i_hi),
        ("(c) final en regression <= 1 abs", vii_en - i_en <= 1.0),
        ("(d) head-hi beats head-en on hi", head_hi < head_en),
        ("runtime under 10 min", secs < 600.0),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    ensure(failed.is_empty(), || format!("{} failed: {summary}", failed.join(", ")))?;
    Ok(summary)
}

fn criterion_6_lid(o: &TrendOutcome) -> Outcome {
    let lid = &o.lid;
    let dom_en = lid.gmm_en.means[lid.gmm_en.dominant()];
    let dom_hi = lid.gmm_hi.means[lid.gmm_hi.dominant()];
    let summary = format!(
        "mean w_en|en {:.3}, w_hi|hi {:.3}; dominant GMM means {dom_en:.3}, {dom_hi:.3}",
        lid.mean_en_on_en, lid.mean_hi_on_hi
    );
    ensure(lid.mean_en_on_en > 0.8 && lid.mean_hi_on_hi > 0.8, || format!("mean weights too low: {summary}"))?;
    ensure(dom_en > 0.8 && dom_hi > 0.8, || format!("dominant means too low: {summary}"))?;
    let restarts = lid.restarts_en.iter().chain(&lid.restarts_hi).collect::<Vec<_>>();
    ensure(restarts.len() == 10, || format!("expected 5 restarts per language, got {}", restarts.len()))?;
    for (r, fit) in restarts.iter().enumerate() {
        for pair in fit.history.windows(2) {
            let slack = 1e-9 * (1.0 + pair[0].abs());
            ensure(pair[1] >= pair[0] - slack, || {
                format!("restart {r}: log-likelihood fell from {} to {}", pair[0], pair[1])
            })?;
        }
    }
    Ok(format!("{summary}; EM monotone over 10 restarts"))
}

fn naive_count(corpus: &[Vec<String>], gram: &[String]) -> u64 {
    let mut n = 0;
    for s in corpus.iter().filter(|s| !s.is_empty()) {
        let mut padded = vec![BOS.to_string()];
        padded.extend(s.iter().cloned());
        padded.push(EOS.to_string());
        let k = gram.len();
        if padded.len() < k {
            continue;
        }
        for i in 0..=padded.len() - k {
            if padded[i..i + k] == *gram {
                n += 1;
            }
        }
    }
    n
}

fn max_context_deviation(lm: &dyn LanguageModel, contexts: &[Vec<String>]) -> f64 {
    let vocab = lm.predictable();
    contexts
        .iter()
        .map(|h| {
            let refs: Vec<&str> = h.iter().map(String::as_str).collect();
            let s: f64 = vocab.iter().map(|w| lm.prob(&refs, w)).sum();
            (s - 1.0).abs()
        })
        .fold(0.0, f64::max)
}

fn criterion_7_lm(o: &TrendOutcome, cfg: &RunConfig) -> Outcome {
    let mut rng = seed::rng(707, "acceptance/lm");
    for corpus_id in 0..50 {
        let vocab: Vec<String> = (0..rng.gen_range(2..12)).map(|i| format!("w{i}")).collect();
        let mut corpus = Vec::new();
        let mut tokens = 0;
        let budget = rng.gen_range(1..=1000);
        while tokens < budget {
            let len = rng.gen_range(0..=12).min(budget - tokens);
            let s: Vec<String> = (0..len).map(|_| vocab.choose(&mut rng).unwrap().clone()).collect();
            tokens += len.max(1);
            corpus.push(s);
        }
        let order = rng.gen_range(1..=4);
        let counts = count_ngrams(&corpus, order).unwrap();
        for k in 1..=order {
            let windows: u64 = corpus
                .iter()
                .filter(|s| !s.is_empty())
                .map(|s| (s.len() + 2).saturating_sub(k - 1) as u64)
                .sum();
            let total: u64 = counts.grams(k).values().sum();
            ensure(total == windows, || format!("corpus {corpus_id}: {total} {k}-grams counted, {windows} present"))?;
            for (gram, &c) in counts.grams(k) {
                let n = naive_count(&corpus, gram);
                ensure(c == n, || format!("corpus {corpus_id}: count({gram:?}) = {c}, rescan {n}"))?;
            }
        }
    }

    let exp = prepare(cfg).map_err(|e| e.to_string())?;
    let mut worst_sum: f64 = 0.0;
    let mut drift: f64 = 0.0;
    let mut all_contexts = Vec::new();
    for lm in [&exp.en_lm, &exp.hi_lm] {
        let contexts = lm.contexts();
        worst_sum = worst_sum.max(max_context_deviation(lm, &contexts));
        let text = render_arpa(lm);
        let back: NGramModel = parse_arpa(&text).map_err(|e| e.to_string())?;
        worst_sum = worst_sum.max(max_context_deviation(&back, &contexts));
        for h in &contexts {
            let refs: Vec<&str> = h.iter().map(String::as_str).collect();
            for w in lm.predictable() {
                drift = drift.max((lm.prob(&refs, &w) - back.prob(&refs, &w)).abs());
            }
        }
        all_contexts.extend(contexts);
    }
    all_contexts.push(vec!["never-seen".to_string()]);
    let hinglish: &InterpolatedLM = &exp.hinglish_lm;
    worst_sum = worst_sum.max(max_context_deviation(hinglish, &all_contexts));
    ensure(worst_sum <= 1e-6, || format!("a context sums to 1 ± {worst_sum:.3e}"))?;
    ensure(drift <= 1e-9, || format!("ARPA round trip drifts by {drift:.3e}"))?;

    let ppl = |lm: &str, test: &str| {
        o.perplexity
            .iter()
            .find(|r| r.lm == lm && r.testset == test)
            .map(|r| r.perplexity)
            .ok_or_else(|| format!("no perplexity for {lm} on {test}"))
    };
    let (en_hi, mix_hi) = (ppl("en", "hi")?, ppl("hinglish", "hi")?);
    let (en_en, mix_en) = (ppl("en", "en")?, ppl("hinglish", "en")?);
    let summary = format!(
        "hi test ppl en {en_hi:.1} vs interpolated {mix_hi:.1}; en test ppl {en_en:.2} vs {mix_en:.2}"
    );
    ensure(mix_hi < en_hi, || format!("interpolation does not help hi: {summary}"))?;
    ensure(mix_en <= 1.05 * en_en, || format!("en perplexity rises over 5%: {summary}"))?;
    Ok(format!(
        "50 count oracles equal; context sums within {worst_sum:.1e}; ARPA drift {drift:.1e}; {summary}"
    ))
}

/// Best path score by enumerating every word sequence and every way of
/// spreading its chenones over the frames.
fn exhaustive(post: &Posteriors, lex: &Lexicon, lm: &dyn LanguageModel, cfg: &DecodeConfig) -> f64 {
    let words: Vec<(&str, &[usize])> = lex.iter().collect();
    let frames = post.frames();
    let ac = |t: usize, c: usize| cfg.acoustic_scale * post.row(t)[c].max(cfg.posterior_floor).ln();
    let mut best = f64::NEG_INFINITY;
    let mut seq: Vec<usize> = Vec::new();

    fn alignments(states: &[usize], frames: usize, ac: &dyn Fn(usize, usize) -> f64) -> f64 {
        // Each state gets at least one frame, in order.
        fn go(states: &[usize], t: usize, frames: usize, ac: &dyn Fn(usize, usize) -> f64) -> f64 {
            if states.is_empty() {
                return if t == frames { 0.0 } else { f64::NEG_INFINITY };
            }
            let mut best = f64::NEG_INFINITY;
            let mut acc = 0.0;
            for end in t..frames.saturating_sub(states.len() - 1) {
                acc += ac(end, states[0]);
                best = best.max(acc + go(&states[1..], end + 1, frames, ac));
            }
            best
        }
        go(states, 0, frames, ac)
    }

    fn walk(
        words: &[(&str, &[usize])],
        seq: &mut Vec<usize>,
        used: usize,
        frames: usize,
        score_seq: &mut dyn FnMut(&[usize]),
    ) {
        if !seq.is_empty() {
            score_seq(seq);
        }
        for (i, (_, pron)) in words.iter().enumerate() {
            if used + pron.len() <= frames {
                seq.push(i);
                walk(words, seq, used + pron.len(), frames, score_seq);
                seq.pop();
            }
        }
    }

    let mut score_seq = |s: &[usize]| {
        let states: Vec<usize> = s.iter().flat_map(|&i| words[i].1.iter().copied()).collect();
        let acoustic = alignments(&states, frames, &ac);
        if acoustic == f64::NEG_INFINITY {
            return;
        }
        let mut history = vec![BOS];
        let mut lm_score = 0.0;
        for &i in s {
            lm_score += cfg.lm_scale * lm.prob(&history, words[i].0).ln() + cfg.insertion_penalty;
            history.push(words[i].0);
        }
        lm_score += cfg.lm_scale * lm.prob(&history, EOS).ln();
        best = best.max(acoustic + lm_score);
    };
    walk(&words, &mut seq, 0, frames, &mut score_seq);
    best
}

fn random_instance(rng: &mut seed::Rng, max_words: usize, max_frames: usize) -> (Posteriors, Lexicon, NGramModel) {
    let k = rng.gen_range(2..=4);
    let mut lex = Lexicon::new();
    let n_words = rng.gen_range(1..=max_words);
    for i in 0..n_words {
        let len = rng.gen_range(1..=3);
        lex.insert(format!("w{i}"), (0..len).map(|_| rng.gen_range(0..k)).collect()).unwrap();
    }
    let names: Vec<String> = lex.words().map(str::to_string).collect();
    let text: Vec<Vec<String>> = (0..rng.gen_range(1..6))
        .map(|_| (0..rng.gen_range(1..4)).map(|_| names.choose(rng).unwrap().clone()).collect())
        .collect();
    let lm = NGramModel::from_sentences(&text, rng.gen_range(1..=3)).unwrap();
    let frames = rng.gen_range(1..=max_frames);
    let post = Posteriors::new(random_distribution_rows(rng, frames, k)).unwrap();
    (post, lex, lm)
}

/// Posteriors for a sampled word sequence: each frame puts `peak` extra
/// mass on the chenone of the path it was generated from.
fn peaked_instance(rng: &mut seed::Rng, peak: f64) -> (Posteriors, Lexicon, NGramModel) {
    let k = rng.gen_range(4..=8);
    let mut lex = Lexicon::new();
    for i in 0..rng.gen_range(2..=8) {
        let len = rng.gen_range(1..=3);
        lex.insert(format!("w{i}"), (0..len).map(|_| rng.gen_range(0..k)).collect()).unwrap();
    }
    let names: Vec<String> = lex.words().map(str::to_string).collect();
    let text: Vec<Vec<String>> = (0..rng.gen_range(2..8))
        .map(|_| (0..rng.gen_range(1..5)).map(|_| names.choose(rng).unwrap().clone()).collect())
        .collect();
    let lm = NGramModel::from_sentences(&text, rng.gen_range(1..=3)).unwrap();
    let mut path = Vec::new();
    for _ in 0..rng.gen_range(1..=4) {
        for &c in lex.get(names.choose(rng).unwrap()).unwrap() {
            path.extend(std::iter::repeat(c).take(rng.gen_range(1..=3)));
        }
    }
    let noise = random_distribution_rows(rng, path.len(), k);
    let rows: Vec<Vec<f64>> = path
        .iter()
        .enumerate()
        .map(|(t, &c)| (0..k).map(|j| (1.0 - peak) * noise.get2(t, j) + if j == c { peak } else { 0.0 }).collect())
        .collect();
    (Posteriors::new(Tensor::from_rows(&rows).unwrap()).unwrap(), lex, lm)
}

fn criterion_8_decoder() -> Outcome {
    let mut rng = seed::rng(808, "acceptance/decoder");
    let mut checked = 0;
    for case in 0..300 {
        let (post, lex, lm) = random_instance(&mut rng, 3, 6);
        let cfg = DecodeConfig {
            beam: None,
            acoustic_scale: rng.gen_range(0.5..1.5),
            lm_scale: rng.gen_range(0.0..2.0),
            insertion_penalty: rng.gen_range(-1.0..1.0),
            posterior_floor: 1e-300,
        };
        let got = decode(&post, &lex, &lm, &cfg).map_err(|e| e.to_string())?;
        let want = exhaustive(&post, &lex, &lm, &cfg);
        let same = (got.score == want) || (got.score - want).abs() <= 1e-9 * (1.0 + want.abs());
        ensure(same, || format!("instance {case}: decoder {} vs enumeration {want}", got.score))?;
        checked += 1;
    }

    let mut monotone = 0;
    for case in 0..100 {
        let (post, lex, lm) = peaked_instance(&mut rng, 0.6);
        let mut prev = f64::NEG_INFINITY;
        for beam in [1, 2, 4, 8] {
            let cfg = DecodeConfig {
                beam: Some(beam),
                ..DecodeConfig::default()
            };
            let s = decode(&post, &lex, &lm, &cfg).unwrap().score;
            ensure(s >= prev, || format!("instance {case}: beam {beam} scores {s} below {prev}"))?;
            prev = s;
        }
        let inf = decode(&post, &lex, &lm, &DecodeConfig { beam: None, ..DecodeConfig::default() }).unwrap();
        ensure(inf.score >= prev, || format!("instance {case}: unpruned search scores below beam 8"))?;
        monotone += 1;
    }
    Ok(format!("{checked} instances match enumeration; beam scores monotone on {monotone} instances"))
}

fn criterion_9_params(o: &TrendOutcome, cfg: &RunConfig) -> Outcome {
    let p = &o.params;
    let h = cfg.model.hidden_dim;
    let k = cfg.model.num_chenones;
    let tower = cfg.model.split_depth * (h * h + h) + h * k + k;
    let attention = h + 2 * h + 2;
    ensure(p.tower == tower && p.attention == attention, || {
        format!("reported tower {} / attention {}, expected {tower} / {attention}", p.tower, p.attention)
    })?;
    ensure(p.sha - p.single == tower + attention, || {
        format!("{} - {} != {tower} + {attention}", p.sha, p.single)
    })?;
    for depth in [0, 1, 2, 4] {
        let c = ModelConfig {
            num_shared_blocks: 4,
            split_depth: depth,
            ..cfg.model.clone()
        };
        let single = AcousticModel::single_head(c.clone(), &mut seed::rng(9, "p")).unwrap();
        let sha = AcousticModel::sha(c, &mut seed::rng(9, "p")).unwrap();
        let want = depth * (h * h + h) + h * k + k + attention;
        ensure(sha.param_count() - single.param_count() == want, || format!("split depth {depth} overhead"))?;
    }
    let csv = &p.to_csv();
    ensure(csv.contains("overhead_ratio"), || "params.csv lacks the overhead ratio".into())?;
    Ok(format!(
        "SHA {} = single {} + tower {tower} + attention {attention}; overhead ratio {:.4}",
        p.sha,
        p.single,
        p.ratio()
    ))
}

fn tree_bytes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn criterion_10_determinism(a: &Path, b: &Path) -> Outcome {
    let (ta, tb) = (tree_bytes(a), tree_bytes(b));
    let relevant = |k: &String| k.ends_with(".csv") || k.ends_with(".ckpt");
    let names: Vec<&String> = ta.keys().filter(|k| relevant(k)).collect();
    ensure(names.iter().any(|k| k.ends_with(".ckpt")), || "no checkpoints written".into())?;
    ensure(ta.keys().collect::<Vec<_>>() == tb.keys().collect::<Vec<_>>(), || "runs wrote different files".into())?;
    for k in &names {
        ensure(ta[*k] == tb[*k], || format!("{k} differs between runs"))?;
    }
    Ok(format!("{} CSV and checkpoint files byte-identical", names.len()))
}

/// Runs without the libtest harness so the criterion lines always reach the
/// terminal. Libtest-style arguments are honoured only as far as a name
/// filter and `--list`.
fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    if !filters.is_empty() && !filters.iter().any(|f| "acceptance".contains(f.as_str())) {
        return;
    }
    let cfg = RunConfig::default();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut outcomes = Vec::new();
    let mut secs = 0.0;
    for d in &dirs {
        let start = Instant::now();
        outcomes.push(reproduce_trend(&cfg, d.path(), &mut |_| {}).expect("reproduce-trend run"));
        secs = start.elapsed().as_secs_f64();
    }
    let o = &outcomes[0];

    let results: Vec<(&str, Outcome)> = vec![
        ("1 gradient finite-difference checks", criterion_1_gradients()),
        ("2 split_from_single equivalence", criterion_2_split_equivalence()),
        ("3 freezing and routing", criterion_3_freezing()),
        ("4 distillation identities", criterion_4_distillation()),
        ("5 reproduce-trend WER trend", criterion_5_trend(o, secs)),
        ("6 language-weight analysis", criterion_6_lid(o)),
        ("7 LM oracles", criterion_7_lm(o, &cfg)),
        ("8 decoder oracles", criterion_8_decoder()),
        ("9 parameter overhead", criterion_9_params(o, &cfg)),
        ("10 determinism", criterion_10_determinism(dirs[0].path(), dirs[1].path())),
    ];
    let mut failed = Vec::new();
    for (name, r) in &results {
        match r {
            Ok(detail) => println!("criterion {name}: PASS ({detail})"),
            Err(detail) => {
                println!("criterion {name}: FAIL ({detail})");
                failed.push(*name);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
