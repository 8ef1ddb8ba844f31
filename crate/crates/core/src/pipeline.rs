//! End-to-end experiment: synthetic data, LMs, the staged acoustic models,
//! decoding of every system on the en and hi test sets, and the attention
//! weight analysis.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::analysis::{collect_weights, fit_gmm_1d_restarts, histogram_csv, mean_own_weight, GmmFit};
use crate::checkpoint;
use crate::config::{RunConfig, TranslitMode};
use crate::corpus::{
    synthesize_codemix, synthesize_language, transliterate_lexicon, transliterate_words, SynthSpec, Utterance,
};
use crate::decoder::{evaluate_testset, EvalMode, WerReport};
use crate::error::{Error, Result};
use crate::lang::Lang;
use crate::lexicon::Lexicon;
use crate::lm::{export_arpa, perplexity, InterpolatedLM, LanguageModel, NGramModel};
use crate::model::{AcousticModel, ModelKind};
use crate::seed;
use crate::trainer::{distill, loss_csv, train_stage, DataSelector, LossRecord, Stage, TrainData};
use crate::translit::{TranslitProvider, TranslitTable};

/// Everything derived from the config before acoustic training.
pub struct Experiment {
    pub spec: SynthSpec,
    pub table: TranslitTable,
    pub en_train: Vec<Utterance>,
    pub hi_train: Vec<Utterance>,
    pub mix_train: Vec<Utterance>,
    pub en_test: Vec<Utterance>,
    /// References transliterated to Latin script.
    pub hi_test: Vec<Utterance>,
    pub en_lexicon: Lexicon,
    /// Hindi words keyed by their Latin form.
    pub hi_lexicon: Lexicon,
    pub union_lexicon: Lexicon,
    pub en_text: Vec<Vec<String>>,
    /// Latin-script Hindi LM text.
    pub hi_text: Vec<Vec<String>>,
    pub en_test_text: Vec<Vec<String>>,
    pub hi_test_text: Vec<Vec<String>>,
    pub en_lm: NGramModel,
    pub hi_lm: NGramModel,
    pub hinglish_lm: InterpolatedLM,
}

fn provider(cfg: &RunConfig, table: &TranslitTable) -> TranslitProvider {
    match cfg.translit.mode {
        TranslitMode::Word => TranslitProvider::WordTable(table.clone()),
        TranslitMode::Contextual => TranslitProvider::ContextualRules(table.clone()),
    }
}

fn latin_text(text: Vec<Vec<String>>, table: &TranslitTable) -> Vec<Vec<String>> {
    text.into_iter().map(|s| transliterate_words(&s, table)).collect()
}

pub fn prepare(cfg: &RunConfig) -> Result<Experiment> {
    cfg.validate()?;
    let s = cfg.seed;
    let d = &cfg.data;
    let (spec, table) = SynthSpec::generate(&cfg.synth, seed::derive(s, "synth"))?;
    let corpus = |l: Lang, n: usize, name: &str| synthesize_language(&spec, l, n, seed::derive(s, name));
    let en_train = corpus(Lang::En, d.en_train, "corpus/en-train")?;
    let hi_train = corpus(Lang::Hi, d.hi_train, "corpus/hi-train")?;
    let mix_train = synthesize_codemix(&spec, d.mix_ratio_hi, d.mix_train, seed::derive(s, "corpus/mix-train"))?;
    let en_test = corpus(Lang::En, d.en_test, "corpus/en-test")?;
    let hi_test: Vec<Utterance> = corpus(Lang::Hi, d.hi_test, "corpus/hi-test")?
        .into_iter()
        .map(|u| Utterance {
            words: transliterate_words(&u.words, &table),
            ..u
        })
        .collect();

    let en_lexicon = spec.lang(Lang::En).lexicon.clone();
    let hi_lexicon = transliterate_lexicon(&spec.lang(Lang::Hi).lexicon, &provider(cfg, &table))?;
    let union_lexicon = en_lexicon.merged(&hi_lexicon)?;

    let en_text = spec.sentences(Lang::En, d.lm_sentences, seed::derive(s, "text/en"))?;
    let hi_text = latin_text(
        spec.codemixed_sentences(Lang::Hi, d.lm_sentences, d.hi_text_en_rate, seed::derive(s, "text/hi"))?,
        &table,
    );
    let en_test_text = spec.sentences(Lang::En, d.lm_test_sentences, seed::derive(s, "text/en-test"))?;
    let hi_test_text = latin_text(
        spec.sentences(Lang::Hi, d.lm_test_sentences, seed::derive(s, "text/hi-test"))?,
        &table,
    );
    let en_lm = NGramModel::from_sentences(&en_text, cfg.lm.order)?;
    let hi_lm = NGramModel::from_sentences(&hi_text, cfg.lm.order)?;
    let hinglish_lm = InterpolatedLM::new(en_lm.clone(), hi_lm.clone(), cfg.lm.lambda_en)?;
    Ok(Experiment {
        spec,
        table,
        en_train,
        hi_train,
        mix_train,
        en_test,
        hi_test,
        en_lexicon,
        hi_lexicon,
        union_lexicon,
        en_text,
        hi_text,
        en_test_text,
        hi_test_text,
        en_lm,
        hi_lm,
        hinglish_lm,
    })
}

impl Experiment {
    pub fn train_data(&self) -> TrainData<'_> {
        TrainData {
            en: &self.en_train,
            hi: &self.hi_train,
            mix: &self.mix_train,
        }
    }
}

/// Acoustic models of every training stage.
pub struct StageModels {
    pub mono_en: AcousticModel,
    pub single: AcousticModel,
    pub split: AcousticModel,
    pub attention: AcousticModel,
    pub full: AcousticModel,
    pub distilled: AcousticModel,
    /// `(name, history)` per trained stage, in training order.
    pub losses: Vec<(String, Vec<LossRecord>)>,
}

impl StageModels {
    pub fn checkpoints(&self) -> [(&'static str, &AcousticModel); 6] {
        [
            ("mono_en", &self.mono_en),
            ("single", &self.single),
            ("split", &self.split),
            ("attention_only", &self.attention),
            ("full", &self.full),
            ("distill", &self.distilled),
        ]
    }
}

/// Stages 1–4 from scratch: SingleHead, split, attention-only, full.
pub fn train_sha_stages(
    cfg: &RunConfig,
    data: &TrainData,
    progress: &mut dyn FnMut(&str),
) -> Result<(Vec<(Stage, AcousticModel)>, Vec<(String, Vec<LossRecord>)>)> {
    let s = cfg.seed;
    let mut losses = Vec::new();
    let mut models = Vec::new();
    progress("stage single");
    let init = AcousticModel::single_head(cfg.model_config(), &mut seed::rng(s, "init/single"))?;
    let (single, h) = train_stage(init, data, cfg.stage(Stage::Single), seed::derive(s, "train/single"))?;
    losses.push(("single".to_string(), h));
    models.push((Stage::Single, single.clone()));

    let mut model = AcousticModel::split_from_single(&single, &mut seed::rng(s, "init/attention"))?;
    for stage in [Stage::Split, Stage::AttentionOnly, Stage::Full] {
        progress(&format!("stage {stage}"));
        let (m, h) = train_stage(model, data, cfg.stage(stage), seed::derive(s, &format!("train/{stage}")))?;
        losses.push((stage.to_string(), h));
        models.push((stage, m.clone()));
        model = m;
    }
    Ok((models, losses))
}

/// Stage 5: the full model distils from the ensemble of itself evaluated
/// with full context and with streaming chunks.
pub fn distill_stage(cfg: &RunConfig, full: &AcousticModel, data: &TrainData) -> Result<(AcousticModel, Vec<LossRecord>)> {
    distill(
        full.clone(),
        full,
        full,
        data,
        &cfg.distill,
        cfg.stage(Stage::Distill),
        seed::derive(cfg.seed, "train/distill"),
    )
}

pub fn train_all(cfg: &RunConfig, exp: &Experiment, progress: &mut dyn FnMut(&str)) -> Result<StageModels> {
    let data = exp.train_data();
    progress("stage single (English-only baseline)");
    let mono_plan = crate::trainer::StagePlan {
        data: DataSelector::EnOnly,
        ..cfg.stage(Stage::Single).clone()
    };
    let init = AcousticModel::single_head(cfg.model_config(), &mut seed::rng(cfg.seed, "init/mono-en"))?;
    let (mono_en, h) = train_stage(init, &data, &mono_plan, seed::derive(cfg.seed, "train/mono-en"))?;
    let mut losses = vec![("mono_en".to_string(), h)];

    let (models, more) = train_sha_stages(cfg, &data, progress)?;
    losses.extend(more);
    let pick = |s: Stage| models.iter().find(|(x, _)| *x == s).expect("stage trained").1.clone();
    progress("stage distill");
    let full = pick(Stage::Full);
    let (distilled, h) = distill_stage(cfg, &full, &data)?;
    losses.push(("distill".to_string(), h));
    Ok(StageModels {
        mono_en,
        single: pick(Stage::Single),
        split: pick(Stage::Split),
        attention: pick(Stage::AttentionOnly),
        full,
        distilled,
        losses,
    })
}

/// Decodes both test sets with every system, rows I to VII.
pub fn evaluate_systems(cfg: &RunConfig, exp: &Experiment, m: &StageModels) -> Result<WerReport> {
    let tests: Vec<Utterance> = exp.en_test.iter().chain(&exp.hi_test).cloned().collect();
    let hinglish: &dyn LanguageModel = &exp.hinglish_lm;
    let systems: [(&str, &AcousticModel, EvalMode, &Lexicon, &dyn LanguageModel); 8] = [
        ("I", &m.mono_en, EvalMode::Single, &exp.en_lexicon, &exp.en_lm),
        ("II", &m.mono_en, EvalMode::Single, &exp.union_lexicon, hinglish),
        ("III", &m.single, EvalMode::Single, &exp.union_lexicon, hinglish),
        ("IV/head-en", &m.split, EvalMode::Head(Lang::En), &exp.union_lexicon, hinglish),
        ("IV/head-hi", &m.split, EvalMode::Head(Lang::Hi), &exp.union_lexicon, hinglish),
        ("V", &m.attention, EvalMode::Sha, &exp.union_lexicon, hinglish),
        ("VI", &m.full, EvalMode::Sha, &exp.union_lexicon, hinglish),
        ("VII", &m.distilled, EvalMode::Sha, &exp.union_lexicon, hinglish),
    ];
    let mut report = WerReport::default();
    for (name, model, mode, lex, lm) in systems {
        report.extend(evaluate_testset(name, Some(model), mode, &tests, lex, lm, &cfg.decode)?);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerplexityRow {
    pub lm: &'static str,
    pub testset: &'static str,
    pub perplexity: f64,
}

pub fn perplexities(exp: &Experiment) -> Result<Vec<PerplexityRow>> {
    let lms: [(&'static str, &dyn LanguageModel); 3] =
        [("en", &exp.en_lm), ("hi", &exp.hi_lm), ("hinglish", &exp.hinglish_lm)];
    let mut rows = Vec::new();
    for (name, lm) in lms {
        for (testset, text) in [("en", &exp.en_test_text), ("hi", &exp.hi_test_text)] {
            rows.push(PerplexityRow {
                lm: name,
                testset,
                perplexity: perplexity(lm, text)?,
            });
        }
    }
    Ok(rows)
}

pub fn perplexity_csv(rows: &[PerplexityRow]) -> String {
    let mut out = String::from("lm,testset,perplexity\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.lm, r.testset, r.perplexity);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSummary {
    pub single: usize,
    pub sha: usize,
    pub tower: usize,
    pub attention: usize,
}

impl ParamSummary {
    pub fn of(single: &AcousticModel, sha: &AcousticModel) -> Result<Self> {
        if single.kind() != ModelKind::SingleHead || sha.kind() != ModelKind::Sha {
            return Err(Error::Model("parameter summary needs a SingleHead and an SHA model".into()));
        }
        Ok(Self {
            single: single.param_count(),
            sha: sha.param_count(),
            tower: sha.tower_param_count(),
            attention: sha.attention_param_count(),
        })
    }

    pub fn overhead(&self) -> usize {
        self.sha - self.single
    }

    pub fn ratio(&self) -> f64 {
        self.overhead() as f64 / self.single as f64
    }

    pub fn to_csv(&self) -> String {
        format!(
            "single_params,sha_params,tower_params,attention_params,overhead,overhead_ratio\n{},{},{},{},{},{}\n",
            self.single,
            self.sha,
            self.tower,
            self.attention,
            self.overhead(),
            self.ratio()
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LidSummary {
    pub mean_en_on_en: f64,
    pub mean_hi_on_hi: f64,
    pub gmm_en: GmmFit,
    pub gmm_hi: GmmFit,
    pub restarts_en: Vec<GmmFit>,
    pub restarts_hi: Vec<GmmFit>,
    pub histogram_en: String,
    pub histogram_hi: String,
}

impl LidSummary {
    pub fn to_csv(&self) -> String {
        let d = |g: &GmmFit| g.means[g.dominant()];
        format!(
            "subset,mean_weight,dominant_mean,dominant_weight\nw_en|en,{},{},{}\nw_hi|hi,{},{},{}\n",
            self.mean_en_on_en,
            d(&self.gmm_en),
            self.gmm_en.weights[self.gmm_en.dominant()],
            self.mean_hi_on_hi,
            d(&self.gmm_hi),
            self.gmm_hi.weights[self.gmm_hi.dominant()],
        )
    }
}

pub fn analyze_weights(cfg: &RunConfig, model: &AcousticModel, corpus: &[Utterance]) -> Result<LidSummary> {
    let samples = collect_weights(model, corpus)?;
    let own = |l: Lang| -> Vec<f64> { samples.iter().filter(|s| s.lang == l).map(|s| s.weight(l)).collect() };
    let (en, hi) = (own(Lang::En), own(Lang::Hi));
    let missing = || Error::Data("weight analysis needs frames of both languages".into());
    let (gmm_en, restarts_en) = fit_gmm_1d_restarts(&en, &cfg.analysis.gmm, seed::derive(cfg.seed, "gmm/en"))?;
    let (gmm_hi, restarts_hi) = fit_gmm_1d_restarts(&hi, &cfg.analysis.gmm, seed::derive(cfg.seed, "gmm/hi"))?;
    Ok(LidSummary {
        mean_en_on_en: mean_own_weight(&samples, Lang::En).ok_or_else(missing)?,
        mean_hi_on_hi: mean_own_weight(&samples, Lang::Hi).ok_or_else(missing)?,
        gmm_en,
        gmm_hi,
        restarts_en,
        restarts_hi,
        histogram_en: histogram_csv(&en, cfg.analysis.histogram_bins)?,
        histogram_hi: histogram_csv(&hi, cfg.analysis.histogram_bins)?,
    })
}

pub struct TrendOutcome {
    pub report: WerReport,
    pub perplexity: Vec<PerplexityRow>,
    pub params: ParamSummary,
    pub lid: LidSummary,
}

/// Runs the whole experiment and writes its artifacts under `out`.
pub fn reproduce_trend(cfg: &RunConfig, out: &Path, progress: &mut dyn FnMut(&str)) -> Result<TrendOutcome> {
    progress("synthesising corpora and building language models");
    let exp = prepare(cfg)?;
    let models = train_all(cfg, &exp, progress)?;
    progress("decoding test sets");
    let report = evaluate_systems(cfg, &exp, &models)?;
    let ppl = perplexities(&exp)?;
    let params = ParamSummary::of(&models.single, &models.distilled)?;
    progress("analysing attention weights");
    let tests: Vec<Utterance> = exp.en_test.iter().chain(&exp.hi_test).cloned().collect();
    let lid = analyze_weights(cfg, &models.distilled, &tests)?;

    for dir in ["checkpoints", "loss", "lm", "analysis"] {
        fs::create_dir_all(out.join(dir))?;
    }
    fs::write(out.join("config.txt"), cfg.to_text())?;
    fs::write(out.join("report.csv"), report.to_csv())?;
    fs::write(out.join("perplexity.csv"), perplexity_csv(&ppl))?;
    fs::write(out.join("params.csv"), params.to_csv())?;
    for (name, m) in models.checkpoints() {
        checkpoint::save(m, &out.join("checkpoints").join(format!("{name}.ckpt")))?;
    }
    for (name, h) in &models.losses {
        fs::write(out.join("loss").join(format!("{name}.csv")), loss_csv(h))?;
    }
    export_arpa(&exp.en_lm, &out.join("lm/en.arpa"))?;
    export_arpa(&exp.hi_lm, &out.join("lm/hi.arpa"))?;
    fs::write(out.join("lm/lexicon.txt"), exp.union_lexicon.to_text())?;
    fs::write(out.join("lm/translit.tsv"), exp.table.table_tsv())?;
    fs::write(out.join("analysis/lid.csv"), lid.to_csv())?;
    fs::write(out.join("analysis/gmm_en.csv"), lid.gmm_en.to_csv())?;
    fs::write(out.join("analysis/gmm_hi.csv"), lid.gmm_hi.to_csv())?;
    fs::write(out.join("analysis/hist_w_en_en.csv"), &lid.histogram_en)?;
    fs::write(out.join("analysis/hist_w_hi_hi.csv"), &lid.histogram_hi)?;
    Ok(TrendOutcome {
        report,
        perplexity: ppl,
        params,
        lid,
    })
}
