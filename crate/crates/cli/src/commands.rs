use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha_asr::checkpoint;
use sha_asr::config::{RunConfig, TranslitMode};
use sha_asr::corpus::{read_corpus, write_corpus, Utterance};
use sha_asr::decoder::{decode, evaluate_testset, oracle_posteriors, EvalMode};
use sha_asr::lexicon::Lexicon;
use sha_asr::lm::{export_arpa, parse_arpa, perplexity, InterpDescriptor, InterpolatedLM, LanguageModel, NGramModel};
use sha_asr::model::{AcousticModel, HeadMode, Posteriors};
use sha_asr::pipeline::{self, analyze_weights, ParamSummary};
use sha_asr::seed;
use sha_asr::trainer::{loss_csv, train_stage, DataSelector, LossRecord, Stage, StagePlan, TrainData};
use sha_asr::translit::{transliterate, RemoteClient, RemoteConfig, TranslitProvider, TranslitTable};
use sha_asr::{Error, Lang, Result};

use crate::{Command, DataArgs, DecodeArgs};

const CORPORA: [&str; 5] = ["en_train", "hi_train", "mix_train", "en_test", "hi_test"];

pub fn run(cmd: &Command, cfg: &RunConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    match cmd {
        Command::Synth => synth(cfg, out),
        Command::Train(d) => train(cfg, out, &data_dir(d, out)),
        Command::Distill { data, model } => {
            let model = model.clone().unwrap_or_else(|| out.join("checkpoints/full.ckpt"));
            distill(cfg, out, &data_dir(data, out), &model)
        }
        Command::LmBuild { text, name, order } => lm_build(cfg, out, text, name, *order),
        Command::LmInterp {
            en,
            hi,
            lambda_en,
            test,
        } => lm_interp(out, en, hi, lambda_en.unwrap_or(cfg.lm.lambda_en), test),
        Command::Translit {
            input,
            table,
            rules,
            mode,
            url,
        } => translit(cfg, out, input, table.as_deref(), rules.as_deref(), mode.as_deref(), url.as_deref()),
        Command::Decode(a) => decode_corpus(cfg, out, a),
        Command::Eval { decode, oracle, system } => eval(cfg, out, decode, *oracle, system),
        Command::Analyze { model, corpus } => analyze(cfg, out, model, corpus),
        Command::ReproduceTrend => reproduce(cfg, out),
    }
}

fn data_dir(d: &DataArgs, out: &Path) -> PathBuf {
    d.data.clone().unwrap_or_else(|| out.join("data"))
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))
}

fn sentences_text(sentences: &[Vec<String>]) -> String {
    sentences.iter().map(|s| s.join(" ") + "\n").collect()
}

/// One whitespace-tokenised sentence per non-blank line.
fn read_sentences(path: &Path) -> Result<Vec<Vec<String>>> {
    Ok(read(path)?
        .lines()
        .map(|l| l.split_whitespace().map(str::to_string).collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect())
}

fn corpus(path: &Path) -> Result<Vec<Utterance>> {
    read_corpus(path).map_err(|e| match e {
        Error::Io(io) => Error::Data(format!("cannot read {}: {io}", path.display())),
        other => other,
    })
}

fn load_model(path: &Path) -> Result<AcousticModel> {
    checkpoint::load(path).map_err(|e| match e {
        Error::Io(io) => Error::Data(format!("cannot read {}: {io}", path.display())),
        other => other,
    })
}

/// An ARPA file or an interpolation descriptor, told apart by content.
fn load_lm(path: &Path) -> Result<Box<dyn LanguageModel>> {
    let text = read(path)?;
    if text.trim_start().starts_with("\\data\\") {
        return Ok(Box::new(parse_arpa(&text)?));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(Box::new(InterpDescriptor::parse(&text)?.load(base)?))
}

fn synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    let exp = pipeline::prepare(cfg)?;
    let d = out.join("data");
    fs::create_dir_all(&d)?;
    let sets = [&exp.en_train, &exp.hi_train, &exp.mix_train, &exp.en_test, &exp.hi_test];
    for (name, utts) in CORPORA.iter().zip(sets) {
        write_corpus(&d.join(format!("{name}.jsonl")), utts)?;
    }
    write(&d.join("lexicon_en.txt"), exp.en_lexicon.to_text())?;
    write(&d.join("lexicon_hi.txt"), exp.hi_lexicon.to_text())?;
    write(&d.join("lexicon.txt"), exp.union_lexicon.to_text())?;
    write(&d.join("translit.tsv"), exp.table.table_tsv())?;
    write(&d.join("text_en.txt"), sentences_text(&exp.en_text))?;
    write(&d.join("text_hi.txt"), sentences_text(&exp.hi_text))?;
    write(&d.join("text_en_test.txt"), sentences_text(&exp.en_test_text))?;
    write(&d.join("text_hi_test.txt"), sentences_text(&exp.hi_test_text))?;
    // The same Hindi test sentences before transliteration, as input for `translit`.
    let source = exp
        .spec
        .sentences(Lang::Hi, cfg.data.lm_test_sentences, seed::derive(cfg.seed, "text/hi-test"))?;
    write(&d.join("text_hi_test_source.txt"), sentences_text(&source))?;
    write(&out.join("config.txt"), cfg.to_text())?;
    eprintln!("wrote corpora, lexicons and LM text to {}", d.display());
    Ok(())
}

struct Corpora {
    en: Vec<Utterance>,
    hi: Vec<Utterance>,
    mix: Vec<Utterance>,
}

impl Corpora {
    fn load(dir: &Path) -> Result<Self> {
        let get = |n: &str| corpus(&dir.join(format!("{n}.jsonl")));
        Ok(Self {
            en: get("en_train")?,
            hi: get("hi_train")?,
            mix: get("mix_train")?,
        })
    }

    fn train_data(&self) -> TrainData<'_> {
        TrainData {
            en: &self.en,
            hi: &self.hi,
            mix: &self.mix,
        }
    }
}

fn save_stage(out: &Path, name: &str, model: &AcousticModel, history: &[LossRecord]) -> Result<()> {
    fs::create_dir_all(out.join("checkpoints"))?;
    checkpoint::save(model, &out.join("checkpoints").join(format!("{name}.ckpt")))?;
    write(&out.join("loss").join(format!("{name}.csv")), loss_csv(history))
}

fn report_params(out: &Path, single: &AcousticModel, sha: &AcousticModel) -> Result<()> {
    let p = ParamSummary::of(single, sha)?;
    write(&out.join("params.csv"), p.to_csv())?;
    println!(
        "parameters: single-head {}, SHA {} (+{}), overhead ratio {:.4}",
        p.single,
        p.sha,
        p.overhead(),
        p.ratio()
    );
    Ok(())
}

fn train(cfg: &RunConfig, out: &Path, data: &Path) -> Result<()> {
    let corpora = Corpora::load(data)?;
    let data = corpora.train_data();
    let mut progress = |m: &str| eprintln!("{m}");

    progress("stage single (English-only baseline)");
    let mono_plan = StagePlan {
        data: DataSelector::EnOnly,
        ..cfg.stage(Stage::Single).clone()
    };
    let init = AcousticModel::single_head(cfg.model_config(), &mut seed::rng(cfg.seed, "init/mono-en"))?;
    let (mono, h) = train_stage(init, &data, &mono_plan, seed::derive(cfg.seed, "train/mono-en"))?;
    save_stage(out, "mono_en", &mono, &h)?;

    let (models, losses) = pipeline::train_sha_stages(cfg, &data, &mut progress)?;
    for ((stage, m), (name, h)) in models.iter().zip(&losses) {
        debug_assert_eq!(stage.as_str(), name);
        save_stage(out, name, m, h)?;
    }
    write(&out.join("config.txt"), cfg.to_text())?;
    let single = &models[0].1;
    let full = &models.last().expect("four stages").1;
    report_params(out, single, full)
}

fn distill(cfg: &RunConfig, out: &Path, data: &Path, model: &Path) -> Result<()> {
    let corpora = Corpora::load(data)?;
    let full = load_model(model)?;
    eprintln!("stage distill");
    let (student, h) = pipeline::distill_stage(cfg, &full, &corpora.train_data())?;
    save_stage(out, "distill", &student, &h)?;
    println!("distilled model written to {}", out.join("checkpoints/distill.ckpt").display());
    Ok(())
}

fn lm_build(cfg: &RunConfig, out: &Path, text: &Path, name: &str, order: Option<usize>) -> Result<()> {
    if name.is_empty() || name.contains(['/', '\\']) {
        return Err(Error::Config(format!("LM name {name:?} must be a plain file stem")));
    }
    let sentences = read_sentences(text)?;
    let lm = NGramModel::from_sentences(&sentences, order.unwrap_or(cfg.lm.order))?;
    let path = out.join("lm").join(format!("{name}.arpa"));
    fs::create_dir_all(out.join("lm"))?;
    export_arpa(&lm, &path)?;
    println!("{}: order {}, {} sentences", path.display(), lm.order(), sentences.len());
    Ok(())
}

fn lm_interp(out: &Path, en: &Path, hi: &Path, lambda_en: f64, tests: &[PathBuf]) -> Result<()> {
    let absolute = |p: &Path| -> Result<PathBuf> {
        fs::canonicalize(p).map_err(|e| Error::Data(format!("cannot read {}: {e}", p.display())))
    };
    let desc = InterpDescriptor {
        en: absolute(en)?,
        hi: absolute(hi)?,
        lambda_en,
    };
    let mix = desc.load(Path::new("."))?;
    let (en_lm, hi_lm) = mix.components();
    write(&out.join("lm/hinglish.interp"), desc.render())?;

    let mut csv = String::from("lm,testset,perplexity\n");
    for test in tests {
        let text = read_sentences(test)?;
        let stem = test.file_stem().map_or_else(|| "test".into(), |s| s.to_string_lossy().into_owned());
        let models: [(&str, &dyn LanguageModel); 3] = [("en", en_lm), ("hi", hi_lm), ("hinglish", &mix as &InterpolatedLM)];
        for (name, lm) in models {
            let ppl = perplexity(lm, &text)?;
            csv.push_str(&format!("{name},{stem},{ppl}\n"));
            println!("{name:>8} on {stem}: perplexity {ppl:.3}");
        }
    }
    if !tests.is_empty() {
        write(&out.join("lm/perplexity.csv"), csv)?;
    }
    Ok(())
}

fn translit(
    cfg: &RunConfig,
    out: &Path,
    input: &Path,
    table: Option<&Path>,
    rules: Option<&Path>,
    mode: Option<&str>,
    url: Option<&str>,
) -> Result<()> {
    let mode = match mode {
        Some(m) => m.to_string(),
        None => match cfg.translit.mode {
            TranslitMode::Word => "word".into(),
            TranslitMode::Contextual => "contextual".into(),
        },
    };
    let load_table = || -> Result<TranslitTable> {
        let path = table.ok_or_else(|| Error::Config(format!("{mode} transliteration needs --table")))?;
        let mut t = TranslitTable::parse_table(&read(path)?)?;
        if let Some(r) = rules {
            t.parse_rules(&read(r)?)?;
        }
        Ok(t)
    };
    let provider = match mode.as_str() {
        "word" => TranslitProvider::WordTable(load_table()?),
        "contextual" => TranslitProvider::ContextualRules(load_table()?),
        "remote" => {
            let url = url
                .map(str::to_string)
                .or_else(|| cfg.translit.remote_url.clone())
                .ok_or_else(|| Error::Config("remote transliteration needs --url or [translit] remote_url".into()))?;
            TranslitProvider::Remote(RemoteClient::new(RemoteConfig::new(url))?)
        }
        other => return Err(Error::Config(format!("unknown transliteration mode {other:?} (word, contextual, remote)"))),
    };
    let mut text = String::new();
    let mut misses = 0;
    for line in read(input)?.lines() {
        let t = transliterate(line, &provider)?;
        misses += t.misses.len();
        text.push_str(&t.text);
        text.push('\n');
    }
    write(&out.join("translit.txt"), text)?;
    println!("transliterated {} ({misses} uncovered tokens kept as is)", input.display());
    Ok(())
}

struct DecodeInputs {
    corpus: Vec<Utterance>,
    lexicon: Lexicon,
    lm: Box<dyn LanguageModel>,
    model: Option<AcousticModel>,
    mode: EvalMode,
}

fn decode_inputs(a: &DecodeArgs, oracle: bool) -> Result<DecodeInputs> {
    let mode = if oracle {
        EvalMode::Oracle
    } else {
        EvalMode::from_str(&a.mode).map_err(|e| Error::Config(e.to_string()))?
    };
    let model = match (&a.model, mode) {
        (_, EvalMode::Oracle) => None,
        (Some(p), _) => Some(load_model(p)?),
        (None, _) => return Err(Error::Config(format!("mode {} needs --model", a.mode))),
    };
    Ok(DecodeInputs {
        corpus: corpus(&a.corpus)?,
        lexicon: Lexicon::parse(&read(&a.lexicon)?)?,
        lm: load_lm(&a.lm)?,
        model,
        mode,
    })
}

fn posteriors(inputs: &DecodeInputs, u: &Utterance) -> Result<Posteriors> {
    let head = match inputs.mode {
        EvalMode::Single => HeadMode::Single,
        EvalMode::Sha => HeadMode::Sha,
        EvalMode::Head(l) => HeadMode::Head(l),
        EvalMode::Oracle => {
            let k = inputs
                .lexicon
                .iter()
                .flat_map(|(_, p)| p.iter().copied())
                .chain(u.labels.iter().copied())
                .max()
                .map_or(1, |c| c + 1);
            return oracle_posteriors(u, k);
        }
    };
    inputs.model.as_ref().expect("checked in decode_inputs").posteriors(&u.frames, head)
}

fn decode_corpus(cfg: &RunConfig, out: &Path, a: &DecodeArgs) -> Result<()> {
    let inputs = decode_inputs(a, a.mode == "oracle")?;
    let mut text = String::new();
    for u in &inputs.corpus {
        let hyp = decode(&posteriors(&inputs, u)?, &inputs.lexicon, inputs.lm.as_ref(), &cfg.decode)?;
        text.push_str(&format!("{}\t{}\n", u.id, hyp.words.join(" ")));
    }
    write(&out.join("hyp.txt"), text)?;
    println!("decoded {} utterances into {}", inputs.corpus.len(), out.join("hyp.txt").display());
    Ok(())
}

fn eval(cfg: &RunConfig, out: &Path, a: &DecodeArgs, oracle: bool, system: &str) -> Result<()> {
    let inputs = decode_inputs(a, oracle || a.mode == "oracle")?;
    let report = evaluate_testset(
        system,
        inputs.model.as_ref(),
        inputs.mode,
        &inputs.corpus,
        &inputs.lexicon,
        inputs.lm.as_ref(),
        &cfg.decode,
    )?;
    write(&out.join("report.csv"), report.to_csv())?;
    print!("{}", report.to_csv());
    Ok(())
}

fn analyze(cfg: &RunConfig, out: &Path, model: &Path, corpus_path: &Path) -> Result<()> {
    let model = load_model(model)?;
    let utts = corpus(corpus_path)?;
    let lid = analyze_weights(cfg, &model, &utts)?;
    let d = out.join("analysis");
    write(&d.join("lid.csv"), lid.to_csv())?;
    write(&d.join("gmm_en.csv"), lid.gmm_en.to_csv())?;
    write(&d.join("gmm_hi.csv"), lid.gmm_hi.to_csv())?;
    write(&d.join("hist_w_en_en.csv"), &lid.histogram_en)?;
    write(&d.join("hist_w_hi_hi.csv"), &lid.histogram_hi)?;
    print!("{}", lid.to_csv());
    Ok(())
}

fn reproduce(cfg: &RunConfig, out: &Path) -> Result<()> {
    let outcome = pipeline::reproduce_trend(cfg, out, &mut |m| eprintln!("{m}"))?;
    print!("{}", outcome.report.to_csv());
    let p = &outcome.params;
    println!(
        "parameters: single-head {}, SHA {} (+{}), overhead ratio {:.4}",
        p.single,
        p.sha,
        p.overhead(),
        p.ratio()
    );
    Ok(())
}
