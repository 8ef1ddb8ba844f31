//! Staged training: SingleHead, split towers, attention-only, full model,
//! and teacher–student distillation.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::corpus::Utterance;
use crate::error::{Error, Result};
use crate::graph::{check_distribution_rows, Graph, Var};
use crate::lang::{Lang, UttLang};
use crate::model::{build_chunks, AcousticModel, HeadMode, ModelKind, ParamGroup, Posteriors};
use crate::optim::AdamState;
use crate::seed;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Single,
    Split,
    AttentionOnly,
    Full,
    Distill,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Single, Stage::Split, Stage::AttentionOnly, Stage::Full, Stage::Distill];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Single => "single",
            Stage::Split => "split",
            Stage::AttentionOnly => "attention_only",
            Stage::Full => "full",
            Stage::Distill => "distill",
        }
    }

    /// Which parameter groups the stage may update.
    pub fn trainable(self) -> GroupMask {
        match self {
            Stage::Single | Stage::Full | Stage::Distill => GroupMask::ALL,
            Stage::Split => GroupMask {
                attention: false,
                ..GroupMask::ALL
            },
            Stage::AttentionOnly => GroupMask {
                shared: false,
                tower_en: false,
                tower_hi: false,
                attention: true,
            },
        }
    }

    fn default_data(self) -> DataSelector {
        match self {
            Stage::Single | Stage::Split => DataSelector::Pooled,
            Stage::AttentionOnly | Stage::Full | Stage::Distill => DataSelector::PooledMix,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Plan(format!("unknown stage {s:?}")))
    }
}

/// Per-group trainability; `true` means the group is updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupMask {
    pub shared: bool,
    pub tower_en: bool,
    pub tower_hi: bool,
    pub attention: bool,
}

impl GroupMask {
    pub const ALL: GroupMask = GroupMask {
        shared: true,
        tower_en: true,
        tower_hi: true,
        attention: true,
    };

    pub fn allows(&self, g: ParamGroup) -> bool {
        match g {
            ParamGroup::Shared => self.shared,
            ParamGroup::Tower(0) => self.tower_en,
            ParamGroup::Tower(_) => self.tower_hi,
            ParamGroup::Attention => self.attention,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSelector {
    EnOnly,
    HiOnly,
    Pooled,
    PooledMix,
}

impl DataSelector {
    pub fn as_str(self) -> &'static str {
        match self {
            DataSelector::EnOnly => "en",
            DataSelector::HiOnly => "hi",
            DataSelector::Pooled => "pooled",
            DataSelector::PooledMix => "pooled+mix",
        }
    }

    fn sources(self) -> &'static [UttLang] {
        match self {
            DataSelector::EnOnly => &[UttLang::En],
            DataSelector::HiOnly => &[UttLang::Hi],
            DataSelector::Pooled => &[UttLang::En, UttLang::Hi],
            DataSelector::PooledMix => &[UttLang::En, UttLang::Hi, UttLang::Mix],
        }
    }
}

impl FromStr for DataSelector {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [Self::EnOnly, Self::HiOnly, Self::Pooled, Self::PooledMix]
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::Plan(format!("unknown data selector {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StagePlan {
    pub stage: Stage,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub trainable: GroupMask,
    pub data: DataSelector,
}

impl StagePlan {
    /// 5 epochs, batch 32 and the stage's own data mix. The learning rate is
    /// 1e-3, except 5e-3 for the attention-only stage, whose few parameters
    /// need larger steps to move away from the uniform initial pooling.
    pub fn new(stage: Stage) -> Self {
        let learning_rate = if stage == Stage::AttentionOnly { 5e-3 } else { 1e-3 };
        Self {
            stage,
            epochs: 5,
            batch_size: 32,
            learning_rate,
            trainable: stage.trainable(),
            data: stage.default_data(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Plan("epochs and batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Plan(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.trainable != self.stage.trainable() {
            return Err(Error::Plan(format!("freeze mask does not match stage {}", self.stage)));
        }
        if self.stage == Stage::Split && self.data.sources().contains(&UttLang::Mix) {
            return Err(Error::Plan("split stage routes by batch language; code-mixed data cannot be routed".into()));
        }
        Ok(())
    }

    fn check_model(&self, model: &AcousticModel) -> Result<()> {
        let want = if self.stage == Stage::Single { ModelKind::SingleHead } else { ModelKind::Sha };
        if model.kind() != want {
            return Err(Error::Plan(format!(
                "stage {} needs a {want:?} model, got {:?}",
                self.stage,
                model.kind()
            )));
        }
        Ok(())
    }

    fn head_mode(&self, lang: UttLang) -> Result<HeadMode> {
        Ok(match self.stage {
            Stage::Single => HeadMode::Single,
            Stage::Split => HeadMode::Head(
                lang.single()
                    .ok_or_else(|| Error::Plan("split stage cannot route a code-mixed batch".into()))?,
            ),
            Stage::AttentionOnly | Stage::Full | Stage::Distill => HeadMode::Sha,
        })
    }
}

/// Teacher ensemble weights; the two must sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleWeights {
    pub non_streaming: f64,
    pub sha: f64,
}

impl EnsembleWeights {
    pub fn new(non_streaming: f64, sha: f64) -> Result<Self> {
        let ok = |w: f64| (0.0..=1.0).contains(&w);
        if !ok(non_streaming) || !ok(sha) || (non_streaming + sha - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "ensemble weights ({non_streaming}, {sha}) must lie in [0, 1] and sum to 1"
            )));
        }
        Ok(Self { non_streaming, sha })
    }
}

impl Default for EnsembleWeights {
    fn default() -> Self {
        Self {
            non_streaming: 0.4,
            sha: 0.6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistillConfig {
    pub w_kld: f64,
    pub ensemble: EnsembleWeights,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            w_kld: 0.95,
            ensemble: EnsembleWeights::default(),
        }
    }
}

impl DistillConfig {
    pub fn new(w_kld: f64, ensemble: EnsembleWeights) -> Result<Self> {
        if !(0.0..=1.0).contains(&w_kld) {
            return Err(Error::Config(format!("w_kld = {w_kld} must lie in [0, 1]")));
        }
        EnsembleWeights::new(ensemble.non_streaming, ensemble.sha)?;
        Ok(Self { w_kld, ensemble })
    }
}

/// Frame-wise convex combination `w_a·a + w_b·b` of two posterior tensors.
pub fn combine_posteriors(a: &Posteriors, b: &Posteriors, w: EnsembleWeights) -> Result<Posteriors> {
    if a.num_chenones() != b.num_chenones() {
        return Err(Error::Inventory(format!(
            "teacher inventories differ: {} vs {}",
            a.num_chenones(),
            b.num_chenones()
        )));
    }
    if a.frames() != b.frames() {
        return Err(Error::Dimension(format!("{} vs {} frames", a.frames(), b.frames())));
    }
    let data = a
        .tensor()
        .data()
        .iter()
        .zip(b.tensor().data())
        .map(|(x, y)| w.non_streaming * x + w.sha * y)
        .collect();
    Posteriors::new(Tensor::new(a.tensor().shape().to_vec(), data)?)
}

/// Ensemble teacher for one utterance: the non-streaming model sees the
/// whole remaining utterance, the SHA model its streaming chunks.
pub fn ensemble_teacher(
    non_streaming: &AcousticModel,
    sha: &AcousticModel,
    weights: EnsembleWeights,
    frames: &Tensor,
) -> Result<Posteriors> {
    if non_streaming.config.num_chenones != sha.config.num_chenones {
        return Err(Error::Inventory("teacher models have different chenone inventories".into()));
    }
    let mode = |m: &AcousticModel| match m.kind() {
        ModelKind::SingleHead => HeadMode::Single,
        ModelKind::Sha => HeadMode::Sha,
    };
    let full = non_streaming.posteriors_full_context(frames, mode(non_streaming))?;
    let streaming = sha.posteriors(frames, mode(sha))?;
    combine_posteriors(&full, &streaming, weights)
}

/// The three training corpora; empty slices are allowed when a plan does
/// not select them.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub en: &'a [Utterance],
    pub hi: &'a [Utterance],
    pub mix: &'a [Utterance],
}

impl<'a> TrainData<'a> {
    fn source(&self, l: UttLang) -> &'a [Utterance] {
        match l {
            UttLang::En => self.en,
            UttLang::Hi => self.hi,
            UttLang::Mix => self.mix,
        }
    }
}

/// One language-homogeneous minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `[B·(lookahead+1) × feature_dim]`
    pub chunks: Tensor,
    pub labels: Vec<usize>,
    pub lang: UttLang,
    /// `[B × K]` teacher posteriors for distillation.
    pub teacher: Option<Tensor>,
}

impl Batch {
    /// Gathers frames `(utterance, t)` into a batch.
    pub fn gather(
        model: &AcousticModel,
        utts: &[Utterance],
        items: &[(usize, usize)],
        lang: UttLang,
        teacher: Option<&[Posteriors]>,
    ) -> Result<Self> {
        let group = model.config.chunk_len();
        let mut rows = Vec::with_capacity(items.len() * group * model.config.feature_dim);
        let mut labels = Vec::with_capacity(items.len());
        let mut t_rows = Vec::new();
        for &(u, t) in items {
            let utt = &utts[u];
            let c = build_chunks(&utt.frames, &[t], group)?;
            rows.extend_from_slice(c.data());
            labels.push(utt.labels[t]);
            if let Some(tp) = teacher {
                t_rows.extend_from_slice(tp[u].row(t));
            }
        }
        Ok(Self {
            chunks: Tensor::new(vec![items.len() * group, model.config.feature_dim], rows)?,
            labels,
            lang,
            teacher: match teacher {
                Some(_) => Some(Tensor::new(vec![items.len(), model.config.num_chenones], t_rows)?),
                None => None,
            },
        })
    }
}

/// Builds the stage loss on `g`: cross-entropy, or for distillation
/// `(1 − w_kld)·CE + w_kld·KL(teacher ∥ student)`.
pub fn batch_loss(
    model: &AcousticModel,
    g: &mut Graph,
    params: &crate::model::BoundParams,
    batch: &Batch,
    plan: &StagePlan,
    distill: Option<&DistillConfig>,
) -> Result<Var> {
    let mode = plan.head_mode(batch.lang)?;
    let out = model.forward_batch(g, params, &batch.chunks, model.config.chunk_len(), mode)?;
    let ce = g.cross_entropy(out.log_probs, &batch.labels)?;
    if plan.stage != Stage::Distill {
        return Ok(ce);
    }
    let cfg = distill.ok_or_else(|| Error::Plan("distill stage needs a distillation config".into()))?;
    let teacher = batch
        .teacher
        .as_ref()
        .ok_or_else(|| Error::Plan("distillation batch carries no teacher posteriors".into()))?;
    let kld = g.kl_divergence(teacher, out.log_probs)?;
    let a = g.scale(ce, 1.0 - cfg.w_kld)?;
    let b = g.scale(kld, cfg.w_kld)?;
    g.add(a, b)
}

/// Loss and gradients for every parameter (declaration order) on one batch.
pub fn compute_gradients(
    model: &AcousticModel,
    batch: &Batch,
    plan: &StagePlan,
    distill: Option<&DistillConfig>,
) -> Result<(f64, Vec<Tensor>)> {
    let mut g = Graph::new();
    let p = model.bind(&mut g)?;
    let loss = batch_loss(model, &mut g, &p, batch, plan, distill)?;
    let value = g.value(loss).data()[0];
    g.backward(loss)?;
    Ok((value, p.all.iter().map(|&v| g.grad(v)).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
}

pub fn loss_csv(history: &[LossRecord]) -> String {
    let mut out = String::from("epoch,batch,loss\n");
    for r in history {
        let _ = writeln!(out, "{},{},{}", r.epoch, r.batch, r.loss);
    }
    out
}

/// Shuffled language-homogeneous batches of `(utterance, frame)` items.
fn epoch_batches(data: &TrainData, plan: &StagePlan, rng: &mut seed::Rng) -> Vec<(UttLang, Vec<(usize, usize)>)> {
    let mut batches = Vec::new();
    for &lang in plan.data.sources() {
        let utts = data.source(lang);
        let mut items: Vec<(usize, usize)> = utts
            .iter()
            .enumerate()
            .flat_map(|(u, utt)| (0..utt.num_frames()).map(move |t| (u, t)))
            .collect();
        items.shuffle(rng);
        batches.extend(items.chunks(plan.batch_size).map(|c| (lang, c.to_vec())));
    }
    batches.shuffle(rng);
    batches
}

fn run_stage(
    mut model: AcousticModel,
    data: &TrainData,
    plan: &StagePlan,
    distill: Option<(&DistillConfig, &BTreeMap<UttLang, Vec<Posteriors>>)>,
    seed: u64,
) -> Result<(AcousticModel, Vec<LossRecord>)> {
    plan.validate()?;
    plan.check_model(&model)?;
    for &lang in plan.data.sources() {
        let utts = data.source(lang);
        if utts.is_empty() {
            return Err(Error::Plan(format!("stage {} selects {lang} data but none was given", plan.stage)));
        }
        for u in utts {
            u.validate(Some(model.config.num_chenones))?;
            if u.lang != lang {
                return Err(Error::Data(format!("utterance {} is {} but was given as {lang}", u.id, u.lang)));
            }
        }
    }
    let mask: Vec<bool> = model.params().iter().map(|(g, _)| plan.trainable.allows(*g)).collect();
    let mut adam = {
        let params: Vec<&Tensor> = model.params().into_iter().map(|(_, t)| t).collect();
        AdamState::for_params(&params, plan.learning_rate)
    };
    let mut history = Vec::new();
    for epoch in 0..plan.epochs {
        let mut rng = seed::rng(seed, &format!("train/{}/epoch{epoch}", plan.stage));
        for (b, (lang, items)) in epoch_batches(data, plan, &mut rng).into_iter().enumerate() {
            let teacher = distill.map(|(_, t)| t[&lang].as_slice());
            let batch = Batch::gather(&model, data.source(lang), &items, lang, teacher)?;
            let (loss, grads) = compute_gradients(&model, &batch, plan, distill.map(|(c, _)| c))?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("loss became {loss} in stage {}", plan.stage)));
            }
            adam.step_masked(&mut model.params_mut(), &grads, &mask)?;
            history.push(LossRecord { epoch, batch: b, loss });
        }
    }
    Ok((model, history))
}

/// Runs one cross-entropy stage (`single`, `split`, `attention_only`, `full`).
pub fn train_stage(
    model: AcousticModel,
    data: &TrainData,
    plan: &StagePlan,
    seed: u64,
) -> Result<(AcousticModel, Vec<LossRecord>)> {
    if plan.stage == Stage::Distill {
        return Err(Error::Plan("use distill() for the distillation stage".into()));
    }
    run_stage(model, data, plan, None, seed)
}

/// Teacher–student training of `student`. Teacher posteriors are computed
/// once, before any update, from `non_streaming` (full context) and
/// `sha_teacher` (streaming).
pub fn distill(
    student: AcousticModel,
    non_streaming: &AcousticModel,
    sha_teacher: &AcousticModel,
    data: &TrainData,
    cfg: &DistillConfig,
    plan: &StagePlan,
    seed: u64,
) -> Result<(AcousticModel, Vec<LossRecord>)> {
    DistillConfig::new(cfg.w_kld, cfg.ensemble)?;
    if plan.stage != Stage::Distill {
        return Err(Error::Plan(format!("distill() needs the distill stage, got {}", plan.stage)));
    }
    let mut teachers = BTreeMap::new();
    for &lang in plan.data.sources() {
        let posts = data
            .source(lang)
            .iter()
            .map(|u| {
                let p = ensemble_teacher(non_streaming, sha_teacher, cfg.ensemble, &u.frames)?;
                check_distribution_rows(p.tensor(), 1e-6)?;
                Ok(p)
            })
            .collect::<Result<Vec<_>>>()?;
        teachers.insert(lang, posts);
    }
    run_stage(student, data, plan, Some((cfg, &teachers)), seed)
}

/// Frame accuracy of argmax posteriors, overall and per frame language.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameAccuracy {
    pub correct: usize,
    pub total: usize,
    pub per_lang: BTreeMap<Lang, (usize, usize)>,
}

impl FrameAccuracy {
    pub fn overall(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }

    pub fn lang(&self, l: Lang) -> Option<f64> {
        self.per_lang.get(&l).map(|&(c, t)| c as f64 / t as f64)
    }
}

pub fn evaluate_frame_accuracy(model: &AcousticModel, corpus: &[Utterance], mode: HeadMode) -> Result<FrameAccuracy> {
    if corpus.is_empty() {
        return Err(Error::Data("frame accuracy needs a non-empty corpus".into()));
    }
    let mut acc = FrameAccuracy {
        correct: 0,
        total: 0,
        per_lang: BTreeMap::new(),
    };
    for u in corpus {
        u.validate(Some(model.config.num_chenones))?;
        let post = model.posteriors(&u.frames, mode)?;
        for (t, best) in post.tensor().argmax_rows().into_iter().enumerate() {
            let hit = usize::from(best == u.labels[t]);
            acc.correct += hit;
            acc.total += 1;
            let e = acc.per_lang.entry(u.frame_langs[t]).or_insert((0, 0));
            e.0 += hit;
            e.1 += 1;
        }
    }
    Ok(acc)
}
