//! SingleHead, SplitHead and SplitHead-with-Attention acoustic models.
//!
//! All variants share one trunk: an input layer (affine + ReLU) followed by
//! residual blocks `h + relu(h·W + b)`. The last `split_depth` blocks move
//! from the trunk into the per-language towers, each of which ends in an
//! affine projection onto the shared chenone inventory.
//!
//! Frame `t` is scored from a chunk holding frames `t..=t+L`. The towers
//! see only the trunk output of frame `t`; the attention head pools the
//! trunk outputs of the whole chunk with a single learned query and maps
//! the pooled vector to two language logits. The softmax of those logits
//! gives `(w_en, w_hi)`, which mix the two towers' logits before the final
//! softmax.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{check_distribution_rows, Graph, Var};
use crate::lang::Lang;
use crate::tensor::{kernels, Tensor};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub num_shared_blocks: usize,
    pub num_chenones: usize,
    pub split_depth: usize,
    pub lookahead: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            feature_dim: 16,
            hidden_dim: 32,
            num_shared_blocks: 3,
            num_chenones: 64,
            split_depth: 0,
            lookahead: 4,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.hidden_dim == 0 || self.num_chenones == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if self.split_depth > self.num_shared_blocks {
            return Err(Error::Config(format!(
                "split_depth {} exceeds num_shared_blocks {}",
                self.split_depth, self.num_shared_blocks
            )));
        }
        Ok(())
    }

    pub fn chunk_len(&self) -> usize {
        self.lookahead + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    SingleHead,
    Sha,
}

/// Parameter groups used by freeze masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Shared,
    Tower(usize),
    Attention,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Affine {
    fn xavier<R: Rng>(d_in: usize, d_out: usize, rng: &mut R) -> Self {
        Self {
            weight: Tensor::xavier(&[d_in, d_out], d_in, d_out, rng),
            bias: Tensor::zeros(&[d_out]),
        }
    }

    fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[d_in, d_out]),
            bias: Tensor::zeros(&[d_out]),
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tower {
    pub blocks: Vec<Affine>,
    pub projection: Affine,
}

impl Tower {
    pub fn param_count(&self) -> usize {
        self.blocks.iter().map(Affine::param_count).sum::<usize>() + self.projection.param_count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionHead {
    /// `[hidden × 1]`
    pub query: Tensor,
    /// hidden → 2 language logits
    pub output: Affine,
}

impl AttentionHead {
    /// Random query, zero output layer: the initial weights are exactly (0.5, 0.5).
    pub fn init<R: Rng>(hidden: usize, rng: &mut R) -> Self {
        Self {
            query: Tensor::xavier(&[hidden, 1], hidden, 1, rng),
            output: Affine::zeros(hidden, 2),
        }
    }

    pub fn param_count(&self) -> usize {
        self.query.len() + self.output.param_count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcousticModel {
    pub config: ModelConfig,
    pub input: Affine,
    pub shared: Vec<Affine>,
    /// One tower for SingleHead, `[en, hi]` for SHA.
    pub towers: Vec<Tower>,
    pub attention: Option<AttentionHead>,
}

/// How the two language towers are combined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeadMode {
    Single,
    Sha,
    /// SHA with externally fixed `(w_en, w_hi)`.
    ShaFixed([f64; 2]),
    Head(Lang),
}

/// Per-frame posteriors over the chenone inventory; rows sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Posteriors(Tensor);

impl Posteriors {
    pub fn new(probs: Tensor) -> Result<Self> {
        if probs.shape().len() != 2 {
            return Err(Error::Dimension(format!("posteriors must be 2-D, got {:?}", probs.shape())));
        }
        check_distribution_rows(&probs, 1e-9)?;
        Ok(Self(probs))
    }

    pub fn from_logits(logits: &Tensor) -> Result<Self> {
        logits.check_finite("logits")?;
        let mut p = Tensor::zeros(logits.shape());
        for r in 0..logits.rows() {
            kernels::softmax_row(logits.row(r), p.row_mut(r));
        }
        Self::new(p)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn frames(&self) -> usize {
        self.0.rows()
    }

    pub fn num_chenones(&self) -> usize {
        self.0.cols()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        self.0.row(t)
    }
}

/// Graph handles for every parameter, in declaration order.
pub struct BoundParams {
    input: (Var, Var),
    shared: Vec<(Var, Var)>,
    towers: Vec<(Vec<(Var, Var)>, (Var, Var))>,
    attention: Option<(Var, Var, Var)>,
    pub all: Vec<Var>,
}

/// Outputs of one batched forward pass.
pub struct BatchOutput {
    pub logits: Var,
    pub log_probs: Var,
    pub lang_weights: Option<Var>,
}

/// Stacks chunks for frames `ts` of `frames`, replicating the final
/// frame when the lookahead runs past the end of the utterance.
pub fn build_chunks(frames: &Tensor, ts: &[usize], chunk_len: usize) -> Result<Tensor> {
    let t_max = frames.rows();
    let f = frames.cols();
    let mut data = Vec::with_capacity(ts.len() * chunk_len * f);
    for &t in ts {
        if t >= t_max {
            return Err(Error::Index(format!("frame {t} of {t_max}")));
        }
        for j in 0..chunk_len {
            data.extend_from_slice(frames.row((t + j).min(t_max - 1)));
        }
    }
    Tensor::new(vec![ts.len() * chunk_len, f], data)
}

impl AcousticModel {
    pub fn single_head<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_dim;
        let input = Affine::xavier(config.feature_dim, h, rng);
        let shared = (0..config.num_shared_blocks - config.split_depth)
            .map(|_| Affine::xavier(h, h, rng))
            .collect();
        let tower = Tower {
            blocks: (0..config.split_depth).map(|_| Affine::xavier(h, h, rng)).collect(),
            projection: Affine::xavier(h, config.num_chenones, rng),
        };
        Ok(Self {
            config,
            input,
            shared,
            towers: vec![tower],
            attention: None,
        })
    }

    /// Freshly initialised SHA model (independent towers).
    pub fn sha<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        let mut m = Self::single_head(config, rng)?;
        let h = m.config.hidden_dim;
        let k = m.config.num_chenones;
        let hi = Tower {
            blocks: (0..m.config.split_depth).map(|_| Affine::xavier(h, h, rng)).collect(),
            projection: Affine::xavier(h, k, rng),
        };
        m.towers.push(hi);
        m.attention = Some(AttentionHead::init(h, rng));
        Ok(m)
    }

    /// All-zero parameters of the given kind.
    pub fn zeros(config: ModelConfig, kind: ModelKind) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_dim;
        let tower = || Tower {
            blocks: (0..config.split_depth).map(|_| Affine::zeros(h, h)).collect(),
            projection: Affine::zeros(h, config.num_chenones),
        };
        let (towers, attention) = match kind {
            ModelKind::SingleHead => (vec![tower()], None),
            ModelKind::Sha => (
                vec![tower(), tower()],
                Some(AttentionHead {
                    query: Tensor::zeros(&[h, 1]),
                    output: Affine::zeros(h, 2),
                }),
            ),
        };
        Ok(Self {
            input: Affine::zeros(config.feature_dim, h),
            shared: (0..config.num_shared_blocks - config.split_depth)
                .map(|_| Affine::zeros(h, h))
                .collect(),
            towers,
            attention,
            config,
        })
    }

    /// Converts a SingleHead model into SHA form: both towers copy the single
    /// tower, the trunk is copied, and a new attention head starts at (0.5, 0.5).
    pub fn split_from_single<R: Rng>(single: &AcousticModel, rng: &mut R) -> Result<Self> {
        if single.kind() != ModelKind::SingleHead {
            return Err(Error::Model("split_from_single needs a SingleHead model".into()));
        }
        let mut m = single.clone();
        m.towers.push(single.towers[0].clone());
        m.attention = Some(AttentionHead::init(m.config.hidden_dim, rng));
        Ok(m)
    }

    pub fn kind(&self) -> ModelKind {
        if self.attention.is_some() {
            ModelKind::Sha
        } else {
            ModelKind::SingleHead
        }
    }

    /// Checks the structural invariants (shapes, shared chenone inventory).
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let c = &self.config;
        let h = c.hidden_dim;
        let expect = |a: &Affine, i: usize, o: usize, what: &str| -> Result<()> {
            if a.weight.shape() != [i, o] || a.bias.shape() != [o] {
                return Err(Error::Model(format!("{what} has shape {:?}", a.weight.shape())));
            }
            Ok(())
        };
        expect(&self.input, c.feature_dim, h, "input layer")?;
        if self.shared.len() != c.num_shared_blocks - c.split_depth {
            return Err(Error::Model("shared block count disagrees with config".into()));
        }
        for b in &self.shared {
            expect(b, h, h, "shared block")?;
        }
        let want_towers = match self.kind() {
            ModelKind::SingleHead => 1,
            ModelKind::Sha => 2,
        };
        if self.towers.len() != want_towers {
            return Err(Error::Model(format!("{} towers for {:?}", self.towers.len(), self.kind())));
        }
        for t in &self.towers {
            if t.blocks.len() != c.split_depth {
                return Err(Error::Model("tower depth disagrees with split_depth".into()));
            }
            for b in &t.blocks {
                expect(b, h, h, "tower block")?;
            }
            expect(&t.projection, h, c.num_chenones, "projection")?;
        }
        if let Some(a) = &self.attention {
            if a.query.shape() != [h, 1] {
                return Err(Error::Model("attention query shape".into()));
            }
            expect(&a.output, h, 2, "attention output")?;
        }
        Ok(())
    }

    /// Parameters in declaration order with their freeze groups.
    pub fn params(&self) -> Vec<(ParamGroup, &Tensor)> {
        let mut out = vec![
            (ParamGroup::Shared, &self.input.weight),
            (ParamGroup::Shared, &self.input.bias),
        ];
        for b in &self.shared {
            out.push((ParamGroup::Shared, &b.weight));
            out.push((ParamGroup::Shared, &b.bias));
        }
        for (i, t) in self.towers.iter().enumerate() {
            for b in &t.blocks {
                out.push((ParamGroup::Tower(i), &b.weight));
                out.push((ParamGroup::Tower(i), &b.bias));
            }
            out.push((ParamGroup::Tower(i), &t.projection.weight));
            out.push((ParamGroup::Tower(i), &t.projection.bias));
        }
        if let Some(a) = &self.attention {
            out.push((ParamGroup::Attention, &a.query));
            out.push((ParamGroup::Attention, &a.output.weight));
            out.push((ParamGroup::Attention, &a.output.bias));
        }
        out
    }

    /// Same order as [`params`](Self::params).
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.input.weight, &mut self.input.bias];
        for b in &mut self.shared {
            out.push(&mut b.weight);
            out.push(&mut b.bias);
        }
        for t in &mut self.towers {
            for b in &mut t.blocks {
                out.push(&mut b.weight);
                out.push(&mut b.bias);
            }
            out.push(&mut t.projection.weight);
            out.push(&mut t.projection.bias);
        }
        if let Some(a) = &mut self.attention {
            out.push(&mut a.query);
            out.push(&mut a.output.weight);
            out.push(&mut a.output.bias);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Registers every parameter as a leaf of `g`.
    pub fn bind(&self, g: &mut Graph) -> Result<BoundParams> {
        let mut all = Vec::new();
        let mut leaf = |g: &mut Graph, t: &Tensor| -> Result<Var> {
            let v = g.leaf(t.clone())?;
            all.push(v);
            Ok(v)
        };
        let input = (leaf(g, &self.input.weight)?, leaf(g, &self.input.bias)?);
        let mut shared = Vec::new();
        for b in &self.shared {
            shared.push((leaf(g, &b.weight)?, leaf(g, &b.bias)?));
        }
        let mut towers = Vec::new();
        for t in &self.towers {
            let mut blocks = Vec::new();
            for b in &t.blocks {
                blocks.push((leaf(g, &b.weight)?, leaf(g, &b.bias)?));
            }
            let proj = (leaf(g, &t.projection.weight)?, leaf(g, &t.projection.bias)?);
            towers.push((blocks, proj));
        }
        let attention = match &self.attention {
            Some(a) => Some((
                leaf(g, &a.query)?,
                leaf(g, &a.output.weight)?,
                leaf(g, &a.output.bias)?,
            )),
            None => None,
        };
        Ok(BoundParams {
            input,
            shared,
            towers,
            attention,
            all,
        })
    }

    fn trunk(&self, g: &mut Graph, p: &BoundParams, x: Var) -> Result<Var> {
        let a = g.affine(x, p.input.0, p.input.1)?;
        let mut h = g.relu(a)?;
        for &(w, b) in &p.shared {
            let a = g.affine(h, w, b)?;
            let r = g.relu(a)?;
            h = g.add(h, r)?;
        }
        Ok(h)
    }

    fn tower_logits(&self, g: &mut Graph, p: &BoundParams, tower: usize, h_t: Var) -> Result<Var> {
        let (blocks, proj) = &p.towers[tower];
        let mut h = h_t;
        for &(w, b) in blocks {
            let a = g.affine(h, w, b)?;
            let r = g.relu(a)?;
            h = g.add(h, r)?;
        }
        g.affine(h, proj.0, proj.1)
    }

    /// Language weights `[B×2]` from trunk outputs `[(B·G)×H]` grouped by chunk.
    fn attention_graph(&self, g: &mut Graph, p: &BoundParams, hidden: Var, group: usize) -> Result<Var> {
        let (q, w, b) = p
            .attention
            .ok_or_else(|| Error::Model("model has no attention head".into()))?;
        let rows = g.value(hidden).rows();
        let scores = g.matmul(hidden, q)?;
        let scores = g.scale(scores, 1.0 / (self.config.hidden_dim as f64).sqrt())?;
        let scores = g.reshape(scores, vec![rows / group, group])?;
        let alpha = g.softmax(scores)?;
        let pooled = g.group_weighted_sum(alpha, hidden)?;
        let logits = g.affine(pooled, w, b)?;
        g.softmax(logits)
    }

    fn check_mode(&self, mode: HeadMode) -> Result<()> {
        match (mode, self.kind()) {
            (HeadMode::Single, ModelKind::SingleHead) => Ok(()),
            (HeadMode::Single, ModelKind::Sha) => {
                Err(Error::Model("SingleHead forward on an SHA model".into()))
            }
            (_, ModelKind::SingleHead) => Err(Error::Model(format!("{mode:?} needs an SHA model"))),
            (HeadMode::ShaFixed(w), _) if (w[0] + w[1] - 1.0).abs() > 1e-12 => {
                Err(Error::Parameter(format!("language weights {w:?} do not sum to 1")))
            }
            _ => Ok(()),
        }
    }

    /// Batched forward over `B` chunks of `group` frames each, stacked as
    /// `[(B·group) × feature_dim]`. Frame `t` of each chunk is its first row.
    pub fn forward_batch(
        &self,
        g: &mut Graph,
        p: &BoundParams,
        chunks: &Tensor,
        group: usize,
        mode: HeadMode,
    ) -> Result<BatchOutput> {
        self.check_mode(mode)?;
        if group == 0 || chunks.rows() % group != 0 {
            return Err(Error::Chunk(format!("{} rows in chunks of {group}", chunks.rows())));
        }
        if chunks.cols() != self.config.feature_dim {
            return Err(Error::Chunk(format!(
                "feature dim {} but model expects {}",
                chunks.cols(),
                self.config.feature_dim
            )));
        }
        let batch = chunks.rows() / group;
        let x = g.leaf(chunks.clone())?;
        let hidden = self.trunk(g, p, x)?;
        let h_t = g.gather_rows(hidden, (0..batch).map(|b| b * group).collect())?;
        let (logits, lang_weights) = match mode {
            HeadMode::Single => (self.tower_logits(g, p, 0, h_t)?, None),
            HeadMode::Head(lang) => (self.tower_logits(g, p, lang.index(), h_t)?, None),
            HeadMode::Sha | HeadMode::ShaFixed(_) => {
                let weights = match mode {
                    HeadMode::ShaFixed(w) => {
                        let rows = vec![w.to_vec(); batch];
                        g.leaf(Tensor::from_rows(&rows)?)?
                    }
                    _ => self.attention_graph(g, p, hidden, group)?,
                };
                let en = self.tower_logits(g, p, 0, h_t)?;
                let hi = self.tower_logits(g, p, 1, h_t)?;
                let en = g.scale_rows(en, weights, 0)?;
                let hi = g.scale_rows(hi, weights, 1)?;
                (g.add(en, hi)?, Some(weights))
            }
        };
        Ok(BatchOutput {
            logits,
            log_probs: g.log_softmax(logits)?,
            lang_weights,
        })
    }

    fn check_streaming_chunk(&self, chunk: &Tensor) -> Result<()> {
        if chunk.shape().len() != 2 || chunk.rows() != self.config.chunk_len() {
            return Err(Error::Chunk(format!(
                "expected {} frames (frame t plus {} lookahead), got shape {:?}",
                self.config.chunk_len(),
                self.config.lookahead,
                chunk.shape()
            )));
        }
        Ok(())
    }

    fn forward_chunk(&self, chunk: &Tensor, mode: HeadMode) -> Result<Posteriors> {
        let mut g = Graph::new();
        let p = self.bind(&mut g)?;
        let out = self.forward_batch(&mut g, &p, chunk, chunk.rows(), mode)?;
        Posteriors::from_logits(g.value(out.logits))
    }

    /// Posterior of frame t via the single tower.
    pub fn forward_singlehead(&self, chunk: &Tensor) -> Result<Posteriors> {
        self.check_streaming_chunk(chunk)?;
        self.forward_chunk(chunk, HeadMode::Single)
    }

    /// Posterior of frame t from the attention-weighted tower combination.
    pub fn forward_sha(&self, chunk: &Tensor) -> Result<Posteriors> {
        self.check_streaming_chunk(chunk)?;
        self.forward_chunk(chunk, HeadMode::Sha)
    }

    /// SHA combination with the attention head bypassed by fixed weights.
    pub fn forward_sha_with_weights(&self, chunk: &Tensor, weights: [f64; 2]) -> Result<Posteriors> {
        self.check_streaming_chunk(chunk)?;
        self.forward_chunk(chunk, HeadMode::ShaFixed(weights))
    }

    /// Posterior of frame t from one language tower, bypassing attention.
    pub fn forward_splithead(&self, chunk: &Tensor, lang: Lang) -> Result<Posteriors> {
        self.check_streaming_chunk(chunk)?;
        self.forward_chunk(chunk, HeadMode::Head(lang))
    }

    /// Trunk outputs `[frames × hidden]` for a chunk.
    pub fn hidden(&self, chunk: &Tensor) -> Result<Tensor> {
        if chunk.cols() != self.config.feature_dim {
            return Err(Error::Chunk("feature dim mismatch".into()));
        }
        let mut g = Graph::new();
        let p = self.bind(&mut g)?;
        let x = g.leaf(chunk.clone())?;
        let h = self.trunk(&mut g, &p, x)?;
        Ok(g.value(h).clone())
    }

    /// `(w_en, w_hi)` for a chunk of trunk outputs.
    pub fn attention_weights(&self, hidden_chunk: &Tensor) -> Result<(f64, f64)> {
        hidden_chunk.check_finite("hidden chunk")?;
        if hidden_chunk.cols() != self.config.hidden_dim {
            return Err(Error::Chunk("hidden dim mismatch".into()));
        }
        let mut g = Graph::new();
        let p = self.bind(&mut g)?;
        let h = g.leaf(hidden_chunk.clone())?;
        let w = self.attention_graph(&mut g, &p, h, hidden_chunk.rows())?;
        let w = g.value(w);
        Ok((w.data()[0], w.data()[1]))
    }

    /// Posteriors for every frame of an utterance `[T × feature_dim]`
    /// using streaming chunks of `lookahead + 1` frames.
    pub fn posteriors(&self, frames: &Tensor, mode: HeadMode) -> Result<Posteriors> {
        Ok(self.posteriors_with_weights(frames, mode)?.0)
    }

    pub fn posteriors_with_weights(
        &self,
        frames: &Tensor,
        mode: HeadMode,
    ) -> Result<(Posteriors, Option<Tensor>)> {
        let ts: Vec<usize> = (0..frames.rows()).collect();
        let group = self.config.chunk_len();
        let chunks = build_chunks(frames, &ts, group)?;
        let mut g = Graph::new();
        let p = self.bind(&mut g)?;
        let out = self.forward_batch(&mut g, &p, &chunks, group, mode)?;
        let post = Posteriors::from_logits(g.value(out.logits))?;
        Ok((post, out.lang_weights.map(|w| g.value(w).clone())))
    }

    /// Posteriors where every frame sees the rest of the utterance
    /// (lookahead `T − t − 1`), the non-streaming evaluation.
    pub fn posteriors_full_context(&self, frames: &Tensor, mode: HeadMode) -> Result<Posteriors> {
        let t_max = frames.rows();
        let mut rows = Vec::with_capacity(t_max);
        for t in 0..t_max {
            let chunk = build_chunks(frames, &[t], t_max - t)?;
            let mut g = Graph::new();
            let p = self.bind(&mut g)?;
            let out = self.forward_batch(&mut g, &p, &chunk, t_max - t, mode)?;
            let mut row = vec![0.0; self.config.num_chenones];
            kernels::softmax_row(g.value(out.logits).row(0), &mut row);
            rows.push(row);
        }
        Posteriors::new(Tensor::from_rows(&rows)?)
    }

    /// Number of scalars in one language tower.
    pub fn tower_param_count(&self) -> usize {
        self.towers[0].param_count()
    }

    pub fn attention_param_count(&self) -> usize {
        self.attention.as_ref().map_or(0, AttentionHead::param_count)
    }
}

/// Parameter overhead of SHA over SingleHead for a config:
/// one extra tower plus the attention head.
pub fn sha_overhead(config: &ModelConfig) -> usize {
    let h = config.hidden_dim;
    let tower = config.split_depth * (h * h + h) + h * config.num_chenones + config.num_chenones;
    let attention = h + h * 2 + 2;
    tower + attention
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn toy() -> ModelConfig {
        ModelConfig {
            feature_dim: 3,
            hidden_dim: 4,
            num_shared_blocks: 2,
            num_chenones: 5,
            split_depth: 0,
            lookahead: 2,
        }
    }

    fn chunk(cfg: &ModelConfig, seed: u64) -> Tensor {
        let mut r = seed::rng(seed, "chunk");
        Tensor::xavier(&[cfg.chunk_len(), cfg.feature_dim], 1, 1, &mut r)
    }

    #[test]
    fn affine_param_count() {
        assert_eq!(Affine::zeros(2, 3).param_count(), 9);
    }

    #[test]
    fn config_validation() {
        let mut c = toy();
        c.split_depth = 3;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = toy();
        c.hidden_dim = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_model_is_uniform() {
        let cfg = toy();
        let m = AcousticModel::zeros(cfg.clone(), ModelKind::SingleHead).unwrap();
        let p = m.forward_singlehead(&chunk(&cfg, 1)).unwrap();
        assert!(p.row(0).iter().all(|v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn equal_logits_give_half_half() {
        let cfg = ModelConfig {
            num_chenones: 2,
            ..toy()
        };
        let mut m = AcousticModel::single_head(cfg.clone(), &mut seed::rng(3, "m")).unwrap();
        let proj = &mut m.towers[0].projection;
        proj.weight = Tensor::zeros(proj.weight.shape());
        proj.bias = Tensor::vector(vec![1.5, 1.5]).unwrap();
        let p = m.forward_singlehead(&chunk(&cfg, 2)).unwrap();
        assert_eq!(p.row(0), &[0.5, 0.5]);
    }

    #[test]
    fn wrong_chunk_length_is_rejected() {
        let cfg = toy();
        let m = AcousticModel::single_head(cfg.clone(), &mut seed::rng(3, "m")).unwrap();
        let short = Tensor::zeros(&[cfg.lookahead, cfg.feature_dim]);
        assert!(matches!(m.forward_singlehead(&short), Err(Error::Chunk(_))));
        let wide = Tensor::zeros(&[cfg.chunk_len(), cfg.feature_dim + 1]);
        assert!(matches!(m.forward_singlehead(&wide), Err(Error::Chunk(_))));
    }

    #[test]
    fn mode_kind_mismatch() {
        let cfg = toy();
        let single = AcousticModel::single_head(cfg.clone(), &mut seed::rng(3, "m")).unwrap();
        assert!(matches!(single.forward_sha(&chunk(&cfg, 1)), Err(Error::Model(_))));
        let sha = AcousticModel::split_from_single(&single, &mut seed::rng(3, "a")).unwrap();
        assert!(matches!(sha.forward_singlehead(&chunk(&cfg, 1)), Err(Error::Model(_))));
        assert!(AcousticModel::split_from_single(&sha, &mut seed::rng(3, "a")).is_err());
    }

    #[test]
    fn zero_attention_is_half_half_and_saturates() {
        let cfg = toy();
        let single = AcousticModel::single_head(cfg.clone(), &mut seed::rng(3, "m")).unwrap();
        let mut sha = AcousticModel::split_from_single(&single, &mut seed::rng(4, "a")).unwrap();
        let h = sha.hidden(&chunk(&cfg, 5)).unwrap();
        assert_eq!(sha.attention_weights(&h).unwrap(), (0.5, 0.5));
        sha.attention.as_mut().unwrap().output.bias = Tensor::vector(vec![20.0, -20.0]).unwrap();
        let (en, hi) = sha.attention_weights(&h).unwrap();
        assert!((en - 1.0).abs() < 1e-8 && hi.abs() < 1e-8);
    }

    #[test]
    fn half_weights_on_opposite_logits() {
        // Towers emit [2,0] and [0,2]; (0.5, 0.5) mixes them to [1,1].
        let cfg = ModelConfig {
            num_chenones: 2,
            ..toy()
        };
        let mut m = AcousticModel::zeros(cfg.clone(), ModelKind::Sha).unwrap();
        m.towers[0].projection.bias = Tensor::vector(vec![2.0, 0.0]).unwrap();
        m.towers[1].projection.bias = Tensor::vector(vec![0.0, 2.0]).unwrap();
        let p = m.forward_sha_with_weights(&chunk(&cfg, 1), [0.5, 0.5]).unwrap();
        assert_eq!(p.row(0), &[0.5, 0.5]);
        let p = m.forward_sha(&chunk(&cfg, 1)).unwrap();
        assert_eq!(p.row(0), &[0.5, 0.5]);
    }

    #[test]
    fn fixed_weights_must_sum_to_one() {
        let cfg = toy();
        let m = AcousticModel::zeros(cfg.clone(), ModelKind::Sha).unwrap();
        assert!(matches!(
            m.forward_sha_with_weights(&chunk(&cfg, 1), [0.6, 0.6]),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn split_depth_sweep_builds() {
        for n in [0, 1, 2, 4] {
            let cfg = ModelConfig {
                num_shared_blocks: 4,
                split_depth: n,
                ..toy()
            };
            let single = AcousticModel::single_head(cfg.clone(), &mut seed::rng(n as u64, "m")).unwrap();
            let sha = AcousticModel::split_from_single(&single, &mut seed::rng(1, "a")).unwrap();
            sha.validate().unwrap();
            let c = chunk(&cfg, 9);
            assert_eq!(sha.forward_sha(&c).unwrap().num_chenones(), cfg.num_chenones);
            for lang in Lang::ALL {
                assert_eq!(sha.forward_splithead(&c, lang).unwrap().frames(), 1);
            }
            assert_eq!(sha.param_count() - single.param_count(), sha_overhead(&cfg));
        }
    }

    #[test]
    fn full_utterance_posteriors() {
        let cfg = toy();
        let single = AcousticModel::single_head(cfg.clone(), &mut seed::rng(3, "m")).unwrap();
        let sha = AcousticModel::split_from_single(&single, &mut seed::rng(4, "a")).unwrap();
        let frames = Tensor::xavier(&[7, cfg.feature_dim], 1, 1, &mut seed::rng(5, "f"));
        let a = sha.posteriors(&frames, HeadMode::Sha).unwrap();
        let b = sha.posteriors_full_context(&frames, HeadMode::Sha).unwrap();
        assert_eq!(a.frames(), 7);
        assert_eq!(b.frames(), 7);
        // Last frame: streaming chunk is the final frame replicated; the
        // towers only read frame t so the posteriors agree.
        let last_a = a.row(6);
        let last_b = b.row(6);
        for (x, y) in last_a.iter().zip(last_b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
