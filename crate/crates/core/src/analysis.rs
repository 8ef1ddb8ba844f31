//! Attention-weight statistics: per-frame collection, 1-D Gaussian
//! mixtures and histograms.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::corpus::Utterance;
use crate::error::{Error, Result};
use crate::lang::Lang;
use crate::model::{AcousticModel, HeadMode, ModelKind};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSample {
    pub utterance: String,
    pub frame: usize,
    pub lang: Lang,
    pub w_en: f64,
    pub w_hi: f64,
}

impl WeightSample {
    pub fn weight(&self, l: Lang) -> f64 {
        match l {
            Lang::En => self.w_en,
            Lang::Hi => self.w_hi,
        }
    }
}

/// One sample per frame, in corpus order.
pub fn collect_weights(model: &AcousticModel, corpus: &[Utterance]) -> Result<Vec<WeightSample>> {
    if model.kind() != ModelKind::Sha {
        return Err(Error::Model("attention weights need an SHA model".into()));
    }
    let per_utt: Vec<Vec<WeightSample>> = corpus
        .par_iter()
        .map(|u| {
            u.validate(None)?;
            let (_, w) = model.posteriors_with_weights(&u.frames, HeadMode::Sha)?;
            let w = w.expect("SHA mode yields weights");
            Ok((0..u.num_frames())
                .map(|t| WeightSample {
                    utterance: u.id.clone(),
                    frame: t,
                    lang: u.frame_langs[t],
                    w_en: w.get2(t, 0),
                    w_hi: w.get2(t, 1),
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_utt.into_iter().flatten().collect())
}

/// `(mean w_l over frames of language l)` for both languages; `None` when
/// a language has no frames.
pub fn mean_own_weight(samples: &[WeightSample], l: Lang) -> Option<f64> {
    let own: Vec<f64> = samples.iter().filter(|s| s.lang == l).map(|s| s.weight(l)).collect();
    (!own.is_empty()).then(|| own.iter().sum::<f64>() / own.len() as f64)
}

pub const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GmmConfig {
    pub k: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub variance_floor: f64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            k: 2,
            tol: 1e-9,
            max_iter: 500,
            restarts: 5,
            variance_floor: VARIANCE_FLOOR,
        }
    }
}

/// Components are sorted by mean.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub weights: Vec<f64>,
    /// Mean per-sample log-likelihood of the final parameters.
    pub log_likelihood: f64,
    pub iterations: usize,
    /// Mean log-likelihood before the first and after every EM update.
    pub history: Vec<f64>,
}

impl GmmFit {
    pub fn k(&self) -> usize {
        self.means.len()
    }

    /// Index of the component with the largest mixture weight (lowest
    /// index on ties).
    pub fn dominant(&self) -> usize {
        let mut best = 0;
        for (i, w) in self.weights.iter().enumerate() {
            if *w > self.weights[best] {
                best = i;
            }
        }
        best
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("component,weight,mean,variance\n");
        for i in 0..self.k() {
            let _ = writeln!(out, "{i},{},{},{}", self.weights[i], self.means[i], self.variances[i]);
        }
        out
    }
}

fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean).powi(2) / var)
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// k-means++ seeding over the sorted samples, using quantile positions so
/// that duplicating every sample selects the same centres.
fn init_means<R: Rng>(sorted: &[f64], k: usize, rng: &mut R) -> Vec<f64> {
    let n = sorted.len();
    let pick = |u: f64| sorted[((u * n as f64) as usize).min(n - 1)];
    let mut centres = vec![pick(rng.gen::<f64>())];
    while centres.len() < k {
        let d2: Vec<f64> = sorted
            .iter()
            .map(|x| centres.iter().map(|c| (x - c).powi(2)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d2.iter().sum();
        let u = rng.gen::<f64>();
        if total <= 0.0 {
            centres.push(pick(u));
            continue;
        }
        let mut acc = 0.0;
        let mut chosen = sorted[n - 1];
        for (x, d) in sorted.iter().zip(&d2) {
            acc += d;
            if acc >= u * total && *d > 0.0 {
                chosen = *x;
                break;
            }
        }
        centres.push(chosen);
    }
    centres
}

fn em_once(sorted: &[f64], cfg: &GmmConfig, seed: u64, restart: usize) -> Result<GmmFit> {
    let n = sorted.len() as f64;
    let k = cfg.k;
    let mut rng = seed::rng(seed, &format!("gmm/restart{restart}"));
    let mut means = init_means(sorted, k, &mut rng);
    let mean_all = sorted.iter().sum::<f64>() / n;
    let var_all = (sorted.iter().map(|x| (x - mean_all).powi(2)).sum::<f64>() / n).max(cfg.variance_floor);
    let mut vars = vec![var_all; k];
    let mut weights = vec![1.0 / k as f64; k];

    let mut resp = vec![0.0; sorted.len() * k];
    let mut comp = vec![0.0; k];
    let e_step = |means: &[f64], vars: &[f64], weights: &[f64], resp: &mut [f64], comp: &mut [f64]| -> f64 {
        let mut ll = 0.0;
        for (i, &x) in sorted.iter().enumerate() {
            for j in 0..k {
                comp[j] = if weights[j] > 0.0 {
                    weights[j].ln() + log_normal(x, means[j], vars[j])
                } else {
                    f64::NEG_INFINITY
                };
            }
            let z = log_sum_exp(comp);
            ll += z;
            for j in 0..k {
                resp[i * k + j] = (comp[j] - z).exp();
            }
        }
        ll / n
    };

    let mut ll = e_step(&means, &vars, &weights, &mut resp, &mut comp);
    let mut history = vec![ll];
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        for j in 0..k {
            let nj: f64 = (0..sorted.len()).map(|i| resp[i * k + j]).sum();
            weights[j] = nj / n;
            if nj > 0.0 {
                let mu = sorted.iter().enumerate().map(|(i, x)| resp[i * k + j] * x).sum::<f64>() / nj;
                let var = sorted
                    .iter()
                    .enumerate()
                    .map(|(i, x)| resp[i * k + j] * (x - mu).powi(2))
                    .sum::<f64>()
                    / nj;
                means[j] = mu;
                vars[j] = var.max(cfg.variance_floor);
            }
        }
        iterations += 1;
        let next = e_step(&means, &vars, &weights, &mut resp, &mut comp);
        // EM cannot lower the likelihood; allow only rounding noise.
        if next < ll - 1e-9 * (1.0 + ll.abs()) {
            return Err(Error::Numeric(format!("EM log-likelihood fell from {ll} to {next}")));
        }
        history.push(next);
        let delta = (next - ll).abs();
        ll = next;
        if delta < cfg.tol {
            break;
        }
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| means[a].total_cmp(&means[b]));
    let wsum: f64 = weights.iter().sum();
    Ok(GmmFit {
        means: order.iter().map(|&j| means[j]).collect(),
        variances: order.iter().map(|&j| vars[j]).collect(),
        weights: order.iter().map(|&j| weights[j] / wsum).collect(),
        log_likelihood: ll,
        iterations,
        history,
    })
}

/// EM fit with `cfg.restarts` seeded restarts run in parallel; the restart
/// with the highest final log-likelihood wins (earliest on ties). Every
/// restart's history is returned alongside.
pub fn fit_gmm_1d_restarts(samples: &[f64], cfg: &GmmConfig, seed: u64) -> Result<(GmmFit, Vec<GmmFit>)> {
    if cfg.k == 0 || cfg.restarts == 0 || cfg.max_iter == 0 {
        return Err(Error::Parameter("k, restarts and max_iter must be positive".into()));
    }
    if !(cfg.variance_floor > 0.0) || !(cfg.tol >= 0.0) {
        return Err(Error::Parameter("variance floor must be positive and tol non-negative".into()));
    }
    if samples.len() < cfg.k {
        return Err(Error::Data(format!("{} samples for {} components", samples.len(), cfg.k)));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Data("non-finite sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let fits: Vec<GmmFit> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| em_once(&sorted, cfg, seed, r))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, f) in fits.iter().enumerate() {
        if f.log_likelihood > fits[best].log_likelihood {
            best = i;
        }
    }
    Ok((fits[best].clone(), fits))
}

pub fn fit_gmm_1d(samples: &[f64], k: usize, seed: u64, tol: f64, max_iter: usize) -> Result<GmmFit> {
    let cfg = GmmConfig {
        k,
        tol,
        max_iter,
        ..GmmConfig::default()
    };
    Ok(fit_gmm_1d_restarts(samples, &cfg, seed)?.0)
}

/// Equal-width bins over [0, 1]; intervals are right-open except the last,
/// which includes 1.
pub fn histogram(samples: &[f64], bins: usize) -> Result<Vec<(f64, f64, usize)>> {
    if bins == 0 {
        return Err(Error::Parameter("histogram needs at least one bin".into()));
    }
    let mut counts = vec![0usize; bins];
    for &x in samples {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Data(format!("sample {x} lies outside [0, 1]")));
        }
        counts[((x * bins as f64) as usize).min(bins - 1)] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (i as f64 / bins as f64, (i + 1) as f64 / bins as f64, c))
        .collect())
}

pub fn histogram_csv(samples: &[f64], bins: usize) -> Result<String> {
    let mut out = String::from("bin_left,bin_right,count\n");
    for (l, r, c) in histogram(samples, bins)? {
        let _ = writeln!(out, "{l},{r},{c}");
    }
    Ok(out)
}

pub fn export_histogram(samples: &[f64], bins: usize, path: &Path) -> Result<()> {
    fs::write(path, histogram_csv(samples, bins)?)?;
    Ok(())
}
