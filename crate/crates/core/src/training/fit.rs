//! Minibatch Adam fit with validation monitoring and best-checkpoint return.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::{grad_nll, nll, MixtureParams};
use crate::error::{Result, SnefyError};
use crate::model::{ReportingConvention, SnefyModel};
use crate::rng::{stream, SnefyRng};
use crate::types::{BaseMeasure, Gaussian, MixtureComponent, SnefyParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub max_iters: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub val_fraction: f64,
    pub seed: u64,
    pub val_check_every: usize,
    /// Optimise the mixture base (logits, means, log-variances) when it is diagonal.
    pub train_base: bool,
    pub convention: ReportingConvention,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            batch_size: 1024,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 1e-3,
            val_fraction: 0.1,
            seed: 0,
            val_check_every: 100,
            train_base: true,
            convention: ReportingConvention::Lebesgue,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SnefyError::invalid(format!("fit config: {m}")));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.adam_eps > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("learning_rate and adam_eps must be positive, weight_decay non-negative");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must lie in [0, 1)");
        }
        if self.val_check_every == 0 {
            return bad("val_check_every must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistoryRow {
    pub iter: usize,
    pub train_nll: f64,
    pub val_nll: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: SnefyModel,
    pub history: Vec<HistoryRow>,
    pub best_iter: usize,
    pub best_val_nll: f64,
}

/// `V ~ N(0, 1/n)`, `W ~ N(0, 1)`, `b = 0`.
pub fn init_params(m: usize, n: usize, dim: usize, rng: &mut SnefyRng) -> Result<SnefyParams> {
    let sd = 1.0 / (n as f64).sqrt();
    let mut normal = || -> f64 { StandardNormal.sample(rng) };
    let v = DMatrix::from_fn(m, n, |_, _| sd * normal());
    let w = DMatrix::from_fn(n, dim, |_, _| normal());
    SnefyParams::new(v, w, DVector::zeros(n))
}

/// `k` equally weighted diagonal components at distinct random data points. Per-coordinate
/// variances are the data variance shrunk by `k^(−2/d)`, so the components jointly cover
/// roughly the data's extent.
pub fn init_mixture_from_data(data: &[Vec<f64>], k: usize, rng: &mut SnefyRng) -> Result<BaseMeasure> {
    let first = data.first().ok_or_else(|| SnefyError::invalid("empty data"))?;
    if k == 0 {
        return Err(SnefyError::invalid("mixture needs at least one component"));
    }
    let d = first.len();
    let nf = data.len() as f64;
    let shrink = (k as f64).powf(-2.0 / d as f64);
    let var: Vec<f64> = (0..d)
        .map(|c| {
            let mean = data.iter().map(|x| x[c]).sum::<f64>() / nf;
            (shrink * data.iter().map(|x| (x[c] - mean).powi(2)).sum::<f64>() / nf).max(1e-12)
        })
        .collect();
    let picks = rand::seq::index::sample(rng, data.len(), k.min(data.len()));
    let comps = (0..k)
        .map(|c| {
            let idx = picks.index(c % picks.len());
            Ok(MixtureComponent {
                weight: 1.0 / k as f64,
                gaussian: Gaussian::diagonal(&data[idx], &var)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    BaseMeasure::mixture(comps)
}

/// Seeded shuffle into `(train, validation)`.
pub fn split_validation(data: &[Vec<f64>], val_fraction: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut stream(seed, 1));
    let n_val = ((data.len() as f64) * val_fraction).round() as usize;
    let n_val = n_val.min(data.len().saturating_sub(1));
    let val = idx[..n_val].iter().map(|&i| data[i].clone()).collect();
    let train = idx[n_val..].iter().map(|&i| data[i].clone()).collect();
    (train, val)
}

/// Splits off a validation set by `config.val_fraction` and fits.
pub fn fit(model: &SnefyModel, data: &[Vec<f64>], config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let (train, val) = split_validation(data, config.val_fraction, config.seed);
    let val = if val.is_empty() { train.clone() } else { val };
    fit_with_validation(model, &train, &val, config)
}

struct Layout {
    m: usize,
    n: usize,
    dim: usize,
    mixture: Option<(usize, usize)>,
}

impl Layout {
    fn flatten(&self, p: &SnefyParams, mix: Option<&MixtureParams>) -> Vec<f64> {
        let mut out: Vec<f64> = p.v.iter().chain(p.w.iter()).chain(p.b.iter()).copied().collect();
        if let Some(mp) = mix {
            out.extend(mp.logits.iter().chain(mp.means.iter()).chain(mp.logvars.iter()));
        }
        out
    }

    fn decay_mask(&self) -> Vec<bool> {
        let core = self.m * self.n + self.n * self.dim + self.n;
        let extra = self.mixture.map_or(0, |(k, d)| k + 2 * k * d);
        let mut mask = vec![true; core];
        mask.extend(std::iter::repeat_n(false, extra));
        mask
    }

    fn unflatten(&self, flat: &[f64]) -> Result<(SnefyParams, Option<MixtureParams>)> {
        let (m, n, dd) = (self.m, self.n, self.dim);
        let mut o = 0;
        let mut take = |len: usize| {
            let s = &flat[o..o + len];
            o += len;
            s
        };
        let v = DMatrix::from_column_slice(m, n, take(m * n));
        let w = DMatrix::from_column_slice(n, dd, take(n * dd));
        let b = DVector::from_column_slice(take(n));
        let mix = self.mixture.map(|(k, d)| MixtureParams {
            logits: DVector::from_column_slice(take(k)),
            means: DMatrix::from_column_slice(k, d, take(k * d)),
            logvars: DMatrix::from_column_slice(k, d, take(k * d)),
        });
        Ok((SnefyParams::new(v, w, b)?, mix))
    }
}

fn flatten_grad(g: &super::GradientBundle, with_base: bool) -> Vec<f64> {
    let mut out: Vec<f64> = g.dv.iter().chain(g.dw.iter()).chain(g.db.iter()).copied().collect();
    if with_base {
        let b = g.base.as_ref().expect("mixture gradient present");
        out.extend(b.dlogits.iter().chain(b.dmeans.iter()).chain(b.dlogvars.iter()));
    }
    out
}

/// Adam on the training set, returning the parameters with the lowest validation NLL.
pub fn fit_with_validation(model: &SnefyModel, train: &[Vec<f64>], val: &[Vec<f64>], config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(SnefyError::invalid("training and validation sets must be non-empty"));
    }
    let mixture = if config.train_base { MixtureParams::from_base(model.base()) } else { None };
    let p = model.params();
    let layout = Layout {
        m: p.m(),
        n: p.n(),
        dim: p.input_dim(),
        mixture: mixture.as_ref().map(|mp| (mp.logits.len(), mp.means.ncols())),
    };
    let mut flat = layout.flatten(p, mixture.as_ref());
    let mut opt = Adam::new(
        AdamConfig {
            learning_rate: config.learning_rate,
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            eps: config.adam_eps,
            weight_decay: config.weight_decay,
        },
        layout.decay_mask(),
    );
    let abort = |iteration: usize, e: SnefyError| SnefyError::TrainingAborted {
        iteration,
        message: e.to_string(),
    };

    let mut current = model.clone();
    let mut history = Vec::new();
    let evaluate = |m: &SnefyModel, iter: usize| -> Result<HistoryRow> {
        Ok(HistoryRow {
            iter,
            train_nll: nll(m, train, config.convention).map_err(|e| abort(iter, e))?,
            val_nll: nll(m, val, config.convention).map_err(|e| abort(iter, e))?,
        })
    };
    let first = evaluate(&current, 0)?;
    history.push(first);
    let (mut best, mut best_iter, mut best_val) = (current.clone(), 0, first.val_nll);

    let mut rng = stream(config.seed, 2);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cursor = order.len();
    let bs = config.batch_size.min(train.len());
    let mut batch: Vec<Vec<f64>> = Vec::with_capacity(bs);
    for iter in 1..=config.max_iters {
        batch.clear();
        while batch.len() < bs {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(train[order[cursor]].clone());
            cursor += 1;
        }
        let g = grad_nll(&current, &batch, config.convention).map_err(|e| abort(iter, e))?;
        if !g.is_finite() {
            return Err(abort(iter, SnefyError::Overflow("non-finite gradient".into())));
        }
        opt.step(&mut flat, &flatten_grad(&g, layout.mixture.is_some()));
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(abort(iter, SnefyError::Overflow("non-finite parameter after update".into())));
        }
        let (params, mix) = layout.unflatten(&flat).map_err(|e| abort(iter, e))?;
        current = match mix {
            Some(mp) => current
                .with_params(params)
                .and_then(|m| m.with_base(mp.to_base()?))
                .map_err(|e| abort(iter, e))?,
            None => current.with_params(params).map_err(|e| abort(iter, e))?,
        };
        if iter % config.val_check_every == 0 || iter == config.max_iters {
            let row = evaluate(&current, iter)?;
            history.push(row);
            if row.val_nll < best_val {
                best_val = row.val_nll;
                best_iter = iter;
                best = current.clone();
            }
        }
    }
    Ok(FitResult {
        model: best,
        history,
        best_iter,
        best_val_nll: best_val,
    })
}
