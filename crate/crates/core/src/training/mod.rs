//! Maximum-likelihood training: NLL, analytic gradients, Adam, the fit loop and synthetic
//! datasets.

mod adam;
mod datasets;
mod fit;

pub use adam::{Adam, AdamConfig};
pub use datasets::{make_circles, make_moons, make_rings, Dataset, DiagonalGaussian};
pub use fit::{fit, fit_with_validation, init_mixture_from_data, init_params, split_validation, FitConfig, FitResult, HistoryRow};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Result, SnefyError};
use crate::model::{ReportingConvention, SnefyModel};
use crate::types::{BaseMeasure, Gaussian, MixtureComponent};

/// Points per deterministic reduction chunk.
const CHUNK: usize = 64;

/// Gradients of the mixture base, parameterised by logits, means and log-variances.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureGrad {
    pub dlogits: DVector<f64>,
    /// K×d
    pub dmeans: DMatrix<f64>,
    /// K×d
    pub dlogvars: DMatrix<f64>,
}

/// Partial derivatives of a scalar objective with respect to every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub dv: DMatrix<f64>,
    pub dw: DMatrix<f64>,
    pub db: DVector<f64>,
    pub base: Option<MixtureGrad>,
}

impl GradientBundle {
    pub fn is_finite(&self) -> bool {
        let base_ok = self.base.as_ref().is_none_or(|g| {
            g.dlogits.iter().chain(g.dmeans.iter()).chain(g.dlogvars.iter()).all(|v| v.is_finite())
        });
        base_ok && self.dv.iter().chain(self.dw.iter()).chain(self.db.iter()).all(|v| v.is_finite())
    }
}

/// Diagonal Gaussian mixture in unconstrained coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    pub logits: DVector<f64>,
    pub means: DMatrix<f64>,
    pub logvars: DMatrix<f64>,
}

impl MixtureParams {
    /// `None` unless the base is a mixture whose components all have diagonal covariance.
    pub fn from_base(base: &BaseMeasure) -> Option<Self> {
        let BaseMeasure::GaussianMixture { components } = base else {
            return None;
        };
        if !components.iter().all(|c| c.gaussian.is_diagonal()) {
            return None;
        }
        let k = components.len();
        let d = base.dim();
        Some(Self {
            logits: DVector::from_iterator(k, components.iter().map(|c| c.weight.ln())),
            means: DMatrix::from_fn(k, d, |i, j| components[i].gaussian.mean()[j]),
            logvars: DMatrix::from_fn(k, d, |i, j| components[i].gaussian.cov()[(j, j)].ln()),
        })
    }

    pub fn weights(&self) -> DVector<f64> {
        let max = self.logits.max();
        let e = self.logits.map(|l| (l - max).exp());
        let s = e.sum();
        e / s
    }

    pub fn to_base(&self) -> Result<BaseMeasure> {
        let pi = self.weights();
        let comps = (0..self.logits.len())
            .map(|k| {
                let mean: Vec<f64> = self.means.row(k).iter().copied().collect();
                let var: Vec<f64> = self.logvars.row(k).iter().map(|l| l.exp()).collect();
                Ok(MixtureComponent {
                    weight: pi[k],
                    gaussian: Gaussian::diagonal(&mean, &var)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        BaseMeasure::mixture(comps)
    }
}

/// `−(1/N) Σ log p(xₗ)` under the given reporting convention.
pub fn nll(model: &SnefyModel, data: &[Vec<f64>], convention: ReportingConvention) -> Result<f64> {
    if data.is_empty() {
        return Err(SnefyError::invalid("empty data"));
    }
    let log_z = model.normalizing_constant()?.ln();
    let parts: Vec<Result<(f64, Vec<usize>)>> = data
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut s = 0.0;
            let mut bad = Vec::new();
            for (k, x) in chunk.iter().enumerate() {
                let mut l = model.log_unnormalized(x)?;
                if convention == ReportingConvention::Lebesgue {
                    l += model.base().log_density(x)?;
                }
                if l == f64::NEG_INFINITY {
                    bad.push(c * CHUNK + k);
                }
                s += l;
            }
            Ok((s, bad))
        })
        .collect();
    let mut total = 0.0;
    let mut bad = Vec::new();
    for p in parts {
        let (s, b) = p?;
        total += s;
        bad.extend(b);
    }
    if !bad.is_empty() {
        return Err(SnefyError::NonFiniteDensity(bad));
    }
    Ok(log_z - total / data.len() as f64)
}

struct PointGrads {
    dv: DMatrix<f64>,
    dw: DMatrix<f64>,
    db: DVector<f64>,
    mix: Option<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)>,
}

/// Per-point part of the gradient of `Σ log ‖f(t(x))‖² (+ log dμ/dx)`.
fn point_grads(model: &SnefyModel, batch: &[Vec<f64>], mixture: Option<&MixtureParams>, with_base: bool) -> Result<PointGrads> {
    let p = model.params();
    let (m, n, dd) = (p.m(), p.n(), p.input_dim());
    let act = model.activation();
    let mut out = PointGrads {
        dv: DMatrix::zeros(m, n),
        dw: DMatrix::zeros(n, dd),
        db: DVector::zeros(n),
        mix: mixture.map(|mp| {
            (
                DVector::zeros(mp.logits.len()),
                DMatrix::zeros(mp.means.nrows(), mp.means.ncols()),
                DMatrix::zeros(mp.means.nrows(), mp.means.ncols()),
            )
        }),
    };
    let pi = mixture.map(|mp| mp.weights());
    let mut f = vec![0.0; m];
    let mut s = vec![0.0; n];
    let mut ds = vec![0.0; n];
    for x in batch {
        let t = model.statistic().eval(x)?;
        let u = model.preactivations(&t);
        // shifted features: for exp activations σ and σ' share the factor exp(c·max u)
        match act.exp_rate() {
            Some(c) => {
                let umax = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                for j in 0..n {
                    s[j] = (c * (u[j] - umax)).exp();
                    ds[j] = c * s[j];
                }
            }
            None => {
                for j in 0..n {
                    s[j] = act.eval(u[j]);
                    ds[j] = act.derivative(u[j]);
                }
            }
        }
        let mut norm2 = 0.0;
        for r in 0..m {
            f[r] = (0..n).map(|j| p.v[(r, j)] * s[j]).sum();
            norm2 += f[r] * f[r];
        }
        if norm2 == 0.0 {
            return Err(SnefyError::NonFiniteDensity(vec![]));
        }
        for r in 0..m {
            for j in 0..n {
                out.dv[(r, j)] += 2.0 * f[r] * s[j] / norm2;
            }
        }
        for j in 0..n {
            let vtf: f64 = (0..m).map(|r| p.v[(r, j)] * f[r]).sum();
            let du = 2.0 * vtf * ds[j] / norm2;
            out.db[j] += du;
            for c in 0..dd {
                out.dw[(j, c)] += du * t[c];
            }
        }
        if let (Some(mp), Some(pi), Some((dl, dm, dlv))) = (mixture, pi.as_ref(), out.mix.as_mut()) {
            if with_base {
                mixture_log_pdf_grad(mp, pi, x, dl, dm, dlv);
            }
        }
    }
    Ok(out)
}

/// Accumulates ∂ log Σₖ πₖ N(x; mₖ, diag vₖ) with respect to logits, means and log-variances.
fn mixture_log_pdf_grad(
    mp: &MixtureParams,
    pi: &DVector<f64>,
    x: &[f64],
    dl: &mut DVector<f64>,
    dm: &mut DMatrix<f64>,
    dlv: &mut DMatrix<f64>,
) {
    let k = pi.len();
    let d = x.len();
    let logs: Vec<f64> = (0..k)
        .map(|c| {
            let mut l = pi[c].ln();
            for j in 0..d {
                let v = mp.logvars[(c, j)].exp();
                let z = x[j] - mp.means[(c, j)];
                l += -0.5 * (z * z / v + mp.logvars[(c, j)] + (2.0 * std::f64::consts::PI).ln());
            }
            l
        })
        .collect();
    let lse = crate::types::log_sum_exp(&logs);
    for c in 0..k {
        let r = (logs[c] - lse).exp();
        dl[c] += r - pi[c];
        for j in 0..d {
            let v = mp.logvars[(c, j)].exp();
            let z = x[j] - mp.means[(c, j)];
            dm[(c, j)] += r * z / v;
            dlv[(c, j)] += r * 0.5 * (z * z / v - 1.0);
        }
    }
}

/// Exact gradient of [`nll`] over `batch`. Mixture-base gradients are included when the base
/// is a diagonal Gaussian mixture.
pub fn grad_nll(model: &SnefyModel, batch: &[Vec<f64>], convention: ReportingConvention) -> Result<GradientBundle> {
    if batch.is_empty() {
        return Err(SnefyError::invalid("empty batch"));
    }
    let mixture = MixtureParams::from_base(model.base());
    let with_base = convention == ReportingConvention::Lebesgue;
    let partial: Vec<Result<PointGrads>> = batch
        .par_chunks(CHUNK)
        .map(|chunk| point_grads(model, chunk, mixture.as_ref(), with_base))
        .collect();
    let mut acc: Option<PointGrads> = None;
    for p in partial {
        let p = p.map_err(|e| match e {
            SnefyError::NonFiniteDensity(_) => SnefyError::NonFiniteDensity(zero_feature_indices(model, batch)),
            other => other,
        })?;
        acc = Some(match acc {
            None => p,
            Some(mut a) => {
                a.dv += p.dv;
                a.dw += p.dw;
                a.db += p.db;
                if let (Some(x), Some(y)) = (a.mix.as_mut(), p.mix) {
                    x.0 += y.0;
                    x.1 += y.1;
                    x.2 += y.2;
                }
                a
            }
        });
    }
    let acc = acc.expect("non-empty batch");
    let nb = batch.len() as f64;

    // Z term: ∂ log Z
    let p = model.params();
    let z = model.normalizing_constant()?;
    let k = model.kernel_matrix()?.k;
    let wg = model.kernel().weighted_grad(&p.rows(), &p.readout_gram())?;
    let dv = (&p.v * &k) * (2.0 / z) - acc.dv / nb;
    let dw = &wg.dw / z - acc.dw / nb;
    let db = &wg.db / z - acc.db / nb;

    let base = match (&mixture, acc.mix) {
        (Some(mp), Some((dl, dm, dlv))) => {
            let pi = mp.weights();
            let kc = pi.len();
            let d = mp.means.ncols();
            let mut g = MixtureGrad {
                dlogits: -dl / nb,
                dmeans: -dm / nb,
                dlogvars: -dlv / nb,
            };
            for c in 0..kc {
                let comp = &wg.base[c];
                // Z = Σ πₖ Zₖ, softmax weights
                g.dlogits[c] += pi[c] * (comp.dweight - z) / z;
                for j in 0..d {
                    g.dmeans[(c, j)] += comp.dmean[j] / z;
                    let sd = (0.5 * mp.logvars[(c, j)]).exp();
                    g.dlogvars[(c, j)] += comp.dfactor[(j, j)] * 0.5 * sd / z;
                }
            }
            Some(g)
        }
        _ => None,
    };
    Ok(GradientBundle { dv, dw, db, base })
}

fn zero_feature_indices(model: &SnefyModel, batch: &[Vec<f64>]) -> Vec<usize> {
    batch
        .iter()
        .enumerate()
        .filter(|(_, x)| model.log_unnormalized(x).map_or(true, |l| l == f64::NEG_INFINITY))
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests;
