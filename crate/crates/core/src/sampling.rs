//! Base-measure sampling and exact rejection sampling for bounded activations.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Result, SnefyError};
use crate::model::SnefyModel;
use crate::rng::SnefyRng;
use crate::types::{BaseMeasure, Gaussian};

/// Proposals tried before declaring the sampler too inefficient.
pub const EFFICIENCY_PROPOSALS: usize = 1_000_000;
pub const MIN_ACCEPTANCE: f64 = 1e-6;

fn gaussian_draw(g: &Gaussian, rng: &mut SnefyRng, out: &mut [f64]) {
    let z: Vec<f64> = (0..g.dim()).map(|_| StandardNormal.sample(rng)).collect();
    let a = g.factor();
    for (i, o) in out.iter_mut().enumerate() {
        let mut v = g.mean()[i];
        for (k, zk) in z.iter().enumerate().take(i + 1) {
            v += a[(i, k)] * zk;
        }
        *o = v;
    }
}

/// One draw from a probability base measure into `out`.
pub(crate) fn draw_base(base: &BaseMeasure, rng: &mut SnefyRng, out: &mut [f64]) -> Result<()> {
    match base {
        BaseMeasure::StdGaussian { .. } => out.iter_mut().for_each(|o| *o = StandardNormal.sample(rng)),
        BaseMeasure::Gaussian { gaussian } => gaussian_draw(gaussian, rng, out),
        BaseMeasure::GaussianMixture { components } => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = components.len() - 1;
            for (k, c) in components.iter().enumerate() {
                acc += c.weight;
                if u < acc {
                    chosen = k;
                    break;
                }
            }
            gaussian_draw(&components[chosen].gaussian, rng, out);
        }
        BaseMeasure::UniformSphere { .. } => loop {
            out.iter_mut().for_each(|o| *o = StandardNormal.sample(rng));
            let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                out.iter_mut().for_each(|o| *o /= norm);
                break;
            }
        },
        BaseMeasure::UniformCube { .. } => out.iter_mut().for_each(|o| {
            // open interval so quantile statistics stay finite
            *o = loop {
                let u: f64 = rng.random();
                if u > 0.0 {
                    break u;
                }
            }
        }),
        BaseMeasure::Lebesgue { .. } | BaseMeasure::Poisson => {
            return Err(SnefyError::Sampling(format!(
                "base {} is not a probability measure",
                base.name()
            )))
        }
    }
    Ok(())
}

/// `count` i.i.d. draws from a probability base measure.
pub fn sample_base(base: &BaseMeasure, rng: &mut SnefyRng, count: usize) -> Result<Vec<Vec<f64>>> {
    base.validate()?;
    let d = base.dim();
    (0..count)
        .map(|_| {
            let mut x = vec![0.0; d];
            draw_base(base, rng, &mut x)?;
            Ok(x)
        })
        .collect()
}

/// Uniform upper bound on `‖f(t(x))‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeBound {
    pub m_env: f64,
    pub derivation: &'static str,
}

/// `(Σⱼ ‖v·ⱼ‖)²`, valid whenever `|σ| ≤ 1`.
pub fn envelope_bound(model: &SnefyModel) -> Result<EnvelopeBound> {
    if !model.activation().is_bounded() {
        return Err(SnefyError::UnboundedActivation(format!(
            "{} is unbounded, so no global envelope exists",
            model.activation().name()
        )));
    }
    let v = &model.params().v;
    let s: f64 = (0..v.ncols()).map(|j| v.column(j).norm()).sum();
    Ok(EnvelopeBound {
        m_env: s * s,
        derivation: "triangle inequality with |sigma| <= 1",
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectionSamples {
    pub samples: Vec<Vec<f64>>,
    pub acceptance_rate: f64,
    pub proposals: usize,
    /// `Z / M_env`, the expected acceptance rate.
    pub expected_rate: f64,
}

/// Exact draws: propose from μ, accept with probability `‖f‖² / M_env`.
pub fn sample_rejection(model: &SnefyModel, rng: &mut SnefyRng, count: usize) -> Result<RejectionSamples> {
    let env = envelope_bound(model)?;
    let base = model.base();
    if !base.is_probability() {
        return Err(SnefyError::Sampling(format!("base {} cannot be sampled", base.name())));
    }
    let z = model.normalizing_constant()?;
    let d = model.support_dim();
    let mut samples = Vec::with_capacity(count);
    let mut proposals = 0usize;
    let mut x = vec![0.0; d];
    while samples.len() < count {
        draw_base(base, rng, &mut x)?;
        proposals += 1;
        let f2 = model.unnormalized(&x)?;
        let u: f64 = rng.random();
        if u * env.m_env < f2 {
            samples.push(x.clone());
        }
        if proposals >= EFFICIENCY_PROPOSALS && (samples.len() as f64) < MIN_ACCEPTANCE * proposals as f64 {
            return Err(SnefyError::Sampling(format!(
                "acceptance rate {:.3e} after {proposals} proposals is below {MIN_ACCEPTANCE:e}",
                samples.len() as f64 / proposals as f64
            )));
        }
    }
    Ok(RejectionSamples {
        acceptance_rate: count as f64 / proposals.max(1) as f64,
        samples,
        proposals,
        expected_rate: z / env.m_env,
    })
}
