//! Synthetic 2D benchmark datasets and a diagonal-Gaussian baseline.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, SnefyError};
use crate::rng::seeded;
use crate::special::normal_log_pdf;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

fn finish(mut pts: Vec<(Vec<f64>, usize)>, noise_sd: f64, seed: u64) -> Dataset {
    let mut rng = seeded(seed);
    if noise_sd > 0.0 {
        for (p, _) in pts.iter_mut() {
            for v in p.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += noise_sd * z;
            }
        }
    }
    pts.shuffle(&mut rng);
    let (points, labels) = pts.into_iter().unzip();
    Dataset { points, labels }
}

fn linspace(lo: f64, hi: f64, n: usize, endpoint: bool) -> impl Iterator<Item = f64> {
    let div = if endpoint { n.saturating_sub(1).max(1) } else { n.max(1) } as f64;
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / div)
}

/// Two interleaved half circles; the second is shifted by `(1, −0.5)`.
pub fn make_moons(count: usize, noise_sd: f64, seed: u64) -> Dataset {
    let n_out = count / 2;
    let n_in = count - n_out;
    let pi = std::f64::consts::PI;
    let mut pts = Vec::with_capacity(count);
    pts.extend(linspace(0.0, pi, n_out, true).map(|a| (vec![a.cos(), a.sin()], 0)));
    pts.extend(linspace(0.0, pi, n_in, true).map(|a| (vec![1.0 - a.cos(), 1.0 - a.sin() - 0.5], 1)));
    finish(pts, noise_sd, seed)
}

/// Two concentric circles, the inner one scaled by 0.8.
pub fn make_circles(count: usize, noise_sd: f64, seed: u64) -> Dataset {
    let n_out = count / 2;
    let n_in = count - n_out;
    let tau = 2.0 * std::f64::consts::PI;
    let mut pts = Vec::with_capacity(count);
    pts.extend(linspace(0.0, tau, n_out, false).map(|a| (vec![a.cos(), a.sin()], 0)));
    pts.extend(linspace(0.0, tau, n_in, false).map(|a| (vec![0.8 * a.cos(), 0.8 * a.sin()], 1)));
    finish(pts, noise_sd, seed)
}

/// Four concentric rings with radii 0.5, 1.0, 1.5 and 2.0 and uniformly random angles.
pub fn make_rings(count: usize, noise_sd: f64, seed: u64) -> Dataset {
    let mut rng = seeded(seed ^ 0x5eed_0f_5ee5);
    let tau = 2.0 * std::f64::consts::PI;
    let pts = (0..count)
        .map(|i| {
            let ring = i % 4;
            let r = 0.5 * (ring + 1) as f64;
            let a: f64 = rng.random::<f64>() * tau;
            (vec![r * a.cos(), r * a.sin()], ring)
        })
        .collect();
    finish(pts, noise_sd, seed)
}

/// Maximum-likelihood Gaussian with diagonal covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalGaussian {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl DiagonalGaussian {
    pub fn fit(data: &[Vec<f64>]) -> Result<Self> {
        let first = data.first().ok_or_else(|| SnefyError::invalid("empty data"))?;
        let d = first.len();
        let n = data.len() as f64;
        let mean: Vec<f64> = (0..d).map(|c| data.iter().map(|x| x[c]).sum::<f64>() / n).collect();
        let var: Vec<f64> = (0..d)
            .map(|c| data.iter().map(|x| (x[c] - mean[c]).powi(2)).sum::<f64>() / n)
            .collect();
        if var.iter().any(|v| !(*v > 0.0)) {
            return Err(SnefyError::invalid("data has zero variance in some coordinate"));
        }
        Ok(Self { mean, var })
    }

    pub fn nll(&self, data: &[Vec<f64>]) -> f64 {
        let total: f64 = data
            .iter()
            .map(|x| {
                x.iter()
                    .zip(&self.mean)
                    .zip(&self.var)
                    .map(|((xi, m), v)| normal_log_pdf((xi - m) / v.sqrt()) - 0.5 * v.ln())
                    .sum::<f64>()
            })
            .sum();
        -total / data.len() as f64
    }
}
