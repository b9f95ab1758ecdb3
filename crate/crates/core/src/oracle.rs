//! Independent oracles: Monte-Carlo kernel estimates, composite-Simpson quadrature and
//! central finite differences.

use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, SnefyError};
use crate::rng::stream;
use crate::sampling::draw_base;
use crate::special::log_gamma;
use crate::types::{Activation, BaseMeasure, ParamRow, SufficientStatistic};

/// Draws per deterministic chunk; chunk `c` uses RNG stream `c`.
const MC_CHUNK: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

impl McEstimate {
    /// `|estimate − value| ≤ 3 SE` (plus a round-off allowance).
    pub fn agrees_with(&self, value: f64) -> bool {
        (self.estimate - value).abs() <= 3.0 * self.std_error + 1e-12 * (1.0 + value.abs())
    }
}

fn integrand(act: &Activation, ri: &ParamRow, rj: &ParamRow, t: &[f64]) -> f64 {
    let ui = ri.b + ri.w.iter().zip(t).map(|(w, x)| w * x).sum::<f64>();
    let uj = rj.b + rj.w.iter().zip(t).map(|(w, x)| w * x).sum::<f64>();
    act.eval(ui) * act.eval(uj)
}

/// Monte-Carlo estimate of `∫ σ(wᵢᵀt(x)+bᵢ) σ(wⱼᵀt(x)+bⱼ) dμ(x)`.
///
/// Probability bases are sampled directly; Lebesgue measure on the simplex is sampled
/// uniformly and rescaled by its volume `1/(D−1)!`. The Poisson base falls back to the
/// truncated series `Σ_{x≤60}` with the tail bound reported as `std_error`.
pub fn mc_kernel(
    activation: &Activation,
    statistic: SufficientStatistic,
    base: &BaseMeasure,
    ri: &ParamRow,
    rj: &ParamRow,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if ri.w.len() != rj.w.len() {
        return Err(SnefyError::DimensionMismatch {
            expected: ri.w.len(),
            got: rj.w.len(),
        });
    }
    if matches!(base, BaseMeasure::Poisson) {
        return poisson_series(activation, ri, rj, 60);
    }
    let d = base.dim();
    let simplex_scale = match (statistic, base) {
        (SufficientStatistic::DirichletStat, BaseMeasure::Lebesgue { dim }) => Some((-log_gamma(*dim as f64)?).exp()),
        (_, BaseMeasure::Lebesgue { .. }) => {
            return Err(SnefyError::Sampling("Lebesgue base has no Monte-Carlo sampler; use quadrature".into()))
        }
        _ => None,
    };
    if samples == 0 {
        return Err(SnefyError::invalid("sample count must be positive"));
    }
    let chunks = samples.div_ceil(MC_CHUNK);
    let partial: Vec<Result<(f64, f64)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, c as u64);
            let count = MC_CHUNK.min(samples - c * MC_CHUNK);
            let mut x = vec![0.0; d];
            let mut t = Vec::new();
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                if simplex_scale.is_some() {
                    let mut total = 0.0;
                    for xi in x.iter_mut() {
                        *xi = Exp1.sample(&mut rng);
                        total += *xi;
                    }
                    x.iter_mut().for_each(|xi| *xi /= total);
                    // renormalise exactly onto the simplex for the domain check
                    let s: f64 = x[..d - 1].iter().sum();
                    x[d - 1] = (1.0 - s).max(f64::MIN_POSITIVE);
                } else {
                    draw_base(base, &mut rng, &mut x)?;
                }
                statistic.eval_into(&x, &mut t)?;
                let v = integrand(activation, ri, rj, &t);
                s1 += v;
                s2 += v * v;
            }
            Ok((s1, s2))
        })
        .collect();
    let (mut s1, mut s2) = (0.0, 0.0);
    for p in partial {
        let (a, b) = p?;
        s1 += a;
        s2 += b;
    }
    let n = samples as f64;
    let mean = s1 / n;
    let var = ((s2 / n - mean * mean) * n / (n - 1.0).max(1.0)).max(0.0);
    let scale = simplex_scale.unwrap_or(1.0);
    Ok(McEstimate {
        estimate: mean * scale,
        std_error: (var / n).sqrt() * scale,
    })
}

/// `Σ_{x=0}^{x_max} σ(wᵢx+bᵢ)σ(wⱼx+bⱼ)/x!` with a ratio bound on the tail.
pub fn poisson_series(activation: &Activation, ri: &ParamRow, rj: &ParamRow, x_max: usize) -> Result<McEstimate> {
    if ri.w.len() != 1 {
        return Err(SnefyError::DimensionMismatch { expected: 1, got: ri.w.len() });
    }
    let term = |x: usize| -> Result<f64> {
        let xf = x as f64;
        Ok(integrand(activation, ri, rj, &[xf]) * (-log_gamma(xf + 1.0)?).exp())
    };
    let mut total = 0.0;
    for x in 0..=x_max {
        total += term(x)?;
    }
    // terms decay at least geometrically once the ratio drops below one
    let last = term(x_max)?.abs();
    let next = term(x_max + 1)?.abs();
    let ratio = if last > 0.0 { next / last } else { 0.0 };
    let tail = if ratio < 1.0 { next / (1.0 - ratio) } else { f64::INFINITY };
    Ok(McEstimate {
        estimate: total,
        std_error: tail,
    })
}

/// Integration region for [`quadrature`].
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    /// Axis-aligned box, one `(lo, hi)` per dimension (d ≤ 2).
    Box(Vec<(f64, f64)>),
    /// Unit circle, integrated against the uniform probability measure on its angle.
    UnitCircle,
}

fn simpson_weights(nodes: usize) -> Result<Vec<f64>> {
    if nodes < 3 || nodes % 2 == 0 {
        return Err(SnefyError::invalid(format!("simpson needs an odd node count ≥ 3, got {nodes}")));
    }
    Ok((0..nodes)
        .map(|i| {
            if i == 0 || i == nodes - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            }
        })
        .collect())
}

/// Tensor-grid composite Simpson rule with `nodes` points per dimension.
pub fn quadrature<F: Fn(&[f64]) -> f64 + Sync>(f: F, region: &Region, nodes: usize) -> Result<f64> {
    let w = simpson_weights(nodes)?;
    let m = (nodes - 1) as f64;
    match region {
        Region::UnitCircle => {
            let h = 2.0 * std::f64::consts::PI / m;
            let s: f64 = (0..nodes)
                .map(|i| {
                    let a = i as f64 * h;
                    w[i] * f(&[a.cos(), a.sin()])
                })
                .sum();
            Ok(s * h / 3.0 / (2.0 * std::f64::consts::PI))
        }
        Region::Box(bounds) => match bounds.len() {
            1 => {
                let (lo, hi) = bounds[0];
                let h = (hi - lo) / m;
                let s: f64 = (0..nodes).map(|i| w[i] * f(&[lo + i as f64 * h])).sum();
                Ok(s * h / 3.0)
            }
            2 => {
                let ((x0, x1), (y0, y1)) = (bounds[0], bounds[1]);
                let (hx, hy) = ((x1 - x0) / m, (y1 - y0) / m);
                let rows: Vec<f64> = (0..nodes)
                    .into_par_iter()
                    .map(|i| {
                        let x = x0 + i as f64 * hx;
                        w[i] * (0..nodes).map(|j| w[j] * f(&[x, y0 + j as f64 * hy])).sum::<f64>()
                    })
                    .collect();
                Ok(rows.iter().sum::<f64>() * hx * hy / 9.0)
            }
            d => Err(SnefyError::invalid(format!("quadrature supports d ≤ 2, got {d}"))),
        },
    }
}

/// `[m − 8σ, m + 8σ]` per coordinate.
pub fn gaussian_box(mean: &[f64], sd: &[f64]) -> Region {
    Region::Box(mean.iter().zip(sd).map(|(m, s)| (m - 8.0 * s, m + 8.0 * s)).collect())
}

/// Central differences `(f(p + h eᵢ) − f(p − h eᵢ)) / 2h`.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, params: &[f64], h: f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let fp = f(&p);
            p[i] = orig - h;
            let fm = f(&p);
            p[i] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Cumulative trapezoid table of a 1D density on `[lo, hi]`; not renormalised, so the final
/// value is the quadrature mass.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedCdf {
    lo: f64,
    h: f64,
    values: Vec<f64>,
}

impl TabulatedCdf {
    pub fn new<F: Fn(f64) -> f64>(density: F, lo: f64, hi: f64, nodes: usize) -> Result<Self> {
        if nodes < 2 || !(lo < hi) {
            return Err(SnefyError::invalid("tabulated cdf needs lo < hi and at least two nodes"));
        }
        let h = (hi - lo) / (nodes - 1) as f64;
        let mut values = Vec::with_capacity(nodes);
        let mut acc = 0.0;
        let mut prev = density(lo);
        values.push(0.0);
        for i in 1..nodes {
            let cur = density(lo + i as f64 * h);
            acc += 0.5 * h * (prev + cur);
            values.push(acc);
            prev = cur;
        }
        Ok(Self { lo, h, values })
    }

    pub fn mass(&self) -> f64 {
        *self.values.last().expect("at least two nodes")
    }

    /// Linear interpolation; clamps outside the table.
    pub fn eval(&self, x: f64) -> f64 {
        let t = (x - self.lo) / self.h;
        if t <= 0.0 {
            return 0.0;
        }
        let i = t.floor() as usize;
        if i + 1 >= self.values.len() {
            return self.mass();
        }
        let f = t - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }
}

/// Two-sided Kolmogorov–Smirnov statistic `sup |F̂ₙ − F|`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::nnk_linear;
    use crate::special::normal_log_pdf;

    #[test]
    fn constant_integrand_has_zero_error() {
        let z = ParamRow::new(vec![0.0, 0.0], 0.0);
        let e = mc_kernel(&Activation::Cos, SufficientStatistic::Identity, &BaseMeasure::StdGaussian { dim: 2 }, &z, &z, 1000, 1).unwrap();
        assert_eq!(e.estimate, 1.0);
        assert_eq!(e.std_error, 0.0);
    }

    #[test]
    fn linear_kernel_oracle_contract() {
        let ri = ParamRow::new(vec![0.4, -1.1], 0.3);
        let rj = ParamRow::new(vec![0.9, 0.2], -0.6);
        let e = mc_kernel(&Activation::Linear, SufficientStatistic::Identity, &BaseMeasure::StdGaussian { dim: 2 }, &ri, &rj, 200_000, 5).unwrap();
        assert!(e.agrees_with(nnk_linear(&ri, &rj).unwrap()), "{e:?}");
    }

    #[test]
    fn poisson_series_gives_e() {
        let z = ParamRow::new(vec![0.0], 0.0);
        let e = poisson_series(&Activation::Exp, &z, &z, 60).unwrap();
        assert!((e.estimate - std::f64::consts::E).abs() < 1e-15);
        assert!(e.std_error < 1e-15);
    }

    #[test]
    fn mc_is_reproducible() {
        let ri = ParamRow::new(vec![0.4], 0.3);
        let base = BaseMeasure::StdGaussian { dim: 1 };
        let a = mc_kernel(&Activation::Cos, SufficientStatistic::Identity, &base, &ri, &ri, 50_000, 11).unwrap();
        let b = mc_kernel(&Activation::Cos, SufficientStatistic::Identity, &base, &ri, &ri, 50_000, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quadrature_examples() {
        let one = quadrature(|_| 1.0, &Region::Box(vec![(0.0, 1.0)]), 2001).unwrap();
        assert!((one - 1.0).abs() < 1e-12);
        let pdf = quadrature(|x| normal_log_pdf(x[0]).exp(), &gaussian_box(&[0.0], &[1.0]), 2001).unwrap();
        assert!((pdf - 1.0).abs() < 1e-10);
        let circ = quadrature(|_| 1.0, &Region::UnitCircle, 201).unwrap();
        assert!((circ - 1.0).abs() < 1e-12);
        assert!(quadrature(|_| 1.0, &Region::Box(vec![(0.0, 1.0); 3]), 11).is_err());
    }

    #[test]
    fn quadrature_error_shrinks_with_nodes() {
        let f = |x: &[f64]| normal_log_pdf(x[0]).exp();
        let region = Region::Box(vec![(-8.0, 8.0)]);
        let coarse = (quadrature(f, &region, 11).unwrap() - 1.0).abs();
        let fine = (quadrature(f, &region, 21).unwrap() - 1.0).abs();
        assert!(fine < coarse);
    }

    #[test]
    fn fd_examples() {
        let g = fd_gradient(|p| 3.0 * p[0] - 2.0 * p[1] + 0.5, &[0.3, -1.0], 1e-5);
        assert!((g[0] - 3.0).abs() < 1e-10 && (g[1] + 2.0).abs() < 1e-10);
        let g = fd_gradient(|p| p[0] * p[0] + 3.0 * p[0] * p[1], &[1.5, -0.5], 1e-4);
        assert!((g[0] - (3.0 - 1.5)).abs() < 1e-8 && (g[1] - 4.5).abs() < 1e-8);
    }

    #[test]
    fn tabulated_cdf_and_ks() {
        let cdf = TabulatedCdf::new(|x| normal_log_pdf(x).exp(), -8.0, 8.0, 160_001).unwrap();
        assert!((cdf.mass() - 1.0).abs() < 1e-9);
        assert!((cdf.eval(0.0) - 0.5).abs() < 1e-9);
        assert_eq!(cdf.eval(-9.0), 0.0);
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_statistic(&xs, |x| x) <= 0.5e-3 + 1e-12);
        assert!((ks_statistic(&[0.5], |x| x) - 0.5).abs() < 1e-15);
    }
}
