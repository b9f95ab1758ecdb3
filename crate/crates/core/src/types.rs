//! Domain types shared across the crate: parameters, activations, sufficient
//! statistics and base measures.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SnefyError};
use crate::linalg::{cholesky_with_jitter, dvec, from_nested, to_nested};
use crate::special::{log_gamma, normal_quantile};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Hidden-unit activation σ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Cos,
    Sin,
    Linear,
    /// `z − cos(2az) / (2a)`, i.e. snake without its constant offset.
    SnakeNoOffset { a: f64 },
    /// `z + sin²(az) / a`.
    Snake { a: f64 },
    /// `exp(z / 2)`.
    ExpHalf,
    Exp,
}

impl Activation {
    pub fn validate(&self) -> Result<()> {
        match self {
            Activation::SnakeNoOffset { a } | Activation::Snake { a } if !(*a > 0.0 && a.is_finite()) => {
                Err(SnefyError::invalid(format!("snake parameter a = {a} must be positive")))
            }
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            Activation::Cos => u.cos(),
            Activation::Sin => u.sin(),
            Activation::Linear => u,
            Activation::SnakeNoOffset { a } => u - (2.0 * a * u).cos() / (2.0 * a),
            Activation::Snake { a } => {
                let s = (a * u).sin();
                u + s * s / a
            }
            Activation::ExpHalf => (0.5 * u).exp(),
            Activation::Exp => u.exp(),
        }
    }

    #[inline]
    pub fn derivative(&self, u: f64) -> f64 {
        match *self {
            Activation::Cos => -u.sin(),
            Activation::Sin => u.cos(),
            Activation::Linear => 1.0,
            Activation::SnakeNoOffset { a } | Activation::Snake { a } => 1.0 + (2.0 * a * u).sin(),
            Activation::ExpHalf => 0.5 * (0.5 * u).exp(),
            Activation::Exp => u.exp(),
        }
    }

    /// Whether |σ| ≤ 1 everywhere.
    pub fn is_bounded(&self) -> bool {
        matches!(self, Activation::Cos | Activation::Sin)
    }

    pub fn is_exponential(&self) -> bool {
        matches!(self, Activation::Exp | Activation::ExpHalf)
    }

    /// Exponent multiplier `c` for `σ(u) = exp(c u)`.
    pub(crate) fn exp_rate(&self) -> Option<f64> {
        match self {
            Activation::Exp => Some(1.0),
            Activation::ExpHalf => Some(0.5),
            _ => None,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Activation::Cos => "cos".into(),
            Activation::Sin => "sin".into(),
            Activation::Linear => "linear".into(),
            Activation::SnakeNoOffset { a } => format!("snake_no_offset(a={a})"),
            Activation::Snake { a } => format!("snake(a={a})"),
            Activation::ExpHalf => "exp_half".into(),
            Activation::Exp => "exp".into(),
        }
    }
}

/// Sufficient statistic t: ℝ^d → ℝ^D.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SufficientStatistic {
    Identity,
    SphereProjection,
    NormalQuantile,
    /// `(x₁..x_d, x₁²..x_d²)`.
    SquareAugmented,
    /// `(log x, −x)` on `(0, ∞)`.
    GammaStat,
    /// `(log x₁..log x_d)` on the simplex.
    DirichletStat,
}

impl SufficientStatistic {
    /// Output dimension `D` for input dimension `d`.
    pub fn output_dim(&self, d: usize) -> Result<usize> {
        if d == 0 {
            return Err(SnefyError::invalid("input dimension must be at least 1"));
        }
        match self {
            SufficientStatistic::SquareAugmented => Ok(2 * d),
            SufficientStatistic::GammaStat if d != 1 => Err(SnefyError::invalid(
                "gamma statistic is defined on a one-dimensional support",
            )),
            SufficientStatistic::GammaStat => Ok(2),
            SufficientStatistic::DirichletStat if d < 2 => {
                Err(SnefyError::invalid("dirichlet statistic needs at least two coordinates"))
            }
            _ => Ok(d),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.output_dim(x.len())?);
        self.eval_into(x, &mut out)?;
        Ok(out)
    }

    pub(crate) fn eval_into(&self, x: &[f64], out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SnefyError::domain("statistic_eval", "non-finite coordinate"));
        }
        match self {
            SufficientStatistic::Identity => out.extend_from_slice(x),
            SufficientStatistic::SphereProjection => {
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return Err(SnefyError::domain("statistic_eval", "sphere projection of the zero vector"));
                }
                out.extend(x.iter().map(|v| v / norm));
            }
            SufficientStatistic::NormalQuantile => {
                for &v in x {
                    out.push(normal_quantile(v).map_err(|_| {
                        SnefyError::domain("statistic_eval", format!("quantile coordinate {v} outside (0, 1)"))
                    })?);
                }
            }
            SufficientStatistic::SquareAugmented => {
                out.extend_from_slice(x);
                out.extend(x.iter().map(|v| v * v));
            }
            SufficientStatistic::GammaStat => {
                if x.len() != 1 {
                    return Err(SnefyError::DimensionMismatch { expected: 1, got: x.len() });
                }
                if x[0] <= 0.0 {
                    return Err(SnefyError::domain("statistic_eval", format!("gamma support needs x > 0, got {}", x[0])));
                }
                out.push(x[0].ln());
                out.push(-x[0]);
            }
            SufficientStatistic::DirichletStat => {
                let total: f64 = x.iter().sum();
                if x.iter().any(|&v| v <= 0.0) || (total - 1.0).abs() > 1e-8 {
                    return Err(SnefyError::domain("statistic_eval", "point is not in the open simplex"));
                }
                out.extend(x.iter().map(|v| v.ln()));
            }
        }
        Ok(())
    }

    /// Columns of `W` that act on the coordinates `dims` when the statistic factorises
    /// coordinate-wise.
    pub fn factor_columns(&self, d: usize, dims: &[usize]) -> Result<Vec<usize>> {
        match self {
            SufficientStatistic::Identity | SufficientStatistic::NormalQuantile => Ok(dims.to_vec()),
            SufficientStatistic::SquareAugmented => {
                Ok(dims.iter().copied().chain(dims.iter().map(|i| i + d)).collect())
            }
            other => Err(SnefyError::invalid(format!(
                "statistic {} does not factorise over coordinate blocks",
                other.name()
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SufficientStatistic::Identity => "identity",
            SufficientStatistic::SphereProjection => "sphere_projection",
            SufficientStatistic::NormalQuantile => "normal_quantile",
            SufficientStatistic::SquareAugmented => "square_augmented",
            SufficientStatistic::GammaStat => "gamma_stat",
            SufficientStatistic::DirichletStat => "dirichlet_stat",
        }
    }
}

/// A Gaussian with a precomputed factor `A` (`A Aᵀ = C`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GaussianRepr", into = "GaussianRepr")]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    factor: DMatrix<f64>,
    log_det: f64,
}

#[derive(Serialize, Deserialize)]
struct GaussianRepr {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

impl TryFrom<GaussianRepr> for Gaussian {
    type Error = SnefyError;
    fn try_from(r: GaussianRepr) -> Result<Self> {
        Gaussian::new(dvec(&r.mean), from_nested(&r.cov, "cov")?)
    }
}

impl From<Gaussian> for GaussianRepr {
    fn from(g: Gaussian) -> Self {
        GaussianRepr {
            mean: g.mean.iter().copied().collect(),
            cov: to_nested(&g.cov),
        }
    }
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(SnefyError::DimensionMismatch {
                expected: mean.len(),
                got: cov.nrows(),
            });
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(SnefyError::invalid("gaussian mean has non-finite entries"));
        }
        let factor = cholesky_with_jitter(&cov)?;
        let log_det = 2.0 * factor.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self { mean, cov, factor, log_det })
    }

    pub fn diagonal(mean: &[f64], variances: &[f64]) -> Result<Self> {
        Self::new(dvec(mean), DMatrix::from_diagonal(&dvec(variances)))
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: DVector::zeros(dim),
            cov: DMatrix::identity(dim, dim),
            factor: DMatrix::identity(dim, dim),
            log_det: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }
    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }
    /// Lower-triangular `A` with `A Aᵀ = C`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn is_diagonal(&self) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| i == j || self.cov[(i, j)] == 0.0))
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let diff = DVector::from_iterator(x.len(), x.iter().zip(self.mean.iter()).map(|(a, m)| a - m));
        let z = self
            .factor
            .solve_lower_triangular(&diff)
            .expect("cholesky factor has a positive diagonal");
        -0.5 * (self.dim() as f64 * LN_2PI + self.log_det + z.norm_squared())
    }

    /// Marginal over the coordinates `dims` (in order); requires zero cross-covariance
    /// with the complement when `require_block` is set.
    fn sub(&self, dims: &[usize]) -> Result<Self> {
        let mean = DVector::from_iterator(dims.len(), dims.iter().map(|&i| self.mean[i]));
        let cov = DMatrix::from_fn(dims.len(), dims.len(), |a, b| self.cov[(dims[a], dims[b])]);
        Self::new(mean, cov)
    }

    fn is_block_diagonal(&self, first: &[usize], second: &[usize]) -> bool {
        first.iter().all(|&i| second.iter().all(|&j| self.cov[(i, j)] == 0.0))
    }
}

/// One weighted component of a Gaussian-mixture base measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    #[serde(flatten)]
    pub gaussian: Gaussian,
}

/// Reference measure μ the density is taken against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseMeasure {
    StdGaussian { dim: usize },
    Gaussian { gaussian: Gaussian },
    GaussianMixture { components: Vec<MixtureComponent> },
    UniformSphere { dim: usize },
    UniformCube { dim: usize },
    Lebesgue { dim: usize },
    /// `(x!)⁻¹ ν` on `{0, 1, 2, …}` with ν the counting measure.
    Poisson,
}

impl BaseMeasure {
    pub fn gaussian(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Ok(BaseMeasure::Gaussian {
            gaussian: Gaussian::new(mean, cov)?,
        })
    }

    pub fn mixture(components: Vec<MixtureComponent>) -> Result<Self> {
        let base = BaseMeasure::GaussianMixture { components };
        base.validate()?;
        Ok(base)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BaseMeasure::StdGaussian { dim }
            | BaseMeasure::UniformSphere { dim }
            | BaseMeasure::UniformCube { dim }
            | BaseMeasure::Lebesgue { dim }
                if *dim == 0 =>
            {
                Err(SnefyError::invalid("base measure dimension must be at least 1"))
            }
            BaseMeasure::GaussianMixture { components } => {
                let first = components
                    .first()
                    .ok_or_else(|| SnefyError::invalid("mixture needs at least one component"))?;
                let dim = first.gaussian.dim();
                let mut total = 0.0;
                for c in components {
                    if c.gaussian.dim() != dim {
                        return Err(SnefyError::DimensionMismatch {
                            expected: dim,
                            got: c.gaussian.dim(),
                        });
                    }
                    if !(c.weight >= 0.0) || !c.weight.is_finite() {
                        return Err(SnefyError::invalid(format!("mixture weight {} is negative", c.weight)));
                    }
                    total += c.weight;
                }
                if (total - 1.0).abs() > 1e-9 {
                    return Err(SnefyError::invalid(format!("mixture weights sum to {total}, not 1")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            BaseMeasure::StdGaussian { dim }
            | BaseMeasure::UniformSphere { dim }
            | BaseMeasure::UniformCube { dim }
            | BaseMeasure::Lebesgue { dim } => *dim,
            BaseMeasure::Gaussian { gaussian } => gaussian.dim(),
            BaseMeasure::GaussianMixture { components } => components.first().map_or(0, |c| c.gaussian.dim()),
            BaseMeasure::Poisson => 1,
        }
    }

    pub fn is_probability(&self) -> bool {
        !matches!(self, BaseMeasure::Lebesgue { .. } | BaseMeasure::Poisson)
    }

    /// `(A, m)` with `A Aᵀ = C` for Gaussian bases.
    pub fn factor(&self) -> Result<(DMatrix<f64>, DVector<f64>)> {
        match self {
            BaseMeasure::StdGaussian { dim } => Ok((DMatrix::identity(*dim, *dim), DVector::zeros(*dim))),
            BaseMeasure::Gaussian { gaussian } => Ok((gaussian.factor.clone(), gaussian.mean.clone())),
            other => Err(SnefyError::invalid(format!("base {} is not a single Gaussian", other.name()))),
        }
    }

    /// Log-density of μ with respect to its natural reference: Lebesgue measure for the
    /// Gaussian/cube/Lebesgue cases, surface measure on the sphere, counting measure for
    /// the Poisson base.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(SnefyError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(match self {
            BaseMeasure::StdGaussian { .. } => x.iter().map(|v| crate::special::normal_log_pdf(*v)).sum(),
            BaseMeasure::Gaussian { gaussian } => gaussian.log_pdf(x),
            BaseMeasure::GaussianMixture { components } => mixture_log_pdf(components, x),
            BaseMeasure::UniformSphere { dim } => {
                // surface area 2π^{d/2} / Γ(d/2)
                let half = *dim as f64 / 2.0;
                -((2.0_f64).ln() + half * std::f64::consts::PI.ln() - log_gamma(half)?)
            }
            BaseMeasure::UniformCube { .. } => {
                if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    f64::NEG_INFINITY
                } else {
                    0.0
                }
            }
            BaseMeasure::Lebesgue { .. } => 0.0,
            BaseMeasure::Poisson => {
                let k = x[0];
                if k < 0.0 || k.fract() != 0.0 {
                    return Err(SnefyError::domain("base_log_density", format!("{k} is not a count")));
                }
                -log_gamma(k + 1.0)?
            }
        })
    }

    /// Product decomposition `μ = μ₁ × μ₂` over the coordinate blocks.
    pub fn split(&self, first: &[usize], second: &[usize]) -> Result<(BaseMeasure, BaseMeasure)> {
        let not_product = || SnefyError::invalid(format!("base {} is not a product measure over the split", self.name()));
        match self {
            BaseMeasure::StdGaussian { .. } => Ok((
                BaseMeasure::StdGaussian { dim: first.len() },
                BaseMeasure::StdGaussian { dim: second.len() },
            )),
            BaseMeasure::UniformCube { .. } => Ok((
                BaseMeasure::UniformCube { dim: first.len() },
                BaseMeasure::UniformCube { dim: second.len() },
            )),
            BaseMeasure::Lebesgue { .. } => Ok((
                BaseMeasure::Lebesgue { dim: first.len() },
                BaseMeasure::Lebesgue { dim: second.len() },
            )),
            BaseMeasure::Gaussian { gaussian } => {
                if !gaussian.is_block_diagonal(first, second) {
                    return Err(not_product());
                }
                Ok((
                    BaseMeasure::Gaussian { gaussian: gaussian.sub(first)? },
                    BaseMeasure::Gaussian { gaussian: gaussian.sub(second)? },
                ))
            }
            BaseMeasure::GaussianMixture { components } if components.len() == 1 => {
                BaseMeasure::Gaussian {
                    gaussian: components[0].gaussian.clone(),
                }
                .split(first, second)
            }
            _ => Err(not_product()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BaseMeasure::StdGaussian { .. } => "std_gaussian",
            BaseMeasure::Gaussian { .. } => "gaussian",
            BaseMeasure::GaussianMixture { .. } => "gaussian_mixture",
            BaseMeasure::UniformSphere { .. } => "uniform_sphere",
            BaseMeasure::UniformCube { .. } => "uniform_cube",
            BaseMeasure::Lebesgue { .. } => "lebesgue",
            BaseMeasure::Poisson => "poisson",
        }
    }
}

pub(crate) fn mixture_log_pdf(components: &[MixtureComponent], x: &[f64]) -> f64 {
    let logs: Vec<f64> = components
        .iter()
        .map(|c| c.weight.ln() + c.gaussian.log_pdf(x))
        .collect();
    log_sum_exp(&logs)
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// One hidden unit's parameters θᵢ = (wᵢ, bᵢ).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamRow {
    pub w: Vec<f64>,
    pub b: f64,
}

impl ParamRow {
    pub fn new(w: Vec<f64>, b: f64) -> Self {
        Self { w, b }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            w: self.w.iter().map(|v| v * c).collect(),
            b: self.b * c,
        }
    }
}

/// Network parameters: readout `V` (m×n), hidden weights `W` (n×D), biases `b` (n).
#[derive(Debug, Clone, PartialEq)]
pub struct SnefyParams {
    pub v: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl SnefyParams {
    pub fn new(v: DMatrix<f64>, w: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let p = Self { v, w, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m() == 0 || self.n() == 0 || self.input_dim() == 0 {
            return Err(SnefyError::invalid("V, W and b must be non-empty"));
        }
        if self.w.nrows() != self.n() {
            return Err(SnefyError::DimensionMismatch {
                expected: self.n(),
                got: self.w.nrows(),
            });
        }
        if self.b.len() != self.n() {
            return Err(SnefyError::DimensionMismatch {
                expected: self.n(),
                got: self.b.len(),
            });
        }
        if self.v.iter().chain(self.w.iter()).chain(self.b.iter()).any(|x| !x.is_finite()) {
            return Err(SnefyError::invalid("parameters contain non-finite entries"));
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.v.nrows()
    }
    pub fn n(&self) -> usize {
        self.v.ncols()
    }
    /// Statistic dimension `D`.
    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn row(&self, i: usize) -> ParamRow {
        ParamRow {
            w: self.w.row(i).iter().copied().collect(),
            b: self.b[i],
        }
    }

    pub fn rows(&self) -> Vec<ParamRow> {
        (0..self.n()).map(|i| self.row(i)).collect()
    }

    /// `M = VᵀV`.
    pub fn readout_gram(&self) -> DMatrix<f64> {
        self.v.transpose() * &self.v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;

    #[test]
    fn statistic_examples() {
        assert_eq!(SufficientStatistic::Identity.eval(&[1.5, -2.0]).unwrap(), vec![1.5, -2.0]);
        assert_eq!(SufficientStatistic::SphereProjection.eval(&[3.0, 4.0]).unwrap(), vec![0.6, 0.8]);
        assert_eq!(SufficientStatistic::SquareAugmented.eval(&[2.0]).unwrap(), vec![2.0, 4.0]);
        assert_eq!(SufficientStatistic::GammaStat.eval(&[1.0]).unwrap(), vec![0.0, -1.0]);
        let q = SufficientStatistic::NormalQuantile.eval(&[0.5, 0.975]).unwrap();
        assert!(q[0].abs() < 1e-15 && (q[1] - 1.959964).abs() < 1e-6);
    }

    #[test]
    fn statistic_domain_errors() {
        assert!(SufficientStatistic::SphereProjection.eval(&[0.0, 0.0]).is_err());
        assert!(SufficientStatistic::GammaStat.eval(&[0.0]).is_err());
        assert!(SufficientStatistic::GammaStat.eval(&[-1.0]).is_err());
        assert!(SufficientStatistic::NormalQuantile.eval(&[1.0]).is_err());
        assert!(SufficientStatistic::DirichletStat.eval(&[0.5, 0.6]).is_err());
        assert!(SufficientStatistic::DirichletStat.eval(&[0.25, 0.75]).is_ok());
    }

    #[test]
    fn output_dimensions() {
        assert_eq!(SufficientStatistic::SquareAugmented.output_dim(3).unwrap(), 6);
        assert_eq!(SufficientStatistic::GammaStat.output_dim(1).unwrap(), 2);
        assert!(SufficientStatistic::GammaStat.output_dim(2).is_err());
        assert_eq!(SufficientStatistic::DirichletStat.output_dim(3).unwrap(), 3);
    }

    #[test]
    fn base_factor_examples() {
        let (a, m) = BaseMeasure::StdGaussian { dim: 2 }.factor().unwrap();
        assert_eq!(a, DMatrix::identity(2, 2));
        assert_eq!(m, DVector::zeros(2));

        let base = BaseMeasure::gaussian(
            DVector::zeros(2),
            DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0])),
        )
        .unwrap();
        let (a, _) = base.factor().unwrap();
        assert_eq!(a, DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0])));
    }

    #[test]
    fn base_factor_random_psd() {
        let b = DMatrix::from_row_slice(3, 3, &[1.2, -0.3, 0.5, 0.1, 0.9, -0.7, 0.4, 0.2, 1.1]);
        let c = &b * b.transpose();
        let base = BaseMeasure::gaussian(DVector::from_vec(vec![1.0, 2.0, 3.0]), c.clone()).unwrap();
        let (a, m) = base.factor().unwrap();
        assert!((&a * a.transpose() - &c).norm() <= 1e-10 * c.norm());
        assert_eq!(m.as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn non_psd_covariance_rejected() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(
            BaseMeasure::gaussian(DVector::zeros(2), c),
            Err(SnefyError::NotPositiveSemidefinite)
        );
    }

    #[test]
    fn mixture_validation() {
        let comp = |w| MixtureComponent {
            weight: w,
            gaussian: Gaussian::standard(2),
        };
        assert!(BaseMeasure::mixture(vec![comp(0.3), comp(0.7)]).is_ok());
        assert!(BaseMeasure::mixture(vec![comp(0.3), comp(0.3)]).is_err());
        assert!(BaseMeasure::mixture(vec![]).is_err());
    }

    #[test]
    fn gaussian_log_pdf_matches_product_of_normals() {
        let g = Gaussian::diagonal(&[1.0, -1.0], &[4.0, 0.25]).unwrap();
        let x = [0.3, 0.2];
        let expected = crate::special::normal_log_pdf((0.3 - 1.0) / 2.0) - 2.0_f64.ln()
            + crate::special::normal_log_pdf((0.2 + 1.0) / 0.5)
            - 0.5_f64.ln();
        assert!((g.log_pdf(&x) - expected).abs() < 1e-14);
    }

    #[test]
    fn readout_gram_is_psd() {
        let v = DMatrix::from_row_slice(2, 3, &[0.3, -1.2, 0.8, 2.0, 0.1, -0.4]);
        let p = SnefyParams::new(v, DMatrix::zeros(3, 1), DVector::zeros(3)).unwrap();
        let m = p.readout_gram();
        assert!(min_eigenvalue(&m) >= -1e-10 * m.trace());
    }

    #[test]
    fn gaussian_json_roundtrip() {
        let g = Gaussian::diagonal(&[0.1, 0.2], &[1.5, 0.3]).unwrap();
        let s = serde_json::to_string(&BaseMeasure::Gaussian { gaussian: g.clone() }).unwrap();
        let back: BaseMeasure = serde_json::from_str(&s).unwrap();
        assert_eq!(back, BaseMeasure::Gaussian { gaussian: g });
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn sphere_projection_scale_invariant(
                x in proptest::collection::vec(-5.0f64..5.0, 3),
                c in 0.01f64..100.0,
            ) {
                prop_assume!(x.iter().map(|v| v * v).sum::<f64>() > 1e-6);
                let a = SufficientStatistic::SphereProjection.eval(&x).unwrap();
                let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
                let b = SufficientStatistic::SphereProjection.eval(&scaled).unwrap();
                for (p, q) in a.iter().zip(&b) {
                    prop_assert!((p - q).abs() < 1e-14);
                }
            }
        }
    }
}
