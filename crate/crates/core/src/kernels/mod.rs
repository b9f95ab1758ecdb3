//! Closed-form neural network kernels `k(θᵢ, θⱼ) = ∫ σ(wᵢᵀt(x)+bᵢ) σ(wⱼᵀt(x)+bⱼ) dμ(x)`
//! and their analytic partial derivatives.

mod exponential;
mod gaussian;

pub use exponential::{
    nnk_exp_dirichlet, nnk_exp_gamma, nnk_exp_poisson, nnk_exp_rbf, nnk_exp_rbf_location_scale, nnk_exp_vmf,
    rbf_row_from_location_scale,
};
pub use gaussian::{nnk_cos, nnk_exp_gauss, nnk_linear, nnk_sin, nnk_snake, nnk_snake_nooffset};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Result, SnefyError};
use crate::types::{Activation, BaseMeasure, MixtureComponent, ParamRow, SufficientStatistic};

/// Closed-form kernel family selected by the (activation, statistic, base) triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Cos,
    Sin,
    Linear,
    SnakeNoOffset,
    Snake,
    ExpGauss,
    Vmf,
    Poisson,
    Rbf,
    Gamma,
    Dirichlet,
}

impl KernelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::Cos => "cos",
            KernelFamily::Sin => "sin",
            KernelFamily::Linear => "linear",
            KernelFamily::SnakeNoOffset => "snake_no_offset",
            KernelFamily::Snake => "snake",
            KernelFamily::ExpGauss => "exp_gauss",
            KernelFamily::Vmf => "exp_vmf",
            KernelFamily::Poisson => "exp_poisson",
            KernelFamily::Rbf => "exp_rbf",
            KernelFamily::Gamma => "exp_gamma",
            KernelFamily::Dirichlet => "exp_dirichlet",
        }
    }

    /// Short description of the closed form, surfaced in verification reports.
    pub fn reference(&self) -> &'static str {
        match self {
            KernelFamily::Cos => "cos | identity | gaussian: damped cosines of bias difference/sum",
            KernelFamily::Sin => "sin | identity | gaussian: product-to-sum of the cos kernel",
            KernelFamily::Linear => "linear | identity | gaussian: bilinear form",
            KernelFamily::SnakeNoOffset => "snake without offset | identity | gaussian: Stein expansion",
            KernelFamily::Snake => "snake | identity | gaussian: offset-free kernel plus mean terms",
            KernelFamily::ExpGauss => "exp | identity | gaussian: moment generating function",
            KernelFamily::Vmf => "exp | sphere projection | gaussian: von Mises-Fisher normalizer",
            KernelFamily::Poisson => "exp | identity | 1/x! counting: Poisson partition function",
            KernelFamily::Rbf => "exp | (x, x^2) | lebesgue: radial basis function",
            KernelFamily::Gamma => "exp | (log x, -x) | lebesgue: gamma normalizer",
            KernelFamily::Dirichlet => "exp | log x | simplex: dirichlet normalizer",
        }
    }
}

/// Partial derivatives of `k(θᵢ, θⱼ)` with respect to both arguments.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelGrad {
    pub dwi: Vec<f64>,
    pub dbi: f64,
    pub dwj: Vec<f64>,
    pub dbj: f64,
}

impl KernelGrad {
    fn zeros(dim: usize) -> Self {
        Self {
            dwi: vec![0.0; dim],
            dbi: 0.0,
            dwj: vec![0.0; dim],
            dbj: 0.0,
        }
    }

    pub(crate) fn add_scaled(&mut self, other: &KernelGrad, c: f64) {
        for (a, b) in self.dwi.iter_mut().zip(&other.dwi) {
            *a += c * b;
        }
        for (a, b) in self.dwj.iter_mut().zip(&other.dwj) {
            *a += c * b;
        }
        self.dbi += c * other.dbi;
        self.dbj += c * other.dbj;
    }

    fn scale(mut self, c: f64) -> Self {
        self.dwi.iter_mut().chain(self.dwj.iter_mut()).for_each(|v| *v *= c);
        self.dbi *= c;
        self.dbj *= c;
        self
    }
}

pub(crate) fn check_dims(ri: &ParamRow, rj: &ParamRow) -> Result<()> {
    if ri.w.len() != rj.w.len() {
        return Err(SnefyError::DimensionMismatch {
            expected: ri.w.len(),
            got: rj.w.len(),
        });
    }
    Ok(())
}

/// `Tθ = (Aᵀw, b + wᵀm)`, mapping a kernel under `N(m, AAᵀ)` to one under `N(0, I)`.
pub fn reparam_gaussian(row: &ParamRow, a: &DMatrix<f64>, m: &DVector<f64>) -> Result<ParamRow> {
    if row.w.len() != a.nrows() || m.len() != a.nrows() {
        return Err(SnefyError::DimensionMismatch {
            expected: a.nrows(),
            got: row.w.len(),
        });
    }
    let w = DVector::from_column_slice(&row.w);
    let tw = a.tr_mul(&w);
    Ok(ParamRow::new(tw.iter().copied().collect(), row.b + w.dot(m)))
}

/// Affine reparameterisations applied to rows before the family kernel.
#[derive(Debug, Clone)]
enum BaseTransform {
    Standard,
    Gaussian { a: DMatrix<f64>, m: DVector<f64> },
    Mixture(Vec<(f64, DMatrix<f64>, DVector<f64>)>),
}

/// ∂/∂ of a weighted kernel sum `Σᵢⱼ Mᵢⱼ k(θᵢ, θⱼ)`.
#[derive(Debug, Clone)]
pub struct WeightedKernelGrad {
    pub value: f64,
    pub dw: DMatrix<f64>,
    pub db: DVector<f64>,
    /// Per mixture component (or the single Gaussian): derivatives with respect to the
    /// weight, factor `A` and mean `m`.
    pub base: Vec<BaseComponentGrad>,
}

#[derive(Debug, Clone)]
pub struct BaseComponentGrad {
    pub dweight: f64,
    pub dfactor: DMatrix<f64>,
    pub dmean: DVector<f64>,
}

/// A dispatched kernel: family, activation scale and base-measure transform.
#[derive(Debug, Clone)]
pub struct Kernel {
    family: KernelFamily,
    snake_a: f64,
    halve: bool,
    sphere_dim: usize,
    transform: BaseTransform,
}

impl Kernel {
    /// Looks up the closed form for `(activation, statistic, base)`; every other triple is rejected.
    pub fn dispatch(activation: &Activation, statistic: SufficientStatistic, base: &BaseMeasure) -> Result<Self> {
        activation.validate()?;
        base.validate()?;
        let unsupported = || SnefyError::UnsupportedTriple {
            activation: activation.name(),
            statistic: statistic.name().to_string(),
            base: base.name().to_string(),
        };
        let halve = matches!(activation, Activation::ExpHalf);
        let snake_a = match activation {
            Activation::Snake { a } | Activation::SnakeNoOffset { a } => *a,
            _ => 0.0,
        };
        let gaussian_family = match activation {
            Activation::Cos => KernelFamily::Cos,
            Activation::Sin => KernelFamily::Sin,
            Activation::Linear => KernelFamily::Linear,
            Activation::SnakeNoOffset { .. } => KernelFamily::SnakeNoOffset,
            Activation::Snake { .. } => KernelFamily::Snake,
            Activation::Exp | Activation::ExpHalf => KernelFamily::ExpGauss,
        };
        use BaseMeasure as B;
        use SufficientStatistic as S;
        let exp = activation.is_exponential();
        let (family, transform) = match (statistic, base) {
            (S::Identity, B::StdGaussian { .. }) | (S::NormalQuantile, B::UniformCube { .. }) => {
                (gaussian_family, BaseTransform::Standard)
            }
            (S::Identity, B::Gaussian { gaussian }) => (
                gaussian_family,
                BaseTransform::Gaussian {
                    a: gaussian.factor().clone(),
                    m: gaussian.mean().clone(),
                },
            ),
            (S::Identity, B::GaussianMixture { components }) => {
                (gaussian_family, BaseTransform::Mixture(mixture_transforms(components)))
            }
            (S::SphereProjection, B::StdGaussian { dim } | B::UniformSphere { dim }) | (S::Identity, B::UniformSphere { dim })
                if exp && *dim >= 2 =>
            {
                (KernelFamily::Vmf, BaseTransform::Standard)
            }
            (S::Identity, B::Poisson) if exp => (KernelFamily::Poisson, BaseTransform::Standard),
            (S::SquareAugmented, B::Lebesgue { .. }) if exp => (KernelFamily::Rbf, BaseTransform::Standard),
            (S::GammaStat, B::Lebesgue { dim: 1 }) if exp => (KernelFamily::Gamma, BaseTransform::Standard),
            (S::DirichletStat, B::Lebesgue { dim }) if exp && *dim >= 2 => {
                (KernelFamily::Dirichlet, BaseTransform::Standard)
            }
            _ => return Err(unsupported()),
        };
        Ok(Self {
            family,
            snake_a,
            halve,
            sphere_dim: base.dim(),
            transform,
        })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn is_halved(&self) -> bool {
        self.halve
    }

    pub fn reference(&self) -> String {
        let mut tag = self.family.reference().to_string();
        if self.halve {
            tag.push_str(" (half-scaled rows)");
        }
        match self.transform {
            BaseTransform::Standard => {}
            BaseTransform::Gaussian { .. } => tag.push_str(" + gaussian reparameterisation"),
            BaseTransform::Mixture(_) => tag.push_str(" + mixture of reparameterised components"),
        }
        tag
    }

    fn family_eval(&self, ri: &ParamRow, rj: &ParamRow) -> Result<f64> {
        if self.halve {
            return self.family_eval_raw(&ri.scaled(0.5), &rj.scaled(0.5));
        }
        self.family_eval_raw(ri, rj)
    }

    fn family_eval_raw(&self, ri: &ParamRow, rj: &ParamRow) -> Result<f64> {
        match self.family {
            KernelFamily::Cos => nnk_cos(ri, rj),
            KernelFamily::Sin => nnk_sin(ri, rj),
            KernelFamily::Linear => nnk_linear(ri, rj),
            KernelFamily::SnakeNoOffset => nnk_snake_nooffset(self.snake_a, ri, rj),
            KernelFamily::Snake => nnk_snake(self.snake_a, ri, rj),
            KernelFamily::ExpGauss => nnk_exp_gauss(ri, rj),
            KernelFamily::Vmf => nnk_exp_vmf(ri, rj, self.sphere_dim),
            KernelFamily::Poisson => nnk_exp_poisson(ri, rj),
            KernelFamily::Rbf => nnk_exp_rbf(ri, rj),
            KernelFamily::Gamma => nnk_exp_gamma(ri, rj),
            KernelFamily::Dirichlet => nnk_exp_dirichlet(ri, rj),
        }
    }

    fn family_grad(&self, ri: &ParamRow, rj: &ParamRow) -> Result<KernelGrad> {
        if self.halve {
            return Ok(self.family_grad_raw(&ri.scaled(0.5), &rj.scaled(0.5))?.scale(0.5));
        }
        self.family_grad_raw(ri, rj)
    }

    fn family_grad_raw(&self, ri: &ParamRow, rj: &ParamRow) -> Result<KernelGrad> {
        check_dims(ri, rj)?;
        match self.family {
            KernelFamily::Cos => Ok(gaussian::cos_grad(ri, rj)),
            KernelFamily::Sin => Ok(gaussian::sin_grad(ri, rj)),
            KernelFamily::Linear => Ok(gaussian::linear_grad(ri, rj)),
            KernelFamily::SnakeNoOffset => Ok(gaussian::snake_nooffset_grad(self.snake_a, ri, rj)),
            KernelFamily::Snake => Ok(gaussian::snake_grad(self.snake_a, ri, rj)),
            KernelFamily::ExpGauss => gaussian::exp_gauss_grad(ri, rj),
            KernelFamily::Vmf => exponential::vmf_grad(ri, rj, self.sphere_dim),
            KernelFamily::Poisson => exponential::poisson_grad(ri, rj),
            KernelFamily::Rbf => exponential::rbf_grad(ri, rj),
            KernelFamily::Gamma => exponential::gamma_grad(ri, rj),
            KernelFamily::Dirichlet => exponential::dirichlet_grad(ri, rj),
        }
    }

    /// `k(θᵢ, θⱼ)` including the base-measure transform.
    pub fn eval(&self, ri: &ParamRow, rj: &ParamRow) -> Result<f64> {
        check_dims(ri, rj)?;
        match &self.transform {
            BaseTransform::Standard => self.family_eval(ri, rj),
            BaseTransform::Gaussian { a, m } => self.family_eval(&reparam_gaussian(ri, a, m)?, &reparam_gaussian(rj, a, m)?),
            BaseTransform::Mixture(parts) => {
                let mut total = 0.0;
                for (pi, a, m) in parts {
                    total += pi * self.family_eval(&reparam_gaussian(ri, a, m)?, &reparam_gaussian(rj, a, m)?)?;
                }
                Ok(total)
            }
        }
    }

    /// Analytic partial derivatives of [`Kernel::eval`].
    pub fn grad(&self, ri: &ParamRow, rj: &ParamRow) -> Result<KernelGrad> {
        check_dims(ri, rj)?;
        match &self.transform {
            BaseTransform::Standard => self.family_grad(ri, rj),
            BaseTransform::Gaussian { a, m } => self.reparam_grad(ri, rj, a, m),
            BaseTransform::Mixture(parts) => {
                let mut g = KernelGrad::zeros(ri.w.len());
                for (pi, a, m) in parts {
                    g.add_scaled(&self.reparam_grad(ri, rj, a, m)?, *pi);
                }
                Ok(g)
            }
        }
    }

    fn reparam_grad(&self, ri: &ParamRow, rj: &ParamRow, a: &DMatrix<f64>, m: &DVector<f64>) -> Result<KernelGrad> {
        let g = self.family_grad(&reparam_gaussian(ri, a, m)?, &reparam_gaussian(rj, a, m)?)?;
        let back = |gw: &[f64], gb: f64| -> Vec<f64> { (a * DVector::from_column_slice(gw) + m * gb).iter().copied().collect() };
        Ok(KernelGrad {
            dwi: back(&g.dwi, g.dbi),
            dbi: g.dbi,
            dwj: back(&g.dwj, g.dbj),
            dbj: g.dbj,
        })
    }

    /// Gram matrix `Kᵢⱼ = k(θᵢ, θⱼ)`, filled on the upper triangle and mirrored.
    pub fn gram(&self, rows: &[ParamRow]) -> Result<DMatrix<f64>> {
        let n = rows.len();
        let mut k = DMatrix::zeros(n, n);
        for (tw, parts) in self.transformed(rows)? {
            for i in 0..n {
                for j in i..n {
                    let v = self.family_eval(&parts[i], &parts[j]).map_err(|e| self.entry_error(i, j, e))?;
                    k[(i, j)] += tw * v;
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                k[(i, j)] = k[(j, i)];
            }
        }
        Ok(k)
    }

    fn entry_error(&self, i: usize, j: usize, e: SnefyError) -> SnefyError {
        SnefyError::KernelEntry {
            kernel: self.family.name(),
            i,
            j,
            source: Box::new(e),
        }
    }

    /// Rows mapped through each base component, paired with the component weight.
    fn transformed(&self, rows: &[ParamRow]) -> Result<Vec<(f64, Vec<ParamRow>)>> {
        match &self.transform {
            BaseTransform::Standard => Ok(vec![(1.0, rows.to_vec())]),
            BaseTransform::Gaussian { a, m } => Ok(vec![(
                1.0,
                rows.iter().map(|r| reparam_gaussian(r, a, m)).collect::<Result<_>>()?,
            )]),
            BaseTransform::Mixture(parts) => parts
                .iter()
                .map(|(pi, a, m)| Ok((*pi, rows.iter().map(|r| reparam_gaussian(r, a, m)).collect::<Result<_>>()?)))
                .collect(),
        }
    }

    /// Value and gradient of `Σᵢⱼ Mᵢⱼ k(θᵢ, θⱼ)` for symmetric `M`, with respect to the rows
    /// and (for Gaussian-type bases) the base parameters.
    pub fn weighted_grad(&self, rows: &[ParamRow], m: &DMatrix<f64>) -> Result<WeightedKernelGrad> {
        let n = rows.len();
        let dim = rows.first().map_or(0, |r| r.w.len());
        let mut out = WeightedKernelGrad {
            value: 0.0,
            dw: DMatrix::zeros(n, dim),
            db: DVector::zeros(n),
            base: Vec::new(),
        };
        let components: Vec<(f64, Option<(&DMatrix<f64>, &DVector<f64>)>)> = match &self.transform {
            BaseTransform::Standard => vec![(1.0, None)],
            BaseTransform::Gaussian { a, m } => vec![(1.0, Some((a, m)))],
            BaseTransform::Mixture(parts) => parts.iter().map(|(pi, a, m)| (*pi, Some((a, m)))).collect(),
        };
        for (pi, am) in components {
            let parts: Vec<ParamRow> = match am {
                None => rows.to_vec(),
                Some((a, mu)) => rows.iter().map(|r| reparam_gaussian(r, a, mu)).collect::<Result<_>>()?,
            };
            // gradients on the transformed rows
            let mut gw = DMatrix::zeros(n, dim);
            let mut gb = DVector::zeros(n);
            let mut value = 0.0;
            for i in 0..n {
                for j in i..n {
                    let mult = if i == j { m[(i, i)] } else { 2.0 * m[(i, j)] };
                    if mult == 0.0 {
                        continue;
                    }
                    value += mult * self.family_eval(&parts[i], &parts[j]).map_err(|e| self.entry_error(i, j, e))?;
                    let g = self.family_grad(&parts[i], &parts[j]).map_err(|e| self.entry_error(i, j, e))?;
                    for c in 0..dim {
                        gw[(i, c)] += mult * g.dwi[c];
                        gw[(j, c)] += mult * g.dwj[c];
                    }
                    gb[i] += mult * g.dbi;
                    gb[j] += mult * g.dbj;
                }
            }
            out.value += pi * value;
            out.db += &gb * pi;
            match am {
                None => out.dw += &gw * pi,
                Some((a, mu)) => {
                    // w' = Aᵀw, b' = b + wᵀm
                    out.dw += (&gw * a.transpose() + &gb * mu.transpose()) * pi;
                    let mut dfactor = DMatrix::zeros(dim, dim);
                    let mut dmean = DVector::zeros(dim);
                    for i in 0..n {
                        let w = DVector::from_column_slice(&rows[i].w);
                        dfactor += &w * gw.row(i) * pi;
                        dmean += &w * (gb[i] * pi);
                    }
                    out.base.push(BaseComponentGrad {
                        dweight: value,
                        dfactor,
                        dmean,
                    });
                }
            }
        }
        Ok(out)
    }
}

fn mixture_transforms(components: &[MixtureComponent]) -> Vec<(f64, DMatrix<f64>, DVector<f64>)> {
    components
        .iter()
        .map(|c| (c.weight, c.gaussian.factor().clone(), c.gaussian.mean().clone()))
        .collect()
}

/// `Σₖ πₖ k(Tₖθᵢ, Tₖθⱼ)` for a Gaussian-mixture base with identity statistic.
pub fn nnk_mixture_base(ri: &ParamRow, rj: &ParamRow, base: &BaseMeasure, activation: &Activation) -> Result<f64> {
    if !matches!(base, BaseMeasure::GaussianMixture { .. }) {
        return Err(SnefyError::invalid("nnk_mixture_base expects a gaussian mixture base"));
    }
    Kernel::dispatch(activation, SufficientStatistic::Identity, base)?.eval(ri, rj)
}

/// Analytic partial derivatives of a dispatched kernel.
pub fn nnk_grad(kernel: &Kernel, ri: &ParamRow, rj: &ParamRow) -> Result<KernelGrad> {
    kernel.grad(ri, rj)
}
