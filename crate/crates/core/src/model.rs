//! The SNEFY distribution: kernel matrix, normalizing constant, densities, conditioning,
//! marginalization and moment identities.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SnefyError};
use crate::kernels::{Kernel, KernelFamily};
use crate::linalg::{from_nested, psd_root, to_nested};
use crate::types::{Activation, BaseMeasure, ParamRow, SnefyParams, SufficientStatistic};

/// Relative floor on `Z` below which a model is declared degenerate.
pub const Z_FLOOR_REL: f64 = 1e-12;

/// Pairwise kernel evaluations `Kᵢⱼ = k(θᵢ, θⱼ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub k: DMatrix<f64>,
    pub family: KernelFamily,
}

/// Log-density decomposition; `log_density = log_unnormalized − log_z` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityEvaluation {
    pub log_unnormalized: f64,
    pub log_z: f64,
    pub log_density: f64,
}

impl DensityEvaluation {
    /// `‖f‖² = 0` gives `log_density = −∞`, reported rather than raised.
    pub fn is_zero(&self) -> bool {
        self.log_unnormalized == f64::NEG_INFINITY
    }
}

/// Measure the reported density is taken against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportingConvention {
    /// Density with respect to the base measure μ.
    #[default]
    Base,
    /// Base density plus `log dμ/dx` (Lebesgue, surface or counting reference).
    Lebesgue,
}

/// Coordinate split `x = (x₁, x₂)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub first: Vec<usize>,
    pub second: Vec<usize>,
}

impl Split {
    pub fn new(first: Vec<usize>, second: Vec<usize>) -> Self {
        Self { first, second }
    }

    pub fn swapped(&self) -> Self {
        Self::new(self.second.clone(), self.first.clone())
    }

    fn validate(&self, d: usize) -> Result<()> {
        let mut seen = vec![false; d];
        for &i in self.first.iter().chain(&self.second) {
            if i >= d || seen[i] {
                return Err(SnefyError::invalid(format!("split index {i} is out of range or repeated")));
            }
            seen[i] = true;
        }
        if self.first.is_empty() || self.second.is_empty() || seen.iter().any(|s| !s) {
            return Err(SnefyError::invalid("split must partition the coordinates into two non-empty blocks"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Normalization {
    k: KernelMatrix,
    z: f64,
}

/// Mean and (where available analytically) covariance of `t(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub mean: DVector<f64>,
    pub cov: Option<DMatrix<f64>>,
}

/// `p(x) = ‖V σ(W t(x) + b)‖² / Z` with respect to the base measure.
#[derive(Debug, Clone)]
pub struct SnefyModel {
    params: SnefyParams,
    activation: Activation,
    statistic: SufficientStatistic,
    base: BaseMeasure,
    kernel: Kernel,
    cache: OnceLock<std::result::Result<Normalization, SnefyError>>,
}

impl PartialEq for SnefyModel {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
            && self.activation == other.activation
            && self.statistic == other.statistic
            && self.base == other.base
    }
}

impl SnefyModel {
    pub fn new(params: SnefyParams, activation: Activation, statistic: SufficientStatistic, base: BaseMeasure) -> Result<Self> {
        params.validate()?;
        let kernel = Kernel::dispatch(&activation, statistic, &base)?;
        let expected = statistic.output_dim(base.dim())?;
        if params.input_dim() != expected {
            return Err(SnefyError::DimensionMismatch {
                expected,
                got: params.input_dim(),
            });
        }
        Ok(Self {
            params,
            activation,
            statistic,
            base,
            kernel,
            cache: OnceLock::new(),
        })
    }

    /// Same family with new parameters (cache reset).
    pub fn with_params(&self, params: SnefyParams) -> Result<Self> {
        Self::new(params, self.activation, self.statistic, self.base.clone())
    }

    pub fn with_base(&self, base: BaseMeasure) -> Result<Self> {
        Self::new(self.params.clone(), self.activation, self.statistic, base)
    }

    pub fn params(&self) -> &SnefyParams {
        &self.params
    }
    pub fn activation(&self) -> Activation {
        self.activation
    }
    pub fn statistic(&self) -> SufficientStatistic {
        self.statistic
    }
    pub fn base(&self) -> &BaseMeasure {
        &self.base
    }
    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }
    /// Dimension `d` of the support.
    pub fn support_dim(&self) -> usize {
        self.base.dim()
    }

    fn normalization(&self) -> Result<&Normalization> {
        self.cache
            .get_or_init(|| {
                let k = self.kernel.gram(&self.params.rows())?;
                let m = self.params.readout_gram();
                let z = m.component_mul(&k).sum();
                let floor = Z_FLOOR_REL * m.trace() * k.amax();
                if !z.is_finite() || z <= floor {
                    return Err(SnefyError::ZeroNormalizer { z, floor });
                }
                Ok(Normalization {
                    k: KernelMatrix {
                        k,
                        family: self.kernel.family(),
                    },
                    z,
                })
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    pub fn kernel_matrix(&self) -> Result<KernelMatrix> {
        match self.normalization() {
            Ok(n) => Ok(n.k.clone()),
            // degenerate Z still has a well-defined kernel matrix
            Err(SnefyError::ZeroNormalizer { .. }) => Ok(KernelMatrix {
                k: self.kernel.gram(&self.params.rows())?,
                family: self.kernel.family(),
            }),
            Err(e) => Err(e),
        }
    }

    /// `Z = Tr(VᵀV K)`.
    pub fn normalizing_constant(&self) -> Result<f64> {
        Ok(self.normalization()?.z)
    }

    /// `Tr(VᵀV K)` without the degeneracy floor.
    pub(crate) fn raw_trace(&self) -> Result<f64> {
        let k = self.kernel.gram(&self.params.rows())?;
        Ok(self.params.readout_gram().component_mul(&k).sum())
    }

    /// Pre-activations `u = W t + b`.
    pub(crate) fn preactivations(&self, t: &[f64]) -> Vec<f64> {
        let w = &self.params.w;
        (0..self.params.n())
            .map(|i| {
                let mut s = self.params.b[i];
                for (c, tc) in t.iter().enumerate() {
                    s += w[(i, c)] * tc;
                }
                s
            })
            .collect()
    }

    /// `log ‖V σ(u)‖²`, shifted by the largest exponent for exp activations.
    pub(crate) fn log_sq_norm(&self, u: &[f64]) -> f64 {
        let v = &self.params.v;
        let (shift, s): (f64, Vec<f64>) = match self.activation.exp_rate() {
            Some(c) => {
                let umax = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (2.0 * c * umax, u.iter().map(|ui| (c * (ui - umax)).exp()).collect())
            }
            None => (0.0, u.iter().map(|ui| self.activation.eval(*ui)).collect()),
        };
        let mut total = 0.0;
        for r in 0..v.nrows() {
            let mut f = 0.0;
            for (j, sj) in s.iter().enumerate() {
                f += v[(r, j)] * sj;
            }
            total += f * f;
        }
        shift + total.ln()
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.support_dim() {
            return Err(SnefyError::DimensionMismatch {
                expected: self.support_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `‖f(t(x))‖²`.
    pub fn unnormalized(&self, x: &[f64]) -> Result<f64> {
        Ok(self.log_unnormalized(x)?.exp())
    }

    pub fn log_unnormalized(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let t = self.statistic.eval(x)?;
        Ok(self.log_sq_norm(&self.preactivations(&t)))
    }

    /// Log-density with respect to the base measure.
    pub fn log_density(&self, x: &[f64]) -> Result<DensityEvaluation> {
        let log_unnormalized = self.log_unnormalized(x)?;
        let log_z = self.normalizing_constant()?.ln();
        Ok(DensityEvaluation {
            log_unnormalized,
            log_z,
            log_density: log_unnormalized - log_z,
        })
    }

    pub fn log_density_with(&self, x: &[f64], convention: ReportingConvention) -> Result<f64> {
        let e = self.log_density(x)?;
        Ok(match convention {
            ReportingConvention::Base => e.log_density,
            ReportingConvention::Lebesgue => e.log_density + self.base.log_density(x)?,
        })
    }

    /// Model for `x₁ | x₂`: same `V`, rows `(W₁, W₂ t₂(x₂) + b)`, base `μ₁`.
    pub fn condition(&self, split: &Split, x2: &[f64]) -> Result<SnefyModel> {
        let d = self.support_dim();
        split.validate(d)?;
        if x2.len() != split.second.len() {
            return Err(SnefyError::DimensionMismatch {
                expected: split.second.len(),
                got: x2.len(),
            });
        }
        let (w1, w2) = self.block_weights(split)?;
        let (base1, _) = self.base.split(&split.first, &split.second)?;
        let t2 = self.statistic.eval(x2)?;
        let b = &self.params.b + &w2 * DVector::from_column_slice(&t2);
        SnefyModel::new(
            SnefyParams::new(self.params.v.clone(), w1, b)?,
            self.activation,
            self.statistic,
            base1,
        )
    }

    fn block_weights(&self, split: &Split) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let d = self.support_dim();
        let c1 = self.statistic.factor_columns(d, &split.first)?;
        let c2 = self.statistic.factor_columns(d, &split.second)?;
        Ok((self.params.w.select_columns(&c1), self.params.w.select_columns(&c2)))
    }

    /// Density of `x₁` with respect to `μ₁`, integrating out `x₂`.
    pub fn marginal_density(&self, split: &Split, x1: &[f64]) -> Result<f64> {
        let z = self.normalizing_constant()?;
        let inner = self.condition(&split.swapped(), x1)?;
        Ok(inner.raw_trace()? / z)
    }

    /// For exp-half activations: the `x₁` marginal as a SNEFY with readout `Ṽ`,
    /// `ṼᵀṼ = (VᵀV) ∘ Z₂` and rows `(W₁, b)`.
    pub fn marginal_model_exp(&self, split: &Split) -> Result<SnefyModel> {
        if self.activation != Activation::ExpHalf {
            return Err(SnefyError::invalid(
                "closed-form marginal models need the exp-half activation; use marginal_density instead",
            ));
        }
        let m_tilde = self.marginal_readout_gram(split)?;
        let (w1, _) = self.block_weights(split)?;
        let (base1, _) = self.base.split(&split.first, &split.second)?;
        SnefyModel::new(
            SnefyParams::new(psd_root(&m_tilde), w1, self.params.b.clone())?,
            self.activation,
            self.statistic,
            base1,
        )
    }

    /// `(VᵀV) ∘ Z₂` with `Z₂ᵢⱼ` the second-block kernel at zero bias.
    pub fn marginal_readout_gram(&self, split: &Split) -> Result<DMatrix<f64>> {
        split.validate(self.support_dim())?;
        let (_, w2) = self.block_weights(split)?;
        let (_, base2) = self.base.split(&split.first, &split.second)?;
        let k2 = Kernel::dispatch(&self.activation, self.statistic, &base2)?;
        let rows: Vec<ParamRow> = (0..w2.nrows())
            .map(|i| ParamRow::new(w2.row(i).iter().copied().collect(), 0.0))
            .collect();
        let z2 = k2.gram(&rows)?;
        Ok(self.params.readout_gram().component_mul(&z2))
    }

    /// Gradient sums of `Ψ = log Z` over hidden units: `E[t(x)]` and, for Gaussian-type
    /// bases, `Cov[t(x)]`.
    pub fn moment_identities(&self) -> Result<MomentEstimate> {
        if self.activation != Activation::ExpHalf {
            return Err(SnefyError::invalid("moment identities need the exp-half activation"));
        }
        let rows = self.params.rows();
        let m = self.params.readout_gram();
        let wg = self.kernel.weighted_grad(&rows, &m)?;
        let z = wg.value;
        let mean = DVector::from_iterator(wg.dw.ncols(), wg.dw.column_iter().map(|c| c.sum() / z));
        let cov = self.gaussian_second_moment(&rows, &m)?.map(|second| second / z - &mean * mean.transpose());
        Ok(MomentEstimate { mean, cov })
    }

    /// `Σᵢⱼ Mᵢⱼ Kᵢⱼ (μᵢⱼμᵢⱼᵀ + C)` with `μᵢⱼ = m + ½C(wᵢ+wⱼ)`, per Gaussian component.
    fn gaussian_second_moment(&self, rows: &[ParamRow], m: &DMatrix<f64>) -> Result<Option<DMatrix<f64>>> {
        if self.statistic != SufficientStatistic::Identity {
            return Ok(None);
        }
        let comps: Vec<(f64, DVector<f64>, DMatrix<f64>)> = match &self.base {
            BaseMeasure::StdGaussian { dim } => vec![(1.0, DVector::zeros(*dim), DMatrix::identity(*dim, *dim))],
            BaseMeasure::Gaussian { gaussian } => vec![(1.0, gaussian.mean().clone(), gaussian.cov().clone())],
            BaseMeasure::GaussianMixture { components } => components
                .iter()
                .map(|c| (c.weight, c.gaussian.mean().clone(), c.gaussian.cov().clone()))
                .collect(),
            _ => return Ok(None),
        };
        let d = self.support_dim();
        let mut out = DMatrix::zeros(d, d);
        for (pi, mean, cov) in comps {
            let comp = BaseMeasure::gaussian(mean.clone(), cov.clone())?;
            let k = Kernel::dispatch(&self.activation, self.statistic, &comp)?;
            let gram = k.gram(rows)?;
            for i in 0..rows.len() {
                for j in 0..rows.len() {
                    let s = DVector::from_iterator(d, rows[i].w.iter().zip(&rows[j].w).map(|(a, b)| a + b));
                    let mu = &mean + &cov * s * 0.5;
                    out += (&mu * mu.transpose() + &cov) * (pi * m[(i, j)] * gram[(i, j)]);
                }
            }
        }
        Ok(Some(out))
    }

    /// `‖Σᵢ ∂Ψ/∂wᵢ − mean of t(x)‖` over the data; zero at a maximum-likelihood fit.
    pub fn mle_mean_check(&self, data: &[Vec<f64>]) -> Result<f64> {
        if data.is_empty() {
            return Err(SnefyError::invalid("empty data"));
        }
        let est = self.moment_identities()?.mean;
        let mut avg = DVector::zeros(est.len());
        for x in data {
            self.check_point(x)?;
            avg += DVector::from_vec(self.statistic.eval(x)?);
        }
        avg /= data.len() as f64;
        Ok((est - avg).norm())
    }
}

// ------------------------------------------------------------------ serialization

#[derive(Serialize, Deserialize)]
#[serde(rename = "SnefyModel")]
struct ModelRepr {
    activation: Activation,
    statistic: SufficientStatistic,
    base: BaseMeasure,
    #[serde(rename = "V")]
    v: Vec<Vec<f64>>,
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
    d: usize,
}

impl Serialize for SnefyModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ModelRepr {
            activation: self.activation,
            statistic: self.statistic,
            base: self.base.clone(),
            v: to_nested(&self.params.v),
            w: to_nested(&self.params.w),
            b: self.params.b.iter().copied().collect(),
            d: self.support_dim(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SnefyModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = ModelRepr::deserialize(d)?;
        let build = || -> Result<SnefyModel> {
            let params = SnefyParams::new(
                from_nested(&r.v, "V")?,
                from_nested(&r.w, "W")?,
                DVector::from_vec(r.b.clone()),
            )?;
            let model = SnefyModel::new(params, r.activation, r.statistic, r.base.clone())?;
            if model.support_dim() != r.d {
                return Err(SnefyError::DimensionMismatch {
                    expected: model.support_dim(),
                    got: r.d,
                });
            }
            Ok(model)
        };
        build().map_err(serde::de::Error::custom)
    }
}
