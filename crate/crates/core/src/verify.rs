//! Oracle suites behind `snefy verify`: closed-form kernels against Monte-Carlo, series and
//! quadrature; analytic NLL gradients against finite differences; normalization against
//! quadrature. Every suite is deterministic given the seed.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Result, SnefyError};
use crate::kernels::Kernel;
use crate::model::{ReportingConvention, SnefyModel};
use crate::oracle::{fd_gradient, gaussian_box, mc_kernel, poisson_series, quadrature, McEstimate, Region};
use crate::rng::{stream, SnefyRng};
use crate::training::{grad_nll, nll, MixtureParams};
use crate::types::{Activation, BaseMeasure, Gaussian, MixtureComponent, ParamRow, SnefyParams, SufficientStatistic};

pub const DEFAULT_MC_SAMPLES: usize = 1_000_000;
/// Absolute tolerance against deterministic oracles (series, quadrature).
pub const DETERMINISTIC_TOL: f64 = 1e-6;
pub const DRAWS_PER_KERNEL: usize = 5;
pub const GRADIENT_REL_TOL: f64 = 1e-5;
/// Denominator floor in the relative gradient error; FD round-off at `h = 1e-5` is ~1e-11.
pub const GRADIENT_REL_FLOOR: f64 = 1e-4;
pub const ORTHOGONALITY_TOL: f64 = 1e-10;
pub const MODELS_PER_ACTIVATION: usize = 10;
pub const NORMALIZATION_MODELS: usize = 20;
pub const NORMALIZATION_TOL: f64 = 1e-3;
pub const QUADRATURE_NODES: usize = 2001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Kernels,
    Gradients,
    Normalization,
    All,
}

impl FromStr for Scope {
    type Err = SnefyError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kernels" => Ok(Scope::Kernels),
            "gradients" => Ok(Scope::Gradients),
            "normalization" => Ok(Scope::Normalization),
            "all" => Ok(Scope::All),
            other => Err(SnefyError::invalid(format!(
                "unknown scope {other:?}; expected kernels, gradients, normalization or all"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub mc_samples: usize,
    /// Test hook: scales the closed-form value of every kernel case whose id starts with this
    /// prefix by `1 + 1e-2`.
    pub perturb: Option<String>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            mc_samples: DEFAULT_MC_SAMPLES,
            perturb: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseReport {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    pub oracle_kind: &'static str,
    pub value: f64,
    pub oracle: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    pub error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    pub cases: Vec<CaseReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub scope: Scope,
    pub seed: u64,
    pub mc_samples: usize,
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

impl VerifyReport {
    pub fn failures(&self) -> impl Iterator<Item = &CaseReport> {
        self.suites.iter().flat_map(|s| s.cases.iter()).filter(|c| !c.passed)
    }

    /// Fixed-width table: id, reference, closed form, oracle, SE, pass/fail.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<34} {:<44} {:>16} {:>16} {:>10} {}\n",
            "case", "reference", "value", "oracle", "se/tol", "result"
        );
        for s in &self.suites {
            for c in &s.cases {
                out.push_str(&format!(
                    "{:<34} {:<44} {:>16.9e} {:>16.9e} {:>10.2e} {}\n",
                    c.id,
                    c.reference.as_deref().unwrap_or("-"),
                    c.value,
                    c.oracle,
                    c.std_error.unwrap_or(c.tolerance),
                    if c.passed { "pass" } else { "FAIL" }
                ));
            }
        }
        out
    }
}

pub fn run(scope: Scope, opts: &VerifyOptions) -> Result<VerifyReport> {
    if opts.mc_samples < 2 {
        return Err(SnefyError::invalid("mc_samples must be at least 2"));
    }
    let mut suites = Vec::new();
    if matches!(scope, Scope::Kernels | Scope::All) {
        suites.push(kernel_suite(opts)?);
    }
    if matches!(scope, Scope::Gradients | Scope::All) {
        suites.push(gradient_suite(opts.seed)?);
    }
    if matches!(scope, Scope::Normalization | Scope::All) {
        suites.push(normalization_suite(opts.seed)?);
    }
    Ok(VerifyReport {
        scope,
        seed: opts.seed,
        mc_samples: opts.mc_samples,
        passed: suites.iter().all(|s| s.passed),
        suites,
    })
}

fn suite(name: &'static str, cases: Vec<CaseReport>) -> SuiteReport {
    SuiteReport {
        name,
        passed: cases.iter().all(|c| c.passed),
        cases,
    }
}

fn normal(rng: &mut SnefyRng) -> f64 {
    StandardNormal.sample(rng)
}

fn uniform(rng: &mut SnefyRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

// ------------------------------------------------------------------ kernels

#[derive(Clone, Copy)]
enum Oracle {
    MonteCarlo,
    Series,
    Quadrature,
}

/// One closed-form kernel under test, with the parameter distribution it is checked on.
pub struct KernelCase {
    pub id: String,
    pub activation: Activation,
    pub statistic: SufficientStatistic,
    pub base: BaseMeasure,
    oracle: Oracle,
    draw: fn(&mut SnefyRng, usize) -> ParamRow,
}

impl KernelCase {
    pub fn kernel(&self) -> Result<Kernel> {
        Kernel::dispatch(&self.activation, self.statistic, &self.base)
    }

    /// A random parameter row inside the case's integrable region.
    pub fn draw_row(&self, rng: &mut SnefyRng) -> Result<ParamRow> {
        Ok((self.draw)(rng, self.statistic.output_dim(self.base.dim())?))
    }
}

fn gauss_row(rng: &mut SnefyRng, d: usize) -> ParamRow {
    ParamRow::new((0..d).map(|_| 0.8 * normal(rng)).collect(), uniform(rng, -1.5, 1.5))
}

fn exp_row(rng: &mut SnefyRng, d: usize) -> ParamRow {
    ParamRow::new((0..d).map(|_| 0.4 * normal(rng)).collect(), uniform(rng, -0.5, 0.5))
}

fn poisson_row(rng: &mut SnefyRng, _d: usize) -> ParamRow {
    ParamRow::new(vec![uniform(rng, -1.0, 0.5)], uniform(rng, -0.5, 0.5))
}

/// `(x, x²)` weights with a negative quadratic part; `dd` is the augmented dimension.
fn rbf_row(rng: &mut SnefyRng, dd: usize) -> ParamRow {
    let d = dd / 2;
    let mut w: Vec<f64> = (0..d).map(|_| 0.5 * normal(rng)).collect();
    w.extend((0..d).map(|_| uniform(rng, -0.8, -0.2)));
    ParamRow::new(w, uniform(rng, -0.5, 0.5))
}

/// `(log x, −x)` weights: shape above −½, positive rate.
fn gamma_row(rng: &mut SnefyRng, _d: usize) -> ParamRow {
    ParamRow::new(vec![uniform(rng, -0.25, 1.5), uniform(rng, 0.3, 1.5)], uniform(rng, -0.5, 0.5))
}

fn dirichlet_row(rng: &mut SnefyRng, d: usize) -> ParamRow {
    ParamRow::new((0..d).map(|_| uniform(rng, -0.2, 1.0)).collect(), uniform(rng, -0.5, 0.5))
}

fn random_gaussian(rng: &mut SnefyRng, d: usize) -> Gaussian {
    let a = DMatrix::from_fn(d, d, |_, _| 0.5 * normal(rng));
    let cov = &a * a.transpose() + DMatrix::identity(d, d) * 0.3;
    Gaussian::new(DVector::from_fn(d, |_, _| 0.5 * normal(rng)), cov).expect("positive definite by construction")
}

/// Every kernel the suite checks; random base parameters are drawn from `seed`.
pub fn kernel_cases(seed: u64) -> Vec<KernelCase> {
    let rng = &mut stream(seed, 1000);
    use Activation as A;
    use SufficientStatistic as S;
    let std = |d| BaseMeasure::StdGaussian { dim: d };
    let mc = |id: &str, activation, base, draw| KernelCase {
        id: id.to_string(),
        activation,
        statistic: S::Identity,
        base,
        oracle: Oracle::MonteCarlo,
        draw,
    };
    let mut cases = vec![
        mc("cos", A::Cos, std(2), gauss_row as fn(&mut SnefyRng, usize) -> ParamRow),
        mc("sin", A::Sin, std(2), gauss_row),
        mc("linear", A::Linear, std(2), gauss_row),
        mc("snake_no_offset_a1", A::SnakeNoOffset { a: 1.0 }, std(2), gauss_row),
        mc("snake_a1", A::Snake { a: 1.0 }, std(2), gauss_row),
        mc("snake_a10", A::Snake { a: 10.0 }, std(2), gauss_row),
        mc("exp_gauss", A::Exp, std(2), exp_row),
        mc("exp_half", A::ExpHalf, std(2), exp_row),
        KernelCase {
            statistic: S::NormalQuantile,
            ..mc("cos_normal_quantile_cube", A::Cos, BaseMeasure::UniformCube { dim: 2 }, gauss_row)
        },
    ];
    for d in [2, 3, 5] {
        cases.push(mc(&format!("vmf_d{d}"), A::Exp, BaseMeasure::UniformSphere { dim: d }, exp_row));
    }
    cases.push(KernelCase {
        oracle: Oracle::Series,
        ..mc("poisson", A::Exp, BaseMeasure::Poisson, poisson_row)
    });
    for d in [1, 2] {
        cases.push(KernelCase {
            statistic: S::SquareAugmented,
            oracle: Oracle::Quadrature,
            ..mc(&format!("rbf_d{d}"), A::Exp, BaseMeasure::Lebesgue { dim: d }, rbf_row)
        });
    }
    cases.push(KernelCase {
        statistic: S::GammaStat,
        oracle: Oracle::Quadrature,
        ..mc("gamma", A::Exp, BaseMeasure::Lebesgue { dim: 1 }, gamma_row)
    });
    cases.push(KernelCase {
        statistic: S::DirichletStat,
        oracle: Oracle::Quadrature,
        ..mc("dirichlet_d2", A::Exp, BaseMeasure::Lebesgue { dim: 2 }, dirichlet_row)
    });
    cases.push(KernelCase {
        statistic: S::DirichletStat,
        ..mc("dirichlet_d3", A::Exp, BaseMeasure::Lebesgue { dim: 3 }, dirichlet_row)
    });
    let g = BaseMeasure::Gaussian {
        gaussian: random_gaussian(rng, 2),
    };
    cases.push(mc("gaussian_reparam_cos", A::Cos, g.clone(), gauss_row));
    cases.push(mc("gaussian_reparam_exp_half", A::ExpHalf, g, exp_row));
    let mix = BaseMeasure::mixture(vec![
        MixtureComponent {
            weight: 0.3,
            gaussian: random_gaussian(rng, 2),
        },
        MixtureComponent {
            weight: 0.7,
            gaussian: random_gaussian(rng, 2),
        },
    ])
    .expect("valid mixture");
    cases.push(mc("mixture_base_cos", A::Cos, mix.clone(), gauss_row));
    cases.push(mc("mixture_base_snake_a1", A::Snake { a: 1.0 }, mix.clone(), gauss_row));
    cases.push(mc("mixture_base_exp_half", A::ExpHalf, mix, exp_row));
    cases
}

/// Integration interval for a unimodal `exp(logf)`: walks out from `center` until the log
/// integrand is 40 below its value there.
fn bracket(logf: &dyn Fn(f64) -> f64, center: f64) -> (f64, f64) {
    let peak = logf(center);
    let walk = |dir: f64| {
        let mut step = 0.5;
        let mut x = center;
        while logf(x) > peak - 40.0 && step < 1e6 {
            x += dir * step;
            step *= 1.5;
        }
        x
    };
    (walk(-1.0), walk(1.0))
}

/// Deterministic quadrature for the Lebesgue-base exponential kernels.
fn quadrature_kernel(case: &KernelCase, ri: &ParamRow, rj: &ParamRow) -> Result<f64> {
    let s: Vec<f64> = ri.w.iter().zip(&rj.w).map(|(a, b)| a + b).collect();
    let b = ri.b + rj.b;
    match case.statistic {
        SufficientStatistic::SquareAugmented => {
            let d = s.len() / 2;
            let (lin, quad) = s.split_at(d);
            let mean: Vec<f64> = (0..d).map(|k| -lin[k] / (2.0 * quad[k])).collect();
            let sd: Vec<f64> = (0..d).map(|k| (-0.5 / quad[k]).sqrt()).collect();
            let f = |x: &[f64]| (b + (0..d).map(|k| lin[k] * x[k] + quad[k] * x[k] * x[k]).sum::<f64>()).exp();
            quadrature(f, &gaussian_box(&mean, &sd), QUADRATURE_NODES)
        }
        SufficientStatistic::GammaStat => {
            // x = eʸ: ∫ x^A e^{−Bx} dx = ∫ exp((A+1)y − B eʸ) dy
            let (a, r) = (s[0], s[1]);
            let logf = move |y: f64| b + (a + 1.0) * y - r * y.exp();
            let (lo, hi) = bracket(&logf, ((a + 1.0) / r).ln());
            quadrature(|y: &[f64]| logf(y[0]).exp(), &Region::Box(vec![(lo, hi)]), 20_001)
        }
        SufficientStatistic::DirichletStat if s.len() == 2 => {
            // x₁ = logistic(y): ∫ x₁^{a₁} x₂^{a₂} dx₁ = ∫ x₁^{a₁+1} x₂^{a₂+1} dy
            let (a1, a2) = (s[0], s[1]);
            // log σ(t), stable for either sign
            let ls = |t: f64| if t >= 0.0 { -(-t).exp().ln_1p() } else { t - t.exp().ln_1p() };
            let logf = move |y: f64| b + (a1 + 1.0) * ls(y) + (a2 + 1.0) * ls(-y);
            let (lo, hi) = bracket(&logf, ((a1 + 1.0) / (a2 + 1.0)).ln());
            quadrature(|y: &[f64]| logf(y[0]).exp(), &Region::Box(vec![(lo, hi)]), 20_001)
        }
        _ => Err(SnefyError::invalid(format!("no quadrature oracle for case {}", case.id))),
    }
}

fn kernel_suite(opts: &VerifyOptions) -> Result<SuiteReport> {
    let cases = kernel_cases(opts.seed);
    let mut reports = Vec::new();
    for (ci, case) in cases.iter().enumerate() {
        let kernel = case.kernel()?;
        let mut rng = stream(opts.seed, ci as u64);
        for draw in 0..DRAWS_PER_KERNEL {
            let ri = case.draw_row(&mut rng)?;
            let rj = case.draw_row(&mut rng)?;
            let mut value = kernel.eval(&ri, &rj)?;
            if opts.perturb.as_deref().is_some_and(|p| case.id.starts_with(p)) {
                value *= 1.0 + 1e-2;
            }
            let mc_seed = opts.seed.wrapping_mul(1_000_003).wrapping_add((ci * DRAWS_PER_KERNEL + draw) as u64);
            let (oracle_kind, est) = match case.oracle {
                Oracle::MonteCarlo => (
                    "monte_carlo",
                    mc_kernel(&case.activation, case.statistic, &case.base, &ri, &rj, opts.mc_samples, mc_seed)?,
                ),
                Oracle::Series => ("series", poisson_series(&case.activation, &ri, &rj, 60)?),
                Oracle::Quadrature => (
                    "quadrature",
                    McEstimate {
                        estimate: quadrature_kernel(case, &ri, &rj)?,
                        std_error: 0.0,
                    },
                ),
            };
            let error = (value - est.estimate).abs();
            let (tolerance, passed, se) = match case.oracle {
                Oracle::MonteCarlo => (3.0 * est.std_error, est.agrees_with(value), Some(est.std_error)),
                // the series tail bound adds to the deterministic allowance
                Oracle::Series => (
                    DETERMINISTIC_TOL,
                    error <= DETERMINISTIC_TOL && est.std_error <= DETERMINISTIC_TOL,
                    Some(est.std_error),
                ),
                Oracle::Quadrature => (DETERMINISTIC_TOL, error <= DETERMINISTIC_TOL, None),
            };
            reports.push(CaseReport {
                id: format!("{}#{draw}", case.id),
                reference: Some(kernel.reference()),
                oracle_kind,
                value,
                oracle: est.estimate,
                std_error: se,
                error,
                tolerance,
                passed,
            });
        }
    }
    Ok(suite("kernels", reports))
}

// ------------------------------------------------------------------ gradients

/// Activations exercised by the gradient and normalization suites.
pub fn gradient_activations() -> Vec<(&'static str, Activation)> {
    vec![
        ("cos", Activation::Cos),
        ("sin", Activation::Sin),
        ("linear", Activation::Linear),
        ("snake_no_offset_a1", Activation::SnakeNoOffset { a: 1.0 }),
        ("snake_a1", Activation::Snake { a: 1.0 }),
        ("exp_half", Activation::ExpHalf),
        ("exp", Activation::Exp),
    ]
}

/// Random model with `V ~ N(0, 1/n)`, `W ~ N(0, 0.7²)`, `b ~ N(0, 0.5²)`.
pub fn random_model(activation: Activation, base: BaseMeasure, m: usize, n: usize, rng: &mut SnefyRng) -> Result<SnefyModel> {
    let d = base.dim();
    let sd = 1.0 / (n as f64).sqrt();
    let v = DMatrix::from_fn(m, n, |_, _| sd * normal(rng));
    let w = DMatrix::from_fn(n, d, |_, _| 0.7 * normal(rng));
    let b = DVector::from_fn(n, |_, _| 0.5 * normal(rng));
    SnefyModel::new(SnefyParams::new(v, w, b)?, activation, SufficientStatistic::Identity, base)
}

fn flat_params(model: &SnefyModel) -> Vec<f64> {
    let p = model.params();
    let mut flat: Vec<f64> = p.v.iter().chain(p.w.iter()).chain(p.b.iter()).copied().collect();
    if let Some(mp) = MixtureParams::from_base(model.base()) {
        flat.extend(mp.logits.iter().chain(mp.means.iter()).chain(mp.logvars.iter()));
    }
    flat
}

fn model_from_flat(model: &SnefyModel, flat: &[f64]) -> Result<SnefyModel> {
    let p = model.params();
    let (m, n, dd) = (p.m(), p.n(), p.input_dim());
    let v = DMatrix::from_column_slice(m, n, &flat[..m * n]);
    let w = DMatrix::from_column_slice(n, dd, &flat[m * n..m * n + n * dd]);
    let core = m * n + n * dd + n;
    let b = DVector::from_column_slice(&flat[m * n + n * dd..core]);
    let mut next = model.with_params(SnefyParams::new(v, w, b)?)?;
    if let Some(mp) = MixtureParams::from_base(model.base()) {
        let (k, d) = (mp.logits.len(), mp.means.ncols());
        let rest = &flat[core..];
        let mp = MixtureParams {
            logits: DVector::from_column_slice(&rest[..k]),
            means: DMatrix::from_column_slice(k, d, &rest[k..k + k * d]),
            logvars: DMatrix::from_column_slice(k, d, &rest[k + k * d..]),
        };
        next = next.with_base(mp.to_base()?)?;
    }
    Ok(next)
}

/// Largest `|analytic − fd| / max(|analytic|, |fd|, floor)` over all coordinates.
pub fn gradient_check(model: &SnefyModel, data: &[Vec<f64>], convention: ReportingConvention) -> Result<(f64, f64, f64, f64)> {
    let g = grad_nll(model, data, convention)?;
    let flat = flat_params(model);
    let mut analytic: Vec<f64> = g.dv.iter().chain(g.dw.iter()).chain(g.db.iter()).copied().collect();
    if let Some(b) = &g.base {
        analytic.extend(b.dlogits.iter().chain(b.dmeans.iter()).chain(b.dlogvars.iter()));
    }
    analytic.truncate(flat.len());
    let objective = |q: &[f64]| {
        model_from_flat(model, q)
            .and_then(|m| nll(&m, data, convention))
            .unwrap_or(f64::NAN)
    };
    let fd = fd_gradient(objective, &flat, 1e-5);
    let rel = analytic
        .iter()
        .zip(&fd)
        .map(|(a, f)| {
            let e = (a - f).abs() / a.abs().max(f.abs()).max(GRADIENT_REL_FLOOR);
            if e.is_nan() {
                f64::INFINITY
            } else {
                e
            }
        })
        .fold(0.0, f64::max);
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let ortho = g.dv.dot(&model.params().v).abs();
    Ok((rel, norm(&analytic), norm(&fd), ortho))
}

fn gradient_suite(seed: u64) -> Result<SuiteReport> {
    let mut cases = Vec::new();
    // (id, activation, trainable mixture base)
    let mut configs: Vec<(String, Activation, bool)> = gradient_activations()
        .into_iter()
        .map(|(id, a)| (id.to_string(), a, false))
        .collect();
    configs.push(("mixture_base_cos".into(), Activation::Cos, true));
    for (ai, (id, act, mixture)) in configs.into_iter().enumerate() {
        let conv = if mixture { ReportingConvention::Lebesgue } else { ReportingConvention::Base };
        let mut rng = stream(seed, 2000 + ai as u64);
        for r in 0..MODELS_PER_ACTIVATION {
            let base = if mixture {
                random_diag_mixture(&mut rng)?
            } else {
                BaseMeasure::StdGaussian { dim: 2 }
            };
            // m ≥ 2: with a single readout row ‖f(x)‖ can nearly cancel at a data point, where
            // central differences at h = 1e-5 lose accuracy before the analytic gradient does
            let m = 2 + r % 2;
            let model = random_model(act, base, m, 3, &mut rng)?;
            let data: Vec<Vec<f64>> = (0..20).map(|_| vec![normal(&mut rng), normal(&mut rng)]).collect();
            let (rel, an, fdn, ortho) = gradient_check(&model, &data, conv)?;
            cases.push(CaseReport {
                id: format!("grad_{id}#{r}"),
                reference: None,
                oracle_kind: "finite_difference",
                value: an,
                oracle: fdn,
                std_error: None,
                error: rel,
                tolerance: GRADIENT_REL_TOL,
                passed: rel <= GRADIENT_REL_TOL,
            });
            cases.push(CaseReport {
                id: format!("readout_orthogonality_{id}#{r}"),
                reference: None,
                oracle_kind: "identity",
                value: ortho,
                oracle: 0.0,
                std_error: None,
                error: ortho,
                tolerance: ORTHOGONALITY_TOL,
                passed: ortho <= ORTHOGONALITY_TOL,
            });
        }
    }
    Ok(suite("gradients", cases))
}

fn random_diag_mixture(rng: &mut SnefyRng) -> Result<BaseMeasure> {
    let w = uniform(rng, 0.2, 0.8);
    let comp = |rng: &mut SnefyRng, weight: f64| -> Result<MixtureComponent> {
        Ok(MixtureComponent {
            weight,
            gaussian: Gaussian::diagonal(
                &[0.5 * normal(rng), 0.5 * normal(rng)],
                &[uniform(rng, 0.5, 1.5), uniform(rng, 0.5, 1.5)],
            )?,
        })
    };
    let a = comp(rng, w)?;
    let b = comp(rng, 1.0 - w)?;
    BaseMeasure::mixture(vec![a, b])
}

// ------------------------------------------------------------------ normalization

/// `∫ p dμ` by Simpson quadrature over the base's ±8σ box.
pub fn quadrature_mass(model: &SnefyModel, nodes: usize) -> Result<f64> {
    let (mean, sd): (Vec<f64>, Vec<f64>) = match model.base() {
        BaseMeasure::StdGaussian { dim } => (vec![0.0; *dim], vec![1.0; *dim]),
        BaseMeasure::Gaussian { gaussian: g } => (
            g.mean().iter().copied().collect(),
            (0..g.dim()).map(|k| g.cov()[(k, k)].sqrt()).collect(),
        ),
        other => return Err(SnefyError::invalid(format!("quadrature_mass expects a Gaussian base, got {}", other.name()))),
    };
    let z = model.normalizing_constant()?;
    quadrature(
        |x: &[f64]| {
            model
                .log_density_with(x, ReportingConvention::Lebesgue)
                .map_or(f64::NAN, f64::exp)
        },
        &gaussian_box(&mean, &sd),
        nodes,
    )
    .map(|v| if z > 0.0 { v } else { f64::NAN })
}

/// Families and dimensions cycled through by the normalization suite.
pub fn normalization_families() -> Vec<(&'static str, Activation, usize)> {
    vec![
        ("cos_1d", Activation::Cos, 1),
        ("snake_a1_1d", Activation::Snake { a: 1.0 }, 1),
        ("exp_half_1d", Activation::ExpHalf, 1),
        ("cos_2d", Activation::Cos, 2),
        ("snake_a1_2d", Activation::Snake { a: 1.0 }, 2),
        ("exp_half_2d", Activation::ExpHalf, 2),
    ]
}

fn normalization_suite(seed: u64) -> Result<SuiteReport> {
    let fams = normalization_families();
    let mut cases = Vec::new();
    for i in 0..NORMALIZATION_MODELS {
        let (id, act, d) = fams[i % fams.len()];
        let mut rng = stream(seed, 3000 + i as u64);
        let n = 2 + i % 4;
        let model = random_model(act, BaseMeasure::StdGaussian { dim: d }, 1 + i % 2, n, &mut rng)?;
        let mass = quadrature_mass(&model, QUADRATURE_NODES)?;
        let error = (mass - 1.0).abs();
        cases.push(CaseReport {
            id: format!("normalization_{id}#{i}"),
            reference: Some(model.kernel().reference()),
            oracle_kind: "quadrature",
            value: 1.0,
            oracle: mass,
            std_error: None,
            error,
            tolerance: NORMALIZATION_TOL,
            passed: error <= NORMALIZATION_TOL,
        });
    }
    Ok(suite("normalization", cases))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(seed: u64) -> VerifyOptions {
        VerifyOptions {
            seed,
            mc_samples: 20_000,
            perturb: None,
        }
    }

    #[test]
    fn scope_parsing() {
        assert_eq!("all".parse::<Scope>().unwrap(), Scope::All);
        assert!("everything".parse::<Scope>().is_err());
    }

    #[test]
    fn deterministic_oracles_agree_to_tolerance() {
        let r = run(Scope::Kernels, &quick(3)).unwrap();
        for c in r.suites[0].cases.iter().filter(|c| c.oracle_kind != "monte_carlo") {
            assert!(c.passed, "{c:?}");
        }
    }

    #[test]
    fn perturbation_is_caught_by_name() {
        let mut o = quick(3);
        o.perturb = Some("gamma".into());
        let r = run(Scope::Kernels, &o).unwrap();
        assert!(!r.passed);
        assert!(r.failures().all(|c| c.id.starts_with("gamma") || c.oracle_kind == "monte_carlo"));
        assert!(r.failures().any(|c| c.id.starts_with("gamma")));
    }

    #[test]
    fn gradient_suite_passes() {
        let r = run(Scope::Gradients, &quick(0)).unwrap();
        for c in r.failures() {
            panic!("{c:?}");
        }
    }

    #[test]
    fn reports_are_reproducible() {
        let a = serde_json::to_string(&run(Scope::Kernels, &quick(9)).unwrap()).unwrap();
        let b = serde_json::to_string(&run(Scope::Kernels, &quick(9)).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
