//! Exp-activation kernels whose value is an exponential-family normalizer evaluated at
//! `wᵢ + wⱼ`, scaled by `exp(bᵢ + bⱼ)`.

use super::{check_dims, KernelGrad};
use crate::error::{Result, SnefyError};
use crate::special::{digamma, log_bessel_ratio, log_gamma};
use crate::types::ParamRow;

const LN_PI: f64 = 1.144_729_885_849_400_2;
/// Largest log-value we exponentiate before reporting overflow.
const MAX_LOG: f64 = 709.0;

fn finish(kernel: &str, log_k: f64) -> Result<f64> {
    if log_k > MAX_LOG {
        return Err(SnefyError::Overflow(format!("{kernel} kernel: log value {log_k:.3e} exceeds {MAX_LOG}")));
    }
    Ok(log_k.exp())
}

fn sums(ri: &ParamRow, rj: &ParamRow) -> Vec<f64> {
    ri.w.iter().zip(&rj.w).map(|(a, b)| a + b).collect()
}

fn uniform_grad(ri: &ParamRow, k: f64, dw: Vec<f64>) -> KernelGrad {
    debug_assert_eq!(dw.len(), ri.w.len());
    KernelGrad {
        dwj: dw.clone(),
        dwi: dw,
        dbi: k,
        dbj: k,
    }
}

// ---------------------------------------------------------------- von Mises–Fisher

fn vmf_log_const(d: usize) -> Result<f64> {
    if d < 2 {
        return Err(SnefyError::domain("nnk_exp_vmf", format!("sphere dimension d = {d} must be at least 2")));
    }
    let p = d as f64 / 2.0 - 1.0;
    Ok(log_gamma(d as f64 / 2.0)? + p * std::f64::consts::LN_2)
}

/// Exp kernel under the uniform probability measure on the unit sphere in ℝ^d.
pub fn nnk_exp_vmf(ri: &ParamRow, rj: &ParamRow, d: usize) -> Result<f64> {
    check_dims(ri, rj)?;
    let c = vmf_log_const(d)?;
    let s = sums(ri, rj);
    let r = s.iter().map(|v| v * v).sum::<f64>().sqrt();
    let p = d as f64 / 2.0 - 1.0;
    finish("vmf", ri.b + rj.b + c + log_bessel_ratio(p, r)?)
}

pub(crate) fn vmf_grad(ri: &ParamRow, rj: &ParamRow, d: usize) -> Result<KernelGrad> {
    let k = nnk_exp_vmf(ri, rj, d)?;
    let c = vmf_log_const(d)?;
    let s = sums(ri, rj);
    let r = s.iter().map(|v| v * v).sum::<f64>().sqrt();
    let p = d as f64 / 2.0 - 1.0;
    // d/dr [I_p(r)/r^p] = r · I_{p+1}(r)/r^{p+1}
    let scale = (ri.b + rj.b + c + log_bessel_ratio(p + 1.0, r)?).exp();
    Ok(uniform_grad(ri, k, s.iter().map(|v| scale * v).collect()))
}

// ---------------------------------------------------------------- Poisson

fn scalar_rows(ri: &ParamRow, rj: &ParamRow, kernel: &'static str) -> Result<()> {
    check_dims(ri, rj)?;
    if ri.w.len() != 1 {
        return Err(SnefyError::domain(kernel, format!("expects scalar weights, got dimension {}", ri.w.len())));
    }
    Ok(())
}

/// Exp kernel under the base `(x!)⁻¹` on the non-negative integers.
pub fn nnk_exp_poisson(ri: &ParamRow, rj: &ParamRow) -> Result<f64> {
    scalar_rows(ri, rj, "nnk_exp_poisson")?;
    let inner = (ri.w[0] + rj.w[0]).exp();
    finish("poisson", ri.b + rj.b + inner)
}

pub(crate) fn poisson_grad(ri: &ParamRow, rj: &ParamRow) -> Result<KernelGrad> {
    let k = nnk_exp_poisson(ri, rj)?;
    let es = (ri.w[0] + rj.w[0]).exp();
    Ok(uniform_grad(ri, k, vec![k * es]))
}

// ---------------------------------------------------------------- RBF

/// Splits `wᵢ + wⱼ` into linear and quadratic coefficient sums, checking integrability.
fn rbf_parts(ri: &ParamRow, rj: &ParamRow) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dims(ri, rj)?;
    if ri.w.len() % 2 != 0 || ri.w.is_empty() {
        return Err(SnefyError::domain("nnk_exp_rbf", "weight length must be 2d for the square-augmented statistic"));
    }
    let d = ri.w.len() / 2;
    let s = sums(ri, rj);
    let (lin, quad) = s.split_at(d);
    if let Some(l) = quad.iter().position(|t| !(*t < 0.0)) {
        return Err(SnefyError::Integrability(format!(
            "quadratic coefficient sum in coordinate {l} is {} (must be negative)",
            quad[l]
        )));
    }
    Ok((lin.to_vec(), quad.to_vec()))
}

/// Exp kernel under Lebesgue measure with statistic `(x, x²)`.
pub fn nnk_exp_rbf(ri: &ParamRow, rj: &ParamRow) -> Result<f64> {
    let (s, t) = rbf_parts(ri, rj)?;
    let d = s.len() as f64;
    let log_k = ri.b + rj.b + 0.5 * d * LN_PI
        - s.iter()
            .zip(&t)
            .map(|(s, t)| s * s / (4.0 * t) + 0.5 * (-t).ln())
            .sum::<f64>();
    finish("rbf", log_k)
}

pub(crate) fn rbf_grad(ri: &ParamRow, rj: &ParamRow) -> Result<KernelGrad> {
    let k = nnk_exp_rbf(ri, rj)?;
    let (s, t) = rbf_parts(ri, rj)?;
    let mut dw: Vec<f64> = s.iter().zip(&t).map(|(s, t)| -k * s / (2.0 * t)).collect();
    dw.extend(
        s.iter()
            .zip(&t)
            .map(|(s, t)| k * (s * s / (4.0 * t * t) - 1.0 / (2.0 * t))),
    );
    Ok(uniform_grad(ri, k, dw))
}

/// The same kernel for two Gaussian bumps `exp(−‖x−μ‖²/(4σ²))` (the exp-half activation at
/// [`rbf_row_from_location_scale`] rows):
/// `(4πσᵢ²σⱼ²/(σᵢ²+σⱼ²))^{d/2} · exp(−‖μᵢ−μⱼ‖²/(4(σᵢ²+σⱼ²)))`.
pub fn nnk_exp_rbf_location_scale(mu_i: &[f64], var_i: f64, mu_j: &[f64], var_j: f64) -> Result<f64> {
    if mu_i.len() != mu_j.len() {
        return Err(SnefyError::DimensionMismatch {
            expected: mu_i.len(),
            got: mu_j.len(),
        });
    }
    if !(var_i > 0.0 && var_j > 0.0) {
        return Err(SnefyError::Integrability("variances must be positive".into()));
    }
    let d = mu_i.len() as f64;
    let v = var_i + var_j;
    let dist: f64 = mu_i.iter().zip(mu_j).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((4.0 * std::f64::consts::PI * var_i * var_j / v).powf(d / 2.0) * (-dist / (4.0 * v)).exp())
}

/// Natural parameters `(μ/σ², −1/(2σ²))` and bias `−‖μ‖²/(2σ²)` for which `exp(u/2)` is the
/// bump `exp(−‖x−μ‖²/(4σ²))`.
pub fn rbf_row_from_location_scale(mu: &[f64], var: f64) -> ParamRow {
    let mut w: Vec<f64> = mu.iter().map(|m| m / var).collect();
    w.extend(std::iter::repeat(-0.5 / var).take(mu.len()));
    ParamRow::new(w, -mu.iter().map(|m| m * m).sum::<f64>() / (2.0 * var))
}

// ---------------------------------------------------------------- Gamma

fn gamma_parts(ri: &ParamRow, rj: &ParamRow) -> Result<(f64, f64)> {
    check_dims(ri, rj)?;
    if ri.w.len() != 2 {
        return Err(SnefyError::domain("nnk_exp_gamma", format!("expects 2 weights, got {}", ri.w.len())));
    }
    let a = ri.w[0] + rj.w[0];
    let b = ri.w[1] + rj.w[1];
    if !(a > -1.0) {
        return Err(SnefyError::Integrability(format!("log-coefficient sum {a} must exceed -1")));
    }
    if !(b > 0.0) {
        return Err(SnefyError::Integrability(format!("rate sum {b} must be positive")));
    }
    Ok((a, b))
}

/// Exp kernel under Lebesgue measure on `(0, ∞)` with statistic `(log x, −x)`.
pub fn nnk_exp_gamma(ri: &ParamRow, rj: &ParamRow) -> Result<f64> {
    let (a, b) = gamma_parts(ri, rj)?;
    finish("gamma", ri.b + rj.b + log_gamma(a + 1.0)? - (a + 1.0) * b.ln())
}

pub(crate) fn gamma_grad(ri: &ParamRow, rj: &ParamRow) -> Result<KernelGrad> {
    let k = nnk_exp_gamma(ri, rj)?;
    let (a, b) = gamma_parts(ri, rj)?;
    Ok(uniform_grad(ri, k, vec![k * (digamma(a + 1.0)? - b.ln()), -k * (a + 1.0) / b]))
}

// ---------------------------------------------------------------- Dirichlet

fn dirichlet_parts(ri: &ParamRow, rj: &ParamRow) -> Result<Vec<f64>> {
    check_dims(ri, rj)?;
    if ri.w.len() < 2 {
        return Err(SnefyError::domain("nnk_exp_dirichlet", "simplex needs at least two coordinates"));
    }
    let s = sums(ri, rj);
    if let Some(l) = s.iter().position(|a| !(*a > -1.0)) {
        return Err(SnefyError::Integrability(format!(
            "coordinate {l} coefficient sum {} must exceed -1",
            s[l]
        )));
    }
    Ok(s)
}

/// Exp kernel under Lebesgue measure on the probability simplex with statistic `log x`.
pub fn nnk_exp_dirichlet(ri: &ParamRow, rj: &ParamRow) -> Result<f64> {
    let s = dirichlet_parts(ri, rj)?;
    let dd = s.len() as f64;
    let mut log_k = ri.b + rj.b - log_gamma(dd + s.iter().sum::<f64>())?;
    for a in &s {
        log_k += log_gamma(a + 1.0)?;
    }
    finish("dirichlet", log_k)
}

pub(crate) fn dirichlet_grad(ri: &ParamRow, rj: &ParamRow) -> Result<KernelGrad> {
    let k = nnk_exp_dirichlet(ri, rj)?;
    let s = dirichlet_parts(ri, rj)?;
    let psi_total = digamma(s.len() as f64 + s.iter().sum::<f64>())?;
    let dw = s
        .iter()
        .map(|a| Ok(k * (digamma(a + 1.0)? - psi_total)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(uniform_grad(ri, k, dw))
}
