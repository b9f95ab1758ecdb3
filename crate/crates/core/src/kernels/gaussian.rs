//! Kernels under a standard Gaussian base with identity statistic.

use super::{check_dims, KernelGrad};
use crate::error::{Result, SnefyError};
use crate::linalg::{dot, norm_sq};
use crate::types::ParamRow;

fn diff_sum(wi: &[f64], wj: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let delta = wi.iter().zip(wj).map(|(a, b)| a - b).collect();
    let sum = wi.iter().zip(wj).map(|(a, b)| a + b).collect();
    (delta, sum)
}

/// `½cos(bᵢ−bⱼ)e^{−‖wᵢ−wⱼ‖²/2} + sign·½cos(bᵢ+bⱼ)e^{−‖wᵢ+wⱼ‖²/2}`; `sign = +1` gives the cos
/// kernel, `−1` the sin kernel.
fn trig(ri: &ParamRow, rj: &ParamRow, sign: f64) -> f64 {
    let (delta, sum) = diff_sum(&ri.w, &rj.w);
    let em = (-0.5 * norm_sq(&delta)).exp();
    let ep = (-0.5 * norm_sq(&sum)).exp();
    0.5 * (ri.b - rj.b).cos() * em + sign * 0.5 * (ri.b + rj.b).cos() * ep
}

fn trig_grad(ri: &ParamRow, rj: &ParamRow, sign: f64) -> KernelGrad {
    let (delta, sum) = diff_sum(&ri.w, &rj.w);
    let em = (-0.5 * norm_sq(&delta)).exp();
    let ep = (-0.5 * norm_sq(&sum)).exp();
    let cm = 0.5 * (ri.b - rj.b).cos() * em;
    let cp = sign * 0.5 * (ri.b + rj.b).cos() * ep;
    let sm = 0.5 * (ri.b - rj.b).sin() * em;
    let sp = sign * 0.5 * (ri.b + rj.b).sin() * ep;
    KernelGrad {
        dwi: delta.iter().zip(&sum).map(|(d, s)| -cm * d - cp * s).collect(),
        dwj: delta.iter().zip(&sum).map(|(d, s)| cm * d - cp * s).collect(),
        dbi: -sm - sp,
        dbj: sm - sp,
    }
}

/// Cos kernel with biases.
pub fn nnk_cos(ri: &ParamRow, rj: &ParamRow) -> Result<f64> {
    check_dims(ri, rj)?;
    Ok(trig(ri, rj, 1.0))
}

/// Sin kernel: `sin A sin B = ½[cos(A−B) − cos(A+B)]` flips the sign of the sum term.
pub fn nnk_sin(ri: &ParamRow, rj: &ParamRow) -> Result<f64> {
    check_dims(ri, rj)?;
    Ok(trig(ri, rj, -1.0))
}

pub fn nnk_linear(ri: &ParamRow, rj: &ParamRow) -> Result<f64> {
    check_dims(ri, rj)?;
    Ok(dot(&ri.w, &rj.w) + ri.b * rj.b)
}

fn check_a(a: f64) -> Result<()> {
    if a > 0.0 && a.is_finite() {
        Ok(())
    } else {
        Err(SnefyError::domain("nnk_snake", format!("a = {a} must be positive")))
    }
}

/// `E[uᵢ uⱼ] − (1/2a)(E[uᵢ cos 2auⱼ] + E[uⱼ cos 2auᵢ]) + (1/4a²) E[cos 2auᵢ cos 2auⱼ]`,
/// expanded with Stein's lemma.
pub fn nnk_snake_nooffset(a: f64, ri: &ParamRow, rj: &ParamRow) -> Result<f64> {
    check_dims(ri, rj)?;
    check_a(a)?;
    let c = 2.0 * a;
    let lin = dot(&ri.w, &rj.w) + ri.b * rj.b;
    let cos_term = trig(&ri.scaled(c), &rj.scaled(c), 1.0) / (c * c);
    let gi = (-2.0 * a * a * norm_sq(&ri.w)).exp();
    let gj = (-2.0 * a * a * norm_sq(&rj.w)).exp();
    let wij = dot(&ri.w, &rj.w);
    let stein = wij * ((c * rj.b).sin() * gj + (c * ri.b).sin() * gi);
    let bias = -(ri.b / c) * (c * rj.b).cos() * gj + -(rj.b / c) * (c * ri.b).cos() * gi;
    Ok(lin + cos_term + stein + bias)
}

/// Snake differs from the offset-free variant by the constant `1/(2a)`.
pub fn nnk_snake(a: f64, ri: &ParamRow, rj: &ParamRow) -> Result<f64> {
    let base = nnk_snake_nooffset(a, ri, rj)?;
    let c = 2.0 * a;
    Ok(base + (snake_mean(a, ri) + snake_mean(a, rj)) / c + 1.0 / (c * c))
}

/// `E[uᵢ − cos(2auᵢ)/(2a)]`.
fn snake_mean(a: f64, r: &ParamRow) -> f64 {
    let c = 2.0 * a;
    r.b - (c * r.b).cos() * (-2.0 * a * a * norm_sq(&r.w)).exp() / c
}

pub(crate) fn linear_grad(ri: &ParamRow, rj: &ParamRow) -> KernelGrad {
    KernelGrad {
        dwi: rj.w.clone(),
        dbi: rj.b,
        dwj: ri.w.clone(),
        dbj: ri.b,
    }
}

pub(crate) fn cos_grad(ri: &ParamRow, rj: &ParamRow) -> KernelGrad {
    trig_grad(ri, rj, 1.0)
}

pub(crate) fn sin_grad(ri: &ParamRow, rj: &ParamRow) -> KernelGrad {
    trig_grad(ri, rj, -1.0)
}

pub(crate) fn snake_nooffset_grad(a: f64, ri: &ParamRow, rj: &ParamRow) -> KernelGrad {
    let c = 2.0 * a;
    let mut g = linear_grad(ri, rj);

    let cg = trig_grad(&ri.scaled(c), &rj.scaled(c), 1.0);
    g.add_scaled(&cg, 1.0 / c);

    let gi = (-2.0 * a * a * norm_sq(&ri.w)).exp();
    let gj = (-2.0 * a * a * norm_sq(&rj.w)).exp();
    let (si, sj) = ((c * ri.b).sin(), (c * rj.b).sin());
    let (ci, cj) = ((c * ri.b).cos(), (c * rj.b).cos());
    let wij = dot(&ri.w, &rj.w);
    let damp = sj * gj + si * gi;

    // (wᵢᵀwⱼ)(sⱼGⱼ + sᵢGᵢ) and the two bias cross terms.
    for k in 0..ri.w.len() {
        g.dwi[k] += rj.w[k] * damp - wij * si * gi * 2.0 * c * a * ri.w[k] + c * rj.b * ci * gi * ri.w[k];
        g.dwj[k] += ri.w[k] * damp - wij * sj * gj * 2.0 * c * a * rj.w[k] + c * ri.b * cj * gj * rj.w[k];
    }
    g.dbi += wij * c * ci * gi - cj * gj / c + rj.b * si * gi;
    g.dbj += wij * c * cj * gj - ci * gi / c + ri.b * sj * gj;
    g
}

pub(crate) fn snake_grad(a: f64, ri: &ParamRow, rj: &ParamRow) -> KernelGrad {
    let c = 2.0 * a;
    let mut g = snake_nooffset_grad(a, ri, rj);
    let gi = (-2.0 * a * a * norm_sq(&ri.w)).exp();
    let gj = (-2.0 * a * a * norm_sq(&rj.w)).exp();
    for k in 0..ri.w.len() {
        g.dwi[k] += (c * ri.b).cos() * gi * ri.w[k];
        g.dwj[k] += (c * rj.b).cos() * gj * rj.w[k];
    }
    g.dbi += (1.0 + (c * ri.b).sin() * gi) / c;
    g.dbj += (1.0 + (c * rj.b).sin() * gj) / c;
    g
}

/// Log of the exp kernel: Gaussian moment generating function at `wᵢ+wⱼ`.
pub(crate) fn log_exp_gauss(ri: &ParamRow, rj: &ParamRow) -> f64 {
    let s: f64 = ri.w.iter().zip(&rj.w).map(|(a, b)| (a + b) * (a + b)).sum();
    ri.b + rj.b + 0.5 * s
}

pub fn nnk_exp_gauss(ri: &ParamRow, rj: &ParamRow) -> Result<f64> {
    check_dims(ri, rj)?;
    let lk = log_exp_gauss(ri, rj);
    let k = lk.exp();
    if !k.is_finite() {
        return Err(SnefyError::Overflow(format!("exp kernel with log value {lk}")));
    }
    Ok(k)
}

pub(crate) fn exp_gauss_grad(ri: &ParamRow, rj: &ParamRow) -> Result<KernelGrad> {
    let k = nnk_exp_gauss(ri, rj)?;
    let sum: Vec<f64> = ri.w.iter().zip(&rj.w).map(|(a, b)| k * (a + b)).collect();
    Ok(KernelGrad {
        dwi: sum.clone(),
        dwj: sum,
        dbi: k,
        dbj: k,
    })
}
