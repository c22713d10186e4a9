//! Central-difference gradient checking.

use super::dense::DenseMatrix;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// max over entries of |analytic − numeric| / max(1, |numeric|)
    pub max_rel_error: f64,
    /// (parameter index, flat entry index) of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub entries_checked: usize,
}

/// Compares `analytic` gradients against central differences of `f`.
pub fn compare_with_central_differences<F>(
    f: F,
    params: &[DenseMatrix],
    analytic: &[DenseMatrix],
    eps: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&[DenseMatrix]) -> Result<f64>,
{
    if analytic.len() != params.len() {
        return Err(Error::shape(
            "grad_check",
            format!("{} gradients for {} parameters", analytic.len(), params.len()),
        ));
    }
    let mut work: Vec<DenseMatrix> = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        entries_checked: 0,
    };
    for (p, grad) in analytic.iter().enumerate() {
        if grad.shape() != params[p].shape() {
            return Err(Error::shape(
                "grad_check",
                format!(
                    "gradient {:?} for parameter {:?}",
                    grad.shape(),
                    params[p].shape()
                ),
            ));
        }
        for k in 0..params[p].len() {
            let base = params[p].as_slice()[k];
            work[p].as_mut_slice()[k] = base + eps;
            let plus = f(&work)?;
            work[p].as_mut_slice()[k] = base - eps;
            let minus = f(&work)?;
            work[p].as_mut_slice()[k] = base;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite evaluation perturbing parameter {p} entry {k}"
                )));
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let rel = (grad.as_slice()[k] - numeric).abs() / numeric.abs().max(1.0);
            report.entries_checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some((p, k));
            }
        }
    }
    Ok(report)
}

/// Gradient check of a scalar function expressed on a [`Tape`].
///
/// `build` receives a fresh tape and one leaf per parameter and must return
/// the scalar loss.
pub fn grad_check<B>(build: B, params: &[DenseMatrix], eps: f64) -> Result<GradCheckReport>
where
    B: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let (_, analytic) = value_and_grad(&build, params)?;
    let eval = |ps: &[DenseMatrix]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.leaf(p.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        tape.value(loss).to_scalar()
    };
    compare_with_central_differences(eval, params, &analytic, eps)
}

/// Evaluates `build` once and returns the loss with its parameter gradients.
pub fn value_and_grad<B>(build: &B, params: &[DenseMatrix]) -> Result<(f64, Vec<DenseMatrix>)>
where
    B: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    let value = tape.value(loss).to_scalar()?;
    let grads = tape.backward(loss)?;
    let analytic = vars.iter().map(|&v| grads.get_or_zeros(v, &tape)).collect();
    Ok((value, analytic))
}
