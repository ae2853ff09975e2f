//! Respiration cancellation by projection onto the orthogonal complement of
//! a lagged reference subspace.
//!
//! With `X` holding the reference and its first `M - 1` delays, the weights
//! minimise `‖θ - X w‖²` and the output is `θ - X w`. The solve goes through
//! a QR factorization; when `X` is badly conditioned a small ridge is added
//! as extra rows rather than by forming `XᵀX`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{dot, Matrix, Qr};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcaConfig {
    /// Number of lagged reference columns `M`.
    pub order: usize,
    /// Ridge scale relative to the mean diagonal of `XᵀX`.
    pub ridge: f64,
    /// Condition number above which the ridge is applied.
    pub max_condition: f64,
}

impl Default for EcaConfig {
    fn default() -> Self {
        Self {
            order: 5,
            ridge: 1e-8,
            max_condition: 1e10,
        }
    }
}

impl EcaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(invalid("eca order", "must be at least 1"));
        }
        if !(self.ridge >= 0.0) {
            return Err(invalid("eca ridge", "must be non-negative"));
        }
        if !(self.max_condition >= 1.0) {
            return Err(invalid("eca max_condition", "must be at least 1"));
        }
        Ok(())
    }
}

/// `X[n, m] = s_ref[n - m]`, zero before the start of the reference.
pub fn lag_matrix(reference: &[f64], order: usize) -> Result<Matrix> {
    let n = reference.len();
    if order == 0 || order >= n {
        return Err(invalid(
            "eca order",
            format!("need 1 <= M < N, got M = {order}, N = {n}"),
        ));
    }
    let mut x = Matrix::zeros(n, order);
    for m in 0..order {
        x.column_mut(m)[m..].copy_from_slice(&reference[..n - m]);
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EcaOutput {
    pub cleaned: Vec<f64>,
    pub weights: Vec<f64>,
    /// `‖θ_ECA‖² / ‖θ‖²`, 1 for a zero input.
    pub residual_power_ratio: f64,
    /// 2-norm condition estimate of `X`.
    pub condition: f64,
    pub ridged: bool,
    /// `X` was all zeros; nothing was removed.
    pub degenerate: bool,
}

pub fn eca_cancel(theta: &[f64], x: &Matrix, config: &EcaConfig) -> Result<EcaOutput> {
    config.validate()?;
    if x.rows() != theta.len() {
        return Err(invalid(
            "eca input",
            format!(
                "{} samples against {} reference rows",
                theta.len(),
                x.rows()
            ),
        ));
    }
    if x.is_zero() {
        return Ok(EcaOutput {
            cleaned: theta.to_vec(),
            weights: vec![0.0; x.cols()],
            residual_power_ratio: 1.0,
            condition: f64::INFINITY,
            ridged: false,
            degenerate: true,
        });
    }

    let qr = Qr::new(x)?;
    let condition = qr.condition();
    let ridged = !(condition <= config.max_condition);
    let weights = if ridged {
        let mean_diag = (0..x.cols())
            .map(|c| dot(x.column(c), x.column(c)))
            .sum::<f64>()
            / x.cols() as f64;
        let eps = (config.ridge * mean_diag).max(f64::MIN_POSITIVE);
        let mut y = theta.to_vec();
        y.resize(x.rows() + x.cols(), 0.0);
        Qr::new(&x.with_ridge_rows(eps))?.solve(&y)?.0
    } else {
        qr.solve(theta)?.0
    };

    let fitted = x.mul_vec(&weights);
    let cleaned: Vec<f64> = theta.iter().zip(&fitted).map(|(t, f)| t - f).collect();
    let before = dot(theta, theta);
    let residual_power_ratio = if before > 0.0 {
        dot(&cleaned, &cleaned) / before
    } else {
        1.0
    };
    Ok(EcaOutput {
        cleaned,
        weights,
        residual_power_ratio,
        condition,
        ridged,
        degenerate: false,
    })
}
