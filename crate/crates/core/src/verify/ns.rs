//! Newton-Schulz orthogonalization and the Muon update rule.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Odd polynomial `a x + b x^3 + c x^5` applied to the singular values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NsCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl NsCoefficients {
    /// The usual Muon quintic. Fast to reach the band around 1 but does not
    /// converge to exactly 1.
    pub const MUON_QUINTIC: Self = Self {
        a: 3.4445,
        b: -4.7750,
        c: 2.0315,
    };

    /// Classic cubic iteration; 1 is an attracting fixed point.
    pub const CUBIC: Self = Self {
        a: 1.5,
        b: -0.5,
        c: 0.0,
    };
}

impl Default for NsCoefficients {
    fn default() -> Self {
        Self::MUON_QUINTIC
    }
}

/// Orthogonalizes `m` with the Muon quintic.
pub fn newton_schulz_orthogonalize(m: &DMatrix<f64>, steps: usize) -> Result<DMatrix<f64>> {
    newton_schulz_with(m, steps, NsCoefficients::MUON_QUINTIC)
}

/// `X <- a X + b (X X^T) X + c (X X^T)^2 X`, starting from `m / ||m||_F`.
///
/// Tall inputs are iterated in transposed form so the Gram matrix is the
/// smaller one; this also makes the result exactly transpose-equivariant for
/// non-square inputs.
pub fn newton_schulz_with(
    m: &DMatrix<f64>,
    steps: usize,
    coeffs: NsCoefficients,
) -> Result<DMatrix<f64>> {
    if steps == 0 {
        return Err(Error::InvalidArgument("newton-schulz needs at least one step".into()));
    }
    let norm = m.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::Numerical(format!(
            "cannot normalize a matrix with Frobenius norm {norm}"
        )));
    }
    let tall = m.nrows() > m.ncols();
    let mut x = if tall { m.transpose() } else { m.clone() } / norm;
    let NsCoefficients { a, b, c } = coeffs;
    for _ in 0..steps {
        let gram = &x * x.transpose();
        let poly = if c == 0.0 {
            &gram * b
        } else {
            &gram * b + (&gram * &gram) * c
        };
        x = &x * a + poly * &x;
    }
    Ok(if tall { x.transpose() } else { x })
}

/// Optimizer hyper-parameters shared by the replicated and partitioned runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub beta: f64,
    pub ns_steps: usize,
    #[serde(default)]
    pub coefficients: NsCoefficients,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 0.02,
            beta: 0.95,
            ns_steps: 5,
            coefficients: NsCoefficients::MUON_QUINTIC,
        }
    }
}

fn check_shapes(grad: &DMatrix<f64>, momentum: &DMatrix<f64>) -> Result<()> {
    if grad.shape() != momentum.shape() {
        return Err(Error::InvalidArgument(format!(
            "gradient is {:?}, momentum is {:?}",
            grad.shape(),
            momentum.shape()
        )));
    }
    Ok(())
}

/// Plain-momentum Muon: `m' = beta m + g`, `update = -lr NS(m')`.
///
/// A zero momentum has no direction, so its update is zero.
pub fn muon_step(
    grad: &DMatrix<f64>,
    momentum: &DMatrix<f64>,
    cfg: &OptimizerConfig,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_shapes(grad, momentum)?;
    let m = momentum * cfg.beta + grad;
    let update = if m.iter().all(|v| *v == 0.0) {
        DMatrix::zeros(m.nrows(), m.ncols())
    } else {
        newton_schulz_with(&m, cfg.ns_steps, cfg.coefficients)? * -cfg.lr
    };
    Ok((update, m))
}

/// Momentum SGD for vector parameters: `update = -lr (beta m + g)`.
pub fn sgd_momentum_step(
    grad: &DMatrix<f64>,
    momentum: &DMatrix<f64>,
    cfg: &OptimizerConfig,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_shapes(grad, momentum)?;
    let m = momentum * cfg.beta + grad;
    Ok((&m * -cfg.lr, m))
}
