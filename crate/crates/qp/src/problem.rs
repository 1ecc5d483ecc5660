use thiserror::Error;

use crate::CsrMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("hessian weight {value} at index {index} is not strictly positive")]
    NonPositiveHessian { index: usize, value: f64 },
    #[error("constraint {index} has lower bound {lower} above upper bound {upper}")]
    InvertedBounds { index: usize, lower: f64, upper: f64 },
    #[error("non-finite problem data: {0}")]
    NonFinite(String),
    #[error("linear system factorization failed")]
    Factorization,
}

/// `minimize sum_i w_i x_i^2 + c^T x  subject to  l <= A x <= u`.
///
/// Bounds may be infinite. Equality rows are written with `l == u`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    pub hessian_diag: Vec<f64>,
    pub linear_cost: Vec<f64>,
    pub constraints: CsrMatrix,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl QuadraticProgram {
    pub fn new(
        hessian_diag: Vec<f64>,
        linear_cost: Vec<f64>,
        constraints: CsrMatrix,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self, QpError> {
        let qp = Self {
            hessian_diag,
            linear_cost,
            constraints,
            lower,
            upper,
        };
        qp.validate()?;
        Ok(qp)
    }

    pub fn num_vars(&self) -> usize {
        self.hessian_diag.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.hessian_diag.len();
        let m = self.lower.len();
        if self.linear_cost.len() != n {
            return Err(QpError::Dimension(format!(
                "linear cost has {} entries, expected {n}",
                self.linear_cost.len()
            )));
        }
        if self.upper.len() != m {
            return Err(QpError::Dimension(format!(
                "upper bounds have {} entries, lower bounds {m}",
                self.upper.len()
            )));
        }
        if self.constraints.nrows() != m || self.constraints.ncols() != n {
            return Err(QpError::Dimension(format!(
                "constraint matrix is {}x{}, expected {m}x{n}",
                self.constraints.nrows(),
                self.constraints.ncols()
            )));
        }
        for (index, &value) in self.hessian_diag.iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(QpError::NonPositiveHessian { index, value });
            }
        }
        if self.linear_cost.iter().any(|c| !c.is_finite()) {
            return Err(QpError::NonFinite("linear cost".into()));
        }
        if self.constraints.triplets().any(|(_, _, v)| !v.is_finite()) {
            return Err(QpError::NonFinite("constraint matrix".into()));
        }
        for (index, (&lower, &upper)) in self.lower.iter().zip(&self.upper).enumerate() {
            if lower.is_nan() || upper.is_nan() || lower == f64::INFINITY || upper == f64::NEG_INFINITY {
                return Err(QpError::NonFinite(format!("bounds of constraint {index}")));
            }
            if lower > upper {
                return Err(QpError::InvertedBounds { index, lower, upper });
            }
        }
        Ok(())
    }

    /// `sum_i w_i x_i^2 + c^T x`
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.hessian_diag
            .iter()
            .zip(&self.linear_cost)
            .zip(x)
            .map(|((w, c), xi)| w * xi * xi + c * xi)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_var(w: f64, l: f64, u: f64) -> Result<QuadraticProgram, QpError> {
        QuadraticProgram::new(
            vec![w],
            vec![0.0],
            CsrMatrix::from_dense(&[vec![1.0]]),
            vec![l],
            vec![u],
        )
    }

    #[test]
    fn rejects_zero_weight() {
        assert_eq!(
            one_var(0.0, 0.0, 1.0),
            Err(QpError::NonPositiveHessian { index: 0, value: 0.0 })
        );
    }

    #[test]
    fn rejects_inverted_bounds() {
        assert!(matches!(one_var(1.0, 2.0, 1.0), Err(QpError::InvertedBounds { .. })));
    }

    #[test]
    fn accepts_infinite_bounds() {
        assert!(one_var(1.0, f64::NEG_INFINITY, f64::INFINITY).is_ok());
    }

    #[test]
    fn rejects_bad_shape() {
        let err = QuadraticProgram::new(
            vec![1.0, 1.0],
            vec![0.0, 0.0],
            CsrMatrix::from_dense(&[vec![1.0]]),
            vec![0.0],
            vec![1.0],
        );
        assert!(matches!(err, Err(QpError::Dimension(_))));
    }
}
