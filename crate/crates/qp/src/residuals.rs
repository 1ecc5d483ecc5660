use crate::QuadraticProgram;

/// Infinity norms of the primal and dual KKT residuals at `(x, duals)`.
///
/// * primal: largest violation of `l <= A x <= u`
/// * dual: `|| 2 diag(w) x + c + A^T duals ||`
///
/// Duals follow the convention where a multiplier is non-negative on an
/// active upper bound and non-positive on an active lower bound. For
/// `min x^2 s.t. x >= 3` written as `3 <= x` the optimal multiplier is
/// `-6`; written as `-x <= -3` it is `+6`.
pub fn kkt_residuals(problem: &QuadraticProgram, x: &[f64], duals: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), problem.num_vars(), "x has wrong length");
    assert_eq!(duals.len(), problem.num_constraints(), "duals have wrong length");

    let ax = problem.constraints.mul_vec(x);
    let primal = ax
        .iter()
        .zip(problem.lower.iter().zip(&problem.upper))
        .map(|(&v, (&l, &u))| (l - v).max(v - u).max(0.0))
        .fold(0.0_f64, f64::max);

    let aty = problem.constraints.tr_mul_vec(duals);
    let dual = (0..problem.num_vars())
        .map(|i| (2.0 * problem.hessian_diag[i] * x[i] + problem.linear_cost[i] + aty[i]).abs())
        .fold(0.0_f64, f64::max);

    (primal, dual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::CsrMatrix;

    fn x_at_least_three_as_upper() -> QuadraticProgram {
        // -x <= -3
        QuadraticProgram::new(
            vec![1.0],
            vec![0.0],
            CsrMatrix::from_dense(&[vec![-1.0]]),
            vec![f64::NEG_INFINITY],
            vec![-3.0],
        )
        .unwrap()
    }

    fn x_at_least_three_as_lower() -> QuadraticProgram {
        QuadraticProgram::new(
            vec![1.0],
            vec![0.0],
            CsrMatrix::from_dense(&[vec![1.0]]),
            vec![3.0],
            vec![f64::INFINITY],
        )
        .unwrap()
    }

    #[test]
    fn optimum_with_multiplier_six_is_stationary() {
        let qp = x_at_least_three_as_upper();
        assert_eq!(kkt_residuals(&qp, &[3.0], &[6.0]), (0.0, 0.0));
        let qp = x_at_least_three_as_lower();
        assert_eq!(kkt_residuals(&qp, &[3.0], &[-6.0]), (0.0, 0.0));
    }

    #[test]
    fn origin_violates_bound_by_three() {
        let qp = x_at_least_three_as_lower();
        let (primal, _) = kkt_residuals(&qp, &[0.0], &[0.0]);
        assert_eq!(primal, 3.0);
    }

    #[test]
    fn interior_point_dual_residual_is_gradient() {
        let qp = QuadraticProgram::new(
            vec![2.0, 0.5],
            vec![1.0, -4.0],
            CsrMatrix::from_dense(&[vec![1.0, 1.0]]),
            vec![-10.0],
            vec![10.0],
        )
        .unwrap();
        let x = [1.0, 2.0];
        let (primal, dual) = kkt_residuals(&qp, &x, &[0.0]);
        assert_eq!(primal, 0.0);
        // gradient = (2*2*1 + 1, 2*0.5*2 - 4) = (5, -2)
        assert_eq!(dual, 5.0);
    }
}
