//! Brute-force reference for small QPs, independent of the ADMM code path.

#![allow(dead_code)]

use dpc_qp::{CsrMatrix, QuadraticProgram};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

#[derive(Clone, Copy)]
enum Choice {
    Free,
    AtLower,
    AtUpper,
}

/// Enumerates every assignment of rows to {inactive, at lower, at upper},
/// solves the equality-constrained KKT system of each, and returns the
/// feasible candidate with the lowest objective.
pub fn enumerate_active_sets(qp: &QuadraticProgram) -> Option<Vec<f64>> {
    let n = qp.num_vars();
    let m = qp.num_constraints();
    let dense: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut row = vec![0.0; n];
            for (j, v) in qp.constraints.row(i) {
                row[j] = v;
            }
            row
        })
        .collect();

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut choices = vec![Choice::Free; m];
    let total = 3usize.pow(m as u32);
    for code in 0..total {
        let mut c = code;
        let mut ok = true;
        for i in 0..m {
            choices[i] = match c % 3 {
                0 => Choice::Free,
                1 => Choice::AtLower,
                _ => Choice::AtUpper,
            };
            c /= 3;
            match choices[i] {
                Choice::AtLower if !qp.lower[i].is_finite() => ok = false,
                Choice::AtUpper if !qp.upper[i].is_finite() || qp.upper[i] == qp.lower[i] => ok = false,
                _ => {}
            }
        }
        if !ok {
            continue;
        }
        let active: Vec<(usize, f64)> = (0..m)
            .filter_map(|i| match choices[i] {
                Choice::Free => None,
                Choice::AtLower => Some((i, qp.lower[i])),
                Choice::AtUpper => Some((i, qp.upper[i])),
            })
            .collect();
        if active.len() > n {
            continue;
        }
        let dim = n + active.len();
        let mut k = DMatrix::<f64>::zeros(dim, dim);
        let mut rhs = DVector::<f64>::zeros(dim);
        for j in 0..n {
            k[(j, j)] = 2.0 * qp.hessian_diag[j];
            rhs[j] = -qp.linear_cost[j];
        }
        for (r, &(i, b)) in active.iter().enumerate() {
            for j in 0..n {
                k[(n + r, j)] = dense[i][j];
                k[(j, n + r)] = dense[i][j];
            }
            rhs[n + r] = b;
        }
        let svd = k.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if smin <= 1e-10 * smax.max(1.0) {
            continue;
        }
        let Ok(sol) = svd.solve(&rhs, 1e-14) else { continue };
        let x: Vec<f64> = sol.rows(0, n).iter().copied().collect();
        let feasible = dense.iter().enumerate().all(|(i, row)| {
            let v: f64 = row.iter().zip(&x).map(|(a, b)| a * b).sum();
            v >= qp.lower[i] - 1e-9 && v <= qp.upper[i] + 1e-9
        });
        if !feasible {
            continue;
        }
        let obj = qp.objective(&x);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, x));
        }
    }
    best.map(|(_, x)| x)
}

/// A random feasible problem with `n <= 3` variables and `m <= 6` rows.
pub fn random_small_qp<R: Rng>(rng: &mut R) -> QuadraticProgram {
    let n = rng.gen_range(1..=3);
    let m = rng.gen_range(0..=6);
    let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mut rows = Vec::with_capacity(m);
    let mut lower = Vec::with_capacity(m);
    let mut upper = Vec::with_capacity(m);
    for _ in 0..m {
        let row: Vec<f64> = (0..n)
            .map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(-2.0..2.0) })
            .collect();
        let ax0: f64 = row.iter().zip(&x0).map(|(a, b)| a * b).sum();
        let kind = rng.gen_range(0..10);
        let (l, u) = match kind {
            0 => (ax0, ax0),
            1..=3 => (ax0 - rng.gen_range(0.0..1.5), ax0 + rng.gen_range(0.0..1.5)),
            4..=6 => (ax0 - rng.gen_range(0.0..1.5), f64::INFINITY),
            _ => (f64::NEG_INFINITY, ax0 + rng.gen_range(0.0..1.5)),
        };
        rows.push(row);
        lower.push(l);
        upper.push(u);
    }
    let hessian = (0..n).map(|_| rng.gen_range(0.1..5.0)).collect();
    let cost = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let a = if m == 0 { CsrMatrix::zeros(0, n) } else { CsrMatrix::from_dense(&rows) };
    QuadraticProgram::new(hessian, cost, a, lower, upper).expect("generated problem is well formed")
}
