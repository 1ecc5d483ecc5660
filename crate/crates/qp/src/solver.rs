//! ADMM iteration, in the form popularised by OSQP.
//!
//! Each iteration solves one linear system with the fixed matrix
//! `P + sigma I + A^T diag(rho) A`, then projects onto the box `[l, u]` and
//! updates the multipliers. The matrix is factorized densely; problems here
//! have at most a few hundred variables.
//!
//! Polishing solves the equality system of the active set guessed from the
//! iterate and corrects that set a few times. It runs at doubling intervals
//! during the iteration and once at the end; a polished point that meets the
//! tolerances ends the solve. The penalty update backs off after each change
//! so it cannot cycle.

use nalgebra::{DMatrix, DVector};

use crate::{CsrMatrix, QpError, QuadraticProgram};

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_FACTOR: f64 = 1e3;
const SCALE_MIN: f64 = 1e-4;
const SCALE_MAX: f64 = 1e4;

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_iter: usize,
    /// Initial ADMM penalty.
    pub rho: f64,
    /// Proximal regularization on `x`.
    pub sigma: f64,
    /// Over-relaxation factor in `(0, 2)`.
    pub alpha: f64,
    pub adaptive_rho: bool,
    /// Iterations between penalty updates.
    pub adaptive_rho_interval: usize,
    /// Refactorize only when the penalty would change by more than this factor.
    pub adaptive_rho_tolerance: f64,
    /// Iterations between termination checks.
    pub check_interval: usize,
    /// Ruiz equilibration passes; 0 disables scaling.
    pub scaling_iters: usize,
    pub eps_prim_inf: f64,
    /// Solve the equality system of the guessed active set after ADMM.
    pub polish: bool,
    pub polish_delta: f64,
    pub polish_refine_iter: usize,
    /// Active-set corrections tried before a polish attempt is abandoned.
    pub polish_max_rounds: usize,
    /// First iteration at which polishing is tried during the ADMM loop;
    /// later attempts follow at doubling intervals. 0 polishes only at the end.
    pub polish_start: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            tol_abs: 1e-6,
            tol_rel: 1e-6,
            max_iter: 100_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            adaptive_rho: true,
            adaptive_rho_interval: 50,
            adaptive_rho_tolerance: 5.0,
            check_interval: 10,
            scaling_iters: 10,
            eps_prim_inf: 1e-5,
            polish: true,
            polish_delta: 1e-9,
            polish_refine_iter: 5,
            polish_max_rounds: 10,
            polish_start: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Solved,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Constraint multipliers; see [`crate::kkt_residuals`] for the sign convention.
    pub duals: Vec<f64>,
    pub status: Status,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub polished: bool,
}

/// Primal/dual starting point from an earlier solve of a similar problem.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub x: Vec<f64>,
    pub duals: Vec<f64>,
}

impl From<&QpSolution> for WarmStart {
    fn from(sol: &QpSolution) -> Self {
        Self {
            x: sol.x.clone(),
            duals: sol.duals.clone(),
        }
    }
}

/// Owns the settings and the per-solve workspace. Not reentrant.
#[derive(Debug, Clone, Default)]
pub struct Solver {
    settings: Settings,
}

/// Problem data after Ruiz equilibration and cost scaling.
struct Scaled {
    p: Vec<f64>,
    q: Vec<f64>,
    a: CsrMatrix,
    l: Vec<f64>,
    u: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
    c: f64,
}

fn limit_scale(v: f64) -> f64 {
    if v < SCALE_MIN {
        1.0
    } else {
        v.min(SCALE_MAX)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

impl Scaled {
    fn new(problem: &QuadraticProgram, iters: usize) -> Self {
        let n = problem.num_vars();
        let m = problem.num_constraints();
        let mut p: Vec<f64> = problem.hessian_diag.iter().map(|w| 2.0 * w).collect();
        let mut q = problem.linear_cost.clone();
        let mut a = problem.constraints.clone();
        let mut d = vec![1.0; n];
        let mut e = vec![1.0; m];

        for _ in 0..iters {
            let a_cols = a.col_inf_norms();
            let dd: Vec<f64> = (0..n)
                .map(|j| 1.0 / limit_scale(p[j].abs().max(a_cols[j])).sqrt())
                .collect();
            let ee: Vec<f64> = a
                .row_inf_norms()
                .into_iter()
                .map(|r| 1.0 / limit_scale(r).sqrt())
                .collect();
            for j in 0..n {
                p[j] *= dd[j] * dd[j];
                q[j] *= dd[j];
                d[j] *= dd[j];
            }
            a = a.scaled(&ee, &dd);
            for i in 0..m {
                e[i] *= ee[i];
            }
        }

        let mut c = 1.0;
        if iters > 0 && n > 0 {
            let mean_p = p.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
            let c_tmp = limit_scale(mean_p.max(inf_norm(&q)));
            c = 1.0 / c_tmp;
            p.iter_mut().for_each(|v| *v *= c);
            q.iter_mut().for_each(|v| *v *= c);
        }

        let l = problem.lower.iter().zip(&e).map(|(l, e)| l * e).collect();
        let u = problem.upper.iter().zip(&e).map(|(u, e)| u * e).collect();
        Self { p, q, a, l, u, d, e, c }
    }

    fn unscale_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.d).map(|(x, d)| x * d).collect()
    }

    fn unscale_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.e).map(|(y, e)| y * e / self.c).collect()
    }

    fn scale_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.d).map(|(x, d)| x / d).collect()
    }

    fn scale_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.e).map(|(y, e)| y * self.c / e).collect()
    }
}

/// Residual norms in the original (unscaled) coordinates, plus the
/// magnitudes the relative tolerances are measured against.
#[derive(Debug, Clone, Copy)]
struct Residuals {
    prim: f64,
    dual: f64,
    eps_prim: f64,
    eps_dual: f64,
    // scaled-space quantities for the penalty update
    prim_scaled_ratio: f64,
    dual_scaled_ratio: f64,
}

impl Residuals {
    fn converged(&self) -> bool {
        self.prim <= self.eps_prim && self.dual <= self.eps_dual
    }

    fn score(&self) -> f64 {
        (self.prim / self.eps_prim).max(self.dual / self.eps_dual)
    }
}

fn rho_vector(s: &Scaled, rho: f64) -> Vec<f64> {
    s.l.iter()
        .zip(&s.u)
        .map(|(&l, &u)| {
            if l == f64::NEG_INFINITY && u == f64::INFINITY {
                RHO_MIN
            } else if (u - l).abs() < 1e-10 * (1.0 + l.abs()) {
                (RHO_EQ_FACTOR * rho).min(RHO_MAX)
            } else {
                rho
            }
        })
        .collect()
}

fn factorize(s: &Scaled, sigma: f64, rho_vec: &[f64]) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>, QpError> {
    let n = s.p.len();
    let mut k = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        k[(j, j)] = s.p[j] + sigma;
    }
    for (i, rho) in rho_vec.iter().enumerate() {
        let row: Vec<(usize, f64)> = s.a.row(i).collect();
        for &(j1, v1) in &row {
            for &(j2, v2) in &row {
                k[(j1, j2)] += rho * v1 * v2;
            }
        }
    }
    k.cholesky().ok_or(QpError::Factorization)
}

impl Solver {
    pub fn new(settings: Settings) -> Self {
        Self { settings }
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    pub fn solve(&mut self, problem: &QuadraticProgram) -> Result<QpSolution, QpError> {
        self.solve_warm(problem, None)
    }

    pub fn solve_warm(
        &mut self,
        problem: &QuadraticProgram,
        warm: Option<&WarmStart>,
    ) -> Result<QpSolution, QpError> {
        problem.validate()?;
        let st = &self.settings;
        let n = problem.num_vars();
        let m = problem.num_constraints();
        let s = Scaled::new(problem, st.scaling_iters);

        let (mut x, mut y) = match warm {
            Some(w) if w.x.len() == n && w.duals.len() == m => (s.scale_x(&w.x), s.scale_y(&w.duals)),
            _ => (vec![0.0; n], vec![0.0; m]),
        };
        let mut z: Vec<f64> = s.a.mul_vec(&x);
        project(&mut z, &s.l, &s.u);

        let mut rho = st.rho;
        let mut rho_vec = rho_vector(&s, rho);
        let mut chol = factorize(&s, st.sigma, &rho_vec)?;

        let mut x_tilde = vec![0.0; n];
        let mut z_tilde = vec![0.0; m];
        let mut rhs_tmp = vec![0.0; m];
        let mut aty = vec![0.0; n];
        let mut y_prev = y.clone();

        let mut best: Option<(f64, Vec<f64>, Vec<f64>, Vec<f64>)> = None;
        let mut status = Status::MaxIter;
        let mut iterations = 0;
        let mut last_res = None;
        let mut next_polish = st.polish_start;
        let mut rho_interval = st.adaptive_rho_interval.max(1);
        let mut next_rho_check = rho_interval;
        let mut early: Option<(Vec<f64>, Vec<f64>, Residuals)> = None;

        for iter in 1..=st.max_iter.max(1) {
            iterations = iter;
            y_prev.copy_from_slice(&y);

            // x_tilde = K^{-1} (sigma x - q + A^T (rho z - y))
            for i in 0..m {
                rhs_tmp[i] = rho_vec[i] * z[i] - y[i];
            }
            s.a.tr_mul_vec_into(&rhs_tmp, &mut aty);
            let rhs = DVector::from_iterator(n, (0..n).map(|j| st.sigma * x[j] - s.q[j] + aty[j]));
            let sol = chol.solve(&rhs);
            x_tilde.copy_from_slice(sol.as_slice());
            s.a.mul_vec_into(&x_tilde, &mut z_tilde);

            for j in 0..n {
                x[j] = st.alpha * x_tilde[j] + (1.0 - st.alpha) * x[j];
            }
            for i in 0..m {
                let z_relaxed = st.alpha * z_tilde[i] + (1.0 - st.alpha) * z[i];
                let z_new = (z_relaxed + y[i] / rho_vec[i]).clamp(s.l[i], s.u[i]);
                y[i] += rho_vec[i] * (z_relaxed - z_new);
                z[i] = z_new;
            }

            let check = iter % st.check_interval.max(1) == 0 || iter == st.max_iter;
            if !check {
                continue;
            }
            let res = residuals(&s, &x, &y, &z, st);
            last_res = Some(res);
            if best.as_ref().is_none_or(|b| res.score() < b.0) {
                best = Some((res.score(), x.clone(), y.clone(), z.clone()));
            }
            if res.converged() {
                status = Status::Solved;
                break;
            }
            if st.polish && next_polish > 0 && iter >= next_polish {
                next_polish = 2 * iter;
                if let Some(p) = try_polish(&s, &y, &z, st).filter(|p| p.2.converged()) {
                    early = Some(p);
                    status = Status::Solved;
                    break;
                }
            }
            if primal_infeasible(problem, &s, &y, &y_prev, st.eps_prim_inf) {
                status = Status::Infeasible;
                break;
            }
            if st.adaptive_rho && iter >= next_rho_check {
                next_rho_check = iter + rho_interval;
                let ratio = (res.prim_scaled_ratio / res.dual_scaled_ratio.max(1e-30)).sqrt();
                let new_rho = (rho * ratio).clamp(RHO_MIN, RHO_MAX);
                if new_rho > rho * st.adaptive_rho_tolerance || new_rho < rho / st.adaptive_rho_tolerance {
                    // back off so that the penalty cannot cycle indefinitely
                    rho_interval *= 2;
                    next_rho_check = iter + rho_interval;
                    rho = new_rho;
                    rho_vec = rho_vector(&s, rho);
                    chol = factorize(&s, st.sigma, &rho_vec)?;
                }
            }
        }

        if status == Status::Infeasible {
            let res = last_res.expect("infeasibility is only declared at a check");
            return Ok(QpSolution {
                x: s.unscale_x(&x),
                duals: s.unscale_y(&y),
                status,
                primal_residual: res.prim,
                dual_residual: res.dual,
                iterations,
                polished: false,
            });
        }
        if let Some((px, py, pres)) = early {
            return Ok(QpSolution {
                x: s.unscale_x(&px),
                duals: s.unscale_y(&py),
                status,
                primal_residual: pres.prim,
                dual_residual: pres.dual,
                iterations,
                polished: true,
            });
        }
        if status == Status::MaxIter {
            if let Some((_, bx, by, bz)) = best {
                x = bx;
                y = by;
                z = bz;
            }
        }
        let res = residuals(&s, &x, &y, &z, st);

        let mut solution = QpSolution {
            x: s.unscale_x(&x),
            duals: s.unscale_y(&y),
            status,
            primal_residual: res.prim,
            dual_residual: res.dual,
            iterations,
            polished: false,
        };

        if st.polish && m + n > 0 {
            if let Some((px, py, pres)) = try_polish(&s, &y, &z, st) {
                let tiny = 1e-10;
                let better = pres.prim <= res.prim.max(tiny) && pres.dual <= res.dual.max(tiny);
                if better || (pres.converged() && !res.converged()) {
                    solution.x = s.unscale_x(&px);
                    solution.duals = s.unscale_y(&py);
                    solution.primal_residual = pres.prim;
                    solution.dual_residual = pres.dual;
                    solution.polished = true;
                    if pres.converged() {
                        solution.status = Status::Solved;
                    }
                }
            }
        }
        Ok(solution)
    }
}

/// Polished scaled `(x, y)` with its residuals.
fn try_polish(s: &Scaled, y: &[f64], z: &[f64], st: &Settings) -> Option<(Vec<f64>, Vec<f64>, Residuals)> {
    let (px, py) = polish(s, y, z, st)?;
    let mut pz = s.a.mul_vec(&px);
    project(&mut pz, &s.l, &s.u);
    let res = residuals(s, &px, &py, &pz, st);
    Some((px, py, res))
}

fn project(z: &mut [f64], l: &[f64], u: &[f64]) {
    for i in 0..z.len() {
        z[i] = z[i].clamp(l[i], u[i]);
    }
}

fn residuals(s: &Scaled, x: &[f64], y: &[f64], z: &[f64], st: &Settings) -> Residuals {
    let ax = s.a.mul_vec(x);
    let aty = s.a.tr_mul_vec(y);
    let m = ax.len();
    let n = x.len();

    let mut prim = 0.0_f64;
    let mut ax_norm = 0.0_f64;
    let mut z_norm = 0.0_f64;
    let mut prim_scaled = 0.0_f64;
    let mut ax_scaled = 0.0_f64;
    let mut z_scaled = 0.0_f64;
    for i in 0..m {
        let inv_e = 1.0 / s.e[i];
        prim = prim.max(((ax[i] - z[i]) * inv_e).abs());
        ax_norm = ax_norm.max((ax[i] * inv_e).abs());
        z_norm = z_norm.max((z[i] * inv_e).abs());
        prim_scaled = prim_scaled.max((ax[i] - z[i]).abs());
        ax_scaled = ax_scaled.max(ax[i].abs());
        z_scaled = z_scaled.max(z[i].abs());
    }

    let mut dual = 0.0_f64;
    let mut px_norm = 0.0_f64;
    let mut aty_norm = 0.0_f64;
    let mut q_norm = 0.0_f64;
    let mut dual_scaled = 0.0_f64;
    let mut px_scaled = 0.0_f64;
    let mut aty_scaled = 0.0_f64;
    let mut q_scaled = 0.0_f64;
    for j in 0..n {
        let k = 1.0 / (s.c * s.d[j]);
        let px = s.p[j] * x[j];
        let r = px + s.q[j] + aty[j];
        dual = dual.max((r * k).abs());
        px_norm = px_norm.max((px * k).abs());
        aty_norm = aty_norm.max((aty[j] * k).abs());
        q_norm = q_norm.max((s.q[j] * k).abs());
        dual_scaled = dual_scaled.max(r.abs());
        px_scaled = px_scaled.max(px.abs());
        aty_scaled = aty_scaled.max(aty[j].abs());
        q_scaled = q_scaled.max(s.q[j].abs());
    }

    Residuals {
        prim,
        dual,
        eps_prim: st.tol_abs + st.tol_rel * ax_norm.max(z_norm),
        eps_dual: st.tol_abs + st.tol_rel * px_norm.max(aty_norm).max(q_norm),
        prim_scaled_ratio: prim_scaled / ax_scaled.max(z_scaled).max(1e-30),
        dual_scaled_ratio: dual_scaled / px_scaled.max(aty_scaled).max(q_scaled).max(1e-30),
    }
}

/// Checks the multiplier increment `dy` for a Farkas-type certificate:
/// `A^T dy ~ 0` and `u^T dy+ + l^T dy- < 0`.
fn primal_infeasible(problem: &QuadraticProgram, s: &Scaled, y: &[f64], y_prev: &[f64], eps: f64) -> bool {
    let dy: Vec<f64> = y
        .iter()
        .zip(y_prev)
        .zip(&s.e)
        .map(|((a, b), e)| (a - b) * e)
        .collect();
    let norm = inf_norm(&dy);
    if norm < 1e-12 {
        return false;
    }
    let atdy = problem.constraints.tr_mul_vec(&dy);
    if inf_norm(&atdy) > eps * norm {
        return false;
    }
    let mut support = 0.0;
    for (i, &v) in dy.iter().enumerate() {
        let small = v.abs() <= eps * norm;
        if v > 0.0 {
            if problem.upper[i] == f64::INFINITY {
                if small {
                    continue;
                }
                return false;
            }
            support += problem.upper[i] * v;
        } else if v < 0.0 {
            if problem.lower[i] == f64::NEG_INFINITY {
                if small {
                    continue;
                }
                return false;
            }
            support += problem.lower[i] * v;
        }
    }
    support < -eps * norm
}

#[derive(Clone, Copy, PartialEq)]
enum Side {
    Lower,
    Upper,
    Both,
}

/// Solves the equality-constrained problem on the active set suggested by
/// the ADMM iterate, then corrects the set: constraints the solution
/// violates are added and multipliers of the wrong sign are dropped. Returns
/// scaled `(x, y)`, or `None` when the set does not settle.
fn polish(s: &Scaled, y: &[f64], z: &[f64], st: &Settings) -> Option<(Vec<f64>, Vec<f64>)> {
    let m = z.len();
    let mut side: Vec<Option<Side>> = (0..m)
        .map(|i| {
            let (l, u) = (s.l[i], s.u[i]);
            if l == u {
                Some(Side::Both)
            } else if z[i] - l < -y[i] {
                Some(Side::Lower)
            } else if u - z[i] < y[i] {
                Some(Side::Upper)
            } else {
                None
            }
        })
        .collect();
    let y_scale = inf_norm(&s.q).max(1.0);
    let sign_tol = 1e-7 * y_scale;

    for _ in 0..=st.polish_max_rounds {
        let active: Vec<(usize, Side)> = side.iter().enumerate().filter_map(|(i, sd)| sd.map(|sd| (i, sd))).collect();
        let (px, lam) = solve_reduced(s, &active, st)?;

        let mut changed = false;
        let ax = s.a.mul_vec(&px);
        for i in 0..m {
            if side[i].is_some() {
                continue;
            }
            if ax[i] < s.l[i] - 1e-9 * (1.0 + s.l[i].abs()) {
                side[i] = Some(Side::Lower);
                changed = true;
            } else if ax[i] > s.u[i] + 1e-9 * (1.0 + s.u[i].abs()) {
                side[i] = Some(Side::Upper);
                changed = true;
            }
        }
        if !changed {
            // feasible: release the constraint with the worst multiplier
            let worst = active
                .iter()
                .enumerate()
                .filter_map(|(r, &(i, sd))| match sd {
                    Side::Lower if lam[r] > sign_tol => Some((lam[r], i)),
                    Side::Upper if lam[r] < -sign_tol => Some((-lam[r], i)),
                    _ => None,
                })
                .max_by(|a, b| a.0.total_cmp(&b.0));
            if let Some((_, i)) = worst {
                side[i] = None;
                changed = true;
            }
        }
        if !changed {
            let mut py = vec![0.0; m];
            for (r, &(i, sd)) in active.iter().enumerate() {
                py[i] = match sd {
                    Side::Lower => lam[r].min(0.0),
                    Side::Upper => lam[r].max(0.0),
                    Side::Both => lam[r],
                };
            }
            return Some((px, py));
        }
    }
    None
}

/// Regularized KKT solve of `min x'Px/2 + q'x` with the `active` rows held
/// at their bounds, refined against the unregularized system. Active rows
/// with a single nonzero fix their variable, which is then eliminated; the
/// multiplier of such a row comes from stationarity afterwards.
fn solve_reduced(s: &Scaled, active: &[(usize, Side)], st: &Settings) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = s.p.len();
    let target = |i: usize, side: Side| match side {
        Side::Lower | Side::Both => s.l[i],
        Side::Upper => s.u[i],
    };

    let mut fixed: Vec<Option<f64>> = vec![None; n];
    // (position in `active`, variable, coefficient) of the fixing rows
    let mut fixing: Vec<(usize, usize, f64)> = Vec::new();
    let mut general: Vec<usize> = Vec::new();
    let mut redundant: Vec<usize> = Vec::new();
    for (r, &(i, side)) in active.iter().enumerate() {
        let mut entries = s.a.row(i);
        match (entries.next(), entries.next()) {
            (Some((j, a)), None) if a != 0.0 => {
                if fixed[j].is_none() {
                    fixed[j] = Some(target(i, side) / a);
                    fixing.push((r, j, a));
                } else {
                    redundant.push(r);
                }
            }
            _ => general.push(r),
        }
    }
    let free: Vec<usize> = (0..n).filter(|&j| fixed[j].is_none()).collect();
    let mut pos = vec![usize::MAX; n];
    for (k, &j) in free.iter().enumerate() {
        pos[j] = k;
    }
    let nf = free.len();
    let mg = general.len();
    let dim = nf + mg;

    let mut k0 = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    for (k, &j) in free.iter().enumerate() {
        k0[(k, k)] = s.p[j];
        rhs[k] = -s.q[j];
    }
    for (g, &r) in general.iter().enumerate() {
        let (i, side) = active[r];
        let mut b = target(i, side);
        for (j, v) in s.a.row(i) {
            match fixed[j] {
                Some(xj) => b -= v * xj,
                None => {
                    k0[(nf + g, pos[j])] = v;
                    k0[(pos[j], nf + g)] = v;
                }
            }
        }
        rhs[nf + g] = b;
    }
    let mut k_reg = k0.clone();
    for k in 0..nf {
        k_reg[(k, k)] += st.polish_delta;
    }
    for g in 0..mg {
        k_reg[(nf + g, nf + g)] -= st.polish_delta;
    }
    let mut sol = DVector::<f64>::zeros(dim);
    if dim > 0 {
        let lu = k_reg.lu();
        sol = lu.solve(&rhs)?;
        for _ in 0..st.polish_refine_iter {
            let resid = &rhs - &k0 * &sol;
            sol += lu.solve(&resid)?;
        }
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }

    let x: Vec<f64> = (0..n)
        .map(|j| fixed[j].unwrap_or_else(|| sol[pos[j]]))
        .collect();
    let mut lam = vec![0.0; active.len()];
    let mut grad: Vec<f64> = (0..n).map(|j| s.p[j] * x[j] + s.q[j]).collect();
    for (g, &r) in general.iter().enumerate() {
        let v = sol[nf + g];
        lam[r] = v;
        for (j, a) in s.a.row(active[r].0) {
            grad[j] += a * v;
        }
    }
    for &(r, j, a) in &fixing {
        lam[r] = -grad[j] / a;
    }
    debug_assert!(redundant.iter().all(|&r| lam[r] == 0.0));
    Some((x, lam))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(qp: &QuadraticProgram) -> QpSolution {
        Solver::new(Settings::default()).solve(qp).unwrap()
    }

    #[test]
    fn active_single_bound() {
        let qp = QuadraticProgram::new(
            vec![1.0],
            vec![0.0],
            CsrMatrix::from_dense(&[vec![1.0]]),
            vec![3.0],
            vec![f64::INFINITY],
        )
        .unwrap();
        let sol = solve(&qp);
        assert_eq!(sol.status, Status::Solved);
        assert!((sol.x[0] - 3.0).abs() < 1e-8, "{:?}", sol);
        assert!((sol.duals[0] + 6.0).abs() < 1e-6, "{:?}", sol);
    }

    #[test]
    fn equality_splits_symmetrically() {
        let qp = QuadraticProgram::new(
            vec![1.0, 1.0],
            vec![0.0, 0.0],
            CsrMatrix::from_dense(&[vec![1.0, 1.0]]),
            vec![2.0],
            vec![2.0],
        )
        .unwrap();
        let sol = solve(&qp);
        assert_eq!(sol.status, Status::Solved);
        assert!((sol.x[0] - 1.0).abs() < 1e-8 && (sol.x[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn equal_split_minimizes_norm() {
        // min sum F_t^2  s.t. F_t >= 0, sum F_t >= 5
        let t = 5;
        let mut rows = vec![vec![1.0; t]];
        for i in 0..t {
            let mut r = vec![0.0; t];
            r[i] = 1.0;
            rows.push(r);
        }
        let qp = QuadraticProgram::new(
            vec![1.0; t],
            vec![0.0; t],
            CsrMatrix::from_dense(&rows),
            vec![5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            vec![f64::INFINITY; t + 1],
        )
        .unwrap();
        let sol = solve(&qp);
        assert_eq!(sol.status, Status::Solved);
        for v in &sol.x {
            assert!((v - 1.0).abs() < 1e-8, "{:?}", sol.x);
        }
    }

    #[test]
    fn detects_primal_infeasibility() {
        // x >= 2 and x <= 1
        let qp = QuadraticProgram::new(
            vec![1.0],
            vec![0.0],
            CsrMatrix::from_dense(&[vec![1.0], vec![1.0]]),
            vec![2.0, f64::NEG_INFINITY],
            vec![f64::INFINITY, 1.0],
        )
        .unwrap();
        let sol = solve(&qp);
        assert_eq!(sol.status, Status::Infeasible);
    }

    #[test]
    fn unconstrained_minimum() {
        // min 2 x^2 - 4 x  => x = 1
        let qp = QuadraticProgram::new(vec![2.0], vec![-4.0], CsrMatrix::zeros(0, 1), vec![], vec![]).unwrap();
        let sol = solve(&qp);
        assert_eq!(sol.status, Status::Solved);
        assert!((sol.x[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn warm_start_needs_fewer_iterations() {
        let qp = QuadraticProgram::new(
            vec![1.0, 2.0, 0.5],
            vec![-1.0, 0.3, 2.0],
            CsrMatrix::from_dense(&[vec![1.0, 1.0, 1.0], vec![1.0, -1.0, 0.0], vec![0.0, 0.0, 1.0]]),
            vec![1.0, f64::NEG_INFINITY, -0.5],
            vec![1.0, 0.2, f64::INFINITY],
        )
        .unwrap();
        let mut solver = Solver::new(Settings::default());
        let cold = solver.solve(&qp).unwrap();
        let warm = solver.solve_warm(&qp, Some(&WarmStart::from(&cold))).unwrap();
        assert_eq!(warm.status, Status::Solved);
        assert!(warm.iterations <= cold.iterations);
        for (a, b) in cold.x.iter().zip(&warm.x) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn deterministic_iterates() {
        let qp = QuadraticProgram::new(
            vec![1.0, 3.0],
            vec![1.0, -2.0],
            CsrMatrix::from_dense(&[vec![1.0, 2.0], vec![-1.0, 1.0]]),
            vec![0.5, -1.0],
            vec![4.0, 0.25],
        )
        .unwrap();
        let a = solve(&qp);
        let b = solve(&qp);
        assert_eq!(a, b);
    }
}
