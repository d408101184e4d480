//! Semi-smooth Newton iteration for the Huberised optimality system.

use alloc::vec::Vec;

use crate::linsolve::{self, LinearSolveError, SolveReport};
use crate::mesh::GridFunction;
use crate::model::{self, ModelError, ModelParams, SolverState};
use crate::operators::DiscreteOperators;
use crate::sparse::SparseOperator;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NewtonError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("linear solve failed in Newton iteration {iteration}: {source}")]
    LinearSolve { iteration: usize, source: LinearSolveError },
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub linear: SolveReport,
    /// Euclidean norm of the primal increment.
    pub du_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    pub initial_residual: f64,
    pub final_residual: f64,
    /// Residual after each iteration.
    pub residuals: Vec<f64>,
    pub linear: Vec<SolveReport>,
    pub converged: bool,
    pub hit_max_it: bool,
}

impl NewtonReport {
    /// Largest relative residual of the inner linear solves.
    pub fn max_linear_residual(&self) -> f64 {
        self.linear.iter().map(|r| r.relative_residual).fold(0.0, f64::max)
    }
}

fn inv(x: f64) -> f64 {
    if x > 0.0 { 1.0 / x } else { 0.0 }
}

/// `N(v)`: every block row of the `2m x 2m` block matrix is
/// `(diag(v_1) ... diag(v_2m))`.
pub fn assemble_n(gradu: &GridFunction) -> SparseOperator {
    let n = gradu.n_cells();
    let c = gradu.channels();
    let v = gradu.values();
    let mut t = Vec::with_capacity(c * c * n);
    for r in 0..c {
        for d in 0..c {
            for i in 0..n {
                t.push((r * n + i, d * n + i, v[d * n + i]));
            }
        }
    }
    SparseOperator::from_triplets(c * n, c * n, &t)
}

/// Newton matrix `H_h` and right-hand side `G_h` at the current state.
pub fn assemble_h_g(
    state: &SolverState,
    data: &GridFunction,
    ops: &DiscreteOperators,
    params: &ModelParams,
) -> Result<(SparseOperator, Vec<f64>), ModelError> {
    let w = model::weights_m_chi(&state.u, data, ops, params)?;
    let r = model::data_misfit(&state.u, data, ops)?;
    let n = ops.n_cells();
    let c2 = state.p2.channels();
    if state.p1.values().len() != n || c2 != 2 * ops.channels() || state.p2.n_cells() != n {
        return Err(ModelError::Dimension { what: "dual", expected: n, got: state.p1.values().len() });
    }
    let p1 = state.p1.values();
    let p2 = state.p2.values();
    let gu = ops.grad().apply(state.u.values());

    let mut h = ops.b().clone();
    let mut g: Vec<f64> = ops.b().apply(state.u.values()).iter().map(|x| -x).collect();
    let tg = ops.t_adj().apply(data.values());
    g.iter_mut().zip(&tg).for_each(|(a, b)| *a += params.alpha2 * b);

    if params.alpha1 > 0.0 {
        let d: Vec<f64> = (0..n)
            .map(|i| {
                let im = inv(w.m1[i]);
                im * (params.alpha1 - w.chi1[i] * p1[i] * r[i] * im)
            })
            .collect();
        h = h.add(&ops.t_adj().matmul(&ops.t().scale_rows(&d)));
        let q: Vec<f64> = (0..n).map(|i| params.alpha1 * inv(w.m1[i]) * r[i]).collect();
        let tq = ops.t_adj().apply(&q);
        g.iter_mut().zip(&tq).for_each(|(a, b)| *a -= b);
    }

    if params.lambda > 0.0 {
        let mut t = Vec::with_capacity(c2 * c2 * n);
        for c in 0..c2 {
            for i in 0..n {
                let im = inv(w.m2[i]);
                t.push((c * n + i, c * n + i, params.lambda * im));
                if w.chi2[i] != 0.0 {
                    let s = w.chi2[i] * p2[c * n + i] * im * im;
                    for d in 0..c2 {
                        t.push((c * n + i, d * n + i, -s * gu[d * n + i]));
                    }
                }
            }
        }
        let mid = SparseOperator::from_triplets(c2 * n, c2 * n, &t);
        h = h.add(&ops.grad_adj().matmul(&mid.matmul(ops.grad())));
        let q: Vec<f64> = gu.iter().enumerate().map(|(j, x)| params.lambda * inv(w.m2[j % n]) * x).collect();
        let gq = ops.grad_adj().apply(&q);
        g.iter_mut().zip(&gq).for_each(|(a, b)| *a -= b);
    }
    Ok((h, g))
}

/// One Newton update followed by the dual projection.
pub fn newton_step(
    state: &SolverState,
    data: &GridFunction,
    ops: &DiscreteOperators,
    params: &ModelParams,
) -> Result<(SolverState, StepReport), NewtonError> {
    newton_step_at(state, data, ops, params, 0)
}

fn newton_step_at(
    state: &SolverState,
    data: &GridFunction,
    ops: &DiscreteOperators,
    params: &ModelParams,
    iteration: usize,
) -> Result<(SolverState, StepReport), NewtonError> {
    let (h, g) = assemble_h_g(state, data, ops, params)?;
    let (du, linear) =
        linsolve::solve(&h, &g, &params.linear).map_err(|source| NewtonError::LinearSolve { iteration, source })?;
    let w = model::weights_m_chi(&state.u, data, ops, params)?;
    let r = model::data_misfit(&state.u, data, ops)?;
    let n = ops.n_cells();
    let tdu = ops.t().apply(&du);
    let gu = ops.grad().apply(state.u.values());
    let gdu = ops.grad().apply(&du);

    let mut next = state.clone();
    for (x, d) in next.u.values_mut().iter_mut().zip(&du) {
        *x += d;
    }
    {
        let p1 = next.p1.values_mut();
        for i in 0..n {
            let im = inv(w.m1[i]);
            let dp = -p1[i]
                + im * (params.alpha1 * (r[i] + tdu[i]) - w.chi1[i] * p1[i] * r[i] * tdu[i] * im);
            p1[i] += dp;
        }
    }
    {
        let c2 = next.p2.channels();
        let mut dot = alloc::vec![0.0; n];
        for d in 0..c2 {
            for i in 0..n {
                dot[i] += gu[d * n + i] * gdu[d * n + i];
            }
        }
        let p2 = next.p2.values_mut();
        for j in 0..c2 * n {
            let i = j % n;
            let im = inv(w.m2[i]);
            let dp = -p2[j] + im * (params.lambda * (gu[j] + gdu[j]) - w.chi2[i] * p2[j] * dot[i] * im);
            p2[j] += dp;
        }
    }
    model::project_in_place(&mut next, params);
    let du_norm = crate::math::norm2(&du);
    Ok((next, StepReport { linear, du_norm }))
}

/// Runs Newton steps until the residual drops to `params.tol` or
/// `params.max_it` steps have been taken.
pub fn solve(
    initial: SolverState,
    data: &GridFunction,
    ops: &DiscreteOperators,
    params: &ModelParams,
) -> Result<(SolverState, NewtonReport), NewtonError> {
    params.validate()?;
    let mut state = model::project_duals(&initial, params);
    let initial_residual = model::residual(&state, data, ops, params)?;
    let mut res = initial_residual;
    let mut residuals = Vec::new();
    let mut linear = Vec::new();
    while !(res <= params.tol) && residuals.len() < params.max_it {
        let (next, step) = newton_step_at(&state, data, ops, params, residuals.len())?;
        state = next;
        res = model::residual(&state, data, ops, params)?;
        residuals.push(res);
        linear.push(step.linear);
    }
    let converged = res <= params.tol;
    let report = NewtonReport {
        iterations: residuals.len(),
        initial_residual,
        final_residual: res,
        residuals,
        linear,
        converged,
        hit_max_it: !converged,
    };
    Ok((state, report))
}

/// [`solve`] from the default initial state `u = T^* g`.
pub fn solve_default(
    data: &GridFunction,
    ops: &DiscreteOperators,
    params: &ModelParams,
) -> Result<(SolverState, NewtonReport), NewtonError> {
    let init = model::initial_state(data, ops, params)?;
    solve(init, data, ops, params)
}
