//! Discrete L1-L2-TV model: parameters, Huber function, primal and dual
//! energies, optimality residual and the projection onto the dual constraints.

use alloc::vec;
use alloc::vec::Vec;

use crate::linsolve::SolverOptions;
use crate::math::sqrt;
use crate::mesh::{same_mesh, GridFunction};
use crate::operators::DiscreteOperators;

/// Slack allowed when checking `|p1| <= alpha1` and `|p2| <= lambda`.
pub const FEASIBILITY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("parameter {name} must be a non-negative finite number (got {value})")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("{name} must be positive when {weight} is")]
    MissingHuber { name: &'static str, weight: &'static str },
    #[error("{what}: expected {expected} values, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("grid function lives on a different mesh than the operators")]
    MeshMismatch,
    #[error("dual variables violate |p1| <= alpha1 or |p2| <= lambda")]
    Infeasible,
}

/// Weights of
/// `alpha1 |Tu-g|_1 + alpha2/2 |Tu-g|^2 + beta/2 |Su|^2 + lambda TV(u)`,
/// the Huber parameters of the L1 and TV terms, and Newton controls.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub lambda: f64,
    pub beta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    /// Newton stopping tolerance on the residual.
    pub tol: f64,
    pub max_it: usize,
    pub linear: SolverOptions,
}

impl ModelParams {
    /// Norm exponent of the pointwise gradient magnitude.
    pub const R: u32 = 2;

    pub fn denoise() -> Self {
        Self {
            alpha1: 0.0,
            alpha2: 10.0,
            lambda: 1.0,
            beta: 0.0,
            gamma1: 2e-4,
            gamma2: 2e-4,
            tol: 1e-3,
            max_it: 100,
            linear: SolverOptions::default(),
        }
    }

    pub fn optical_flow() -> Self {
        Self { alpha1: 3.0, alpha2: 0.0, lambda: 1.0, beta: 1e-5, ..Self::denoise() }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("lambda", self.lambda),
            ("beta", self.beta),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("tol", self.tol),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(ModelError::InvalidParameter { name, value });
            }
        }
        if self.alpha1 > 0.0 && self.gamma1 == 0.0 {
            return Err(ModelError::MissingHuber { name: "gamma1", weight: "alpha1" });
        }
        if self.lambda > 0.0 && self.gamma2 == 0.0 {
            return Err(ModelError::MissingHuber { name: "gamma2", weight: "lambda" });
        }
        Ok(())
    }
}

/// Primal unknown `u` and the duals `p1` (data term) and `p2` (TV term).
#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    pub u: GridFunction,
    pub p1: GridFunction,
    pub p2: GridFunction,
}

/// `phi_gamma(x)`: `x^2 / (2 gamma)` for `|x| <= gamma`, else `|x| - gamma/2`;
/// `|x|` when `gamma = 0`.
pub fn huber(x: f64, gamma: f64) -> f64 {
    let a = x.abs();
    if gamma > 0.0 && a <= gamma {
        a * a / (2.0 * gamma)
    } else {
        a - 0.5 * gamma
    }
}

/// Euclidean norm over all channels of `w` on one cell.
pub fn frob_r(w: &GridFunction, cell: usize) -> f64 {
    sqrt((0..w.channels()).map(|k| w.value(cell, k) * w.value(cell, k)).sum())
}

/// Per-cell Euclidean norms of a channel-major vector with `n` cells.
pub fn cell_norms(values: &[f64], n: usize) -> Vec<f64> {
    let mut acc = vec![0.0; n];
    for (j, v) in values.iter().enumerate() {
        acc[j % n] += v * v;
    }
    acc.into_iter().map(sqrt).collect()
}

fn check(ops: &DiscreteOperators, f: &GridFunction, channels: usize, what: &'static str) -> Result<(), ModelError> {
    if !same_mesh(f.mesh(), ops.mesh()) {
        return Err(ModelError::MeshMismatch);
    }
    let expected = channels * ops.n_cells();
    if f.values().len() != expected {
        return Err(ModelError::Dimension { what, expected, got: f.values().len() });
    }
    Ok(())
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `T_h v - g_h`.
pub fn data_misfit(v: &GridFunction, data: &GridFunction, ops: &DiscreteOperators) -> Result<Vec<f64>, ModelError> {
    check(ops, v, ops.channels(), "primal")?;
    check(ops, data, 1, "data")?;
    Ok(sub(&ops.t().apply(v.values()), data.values()))
}

/// Per-cell contributions to the primal energy, `E_h = sum_i e_i`.
pub fn primal_energy_density(
    v: &GridFunction,
    data: &GridFunction,
    ops: &DiscreteOperators,
    params: &ModelParams,
) -> Result<Vec<f64>, ModelError> {
    let r = data_misfit(v, data, ops)?;
    let n = ops.n_cells();
    let grad = cell_norms(&ops.grad().apply(v.values()), n);
    let sv = ops.s().apply(v.values());
    let mut phi = vec![0.0; n];
    for (j, x) in sv.iter().enumerate() {
        phi[j % n] += x * x;
    }
    Ok(ops
        .mesh()
        .cells()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            c.area()
                * (params.alpha1 * huber(r[i], params.gamma1)
                    + 0.5 * params.alpha2 * r[i] * r[i]
                    + 0.5 * params.beta * phi[i]
                    + params.lambda * huber(grad[i], params.gamma2))
        })
        .collect())
}

/// Huberised primal energy `E_h(v)`.
pub fn primal_energy(
    v: &GridFunction,
    data: &GridFunction,
    ops: &DiscreteOperators,
    params: &ModelParams,
) -> Result<f64, ModelError> {
    Ok(primal_energy_density(v, data, ops, params)?.iter().sum())
}

/// `T^* p1 + grad^* p2 - alpha2 T^* g`.
pub fn dual_combination(
    p1: &GridFunction,
    p2: &GridFunction,
    data: &GridFunction,
    ops: &DiscreteOperators,
    params: &ModelParams,
) -> Result<Vec<f64>, ModelError> {
    check(ops, p1, 1, "p1")?;
    check(ops, p2, 2 * ops.channels(), "p2")?;
    check(ops, data, 1, "data")?;
    let a = ops.t_adj().apply(p1.values());
    let b = ops.grad_adj().apply(p2.values());
    let c = ops.t_adj().apply(data.values());
    Ok(a.iter().zip(&b).zip(&c).map(|((a, b), c)| a + b - params.alpha2 * c).collect())
}

/// True when `|p1_i| <= alpha1` and `|p2|_i <= lambda` up to the slack.
pub fn is_feasible(p1: &GridFunction, p2: &GridFunction, params: &ModelParams) -> bool {
    let tol = |bound: f64| bound + FEASIBILITY_SLACK * bound.max(1.0);
    let n = p1.n_cells();
    p1.values().iter().all(|x| x.abs() <= tol(params.alpha1))
        && cell_norms(p2.values(), n).iter().all(|&x| x <= tol(params.lambda))
}

/// Per-cell contributions of `-D_h`, so that `E_h - D_h` is the sum of the
/// primal and negated-dual densities. Fails on infeasible duals.
pub fn neg_dual_energy_density(
    p1: &GridFunction,
    p2: &GridFunction,
    data: &GridFunction,
    ops: &DiscreteOperators,
    params: &ModelParams,
) -> Result<Vec<f64>, ModelError> {
    let w = dual_combination(p1, p2, data, ops, params)?;
    if !is_feasible(p1, p2, params) {
        return Err(ModelError::Infeasible);
    }
    let bw = ops.apply_binv(&w);
    let n = ops.n_cells();
    let mut out = vec![0.0; n];
    for (j, (a, b)) in w.iter().zip(&bw).enumerate() {
        out[j % n] += 0.5 * a * b;
    }
    let g = data.values();
    let q1 = p1.values();
    let q2 = cell_norms(p2.values(), n);
    for (i, c) in ops.mesh().cells().iter().enumerate() {
        let mut t = out[i] - 0.5 * params.alpha2 * g[i] * g[i] + g[i] * q1[i];
        if params.alpha1 > 0.0 {
            t += params.gamma1 / (2.0 * params.alpha1) * q1[i] * q1[i];
        }
        if params.lambda > 0.0 {
            t += params.gamma2 / (2.0 * params.lambda) * q2[i] * q2[i];
        }
        out[i] = c.area() * t;
    }
    Ok(out)
}

/// Dual energy `D_h(p1, p2)`, or `-inf` for infeasible duals.
pub fn dual_energy(
    p1: &GridFunction,
    p2: &GridFunction,
    data: &GridFunction,
    ops: &DiscreteOperators,
    params: &ModelParams,
) -> Result<f64, ModelError> {
    match neg_dual_energy_density(p1, p2, data, ops, params) {
        Ok(d) => Ok(-d.iter().sum::<f64>()),
        Err(ModelError::Infeasible) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    }
}

/// Per-cell `max{gamma, |.|}` weights and active-set indicators.
#[derive(Clone, Debug, PartialEq)]
pub struct HuberWeights {
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
    pub chi1: Vec<f64>,
    pub chi2: Vec<f64>,
}

pub fn weights_m_chi(
    u: &GridFunction,
    data: &GridFunction,
    ops: &DiscreteOperators,
    params: &ModelParams,
) -> Result<HuberWeights, ModelError> {
    let r = data_misfit(u, data, ops)?;
    let g = cell_norms(&ops.grad().apply(u.values()), ops.n_cells());
    let m = |x: f64, gamma: f64| gamma.max(x);
    let chi = |x: f64, gamma: f64| if x >= gamma { 1.0 } else { 0.0 };
    Ok(HuberWeights {
        m1: r.iter().map(|x| m(x.abs(), params.gamma1)).collect(),
        m2: g.iter().map(|&x| m(x, params.gamma2)).collect(),
        chi1: r.iter().map(|x| chi(x.abs(), params.gamma1)).collect(),
        chi2: g.iter().map(|&x| chi(x, params.gamma2)).collect(),
    })
}

/// Optimality residual blocks
/// `(T^*p1 + grad^*p2 - alpha2 T^*g + B u, m1 p1 - alpha1 (Tu - g), m2 p2 - lambda grad u)`.
pub fn residual_blocks(
    state: &SolverState,
    data: &GridFunction,
    ops: &DiscreteOperators,
    params: &ModelParams,
) -> Result<[Vec<f64>; 3], ModelError> {
    let mut fu = dual_combination(&state.p1, &state.p2, data, ops, params)?;
    check(ops, &state.u, ops.channels(), "u")?;
    let bu = ops.b().apply(state.u.values());
    fu.iter_mut().zip(&bu).for_each(|(a, b)| *a += b);
    let w = weights_m_chi(&state.u, data, ops, params)?;
    let r = data_misfit(&state.u, data, ops)?;
    let f1: Vec<f64> =
        (0..r.len()).map(|i| w.m1[i] * state.p1.values()[i] - params.alpha1 * r[i]).collect();
    let n = ops.n_cells();
    let gu = ops.grad().apply(state.u.values());
    let f2: Vec<f64> = gu
        .iter()
        .zip(state.p2.values())
        .enumerate()
        .map(|(j, (g, p))| w.m2[j % n] * p - params.lambda * g)
        .collect();
    Ok([fu, f1, f2])
}

/// Mesh-weighted norm of the stacked optimality residual.
pub fn residual(
    state: &SolverState,
    data: &GridFunction,
    ops: &DiscreteOperators,
    params: &ModelParams,
) -> Result<f64, ModelError> {
    let [fu, f1, f2] = residual_blocks(state, data, ops, params)?;
    let s = ops.weights_u().inner(&fu, &fu) + ops.weights_p1().inner(&f1, &f1) + ops.weights_p2().inner(&f2, &f2);
    Ok(sqrt(s))
}

/// Radial projection of `p1` onto `|p1_i| <= alpha1` and of each cell block
/// of `p2` onto the ball of radius `lambda`.
pub fn project_duals(state: &SolverState, params: &ModelParams) -> SolverState {
    let mut out = state.clone();
    project_in_place(&mut out, params);
    out
}

pub(crate) fn project_in_place(state: &mut SolverState, params: &ModelParams) {
    for x in state.p1.values_mut() {
        if x.abs() > params.alpha1 {
            *x = if *x > 0.0 { params.alpha1 } else { -params.alpha1 };
        }
    }
    let n = state.p2.n_cells();
    let norms = cell_norms(state.p2.values(), n);
    for (j, x) in state.p2.values_mut().iter_mut().enumerate() {
        let nrm = norms[j % n];
        // Blocks rescaled once sit within rounding of the sphere; leave them.
        if nrm > params.lambda * (1.0 + 4.0 * f64::EPSILON) {
            *x *= params.lambda / nrm;
        }
    }
}

/// `u = T^* g`, `p1 = T u`, `p2 = grad u`, projected.
pub fn initial_state(
    data: &GridFunction,
    ops: &DiscreteOperators,
    params: &ModelParams,
) -> Result<SolverState, ModelError> {
    check(ops, data, 1, "data")?;
    let mesh = ops.mesh().clone();
    let m = ops.channels();
    let u = GridFunction::new(mesh.clone(), m, ops.t_adj().apply(data.values())).expect("T^* shape");
    Ok(state_from_primal(u, ops, params))
}

/// Duals `p1 = T u`, `p2 = grad u`, projected.
pub fn state_from_primal(u: GridFunction, ops: &DiscreteOperators, params: &ModelParams) -> SolverState {
    let mesh = ops.mesh().clone();
    let m = ops.channels();
    let p1 = GridFunction::new(mesh.clone(), 1, ops.t().apply(u.values())).expect("T shape");
    let p2 = GridFunction::new(mesh, 2 * m, ops.grad().apply(u.values())).expect("gradient shape");
    let mut s = SolverState { u, p1, p2 };
    project_in_place(&mut s, params);
    s
}
