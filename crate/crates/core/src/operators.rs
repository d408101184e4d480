//! Finite-difference operators on balanced quad-tree meshes.
//!
//! Vectors of an `m`-channel grid function are channel-major (see
//! [`GridFunction`]). Gradients of `m` channels have `2m` channels; the
//! entry of derivative direction `k` (x = 0, y = 1) of channel `n` on cell `i`
//! sits at `(2n + k) N + i`.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::linsolve::DirectFactor;
use crate::mesh::{Axis, Facing, GridFunction, MeshError, QuadMesh, Side};
use crate::model::ModelParams;
use crate::sparse::{DiagonalWeights, SparseOperator};

/// Ridge added to `B_h` when it cannot be factorised reliably.
pub const B_RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OperatorError {
    #[error("optical-flow data term needs the image f1")]
    MissingFrame,
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("B_h is singular even after regularisation (alpha2 = {alpha2}, beta = {beta})")]
    SingularB { alpha2: f64, beta: f64 },
}

/// The operator `T` of the data fidelity `T u ~ g`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataTerm {
    /// `T = I` on one channel.
    Denoise,
    /// Linearised brightness constancy: `T u = f_x u_x + f_y u_y`, two channels.
    OpticalFlow,
}

impl DataTerm {
    pub fn channels(self) -> usize {
        match self {
            DataTerm::Denoise => 1,
            DataTerm::OpticalFlow => 2,
        }
    }
}

/// The operator `S` of the smooth penalty `beta/2 |S u|^2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regularizer {
    Identity,
    Gradient,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum BackwardBoundary {
    /// Zero ghosts and zero values on the far side.
    Dirichlet,
    /// Ghost equals the cell value.
    Neumann,
}

/// One-sided difference along `axis`.
///
/// Forward rows vanish at the boundary. Backward rows use zero ghost values
/// and treat cells on the forward boundary as zero, which makes the backward
/// difference the negative transpose of the forward one on uniform meshes.
pub fn assemble_derivative(mesh: &QuadMesh, axis: Axis, side: Side) -> SparseOperator {
    derivative(mesh, axis, side, BackwardBoundary::Dirichlet)
}

fn derivative(mesh: &QuadMesh, axis: Axis, side: Side, bc: BackwardBoundary) -> SparseOperator {
    let n = mesh.n_cells();
    let mut t = Vec::with_capacity(4 * n);
    let masked: Vec<bool> = match (side, bc) {
        (Side::Backward, BackwardBoundary::Dirichlet) => {
            (0..n).map(|i| matches!(mesh.facing(i, axis, Side::Forward), Facing::Boundary)).collect()
        }
        _ => vec![false; n],
    };
    let mut push = |r: usize, c: usize, v: f64| {
        if !masked[c] {
            t.push((r, c, v));
        }
    };
    for i in 0..n {
        let h = mesh.cell(i).h;
        let facing = mesh.facing(i, axis, side);
        let s = match side {
            Side::Forward => 1.0,
            Side::Backward => -1.0,
        };
        match facing {
            Facing::Boundary => {
                if side == Side::Backward && bc == BackwardBoundary::Dirichlet {
                    push(i, i, 1.0 / h);
                }
            }
            Facing::Same(j) => {
                push(i, j, s / h);
                push(i, i, -s / h);
            }
            Facing::Finer(a, b) => {
                let d = 0.75 * h;
                push(i, a, 0.5 * s / d);
                push(i, b, 0.5 * s / d);
                push(i, i, -s / d);
            }
            Facing::Coarser { neighbor, companion, .. } => {
                let d = 3.0 * h;
                push(i, neighbor, 2.0 * s / d);
                push(i, companion, -s / d);
                push(i, i, -s / d);
            }
        }
    }
    SparseOperator::from_triplets(n, n, &t)
}

/// Average of the forward and backward differences.
pub fn assemble_centered(mesh: &QuadMesh, axis: Axis) -> SparseOperator {
    let f = assemble_derivative(mesh, axis, Side::Forward);
    let b = assemble_derivative(mesh, axis, Side::Backward);
    f.add(&b).scale(0.5)
}

/// Centered difference for image data: the backward half uses reflecting
/// ghosts instead of zero ghosts, so a smooth image has no spurious jump at
/// the boundary.
pub fn assemble_image_derivative(mesh: &QuadMesh, axis: Axis) -> SparseOperator {
    let f = derivative(mesh, axis, Side::Forward, BackwardBoundary::Neumann);
    let b = derivative(mesh, axis, Side::Backward, BackwardBoundary::Neumann);
    f.add(&b).scale(0.5)
}

/// Discrete gradient of an `m`-channel function.
pub fn assemble_gradient(mesh: &QuadMesh, m: usize) -> SparseOperator {
    let dx = assemble_derivative(mesh, Axis::X, Side::Forward);
    let dy = assemble_derivative(mesh, Axis::Y, Side::Forward);
    let block = SparseOperator::vstack(&[&dx, &dy]);
    SparseOperator::block_diag(&vec![&block; m])
}

/// Discrete divergence of a `2m`-channel field.
pub fn assemble_divergence(mesh: &QuadMesh, m: usize) -> SparseOperator {
    let dx = assemble_derivative(mesh, Axis::X, Side::Backward);
    let dy = assemble_derivative(mesh, Axis::Y, Side::Backward);
    let block = SparseOperator::hstack(&[&dx, &dy]);
    SparseOperator::block_diag(&vec![&block; m])
}

/// `W_in^-1 A^T W_out`, the adjoint under the weighted inner products.
pub fn adjoint(op: &SparseOperator, win: &DiagonalWeights, wout: &DiagonalWeights) -> SparseOperator {
    DiagonalWeights::adjoint(op, win, wout)
}

/// Cell areas `h_i^2` repeated for each of `channels` channels.
pub fn cell_weights(mesh: &QuadMesh, channels: usize) -> DiagonalWeights {
    let areas: Vec<f64> = mesh.cells().iter().map(|c| c.area()).collect();
    let mut w = Vec::with_capacity(channels * areas.len());
    for _ in 0..channels {
        w.extend_from_slice(&areas);
    }
    DiagonalWeights::new(w)
}

/// The data operator `T_h`: identity for denoising; for optical flow the
/// pointwise product with the centered derivatives of `f1`.
pub fn assemble_t(kind: DataTerm, mesh: &QuadMesh, f1: Option<&GridFunction>) -> Result<SparseOperator, OperatorError> {
    let n = mesh.n_cells();
    match kind {
        DataTerm::Denoise => Ok(SparseOperator::identity(n)),
        DataTerm::OpticalFlow => {
            let f1 = f1.ok_or(OperatorError::MissingFrame)?;
            if **f1.mesh() != *mesh || f1.channels() != 1 {
                return Err(OperatorError::Mesh(MeshError::MeshMismatch));
            }
            let fx = assemble_image_derivative(mesh, Axis::X).apply(f1.values());
            let fy = assemble_image_derivative(mesh, Axis::Y).apply(f1.values());
            let mut t = Vec::with_capacity(2 * n);
            for i in 0..n {
                t.push((i, i, fx[i]));
                t.push((i, n + i, fy[i]));
            }
            Ok(SparseOperator::from_triplets(n, 2 * n, &t))
        }
    }
}

/// `alpha2 T^* T + beta S^* S` with weighted adjoints.
pub fn assemble_b(
    params: &ModelParams,
    t: &SparseOperator,
    t_adj: &SparseOperator,
    s: &SparseOperator,
    s_adj: &SparseOperator,
) -> SparseOperator {
    let n = t.cols();
    let mut b = SparseOperator::zeros(n, n);
    if params.alpha2 != 0.0 {
        b = b.add(&t_adj.matmul(t).scale(params.alpha2));
    }
    if params.beta != 0.0 {
        b = b.add(&s_adj.matmul(s).scale(params.beta));
    }
    b
}

/// All operators of one discrete problem on one mesh.
#[derive(Debug)]
pub struct DiscreteOperators {
    mesh: Arc<QuadMesh>,
    kind: DataTerm,
    regularizer: Regularizer,
    t: SparseOperator,
    t_adj: SparseOperator,
    grad: SparseOperator,
    grad_adj: SparseOperator,
    s: SparseOperator,
    b: SparseOperator,
    b_factor: DirectFactor,
    ridge: f64,
    w_u: DiagonalWeights,
    w_p1: DiagonalWeights,
    w_p2: DiagonalWeights,
}

impl DiscreteOperators {
    /// Assembles `T_h`, `grad_h`, `S_h` (identity for denoising, gradient for
    /// optical flow) and factorises `B_h`.
    pub fn new(
        mesh: Arc<QuadMesh>,
        kind: DataTerm,
        f1: Option<&GridFunction>,
        params: &ModelParams,
    ) -> Result<Self, OperatorError> {
        let regularizer = match kind {
            DataTerm::Denoise => Regularizer::Identity,
            DataTerm::OpticalFlow => Regularizer::Gradient,
        };
        Self::with_regularizer(mesh, kind, regularizer, f1, params)
    }

    pub fn with_regularizer(
        mesh: Arc<QuadMesh>,
        kind: DataTerm,
        regularizer: Regularizer,
        f1: Option<&GridFunction>,
        params: &ModelParams,
    ) -> Result<Self, OperatorError> {
        let m = kind.channels();
        let w_u = cell_weights(&mesh, m);
        let w_p1 = cell_weights(&mesh, 1);
        let w_p2 = cell_weights(&mesh, 2 * m);
        let t = assemble_t(kind, &mesh, f1)?;
        let t_adj = adjoint(&t, &w_u, &w_p1);
        let grad = assemble_gradient(&mesh, m);
        let grad_adj = adjoint(&grad, &w_u, &w_p2);
        let (s, s_adj) = match regularizer {
            Regularizer::Identity => (SparseOperator::identity(m * mesh.n_cells()), SparseOperator::identity(m * mesh.n_cells())),
            Regularizer::Gradient => (grad.clone(), grad_adj.clone()),
        };
        let b = assemble_b(params, &t, &t_adj, &s, &s_adj);
        let (b_factor, ridge) = factor_b(&b, params)?;
        let b = if ridge > 0.0 { b.add(&SparseOperator::identity(b.rows()).scale(ridge)) } else { b };
        Ok(Self { mesh, kind, regularizer, t, t_adj, grad, grad_adj, s, b, b_factor, ridge, w_u, w_p1, w_p2 })
    }

    pub fn mesh(&self) -> &Arc<QuadMesh> {
        &self.mesh
    }

    pub fn kind(&self) -> DataTerm {
        self.kind
    }

    pub fn regularizer(&self) -> Regularizer {
        self.regularizer
    }

    /// Channels `m` of the unknown.
    pub fn channels(&self) -> usize {
        self.kind.channels()
    }

    pub fn n_cells(&self) -> usize {
        self.mesh.n_cells()
    }

    pub fn t(&self) -> &SparseOperator {
        &self.t
    }

    pub fn t_adj(&self) -> &SparseOperator {
        &self.t_adj
    }

    pub fn grad(&self) -> &SparseOperator {
        &self.grad
    }

    pub fn grad_adj(&self) -> &SparseOperator {
        &self.grad_adj
    }

    pub fn s(&self) -> &SparseOperator {
        &self.s
    }

    /// `B_h`, including the ridge when one was needed.
    pub fn b(&self) -> &SparseOperator {
        &self.b
    }

    /// Ridge actually added before factorising (0 when none was needed).
    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// `(B_h + ridge I)^-1 x`.
    pub fn apply_binv(&self, x: &[f64]) -> Vec<f64> {
        self.b_factor.solve(x)
    }

    pub fn weights_u(&self) -> &DiagonalWeights {
        &self.w_u
    }

    pub fn weights_p1(&self) -> &DiagonalWeights {
        &self.w_p1
    }

    pub fn weights_p2(&self) -> &DiagonalWeights {
        &self.w_p2
    }
}

fn factor_b(b: &SparseOperator, params: &ModelParams) -> Result<(DirectFactor, f64), OperatorError> {
    let n = b.rows();
    // Deterministic probe vector; singular factors give non-finite or
    // inaccurate solutions rather than an error.
    let probe: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * libm::sin(1.7 * i as f64 + 0.3)).collect();
    let rhs = b.apply(&probe);
    let accurate = |f: &DirectFactor, rhs: &[f64], want: &[f64]| {
        let x = f.solve(rhs);
        if !x.iter().all(|v| v.is_finite()) {
            return false;
        }
        let err = crate::math::norm2(&x.iter().zip(want).map(|(a, b)| a - b).collect::<Vec<_>>());
        err <= 1e-6 * crate::math::norm2(want)
    };
    if n > 0 && b.nnz() > 0 {
        if let Ok(f) = DirectFactor::new(b) {
            if accurate(&f, &rhs, &probe) {
                return Ok((f, 0.0));
            }
        }
    }
    let ridged = b.add(&SparseOperator::identity(n).scale(B_RIDGE));
    let singular = OperatorError::SingularB { alpha2: params.alpha2, beta: params.beta };
    let f = DirectFactor::new(&ridged).map_err(|_| singular.clone())?;
    let rhs = ridged.apply(&probe);
    if n > 0 && !f.solve(&rhs).iter().all(|v| v.is_finite()) {
        return Err(singular);
    }
    Ok((f, B_RIDGE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{CellKey, Domain, NodeClass};
    use proptest::prelude::*;

    fn eval(mesh: &QuadMesh, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        mesh.cells().iter().map(|c| f(c.center[0], c.center[1])).collect()
    }

    /// Mesh on [0,4]^2 whose x and y stencils hit every dangling class.
    pub(crate) fn dangling_mesh(extra_levels: usize) -> QuadMesh {
        let mut m = QuadMesh::new_uniform(4, 4, Domain::new(0.0, 0.0, 4.0, 4.0)).unwrap();
        m = m.refine(&[5, 6, 9, 10]);
        for _ in 0..extra_levels {
            m = m.refine_all();
        }
        m
    }

    /// Rows whose stencil touches neither the boundary nor a masked cell.
    fn interior(mesh: &QuadMesh, axis: Axis, side: Side) -> Vec<usize> {
        let at_end = |j: usize| matches!(mesh.facing(j, axis, Side::Forward), Facing::Boundary);
        let stencil = derivative(mesh, axis, side, BackwardBoundary::Neumann);
        (0..mesh.n_cells())
            .filter(|&i| !matches!(mesh.facing(i, axis, Side::Backward), Facing::Boundary) && !at_end(i))
            .filter(|&i| side == Side::Forward || stencil.row(i).0.iter().all(|&j| !at_end(j)))
            .collect()
    }

    #[test]
    fn dangling_mesh_has_every_class() {
        let m = dangling_mesh(0);
        let mut seen = Vec::new();
        for i in 0..m.n_cells() {
            for axis in [Axis::X, Axis::Y] {
                for side in [Side::Forward, Side::Backward] {
                    let c = m.classify(i, axis, side);
                    if !seen.contains(&c) {
                        seen.push(c);
                    }
                }
            }
        }
        for c in [NodeClass::Regular, NodeClass::Dangling1, NodeClass::Dangling2, NodeClass::Dangling3] {
            assert!(seen.contains(&c), "{c:?} missing");
        }
    }

    #[test]
    fn affine_reproduction_every_class() {
        let m = dangling_mesh(0);
        for side in [Side::Forward, Side::Backward] {
            let dx = assemble_derivative(&m, Axis::X, side);
            let dy = assemble_derivative(&m, Axis::Y, side);
            let ux = dx.apply(&eval(&m, |x, _| x));
            let uy = dx.apply(&eval(&m, |_, y| y));
            let vy = dy.apply(&eval(&m, |_, y| y));
            let vx = dy.apply(&eval(&m, |x, _| x));
            let c = dx.apply(&vec![1.0; m.n_cells()]);
            for i in interior(&m, Axis::X, side) {
                assert!((ux[i] - 1.0).abs() < 1e-12, "x slope at {i} ({side:?})");
                assert!(uy[i].abs() < 1e-12);
                assert!(c[i].abs() < 1e-12);
            }
            for i in interior(&m, Axis::Y, side) {
                assert!((vy[i] - 1.0).abs() < 1e-12);
                assert!(vx[i].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_boundary_rows_vanish() {
        let m = dangling_mesh(0);
        let dx = assemble_derivative(&m, Axis::X, Side::Forward);
        for i in 0..m.n_cells() {
            if m.classify(i, Axis::X, Side::Forward) == NodeClass::BoundaryNeumann {
                assert_eq!(dx.row(i).0.len(), 0);
            }
        }
    }

    #[test]
    fn explicit_dangling_coefficients() {
        // Left root refined; lower-right child is a Dangling2 node.
        let m = QuadMesh::new_uniform(2, 1, Domain::new(0.0, 0.0, 2.0, 1.0)).unwrap().refine(&[0]);
        let dx = assemble_derivative(&m, Axis::X, Side::Forward);
        let lower = m.id_of(CellKey::new(1, 1, 1)).unwrap();
        let upper = m.id_of(CellKey::new(1, 1, 0)).unwrap();
        let h = 0.5;
        assert!((dx.get(lower, 4) - 2.0 / (3.0 * h)).abs() < 1e-14);
        assert!((dx.get(lower, upper) + 1.0 / (3.0 * h)).abs() < 1e-14);
        assert!((dx.get(lower, lower) + 1.0 / (3.0 * h)).abs() < 1e-14);
        // The coarse cell sees two finer cells to its west.
        let bx = assemble_derivative(&m, Axis::X, Side::Backward);
        let d = 0.75;
        assert!((bx.get(4, upper) + 0.5 / d).abs() < 1e-14);
        assert!((bx.get(4, lower) + 0.5 / d).abs() < 1e-14);
    }

    #[test]
    fn quadratic_error_is_first_order() {
        let f = |x: f64, _y: f64| x * x;
        let mut errs = Vec::new();
        for lvl in 0..2 {
            let m = dangling_mesh(lvl);
            let d = assemble_derivative(&m, Axis::X, Side::Forward).apply(&eval(&m, f));
            let err = interior(&m, Axis::X, Side::Forward)
                .into_iter()
                .map(|i| (d[i] - 2.0 * m.cell(i).center[0]).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        let ratio = errs[0] / errs[1];
        assert!((1.8..=2.2).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn uniform_gradient_divergence_adjoint() {
        let m = QuadMesh::new_uniform(5, 4, Domain::new(0.0, 0.0, 2.5, 2.0)).unwrap();
        for ch in [1, 2] {
            let g = assemble_gradient(&m, ch);
            let d = assemble_divergence(&m, ch);
            let ga = adjoint(&g, &cell_weights(&m, ch), &cell_weights(&m, 2 * ch));
            let diff = ga.add(&d);
            assert!(diff.triplets().iter().all(|t| t.2.abs() <= 1e-12));
        }
    }

    #[test]
    fn gradient_layout_two_channels() {
        let m = QuadMesh::new_uniform(3, 3, Domain::new(0.0, 0.0, 3.0, 3.0)).unwrap();
        let n = m.n_cells();
        let mut u = eval(&m, |x, _| x);
        u.extend(eval(&m, |_, y| 2.0 * y));
        let g = assemble_gradient(&m, 2).apply(&u);
        // Centre cell: channel 0 has slope (1, 0), channel 1 has (0, 2).
        assert_eq!([g[4], g[n + 4], g[2 * n + 4], g[3 * n + 4]], [1.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn gradient_matches_dense_oracle() {
        let m = QuadMesh::new_uniform(3, 3, Domain::unit_square()).unwrap();
        let h = 1.0 / 3.0;
        let u: Vec<f64> = (0..9).map(|i| libm::cos(1.3 * i as f64)).collect();
        let g = assemble_gradient(&m, 1).apply(&u);
        for y in 0..3 {
            for x in 0..3 {
                let i = 3 * y + x;
                let gx = if x < 2 { (u[i + 1] - u[i]) / h } else { 0.0 };
                let gy = if y < 2 { (u[i + 3] - u[i]) / h } else { 0.0 };
                assert!((g[i] - gx).abs() < 1e-12);
                assert!((g[9 + i] - gy).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nonuniform_mesh_breaks_adjointness() {
        let m = QuadMesh::new_uniform(2, 2, Domain::unit_square()).unwrap().refine(&[0]);
        let g = assemble_gradient(&m, 1);
        let d = assemble_divergence(&m, 1);
        let ga = adjoint(&g, &cell_weights(&m, 1), &cell_weights(&m, 2));
        let gap = ga.add(&d).triplets().iter().map(|t| t.2.abs()).fold(0.0, f64::max);
        assert!(gap > 1e-8);
    }

    #[test]
    fn centered_is_mean_of_one_sided() {
        let m = dangling_mesh(0);
        let u: Vec<f64> = (0..m.n_cells()).map(|i| libm::sin(0.7 * i as f64)).collect();
        let c = assemble_centered(&m, Axis::Y).apply(&u);
        let f = assemble_derivative(&m, Axis::Y, Side::Forward).apply(&u);
        let b = assemble_derivative(&m, Axis::Y, Side::Backward).apply(&u);
        for i in 0..u.len() {
            assert!((c[i] - 0.5 * (f[i] + b[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn optical_flow_t() {
        let m = Arc::new(QuadMesh::new_uniform(4, 4, Domain::pixels(4, 4)).unwrap());
        assert_eq!(assemble_t(DataTerm::OpticalFlow, &m, None), Err(OperatorError::MissingFrame));
        let flat = GridFunction::constant(m.clone(), 1, 0.3);
        let t = assemble_t(DataTerm::OpticalFlow, &m, Some(&flat)).unwrap();
        assert_eq!(t.nnz(), 0);
        let ramp = GridFunction::from_fn(m.clone(), 1, |c, _| c.center[0]);
        let t = assemble_t(DataTerm::OpticalFlow, &m, Some(&ramp)).unwrap();
        let n = m.n_cells();
        let mut u = vec![0.7; n];
        u.extend(vec![-0.4; n]);
        let tu = t.apply(&u);
        for (i, c) in m.cells().iter().enumerate() {
            let x = c.center[0] as usize;
            if x > 0 && x < 3 {
                assert!((tu[i] - 0.7).abs() < 1e-12);
            }
        }
        assert_eq!(assemble_t(DataTerm::Denoise, &m, None).unwrap(), SparseOperator::identity(n));
    }

    #[test]
    fn b_for_denoising_is_scaled_identity() {
        let m = Arc::new(QuadMesh::new_uniform(4, 4, Domain::unit_square()).unwrap());
        let p = ModelParams { alpha2: 10.0, beta: 0.0, ..ModelParams::denoise() };
        let ops = DiscreteOperators::new(m.clone(), DataTerm::Denoise, None, &p).unwrap();
        assert_eq!(ops.b(), &SparseOperator::identity(16).scale(10.0));
        assert_eq!(ops.ridge(), 0.0);
        let x = ops.apply_binv(&vec![1.0; 16]);
        assert!(x.iter().all(|v| (v - 0.1).abs() < 1e-15));
    }

    #[test]
    fn b_for_optical_flow_is_regularised() {
        let m = Arc::new(QuadMesh::new_uniform(4, 4, Domain::pixels(4, 4)).unwrap());
        let f1 = GridFunction::from_fn(m.clone(), 1, |c, _| libm::sin(c.center[0]) * libm::cos(0.6 * c.center[1]));
        let p = ModelParams::optical_flow();
        let ops = DiscreteOperators::new(m.clone(), DataTerm::OpticalFlow, Some(&f1), &p).unwrap();
        assert_eq!(ops.ridge(), B_RIDGE);
        let b = ops.b();
        let n = b.rows();
        for (r, c, v) in b.triplets() {
            assert!((v - b.get(c, r)).abs() <= 1e-12 * (1.0 + v.abs()));
        }
        let rhs: Vec<f64> = (0..n).map(|i| libm::cos(i as f64)).collect();
        let x = ops.apply_binv(&rhs);
        assert!(crate::linsolve::relative_residual(b, &x, &rhs) <= 1e-10);
    }

    proptest! {
        #[test]
        fn adjoint_identity(
            entries in prop::collection::vec((0..8usize, 0..8usize, -2.0..2.0f64), 1..30),
            win in prop::collection::vec(0.1..3.0f64, 8),
            wout in prop::collection::vec(0.1..3.0f64, 8),
            u in prop::collection::vec(-1.0..1.0f64, 8),
            p in prop::collection::vec(-1.0..1.0f64, 8),
        ) {
            let a = SparseOperator::from_triplets(8, 8, &entries);
            let (wi, wo) = (DiagonalWeights::new(win), DiagonalWeights::new(wout));
            let at = adjoint(&a, &wi, &wo);
            let lhs = wo.inner(&a.apply(&u), &p);
            let rhs = wi.inner(&u, &at.apply(&p));
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            let back = adjoint(&at, &wo, &wi);
            for (r, c, v) in a.triplets() {
                prop_assert!((back.get(r, c) - v).abs() <= 1e-12 * (1.0 + v.abs()));
            }
        }
    }
}
