//! Local primal-dual gap indicator and marking strategies.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::math::ceil;
use crate::mesh::{CellId, GridFunction, QuadMesh};
use crate::model::{self, ModelError, ModelParams, SolverState};
use crate::operators::DiscreteOperators;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MarkingError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("marking fraction {0} is outside [0, 1]")]
    InvalidFraction(f64),
}

/// Per-cell indicator shifted to be non-negative.
#[derive(Clone, Debug, PartialEq)]
pub struct IndicatorField {
    mesh: Arc<QuadMesh>,
    raw: Vec<f64>,
    shifted: Vec<f64>,
    raw_min: f64,
}

impl IndicatorField {
    /// Shifts `raw` by its minimum.
    pub fn from_raw(mesh: Arc<QuadMesh>, raw: Vec<f64>) -> Self {
        assert_eq!(raw.len(), mesh.n_cells());
        let raw_min = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let shift = if raw_min.is_finite() { raw_min } else { 0.0 };
        let shifted = raw.iter().map(|x| x - shift).collect();
        Self { mesh, raw, shifted, raw_min }
    }

    pub fn mesh(&self) -> &Arc<QuadMesh> {
        &self.mesh
    }

    /// Shifted values, `eta_i - min eta`.
    pub fn values(&self) -> &[f64] {
        &self.shifted
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn raw_min(&self) -> f64 {
        self.raw_min
    }

    /// Sum of the unshifted values, i.e. the primal-dual gap.
    pub fn raw_total(&self) -> f64 {
        self.raw.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

/// Splits the primal-dual gap `E_h(u) - D_h(p1, p2)` into per-cell terms.
pub fn local_indicator(
    state: &SolverState,
    data: &GridFunction,
    ops: &DiscreteOperators,
    params: &ModelParams,
) -> Result<IndicatorField, MarkingError> {
    let e = model::primal_energy_density(&state.u, data, ops, params)?;
    let d = model::neg_dual_energy_density(&state.p1, &state.p2, data, ops, params)?;
    let raw = e.iter().zip(&d).map(|(a, b)| a + b).collect();
    Ok(IndicatorField::from_raw(ops.mesh().clone(), raw))
}

/// Cell ids sorted by decreasing value, ties by increasing id.
fn ranking(values: &[f64], candidates: impl Iterator<Item = CellId>) -> Vec<CellId> {
    let mut ids: Vec<CellId> = candidates.collect();
    ids.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    ids
}

/// Shortest prefix of the descending ranking whose sum reaches `theta`
/// times the total.
pub fn dorfler_mark(eta: &IndicatorField, theta: f64) -> Vec<CellId> {
    dorfler_on(eta.values(), 0..eta.len(), theta)
}

/// [`dorfler_mark`] restricted to `candidates`.
pub fn dorfler_mark_among(eta: &IndicatorField, candidates: &[CellId], theta: f64) -> Vec<CellId> {
    dorfler_on(eta.values(), candidates.iter().copied(), theta)
}

fn dorfler_on(values: &[f64], candidates: impl Iterator<Item = CellId>, theta: f64) -> Vec<CellId> {
    let theta = theta.clamp(0.0, 1.0);
    let order = ranking(values, candidates);
    let total: f64 = order.iter().map(|&i| values[i]).sum();
    let target = theta * total;
    let mut acc = 0.0;
    let mut out = Vec::new();
    for &i in &order {
        if acc >= target {
            break;
        }
        acc += values[i];
        out.push(i);
    }
    out
}

/// Cells whose local squared misfit `h_i^2 (u - g)_i^2 / 2` reaches the noise
/// level `sigma^2 / 2`.
pub fn bulk_filter(state: &SolverState, data: &GridFunction, sigma: f64) -> Vec<CellId> {
    let mesh = state.u.mesh();
    let n = mesh.n_cells();
    (0..n)
        .filter(|&i| {
            let mut r2 = 0.0;
            for k in 0..state.u.channels() {
                let d = state.u.value(i, k) - data.value(i, 0);
                r2 += d * d;
            }
            let v = 0.5 * mesh.cell(i).area() * r2;
            v > 0.0 && v >= 0.5 * sigma * sigma
        })
        .collect()
}

/// The `ceil(fraction * N)` cells with the largest indicator.
pub fn fraction_mark(eta: &IndicatorField, fraction: f64) -> Result<Vec<CellId>, MarkingError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(MarkingError::InvalidFraction(fraction));
    }
    let k = (ceil(fraction * eta.len() as f64) as usize).min(eta.len());
    let mut order = ranking(eta.values(), 0..eta.len());
    order.truncate(k);
    Ok(order)
}
