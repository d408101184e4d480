//! How one refinement step changes the discrete total variation, and the
//! per-cell weights that undo the change.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::math::{powf, sqrt};
use crate::mesh::{GridFunction, MeshError, QuadMesh};
use crate::operators::assemble_gradient;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TvError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("fine mesh is not a one-step refinement of the coarse mesh")]
    NotOneStep,
    #[error("unsupported norm exponent r = {0}")]
    Exponent(u32),
    #[error("weighted TV misses the coarse TV by {gap:e}")]
    NotCompensated { gap: f64 },
}

/// Per-cell `r`-norm of the discrete gradient over all channels.
pub fn gradient_norms(u: &GridFunction, r: u32) -> Result<Vec<f64>, TvError> {
    if r == 0 {
        return Err(TvError::Exponent(r));
    }
    let mesh = u.mesh();
    let n = mesh.n_cells();
    let g = assemble_gradient(mesh, u.channels()).apply(u.values());
    let mut acc = alloc::vec![0.0; n];
    for (j, x) in g.iter().enumerate() {
        acc[j % n] += crate::math::powi(x.abs(), r);
    }
    Ok(acc
        .into_iter()
        .map(|s| match r {
            1 => s,
            2 => sqrt(s),
            _ => powf(s, 1.0 / r as f64),
        })
        .collect())
}

/// `sum_i h_i^2 |grad u|_{F,r,i}`.
pub fn discrete_tv(u: &GridFunction, r: u32) -> Result<f64, TvError> {
    let w = alloc::vec![1.0; u.n_cells()];
    weighted_tv(u, &w, r)
}

/// `sum_i h_i^2 mu_i |grad u|_{F,r,i}`.
pub fn weighted_tv(u: &GridFunction, mu: &[f64], r: u32) -> Result<f64, TvError> {
    let g = gradient_norms(u, r)?;
    if mu.len() != g.len() {
        return Err(MeshError::LengthMismatch { expected: g.len(), got: mu.len() }.into());
    }
    Ok(u.mesh().cells().iter().zip(&g).zip(mu).map(|((c, g), m)| c.area() * m * g).sum())
}

fn check_one_step(coarse: &QuadMesh, fine: &QuadMesh) -> Result<Vec<usize>, TvError> {
    let parent = coarse.ancestors_in(fine).map_err(|_| TvError::NotOneStep)?;
    for (cell, &p) in fine.cells().iter().zip(&parent) {
        if cell.key.level > coarse.cell(p).key.level + 1 {
            return Err(TvError::NotOneStep);
        }
    }
    Ok(parent)
}

/// Weights on the fine mesh making the weighted TV of the prolongation equal
/// to the TV of `u`. Children of one coarse cell share a weight; cells whose
/// averaged fine gradient vanishes get weight 1.
pub fn compute_mu(u: &GridFunction, fine: &Arc<QuadMesh>, r: u32) -> Result<Vec<f64>, TvError> {
    let coarse = u.mesh();
    let parent = check_one_step(coarse, fine)?;
    let fine_u = u.project_fine(fine)?;
    let coarse_norms = gradient_norms(u, r)?;
    let fine_norms = gradient_norms(&fine_u, r)?;
    let fine_norm_fn = GridFunction::new(fine.clone(), 1, fine_norms)?;
    let averaged = fine_norm_fn.project_coarse(coarse)?;
    let mu_coarse: Vec<f64> = coarse_norms
        .iter()
        .zip(averaged.values())
        .map(|(&num, &den)| if den != 0.0 { num / den } else { 1.0 })
        .collect();
    Ok(parent.iter().map(|&p| mu_coarse[p]).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompensationReport {
    pub tv_coarse: f64,
    /// Unweighted TV of the prolongation on the fine mesh.
    pub tv_fine: f64,
    pub tv_fine_weighted: f64,
    pub mu: Vec<f64>,
    pub mu_min: f64,
    pub mu_max: f64,
    pub mu_mean: f64,
}

/// Checks `TV(u) = TV_mu(pi u)` to `1e-10 (1 + TV)`.
pub fn verify_compensation(u: &GridFunction, fine: &Arc<QuadMesh>, r: u32) -> Result<CompensationReport, TvError> {
    let mu = compute_mu(u, fine, r)?;
    let fine_u = u.project_fine(fine)?;
    let tv_coarse = discrete_tv(u, r)?;
    let tv_fine = discrete_tv(&fine_u, r)?;
    let tv_fine_weighted = weighted_tv(&fine_u, &mu, r)?;
    let gap = (tv_coarse - tv_fine_weighted).abs();
    if gap > 1e-10 * (1.0 + tv_coarse.abs()) {
        return Err(TvError::NotCompensated { gap });
    }
    let mu_min = mu.iter().copied().fold(f64::INFINITY, f64::min);
    let mu_max = mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mu_mean = mu.iter().sum::<f64>() / mu.len().max(1) as f64;
    Ok(CompensationReport { tv_coarse, tv_fine, tv_fine_weighted, mu, mu_min, mu_max, mu_mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Domain;
    use alloc::vec;
    use proptest::prelude::*;

    fn unit(n: usize) -> Arc<QuadMesh> {
        Arc::new(QuadMesh::new_uniform(n, n, Domain::unit_square()).unwrap())
    }

    #[test]
    fn tv_of_columns() {
        let m = unit(2);
        let u = GridFunction::new(m, 1, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        assert!((discrete_tv(&u, 1).unwrap() - 1.0).abs() < 1e-15);
        let c = GridFunction::constant(unit(3), 1, 2.0);
        assert_eq!(discrete_tv(&c, 2).unwrap(), 0.0);
    }

    #[test]
    fn one_refined_cell_weights() {
        let coarse = unit(2);
        let fine = Arc::new(coarse.refine(&[3]));
        let u = GridFunction::new(coarse.clone(), 1, vec![0.3, -1.1, 0.7, 2.0]).unwrap();
        let mu = compute_mu(&u, &fine, 1).unwrap();
        assert_eq!(mu.len(), 7);
        assert!((mu[0] - 1.0).abs() < 1e-15);
        assert!((mu[1] - 0.75).abs() < 1e-15);
        assert!((mu[2] - 0.75).abs() < 1e-15);
        assert!(mu[3..].iter().all(|&m| m == 1.0));
        verify_compensation(&u, &fine, 1).unwrap();
    }

    #[test]
    fn uniform_refinement_weights() {
        let coarse = unit(4);
        let fine = Arc::new(coarse.refine_all());
        let u = GridFunction::from_fn(coarse.clone(), 1, |c, _| libm::sin(5.0 * c.center[0]) + c.center[1].powi(2));
        let mu1 = compute_mu(&u, &fine, 1).unwrap();
        assert!(mu1.iter().all(|&m| (m - 1.0).abs() < 1e-12));
        let mu2 = compute_mu(&u, &fine, 2).unwrap();
        assert!(mu2.iter().all(|&m| m > 0.0 && m <= 1.0 + 1e-12));
        assert!(mu2.iter().any(|&m| m < 1.0 - 1e-6));
        let rep = verify_compensation(&u, &fine, 2).unwrap();
        assert!(rep.tv_fine > rep.tv_coarse);
    }

    #[test]
    fn multi_level_refinement_rejected() {
        let coarse = unit(2);
        let fine = Arc::new(coarse.refine_all().refine_all());
        let u = GridFunction::zeros(coarse, 1);
        assert_eq!(compute_mu(&u, &fine, 1), Err(TvError::NotOneStep));
    }

    #[test]
    fn constant_is_trivially_compensated() {
        let coarse = unit(4);
        let fine = Arc::new(coarse.refine(&[0, 5, 6]));
        let u = GridFunction::constant(coarse, 1, 0.25);
        let rep = verify_compensation(&u, &fine, 2).unwrap();
        assert_eq!(rep.tv_coarse, 0.0);
        assert_eq!(rep.tv_fine_weighted, 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn refinement_never_lowers_tv(vals in prop::collection::vec(-1.0..1.0f64, 16)) {
            let coarse = unit(4);
            let fine = Arc::new(coarse.refine_all());
            let u = GridFunction::new(coarse, 1, vals).unwrap();
            let tv = discrete_tv(&u, 2).unwrap();
            let up = u.project_fine(&fine).unwrap();
            prop_assert!(discrete_tv(&up, 2).unwrap() >= tv - 1e-12);
            let tv1 = discrete_tv(&u, 1).unwrap();
            prop_assert!((discrete_tv(&up, 1).unwrap() - tv1).abs() <= 1e-12 * (1.0 + tv1));
            prop_assert!(tv <= tv1 + 1e-12 && tv1 <= core::f64::consts::SQRT_2 * tv + 1e-12);
            verify_compensation(&u, &fine, 2).unwrap();
        }
    }
}
