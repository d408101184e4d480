use alloc::sync::Arc;
use alloc::vec::Vec;

use super::{adaptive_denoise_loop, coarse_pixel_mesh, pixel_data, LevelReport, PipelineConfig, PipelineError};
use crate::mesh::{Domain, GridFunction, QuadMesh};
use crate::model::SolverState;
use crate::newton::{self, NewtonReport};
use crate::operators::{DataTerm, DiscreteOperators};
use crate::raster::Raster;

/// Output of [`denoise_adaptive`].
#[derive(Clone, Debug)]
pub struct DenoiseRun {
    pub state: SolverState,
    /// Every mesh a solve ran on, coarsest first.
    pub meshes: Vec<Arc<QuadMesh>>,
    /// The reconstruction on each of `meshes`.
    pub solutions: Vec<GridFunction>,
    pub levels: Vec<LevelReport>,
}

impl DenoiseRun {
    pub fn u(&self) -> &GridFunction {
        &self.state.u
    }

    /// The reconstruction evaluated on the pixel grid.
    pub fn image(&self, width: usize, height: usize) -> Raster {
        self.state.u.to_raster(0, width, height).expect("pixel-aligned mesh")
    }
}

/// Adaptive reconstruction starting on the `2^K`-times coarsened grid, with
/// `K = cfg.max_refinements`.
pub fn denoise_adaptive(image: &Raster, cfg: &PipelineConfig) -> Result<DenoiseRun, PipelineError> {
    let k = cfg.max_refinements;
    let mesh0 = coarse_pixel_mesh(image.width(), image.height(), k)?;
    let run = adaptive_denoise_loop(mesh0, &mut |m| pixel_data(image, m), cfg, k as u8)?;
    Ok(DenoiseRun { state: run.state, meshes: run.meshes, solutions: run.solutions, levels: run.levels })
}

/// One solve on the pixel grid.
pub fn denoise_uniform(image: &Raster, cfg: &PipelineConfig) -> Result<(SolverState, NewtonReport), PipelineError> {
    cfg.validate()?;
    let mesh = Arc::new(QuadMesh::new_uniform(image.width(), image.height(), Domain::pixels(image.width(), image.height()))?);
    let data = pixel_data(image, &mesh)?;
    let ops = DiscreteOperators::new(mesh, DataTerm::Denoise, None, &cfg.params)?;
    Ok(newton::solve_default(&data, &ops, &cfg.params)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::psnr;
    use crate::model::ModelParams;
    use crate::pipelines::add_gaussian_noise;

    fn squares(n: usize) -> Raster {
        Raster::from_fn(n, n, |x, y| {
            let a = (n / 4..n / 2).contains(&x) && (n / 4..3 * n / 4).contains(&y);
            let b = (5 * n / 8..7 * n / 8).contains(&x) && (n / 8..n / 2).contains(&y);
            0.2 + 0.6 * a as u8 as f64 + 0.4 * b as u8 as f64
        })
    }

    #[test]
    fn constant_image_is_fixed() {
        let img = Raster::filled(16, 16, 0.4);
        let cfg = PipelineConfig { max_refinements: 2, ..PipelineConfig::denoise() };
        let (s, _) = denoise_uniform(&img, &cfg).unwrap();
        assert!(s.u.values().iter().all(|&v| (v - 0.4).abs() < 1e-9));
        let run = denoise_adaptive(&img, &cfg).unwrap();
        assert_eq!(run.meshes.len(), 1);
        assert!(run.image(16, 16).data().iter().all(|&v| (v - 0.4).abs() < 1e-9));
    }

    #[test]
    fn zero_lambda_returns_data() {
        let img = squares(16);
        let cfg = PipelineConfig { params: ModelParams { lambda: 0.0, ..ModelParams::denoise() }, ..PipelineConfig::denoise() };
        let (s, _) = denoise_uniform(&img, &cfg).unwrap();
        for (a, b) in s.u.values().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_indivisible_sizes() {
        let img = Raster::filled(24, 16, 0.0);
        let cfg = PipelineConfig { max_refinements: 4, ..PipelineConfig::denoise() };
        assert!(matches!(denoise_adaptive(&img, &cfg), Err(PipelineError::Dimensions { .. })));
    }

    #[test]
    fn adaptive_denoising_improves_psnr() {
        let clean = squares(64);
        let noisy = add_gaussian_noise(&clean, 0.1, 1).unwrap();
        let cfg = PipelineConfig { sigma: 0.1, max_refinements: 3, ..PipelineConfig::denoise() };
        let run = denoise_adaptive(&noisy, &cfg).unwrap();
        let out = run.image(64, 64);
        let gain = psnr(&out, &clean) - psnr(&noisy, &clean);
        assert!(gain >= 2.0, "gain {gain}");
        for w in run.meshes.windows(2) {
            assert!(w[1].is_refinement_of(&w[0]));
        }
        let (s, _) = denoise_uniform(&noisy, &cfg).unwrap();
        let uni = s.u.to_raster(0, 64, 64).unwrap();
        assert!(psnr(&uni, &clean) >= psnr(&noisy, &clean) + 2.0);
    }

    #[test]
    fn reprojection_preserves_integral() {
        let img = squares(32);
        let coarse = coarse_pixel_mesh(32, 32, 3).unwrap();
        let fine = Arc::new(coarse.refine(&[0, 3, 7]));
        let gc = pixel_data(&img, &coarse).unwrap();
        let gf = pixel_data(&img, &fine).unwrap();
        let total: f64 = img.data().iter().sum();
        assert!((gc.integral(0) - total).abs() <= 1e-12 * total);
        assert!((gf.integral(0) - total).abs() <= 1e-12 * total);
    }
}
