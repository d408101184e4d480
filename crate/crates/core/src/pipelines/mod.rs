//! End-to-end algorithms: uniform and adaptive denoising, optical flow with
//! (adaptive) warping, and the disk benchmark.

mod denoise;
mod disk;
mod noise;
mod optflow;

use alloc::sync::Arc;
use alloc::vec::Vec;

pub use denoise::{denoise_adaptive, denoise_uniform, DenoiseRun};
pub use disk::{
    cell_fraction_in_disk, disk_benchmark, disk_data, disk_exact_level, disk_exact_solution, disk_l2_error, near_circle_fraction,
    ConvergenceRow, DiskBenchmark, DiskSetup, RunKind,
};
pub use noise::add_gaussian_noise;
pub use optflow::{
    flow_field, optflow_adaptive, optflow_warping, synthetic_shift, warp_image, FlowRun, SyntheticFlow, WarpReport,
};

use crate::estimator::{self, MarkingError};
use crate::mesh::{sample_image, CellId, Domain, GridFunction, MeshError, QuadMesh};
use crate::model::{self, ModelError, ModelParams, SolverState};
use crate::newton::{self, NewtonError, NewtonReport};
use crate::operators::{DataTerm, DiscreteOperators, OperatorError};
use crate::raster::Raster;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid setting {name} = {value}")]
    InvalidConfig { name: &'static str, value: f64 },
    #[error("{width}x{height} image is not divisible by 2^{levels}")]
    Dimensions { width: usize, height: usize, levels: usize },
    #[error("images differ in size")]
    ShapeMismatch,
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Newton(#[from] NewtonError),
    #[error(transparent)]
    Marking(#[from] MarkingError),
}

/// How cells are selected for refinement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MarkingMode {
    /// Dörfler marking with parameter `theta`, preceded by the bulk filter
    /// when `sigma > 0`.
    DorflerBulk,
    /// The given fraction of cells with the largest indicator.
    Fraction(f64),
}

#[derive(Clone, Copy, Debug)]
pub struct PipelineConfig {
    pub params: ModelParams,
    pub theta: f64,
    /// Number of refinement steps.
    pub max_refinements: usize,
    pub eps_warp: f64,
    /// Noise level for the bulk filter; `0` disables it.
    pub sigma: f64,
    pub marking: MarkingMode,
    /// Cap on warping iterations per mesh.
    pub max_warps: usize,
    pub seed: u64,
    /// Seconds since an arbitrary origin, used to time levels.
    pub clock: Option<fn() -> f64>,
}

impl PipelineConfig {
    pub fn denoise() -> Self {
        Self {
            params: ModelParams::denoise(),
            theta: 0.6,
            max_refinements: 6,
            eps_warp: 5e-2,
            sigma: 0.0,
            marking: MarkingMode::DorflerBulk,
            max_warps: 20,
            seed: 0,
            clock: None,
        }
    }

    pub fn optical_flow() -> Self {
        Self {
            params: ModelParams::optical_flow(),
            max_refinements: 4,
            marking: MarkingMode::Fraction(0.75),
            ..Self::denoise()
        }
    }

    /// Disk benchmark: `alpha1 = alpha2 = lambda = 1`, `theta = 0.2`.
    pub fn disk() -> Self {
        Self {
            params: ModelParams { alpha1: 1.0, alpha2: 1.0, lambda: 1.0, beta: 0.0, ..ModelParams::denoise() },
            theta: 0.2,
            max_refinements: 5,
            ..Self::denoise()
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.params.validate()?;
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(PipelineError::InvalidConfig { name: "theta", value: self.theta });
        }
        if !(self.eps_warp > 0.0) {
            return Err(PipelineError::InvalidConfig { name: "eps_warp", value: self.eps_warp });
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(PipelineError::InvalidConfig { name: "sigma", value: self.sigma });
        }
        if let MarkingMode::Fraction(f) = self.marking {
            if !(0.0..=1.0).contains(&f) {
                return Err(PipelineError::InvalidConfig { name: "fraction", value: f });
            }
        }
        if self.max_warps == 0 {
            return Err(PipelineError::InvalidConfig { name: "max_warps", value: 0.0 });
        }
        if self.max_refinements > 20 {
            return Err(PipelineError::InvalidConfig { name: "max_refinements", value: self.max_refinements as f64 });
        }
        Ok(())
    }

    pub(crate) fn now(&self) -> f64 {
        self.clock.map_or(0.0, |c| c())
    }
}

/// One solve of an adaptive or warping loop.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelReport {
    /// Refinements performed before this solve.
    pub refinements: usize,
    pub n_cells: usize,
    pub newton: NewtonReport,
    /// Primal-dual gap of the computed state (sum of unshifted indicators);
    /// `NaN` when no indicator was evaluated.
    pub gap: f64,
    /// Cells marked after this solve.
    pub marked: Vec<CellId>,
    pub seconds: f64,
}

/// Uniform coarse mesh of `(w / 2^k) x (h / 2^k)` cells over a `w x h` image.
pub fn coarse_pixel_mesh(width: usize, height: usize, levels: usize) -> Result<Arc<QuadMesh>, PipelineError> {
    let block = 1usize.checked_shl(levels as u32).unwrap_or(0);
    if block == 0 || width == 0 || height == 0 || width % block != 0 || height % block != 0 {
        return Err(PipelineError::Dimensions { width, height, levels });
    }
    Ok(Arc::new(QuadMesh::new_uniform(width / block, height / block, Domain::pixels(width, height))?))
}

fn mark(
    state: &SolverState,
    data: &GridFunction,
    ops: &DiscreteOperators,
    cfg: &PipelineConfig,
    max_level: u8,
) -> Result<(f64, Vec<CellId>), PipelineError> {
    let eta = estimator::local_indicator(state, data, ops, &cfg.params)?;
    let mesh = ops.mesh();
    let refinable = |i: &CellId| mesh.cell(*i).key.level < max_level;
    let marked = match cfg.marking {
        MarkingMode::DorflerBulk => {
            let candidates: Vec<CellId> = if cfg.sigma > 0.0 {
                estimator::bulk_filter(state, data, cfg.sigma).into_iter().filter(refinable).collect()
            } else {
                (0..mesh.n_cells()).filter(refinable).collect()
            };
            estimator::dorfler_mark_among(&eta, &candidates, cfg.theta)
        }
        MarkingMode::Fraction(f) => estimator::fraction_mark(&eta, f)?.into_iter().filter(refinable).collect(),
    };
    Ok((eta.raw_total(), marked))
}

/// Result of [`adaptive_denoise_loop`].
pub(crate) struct AdaptiveRun {
    pub state: SolverState,
    pub meshes: Vec<Arc<QuadMesh>>,
    pub solutions: Vec<GridFunction>,
    pub levels: Vec<LevelReport>,
}

/// solve, estimate, mark, refine, re-project; `cfg.max_refinements` times,
/// then a final solve. Stops early when nothing is marked.
pub(crate) fn adaptive_denoise_loop(
    mesh0: Arc<QuadMesh>,
    data_on: &mut dyn FnMut(&Arc<QuadMesh>) -> Result<GridFunction, PipelineError>,
    cfg: &PipelineConfig,
    max_level: u8,
) -> Result<AdaptiveRun, PipelineError> {
    cfg.validate()?;
    let p = &cfg.params;
    let mut mesh = mesh0;
    let mut previous: Option<GridFunction> = None;
    let mut meshes = Vec::new();
    let mut solutions = Vec::new();
    let mut levels = Vec::new();
    loop {
        let t0 = cfg.now();
        let data = data_on(&mesh)?;
        let ops = DiscreteOperators::new(mesh.clone(), DataTerm::Denoise, None, p)?;
        let init = match previous.take() {
            Some(u) => model::state_from_primal(u.project_fine(&mesh)?, &ops, p),
            None => model::initial_state(&data, &ops, p)?,
        };
        let (state, report) = newton::solve(init, &data, &ops, p)?;
        meshes.push(mesh.clone());
        solutions.push(state.u.clone());
        let refinements = levels.len();
        let (gap, marked) = if refinements < cfg.max_refinements {
            mark(&state, &data, &ops, cfg, max_level)?
        } else {
            (f64::NAN, Vec::new())
        };
        let done = marked.is_empty();
        let next = (!done).then(|| Arc::new(mesh.refine(&marked)));
        levels.push(LevelReport {
            refinements,
            n_cells: mesh.n_cells(),
            newton: report,
            gap,
            marked,
            seconds: cfg.now() - t0,
        });
        match next {
            Some(m) => {
                mesh = m;
                previous = Some(state.u);
            }
            None => return Ok(AdaptiveRun { state, meshes, solutions, levels }),
        }
    }
}

pub(crate) fn pixel_data(image: &Raster, mesh: &Arc<QuadMesh>) -> Result<GridFunction, PipelineError> {
    Ok(sample_image(image, mesh)?)
}
