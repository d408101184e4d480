use alloc::sync::Arc;
use alloc::vec::Vec;

use super::{adaptive_denoise_loop, LevelReport, PipelineConfig, PipelineError};
use crate::math::sqrt;
use crate::mesh::{CellId, Domain, GridFunction, QuadMesh};
use crate::model::ModelParams;
use crate::newton;
use crate::operators::{DataTerm, DiscreteOperators};

/// Height of the exact minimiser `c 1_B` for data `f = 1_B`, `B` the disk of
/// radius `radius` around the origin.
pub fn disk_exact_level(params: &ModelParams, radius: f64) -> Result<f64, PipelineError> {
    let (a1, a2, lambda) = (params.alpha1, params.alpha2, params.lambda);
    if !(a2 > 0.0) {
        return Err(PipelineError::InvalidConfig { name: "alpha2", value: a2 });
    }
    if !(radius > 0.0) {
        return Err(PipelineError::InvalidConfig { name: "radius", value: radius });
    }
    if radius < 2.0 * lambda / (a1 + a2) {
        Ok(0.0)
    } else if a1 == 0.0 || radius <= 2.0 * lambda / a1 {
        Ok((a1 + a2) / a2 - 2.0 * lambda / (a2 * radius))
    } else {
        Ok(1.0)
    }
}

/// The exact minimiser `c 1_B` evaluated at `point`.
pub fn disk_exact_solution(params: &ModelParams, radius: f64, point: [f64; 2]) -> Result<f64, PipelineError> {
    let c = disk_exact_level(params, radius)?;
    Ok(if point[0] * point[0] + point[1] * point[1] < radius * radius { c } else { 0.0 })
}

/// Area fraction of the rectangle `[x0, x1] x [y0, y1]` inside the disk.
/// Rectangles cut by the circle are split recursively `depth` times; the
/// leaves use the midpoint rule.
pub fn cell_fraction_in_disk(bounds: [f64; 4], radius: f64, depth: u32) -> f64 {
    let [x0, y0, x1, y1] = bounds;
    let nx = 0.0f64.clamp(x0, x1);
    let ny = 0.0f64.clamp(y0, y1);
    let fx = x0.abs().max(x1.abs());
    let fy = y0.abs().max(y1.abs());
    let r2 = radius * radius;
    if fx * fx + fy * fy <= r2 {
        return 1.0;
    }
    if nx * nx + ny * ny >= r2 {
        return 0.0;
    }
    let (xm, ym) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
    if depth == 0 {
        return if xm * xm + ym * ym < r2 { 1.0 } else { 0.0 };
    }
    0.25 * [[x0, y0, xm, ym], [xm, y0, x1, ym], [x0, ym, xm, y1], [xm, ym, x1, y1]]
        .into_iter()
        .map(|b| cell_fraction_in_disk(b, radius, depth - 1))
        .sum::<f64>()
}

/// Cell averages of `1_B`.
pub fn disk_data(mesh: &Arc<QuadMesh>, radius: f64, depth: u32) -> GridFunction {
    GridFunction::from_fn(mesh.clone(), 1, |c, _| cell_fraction_in_disk(c.bounds(), radius, depth))
}

/// `|| level 1_B - u ||_{L2}` for piecewise-constant `u`.
pub fn disk_l2_error(u: &GridFunction, level: f64, radius: f64, depth: u32) -> f64 {
    let mut acc = 0.0;
    for (c, &v) in u.mesh().cells().iter().zip(u.channel(0)) {
        let frac = cell_fraction_in_disk(c.bounds(), radius, depth);
        acc += c.area() * (frac * (v - level) * (v - level) + (1.0 - frac) * v * v);
    }
    sqrt(acc)
}

/// Share of `marked` cells whose centre lies within `widths` cell widths of
/// the circle.
pub fn near_circle_fraction(mesh: &QuadMesh, marked: &[CellId], radius: f64, widths: f64) -> f64 {
    if marked.is_empty() {
        return 0.0;
    }
    let near = marked
        .iter()
        .filter(|&&i| {
            let c = mesh.cell(i);
            (sqrt(c.center[0] * c.center[0] + c.center[1] * c.center[1]) - radius).abs() <= widths * c.h
        })
        .count();
    near as f64 / marked.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiskSetup {
    pub radius: f64,
    /// Cells per side of the uniform runs.
    pub resolutions: Vec<usize>,
    /// Cells per side of the adaptive start mesh.
    pub coarse: usize,
    pub quadrature_depth: u32,
}

impl Default for DiskSetup {
    fn default() -> Self {
        Self { radius: 1.5, resolutions: alloc::vec![16, 32, 64], coarse: 16, quadrature_depth: 8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunKind {
    Uniform,
    Adaptive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub kind: RunKind,
    /// Cells per side (uniform) or refinement count (adaptive).
    pub level: usize,
    pub dofs: usize,
    pub error: f64,
    pub newton_iterations: usize,
    pub converged: bool,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct DiskBenchmark {
    pub exact_level: f64,
    pub rows: Vec<ConvergenceRow>,
    pub adaptive_meshes: Vec<Arc<QuadMesh>>,
    pub adaptive_levels: Vec<LevelReport>,
}

impl DiskBenchmark {
    pub fn uniform(&self) -> impl Iterator<Item = &ConvergenceRow> {
        self.rows.iter().filter(|r| r.kind == RunKind::Uniform)
    }

    pub fn adaptive(&self) -> impl Iterator<Item = &ConvergenceRow> {
        self.rows.iter().filter(|r| r.kind == RunKind::Adaptive)
    }
}

fn disk_domain() -> Domain {
    Domain::new(-2.0, -2.0, 4.0, 4.0)
}

/// Uniform runs at `setup.resolutions` and one adaptive run from
/// `setup.coarse`, all on `[-2, 2]^2` with data `1_B`.
pub fn disk_benchmark(cfg: &PipelineConfig, setup: &DiskSetup) -> Result<DiskBenchmark, PipelineError> {
    cfg.validate()?;
    let level = disk_exact_level(&cfg.params, setup.radius)?;
    let (r, depth) = (setup.radius, setup.quadrature_depth);
    let mut rows = Vec::new();
    for &n in &setup.resolutions {
        let t0 = cfg.now();
        let mesh = Arc::new(QuadMesh::new_uniform(n, n, disk_domain())?);
        let data = disk_data(&mesh, r, depth);
        let ops = DiscreteOperators::new(mesh.clone(), DataTerm::Denoise, None, &cfg.params)?;
        let (state, report) = newton::solve_default(&data, &ops, &cfg.params)?;
        rows.push(ConvergenceRow {
            kind: RunKind::Uniform,
            level: n,
            dofs: mesh.n_cells(),
            error: disk_l2_error(&state.u, level, r, depth),
            newton_iterations: report.iterations,
            converged: report.converged,
            seconds: cfg.now() - t0,
        });
    }
    let mesh0 = Arc::new(QuadMesh::new_uniform(setup.coarse, setup.coarse, disk_domain())?);
    let run = adaptive_denoise_loop(mesh0, &mut |m| Ok(disk_data(m, r, depth)), cfg, cfg.max_refinements as u8)?;
    for (i, (u, rep)) in run.solutions.iter().zip(&run.levels).enumerate() {
        rows.push(ConvergenceRow {
            kind: RunKind::Adaptive,
            level: i,
            dofs: u.n_cells(),
            error: disk_l2_error(u, level, r, depth),
            newton_iterations: rep.newton.iterations,
            converged: rep.newton.converged,
            seconds: rep.seconds,
        });
    }
    Ok(DiskBenchmark { exact_level: level, rows, adaptive_meshes: run.meshes, adaptive_levels: run.levels })
}
