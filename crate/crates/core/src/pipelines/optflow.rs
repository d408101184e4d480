use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{coarse_pixel_mesh, mark, pixel_data, PipelineConfig, PipelineError};
use crate::math::sqrt;
use crate::mesh::{CellId, Domain, GridFunction, MeshError, QuadMesh};
use crate::metrics::FlowField;
use crate::model;
use crate::newton::{self, NewtonReport};
use crate::operators::{DataTerm, DiscreteOperators};
use crate::raster::Raster;

/// `f_w(x) = f1(x + u(x))` by bilinear interpolation; pixels whose target
/// leaves the image keep their value.
pub fn warp_image(f1: &Raster, flow: &FlowField) -> Raster {
    assert!(flow.width() == f1.width() && flow.height() == f1.height(), "flow and image sizes differ");
    Raster::from_fn(f1.width(), f1.height(), |x, y| {
        let [u, v] = flow.get(x, y);
        f1.bilinear(x as f64 + u, y as f64 + v).unwrap_or_else(|| f1.get(x, y))
    })
}

/// Piecewise-constant evaluation of a two-channel grid function on pixels.
pub fn flow_field(u: &GridFunction, width: usize, height: usize) -> Result<FlowField, MeshError> {
    let a = u.to_raster(0, width, height)?;
    let b = u.to_raster(1, width, height)?;
    Ok(FlowField::from_components(&a, &b))
}

/// One Newton solve inside a warping loop.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpReport {
    pub refinements: usize,
    pub n_cells: usize,
    pub newton: NewtonReport,
    /// `||f_w - f0||` after warping with the new flow.
    pub warp_residual: f64,
    pub relative_decrease: f64,
    /// Cells marked for refinement after this solve.
    pub marked: Vec<CellId>,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct FlowRun {
    pub flow: GridFunction,
    pub meshes: Vec<Arc<QuadMesh>>,
    pub warps: Vec<WarpReport>,
    /// `||f1 - f0||`.
    pub initial_residual: f64,
}

impl FlowRun {
    pub fn field(&self, width: usize, height: usize) -> FlowField {
        flow_field(&self.flow, width, height).expect("pixel-aligned mesh")
    }
}

fn image_distance(a: &Raster, b: &Raster) -> f64 {
    sqrt(a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum())
}

fn warping_loop(
    f0: &Raster,
    f1: &Raster,
    cfg: &PipelineConfig,
    mesh0: Arc<QuadMesh>,
    max_level: u8,
) -> Result<FlowRun, PipelineError> {
    cfg.validate()?;
    if !f0.same_shape(f1) {
        return Err(PipelineError::ShapeMismatch);
    }
    let (w, h) = (f0.width(), f0.height());
    let p = &cfg.params;
    let mut mesh = mesh0;
    let mut u = GridFunction::zeros(mesh.clone(), 2);
    let mut fw = f1.clone();
    let initial_residual = image_distance(&fw, f0);
    let mut r_prev = initial_residual;
    let mut f0m = pixel_data(f0, &mesh)?;
    let mut refinements = 0;
    let mut on_level = 0;
    let mut meshes = alloc::vec![mesh.clone()];
    let mut warps = Vec::new();
    loop {
        let t0 = cfg.now();
        let fwm = pixel_data(&fw, &mesh)?;
        let ops = DiscreteOperators::new(mesh.clone(), DataTerm::OpticalFlow, Some(&fwm), p)?;
        let tu = ops.t().apply(u.values());
        let g: Vec<f64> = tu.iter().zip(fwm.values()).zip(f0m.values()).map(|((t, a), b)| t - (a - b)).collect();
        let data = GridFunction::new(mesh.clone(), 1, g)?;
        let init = model::state_from_primal(u, &ops, p);
        let (state, report) = newton::solve(init, &data, &ops, p)?;
        fw = warp_image(f1, &flow_field(&state.u, w, h)?);
        let r = image_distance(&fw, f0);
        let decrease = if r_prev > 0.0 { (r_prev - r) / r_prev } else { 0.0 };
        on_level += 1;
        let stalled = decrease <= cfg.eps_warp || on_level >= cfg.max_warps;
        let marked = if stalled && refinements < cfg.max_refinements {
            mark(&state, &data, &ops, cfg, max_level)?.1
        } else {
            Vec::new()
        };
        let next = (!marked.is_empty()).then(|| Arc::new(mesh.refine(&marked)));
        warps.push(WarpReport {
            refinements,
            n_cells: mesh.n_cells(),
            newton: report,
            warp_residual: r,
            relative_decrease: decrease,
            marked,
            seconds: cfg.now() - t0,
        });
        r_prev = r;
        u = state.u;
        if stalled {
            match next {
                Some(m) => {
                    mesh = m;
                    u = u.project_fine(&mesh)?;
                    f0m = pixel_data(f0, &mesh)?;
                    refinements += 1;
                    on_level = 0;
                    meshes.push(mesh.clone());
                }
                None => break,
            }
        }
    }
    Ok(FlowRun { flow: u, meshes, warps, initial_residual })
}

/// Warping on the pixel grid until the relative decrease of `||f_w - f0||`
/// drops to `cfg.eps_warp` (or `cfg.max_warps` solves). With
/// `max_warps = 1` this is the linearised flow without warping.
pub fn optflow_warping(f0: &Raster, f1: &Raster, cfg: &PipelineConfig) -> Result<FlowRun, PipelineError> {
    let mesh = Arc::new(QuadMesh::new_uniform(f0.width(), f0.height(), Domain::pixels(f0.width(), f0.height()))?);
    let cfg = PipelineConfig { max_refinements: 0, ..*cfg };
    warping_loop(f0, f1, &cfg, mesh, 0)
}

/// Warping from the `2^K`-times coarsened grid; whenever warping stalls the
/// mesh is refined, `K = cfg.max_refinements` times, and warping continues on
/// the final mesh until it stalls.
pub fn optflow_adaptive(f0: &Raster, f1: &Raster, cfg: &PipelineConfig) -> Result<FlowRun, PipelineError> {
    let k = cfg.max_refinements;
    let mesh = coarse_pixel_mesh(f0.width(), f0.height(), k)?;
    warping_loop(f0, f1, cfg, mesh, k as u8)
}

/// Two frames of a textured square moving over a static textured background.
#[derive(Clone, Debug)]
pub struct SyntheticFlow {
    pub f0: Raster,
    pub f1: Raster,
    pub gt: FlowField,
    /// Moving square `[x0, x1) x [y0, y1)` in the first frame, in pixels.
    pub object: [usize; 4],
}

impl SyntheticFlow {
    /// Distance from `(x, y)` (domain coordinates) to the object outline.
    pub fn boundary_distance(&self, x: f64, y: f64) -> f64 {
        let [x0, x1, y0, y1] = self.object.map(|v| v as f64);
        let inside = (x0..=x1).contains(&x) && (y0..=y1).contains(&y);
        if inside {
            (x - x0).min(x1 - x).min(y - y0).min(y1 - y)
        } else {
            let dx = (x0 - x).max(x - x1).max(0.0);
            let dy = (y0 - y).max(y - y1).max(0.0);
            sqrt(dx * dx + dy * dy)
        }
    }
}

/// Sum of plane waves with wavelengths from half the image side down to
/// `size / 12.8`, but never below 4 pixels.
fn texture(rng: &mut ChaCha8Rng, size: usize) -> impl Fn(f64, f64) -> f64 {
    let scale = size as f64 / 128.0;
    let waves: Vec<[f64; 3]> = [64.0, 40.0, 28.0, 20.0, 14.0, 10.0]
        .into_iter()
        .map(|length| {
            let angle = rng.random_range(0.0..PI);
            let k = 2.0 * PI / (length * scale).max(4.0);
            [k * libm::cos(angle), k * libm::sin(angle), rng.random_range(0.0..2.0 * PI)]
        })
        .collect();
    move |x, y| 0.5 + 0.08 * waves.iter().map(|w| libm::sin(w[0] * x + w[1] * y + w[2])).sum::<f64>()
}

/// A `size x size` pair: the central square (half the side) moves by the
/// integer `shift`, the background is static.
pub fn synthetic_shift(size: usize, shift: [i64; 2], seed: u64) -> SyntheticFlow {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bg = texture(&mut rng, size);
    let obj = texture(&mut rng, size);
    let (lo, hi) = (size / 4, 3 * size / 4);
    let inside = |x: i64, y: i64| (lo as i64..hi as i64).contains(&x) && (lo as i64..hi as i64).contains(&y);
    let f0 = Raster::from_fn(size, size, |x, y| {
        if inside(x as i64, y as i64) {
            obj(x as f64, y as f64)
        } else {
            bg(x as f64, y as f64)
        }
    });
    let f1 = Raster::from_fn(size, size, |x, y| {
        let (sx, sy) = (x as i64 - shift[0], y as i64 - shift[1]);
        if inside(sx, sy) {
            obj(sx as f64, sy as f64)
        } else {
            bg(x as f64, y as f64)
        }
    });
    let d = [shift[0] as f64, shift[1] as f64];
    let gt = FlowField::from_fn(size, size, |x, y| if inside(x as i64, y as i64) { d } else { [0.0, 0.0] });
    SyntheticFlow { f0, f1, gt, object: [lo, hi, lo, hi] }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::endpoint_error;

    #[test]
    fn warp_examples() {
        let ramp = Raster::from_fn(6, 5, |x, y| 0.1 * x as f64 + 0.3 * y as f64);
        assert_eq!(warp_image(&ramp, &FlowField::zeros(6, 5)), ramp);
        let shifted = warp_image(&ramp, &FlowField::from_fn(6, 5, |_, _| [1.0, 0.0]));
        for y in 0..5 {
            for x in 0..5 {
                assert!((shifted.get(x, y) - ramp.get(x + 1, y)).abs() < 1e-15);
            }
            assert_eq!(shifted.get(5, y), ramp.get(5, y));
        }
        let half = warp_image(&ramp, &FlowField::from_fn(6, 5, |_, _| [0.5, -0.5]));
        for y in 1..5 {
            for x in 0..5 {
                let want = 0.1 * (x as f64 + 0.5) + 0.3 * (y as f64 - 0.5);
                assert!((half.get(x, y) - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn identical_frames_give_zero_flow() {
        let s = synthetic_shift(16, [0, 0], 3);
        assert_eq!(s.f0, s.f1);
        let cfg = PipelineConfig { max_warps: 1, ..PipelineConfig::optical_flow() };
        let run = optflow_warping(&s.f0, &s.f1, &cfg).unwrap();
        assert!(run.flow.values().iter().all(|v| v.abs() < 1e-8));
        assert_eq!(run.warps.len(), 1);
    }

    #[test]
    fn constant_frames_terminate() {
        let f = Raster::filled(16, 16, 0.3);
        let cfg = PipelineConfig { max_refinements: 2, ..PipelineConfig::optical_flow() };
        let run = optflow_adaptive(&f, &f, &cfg).unwrap();
        assert!(run.flow.values().iter().all(|v| v.abs() < 1e-8));
        assert_eq!(run.meshes.len(), 3);
    }

    #[test]
    fn synthetic_pair_is_consistent() {
        let s = synthetic_shift(32, [1, 0], 5);
        let back = warp_image(&s.f1, &s.gt);
        let [x0, x1, y0, y1] = s.object;
        for y in y0..y1 {
            for x in x0..x1 {
                assert_eq!(back.get(x, y), s.f0.get(x, y));
            }
        }
        assert_eq!(s.boundary_distance(x0 as f64 + 2.0, 16.0), 2.0);
        assert_eq!(s.boundary_distance(x0 as f64 - 3.0, 16.0), 3.0);
    }

    #[test]
    fn warping_recovers_small_shift() {
        let s = synthetic_shift(64, [1, 0], 11);
        let cfg = PipelineConfig::optical_flow();
        let with = optflow_warping(&s.f0, &s.f1, &cfg).unwrap();
        let without = optflow_warping(&s.f0, &s.f1, &PipelineConfig { max_warps: 1, ..cfg }).unwrap();
        let ee_with = endpoint_error(&with.field(64, 64), &s.gt).1.mean;
        let ee_without = endpoint_error(&without.field(64, 64), &s.gt).1.mean;
        assert!(ee_with < ee_without, "{ee_with} vs {ee_without}");
        assert!(with.warps.len() > 1);
        for w in with.warps.windows(2).take(with.warps.len() - 2) {
            assert!(w[1].warp_residual <= w[0].warp_residual);
        }
    }
}
