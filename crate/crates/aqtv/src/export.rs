//! CSV, SVG and MatrixMarket exports of meshes, indicators, solver logs and
//! benchmark tables.

use std::fmt::Write as _;

use aqtv_core::estimator::IndicatorField;
use aqtv_core::mesh::{CellId, GridFunction, QuadMesh};
use aqtv_core::pipelines::{ConvergenceRow, LevelReport, RunKind, WarpReport};
use aqtv_core::sparse::SparseOperator;

pub type CsvResult = Result<String, csv::Error>;

fn finish(w: csv::Writer<Vec<u8>>) -> CsvResult {
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

/// One row per cell: geometry, level and the values of `u` if given.
pub fn mesh_csv(mesh: &QuadMesh, u: Option<&GridFunction>) -> CsvResult {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string(), "level".into(), "x0".into(), "y0".into(), "x1".into(), "y1".into()];
    if let Some(u) = u {
        header.extend((0..u.channels()).map(|k| format!("u{k}")));
    }
    w.write_record(&header)?;
    for (i, c) in mesh.cells().iter().enumerate() {
        let [x0, y0, x1, y1] = c.bounds();
        let mut rec = vec![i.to_string(), c.key.level.to_string(), num(x0), num(y0), num(x1), num(y1)];
        if let Some(u) = u {
            rec.extend((0..u.channels()).map(|k| num(u.value(i, k))));
        }
        w.write_record(&rec)?;
    }
    finish(w)
}

/// Cell outlines, filled with grey levels from `shade` (clamped to `[0, 1]`)
/// when given; `marked` cells get a red outline.
pub fn mesh_svg(mesh: &QuadMesh, shade: Option<&[f64]>, marked: &[CellId]) -> String {
    let d = mesh.domain();
    let scale = 512.0 / d.width.max(d.height);
    let (w, h) = (d.width * scale, d.height * scale);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w} {h}">"#);
    let stroke = (0.5f64).min(0.2 * mesh.cells().iter().map(|c| c.h).fold(f64::INFINITY, f64::min) * scale);
    for (i, c) in mesh.cells().iter().enumerate() {
        let [x0, y0, x1, y1] = c.bounds();
        let fill = match shade {
            Some(v) => {
                let g = (v[i].clamp(0.0, 1.0) * 255.0).round() as u8;
                format!("rgb({g},{g},{g})")
            }
            None => "none".into(),
        };
        let line = if marked.contains(&i) { "red" } else { "black" };
        let _ = writeln!(
            s,
            r#"<rect x="{:.4}" y="{:.4}" width="{:.4}" height="{:.4}" fill="{fill}" stroke="{line}" stroke-width="{stroke:.3}"/>"#,
            (x0 - d.x0) * scale,
            (y0 - d.y0) * scale,
            (x1 - x0) * scale,
            (y1 - y0) * scale,
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn indicator_csv(eta: &IndicatorField) -> CsvResult {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "x", "y", "h", "eta_raw", "eta"])?;
    for (i, c) in eta.mesh().cells().iter().enumerate() {
        w.write_record([i.to_string(), num(c.center[0]), num(c.center[1]), num(c.h), num(eta.raw()[i]), num(eta.values()[i])])?;
    }
    finish(w)
}

/// Per-level summary of an adaptive run. Timings are left out so that
/// repeated runs give identical files.
pub fn levels_csv(levels: &[LevelReport]) -> CsvResult {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["refinements", "cells", "newton_iterations", "final_residual", "converged", "gap", "marked"])?;
    for l in levels {
        w.write_record([
            l.refinements.to_string(),
            l.n_cells.to_string(),
            l.newton.iterations.to_string(),
            num(l.newton.final_residual),
            l.newton.converged.to_string(),
            num(l.gap),
            l.marked.len().to_string(),
        ])?;
    }
    finish(w)
}

/// Newton residual after every iteration of every solve.
pub fn residual_log_csv<'a>(solves: impl IntoIterator<Item = (usize, &'a aqtv_core::newton::NewtonReport)>) -> CsvResult {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["solve", "iteration", "residual", "linear_residual"])?;
    for (s, rep) in solves {
        w.write_record([s.to_string(), "0".into(), num(rep.initial_residual), String::new()])?;
        for (k, (r, l)) in rep.residuals.iter().zip(&rep.linear).enumerate() {
            w.write_record([s.to_string(), (k + 1).to_string(), num(*r), num(l.relative_residual)])?;
        }
    }
    finish(w)
}

pub fn warps_csv(warps: &[WarpReport]) -> CsvResult {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["warp", "refinements", "cells", "newton_iterations", "warp_residual", "relative_decrease", "marked"])?;
    for (k, r) in warps.iter().enumerate() {
        w.write_record([
            k.to_string(),
            r.refinements.to_string(),
            r.n_cells.to_string(),
            r.newton.iterations.to_string(),
            num(r.warp_residual),
            num(r.relative_decrease),
            r.marked.len().to_string(),
        ])?;
    }
    finish(w)
}

/// Convergence table of the disk benchmark with the exact solution's values
/// inside and outside the disk.
pub fn convergence_csv(rows: &[ConvergenceRow], exact_level: f64) -> CsvResult {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["kind", "level", "dofs", "l2_error", "exact_inside", "exact_outside", "newton_iterations", "converged"])?;
    for r in rows {
        let kind = match r.kind {
            RunKind::Uniform => "uniform",
            RunKind::Adaptive => "adaptive",
        };
        w.write_record([
            kind.to_string(),
            r.level.to_string(),
            r.dofs.to_string(),
            num(r.error),
            num(exact_level),
            num(0.0),
            r.newton_iterations.to_string(),
            r.converged.to_string(),
        ])?;
    }
    finish(w)
}

/// `metric,value` pairs.
pub fn metrics_csv(rows: &[(&str, String)]) -> CsvResult {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["metric", "value"])?;
    for (k, v) in rows {
        w.write_record([*k, v.as_str()])?;
    }
    finish(w)
}

/// Coordinate-format MatrixMarket, 1-based.
pub fn matrix_market(a: &SparseOperator) -> String {
    let t = a.triplets();
    let mut s = String::from("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(s, "{} {} {}", a.rows(), a.cols(), t.len());
    for (r, c, v) in t {
        let _ = writeln!(s, "{} {} {v:e}", r + 1, c + 1);
    }
    s
}

/// `bins` equal-width bins over `[min, max]`; the last bin is closed.
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0; bins];
    for &v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    counts.into_iter().enumerate().map(|(k, n)| (lo + k as f64 * width, lo + (k + 1) as f64 * width, n)).collect()
}

pub fn histogram_csv(values: &[f64], bins: usize) -> CsvResult {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["lower", "upper", "count"])?;
    for (a, b, n) in histogram(values, bins) {
        w.write_record([num(a), num(b), n.to_string()])?;
    }
    finish(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use aqtv_core::mesh::Domain;
    use std::sync::Arc;

    #[test]
    fn mesh_csv_rows() {
        let m = Arc::new(QuadMesh::new_uniform(2, 1, Domain::pixels(2, 1)).unwrap());
        let u = GridFunction::new(m.clone(), 1, vec![0.5, 1.0]).unwrap();
        let s = mesh_csv(&m, Some(&u)).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "id,level,x0,y0,x1,y1,u0");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].ends_with(",1e0"));
    }

    #[test]
    fn svg_has_one_rect_per_cell() {
        let m = QuadMesh::new_uniform(3, 2, Domain::pixels(3, 2)).unwrap().refine(&[0]);
        let s = mesh_svg(&m, None, &[1]);
        assert_eq!(s.matches("<rect").count(), m.n_cells());
        assert_eq!(s.matches("stroke=\"red\"").count(), 1);
    }

    #[test]
    fn matrix_market_is_one_based() {
        let a = SparseOperator::from_triplets(2, 3, &[(0, 2, 1.5), (1, 0, -1.0)]);
        let s = matrix_market(&a);
        assert!(s.starts_with("%%MatrixMarket matrix coordinate real general\n2 3 2\n"));
        assert!(s.contains("1 3 1.5e0\n"));
        assert!(s.contains("2 1 -1e0\n"));
    }

    #[test]
    fn histogram_counts_everything() {
        let h = histogram(&[0.0, 0.25, 0.5, 1.0, 1.0], 4);
        assert_eq!(h.iter().map(|b| b.2).collect::<Vec<_>>(), vec![1, 1, 1, 2]);
        assert_eq!(histogram(&[2.0, 2.0], 3)[0].2, 2);
        assert!(histogram(&[], 3).is_empty());
    }
}
