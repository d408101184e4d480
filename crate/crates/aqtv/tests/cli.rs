use std::path::Path;
use std::process::{Command, Output};

use aqtv::{read_flo, read_image, write_flo, write_image};
use aqtv_core::metrics::FlowField;
use aqtv_core::raster::Raster;

fn aqtv(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aqtv")).args(args).current_dir(dir).output().unwrap()
}

fn texture(w: usize, h: usize) -> Raster {
    Raster::from_fn(w, h, |x, y| 0.5 + 0.3 * ((x as f64 * 0.7).sin() * (y as f64 * 0.4).cos()))
}

#[test]
fn argument_errors_exit_two_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["frobnicate"][..],
        &["denoise"],
        &["denoise", "--input", "x.pgm", "--theta", "abc"],
        &["optflow", "--f0", "a.pgm", "--f1", "b.pgm", "--warping", "sideways"],
        &["disk-bench", "--alphas", "1"],
        &["denoise", "--input", "x.pgm", "--uniform", "--adaptive"],
    ] {
        let out = aqtv(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"), "{args:?}");
    }
    write_image(&Raster::filled(8, 8, 0.5), &dir.path().join("c.pgm")).unwrap();
    let out = aqtv(&["denoise", "--input", "c.pgm", "--theta", "1.5"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(dir.path().join("bad.toml"), "alpha9 = 1").unwrap();
    let out = aqtv(&["--config", "bad.toml", "denoise", "--input", "c.pgm"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = aqtv(&["denoise", "--input", "missing.pgm"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    std::fs::write(dir.path().join("junk.pgm"), b"P5\n4 4\n255\n").unwrap();
    assert_eq!(aqtv(&["denoise", "--input", "junk.pgm"], dir.path()).status.code(), Some(1));
    write_image(&Raster::filled(12, 12, 0.5), &dir.path().join("odd.pgm")).unwrap();
    let out = aqtv(&["denoise", "--input", "odd.pgm", "--max-ref", "3"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn uniform_denoise_of_constant_image_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let img = Raster::filled(16, 16, 100.0 / 255.0);
    write_image(&img, &dir.path().join("c.pgm")).unwrap();
    let out = aqtv(
        &["denoise", "--input", "c.pgm", "--sigma", "0", "--uniform", "--out", "o.pgm", "--metrics-out", "m.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read(dir.path().join("o.pgm")).unwrap(), std::fs::read(dir.path().join("c.pgm")).unwrap());
    let m = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
    assert!(m.contains("psnr,inf"));
    assert!(m.contains("ssim_window,7"));
}

#[test]
fn adaptive_denoise_writes_all_outputs_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    write_image(&texture(32, 32), &dir.path().join("t.png")).unwrap();
    let args = |tag: &str| {
        [
            "--seed", "3", "denoise", "--input", "t.png", "--sigma", "0.05", "--max-ref", "2",
            "--out", &format!("o{tag}.png"), "--mesh-out", &format!("m{tag}.svg"),
            "--levels-out", &format!("l{tag}.csv"), "--residuals-out", &format!("r{tag}.csv"),
            "--metrics-out", &format!("x{tag}.csv"), "--noisy-out", &format!("n{tag}.pgm"),
        ]
        .map(String::from)
    };
    for tag in ["a", "b"] {
        let a = args(tag);
        let out = aqtv(&a.iter().map(String::as_str).collect::<Vec<_>>(), dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for stem in ["o", "m", "l", "r", "x", "n"] {
        let ext = match stem {
            "o" => "png",
            "m" => "svg",
            "n" => "pgm",
            _ => "csv",
        };
        let a = std::fs::read(dir.path().join(format!("{stem}a.{ext}"))).unwrap();
        let b = std::fs::read(dir.path().join(format!("{stem}b.{ext}"))).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{stem}");
    }
    let levels = std::fs::read_to_string(dir.path().join("la.csv")).unwrap();
    assert_eq!(levels.lines().count(), 4);
    let other = aqtv(&["--seed", "4", "denoise", "--input", "t.png", "--sigma", "0.05", "--noisy-out", "n4.pgm", "--uniform"], dir.path());
    assert!(other.status.success());
    assert_ne!(std::fs::read(dir.path().join("n4.pgm")).unwrap(), std::fs::read(dir.path().join("na.pgm")).unwrap());
}

#[test]
fn flow_without_warping_on_identical_frames_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    write_image(&texture(16, 16), &dir.path().join("f.pgm")).unwrap();
    write_flo(&FlowField::zeros(16, 16), &dir.path().join("gt.flo")).unwrap();
    let out = aqtv(
        &[
            "optflow", "--f0", "f.pgm", "--f1", "f.pgm", "--warping", "none", "--gt", "gt.flo",
            "--flo-out", "u.flo", "--color-out", "c.ppm", "--metrics-out", "m.csv", "--warps-out", "w.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let flow = read_flo(&dir.path().join("u.flo")).unwrap();
    assert!(flow.data().iter().all(|v| *v == [0.0, 0.0]));
    let ppm = std::fs::read(dir.path().join("c.ppm")).unwrap();
    assert!(ppm[ppm.len() - 3..].iter().all(|&b| b == 255));
    let m = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
    assert!(m.contains("ee_mean,0.000000"));
    assert!(m.contains("warps,1"));
}

#[test]
fn mismatched_frames_are_argument_errors() {
    let dir = tempfile::tempdir().unwrap();
    write_image(&texture(16, 16), &dir.path().join("a.pgm")).unwrap();
    write_image(&texture(8, 8), &dir.path().join("b.pgm")).unwrap();
    let out = aqtv(&["optflow", "--f0", "a.pgm", "--f1", "b.pgm"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn disk_bench_reports_two_thirds_inside() {
    let dir = tempfile::tempdir().unwrap();
    let out = aqtv(
        &["disk-bench", "--radius", "1.5", "--alphas", "1,1", "--resolutions", "8,16", "--coarse", "8", "--levels", "1", "--csv-out", "d.csv", "--mesh-out", "m.svg"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("d.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let inside = header.iter().position(|h| *h == "exact_inside").unwrap();
    let outside = header.iter().position(|h| *h == "exact_outside").unwrap();
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        let v: f64 = r[inside].parse().unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r[outside].parse::<f64>().unwrap(), 0.0);
    }
    let stdout = aqtv(&["disk-bench", "--resolutions", "8", "--coarse", "8", "--levels", "0"], dir.path());
    assert!(String::from_utf8_lossy(&stdout.stdout).starts_with("kind,level,dofs"));
}

#[test]
fn config_file_sets_parameters_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    write_image(&texture(16, 16), &dir.path().join("t.pgm")).unwrap();
    std::fs::write(dir.path().join("p.toml"), "lambda = 0.0\nalpha2 = 10.0\n").unwrap();
    let out = aqtv(&["--config", "p.toml", "denoise", "--input", "t.pgm", "--uniform", "--out", "a.pgm"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_image(&dir.path().join("a.pgm")).unwrap(), read_image(&dir.path().join("t.pgm")).unwrap());
    let out = aqtv(&["--config", "p.toml", "denoise", "--input", "t.pgm", "--uniform", "--lambda", "1", "--out", "b.pgm"], dir.path());
    assert!(out.status.success());
    assert_ne!(read_image(&dir.path().join("b.pgm")).unwrap(), read_image(&dir.path().join("t.pgm")).unwrap());
}

#[test]
fn tv_analyze_reports_compensation() {
    let dir = tempfile::tempdir().unwrap();
    write_image(&texture(16, 16), &dir.path().join("t.pgm")).unwrap();
    let out = aqtv(&["tv-analyze", "--input", "t.pgm", "--r", "1", "--csv-out", "tv.csv", "--hist-out", "h.csv", "--bins", "4"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("tv.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    for line in csv.lines().skip(1) {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((f[3] - f[5]).abs() <= 1e-10 * (1.0 + f[3]));
        assert!((f[6] - 1.0).abs() < 1e-12 && (f[7] - 1.0).abs() < 1e-12);
    }
    let once = aqtv(&["tv-analyze", "--input", "t.pgm", "--refine-once", "--fraction", "0.25"], dir.path());
    assert!(once.status.success());
    let text = String::from_utf8_lossy(&once.stdout).to_string();
    assert_eq!(text.lines().count(), 2);
    let f: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!(f[2] > f[1]);
    assert!(f[6] > 0.0);
    assert!((f[3] - f[5]).abs() <= 1e-10 * (1.0 + f[3]));
    let h = std::fs::read_to_string(dir.path().join("h.csv")).unwrap();
    assert_eq!(h.lines().count(), 5);
}
