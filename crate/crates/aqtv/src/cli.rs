//! `aqtv` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use aqtv_core::estimator::{fraction_mark, IndicatorField};
use aqtv_core::metrics::{angular_error, endpoint_error, flow_to_color, is_unknown, mssim, psnr, SSIM_WINDOW};
use aqtv_core::model::ModelParams;
use aqtv_core::pipelines::{
    add_gaussian_noise, coarse_pixel_mesh, denoise_adaptive, denoise_uniform, disk_benchmark, optflow_adaptive,
    optflow_warping, DiskSetup, MarkingMode, PipelineConfig, PipelineError,
};
use aqtv_core::tv_analysis::{gradient_norms, verify_compensation, TvError};
use aqtv_core::{mesh::sample_image, QuadMesh};

use crate::config::{ConfigError, ConfigFile};
use crate::export;
use crate::flo::{read_flo, write_flo, FloError};
use crate::image_io::{read_image, write_image, write_rgb, ImageError};

#[derive(Debug, Parser)]
#[command(name = "aqtv", version, about = "Adaptive quad-tree L1-L2-TV denoising and optical flow")]
pub struct Cli {
    /// Worker threads for the sparse factorisations.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Seed for synthetic noise.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Parameter file with `key = value` lines; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Denoise an image on a uniform or adaptive mesh.
    Denoise(DenoiseArgs),
    /// Optical flow between two frames.
    Optflow(OptflowArgs),
    /// Convergence study on the disk with known solution.
    DiskBench(DiskArgs),
    /// Total-variation compensation weights under refinement.
    TvAnalyze(TvArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub alpha1: Option<f64>,
    #[arg(long)]
    pub alpha2: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma1: Option<f64>,
    #[arg(long)]
    pub gamma2: Option<f64>,
    /// Newton tolerance on the residual.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_it: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    /// Clean input image (PGM or PNG).
    #[arg(long)]
    pub input: PathBuf,
    /// Standard deviation of the Gaussian noise added to the input; also
    /// used by the bulk filter.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, conflicts_with = "adaptive")]
    pub uniform: bool,
    #[arg(long)]
    pub adaptive: bool,
    #[arg(long)]
    pub theta: Option<f64>,
    /// Refinement steps; the adaptive run starts on a grid 2^max-ref times coarser.
    #[arg(long)]
    pub max_ref: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Noisy image actually denoised.
    #[arg(long)]
    pub noisy_out: Option<PathBuf>,
    /// Final mesh, `.svg` or `.csv`.
    #[arg(long)]
    pub mesh_out: Option<PathBuf>,
    #[arg(long)]
    pub metrics_out: Option<PathBuf>,
    /// Per-level report of the adaptive run.
    #[arg(long)]
    pub levels_out: Option<PathBuf>,
    /// Newton residual log.
    #[arg(long)]
    pub residuals_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Warping {
    Uniform,
    Adaptive,
    None,
}

#[derive(Debug, Args)]
pub struct OptflowArgs {
    #[arg(long)]
    pub f0: PathBuf,
    #[arg(long)]
    pub f1: PathBuf,
    /// Ground truth `.flo` for error statistics and colour normalisation.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Warping::Adaptive)]
    pub warping: Warping,
    #[arg(long)]
    pub eps_warp: Option<f64>,
    /// Share of cells refined per step.
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub max_ref: Option<usize>,
    #[arg(long)]
    pub max_warps: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub flo_out: Option<PathBuf>,
    /// Colour-coded flow, `.png` or `.ppm`.
    #[arg(long)]
    pub color_out: Option<PathBuf>,
    #[arg(long)]
    pub mesh_out: Option<PathBuf>,
    #[arg(long)]
    pub metrics_out: Option<PathBuf>,
    /// Per-warp report.
    #[arg(long)]
    pub warps_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiskArgs {
    #[arg(long, default_value_t = 1.5)]
    pub radius: f64,
    /// `alpha1,alpha2`.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 1.0])]
    pub alphas: Vec<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Adaptive refinement steps.
    #[arg(long, default_value_t = 5)]
    pub levels: usize,
    /// Cells per side of the uniform runs.
    #[arg(long, value_delimiter = ',', default_values_t = [16usize, 32, 64])]
    pub resolutions: Vec<usize>,
    /// Cells per side of the adaptive start mesh.
    #[arg(long, default_value_t = 16)]
    pub coarse: usize,
    #[arg(long)]
    pub theta: Option<f64>,
    /// Subdivision depth of the disk quadrature.
    #[arg(long, default_value_t = 8)]
    pub depth: u32,
    /// Convergence table; printed to stdout when absent.
    #[arg(long)]
    pub csv_out: Option<PathBuf>,
    /// Final adaptive mesh, `.svg` or `.csv`.
    #[arg(long)]
    pub mesh_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TvArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Exponent of the pointwise gradient norm.
    #[arg(long, default_value_t = 2)]
    pub r: u32,
    /// The analysis starts on a grid 2^coarse-levels times coarser than the image.
    #[arg(long, default_value_t = 3)]
    pub coarse_levels: usize,
    /// Stop after a single refinement step.
    #[arg(long)]
    pub refine_once: bool,
    /// Share of cells refined per step, largest gradients first.
    #[arg(long, default_value_t = 1.0)]
    pub fraction: f64,
    /// One row per refinement step; printed to stdout when absent.
    #[arg(long)]
    pub csv_out: Option<PathBuf>,
    /// Histogram of the weights of the last step.
    #[arg(long)]
    pub hist_out: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Flo(#[from] FloError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Tv(#[from] TvError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

fn clock() -> f64 {
    static ORIGIN: OnceLock<Instant> = OnceLock::new();
    ORIGIN.get_or_init(Instant::now).elapsed().as_secs_f64()
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Write { path: path.to_path_buf(), source })
}

fn write_mesh(path: &Path, mesh: &QuadMesh, u: Option<&aqtv_core::GridFunction>) -> Result<(), CliError> {
    let is_svg = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("svg"));
    let text = if is_svg {
        let shade = u.map(|u| u.channel(0).to_vec());
        export::mesh_svg(mesh, shade.as_deref(), &[])
    } else {
        export::mesh_csv(mesh, u)?
    };
    write_text(path, &text)
}

struct Settings {
    file: ConfigFile,
    seed: u64,
}

fn apply_model(mut p: ModelParams, file: &ConfigFile, flags: &ModelArgs) -> ModelParams {
    let pick = |flag: Option<f64>, file: Option<f64>, default: f64| flag.or(file).unwrap_or(default);
    p.alpha1 = pick(flags.alpha1, file.alpha1, p.alpha1);
    p.alpha2 = pick(flags.alpha2, file.alpha2, p.alpha2);
    p.lambda = pick(flags.lambda, file.lambda, p.lambda);
    p.beta = pick(flags.beta, file.beta, p.beta);
    p.gamma1 = pick(flags.gamma1, file.gamma1, p.gamma1);
    p.gamma2 = pick(flags.gamma2, file.gamma2, p.gamma2);
    p.tol = pick(flags.tol, file.tol, p.tol);
    p.max_it = flags.max_it.or(file.max_it).unwrap_or(p.max_it);
    p
}

fn checked(cfg: PipelineConfig) -> Result<PipelineConfig, CliError> {
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let informational = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            if !informational && !e.to_string().contains("Usage:") {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.exit_code() == 2 {
                eprintln!("\n{}\n\nFor more information, try '--help'.", Cli::command().render_usage());
            }
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    if cli.threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    faer::set_global_parallelism(if cli.threads > 1 { faer::Par::rayon(cli.threads) } else { faer::Par::Seq });
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    let s = Settings { file, seed };
    match cli.command {
        Command::Denoise(a) => denoise(&s, a),
        Command::Optflow(a) => optflow(&s, a),
        Command::DiskBench(a) => disk(&s, a),
        Command::TvAnalyze(a) => tv(a),
    }
}

fn denoise(s: &Settings, a: DenoiseArgs) -> Result<(), CliError> {
    let f = &s.file;
    let base = PipelineConfig::denoise();
    let cfg = checked(PipelineConfig {
        params: apply_model(base.params, f, &a.model),
        theta: a.theta.or(f.theta).unwrap_or(base.theta),
        max_refinements: a.max_ref.or(f.max_ref).unwrap_or(base.max_refinements),
        sigma: a.sigma,
        seed: s.seed,
        clock: Some(clock),
        ..base
    })?;
    let clean = read_image(&a.input)?;
    let (w, h) = (clean.width(), clean.height());
    let noisy = if a.sigma > 0.0 { add_gaussian_noise(&clean, a.sigma, s.seed)? } else { clean.clone() };
    if let Some(p) = &a.noisy_out {
        write_image(&noisy, p)?;
    }
    let t0 = clock();
    let (result, mesh, u, levels, reports) = if a.uniform {
        let (state, report) = denoise_uniform(&noisy, &cfg)?;
        let image = state.u.to_raster(0, w, h).map_err(PipelineError::from)?;
        (image, state.u.mesh().clone(), state.u, Vec::new(), vec![report])
    } else {
        let run = denoise_adaptive(&noisy, &cfg)?;
        let image = run.image(w, h);
        let reports = run.levels.iter().map(|l| l.newton.clone()).collect();
        (image, run.u().mesh().clone(), run.state.u.clone(), run.levels, reports)
    };
    let seconds = clock() - t0;
    if let Some(p) = &a.out {
        write_image(&result, p)?;
    }
    if let Some(p) = &a.mesh_out {
        write_mesh(p, &mesh, Some(&u))?;
    }
    if let Some(p) = &a.levels_out {
        write_text(p, &export::levels_csv(&levels)?)?;
    }
    if let Some(p) = &a.residuals_out {
        write_text(p, &export::residual_log_csv(reports.iter().enumerate())?)?;
    }
    let metrics = vec![
        ("psnr", format!("{:.6}", psnr(&result, &clean))),
        ("mssim", format!("{:.6}", mssim(&result, &clean))),
        ("psnr_noisy", format!("{:.6}", psnr(&noisy, &clean))),
        ("mssim_noisy", format!("{:.6}", mssim(&noisy, &clean))),
        ("ssim_window", SSIM_WINDOW.to_string()),
        ("cells", mesh.n_cells().to_string()),
        ("pixels", (w * h).to_string()),
        ("newton_iterations", reports.iter().map(|r| r.iterations).sum::<usize>().to_string()),
    ];
    if let Some(p) = &a.metrics_out {
        write_text(p, &export::metrics_csv(&metrics)?)?;
    }
    eprintln!(
        "denoise: {} cells, PSNR {} dB, MSSIM {}, {seconds:.2} s",
        mesh.n_cells(),
        metrics[0].1,
        metrics[1].1
    );
    Ok(())
}

fn optflow(s: &Settings, a: OptflowArgs) -> Result<(), CliError> {
    let f = &s.file;
    let base = PipelineConfig::optical_flow();
    let fraction = a.fraction.or(f.fraction);
    let cfg = checked(PipelineConfig {
        params: apply_model(base.params, f, &a.model),
        max_refinements: a.max_ref.or(f.max_ref).unwrap_or(base.max_refinements),
        eps_warp: a.eps_warp.or(f.eps_warp).unwrap_or(base.eps_warp),
        max_warps: a.max_warps.or(f.max_warps).unwrap_or(base.max_warps),
        marking: fraction.map_or(base.marking, MarkingMode::Fraction),
        seed: s.seed,
        clock: Some(clock),
        ..base
    })?;
    let f0 = read_image(&a.f0)?;
    let f1 = read_image(&a.f1)?;
    if !f0.same_shape(&f1) {
        return Err(CliError::Usage(format!(
            "frames differ in size: {}x{} and {}x{}",
            f0.width(),
            f0.height(),
            f1.width(),
            f1.height()
        )));
    }
    let gt = a.gt.as_deref().map(read_flo).transpose()?;
    if let Some(g) = &gt {
        if g.width() != f0.width() || g.height() != f0.height() {
            return Err(CliError::Usage("ground truth and frames differ in size".into()));
        }
    }
    let t0 = clock();
    let run = match a.warping {
        Warping::Adaptive => optflow_adaptive(&f0, &f1, &cfg)?,
        Warping::Uniform => optflow_warping(&f0, &f1, &cfg)?,
        Warping::None => optflow_warping(&f0, &f1, &PipelineConfig { max_warps: 1, ..cfg })?,
    };
    let seconds = clock() - t0;
    let (w, h) = (f0.width(), f0.height());
    let field = run.field(w, h);
    if let Some(p) = &a.flo_out {
        write_flo(&field, p)?;
    }
    if let Some(p) = &a.color_out {
        let max_mag = gt.as_ref().map(|g| {
            g.data().iter().filter(|v| !is_unknown(**v)).map(|v| v[0].hypot(v[1])).fold(0.0, f64::max)
        });
        write_rgb(&flow_to_color(&field, max_mag), p)?;
    }
    let mesh = run.flow.mesh().clone();
    if let Some(p) = &a.mesh_out {
        write_mesh(p, &mesh, None)?;
    }
    if let Some(p) = &a.warps_out {
        write_text(p, &export::warps_csv(&run.warps)?)?;
    }
    let mut metrics = vec![
        ("cells", mesh.n_cells().to_string()),
        ("pixels", (w * h).to_string()),
        ("warps", run.warps.len().to_string()),
    ];
    if let Some(g) = &gt {
        let ee = endpoint_error(&field, g).1;
        let ae = angular_error(&field, g).1;
        metrics.extend([
            ("ee_mean", format!("{:.6}", ee.mean)),
            ("ee_std", format!("{:.6}", ee.std)),
            ("ae_mean", format!("{:.6}", ae.mean)),
            ("ae_std", format!("{:.6}", ae.std)),
            ("known_pixels", ee.count.to_string()),
        ]);
    }
    if let Some(p) = &a.metrics_out {
        write_text(p, &export::metrics_csv(&metrics)?)?;
    }
    let summary: Vec<String> = metrics.iter().map(|(k, v)| format!("{k} {v}")).collect();
    eprintln!("optflow: {}, {seconds:.2} s", summary.join(", "));
    Ok(())
}

fn disk(s: &Settings, a: DiskArgs) -> Result<(), CliError> {
    let f = &s.file;
    if a.alphas.len() != 2 {
        return Err(CliError::Usage(format!("--alphas takes two values, got {}", a.alphas.len())));
    }
    let base = PipelineConfig::disk();
    let mut params = base.params;
    params.alpha1 = a.alphas[0];
    params.alpha2 = a.alphas[1];
    params.lambda = a.lambda.or(f.lambda).unwrap_or(params.lambda);
    params.gamma1 = f.gamma1.unwrap_or(params.gamma1);
    params.gamma2 = f.gamma2.unwrap_or(params.gamma2);
    params.tol = f.tol.unwrap_or(params.tol);
    params.max_it = f.max_it.unwrap_or(params.max_it);
    let cfg = checked(PipelineConfig {
        params,
        theta: a.theta.or(f.theta).unwrap_or(base.theta),
        max_refinements: a.levels,
        clock: Some(clock),
        ..base
    })?;
    if !(a.radius > 0.0) || a.resolutions.contains(&0) || a.coarse == 0 {
        return Err(CliError::Usage("radius and mesh sizes must be positive".into()));
    }
    let setup = DiskSetup { radius: a.radius, resolutions: a.resolutions, coarse: a.coarse, quadrature_depth: a.depth };
    let bench = disk_benchmark(&cfg, &setup)?;
    let table = export::convergence_csv(&bench.rows, bench.exact_level)?;
    match &a.csv_out {
        Some(p) => write_text(p, &table)?,
        None => print!("{table}"),
    }
    if let Some(p) = &a.mesh_out {
        write_mesh(p, bench.adaptive_meshes.last().expect("at least one solve"), None)?;
    }
    for r in &bench.rows {
        eprintln!("{:?} {:>4}: {:>6} dofs, error {:.4e}, {:.2} s", r.kind, r.level, r.dofs, r.error, r.seconds);
    }
    Ok(())
}

fn tv(a: TvArgs) -> Result<(), CliError> {
    if a.r == 0 {
        return Err(CliError::Usage("--r must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&a.fraction) {
        return Err(CliError::Usage(format!("--fraction {} is outside [0, 1]", a.fraction)));
    }
    let image = read_image(&a.input)?;
    let k = a.coarse_levels;
    let mut mesh = coarse_pixel_mesh(image.width(), image.height(), k)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "cells_coarse", "cells_fine", "tv_coarse", "tv_fine", "tv_fine_weighted", "mu_min", "mu_max", "mu_mean"])?;
    let mut last_mu = Vec::new();
    for step in 0.. {
        let u = sample_image(&image, &mesh).map_err(PipelineError::from)?;
        let norms = gradient_norms(&u, a.r)?;
        let eta = IndicatorField::from_raw(mesh.clone(), norms);
        let marked: Vec<_> = fraction_mark(&eta, a.fraction)
            .expect("fraction checked above")
            .into_iter()
            .filter(|&i| (mesh.cell(i).key.level as usize) < k)
            .collect();
        if marked.is_empty() {
            break;
        }
        let fine = Arc::new(mesh.refine(&marked));
        let rep = verify_compensation(&u, &fine, a.r)?;
        w.write_record([
            step.to_string(),
            mesh.n_cells().to_string(),
            fine.n_cells().to_string(),
            format!("{:e}", rep.tv_coarse),
            format!("{:e}", rep.tv_fine),
            format!("{:e}", rep.tv_fine_weighted),
            format!("{:e}", rep.mu_min),
            format!("{:e}", rep.mu_max),
            format!("{:e}", rep.mu_mean),
        ])?;
        last_mu = rep.mu;
        mesh = fine;
        if a.refine_once {
            break;
        }
    }
    let table = String::from_utf8(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?).expect("utf-8");
    match &a.csv_out {
        Some(p) => write_text(p, &table)?,
        None => print!("{table}"),
    }
    if let Some(p) = &a.hist_out {
        write_text(p, &export::histogram_csv(&last_mu, a.bins)?)?;
    }
    Ok(())
}

