//! Command-line front end: `run`, `generate` and `curve`.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 I/O or file
//! format error, 4 generation failure, 5 numerical failure.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::dataset::extract_dataset;
use crate::error::{Error, Result};
use crate::micrograph::{
    binarize, generate, otsu_threshold, read_intensity_image, read_scale_sidecar, save_pgm,
    write_scale_sidecar, DEFAULT_SCALE,
};
use crate::model::{write_checkpoint, Checkpoint};
use crate::rve::{detect_elbow, fit_model, sweep_with_model, PipelineConfig};
use crate::score::{compute_score_field, write_score_dump};

use config::{merge, read_config_file, GenerateConfig, RawConfig, RunConfig, GENERATE_KEYS, RUN_KEYS};

pub const THREADS_ENV: &str = "RVE_SCOPE_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "rve-scope",
    version,
    about = "Representative volume element size of a two-phase micrograph from Fisher score stationarity"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit, score and sweep a micrograph, then select the RVE size.
    Run(RunArgs),
    /// Write a synthetic micrograph (PGM plus scale sidecar).
    Generate(GenerateArgs),
    /// Re-run elbow detection on a curve CSV written by `run`.
    Curve(CurveArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Micrograph (PGM P2/P5 or 8-bit grayscale PNG).
    #[arg(long)]
    input: Option<String>,
    /// Physical size of one pixel in µm (default: sidecar, else 1.0).
    #[arg(long)]
    scale: Option<String>,
    /// Intensity threshold; pixels >= threshold are particle (default: Otsu).
    #[arg(long)]
    threshold: Option<String>,
    /// Neighborhood side l_s (odd, default 21).
    #[arg(long = "ls")]
    l_s: Option<String>,
    /// logistic or mlp.
    #[arg(long)]
    model: Option<String>,
    /// Ridge penalty on non-bias weights (default 1e-4).
    #[arg(long)]
    lambda: Option<String>,
    /// Scaling matrix: full covariance or its diagonal (default full).
    #[arg(long = "a", visible_alias = "a-mode")]
    a_mode: Option<String>,
    /// Explicit grid: start:end:step or a comma-separated list.
    #[arg(long)]
    sizes: Option<String>,
    #[arg(long)]
    size_min: Option<String>,
    #[arg(long)]
    size_max: Option<String>,
    /// Number of grid sizes (default 12).
    #[arg(long)]
    size_count: Option<String>,
    /// geometric (default) or linear.
    #[arg(long)]
    spacing: Option<String>,
    /// Evaluate every stride-th window position (default 1).
    #[arg(long)]
    stride: Option<String>,
    /// Covariance ridge relative to the mean eigenvalue (default 1e-8).
    #[arg(long)]
    ridge_eps: Option<String>,
    /// Cross-validation folds; 0 skips (default 5).
    #[arg(long)]
    cv_folds: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    learning_rate: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    sgd_epochs: Option<String>,
    /// Maximum full-batch polish iterations.
    #[arg(long)]
    max_iter: Option<String>,
    #[arg(long)]
    grad_tol: Option<String>,
    /// Curve CSV output.
    #[arg(long)]
    csv: Option<String>,
    /// SVG plot output.
    #[arg(long)]
    svg: Option<String>,
    /// Report output (the report is always printed to stdout).
    #[arg(long)]
    report: Option<String>,
    /// Write the fitted model checkpoint here.
    #[arg(long)]
    save_model: Option<String>,
    /// Write the binary score dump here.
    #[arg(long)]
    dump_scores: Option<String>,
    /// Worker threads (falls back to RVE_SCOPE_THREADS, then all cores).
    #[arg(long, env = THREADS_ENV)]
    threads: Option<String>,
}

impl RunArgs {
    fn raw(&self) -> RawConfig {
        let pairs = [
            ("input", &self.input),
            ("scale", &self.scale),
            ("threshold", &self.threshold),
            ("l_s", &self.l_s),
            ("model", &self.model),
            ("lambda", &self.lambda),
            ("a_mode", &self.a_mode),
            ("sizes", &self.sizes),
            ("size_min", &self.size_min),
            ("size_max", &self.size_max),
            ("size_count", &self.size_count),
            ("spacing", &self.spacing),
            ("stride", &self.stride),
            ("ridge_eps", &self.ridge_eps),
            ("cv_folds", &self.cv_folds),
            ("seed", &self.seed),
            ("learning_rate", &self.learning_rate),
            ("batch_size", &self.batch_size),
            ("sgd_epochs", &self.sgd_epochs),
            ("max_iter", &self.max_iter),
            ("grad_tol", &self.grad_tol),
            ("csv", &self.csv),
            ("svg", &self.svg),
            ("report", &self.report),
            ("save_model", &self.save_model),
            ("dump_scores", &self.dump_scores),
            ("threads", &self.threads),
        ];
        collect(&pairs)
    }
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// boolean-disks (default), two-region or clustered.
    #[arg(long)]
    kind: Option<String>,
    /// Rows (default 512).
    #[arg(long)]
    height: Option<String>,
    /// Columns (default: height).
    #[arg(long)]
    width: Option<String>,
    /// Target particle volume fraction.
    #[arg(long)]
    vf: Option<String>,
    /// Disk radius in pixels (default 6).
    #[arg(long)]
    radius: Option<String>,
    /// Left-half volume fraction (two-region).
    #[arg(long)]
    left_vf: Option<String>,
    /// Right-half volume fraction (two-region).
    #[arg(long)]
    right_vf: Option<String>,
    /// Disks per cluster (clustered, default 5).
    #[arg(long)]
    offspring: Option<String>,
    /// Cluster radius in pixels (clustered, default 4 x radius).
    #[arg(long)]
    cluster_radius: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// µm per pixel written to the sidecar (default 1.0).
    #[arg(long)]
    scale: Option<String>,
    /// Output PGM path.
    #[arg(long)]
    output: Option<String>,
    #[arg(long, env = THREADS_ENV)]
    threads: Option<String>,
}

impl GenerateArgs {
    fn raw(&self) -> RawConfig {
        let pairs = [
            ("kind", &self.kind),
            ("height", &self.height),
            ("width", &self.width),
            ("vf", &self.vf),
            ("radius", &self.radius),
            ("left_vf", &self.left_vf),
            ("right_vf", &self.right_vf),
            ("offspring", &self.offspring),
            ("cluster_radius", &self.cluster_radius),
            ("seed", &self.seed),
            ("scale", &self.scale),
            ("output", &self.output),
            ("threads", &self.threads),
        ];
        collect(&pairs)
    }
}

#[derive(Args, Debug)]
struct CurveArgs {
    /// Curve CSV written by `run`.
    #[arg(long)]
    csv: PathBuf,
    /// Redraw the plot here.
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Also write the selection summary here.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn collect(pairs: &[(&str, &Option<String>)]) -> RawConfig {
    pairs
        .iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
        .collect()
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run(args) => {
            let file = match &args.config {
                Some(p) => read_config_file(p, RUN_KEYS)?,
                None => RawConfig::new(),
            };
            let cfg = RunConfig::from_raw(&merge(file, args.raw()))?;
            with_threads(cfg.threads, || run(&cfg))
        }
        Command::Generate(args) => {
            let file = match &args.config {
                Some(p) => read_config_file(p, GENERATE_KEYS)?,
                None => RawConfig::new(),
            };
            let cfg = GenerateConfig::from_raw(&merge(file, args.raw()))?;
            with_threads(cfg.threads, || generate_command(&cfg))
        }
        Command::Curve(args) => curve_command(&args),
    }
}

fn with_threads<T>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T>
where
    T: Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(f)
}

fn run(cfg: &RunConfig) -> Result<()> {
    let image = read_intensity_image(&cfg.input)?;
    let threshold = cfg
        .threshold
        .unwrap_or_else(|| otsu_threshold(&image.histogram()));
    let scale = match cfg.scale {
        Some(s) => s,
        None => read_scale_sidecar(&cfg.input)?.unwrap_or(DEFAULT_SCALE),
    };
    let micrograph = binarize(&image, threshold, scale)?;
    drop(image);

    let l_s = cfg.pipeline.l_s;
    if l_s > micrograph.height().min(micrograph.width()) {
        return Err(Error::Config(format!(
            "l_s = {l_s} does not fit in the {}x{} micrograph",
            micrograph.height(),
            micrograph.width()
        )));
    }
    let rows = micrograph.height() - (l_s - 1);
    let cols = micrograph.width() - (l_s - 1);
    let grid = cfg.grid.resolve(rows, cols, l_s)?;
    let pipeline = PipelineConfig {
        grid: Some(grid.clone()),
        ..cfg.pipeline.clone()
    };
    let echo = cfg.to_text(scale, threshold, &grid);

    let (model, fit) = fit_model(&micrograph, &pipeline)?;
    if let Some(path) = &cfg.save_model {
        write_checkpoint(&Checkpoint::new(l_s, model.clone())?, path)?;
    }
    if let Some(path) = &cfg.dump_scores {
        let ds = extract_dataset(&micrograph, l_s)?;
        write_score_dump(&compute_score_field(&ds, &model)?, path)?;
    }
    let curve = sweep_with_model(&micrograph, &model, fit, &pipeline)?;

    let report = output::run_report(&echo, &curve, micrograph.volume_fraction());
    if let Some(path) = &cfg.csv {
        output::write_text(path, &output::csv_text(&output::curve_rows(&curve)))?;
    }
    if let Some(path) = &cfg.svg {
        let pts: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.w as f64, p.mean_d)).collect();
        output::write_text(path, &output::svg_plot(&pts, curve.rve_pixels as f64))?;
    }
    if let Some(path) = &cfg.report {
        output::write_text(path, &report)?;
    }
    print!("{report}");
    Ok(())
}

fn generate_command(cfg: &GenerateConfig) -> Result<()> {
    let m = generate(&cfg.spec, cfg.height, cfg.width)?.with_scale(cfg.scale)?;
    save_pgm(&m, &cfg.output)?;
    write_scale_sidecar(&cfg.output, cfg.scale)?;
    println!(
        "wrote {} ({}x{}, {}, seed {}): realized volume fraction {:.6}",
        cfg.output.display(),
        m.height(),
        m.width(),
        cfg.spec.kind.name(),
        cfg.spec.seed,
        m.volume_fraction()
    );
    Ok(())
}

fn curve_command(args: &CurveArgs) -> Result<()> {
    let rows = output::read_csv(&args.csv)?;
    if rows.is_empty() {
        return Err(Error::format(&args.csv, "curve has no rows"));
    }
    let scale = if rows[0].w_px > 0 {
        rows[0].w_um / rows[0].w_px as f64
    } else {
        DEFAULT_SCALE
    };
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.w_px as f64, r.d_bar)).collect();
    let elbow = detect_elbow(&pts)?;
    let sizes: Vec<usize> = rows.iter().map(|r| r.w_px).collect();
    let summary = output::elbow_summary(&sizes, &elbow, scale);
    if let Some(path) = &args.svg {
        output::write_text(path, &output::svg_plot(&pts, sizes[elbow.rve_index] as f64))?;
    }
    if let Some(path) = &args.report {
        output::write_text(path, &summary)?;
    }
    print!("{summary}");
    Ok(())
}
