//! Flat `key = value` configuration and its resolution into typed settings.
//!
//! Values from the command line replace values from the config file key by
//! key. The grid keys form one group: if the command line sets any of them,
//! every grid key from the file is ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::micrograph::GeneratorSpec;
use crate::model::{ModelKind, OptimizerSettings, DEFAULT_LAMBDA};
use crate::rve::{PipelineConfig, SizeGrid, Spacing, DEFAULT_GRID_COUNT};
use crate::score::{CovarianceMode, DEFAULT_RIDGE_EPS};

/// Raw string values keyed by config name.
pub type RawConfig = BTreeMap<String, String>;

pub const RUN_KEYS: &[&str] = &[
    "input",
    "scale",
    "threshold",
    "l_s",
    "model",
    "lambda",
    "a_mode",
    "sizes",
    "size_min",
    "size_max",
    "size_count",
    "spacing",
    "stride",
    "ridge_eps",
    "cv_folds",
    "seed",
    "learning_rate",
    "batch_size",
    "sgd_epochs",
    "max_iter",
    "grad_tol",
    "csv",
    "svg",
    "report",
    "save_model",
    "dump_scores",
    "threads",
];

pub const GENERATE_KEYS: &[&str] = &[
    "kind",
    "height",
    "width",
    "vf",
    "radius",
    "left_vf",
    "right_vf",
    "offspring",
    "cluster_radius",
    "seed",
    "scale",
    "output",
    "threads",
];

const GRID_KEYS: &[&str] = &["sizes", "size_min", "size_max", "size_count", "spacing"];

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_config_text(text: &str, allowed: &[&str]) -> std::result::Result<RawConfig, String> {
    let mut out = RawConfig::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", lineno + 1))?;
        let key = k.trim().replace('-', "_");
        if !allowed.contains(&key.as_str()) {
            return Err(format!("line {}: unknown key `{key}`", lineno + 1));
        }
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(format!("line {}: key `{key}` given twice", lineno + 1));
        }
    }
    Ok(out)
}

pub fn read_config_file(path: &Path, allowed: &[&str]) -> Result<RawConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_text(&text, allowed)
        .map_err(|msg| Error::Config(format!("{}: {msg}", path.display())))
}

/// Overlays command-line values on file values.
pub fn merge(file: RawConfig, cli: RawConfig) -> RawConfig {
    let cli_sets_grid = GRID_KEYS.iter().any(|k| cli.contains_key(*k));
    let mut out: RawConfig = file
        .into_iter()
        .filter(|(k, _)| !(cli_sets_grid && GRID_KEYS.contains(&k.as_str())))
        .collect();
    out.extend(cli);
    out
}

fn get<T: FromStr>(raw: &RawConfig, key: &str) -> Result<Option<T>> {
    raw.get(key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|_| Error::Config(format!("invalid value {v:?} for `{key}`")))
        })
        .transpose()
}

fn get_or<T: FromStr>(raw: &RawConfig, key: &str, default: T) -> Result<T> {
    Ok(get(raw, key)?.unwrap_or(default))
}

/// How the candidate sizes are chosen; resolved once the score field size is known.
#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    Explicit(SizeGrid),
    Spaced {
        min: Option<usize>,
        max: Option<usize>,
        count: Option<usize>,
        spacing: Spacing,
    },
}

impl GridSpec {
    /// Missing end points default to `max(8, 2 l_s)` and half the shorter
    /// side of the `rows x cols` score field.
    pub fn resolve(&self, rows: usize, cols: usize, l_s: usize) -> Result<SizeGrid> {
        match self {
            GridSpec::Explicit(g) => Ok(g.clone()),
            GridSpec::Spaced {
                min,
                max,
                count,
                spacing,
            } => {
                let lo = min.unwrap_or((2 * l_s).max(8));
                let hi = max.unwrap_or(rows.min(cols) / 2);
                let count = count.unwrap_or(DEFAULT_GRID_COUNT);
                SizeGrid::spaced(lo, hi, count, *spacing).map_err(|_| {
                    Error::Config(format!(
                        "cannot build a grid of {count} sizes from {lo} to {hi} for a \
                         {rows}x{cols} score field; set sizes explicitly"
                    ))
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: PathBuf,
    /// µm per pixel; `None` defers to the sidecar file, then 1.0.
    pub scale: Option<f64>,
    /// `None` selects Otsu's threshold.
    pub threshold: Option<u16>,
    pub pipeline: PipelineConfig,
    pub grid: GridSpec,
    pub csv: Option<PathBuf>,
    pub svg: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub save_model: Option<PathBuf>,
    pub dump_scores: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let input: PathBuf = get(raw, "input")?
            .ok_or_else(|| Error::Config("no input micrograph given (use --input)".into()))?;
        let scale: Option<f64> = get(raw, "scale")?;
        if let Some(s) = scale {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Config(format!("scale must be positive, got {s}")));
            }
        }
        let l_s: usize = get_or(raw, "l_s", 21)?;
        if l_s < 3 || l_s % 2 == 0 {
            return Err(Error::Config(format!(
                "l_s must be an odd integer >= 3, got {l_s}"
            )));
        }
        let lambda: f64 = get_or(raw, "lambda", DEFAULT_LAMBDA)?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
        }
        let ridge_eps: f64 = get_or(raw, "ridge_eps", DEFAULT_RIDGE_EPS)?;
        if !(ridge_eps >= 0.0 && ridge_eps.is_finite()) {
            return Err(Error::Config(format!("ridge_eps must be >= 0, got {ridge_eps}")));
        }
        let stride: usize = get_or(raw, "stride", 1)?;
        if stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        let cv_folds: usize = get_or(raw, "cv_folds", 5)?;
        if cv_folds == 1 {
            return Err(Error::Config(
                "cv_folds must be 0 (skip) or at least 2".into(),
            ));
        }
        let defaults = OptimizerSettings::default();
        let optimizer = OptimizerSettings {
            learning_rate: get_or(raw, "learning_rate", defaults.learning_rate)?,
            batch_size: get_or(raw, "batch_size", defaults.batch_size)?,
            sgd_epochs: get_or(raw, "sgd_epochs", defaults.sgd_epochs)?,
            polish_max_iter: get_or(raw, "max_iter", defaults.polish_max_iter)?,
            grad_tol: get_or(raw, "grad_tol", defaults.grad_tol)?,
            ..defaults
        };
        if !(optimizer.learning_rate > 0.0) || optimizer.batch_size == 0 || !(optimizer.grad_tol > 0.0) {
            return Err(Error::Config(
                "learning_rate, batch_size and grad_tol must be positive".into(),
            ));
        }

        let spaced_keys = ["size_min", "size_max", "size_count", "spacing"];
        let grid = if let Some(sizes) = raw.get("sizes") {
            if let Some(k) = spaced_keys.iter().find(|k| raw.contains_key(**k)) {
                return Err(Error::Config(format!(
                    "conflicting grid settings: `sizes` cannot be combined with `{k}`"
                )));
            }
            GridSpec::Explicit(sizes.parse()?)
        } else {
            GridSpec::Spaced {
                min: get(raw, "size_min")?,
                max: get(raw, "size_max")?,
                count: get(raw, "size_count")?,
                spacing: match raw.get("spacing") {
                    Some(s) => s.parse()?,
                    None => Spacing::Geometric,
                },
            }
        };

        let threads: Option<usize> = get(raw, "threads")?;
        if threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        let model: ModelKind = match raw.get("model") {
            Some(s) => s.parse()?,
            None => ModelKind::Logistic,
        };
        let a_mode: CovarianceMode = match raw.get("a_mode") {
            Some(s) => s.parse()?,
            None => CovarianceMode::Full,
        };
        let threshold: Option<u16> = match raw.get("threshold").map(String::as_str) {
            None | Some("otsu") => None,
            Some(_) => get(raw, "threshold")?,
        };

        Ok(RunConfig {
            input,
            scale,
            threshold,
            pipeline: PipelineConfig {
                l_s,
                model,
                lambda,
                optimizer,
                a_mode,
                grid: None,
                stride,
                ridge_eps,
                cv_folds,
                seed: get_or(raw, "seed", 0)?,
            },
            grid,
            csv: get(raw, "csv")?,
            svg: get(raw, "svg")?,
            report: get(raw, "report")?,
            save_model: get(raw, "save_model")?,
            dump_scores: get(raw, "dump_scores")?,
            threads,
        })
    }

    /// Every setting as config-file text. `scale`, `threshold` and `grid`
    /// are the values actually used, so the text reproduces the run.
    pub fn to_text(&self, scale: f64, threshold: u16, grid: &SizeGrid) -> String {
        let p = &self.pipeline;
        let o = &p.optimizer;
        let mut s = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("input", &self.input.display());
        kv("scale", &scale);
        kv("threshold", &threshold);
        kv("l_s", &p.l_s);
        kv("model", &p.model);
        kv("lambda", &p.lambda);
        kv("a_mode", &p.a_mode);
        kv("sizes", grid);
        kv("stride", &p.stride);
        kv("ridge_eps", &p.ridge_eps);
        kv("cv_folds", &p.cv_folds);
        kv("seed", &p.seed);
        kv("learning_rate", &o.learning_rate);
        kv("batch_size", &o.batch_size);
        kv("sgd_epochs", &o.sgd_epochs);
        kv("max_iter", &o.polish_max_iter);
        kv("grad_tol", &o.grad_tol);
        for (k, v) in [
            ("csv", &self.csv),
            ("svg", &self.svg),
            ("report", &self.report),
            ("save_model", &self.save_model),
            ("dump_scores", &self.dump_scores),
        ] {
            if let Some(path) = v {
                kv(k, &path.display());
            }
        }
        if let Some(t) = self.threads {
            kv("threads", &t);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateConfig {
    pub spec: GeneratorSpec,
    pub height: usize,
    pub width: usize,
    pub scale: f64,
    pub output: PathBuf,
    pub threads: Option<usize>,
}

impl GenerateConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let output: PathBuf = get(raw, "output")?
            .ok_or_else(|| Error::Config("no output path given (use --output)".into()))?;
        let height: usize = get_or(raw, "height", 512)?;
        let width: usize = get_or(raw, "width", height)?;
        let scale: f64 = get_or(raw, "scale", 1.0)?;
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Config(format!("scale must be positive, got {scale}")));
        }
        let radius: f64 = get_or(raw, "radius", 6.0)?;
        let seed: u64 = get_or(raw, "seed", 0)?;
        let kind = raw.get("kind").map(String::as_str).unwrap_or("boolean-disks");
        let vf = || -> Result<f64> {
            get::<f64>(raw, "vf")?.ok_or_else(|| Error::Config(format!("{kind} needs --vf")))
        };
        let spec = match kind {
            "boolean-disks" => GeneratorSpec::boolean_disks(vf()?, radius, seed),
            "two-region" => {
                let left = get::<f64>(raw, "left_vf")?;
                let right = get::<f64>(raw, "right_vf")?;
                match (left, right) {
                    (Some(l), Some(r)) => GeneratorSpec::two_region(l, r, radius, seed),
                    _ => {
                        return Err(Error::Config(
                            "two-region needs --left-vf and --right-vf".into(),
                        ))
                    }
                }
            }
            "clustered" => GeneratorSpec::clustered(
                vf()?,
                radius,
                get_or(raw, "offspring", 5)?,
                get_or(raw, "cluster_radius", 4.0 * radius)?,
                seed,
            ),
            other => {
                return Err(Error::Config(format!(
                    "unknown generator kind {other:?} (expected boolean-disks, two-region or clustered)"
                )))
            }
        };
        let threads: Option<usize> = get(raw, "threads")?;
        if threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(GenerateConfig {
            spec,
            height,
            width,
            scale,
            output,
            threads,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(pairs: &[(&str, &str)]) -> RawConfig {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn parses_comments_and_hyphens() {
        let text = "# run settings\nl-s = 9\n\nmodel = mlp  # network\n";
        let c = parse_config_text(text, RUN_KEYS).unwrap();
        assert_eq!(c, raw(&[("l_s", "9"), ("model", "mlp")]));
        assert!(parse_config_text("colour = red", RUN_KEYS).is_err());
        assert!(parse_config_text("l_s = 3\nl_s = 5", RUN_KEYS).is_err());
        assert!(parse_config_text("l_s 3", RUN_KEYS).is_err());
    }

    #[test]
    fn command_line_overrides_file() {
        let file = raw(&[("l_s", "9"), ("sizes", "8:64:8"), ("seed", "3")]);
        let cli = raw(&[("l_s", "11"), ("size_max", "40")]);
        let m = merge(file, cli);
        assert_eq!(m, raw(&[("l_s", "11"), ("seed", "3"), ("size_max", "40")]));
    }

    #[test]
    fn resolves_defaults() {
        let c = RunConfig::from_raw(&raw(&[("input", "m.pgm")])).unwrap();
        assert_eq!(c.pipeline.l_s, 21);
        assert_eq!(c.pipeline.a_mode, CovarianceMode::Full);
        assert_eq!(c.threshold, None);
        let g = c.grid.resolve(480, 500, 21).unwrap();
        assert_eq!((g.sizes()[0], g.max(), g.len()), (42, 240, 12));
    }

    #[test]
    fn rejects_bad_values() {
        for pairs in [
            vec![("input", "m.pgm"), ("l_s", "20")],
            vec![("input", "m.pgm"), ("l_s", "1")],
            vec![("input", "m.pgm"), ("sizes", "8:64:8"), ("size_min", "4")],
            vec![("input", "m.pgm"), ("a_mode", "cholesky")],
            vec![("input", "m.pgm"), ("lambda", "-1")],
            vec![("input", "m.pgm"), ("stride", "0")],
            vec![("input", "m.pgm"), ("seed", "x")],
            vec![("l_s", "9")],
        ] {
            match RunConfig::from_raw(&raw(&pairs)) {
                Err(e) => assert_eq!(e.exit_code(), 2, "{pairs:?}"),
                Ok(_) => panic!("accepted {pairs:?}"),
            }
        }
    }

    #[test]
    fn echo_round_trips() {
        let c = RunConfig::from_raw(&raw(&[
            ("input", "m.pgm"),
            ("l_s", "9"),
            ("model", "mlp"),
            ("lambda", "0.5"),
            ("csv", "out.csv"),
        ]))
        .unwrap();
        let grid = SizeGrid::linear(8, 40, 8).unwrap();
        let text = c.to_text(0.25, 128, &grid);
        let back = RunConfig::from_raw(&parse_config_text(&text, RUN_KEYS).unwrap()).unwrap();
        assert_eq!(back.pipeline, c.pipeline);
        assert_eq!(back.grid, GridSpec::Explicit(grid));
        assert_eq!((back.scale, back.threshold), (Some(0.25), Some(128)));
        assert_eq!(back.csv, c.csv);
    }

    #[test]
    fn generator_settings() {
        let g = GenerateConfig::from_raw(&raw(&[
            ("output", "g.pgm"),
            ("kind", "two-region"),
            ("left_vf", "0.05"),
            ("right_vf", "0.2"),
        ]))
        .unwrap();
        assert_eq!(g.spec.target_vf, 0.125);
        assert_eq!((g.height, g.width), (512, 512));
        assert!(GenerateConfig::from_raw(&raw(&[("output", "g.pgm")])).is_err());
        assert!(GenerateConfig::from_raw(&raw(&[("output", "g.pgm"), ("kind", "voronoi")])).is_err());
    }
}
