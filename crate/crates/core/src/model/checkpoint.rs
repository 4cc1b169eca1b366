//! Versioned plain-text model checkpoints.
//!
//! One `key = value` pair per line; vectors are space separated. Floats are
//! written with Rust's shortest round-trip formatting, so reading a
//! checkpoint back reproduces every parameter bit for bit.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{LogisticModel, MlpModel, Model, HIDDEN_UNITS};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "rve-scope-model/1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub l_s: usize,
    pub model: Model,
}

impl Checkpoint {
    pub fn new(l_s: usize, model: Model) -> Result<Self> {
        if l_s * l_s != model.input_dim() + 1 {
            return Err(Error::InvalidInput(format!(
                "model input dimension {} does not match l_s = {l_s}",
                model.input_dim()
            )));
        }
        Ok(Checkpoint { l_s, model })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "format = {CHECKPOINT_FORMAT}");
        let _ = writeln!(out, "kind = {}", self.model.kind());
        let _ = writeln!(out, "l_s = {}", self.l_s);
        let _ = writeln!(out, "lambda = {}", self.model.lambda());
        let _ = writeln!(out, "input_dim = {}", self.model.input_dim());
        match &self.model {
            Model::Logistic(m) => {
                let _ = writeln!(out, "weights = {}", join(&m.weights));
                let _ = writeln!(out, "bias = {}", m.bias);
            }
            Model::Mlp(m) => {
                let _ = writeln!(out, "activation = tanh");
                let _ = writeln!(out, "hidden_units = {}", m.hidden_units());
                let _ = writeln!(out, "hidden_weights = {}", join(&m.hidden_weights));
                let _ = writeln!(out, "hidden_bias = {}", join(&m.hidden_bias));
                let _ = writeln!(out, "output_weights = {}", join(&m.output_weights));
                let _ = writeln!(out, "output_bias = {}", m.output_bias);
            }
        }
        out
    }

    pub fn from_text(text: &str) -> std::result::Result<Self, String> {
        let mut fields = HashMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("malformed line {line:?}"))?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            fields
                .get(k)
                .map(String::as_str)
                .ok_or_else(|| format!("missing key `{k}`"))
        };
        if get("format")? != CHECKPOINT_FORMAT {
            return Err(format!(
                "unsupported checkpoint format {:?} (expected {CHECKPOINT_FORMAT})",
                get("format")?
            ));
        }
        let scalar = |k: &str| -> std::result::Result<f64, String> {
            get(k)?.parse().map_err(|_| format!("bad number for `{k}`"))
        };
        let vector = |k: &str| -> std::result::Result<Vec<f64>, String> {
            get(k)?
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| format!("bad number in `{k}`")))
                .collect()
        };
        let l_s: usize = get("l_s")?.parse().map_err(|_| "bad l_s".to_string())?;
        let input_dim: usize = get("input_dim")?
            .parse()
            .map_err(|_| "bad input_dim".to_string())?;
        let lambda = scalar("lambda")?;
        let model = match get("kind")? {
            "logistic" => {
                let weights = vector("weights")?;
                if weights.len() != input_dim {
                    return Err("weights length does not match input_dim".into());
                }
                Model::Logistic(
                    LogisticModel::new(weights, scalar("bias")?, lambda).map_err(|e| e.to_string())?,
                )
            }
            "mlp" => {
                if get("activation")? != "tanh" {
                    return Err("only tanh activation is supported".into());
                }
                let units: usize = get("hidden_units")?
                    .parse()
                    .map_err(|_| "bad hidden_units".to_string())?;
                if units != HIDDEN_UNITS {
                    return Err(format!("expected {HIDDEN_UNITS} hidden units, got {units}"));
                }
                let hidden_weights = vector("hidden_weights")?;
                if hidden_weights.len() != units * input_dim {
                    return Err("hidden_weights length does not match input_dim".into());
                }
                Model::Mlp(
                    MlpModel::new(
                        hidden_weights,
                        vector("hidden_bias")?,
                        vector("output_weights")?,
                        scalar("output_bias")?,
                        lambda,
                    )
                    .map_err(|e| e.to_string())?,
                )
            }
            other => return Err(format!("unknown model kind {other:?}")),
        };
        Checkpoint::new(l_s, model).map_err(|e| e.to_string())
    }
}

fn join(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 20);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v}");
    }
    s
}

pub fn write_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ckpt.to_text()).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_text(&text).map_err(|msg| Error::format(path, msg))
}
