//! Flat `key = value` run configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored. Keys
//! are the long flag names with `_` in place of `-`. Later settings override
//! earlier ones, and command-line flags override the file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::acot::AcotScheme;
use crate::encoder::PerturbScope;
use crate::error::{Error, Result};
use crate::trainer::{FeatureChoice, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// TUDataset directory.
    pub dataset: Option<PathBuf>,
    /// File prefix inside `dataset`; defaults to the directory name.
    pub name: Option<String>,
    /// Synthetic preset (`er2` or `er4`) used when no dataset is given.
    pub synthetic: Option<String>,
    pub data_seed: u64,
    pub out: Option<PathBuf>,
    /// Number of consecutive seeds starting at `train.seed`.
    pub seeds: usize,
    /// One run per value; more than one value makes a sweep.
    pub lambdas: Vec<f64>,
    pub parallel: bool,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        RunConfig {
            dataset: None,
            name: None,
            synthetic: None,
            data_seed: 0,
            out: None,
            seeds: 1,
            lambdas: vec![train.lambda],
            parallel: false,
            train,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    let out: Vec<f64> = value.split(',').map(|v| parse(key, v.trim())).collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(Error::Config(format!("{key}: empty list")));
    }
    Ok(out)
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got '{value}'"))),
    }
}

fn parse_enum<T: for<'de> Deserialize<'de>>(key: &str, value: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| Error::Config(format!("{key}: unknown value '{value}'")))
}

fn enum_name<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        _ => unreachable!("unit enums serialize as strings"),
    }
}

fn optional(value: &str) -> Option<&str> {
    (!value.is_empty() && value != "none").then_some(value)
}

impl RunConfig {
    /// Applies one setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        let t = &mut self.train;
        match key.as_str() {
            "dataset" => self.dataset = optional(value).map(PathBuf::from),
            "name" => self.name = optional(value).map(str::to_string),
            "synthetic" => self.synthetic = optional(value).map(str::to_string),
            "data_seed" => self.data_seed = parse(&key, value)?,
            "out" => self.out = optional(value).map(PathBuf::from),
            "seeds" => self.seeds = parse(&key, value)?,
            "lambda" => self.lambdas = parse_list(&key, value)?,
            "parallel" => self.parallel = parse_bool(&key, value)?,
            "epochs" => t.epochs = parse(&key, value)?,
            "batch_size" => t.batch_size = parse(&key, value)?,
            "learning_rate" | "lr" => t.learning_rate = parse(&key, value)?,
            "epsilon" => t.epsilon = parse(&key, value)?,
            "eta" => t.eta = parse(&key, value)?,
            "eta1" => t.eta1 = parse(&key, value)?,
            "tau" => t.tau = parse(&key, value)?,
            "sigma" => t.sigma = parse(&key, value)?,
            "clusters" | "num_clusters" => {
                t.num_clusters = if value == "auto" { None } else { Some(parse(&key, value)?) }
            }
            "estep_count" => t.estep_count = parse(&key, value)?,
            "seed" => t.seed = parse(&key, value)?,
            "layers" => t.layers = parse(&key, value)?,
            "hidden_dim" => t.hidden_dim = parse(&key, value)?,
            "features" => t.features = parse_enum::<FeatureChoice>(&key, value)?,
            "degree_cap" => t.degree_cap = parse(&key, value)?,
            "perturb_scope" => t.perturb_scope = parse_enum::<PerturbScope>(&key, value)?,
            "include_positive_in_denominator" => t.include_positive_in_denominator = parse_bool(&key, value)?,
            "acot_scheme" => t.acot_scheme = parse_enum::<AcotScheme>(&key, value)?,
            "acot_outer_iters" => t.acot_outer_iters = parse(&key, value)?,
            _ => return Err(Error::Config(format!("unknown configuration key '{key}'"))),
        }
        if key == "lambda" {
            self.train.lambda = self.lambdas[0];
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line {}: expected key = value, got '{raw}'", n + 1)))?;
            self.set(k, v).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("config line {}: {msg}", n + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_text(&text)
    }

    /// Canonical rendering; [`RunConfig::from_text`] reads it back to an
    /// equal value, and rendering that again gives the same bytes.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".to_string());
        let t = &self.train;
        let lambdas: Vec<String> = self.lambdas.iter().map(f64::to_string).collect();
        let pairs: Vec<(&str, String)> = vec![
            ("dataset", opt(self.dataset.as_ref().map(|p| p.display().to_string()))),
            ("name", opt(self.name.clone())),
            ("synthetic", opt(self.synthetic.clone())),
            ("data_seed", self.data_seed.to_string()),
            ("out", opt(self.out.as_ref().map(|p| p.display().to_string()))),
            ("seeds", self.seeds.to_string()),
            ("lambda", lambdas.join(",")),
            ("parallel", self.parallel.to_string()),
            ("epochs", t.epochs.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("learning_rate", t.learning_rate.to_string()),
            ("epsilon", t.epsilon.to_string()),
            ("eta", t.eta.to_string()),
            ("eta1", t.eta1.to_string()),
            ("tau", t.tau.to_string()),
            ("sigma", t.sigma.to_string()),
            ("clusters", t.num_clusters.map_or_else(|| "auto".to_string(), |c| c.to_string())),
            ("estep_count", t.estep_count.to_string()),
            ("seed", t.seed.to_string()),
            ("layers", t.layers.to_string()),
            ("hidden_dim", t.hidden_dim.to_string()),
            ("features", enum_name(&t.features)),
            ("degree_cap", t.degree_cap.to_string()),
            ("perturb_scope", enum_name(&t.perturb_scope)),
            ("include_positive_in_denominator", t.include_positive_in_denominator.to_string()),
            ("acot_scheme", enum_name(&t.acot_scheme)),
            ("acot_outer_iters", t.acot_outer_iters.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(Error::Config("seeds must be at least 1".into()));
        }
        if self.dataset.is_some() && self.synthetic.is_some() {
            return Err(Error::Config("give either dataset or synthetic, not both".into()));
        }
        if self.dataset.is_none() && self.synthetic.is_none() {
            return Err(Error::Config("one of dataset or synthetic is required".into()));
        }
        for &lambda in &self.lambdas {
            TrainConfig { lambda, ..self.train.clone() }.validate()?;
        }
        Ok(())
    }
}
