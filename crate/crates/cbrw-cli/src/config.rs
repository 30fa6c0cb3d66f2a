//! Configuration loading and resolution.
//!
//! A run is described by a TOML file with three flat sections — `[model]`,
//! `[task]` and `[run]` — every key optional.  Command-line flags override
//! the `[run]` section; the single supported environment override is
//! `CBRW_OUT` for the output directory (flag > environment > file >
//! default).  The fully resolved configuration is echoed into the manifest
//! hash so identical artifacts always trace back to identical inputs.

use std::fmt;
use std::path::PathBuf;

use anyhow::{Context, Result};
use cbrw::lattice::{Point, WalkKernel};
use cbrw::model::{required_mean, CbrwModel, OffspringLaw};
use serde::{Deserialize, Serialize};

/// Marker for configuration-stage failures; the binary maps any error chain
/// containing one to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err<T>(msg: String) -> Result<T> {
    Err(ConfigError(msg).into())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    model: Option<ModelSection>,
    task: Option<TaskSection>,
    run: Option<RunSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    dimension: Option<usize>,
    alpha: Option<f64>,
    offspring: Option<String>,
    offspring_mean: Option<f64>,
    kernel: Option<String>,
    kernel_file: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskSection {
    x: Option<Vec<i32>>,
    y: Option<Vec<i32>>,
    z: Option<Vec<i32>>,
    taboo: Option<Vec<i32>>,
    times: Option<Vec<f64>>,
    s: Option<f64>,
    lambda: Option<f64>,
    quantity: Option<String>,
    suite: Option<String>,
    clock: Option<String>,
    replica_scale: Option<f64>,
    trend_horizon: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    seed: Option<u64>,
    out: Option<String>,
    grid_step: Option<f64>,
    horizon: Option<f64>,
    replicas: Option<u64>,
    threads: Option<usize>,
}

/// Command-line overrides for the `[run]` section.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub threads: Option<usize>,
    pub grid_step: Option<f64>,
    pub horizon: Option<f64>,
    pub replicas: Option<u64>,
}

/// Fully resolved model description.
#[derive(Debug, Clone, Serialize)]
pub struct ModelSpec {
    pub dimension: usize,
    pub alpha: f64,
    pub offspring: String,
    /// None means "calibrated to criticality for this kernel".
    pub offspring_mean: Option<f64>,
    pub kernel: String,
    pub kernel_file: Option<String>,
}

/// Fully resolved task parameters (sites, query times, tunables).
#[derive(Debug, Clone, Serialize)]
pub struct TaskSpec {
    pub x: Vec<i32>,
    pub y: Vec<i32>,
    pub z: Option<Vec<i32>>,
    pub taboo: Option<Vec<i32>>,
    pub times: Vec<f64>,
    pub s: f64,
    pub lambda: f64,
    pub quantity: String,
    pub suite: String,
    pub clock: String,
    pub replica_scale: f64,
    pub trend_horizon: f64,
}

/// Fully resolved run parameters.
#[derive(Debug, Clone, Serialize)]
pub struct RunSpec {
    pub seed: u64,
    pub out: String,
    pub grid_step: f64,
    pub horizon: f64,
    pub replicas: u64,
    /// 0 lets the thread pool pick its own width.
    pub threads: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedConfig {
    pub model: ModelSpec,
    pub task: TaskSpec,
    pub run: RunSpec,
}

/// Loads the optional file, applies the environment and flag overrides and
/// fills in defaults (d = 1 critical reference, y = e₁, seed 1).
pub fn resolve(over: &Overrides) -> Result<ResolvedConfig> {
    let file = match &over.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| {
                ConfigError(format!("cannot read config file {}", path.display()))
            })?;
            match toml::from_str::<FileConfig>(&text) {
                Ok(f) => f,
                Err(e) => {
                    return config_err(format!("{}: {}", path.display(), e));
                }
            }
        }
        None => FileConfig::default(),
    };
    let model = file.model.unwrap_or_default();
    let task = file.task.unwrap_or_default();
    let run = file.run.unwrap_or_default();

    let dimension = model.dimension.unwrap_or(1);
    if dimension == 0 {
        return config_err("model.dimension must be at least 1".into());
    }
    let alpha = model.alpha.unwrap_or(0.5);
    let offspring = model.offspring.unwrap_or_else(|| "binary".into());
    let kernel = match (&model.kernel, &model.kernel_file) {
        (Some(_), Some(_)) => {
            return config_err("model.kernel and model.kernel_file are mutually exclusive".into())
        }
        (Some(name), None) => name.clone(),
        (None, Some(_)) => "file".into(),
        (None, None) => "nearest-neighbor".into(),
    };

    let out = over
        .out
        .clone()
        .or_else(|| std::env::var("CBRW_OUT").ok())
        .or(run.out)
        .unwrap_or_else(|| "out".into());

    let y = task.y.unwrap_or_else(|| {
        let mut v = vec![0; dimension];
        v[0] = 1;
        v
    });
    Ok(ResolvedConfig {
        model: ModelSpec {
            dimension,
            alpha,
            offspring,
            offspring_mean: model.offspring_mean,
            kernel,
            kernel_file: model.kernel_file,
        },
        task: TaskSpec {
            x: task.x.unwrap_or_else(|| vec![0; dimension]),
            y,
            z: task.z,
            taboo: task.taboo,
            times: task.times.unwrap_or_else(|| vec![5.0, 10.0, 20.0, 40.0]),
            s: task.s.unwrap_or(0.0),
            lambda: task.lambda.unwrap_or(1.0),
            quantity: task.quantity.unwrap_or_else(|| "mean".into()),
            suite: task.suite.unwrap_or_else(|| "all".into()),
            clock: task.clock.unwrap_or_else(|| "departure".into()),
            replica_scale: task.replica_scale.unwrap_or(1.0),
            trend_horizon: task.trend_horizon.unwrap_or(2000.0),
        },
        run: RunSpec {
            seed: over.seed.or(run.seed).unwrap_or(1),
            out,
            grid_step: over.grid_step.or(run.grid_step).unwrap_or(0.05),
            horizon: over.horizon.or(run.horizon).unwrap_or(40.0),
            replicas: over.replicas.or(run.replicas).unwrap_or(100_000),
            threads: over.threads.or(run.threads).unwrap_or(0),
        },
    })
}

impl ResolvedConfig {
    /// Builds only the driving-walk kernel (used by the branching-free
    /// tasks, which must not be constrained by criticality).
    pub fn build_kernel(&self) -> Result<WalkKernel> {
        match &self.model.kernel_file {
            Some(path) => {
                let p = std::path::Path::new(path);
                if !p.exists() {
                    return config_err(format!(
                        "model.kernel_file: no such file '{}'",
                        p.display()
                    ));
                }
                let k = WalkKernel::from_file(p, true)
                    .with_context(|| ConfigError(format!("model.kernel_file: '{}'", path)))?;
                if k.dim() != self.model.dimension {
                    return config_err(format!(
                        "model.kernel_file: kernel is {}-dimensional but model.dimension = {}",
                        k.dim(),
                        self.model.dimension
                    ));
                }
                Ok(k)
            }
            None => match self.model.kernel.as_str() {
                "nearest-neighbor" => Ok(WalkKernel::nearest_neighbor(self.model.dimension)),
                other => config_err(format!(
                    "model.kernel: unknown kernel '{}' (expected nearest-neighbor, or set model.kernel_file)",
                    other
                )),
            },
        }
    }

    /// Builds the model this configuration describes.
    pub fn build_model(&self) -> Result<CbrwModel> {
        let kernel = self.build_kernel()?;
        let law = match self.model.offspring.as_str() {
            "degenerate" => OffspringLaw::point_mass_one(),
            family @ ("binary" | "geometric") => {
                let mean = match self.model.offspring_mean {
                    Some(m) => m,
                    None => required_mean(&kernel, self.model.alpha)?,
                };
                if family == "binary" {
                    OffspringLaw::binary(mean)?
                } else {
                    OffspringLaw::geometric(mean)?
                }
            }
            other => {
                return config_err(format!(
                    "model.offspring: unknown family '{}' (expected binary, geometric or degenerate)",
                    other
                ))
            }
        };
        Ok(CbrwModel::new(kernel, self.model.alpha, law)?)
    }

    /// Converts a configured site to a [`Point`], checking the dimension.
    pub fn site(&self, key: &str, coords: &[i32]) -> Result<Point> {
        if coords.len() != self.model.dimension {
            return config_err(format!(
                "task.{}: expected {} coordinates, got {}",
                key,
                self.model.dimension,
                coords.len()
            ));
        }
        Ok(Point::new(coords))
    }

    /// Canonical JSON used for the manifest's configuration hash.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serialization cannot fail")
    }
}
