//! Experiment specs: flat `key = value` files plus flag overrides.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use complete_hinge::datasets::{GeneratorParams, BUILTIN_NAMES};
use complete_hinge::neural::{MlpConfig, MlpLoss};
use complete_hinge::optimizer::{LinearLoss, RecordSchedule};
use complete_hinge::TrainConfig;

use crate::{CliError, Result};

const GENERATOR_KEYS: [&str; 6] = ["dim", "n", "margin", "spread", "support", "non_separable"];
const MNIST_KEYS: [&str; 3] = ["mnist_dir", "train_limit", "test_limit"];
const LINEAR_KEYS: [&str; 4] = ["u0", "beta0", "record_every", "diagnostics"];
const MLP_KEYS: [&str; 5] = [
    "hidden",
    "batch_size",
    "eval_every",
    "baseline",
    "baseline_eta",
];
const COMMON_KEYS: [&str; 8] = [
    "dataset", "loss", "eta", "alpha", "zeta", "iters", "seed", "out",
];

/// Raw settings, later keys overriding earlier ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings(BTreeMap<String, String>);

impl Settings {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Spec(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim();
            if !is_known(key) {
                return Err(CliError::Spec(format!(
                    "line {}: unknown key `{key}`",
                    lineno + 1
                )));
            }
            map.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self(map))
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.0.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    /// Later settings win.
    pub fn merge(&mut self, other: &Settings) {
        for (k, v) in &other.0 {
            self.0.insert(k.clone(), v.clone());
        }
    }

    /// Canonical `key = value` text, sorted by key. The output location is
    /// left out so that a run renders the same wherever it is written.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.0.iter().filter(|(k, _)| k.as_str() != "out") {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Spec(format!("{key} = {v}: {e}")))
            })
            .transpose()
    }

    fn has_any(&self, keys: &[&str]) -> Option<String> {
        keys.iter()
            .find(|k| self.0.contains_key(**k))
            .map(|k| k.to_string())
    }
}

fn is_known(key: &str) -> bool {
    [
        &GENERATOR_KEYS[..],
        &MNIST_KEYS,
        &LINEAR_KEYS,
        &MLP_KEYS,
        &COMMON_KEYS,
    ]
    .iter()
    .any(|ks| ks.contains(&key))
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Builtin(String),
    Csv(PathBuf),
    Generated(GeneratorParams),
    Mnist {
        dir: PathBuf,
        train_limit: usize,
        test_limit: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear {
        config: TrainConfig,
        diagnostics: bool,
    },
    Mlp {
        config: MlpConfig,
        baseline: Option<MlpConfig>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub source: DataSource,
    pub model: Model,
    pub out: PathBuf,
    pub seed: u64,
    /// The settings the spec was built from, written next to the artifacts.
    pub settings: Settings,
}

impl ExperimentSpec {
    pub fn from_settings(settings: Settings) -> Result<Self> {
        let s = &settings;
        let seed = s.parsed::<u64>("seed")?.unwrap_or(0);
        let dataset = s
            .get("dataset")
            .ok_or_else(|| CliError::Spec("missing `dataset`".into()))?;
        let out = PathBuf::from(
            s.get("out")
                .ok_or_else(|| CliError::Spec("missing `out`".into()))?,
        );

        let source = match dataset {
            "generate" => DataSource::Generated(generator_params(s, seed)?),
            "mnist" => DataSource::Mnist {
                dir: PathBuf::from(s.get("mnist_dir").unwrap_or("data/mnist")),
                train_limit: s.parsed("train_limit")?.unwrap_or(8000),
                test_limit: s.parsed("test_limit")?.unwrap_or(2000),
            },
            name if BUILTIN_NAMES.contains(&name) => DataSource::Builtin(name.to_string()),
            path => DataSource::Csv(PathBuf::from(path)),
        };
        if !matches!(source, DataSource::Generated(_)) {
            if let Some(k) = s.has_any(&GENERATOR_KEYS) {
                return Err(CliError::Spec(format!(
                    "`{k}` only applies to dataset = generate"
                )));
            }
        }
        if !matches!(source, DataSource::Mnist { .. }) {
            if let Some(k) = s.has_any(&MNIST_KEYS) {
                return Err(CliError::Spec(format!(
                    "`{k}` only applies to dataset = mnist"
                )));
            }
        }

        let default_loss = if matches!(source, DataSource::Mnist { .. }) {
            "multiclass_complete_hinge"
        } else {
            "complete_hinge"
        };
        let loss = s.get("loss").unwrap_or(default_loss);
        let model = if let Ok(loss) = loss.parse::<LinearLoss>() {
            if let Some(k) = s.has_any(&MLP_KEYS) {
                return Err(CliError::Spec(format!(
                    "`{k}` only applies to network losses"
                )));
            }
            Model::Linear {
                config: linear_config(s, loss)?,
                diagnostics: s.parsed("diagnostics")?.unwrap_or(true),
            }
        } else if let Ok(loss) = loss.parse::<MlpLoss>() {
            if let Some(k) = s.has_any(&LINEAR_KEYS) {
                return Err(CliError::Spec(format!(
                    "`{k}` only applies to linear losses"
                )));
            }
            mlp_model(s, loss, seed)?
        } else {
            return Err(CliError::Spec(format!("unknown loss `{loss}`")));
        };
        if matches!(source, DataSource::Mnist { .. }) && matches!(model, Model::Linear { .. }) {
            return Err(CliError::Spec("MNIST needs a network loss".into()));
        }

        Ok(Self {
            source,
            model,
            out,
            seed,
            settings,
        })
    }
}

fn generator_params(s: &Settings, seed: u64) -> Result<GeneratorParams> {
    let d = GeneratorParams::default();
    let params = GeneratorParams {
        dim: s.parsed("dim")?.unwrap_or(d.dim),
        n: s.parsed("n")?.unwrap_or(d.n),
        margin: s.parsed("margin")?.unwrap_or(d.margin),
        spread: s.parsed("spread")?.unwrap_or(d.spread),
        seed,
        support: s.parsed("support")?,
        non_separable: s.parsed("non_separable")?.unwrap_or(false),
    };
    params.validate()?;
    Ok(params)
}

fn linear_config(s: &Settings, loss: LinearLoss) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let u0 = s
        .get("u0")
        .map(|v| {
            v.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|e| CliError::Spec(format!("u0 = {v}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .transpose()?;
    let record = match s.parsed::<usize>("record_every")? {
        Some(0) => return Err(CliError::Spec("record_every must be positive".into())),
        Some(k) => RecordSchedule::Every(k),
        None => RecordSchedule::LogSpaced,
    };
    let config = TrainConfig {
        eta: s.parsed("eta")?.unwrap_or(d.eta),
        alpha: s.parsed("alpha")?.unwrap_or(d.alpha),
        zeta: s.parsed("zeta")?.unwrap_or(d.zeta),
        max_iters: s.parsed("iters")?.unwrap_or(d.max_iters),
        u0,
        beta0: s.parsed("beta0")?.unwrap_or(d.beta0),
        loss,
        record,
    };
    config.validate()?;
    Ok(config)
}

fn mlp_model(s: &Settings, loss: MlpLoss, seed: u64) -> Result<Model> {
    let d = MlpConfig::default();
    let config = MlpConfig {
        hidden: s.parsed("hidden")?.unwrap_or(d.hidden),
        eta: s.parsed("eta")?.unwrap_or(d.eta),
        alpha: s.parsed("alpha")?.unwrap_or(d.alpha),
        zeta: s.parsed("zeta")?.unwrap_or(d.zeta),
        batch_size: s.parsed("batch_size")?.unwrap_or(d.batch_size),
        iters: s.parsed("iters")?.unwrap_or(d.iters),
        seed,
        eval_every: s.parsed("eval_every")?.unwrap_or(d.eval_every),
        loss,
    };
    config.validate()?;
    let baseline = match s.get("baseline") {
        None | Some("none") => None,
        Some(name) => {
            let loss: MlpLoss = name.parse()?;
            let eta = s.parsed("baseline_eta")?.unwrap_or(match loss {
                MlpLoss::CrossEntropy => 1.0,
                MlpLoss::CrossEntropyNormalized => 0.1,
                MlpLoss::MulticlassCompleteHinge => config.eta,
            });
            Some(MlpConfig {
                loss,
                eta,
                ..config.clone()
            })
        }
    };
    Ok(Model::Mlp { config, baseline })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(text: &str) -> Result<ExperimentSpec> {
        ExperimentSpec::from_settings(Settings::parse(text)?)
    }

    #[test]
    fn builtin_linear_defaults() {
        let s = spec("dataset = fig1\nout = runs/fig1 # trailing comment\n").unwrap();
        assert_eq!(s.source, DataSource::Builtin("fig1".into()));
        let Model::Linear {
            config,
            diagnostics,
        } = s.model
        else {
            panic!("linear expected")
        };
        assert_eq!(config, TrainConfig::default());
        assert!(diagnostics);
    }

    #[test]
    fn overrides_win() {
        let mut base = Settings::parse("dataset = fig2a\nout = a\neta = 0.5\n").unwrap();
        let mut flags = Settings::default();
        flags.set("eta", 0.02);
        flags.set("u0", "0.1, -0.2");
        base.merge(&flags);
        assert!(!base.render().contains("out ="));
        let Model::Linear { config, .. } = ExperimentSpec::from_settings(base).unwrap().model
        else {
            panic!()
        };
        assert_eq!(config.eta, 0.02);
        assert_eq!(config.u0, Some(vec![0.1, -0.2]));
    }

    #[test]
    fn generator_and_mnist_sources() {
        let s = spec("dataset = generate\ndim = 3\nn = 7\nseed = 4\nout = x").unwrap();
        let DataSource::Generated(p) = s.source else {
            panic!()
        };
        assert_eq!((p.dim, p.n, p.seed), (3, 7, 4));

        let s = spec("dataset = mnist\nout = m\nbaseline = cross_entropy").unwrap();
        let Model::Mlp { config, baseline } = s.model else {
            panic!()
        };
        assert_eq!(config.loss, MlpLoss::MulticlassCompleteHinge);
        assert_eq!(baseline.unwrap().eta, 1.0);
    }

    #[test]
    fn rejects_inconsistent_specs() {
        assert!(spec("dataset = fig1\nout = x\ndim = 3").is_err());
        assert!(spec("dataset = fig1\nout = x\nhidden = 3").is_err());
        assert!(spec("dataset = fig1\nout = x\nloss = hinge").is_err());
        assert!(spec("dataset = mnist\nout = x\nloss = logistic").is_err());
        assert!(spec("dataset = fig1\nout = x\neta = 0").is_err());
        assert!(spec("dataset = fig1").is_err());
        assert!(Settings::parse("colour = red").is_err());
        assert!(Settings::parse("just words").is_err());
    }
}
