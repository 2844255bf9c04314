use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use lor::experiments::ExperimentConfig;
use lor::histogram::joint::EstimatorConfig;
use lor::histogram::{Estimator, SamplePolicy};
use lor::measures::{MeasureKind, MeasureSpec};
use lor::objective::ObjectiveConfig;
use lor::optimize::OptimizerOptions;
use lor::transform::TransformKind;
use lor::ScaleTriple;

/// Flags shared by the experiment subcommands.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Named preset (asymmetry, blobs, smooth_asymmetry, scales, jointreport, bench).
    #[arg(long)]
    pub experiment: Option<String>,
    /// JSON experiment config; missing fields take the preset's values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Common {
    /// Preset, then config file, then flags.
    pub fn resolve(&self, default_experiment: &str) -> Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let value: serde_json::Value =
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
                let id = value
                    .get("experiment")
                    .and_then(|v| v.as_str())
                    .or(self.experiment.as_deref())
                    .unwrap_or(default_experiment)
                    .to_string();
                let mut merged = serde_json::to_value(ExperimentConfig::preset(&id)?)?;
                merge(&mut merged, value);
                serde_json::from_value(merged).with_context(|| format!("invalid config {}", path.display()))?
            }
            None => ExperimentConfig::preset(self.experiment.as_deref().unwrap_or(default_experiment))?,
        };
        if let Some(e) = &self.experiment {
            cfg.experiment = e.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.threads {
            cfg.threads = Some(t);
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.display().to_string());
        }
        let out = PathBuf::from(cfg.out.clone().unwrap_or_else(|| "out".into()));
        std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        cfg.validate()?;
        Ok((cfg, out))
    }
}

/// Overwrites `base` with the keys present in `patch`, recursing into objects.
fn merge(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    // tagged enums are replaced whole
                    Some(slot) if slot.is_object() && v.is_object() && v.get("kind").is_none() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

/// Registration settings: objective, transform model, optimizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegisterConfig {
    #[serde(flatten)]
    pub objective: ObjectiveConfig,
    #[serde(default = "default_transform")]
    pub transform: TransformKind,
    /// Control points per axis of the free-form deformation.
    #[serde(default)]
    pub control: Option<Vec<usize>>,
    /// Initial parameters; identity when absent.
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
    #[serde(default)]
    pub optimizer: OptimizerOptions,
}

fn default_transform() -> TransformKind {
    TransformKind::Translation
}

impl Default for RegisterConfig {
    fn default() -> Self {
        let density = EstimatorConfig::new(
            64,
            ScaleTriple::new(1.0, 1.0 / 64.0, f64::INFINITY).expect("valid scales"),
        )
        .with_sampling(SamplePolicy::Interior { margin: 3 });
        RegisterConfig {
            objective: ObjectiveConfig::new(MeasureSpec::new(MeasureKind::Nmi), Estimator::Pw, density),
            transform: TransformKind::Translation,
            control: None,
            initial: None,
            optimizer: OptimizerOptions::default(),
        }
    }
}

impl RegisterConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RegisterConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("invalid registration config {}", p.display()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_keeps_unlisted_fields() {
        let mut base = serde_json::json!({"a": 1, "sweep": {"axis": 0, "range": 1.5, "step": 0.1}, "pair": {"kind": "gradient", "dims": [4, 4]}});
        merge(
            &mut base,
            serde_json::json!({"sweep": {"step": 0.05}, "pair": {"kind": "blobs", "dims": [8, 8]}}),
        );
        assert_eq!(base["a"], 1);
        assert_eq!(base["sweep"]["range"], 1.5);
        assert_eq!(base["sweep"]["step"], 0.05);
        assert_eq!(base["pair"], serde_json::json!({"kind": "blobs", "dims": [8, 8]}));
    }

    #[test]
    fn register_config_round_trip() {
        let c = RegisterConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RegisterConfig>(&text).unwrap(), c);
        let minimal: RegisterConfig = serde_json::from_str(
            r#"{"measure":{"kind":"ssd"},"estimator":"pw","bins":32,"scales":{"sigma":0,"beta":0.03125,"alpha":null}}"#,
        )
        .unwrap();
        assert_eq!(minimal.transform, TransformKind::Translation);
        assert_eq!(minimal.optimizer, OptimizerOptions::default());
    }
}
