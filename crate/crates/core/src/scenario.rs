//! Versioned JSON scenario files, overrides, sweeps and built-in presets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::detection_chain::DetectionScenario;
use crate::electrostatics::{CalibrationTargets, FiveWireTemplate, TrapLayout};
use crate::entanglement_link::EntanglementLink;
use crate::error::{Error, Result};
use crate::state_detection::DEFAULT_DARK_RATE;

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Schema {
    #[serde(rename = "trap-layout/1")]
    TrapLayout,
    #[serde(rename = "detection-scenario/1")]
    Detection,
    #[serde(rename = "entanglement-link/1")]
    Entanglement,
    #[serde(rename = "fidelity-query/1")]
    Fidelity,
}

impl Schema {
    pub fn tag(self) -> &'static str {
        match self {
            Schema::TrapLayout => "trap-layout/1",
            Schema::Detection => "detection-scenario/1",
            Schema::Entanglement => "entanglement-link/1",
            Schema::Fidelity => "fidelity-query/1",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        [Schema::TrapLayout, Schema::Detection, Schema::Entanglement, Schema::Fidelity]
            .into_iter()
            .find(|s| s.tag() == tag)
    }
}

/// Trap geometry: a frozen layout to solve and/or a template to calibrate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapModel {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<TrapLayout>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<FiveWireTemplate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<CalibrationTargets>,
    /// Starting point for the minimum search, m.
    #[serde(rename = "initial_guess_m", default, skip_serializing_if = "Option::is_none")]
    pub initial_guess: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntanglementModel {
    pub link: EntanglementLink,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<EntanglementLink>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monte_carlo_attempts: Option<u64>,
}

fn default_target() -> f64 {
    0.99
}

fn default_dark() -> f64 {
    DEFAULT_DARK_RATE
}

/// Either `bright_rate_s` or both `scatter_rate_s` and `total_efficiency`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityQuery {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bright_rate_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scatter_rate_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_efficiency: Option<f64>,
    #[serde(default = "default_dark")]
    pub dark_rate_s: f64,
    #[serde(default = "default_target")]
    pub target_fidelity: f64,
    /// Also report the fidelity at this window, s.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integration_time_s: Option<f64>,
}

impl FidelityQuery {
    pub fn bright_rate(&self) -> Result<f64> {
        match (self.bright_rate_s, self.scatter_rate_s, self.total_efficiency) {
            (Some(b), None, None) => Ok(b),
            (None, Some(s), Some(e)) => {
                if !(0.0..=1.0).contains(&e) {
                    return Err(Error::invalid("model.total_efficiency", "must lie in [0, 1]"));
                }
                Ok(s * e)
            }
            _ => Err(Error::invalid(
                "model",
                "give bright_rate_s, or scatter_rate_s together with total_efficiency",
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Trap(TrapModel),
    Detection(DetectionScenario),
    Entanglement(EntanglementModel),
    Fidelity(FidelityQuery),
}

impl Model {
    pub fn schema(&self) -> Schema {
        match self {
            Model::Trap(_) => Schema::TrapLayout,
            Model::Detection(_) => Schema::Detection,
            Model::Entanglement(_) => Schema::Entanglement,
            Model::Fidelity(_) => Schema::Fidelity,
        }
    }

    fn to_value(&self) -> Value {
        match self {
            Model::Trap(m) => serde_json::to_value(m),
            Model::Detection(m) => serde_json::to_value(m),
            Model::Entanglement(m) => serde_json::to_value(m),
            Model::Fidelity(m) => serde_json::to_value(m),
        }
        .expect("model types serialize infallibly")
    }

    fn from_value(schema: Schema, v: Value) -> Result<Self> {
        fn typed<T: serde::de::DeserializeOwned>(v: Value) -> Result<T> {
            serde_path_to_error::deserialize(v).map_err(|e| Error::Parse {
                path: format!("model.{}", e.path()),
                message: e.inner().to_string(),
            })
        }
        Ok(match schema {
            Schema::TrapLayout => Model::Trap(typed(v)?),
            Schema::Detection => Model::Detection(typed(v)?),
            Schema::Entanglement => Model::Entanglement(typed(v)?),
            Schema::Fidelity => Model::Fidelity(typed(v)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Dot path into `model`, e.g. `source.n_ions`.
    pub parameter: String,
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.parameter.trim().is_empty() {
            return Err(Error::invalid("sweep.parameter", "empty parameter path"));
        }
        if self.steps == 0 {
            return Err(Error::invalid("sweep.steps", "sweep range is empty"));
        }
        if !self.start.is_finite() || !self.stop.is_finite() {
            return Err(Error::invalid("sweep.start", "range bounds must be finite"));
        }
        Ok(())
    }

    /// Evenly spaced values from `start` to `stop` inclusive.
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.start];
        }
        (0..self.steps)
            .map(|i| self.start + (self.stop - self.start) * i as f64 / (self.steps - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: Option<String>,
    pub seed: Option<u64>,
    /// Dot-path assignments applied to the model after loading.
    pub overrides: BTreeMap<String, Value>,
    pub sweep: Option<SweepSpec>,
    pub outputs: Option<OutputPaths>,
    pub model: Model,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    overrides: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    outputs: Option<OutputPaths>,
    model: Value,
}

/// Sets `path` (dot separated, numeric segments index arrays) inside `root`.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let bad = |why: &str| Error::Parse {
        path: path.to_string(),
        message: why.to_string(),
    };
    let mut cur = root;
    let segments: Vec<&str> = path.split('.').collect();
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(seg.to_string(), value);
                    return Ok(());
                }
                map.get_mut(*seg).ok_or_else(|| bad("no such field"))?
            }
            Value::Array(items) => {
                let idx: usize = seg.parse().map_err(|_| bad("expected an array index"))?;
                let slot = items.get_mut(idx).ok_or_else(|| bad("array index out of range"))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(bad("path descends into a scalar")),
        };
    }
    Err(bad("empty path"))
}

/// Number literal for a sweep value: integral values become JSON integers so
/// integer-typed fields accept them.
pub fn sweep_value(v: f64) -> Value {
    if v.fract() == 0.0 && v.abs() < 9.0e15 {
        Value::from(v as i64)
    } else {
        Value::from(v)
    }
}

impl Scenario {
    pub fn schema(&self) -> Schema {
        self.model.schema()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: "$".into(),
            message: e.to_string(),
        })?;
        let env: Envelope = serde_path_to_error::deserialize(raw).map_err(|e| Error::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        let schema = Schema::from_tag(&env.schema).ok_or_else(|| Error::Parse {
            path: "schema".into(),
            message: format!("unrecognized schema tag '{}'", env.schema),
        })?;
        let mut model = env.model;
        for (path, v) in &env.overrides {
            set_path(&mut model, path, v.clone()).map_err(|e| match e {
                Error::Parse { message, .. } => Error::Parse {
                    path: format!("overrides.{path}"),
                    message,
                },
                other => other,
            })?;
        }
        if let Some(s) = &env.sweep {
            s.validate()?;
        }
        let s = Scenario {
            name: env.name,
            seed: env.seed,
            overrides: env.overrides,
            sweep: env.sweep,
            outputs: env.outputs,
            model: Model::from_value(schema, model)?,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.model {
            Model::Trap(t) => {
                if t.layout.is_none() && t.template.is_none() {
                    return Err(Error::invalid("model", "need a layout or a template"));
                }
                if let Some(l) = &t.layout {
                    l.validate()?;
                }
                if let Some(tg) = &t.targets {
                    tg.validate()?;
                }
            }
            Model::Detection(d) => d.validate()?,
            Model::Entanglement(e) => {
                e.link.validate()?;
                if let Some(b) = &e.baseline {
                    b.validate()?;
                }
            }
            Model::Fidelity(f) => {
                f.bright_rate()?;
                if !(f.target_fidelity > 0.5 && f.target_fidelity < 1.0) {
                    return Err(Error::invalid("model.target_fidelity", "must lie in (0.5, 1)"));
                }
            }
        }
        Ok(())
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(Envelope {
            schema: self.schema().tag().to_string(),
            name: self.name.clone(),
            seed: self.seed,
            overrides: self.overrides.clone(),
            sweep: self.sweep.clone(),
            outputs: self.outputs.clone(),
            model: self.model.to_value(),
        })
        .expect("scenario serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_value()).expect("scenario serializes")
    }

    /// Copy with `path` in the model set to `value`.
    pub fn with_parameter(&self, path: &str, value: Value) -> Result<Scenario> {
        let mut v = self.model.to_value();
        set_path(&mut v, path, value).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                path: format!("sweep.parameter ({path})"),
                message,
            },
            other => other,
        })?;
        let s = Scenario {
            model: Model::from_value(self.schema(), v)?,
            ..self.clone()
        };
        s.validate()?;
        Ok(s)
    }

    /// Seed for stochastic operations; required when one is requested.
    pub fn require_seed(&self, cli_seed: Option<u64>) -> Result<u64> {
        cli_seed
            .or(self.seed)
            .ok_or_else(|| Error::invalid("seed", "a seed is required for stochastic operations"))
    }
}

/// Built-in presets, embedded at compile time.
pub const PRESETS: &[(&str, &str)] = &[
    ("ito-4k", include_str!("../presets/ito-4k.json")),
    ("ito-pd", include_str!("../presets/ito-pd.json")),
    ("pmt-bulk", include_str!("../presets/pmt-bulk.json")),
    ("vlpc", include_str!("../presets/vlpc.json")),
    ("proposed-unit", include_str!("../presets/proposed-unit.json")),
    ("bulk-baseline", include_str!("../presets/bulk-baseline.json")),
    ("fidelity-vlpc", include_str!("../presets/fidelity-vlpc.json")),
    ("fidelity-pmt", include_str!("../presets/fidelity-pmt.json")),
    ("fidelity-photodiode", include_str!("../presets/fidelity-photodiode.json")),
];

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn preset(name: &str) -> Result<Scenario> {
    let text = preset_text(name).ok_or_else(|| Error::Parse {
        path: "preset".into(),
        message: format!(
            "unknown preset '{name}' (known: {})",
            PRESETS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
        ),
    })?;
    Scenario::parse(text)
}
