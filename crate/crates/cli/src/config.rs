use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use stablepp::extraction::ExtractionConfig;
use stablepp::functionals::builtin_battery;
use stablepp::sampler::{Carrier, ProcessSpec};
use stablepp::transform::ShiftTestFunction;
use stablepp::{IndicatorShape, TestFunction};

pub const SCHEMA_VERSION: u32 = 1;

/// Top-level run configuration. Sections irrelevant to a command are ignored;
/// unknown fields anywhere are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    pub spec: ProcessSpec,
    /// Named test functions; the builtin battery when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub battery: Option<Vec<NamedFunction>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<TailConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extraction: Option<ExtractionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rebuild: Option<RebuildConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<TransformConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedFunction {
    pub id: String,
    pub function: FunctionConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionConfig {
    Knots {
        knots: Vec<(f64, f64)>,
    },
    Tent {
        center: f64,
        half_width: f64,
        height: f64,
    },
    Indicator {
        level: f64,
        inner: f64,
        ramp: f64,
        outer: f64,
        #[serde(default)]
        two_sided: bool,
    },
}

impl FunctionConfig {
    pub fn to_scale(&self) -> stablepp::Result<TestFunction> {
        match *self {
            FunctionConfig::Knots { ref knots } => TestFunction::from_knots(knots.clone()),
            FunctionConfig::Tent { center, half_width, height } => TestFunction::tent(center, half_width, height),
            FunctionConfig::Indicator { level, inner, ramp, outer, two_sided } => {
                TestFunction::indicator(IndicatorShape { level, inner, ramp, outer, two_sided })
            }
        }
    }

    pub fn to_shift(&self) -> stablepp::Result<ShiftTestFunction> {
        match *self {
            FunctionConfig::Knots { ref knots } => ShiftTestFunction::from_knots(knots.clone()),
            FunctionConfig::Tent { center, half_width, height } => ShiftTestFunction::from_knots(vec![
                (center - half_width, 0.0),
                (center, height),
                (center + half_width, 0.0),
            ]),
            FunctionConfig::Indicator { two_sided: true, .. } => Err(stablepp::Error::InvalidArgument(
                "two-sided indicators have no meaning on the shift carrier".into(),
            )),
            FunctionConfig::Indicator { level, inner, ramp, outer, .. } => {
                ShiftTestFunction::indicator(level, inner, ramp, outer)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    pub b1: f64,
    pub b2: f64,
    /// Multiplies the right-hand scale; 1 for the true identity.
    #[serde(default = "one")]
    pub rhs_factor: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailConfig {
    /// Upper order statistics used by the Hill estimator; `floor(sqrt(n))` when absent.
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RebuildConfig {
    pub reps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Shift-world lines to scale-world lines.
    Exp,
    /// Scale-world lines to shift-world lines.
    Log,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformConfig {
    /// Relative paths resolve against the config file's directory.
    pub input: PathBuf,
    pub direction: Direction,
}

pub struct Loaded {
    pub config: Config,
    pub raw: Vec<u8>,
    pub dir: PathBuf,
}

pub fn load(path: &Path) -> Result<Loaded> {
    let raw = std::fs::read(path).with_context(|| format!("reading config {}", path.display()))?;
    let config: Config =
        serde_json::from_slice(&raw).with_context(|| format!("parsing config {}", path.display()))?;
    if config.schema_version != SCHEMA_VERSION {
        bail!(
            "unsupported schema_version {} (this build reads {SCHEMA_VERSION})",
            config.schema_version
        );
    }
    config.spec.validate().context("validating spec")?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { config, raw, dir })
}

impl Config {
    pub fn scale_battery(&self) -> Result<Vec<(String, TestFunction)>> {
        match &self.battery {
            None => Ok(builtin_battery()),
            Some(list) => {
                if list.is_empty() {
                    bail!("battery is empty");
                }
                list.iter()
                    .map(|n| {
                        let f = n.function.to_scale().with_context(|| format!("battery entry {}", n.id))?;
                        Ok((n.id.clone(), f))
                    })
                    .collect()
            }
        }
    }

    pub fn shift_battery(&self) -> Result<Vec<(String, ShiftTestFunction)>> {
        match &self.battery {
            None => Ok(builtin_shift_battery()),
            Some(list) => {
                if list.is_empty() {
                    bail!("battery is empty");
                }
                list.iter()
                    .map(|n| {
                        let f = n.function.to_shift().with_context(|| format!("battery entry {}", n.id))?;
                        Ok((n.id.clone(), f))
                    })
                    .collect()
            }
        }
    }

    pub fn y_grid_or(&self, default: &[f64]) -> Result<Vec<f64>> {
        let ys = self.y_grid.clone().unwrap_or_else(|| default.to_vec());
        if ys.is_empty() {
            bail!("y_grid is empty");
        }
        if let Some(bad) = ys.iter().find(|&&y| !y.is_finite() || (self.spec.carrier() == Carrier::Scale && y <= 0.0)) {
            bail!("y_grid entry {bad} is out of range");
        }
        Ok(ys)
    }
}

fn builtin_shift_battery() -> Vec<(String, ShiftTestFunction)> {
    let f = |r: stablepp::Result<ShiftTestFunction>| r.expect("builtin shift functions are valid");
    vec![
        (
            "indicator_ln2".into(),
            f(ShiftTestFunction::indicator(std::f64::consts::LN_2, 0.0, 1e-3, 50.0)),
        ),
        (
            "tent".into(),
            f(ShiftTestFunction::from_knots(vec![(-1.0, 0.0), (0.0, 1.0), (1.0, 0.0)])),
        ),
        (
            "tent_high".into(),
            f(ShiftTestFunction::from_knots(vec![(0.0, 0.0), (1.0, 3.0), (2.0, 0.0)])),
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_fields_are_rejected_at_every_level() {
        let base = r#"{"schema_version": 1, "spec": {"family": "ScDPPP", "alpha": 1.0, "decoration": {"kind": "dirac_set", "locations": [1.0]}, "window": 1.0}"#;
        assert!(serde_json::from_str::<Config>(&format!("{base}}}")).is_ok());
        assert!(serde_json::from_str::<Config>(&format!("{base}, \"bogus\": 1}}")).is_err());
        let bad_fn = format!(r#"{base}, "battery": [{{"id": "a", "function": {{"kind": "tent", "center": 2, "half_width": 1, "height": 1, "x": 0}}}}]}}"#);
        assert!(serde_json::from_str::<Config>(&bad_fn).is_err());
        let bad_stab = format!(r#"{base}, "stability": {{"b1": 1, "b2": 1, "b3": 1}}}}"#);
        assert!(serde_json::from_str::<Config>(&bad_stab).is_err());
    }

    #[test]
    fn empty_battery_is_an_error() {
        let cfg: Config = serde_json::from_str(
            r#"{"schema_version": 1, "battery": [], "spec": {"family": "ScDPPP", "alpha": 1.0, "decoration": {"kind": "dirac_set", "locations": [1.0]}, "window": 1.0}}"#,
        )
        .unwrap();
        assert!(cfg.scale_battery().is_err());
        assert!(cfg.shift_battery().is_err());
    }

    #[test]
    fn function_shapes_convert() {
        let tent = FunctionConfig::Tent { center: 2.0, half_width: 1.0, height: 1.0 };
        assert_eq!(tent.to_scale().unwrap().eval(2.0), 1.0);
        assert_eq!(tent.to_shift().unwrap().eval(2.0), 1.0);
        let two = FunctionConfig::Indicator { level: 1.0, inner: 1.0, ramp: 0.1, outer: 10.0, two_sided: true };
        assert_eq!(two.to_scale().unwrap().eval(-5.0), 1.0);
        assert!(two.to_shift().is_err());
    }
}
