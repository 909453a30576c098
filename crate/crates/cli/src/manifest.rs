//! Everything needed to reproduce a run or sweep, written next to its outputs.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tim_dcop::scenarios::{Policy, Scenario};
use tim_dcop::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Iterations,
    Threshold,
    Ervs,
    Uavs,
    Incidents,
}

impl Axis {
    fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "iterations" => Axis::Iterations,
            "threshold" => Axis::Threshold,
            "ervs" => Axis::Ervs,
            "uavs" => Axis::Uavs,
            "incidents" => Axis::Incidents,
            _ => return Err(Error::InvalidInput(format!("unknown sweep axis {name:?}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::Iterations => "iterations",
            Axis::Threshold => "threshold",
            Axis::Ervs => "ervs",
            Axis::Uavs => "uavs",
            Axis::Incidents => "incidents",
        }
    }

    /// Sets this axis to `v` on `sc`.
    pub fn apply(self, sc: &mut Scenario, v: f64) -> Result<()> {
        let count = || {
            if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(Error::InvalidInput(format!("{} must be a non-negative integer, got {v}", self.name())))
            }
        };
        match self {
            Axis::Iterations => sc.solver.iterations = count()?,
            Axis::Threshold => sc.solver.dsa_threshold = v,
            Axis::Ervs => {
                sc.ervs = count()?;
                sc.erv_cells = None;
            }
            Axis::Uavs => {
                sc.uavs = count()?;
                sc.uav_cells = None;
            }
            Axis::Incidents => {
                if !sc.incidents.is_empty() {
                    return Err(Error::InvalidInput("incidents axis needs a schedule, not explicit incidents".into()));
                }
                let n = count()?;
                let stages = sc.schedule.len().max(1);
                sc.schedule = (0..stages).map(|s| n / stages + usize::from(s < n % stages)).collect();
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
}

impl AxisSpec {
    pub fn parse(spec: &str) -> Result<Self> {
        let (name, list) = spec
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("axis {spec:?} is not of the form name=v1,v2,...")))?;
        let values = list
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| Error::InvalidInput(format!("bad axis value {v:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if values.is_empty() {
            return Err(Error::InvalidInput(format!("axis {name:?} has no values")));
        }
        Ok(Self { axis: Axis::parse(name.trim())?, values })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub scenario_path: Option<String>,
    /// Full scenario with the seed already applied.
    pub scenario: Scenario,
    pub out: String,
    pub seed: u64,
    pub policies: Vec<Policy>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub axes: Vec<AxisSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
}

fn read_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    Scenario::from_json(&text)
}

impl RunManifest {
    pub fn for_run(path: &Path, seed: Option<u64>, policies: Vec<Policy>, out: &Path) -> Result<Self> {
        let mut scenario = read_scenario(path)?;
        if let Some(s) = seed {
            scenario.seed = s;
        }
        Ok(Self {
            command: "run".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            scenario_path: Some(path.display().to_string()),
            seed: scenario.seed,
            scenario,
            out: out.display().to_string(),
            policies,
            axes: Vec::new(),
            trials: None,
        })
    }

    pub fn for_sweep(
        path: Option<&Path>,
        axes: &[String],
        trials: usize,
        seed: Option<u64>,
        policies: Vec<Policy>,
        out: &Path,
    ) -> Result<Self> {
        if trials == 0 {
            return Err(Error::InvalidInput("a sweep needs at least one trial".into()));
        }
        let mut scenario = match path {
            Some(p) => read_scenario(p)?,
            None => Scenario::default(),
        };
        if let Some(s) = seed {
            scenario.seed = s;
        }
        let axes = axes.iter().map(|a| AxisSpec::parse(a)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            command: "sweep".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            scenario_path: path.map(|p| p.display().to_string()),
            seed: scenario.seed,
            scenario,
            out: out.display().to_string(),
            policies,
            axes,
            trials: Some(trials),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("manifest: {e}")))?;
        m.scenario.validate()?;
        Ok(m)
    }

    /// Written unchanged on replay, so a replayed directory matches the original.
    pub fn write(&self, out: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(out.join("manifest.json"), text)?;
        Ok(())
    }
}
