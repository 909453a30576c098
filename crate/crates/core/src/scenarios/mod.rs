//! Scenario files, world generation and the comparison policies.

mod opt;
mod sim;

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::erv::{ErvConfig, ErvState};
use crate::error::{invalid, Error, Result};
use crate::forecast::{generate_field, DependencyKernel, FieldConfig, Forecast, ForecastJson};
use crate::incidents::{sample_incident, Incident, IncidentRecord};
use crate::network::{CellId, GridNetwork, TimeRange};
use crate::rng;
use crate::solvers::SolverConfig;
use crate::uav::{AssimilationRecord, DelayBelief, PriorityMatrix, UavConfig, UavState};

pub use opt::{optimal_schedule, OptSchedule};
pub use sim::Simulation;

pub const DEFAULT_OPT_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Policy {
    Conventional,
    Pdronetim,
    Opt,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::Conventional, Policy::Pdronetim, Policy::Opt];

    pub fn label(self) -> &'static str {
        match self {
            Policy::Conventional => "CONVENTIONAL",
            Policy::Pdronetim => "PDRONETIM",
            Policy::Opt => "OPT",
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Policy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CONVENTIONAL" | "CONV" => Ok(Policy::Conventional),
            "PDRONETIM" | "PD" => Ok(Policy::Pdronetim),
            "OPT" => Ok(Policy::Opt),
            _ => invalid(format!("unknown policy {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub rows: usize,
    pub cols: usize,
    pub range: TimeRange,
    /// Defaults to the scenario seed.
    pub seed: Option<u64>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { rows: 10, cols: 10, range: TimeRange::default(), seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    pub field: FieldConfig,
    pub lag1: f64,
    pub lag2: f64,
    /// A fixed forecast replaces the generated one.
    pub fixed: Option<ForecastJson>,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self { field: FieldConfig::default(), lag1: 0.3, lag2: 0.1, fixed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub network: NetworkConfig,
    /// Incident count per stage. Ignored when `incidents` is non-empty.
    pub schedule: Vec<usize>,
    /// Explicit incidents; their distinct report times define the stages.
    pub incidents: Vec<IncidentRecord>,
    /// Hours between consecutive stages.
    pub stage_gap: f64,
    pub ervs: usize,
    pub uavs: usize,
    pub erv_cells: Option<Vec<CellId>>,
    pub uav_cells: Option<Vec<CellId>>,
    pub solver: SolverConfig,
    pub erv: ErvConfig,
    pub uav: UavConfig,
    pub priority: Option<PriorityMatrix>,
    pub forecast: ForecastConfig,
    pub cooperation: bool,
    pub opt_cap: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            seed: 0,
            network: NetworkConfig::default(),
            schedule: vec![1, 1, 1, 1, 1],
            incidents: Vec::new(),
            stage_gap: 0.5,
            ervs: 3,
            uavs: 0,
            erv_cells: None,
            uav_cells: None,
            solver: SolverConfig::default(),
            erv: ErvConfig::default(),
            uav: UavConfig::default(),
            priority: None,
            forecast: ForecastConfig::default(),
            cooperation: true,
            opt_cap: DEFAULT_OPT_CAP,
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("scenario: {e}")))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ervs == 0 {
            return invalid("a scenario needs at least one ERV");
        }
        if !(self.stage_gap > 0.0) || !self.stage_gap.is_finite() {
            return invalid(format!("stage gap must be positive, got {}", self.stage_gap));
        }
        self.solver.validate()?;
        self.erv.validate()?;
        self.uav.validate()?;
        if let Some(m) = &self.priority {
            m.validate()?;
        }
        for (cells, n, what) in [(&self.erv_cells, self.ervs, "ERV"), (&self.uav_cells, self.uavs, "UAV")] {
            if let Some(cells) = cells {
                if cells.len() != n {
                    return invalid(format!("{n} {what}s but {} start cells", cells.len()));
                }
            }
        }
        let cells = self.network.rows * self.network.cols;
        if self.incidents.is_empty() && self.schedule.iter().sum::<usize>() > cells {
            return invalid(format!("schedule has more incidents than the {cells} cells"));
        }
        Ok(())
    }

    /// Builds the network, forecast, incidents and fleets.
    pub fn materialize(&self) -> Result<World> {
        self.validate()?;
        let net = GridNetwork::build(
            self.network.rows,
            self.network.cols,
            self.network.range,
            self.network.seed.unwrap_or(self.seed),
        )?;
        let cells = net.cell_count();

        let explicit = !self.incidents.is_empty();
        let stage_times: Vec<f64> = if explicit {
            let mut t: Vec<f64> = self.incidents.iter().map(|r| r.report_time_h).collect();
            t.sort_by(f64::total_cmp);
            t.dedup();
            t
        } else {
            (0..self.schedule.len()).map(|s| s as f64 * self.stage_gap).collect()
        };

        let forecast = match &self.forecast.fixed {
            Some(json) => {
                let f = Forecast::from_json(json)?;
                if f.cells() != cells {
                    return invalid(format!("forecast has {} cells, network has {cells}", f.cells()));
                }
                f
            }
            None => {
                let stages = (stage_times.len() + self.erv.lookahead + 1).max(3);
                let field = generate_field(&net, stages, self.seed, &self.forecast.field)?;
                let kernel = if self.forecast.lag1 == 0.0 && self.forecast.lag2 == 0.0 {
                    DependencyKernel::zero(cells)
                } else {
                    DependencyKernel::four_neighborhood(&net, self.forecast.lag1, self.forecast.lag2)?
                };
                Forecast::new(field, kernel)?
            }
        };

        let mut incidents = if explicit {
            let mut seen = std::collections::HashSet::new();
            self.incidents
                .iter()
                .map(|r| {
                    net.check(r.cell)?;
                    if !seen.insert(r.id) {
                        return invalid(format!("duplicate incident id {}", r.id));
                    }
                    r.to_incident(self.seed)
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            scheduled_incidents(&forecast, &self.schedule, self.stage_gap, cells, self.seed)?
        };
        incidents.sort_by(|a, b| a.report_time.total_cmp(&b.report_time).then(a.id.cmp(&b.id)));

        let ervs = start_cells(self.erv_cells.as_deref(), self.ervs, cells, self.seed, 0, &net)?
            .into_iter()
            .enumerate()
            .map(|(i, c)| ErvState::new(i as u32, c))
            .collect();
        let uavs = start_cells(self.uav_cells.as_deref(), self.uavs, cells, self.seed, 1, &net)?
            .into_iter()
            .enumerate()
            .map(|(i, c)| UavState::new(i as u32, c))
            .collect();

        Ok(World { net, forecast, incidents, stage_times, ervs, uavs })
    }

    pub fn run(&self, policy: Policy) -> Result<RunResult> {
        let world = self.materialize()?;
        self.run_world(&world, policy)
    }

    /// Runs a policy on an already materialised world.
    pub fn run_world(&self, world: &World, policy: Policy) -> Result<RunResult> {
        match policy {
            Policy::Opt => opt::run_opt(self, world),
            _ => Simulation::new(self, world, policy)?.run(),
        }
    }
}

/// Samples `schedule[s]` incidents at stage `s`, each on a distinct cell drawn
/// in proportion to the stage's expected probability.
fn scheduled_incidents(
    forecast: &Forecast,
    schedule: &[usize],
    gap: f64,
    cells: usize,
    seed: u64,
) -> Result<Vec<Incident>> {
    let mut rng = rng::stream(seed, rng::INCIDENTS, u64::MAX);
    let mut used = vec![false; cells];
    let mut out = Vec::new();
    for (stage, &count) in schedule.iter().enumerate() {
        let probs = forecast.expected_stage(stage);
        for _ in 0..count {
            let weight = |k: usize| if used[k] { 0.0 } else { probs[k] };
            let total: f64 = (0..cells).map(weight).sum();
            let cell = if total > 0.0 {
                let mut x = rng.random_range(0.0..total);
                (0..cells)
                    .find(|&k| {
                        x -= weight(k);
                        x < 0.0 && !used[k]
                    })
                    .unwrap_or_else(|| (0..cells).rev().find(|&k| !used[k]).expect("a free cell"))
            } else {
                let free: Vec<usize> = (0..cells).filter(|&k| !used[k]).collect();
                free[rng.random_range(0..free.len())]
            };
            used[cell] = true;
            let severity = rng.random_range(1..=4);
            let id = out.len() as u32;
            out.push(sample_incident(id, severity, CellId(cell as u32), stage as f64 * gap, seed)?);
        }
    }
    Ok(out)
}

fn start_cells(
    given: Option<&[CellId]>,
    n: usize,
    cells: usize,
    seed: u64,
    index: u64,
    net: &GridNetwork,
) -> Result<Vec<CellId>> {
    if let Some(given) = given {
        for &c in given {
            net.check(c)?;
        }
        return Ok(given.to_vec());
    }
    if n > cells {
        return invalid(format!("{n} vehicles do not fit on {cells} cells"));
    }
    let mut rng = rng::stream(seed, rng::FLEET, index);
    Ok(rand::seq::index::sample(&mut rng, cells, n)
        .into_iter()
        .map(|k| CellId(k as u32))
        .collect())
}

/// A materialised scenario.
#[derive(Debug, Clone)]
pub struct World {
    pub net: GridNetwork,
    pub forecast: Forecast,
    /// Sorted by report time, then id.
    pub incidents: Vec<Incident>,
    pub stage_times: Vec<f64>,
    pub ervs: Vec<ErvState>,
    pub uavs: Vec<UavState>,
}

/// How one incident was served.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidentOutcome {
    pub id: u32,
    pub cell: CellId,
    pub severity: u8,
    pub report_time_h: f64,
    pub erv: u32,
    pub dispatch_time_h: f64,
    pub travel_h: f64,
    /// Travel time after UAV route support.
    pub effective_travel_h: f64,
    /// Report to arrival.
    pub response_h: f64,
    pub delay: f64,
    pub delay_variance: f64,
    pub uav: Option<u32>,
    pub posterior: Option<DelayBelief>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub epoch: usize,
    pub time_h: f64,
    pub stage: usize,
    pub free_ervs: Vec<u32>,
    pub dispatched: Vec<u32>,
    pub relocated: usize,
    /// Sum of the chosen unary costs; zero for rule-based policies.
    pub erv_cost: f64,
    pub uav_utility: f64,
    pub delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub policy: Policy,
    pub scenario: String,
    pub stages: Vec<StageOutcome>,
    /// Sorted by id.
    pub incidents: Vec<IncidentOutcome>,
    /// Vehicle-hours.
    pub total_delay: f64,
    pub total_response_min: f64,
    pub total_uav_utility: f64,
    pub assimilation: Vec<AssimilationRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub traces: Vec<crate::solvers::SolveTrace>,
}

impl RunResult {
    fn finish(policy: Policy, scenario: &str, stages: Vec<StageOutcome>, mut incidents: Vec<IncidentOutcome>) -> Self {
        incidents.sort_by_key(|o| o.id);
        let total_delay = incidents.iter().map(|o| o.delay).sum();
        let total_response_min = incidents.iter().map(|o| o.response_h).sum::<f64>() * 60.0;
        let total_uav_utility = stages.iter().map(|s| s.uav_utility).sum();
        Self {
            policy,
            scenario: scenario.to_string(),
            stages,
            incidents,
            total_delay,
            total_response_min,
            total_uav_utility,
            assimilation: Vec::new(),
            traces: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StageRow<'a> {
    policy: &'a str,
    epoch: usize,
    time_h: f64,
    stage: usize,
    free_ervs: usize,
    dispatched: usize,
    relocated: usize,
    erv_cost: f64,
    uav_utility: f64,
    delay: f64,
}

/// One row per stage per policy.
pub fn write_stages_csv<W: Write>(results: &[RunResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if results.iter().all(|r| r.stages.is_empty()) {
        w.write_record([
            "policy", "epoch", "time_h", "stage", "free_ervs", "dispatched", "relocated", "erv_cost", "uav_utility",
            "delay",
        ])
        .map_err(crate::solvers::csv_err)?;
    }
    for r in results {
        for s in &r.stages {
            w.serialize(StageRow {
                policy: r.policy.label(),
                epoch: s.epoch,
                time_h: s.time_h,
                stage: s.stage,
                free_ervs: s.free_ervs.len(),
                dispatched: s.dispatched.len(),
                relocated: s.relocated,
                erv_cost: s.erv_cost,
                uav_utility: s.uav_utility,
                delay: s.delay,
            })
            .map_err(crate::solvers::csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// A front-loaded request sequence: five stages of one to three requests
/// each, in non-increasing order.
pub fn front_loaded_sequence(rng: &mut impl Rng) -> Vec<usize> {
    let mut s: Vec<usize> = (0..5).map(|_| rng.random_range(1..=3)).collect();
    s.sort_unstable_by(|a, b| b.cmp(a));
    s
}

/// Spreads `incidents` requests over `stages` stages uniformly at random.
pub fn random_schedule(incidents: usize, stages: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut s = vec![0; stages.max(1)];
    for _ in 0..incidents {
        let k = rng.random_range(0..s.len());
        s[k] += 1;
    }
    s
}

/// Copy of `base` with its seed replaced, for paired Monte Carlo trials.
pub fn with_seed(base: &Scenario, seed: u64) -> Scenario {
    Scenario { seed, ..base.clone() }
}

pub(crate) fn priority(sc: &Scenario) -> PriorityMatrix {
    sc.priority.clone().unwrap_or_default()
}

#[cfg(test)]
mod tests;
