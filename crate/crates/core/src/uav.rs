//! UAV deployment: priority benefits, the utility DCOP, response-time
//! cooperation and delay assimilation.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dcop::{AgentId, DcopProblem, Sense};
use crate::error::{invalid, Error, Result};
use crate::network::{CellId, GridNetwork};

/// Route hazard level of an ERV's trip to an incident.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct HazardIndex(u8);

impl HazardIndex {
    const REDUCTION: [f64; 5] = [0.03, 0.05, 0.07, 0.09, 0.11];

    pub fn new(level: u8) -> Result<Self> {
        match level {
            1..=5 => Ok(Self(level)),
            _ => invalid(format!("hazard index must be in 1..=5, got {level}")),
        }
    }

    pub fn level(self) -> u8 {
        self.0
    }

    /// Fractional response-time reduction when a UAV supports the route.
    pub fn reduction(self) -> f64 {
        Self::REDUCTION[self.0 as usize - 1]
    }
}

impl TryFrom<u8> for HazardIndex {
    type Error = Error;
    fn try_from(level: u8) -> Result<Self> {
        Self::new(level)
    }
}

impl From<HazardIndex> for u8 {
    fn from(h: HazardIndex) -> u8 {
        h.0
    }
}

/// Sensor sparsity at an incident cell; 1 is dense coverage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct SensorSparsity(u8);

impl SensorSparsity {
    pub fn new(level: u8) -> Result<Self> {
        match level {
            1..=5 => Ok(Self(level)),
            _ => invalid(format!("sensor sparsity must be in 1..=5, got {level}")),
        }
    }

    pub fn level(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for SensorSparsity {
    type Error = Error;
    fn try_from(level: u8) -> Result<Self> {
        Self::new(level)
    }
}

impl From<SensorSparsity> for u8 {
    fn from(s: SensorSparsity) -> u8 {
        s.0
    }
}

/// Benefit of observing an incident, indexed by severity, sparsity and
/// hazard level. The default is `ω (SS + HI)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorityMatrix {
    /// `values[ω - 1][SS - 1][HI - 1]`
    pub values: [[[f64; 5]; 5]; 4],
}

impl Default for PriorityMatrix {
    fn default() -> Self {
        let mut values = [[[0.0; 5]; 5]; 4];
        for (w, plane) in values.iter_mut().enumerate() {
            for (ss, row) in plane.iter_mut().enumerate() {
                for (hi, v) in row.iter_mut().enumerate() {
                    *v = (w + 1) as f64 * (ss + hi + 2) as f64;
                }
            }
        }
        Self { values }
    }
}

impl PriorityMatrix {
    /// Rejects tables that are not strictly increasing along every axis.
    pub fn validate(&self) -> Result<()> {
        for w in 0..4 {
            for ss in 0..5 {
                for hi in 0..5 {
                    let v = self.values[w][ss][hi];
                    if !v.is_finite() {
                        return invalid("priority matrix entries must be finite");
                    }
                    let next = [
                        (w < 3).then(|| self.values[w + 1][ss][hi]),
                        (ss < 4).then(|| self.values[w][ss + 1][hi]),
                        (hi < 4).then(|| self.values[w][ss][hi + 1]),
                    ];
                    if next.iter().flatten().any(|&n| n <= v) {
                        return invalid(format!(
                            "priority matrix is not strictly increasing at ({}, {}, {})",
                            w + 1,
                            ss + 1,
                            hi + 1
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn benefit(&self, severity: u8, sparsity: SensorSparsity, hazard: HazardIndex) -> Result<f64> {
        if !(1..=4).contains(&severity) {
            return invalid(format!("severity must be in 1..=4, got {severity}"));
        }
        Ok(self.values[severity as usize - 1][sparsity.0 as usize - 1][hazard.0 as usize - 1])
    }
}

/// Benefit under the default matrix.
pub fn priority_benefit(severity: u8, sparsity: u8, hazard: u8) -> Result<f64> {
    PriorityMatrix::default().benefit(severity, SensorSparsity::new(sparsity)?, HazardIndex::new(hazard)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub id: u32,
    pub cell: CellId,
    pub available_at: f64,
}

impl UavState {
    pub fn new(id: u32, cell: CellId) -> Self {
        Self { id, cell, available_at: 0.0 }
    }

    pub fn is_free(&self, time: f64) -> bool {
        self.available_at <= time
    }
}

/// An incident a UAV may be sent to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavTarget {
    pub incident: u32,
    pub cell: CellId,
    pub severity: u8,
    pub sparsity: SensorSparsity,
    pub hazard: HazardIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UavConfig {
    /// Hours of travel that cost one benefit unit.
    pub hours_per_unit: f64,
    /// Observation variance as a multiple of the prior variance.
    pub kappa: f64,
}

impl Default for UavConfig {
    fn default() -> Self {
        Self { hours_per_unit: 0.1, kappa: 0.5 }
    }
}

impl UavConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.hours_per_unit > 0.0) || !self.hours_per_unit.is_finite() {
            return invalid(format!("UAV exchange rate must be positive, got {}", self.hours_per_unit));
        }
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return invalid(format!("kappa must be positive, got {}", self.kappa));
        }
        Ok(())
    }
}

/// Stage DCOP over the free UAVs. Each domain lists the targets, then the
/// UAV's own cell as an idle option worth nothing.
#[derive(Debug, Clone)]
pub struct UavProblem {
    pub problem: DcopProblem,
    pub fleet_index: Vec<usize>,
    pub targets: Vec<UavTarget>,
    /// `utility[agent][value]`
    pub utility: Vec<Vec<f64>>,
}

impl UavProblem {
    /// The target chosen by `agent` at `value`, or `None` when idle.
    pub fn target(&self, value: usize) -> Option<&UavTarget> {
        self.targets.get(value)
    }
}

/// Builds the utility problem, or `None` when there is nothing to observe
/// or no UAV is free.
pub fn build_uav_problem(
    targets: &[UavTarget],
    uavs: &[UavState],
    matrix: &PriorityMatrix,
    net: &GridNetwork,
    config: &UavConfig,
    time: f64,
) -> Result<Option<UavProblem>> {
    config.validate()?;
    let free: Vec<usize> = (0..uavs.len()).filter(|&i| uavs[i].is_free(time)).collect();
    if targets.is_empty() || free.is_empty() {
        return Ok(None);
    }
    let benefits = targets
        .iter()
        .map(|t| {
            net.check(t.cell)?;
            matrix.benefit(t.severity, t.sparsity, t.hazard)
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut domains = Vec::with_capacity(free.len());
    let mut utility = Vec::with_capacity(free.len());
    for &i in &free {
        let uav = &uavs[i];
        let times = net.times_from(uav.cell);
        let mut cells: Vec<CellId> = targets.iter().map(|t| t.cell).collect();
        let mut u: Vec<f64> = targets
            .iter()
            .zip(&benefits)
            .map(|(t, b)| b - times[t.cell.index()] / config.hours_per_unit)
            .collect();
        cells.push(uav.cell);
        u.push(0.0);
        domains.push(cells);
        utility.push(u);
    }

    let agents = free.iter().map(|&i| AgentId(uavs[i].id)).collect();
    let mut problem = DcopProblem::new(agents, domains.clone(), Sense::Maximize)?;
    if free.len() == 1 {
        problem.add_unary(0, utility[0].clone())?;
    } else {
        for a in 0..free.len() {
            for b in a + 1..free.len() {
                let (ua, ub) = (&utility[a], &utility[b]);
                let (da, db) = (&domains[a], &domains[b]);
                problem.add_binary_fn(a, b, |i, j| {
                    if da[i] == db[j] {
                        f64::NEG_INFINITY
                    } else {
                        ua[i] + ub[j]
                    }
                })?;
            }
        }
    }
    Ok(Some(UavProblem { problem, fleet_index: free, targets: targets.to_vec(), utility }))
}

/// Response time after UAV support of the route, if any.
pub fn cooperation_effect(response_time: f64, hazard: HazardIndex, cooperating: bool) -> f64 {
    if cooperating {
        response_time * (1.0 - hazard.reduction())
    } else {
        response_time
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayBelief {
    pub mean: f64,
    pub variance: f64,
}

impl DelayBelief {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() || !(variance >= 0.0) || !variance.is_finite() {
            return invalid(format!("invalid delay belief ({mean}, {variance})"));
        }
        Ok(Self { mean, variance })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assimilation {
    pub beta: f64,
    pub posterior: DelayBelief,
}

/// Precision-weighted fusion of a prior delay estimate with an observation.
pub fn assimilate(prior: DelayBelief, observation: DelayBelief) -> Result<Assimilation> {
    if !(prior.variance > 0.0) {
        return invalid(format!("prior variance must be positive, got {}", prior.variance));
    }
    if !(observation.variance >= 0.0) {
        return invalid(format!("observation variance must be non-negative, got {}", observation.variance));
    }
    let beta = prior.variance / (prior.variance + observation.variance);
    let posterior = DelayBelief {
        mean: (1.0 - beta) * prior.mean + beta * observation.mean,
        variance: (1.0 - beta) * prior.variance,
    };
    Ok(Assimilation { beta, posterior })
}

/// Simulated UAV observation of an incident whose true delay deviates from
/// the prior mean by a standard-normal multiple of the prior spread.
pub fn observe(prior: DelayBelief, kappa: f64, rng: &mut impl Rng) -> Result<DelayBelief> {
    let z: f64 = StandardNormal.sample(rng);
    let latent = prior.mean + z * prior.variance.sqrt();
    let variance = kappa * prior.variance;
    let noise = Normal::new(0.0, variance.sqrt()).map_err(|e| Error::InvalidInput(e.to_string()))?;
    DelayBelief::new(latent + noise.sample(rng), variance)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssimilationRecord {
    pub incident: u32,
    pub prior_mean: f64,
    pub prior_var: f64,
    pub obs_mean: f64,
    pub obs_var: f64,
    pub beta: f64,
    pub post_mean: f64,
    pub post_var: f64,
}

impl AssimilationRecord {
    pub fn new(incident: u32, prior: DelayBelief, obs: DelayBelief, result: &Assimilation) -> Self {
        Self {
            incident,
            prior_mean: prior.mean,
            prior_var: prior.variance,
            obs_mean: obs.mean,
            obs_var: obs.variance,
            beta: result.beta,
            post_mean: result.posterior.mean,
            post_var: result.posterior.variance,
        }
    }
}

pub fn write_assimilation_csv<W: Write>(records: &[AssimilationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record(["incident", "prior_mean", "prior_var", "obs_mean", "obs_var", "beta", "post_mean", "post_var"])
            .map_err(crate::solvers::csv_err)?;
    }
    for r in records {
        w.serialize(r).map_err(crate::solvers::csv_err)?;
    }
    w.flush()?;
    Ok(())
}
