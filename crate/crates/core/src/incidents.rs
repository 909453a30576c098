//! Incidents, severity-driven traffic parameters and the stochastic
//! queueing delay model.
//!
//! An incident's duration is `response + clearance`. The expected total delay
//! and its variance follow the stochastic deterministic-queue model with a
//! random reduced capacity `s1 ~ (mean, sd)` and a random duration
//! `r ~ (mean, var)`. Both are clamped at zero: inside the sampled parameter
//! box the raw expressions can dip below zero when `q < s1 < s`.

use std::io::BufRead;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::network::CellId;
use crate::rng;

/// Traffic parameters around one incident. Rates in vehicles/hour, times in
/// hours. The duration mean is not stored: it is `response + clearance` and
/// depends on who responds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficParams {
    /// Freeway capacity, also the discharge rate after clearance.
    pub s: f64,
    /// Mean reduced capacity during the incident.
    pub s1_mean: f64,
    /// Standard deviation of the reduced capacity.
    pub s1_sd: f64,
    /// Arrival flow rate.
    pub q: f64,
    /// Variance of the incident duration (h²).
    pub r_var: f64,
    /// Clearance time once an ERV is on scene.
    pub clearance: f64,
}

impl TrafficParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.s, self.s1_mean, self.s1_sd, self.q, self.r_var, self.clearance]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return invalid("traffic parameters must be finite");
        }
        if !(self.s > 0.0) || !(self.q > 0.0) {
            return invalid(format!("capacity and flow must be positive (s={}, q={})", self.s, self.q));
        }
        if self.s1_sd < 0.0 || self.r_var < 0.0 || self.clearance < 0.0 {
            return invalid("standard deviation, duration variance and clearance must be non-negative");
        }
        Ok(())
    }
}

/// Uniform sampling box for one severity level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeverityRow {
    pub s: (f64, f64),
    pub s1_mean: (f64, f64),
    pub s1_sd: (f64, f64),
    pub q: (f64, f64),
    pub r_var: (f64, f64),
    pub clearance: (f64, f64),
}

impl SeverityRow {
    pub fn midpoint(&self) -> TrafficParams {
        let mid = |(a, b): (f64, f64)| 0.5 * (a + b);
        TrafficParams {
            s: mid(self.s),
            s1_mean: mid(self.s1_mean),
            s1_sd: mid(self.s1_sd),
            q: mid(self.q),
            r_var: mid(self.r_var),
            clearance: mid(self.clearance),
        }
    }

    pub fn contains(&self, p: &TrafficParams) -> bool {
        let within = |(a, b): (f64, f64), v: f64| v >= a && v <= b;
        within(self.s, p.s)
            && within(self.s1_mean, p.s1_mean)
            && within(self.s1_sd, p.s1_sd)
            && within(self.q, p.q)
            && within(self.r_var, p.r_var)
            && within(self.clearance, p.clearance)
    }
}

/// Simulation parameter table, one row per severity level 1..=4.
pub const SEVERITY_TABLE: [SeverityRow; 4] = [
    SeverityRow {
        s: (750.0, 800.0),
        s1_mean: (600.0, 800.0),
        s1_sd: (100.0, 200.0),
        q: (600.0, 720.0),
        r_var: (0.1, 0.2),
        clearance: (0.2, 0.3),
    },
    SeverityRow {
        s: (1130.0, 1500.0),
        s1_mean: (900.0, 1900.0),
        s1_sd: (100.0, 300.0),
        q: (960.0, 1120.0),
        r_var: (0.2, 0.3),
        clearance: (0.3, 0.4),
    },
    SeverityRow {
        s: (1700.0, 1900.0),
        s1_mean: (1000.0, 1200.0),
        s1_sd: (100.0, 300.0),
        q: (1440.0, 1644.0),
        r_var: (0.2, 0.4),
        clearance: (0.5, 0.7),
    },
    SeverityRow {
        s: (2200.0, 2800.0),
        s1_mean: (1000.0, 1500.0),
        s1_sd: (100.0, 300.0),
        q: (1824.0, 2015.0),
        r_var: (0.2, 0.3),
        clearance: (0.5, 1.0),
    },
];

pub fn severity_row(severity: u8) -> Result<&'static SeverityRow> {
    match severity {
        1..=4 => Ok(&SEVERITY_TABLE[severity as usize - 1]),
        _ => invalid(format!("severity must be in 1..=4, got {severity}")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incident {
    pub id: u32,
    pub location: CellId,
    pub severity: u8,
    pub report_time: f64,
    pub params: TrafficParams,
    /// Hazard index (1..=5) of the responder's route to this incident.
    pub hazard: u8,
    /// Sensor sparsity level (1..=5) at the incident cell.
    pub sparsity: u8,
    pub cleared: bool,
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Draws every traffic parameter uniformly from the row for `severity`, plus
/// a route hazard index and a sensor-sparsity level, each uniform on 1..=5.
pub fn sample_incident(
    id: u32,
    severity: u8,
    location: CellId,
    report_time: f64,
    seed: u64,
) -> Result<Incident> {
    let row = severity_row(severity)?;
    if !(report_time >= 0.0) || !report_time.is_finite() {
        return invalid(format!("report time must be a non-negative number, got {report_time}"));
    }
    let mut rng = rng::stream(seed, rng::INCIDENTS, id as u64);
    let params = sample_params(row, &mut rng);
    let hazard = rng.random_range(1..=5);
    let sparsity = rng.random_range(1..=5);
    Ok(Incident { id, location, severity, report_time, params, hazard, sparsity, cleared: false })
}

pub fn sample_params(row: &SeverityRow, rng: &mut impl Rng) -> TrafficParams {
    TrafficParams {
        s: uniform(rng, row.s),
        s1_mean: uniform(rng, row.s1_mean),
        s1_sd: uniform(rng, row.s1_sd),
        q: uniform(rng, row.q),
        r_var: uniform(rng, row.r_var),
        clearance: uniform(rng, row.clearance),
    }
}

/// Delay evaluation together with the unclamped value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayEstimate {
    pub value: f64,
    pub raw: f64,
    pub clamped: bool,
}

impl DelayEstimate {
    fn clamp(raw: f64) -> Self {
        Self { value: raw.max(0.0), raw, clamped: raw < 0.0 }
    }
}

fn check_duration(mean_duration: f64) -> Result<()> {
    if !(mean_duration >= 0.0) || !mean_duration.is_finite() {
        return invalid(format!("incident duration must be non-negative, got {mean_duration}"));
    }
    Ok(())
}

/// Expected total delay (vehicle-hours) for a given mean incident duration.
pub fn stochastic_delay(p: &TrafficParams, mean_duration: f64) -> Result<DelayEstimate> {
    p.validate()?;
    check_duration(mean_duration)?;
    if p.s <= p.q {
        return Err(Error::ModelDomain(format!(
            "capacity {} does not exceed flow {}: the queue never dissipates",
            p.s, p.q
        )));
    }
    // s̄₁² + σ² − (s + q)s̄₁ + sq, factored to avoid cancellation near s̄₁ = q
    let bracket = (p.s - p.s1_mean) * (p.q - p.s1_mean) + p.s1_sd * p.s1_sd;
    let duration = mean_duration * mean_duration + p.r_var;
    Ok(DelayEstimate::clamp(bracket * duration / (2.0 * (p.s - p.q))))
}

/// Variance of the total delay for a given mean incident duration.
pub fn stochastic_delay_variance(p: &TrafficParams, mean_duration: f64) -> Result<DelayEstimate> {
    p.validate()?;
    check_duration(mean_duration)?;
    let gap2 = (p.q - p.s1_mean).powi(2);
    let q2 = p.q * p.q;
    let r2 = mean_duration * mean_duration;
    let raw = (gap2 + p.s1_sd * p.s1_sd) * (p.r_var + r2) / (3.0 * q2) - gap2 * r2 / (4.0 * q2);
    Ok(DelayEstimate::clamp(raw))
}

/// Expected delay when the responder needs `response_time` hours to arrive.
pub fn expected_delay(p: &TrafficParams, response_time: f64) -> Result<f64> {
    check_duration(response_time)?;
    Ok(stochastic_delay(p, response_time + p.clearance)?.value)
}

pub fn delay_variance(p: &TrafficParams, response_time: f64) -> Result<f64> {
    check_duration(response_time)?;
    Ok(stochastic_delay_variance(p, response_time + p.clearance)?.value)
}

/// Classical deterministic-queue delay for a fixed reduced capacity and duration.
pub fn deterministic_queue_delay(s: f64, s1: f64, q: f64, duration: f64) -> f64 {
    (s - s1) * (q - s1) * duration * duration / (2.0 * (s - q))
}

/// One line of an incident stream file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidentRecord {
    pub id: u32,
    pub severity: u8,
    pub cell: CellId,
    pub report_time_h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<TrafficParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hazard: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<u8>,
}

impl IncidentRecord {
    /// Materialises the record, sampling whatever it leaves unspecified.
    pub fn to_incident(&self, seed: u64) -> Result<Incident> {
        let mut inc = sample_incident(self.id, self.severity, self.cell, self.report_time_h, seed)?;
        if let Some(params) = self.params {
            params.validate()?;
            inc.params = params;
        }
        for (level, slot) in [(self.hazard, &mut inc.hazard), (self.sparsity, &mut inc.sparsity)] {
            if let Some(level) = level {
                if !(1..=5).contains(&level) {
                    return invalid(format!("incident {}: level {level} outside 1..=5", self.id));
                }
                *slot = level;
            }
        }
        Ok(inc)
    }
}

impl From<&Incident> for IncidentRecord {
    fn from(inc: &Incident) -> Self {
        Self {
            id: inc.id,
            severity: inc.severity,
            cell: inc.location,
            report_time_h: inc.report_time,
            params: Some(inc.params),
            hazard: Some(inc.hazard),
            sparsity: Some(inc.sparsity),
        }
    }
}

/// Reads a JSON-lines incident stream. Blank lines are skipped.
pub fn read_incident_stream(reader: impl BufRead) -> Result<Vec<IncidentRecord>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: IncidentRecord = serde_json::from_str(&line)
            .map_err(|e| Error::InvalidInput(format!("incident stream line {}: {e}", n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked() -> TrafficParams {
        TrafficParams { s: 1800.0, s1_mean: 1100.0, s1_sd: 200.0, q: 1500.0, r_var: 0.04, clearance: 0.0 }
    }

    #[test]
    fn worked_delay_value() {
        let d = stochastic_delay(&worked(), 0.8).unwrap();
        assert!((d.value - 362.666_666_666_666_7).abs() < 1e-9);
        assert!(!d.clamped);
        assert_eq!(expected_delay(&worked(), 0.8).unwrap(), d.value);
    }

    #[test]
    fn no_net_queue_growth_gives_zero_delay() {
        let p = TrafficParams { s1_mean: 1500.0, s1_sd: 0.0, ..worked() };
        assert_eq!(stochastic_delay(&p, 0.8).unwrap().value, 0.0);
        assert_eq!(stochastic_delay_variance(&p, 0.8).unwrap().value, 0.0);
    }

    #[test]
    fn zero_duration_zero_delay() {
        let p = TrafficParams { r_var: 0.0, ..worked() };
        assert_eq!(stochastic_delay(&p, 0.0).unwrap().value, 0.0);
    }

    #[test]
    fn variance_reduces_without_spread() {
        let p = TrafficParams { s1_sd: 0.0, r_var: 0.0, ..worked() };
        let v = stochastic_delay_variance(&p, 0.8).unwrap().value;
        let expect = (1500.0f64 - 1100.0).powi(2) * 0.64 / (12.0 * 1500.0 * 1500.0);
        assert!((v - expect).abs() < 1e-15);
    }

    #[test]
    fn saturated_freeway_is_a_domain_error() {
        let p = TrafficParams { q: 1800.0, ..worked() };
        assert!(matches!(stochastic_delay(&p, 1.0), Err(Error::ModelDomain(_))));
        let p = TrafficParams { q: 1900.0, ..worked() };
        assert!(matches!(expected_delay(&p, 1.0), Err(Error::ModelDomain(_))));
    }

    #[test]
    fn zero_flow_rejected_for_variance() {
        let p = TrafficParams { q: 0.0, ..worked() };
        assert!(delay_variance(&p, 1.0).is_err());
    }

    #[test]
    fn negative_raw_value_is_clamped_and_flagged() {
        // q < s1 < s: the bracket is negative.
        let p = TrafficParams { s: 1500.0, s1_mean: 1300.0, s1_sd: 10.0, q: 1000.0, r_var: 0.2, clearance: 0.3 };
        let d = stochastic_delay(&p, 1.0).unwrap();
        assert!(d.raw < 0.0);
        assert!(d.clamped);
        assert_eq!(d.value, 0.0);
    }

    #[test]
    fn severity_rows_match_table() {
        let inc = sample_incident(1, 1, CellId(3), 0.0, 9).unwrap();
        assert!((750.0..=800.0).contains(&inc.params.s));
        assert!((600.0..=720.0).contains(&inc.params.q));
        assert!((0.2..=0.3).contains(&inc.params.clearance));
        let inc = sample_incident(2, 4, CellId(3), 0.0, 9).unwrap();
        assert!((2200.0..=2800.0).contains(&inc.params.s));
        assert!((1824.0..=2015.0).contains(&inc.params.q));
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let a = sample_incident(5, 3, CellId(1), 1.5, 42).unwrap();
        let b = sample_incident(5, 3, CellId(1), 1.5, 42).unwrap();
        let c = sample_incident(5, 3, CellId(1), 1.5, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn severity_out_of_range() {
        assert!(sample_incident(0, 0, CellId(0), 0.0, 1).is_err());
        assert!(sample_incident(0, 5, CellId(0), 0.0, 1).is_err());
    }

    #[test]
    fn every_sampled_row_keeps_capacity_above_flow() {
        for sev in 1..=4u8 {
            let row = severity_row(sev).unwrap();
            assert!(row.s.0 > row.q.1, "severity {sev}");
        }
    }

    #[test]
    fn incident_stream_parses_and_overrides() {
        let text = r#"{"id": 1, "severity": 2, "cell": 14, "report_time_h": 0.5}

{"id": 2, "severity": 4, "cell": 3, "report_time_h": 1.0, "hazard": 5, "params": {"s": 2000, "s1_mean": 1200, "s1_sd": 100, "q": 1800, "r_var": 0.2, "clearance": 0.6}}
"#;
        let recs = read_incident_stream(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        let a = recs[0].to_incident(3).unwrap();
        assert!(severity_row(2).unwrap().contains(&a.params));
        let b = recs[1].to_incident(3).unwrap();
        assert_eq!(b.params.s, 2000.0);
        assert_eq!(b.hazard, 5);
    }

    #[test]
    fn incident_stream_reports_bad_line() {
        let err = read_incident_stream("{\"id\": 1}\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(m) if m.contains("line 1")));
    }
}
