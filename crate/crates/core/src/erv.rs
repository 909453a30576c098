//! ERV stage problems: dispatch and relocation costs, the look-ahead term
//! and fleet updates after a solve.
//!
//! Every free ERV holds one variable whose domain is the set of incident
//! cells in the dispatch window followed by the top-K relocation cells of
//! the next forecast stage. A pairwise constraint is infinite when two ERVs
//! pick the same cell and otherwise carries both endpoints' unary costs, so
//! on a complete graph of `n` ERVs each unary term is counted `n - 1` times.
//! That uniform scaling leaves the argmin unchanged. A lone ERV gets a unary
//! constraint instead.

use serde::{Deserialize, Serialize};

use crate::dcop::{AgentId, Assignment, DcopProblem, Sense};
use crate::error::{invalid, Error, Result};
use crate::forecast::Forecast;
use crate::incidents::{stochastic_delay, Incident, SEVERITY_TABLE};
use crate::network::{CellId, GridNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssignmentKind {
    Dispatch,
    Relocate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub stage: usize,
    pub cell: CellId,
    pub kind: AssignmentKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErvState {
    pub id: u32,
    pub cell: CellId,
    pub available_at: f64,
    pub log: Vec<LogEntry>,
}

impl ErvState {
    pub fn new(id: u32, cell: CellId) -> Self {
        Self { id, cell, available_at: 0.0, log: Vec::new() }
    }

    pub fn is_free(&self, time: f64) -> bool {
        self.available_at <= time
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ErvConfig {
    pub w_d: f64,
    /// `w_r` is this factor times the largest dispatch cost of the stage.
    pub w_r_factor: f64,
    pub relocation_candidates: usize,
    pub lookahead: usize,
}

impl Default for ErvConfig {
    fn default() -> Self {
        Self { w_d: 1.0, w_r_factor: 100.0, relocation_candidates: 10, lookahead: 2 }
    }
}

impl ErvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_d > 0.0) || !self.w_d.is_finite() {
            return invalid(format!("w_d must be positive, got {}", self.w_d));
        }
        if !(self.w_r_factor > 1.0) || !self.w_r_factor.is_finite() {
            return invalid(format!("w_r factor must exceed 1, got {}", self.w_r_factor));
        }
        Ok(())
    }
}

/// Expected delay of a not-yet-reported incident of uniformly random
/// severity, as a quadratic in its response time. Built from the midpoint
/// of each severity row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceDelay {
    a: f64,
    b: f64,
    c: f64,
}

impl ReferenceDelay {
    pub fn from_severity_table() -> Self {
        // TD(r) = K ((r + cl)^2 + var) with K clamped at zero
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for row in &SEVERITY_TABLE {
            let p = row.midpoint();
            let k = stochastic_delay(&p, 1.0).map(|d| d.value).unwrap_or(0.0) / (1.0 + p.r_var);
            a += k;
            b += 2.0 * k * p.clearance;
            c += k * (p.clearance * p.clearance + p.r_var);
        }
        let n = SEVERITY_TABLE.len() as f64;
        Self { a: a / n, b: b / n, c: c / n }
    }

    pub fn delay(&self, response: f64) -> f64 {
        (self.a * response + self.b) * response + self.c
    }

    /// Mean clearance time across severities.
    pub fn clearance(&self) -> f64 {
        SEVERITY_TABLE.iter().map(|r| r.midpoint().clearance).sum::<f64>() / SEVERITY_TABLE.len() as f64
    }
}

/// Everything the ERV cost functions need at one decision time.
#[derive(Debug, Clone)]
pub struct StageContext<'a> {
    pub net: &'a GridNetwork,
    pub forecast: &'a Forecast,
    /// Current time (h).
    pub time: f64,
    /// Forecast stage of the current decision; the next stage is `stage + 1`.
    pub stage: usize,
    /// Time of the current stage; future stage `t` starts `t * stage_gap` later.
    pub stage_time: f64,
    pub stage_gap: f64,
    /// Incidents offered for dispatch at this decision.
    pub incidents: Vec<Incident>,
    /// Cells that may not be used as relocation targets (other open incidents).
    pub blocked: Vec<CellId>,
    pub w_d: f64,
    pub w_r: f64,
    pub lookahead: usize,
    pub reference: ReferenceDelay,
}

impl<'a> StageContext<'a> {
    pub fn new(net: &'a GridNetwork, forecast: &'a Forecast, time: f64, stage: usize) -> Self {
        Self {
            net,
            forecast,
            time,
            stage,
            stage_time: time,
            stage_gap: 0.5,
            incidents: Vec::new(),
            blocked: Vec::new(),
            w_d: 1.0,
            w_r: 100.0,
            lookahead: 2,
            reference: ReferenceDelay::from_severity_table(),
        }
    }

    pub fn incident_at(&self, cell: CellId) -> Option<&Incident> {
        self.incidents.iter().find(|i| i.location == cell)
    }

    fn future_stage_time(&self, t: usize) -> f64 {
        self.stage_time + t as f64 * self.stage_gap
    }

    /// Expected delay if `erv` is sent to `incident` now.
    pub fn dispatch_delay(&self, erv: &ErvState, incident: &Incident) -> Result<f64> {
        let travel = self.net.travel_time(erv.cell, incident.location)?;
        let waited = (self.time - incident.report_time).max(0.0);
        Ok(stochastic_delay(&incident.params, waited + travel + incident.params.clearance)?.value)
    }
}

/// Current-stage cost of putting `erv` on `cell`: weighted expected delay
/// for an incident cell, `w_r (1 - p)` for a relocation cell where `p` is the
/// expected incident probability of the next stage.
pub fn unary_cost(ctx: &StageContext<'_>, erv: &ErvState, cell: CellId) -> Result<f64> {
    ctx.net.check(cell)?;
    match ctx.incident_at(cell) {
        Some(inc) => Ok(ctx.w_d * ctx.dispatch_delay(erv, inc)?),
        None => Ok(ctx.w_r * (1.0 - ctx.forecast.expected(cell, ctx.stage + 1))),
    }
}

/// Cost of an explicit plan `(d⁰, d¹, …, dʰ)`: the current-stage cost of
/// `d⁰` plus, for each future stage `t`, the expected probability of an
/// incident at `dᵗ` times the reference delay of reaching it from `dᵗ⁻¹`.
///
/// An ERV still busy when stage `t` ends cannot move in that stage: its
/// plan must repeat the previous cell, which then costs nothing. Moving
/// anyway, or arriving after the stage window closes, is infeasible.
pub fn lookahead_cost(ctx: &StageContext<'_>, erv: &ErvState, plan: &[CellId]) -> Result<f64> {
    if plan.len() != ctx.lookahead + 1 {
        return invalid(format!("plan has {} cells, look-ahead needs {}", plan.len(), ctx.lookahead + 1));
    }
    let mut cost = unary_cost(ctx, erv, plan[0])?;
    let travel0 = ctx.net.travel_time(erv.cell, plan[0])?;
    let mut free_at = ctx.time + travel0;
    if let Some(inc) = ctx.incident_at(plan[0]) {
        free_at += inc.params.clearance;
    }
    for t in 1..plan.len() {
        let (from, to) = (plan[t - 1], plan[t]);
        let start = ctx.future_stage_time(t);
        let end = start + ctx.stage_gap;
        if free_at >= end {
            if from != to {
                return Err(Error::ModelDomain(format!(
                    "ERV {} is busy until {free_at:.3} h and cannot move in stage {t}",
                    erv.id
                )));
            }
            continue;
        }
        let depart = free_at.max(start);
        let arrival = depart + ctx.net.travel_time(from, to)?;
        if from != to && arrival > end {
            return Err(Error::ModelDomain(format!(
                "ERV {} reaches cell {to} at {arrival:.3} h, after stage {t} ends at {end:.3} h",
                erv.id
            )));
        }
        let p = ctx.forecast.expected(to, ctx.stage + t);
        cost += ctx.w_d * p * ctx.reference.delay(arrival - start);
        free_at = arrival + if p > 0.0 { ctx.reference.clearance() } else { 0.0 };
    }
    Ok(cost)
}

/// Look-ahead term used inside the stage DCOP: the expected reference delay
/// of the next incident in each future stage if this ERV, positioned at
/// `cell` and free at `free_at`, had to respond. Future cells are weighted
/// by their share of the stage's expected incidents.
pub fn expected_lookahead(ctx: &StageContext<'_>, cell: CellId, free_at: f64) -> f64 {
    let times = ctx.net.times_from(cell);
    (1..=ctx.lookahead)
        .map(|t| {
            let probs = ctx.forecast.expected_stage(ctx.stage + t);
            let total: f64 = probs.iter().sum();
            if total <= 0.0 {
                return 0.0;
            }
            let wait = (free_at - ctx.future_stage_time(t)).max(0.0);
            probs
                .iter()
                .zip(times)
                .map(|(p, tt)| p * ctx.reference.delay(wait + tt))
                .sum::<f64>()
                / total
        })
        .sum()
}

/// Stage DCOP over the free ERVs.
#[derive(Debug, Clone)]
pub struct ErvProblem {
    pub problem: DcopProblem,
    /// Fleet index of each agent.
    pub fleet_index: Vec<usize>,
    /// Shared domain: dispatch cells first, then relocation cells.
    pub cells: Vec<CellId>,
    pub dispatch_cells: usize,
    /// `unary[agent][value]`, including the look-ahead term.
    pub unary: Vec<Vec<f64>>,
    pub w_r: f64,
}

impl ErvProblem {
    pub fn kind(&self, value: usize) -> AssignmentKind {
        if value < self.dispatch_cells {
            AssignmentKind::Dispatch
        } else {
            AssignmentKind::Relocate
        }
    }

    /// Sum of unary costs, each counted once.
    pub fn unary_total(&self, a: &Assignment) -> f64 {
        a.choice.iter().enumerate().map(|(i, &v)| self.unary[i][v]).sum()
    }
}

/// Top-`k` cells by next-stage expected probability, skipping `excluded`;
/// ties go to the lower cell index.
pub fn relocation_candidates(ctx: &StageContext<'_>, k: usize, excluded: &[CellId]) -> Vec<CellId> {
    let probs = ctx.forecast.expected_stage(ctx.stage + 1);
    let mut cells: Vec<CellId> = ctx.net.cells().filter(|c| !excluded.contains(c)).collect();
    cells.sort_by(|a, b| probs[b.index()].total_cmp(&probs[a.index()]).then(a.cmp(b)));
    cells.truncate(k);
    cells
}

/// Builds the stage problem. `ctx.w_r` is overwritten with `w_r_factor`
/// times the largest dispatch cost (look-ahead included) over free ERVs and
/// dispatch cells; with no incidents the reference delay at each relocation
/// cell stands in.
pub fn build_erv_problem(
    ctx: &mut StageContext<'_>,
    fleet: &[ErvState],
    config: &ErvConfig,
) -> Result<ErvProblem> {
    config.validate()?;
    ctx.w_d = config.w_d;
    ctx.lookahead = config.lookahead;
    let free: Vec<usize> = (0..fleet.len()).filter(|&i| fleet[i].is_free(ctx.time)).collect();
    if free.is_empty() {
        return invalid(format!("no ERV is free at {:.3} h", ctx.time));
    }

    let mut dispatch: Vec<CellId> = Vec::new();
    for inc in &ctx.incidents {
        ctx.net.check(inc.location)?;
        if !dispatch.contains(&inc.location) {
            dispatch.push(inc.location);
        }
    }
    let mut excluded = dispatch.clone();
    excluded.extend(ctx.blocked.iter().copied());
    let relocation = relocation_candidates(ctx, config.relocation_candidates, &excluded);
    let cells: Vec<CellId> = dispatch.iter().chain(&relocation).copied().collect();
    if cells.is_empty() {
        return invalid("ERV domain is empty");
    }

    // branch-independent parts: weighted delay / reference delay and look-ahead
    let mut delay = vec![vec![0.0; cells.len()]; free.len()];
    let mut ahead = vec![vec![0.0; cells.len()]; free.len()];
    for (a, &fi) in free.iter().enumerate() {
        let erv = &fleet[fi];
        let times = ctx.net.times_from(erv.cell);
        for (v, &cell) in cells.iter().enumerate() {
            let travel = times[cell.index()];
            let mut free_at = ctx.time + travel;
            if v < dispatch.len() {
                let inc = ctx.incident_at(cell).expect("dispatch cell has an incident");
                delay[a][v] = ctx.w_d * ctx.dispatch_delay(erv, inc)?;
                free_at += inc.params.clearance;
            } else {
                delay[a][v] = ctx.w_d * ctx.reference.delay(travel);
            }
            ahead[a][v] = ctx.w_d * expected_lookahead(ctx, cell, free_at);
        }
    }
    let span = if dispatch.is_empty() { 0..cells.len() } else { 0..dispatch.len() };
    let max_cost = (0..free.len())
        .flat_map(|a| span.clone().map(move |v| (a, v)))
        .map(|(a, v)| delay[a][v] + ahead[a][v])
        .fold(0.0f64, f64::max);
    ctx.w_r = config.w_r_factor * max_cost.max(config.w_d);

    let unary: Vec<Vec<f64>> = (0..free.len())
        .map(|a| {
            (0..cells.len())
                .map(|v| {
                    let branch = if v < dispatch.len() {
                        delay[a][v]
                    } else {
                        ctx.w_r * (1.0 - ctx.forecast.expected(cells[v], ctx.stage + 1))
                    };
                    branch + ahead[a][v]
                })
                .collect()
        })
        .collect();

    let agents = free.iter().map(|&i| AgentId(fleet[i].id)).collect();
    let domains = vec![cells.clone(); free.len()];
    let mut problem = DcopProblem::new(agents, domains, Sense::Minimize)?;
    if free.len() == 1 {
        problem.add_unary(0, unary[0].clone())?;
    } else {
        for a in 0..free.len() {
            for b in a + 1..free.len() {
                let (ua, ub) = (&unary[a], &unary[b]);
                problem.add_binary_fn(a, b, |i, j| if i == j { f64::INFINITY } else { ua[i] + ub[j] })?;
            }
        }
    }
    Ok(ErvProblem {
        problem,
        fleet_index: free,
        dispatch_cells: dispatch.len(),
        cells,
        unary,
        w_r: ctx.w_r,
    })
}

/// One ERV move decided at a stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErvMove {
    pub erv: u32,
    pub cell: CellId,
    pub kind: AssignmentKind,
    /// Travel time to the target cell.
    pub travel_h: f64,
    pub incident: Option<u32>,
    /// Time the incident waited before this dispatch.
    pub waited_h: f64,
    /// Time the ERV becomes available again.
    pub available_at: f64,
}

/// Applies a solved assignment to the fleet. A dispatched ERV moves to the
/// incident and is busy until it has travelled and cleared it; a relocated
/// ERV is busy while it travels. Returns one move per agent.
pub fn apply_assignment(
    ctx: &StageContext<'_>,
    fleet: &mut [ErvState],
    ep: &ErvProblem,
    a: &Assignment,
) -> Result<Vec<ErvMove>> {
    ep.problem.check_assignment(a)?;
    let mut moves = Vec::with_capacity(a.choice.len());
    for (agent, &v) in a.choice.iter().enumerate() {
        let fi = ep.fleet_index[agent];
        let erv = fleet
            .get_mut(fi)
            .filter(|e| AgentId(e.id) == ep.problem.agents()[agent])
            .ok_or_else(|| Error::InvalidInput(format!("assignment agent {agent} is not in the fleet")))?;
        let cell = ep.cells[v];
        let travel = ctx.net.travel_time(erv.cell, cell)?;
        let start = erv.available_at.max(ctx.time);
        let kind = ep.kind(v);
        let (incident, waited, busy) = match kind {
            AssignmentKind::Dispatch => {
                let inc = ctx.incident_at(cell).expect("dispatch cell has an incident");
                (Some(inc.id), (ctx.time - inc.report_time).max(0.0), travel + inc.params.clearance)
            }
            AssignmentKind::Relocate => (None, 0.0, travel),
        };
        erv.available_at = start + busy;
        erv.cell = cell;
        erv.log.push(LogEntry { stage: ctx.stage, cell, kind });
        moves.push(ErvMove {
            erv: erv.id,
            cell,
            kind,
            travel_h: travel,
            incident,
            waited_h: waited,
            available_at: erv.available_at,
        });
    }
    Ok(moves)
}
