//! Clairvoyant optimum: exact search over which ERV serves each request.
//!
//! Requests are taken in report order and every ERV serves its requests in
//! that order. An ERV may leave before a request is reported, so it arrives
//! at `free + travel` and the response time is that arrival minus the report
//! time, floored at zero. Any schedule the online policies can produce is in
//! this space, with equal or later arrivals.
//!
//! The search is a label-setting pass with one layer per request. Fleet
//! states are canonicalised by sorting ERVs, labels with the same cells are
//! pruned by Pareto dominance on (free times, cost), and a greedy schedule
//! bounds the cost together with a zero-response lower bound for the
//! remaining requests.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::incidents::{delay_variance, expected_delay, Incident};
use crate::network::CellId;
use crate::uav::{cooperation_effect, HazardIndex};

use super::{IncidentOutcome, Policy, RunResult, Scenario, StageOutcome, World};

#[derive(Debug, Clone, PartialEq)]
pub struct OptSchedule {
    /// ERV id serving each request, in report order.
    pub ervs: Vec<u32>,
    pub responses: Vec<f64>,
    /// Travel time of the serving ERV, before route support.
    pub travel: Vec<f64>,
    pub total_delay: f64,
    /// Label expansions performed.
    pub expansions: u64,
}

#[derive(Debug, Clone)]
struct Label {
    /// (cell, free_at, erv id), sorted by cell then free time.
    fleet: Vec<(CellId, f64, u32)>,
    cost: f64,
    trail: usize,
}

struct Step {
    parent: usize,
    erv: u32,
    response: f64,
    travel: f64,
}

struct Model<'a> {
    world: &'a World,
    reduce: bool,
}

impl Model<'_> {
    /// Response time, delay, finish time and travel time of `inc` served by
    /// an ERV at `cell` that is free at `free`.
    fn serve(&self, inc: &Incident, cell: CellId, free: f64) -> Result<(f64, f64, f64, f64)> {
        let travel = self.world.net.times_from(cell)[inc.location.index()];
        let effective = if self.reduce {
            cooperation_effect(travel, HazardIndex::new(inc.hazard)?, true)
        } else {
            travel
        };
        let response = (free + effective - inc.report_time).max(0.0);
        let finish = (free + travel).max(inc.report_time) + inc.params.clearance;
        Ok((response, expected_delay(&inc.params, response)?, finish, travel))
    }
}

fn canonical(mut fleet: Vec<(CellId, f64, u32)>) -> Vec<(CellId, f64, u32)> {
    fleet.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    fleet
}

fn dominates(a: &Label, b: &Label) -> bool {
    a.cost <= b.cost && a.fleet.iter().zip(&b.fleet).all(|(x, y)| x.1 <= y.1)
}

/// Minimum total delay over all ERV-to-request sequences. `reduce` applies
/// full UAV route support to every request.
pub fn optimal_schedule(world: &World, reduce: bool, cap: u64) -> Result<OptSchedule> {
    let model = Model { world, reduce };
    let incidents = &world.incidents;
    let n = incidents.len();
    let space = (world.ervs.len() as u128).saturating_pow(n as u32);

    // greedy upper bound
    let mut fleet: Vec<(CellId, f64)> = world.ervs.iter().map(|e| (e.cell, 0.0)).collect();
    let mut upper = 0.0;
    for inc in incidents {
        let mut best: Option<(usize, f64, f64)> = None;
        for (i, &(cell, free)) in fleet.iter().enumerate() {
            let (_, d, fin, _) = model.serve(inc, cell, free)?;
            if best.is_none_or(|b| d < b.1) {
                best = Some((i, d, fin));
            }
        }
        let (i, d, fin) = best.expect("at least one ERV");
        upper += d;
        fleet[i] = (inc.location, fin);
    }
    let slack = 1e-9 * upper.abs().max(1.0);

    let mut rest = vec![0.0; n + 1];
    for k in (0..n).rev() {
        rest[k] = rest[k + 1] + expected_delay(&incidents[k].params, 0.0)?;
    }

    let mut steps: Vec<Step> = Vec::new();
    let start = canonical(world.ervs.iter().map(|e| (e.cell, 0.0, e.id)).collect());
    let mut layer = vec![Label { fleet: start, cost: 0.0, trail: usize::MAX }];
    let mut expansions: u64 = 0;

    for (k, inc) in incidents.iter().enumerate() {
        let mut buckets: HashMap<Vec<CellId>, Vec<Label>> = HashMap::new();
        for label in &layer {
            for slot in 0..label.fleet.len() {
                // identical ERVs in the same state give identical children
                if slot > 0 && label.fleet[slot - 1].0 == label.fleet[slot].0 && label.fleet[slot - 1].1 == label.fleet[slot].1 {
                    continue;
                }
                expansions += 1;
                if expansions > cap {
                    return Err(Error::CapExceeded { space, cap: cap as u128 });
                }
                let (cell, free, id) = label.fleet[slot];
                let (response, delay, finish, travel) = model.serve(inc, cell, free)?;
                let cost = label.cost + delay;
                if cost + rest[k + 1] > upper + slack {
                    continue;
                }
                let mut fleet = label.fleet.clone();
                fleet[slot] = (inc.location, finish, id);
                steps.push(Step { parent: label.trail, erv: id, response, travel });
                let child = Label { fleet: canonical(fleet), cost, trail: steps.len() - 1 };
                let key: Vec<CellId> = child.fleet.iter().map(|f| f.0).collect();
                let bucket = buckets.entry(key).or_default();
                if bucket.iter().any(|b| dominates(b, &child)) {
                    continue;
                }
                bucket.retain(|b| !dominates(&child, b));
                bucket.push(child);
            }
        }
        let mut next: Vec<Label> = buckets.into_values().flatten().collect();
        // HashMap order is arbitrary; keep the search deterministic
        next.sort_by(|a, b| a.cost.total_cmp(&b.cost).then(a.trail.cmp(&b.trail)));
        layer = next;
        if layer.is_empty() {
            return Err(Error::ModelDomain("optimal search pruned every schedule".into()));
        }
    }

    let best = layer
        .iter()
        .min_by(|a, b| a.cost.total_cmp(&b.cost).then(a.trail.cmp(&b.trail)))
        .expect("non-empty layer");
    let mut ervs = vec![0; n];
    let mut responses = vec![0.0; n];
    let mut travel = vec![0.0; n];
    let mut at = best.trail;
    for k in (0..n).rev() {
        let s = &steps[at];
        ervs[k] = s.erv;
        responses[k] = s.response;
        travel[k] = s.travel;
        at = s.parent;
    }
    Ok(OptSchedule { ervs, responses, travel, total_delay: best.cost, expansions })
}

pub(super) fn run_opt(sc: &Scenario, world: &World) -> Result<RunResult> {
    let reduce = sc.cooperation && !world.uavs.is_empty();
    let sched = optimal_schedule(world, reduce, sc.opt_cap)?;
    let mut outcomes = Vec::with_capacity(world.incidents.len());
    for (k, inc) in world.incidents.iter().enumerate() {
        let response = sched.responses[k];
        let travel = sched.travel[k];
        let effective = if reduce { cooperation_effect(travel, HazardIndex::new(inc.hazard)?, true) } else { travel };
        outcomes.push(IncidentOutcome {
            id: inc.id,
            cell: inc.location,
            severity: inc.severity,
            report_time_h: inc.report_time,
            erv: sched.ervs[k],
            dispatch_time_h: inc.report_time + response - effective,
            travel_h: travel,
            effective_travel_h: effective,
            response_h: response,
            delay: expected_delay(&inc.params, response)?,
            delay_variance: delay_variance(&inc.params, response)?,
            uav: None,
            posterior: None,
        });
    }
    let stages = world
        .stage_times
        .iter()
        .enumerate()
        .map(|(s, &t)| {
            let here: Vec<&IncidentOutcome> = outcomes.iter().filter(|o| o.report_time_h == t).collect();
            StageOutcome {
                epoch: s,
                time_h: t,
                stage: s,
                free_ervs: Vec::new(),
                dispatched: here.iter().map(|o| o.id).collect(),
                relocated: 0,
                erv_cost: 0.0,
                uav_utility: 0.0,
                delay: here.iter().map(|o| o.delay).sum(),
            }
        })
        .collect();
    Ok(RunResult::finish(Policy::Opt, &sc.name, stages, outcomes))
}
