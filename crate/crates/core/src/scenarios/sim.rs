//! Event loop shared by the conventional and DCOP policies.
//!
//! Decisions happen at every stage time and, while requests are waiting, at
//! every time an ERV becomes free. Waiting requests are served oldest first.

use crate::erv::{apply_assignment, build_erv_problem, AssignmentKind, ErvState, StageContext};
use crate::error::{Error, Result};
use crate::incidents::{delay_variance, expected_delay};
use crate::network::CellId;
use crate::rng;
use crate::solvers::{solve, SolveTrace, SolverConfig};
use crate::uav::{
    assimilate, build_uav_problem, cooperation_effect, observe, AssimilationRecord, DelayBelief, HazardIndex,
    SensorSparsity, UavState, UavTarget,
};

use super::{priority, IncidentOutcome, Policy, RunResult, Scenario, StageOutcome, World};

const MAX_EPOCHS: usize = 100_000;

pub struct Simulation<'a> {
    sc: &'a Scenario,
    world: &'a World,
    policy: Policy,
    ervs: Vec<ErvState>,
    uavs: Vec<UavState>,
    depots: Vec<CellId>,
    /// Indices into `world.incidents`, oldest first.
    pending: Vec<usize>,
    next_incident: usize,
    time: Option<f64>,
    epoch: usize,
    stages: Vec<StageOutcome>,
    outcomes: Vec<IncidentOutcome>,
    assimilation: Vec<AssimilationRecord>,
    traces: Vec<SolveTrace>,
}

impl<'a> Simulation<'a> {
    pub fn new(sc: &'a Scenario, world: &'a World, policy: Policy) -> Result<Self> {
        if policy == Policy::Opt {
            return Err(Error::InvalidInput("the optimum is computed offline, not simulated".into()));
        }
        Ok(Self {
            sc,
            world,
            policy,
            ervs: world.ervs.clone(),
            uavs: world.uavs.clone(),
            depots: world.ervs.iter().map(|e| e.cell).collect(),
            pending: Vec::new(),
            next_incident: 0,
            time: None,
            epoch: 0,
            stages: Vec::new(),
            outcomes: Vec::new(),
            assimilation: Vec::new(),
            traces: Vec::new(),
        })
    }

    pub fn ervs(&self) -> &[ErvState] {
        &self.ervs
    }

    pub fn uavs(&self) -> &[UavState] {
        &self.uavs
    }

    pub fn stages(&self) -> &[StageOutcome] {
        &self.stages
    }

    fn next_time(&self) -> Option<f64> {
        let stage = match self.time {
            None => self.world.stage_times.first().copied(),
            Some(t) => self.world.stage_times.iter().copied().find(|&s| s > t),
        };
        let freed = if self.pending.is_empty() {
            None
        } else {
            let now = self.time.unwrap_or(f64::NEG_INFINITY);
            self.ervs.iter().map(|e| e.available_at).filter(|&a| a > now).min_by(f64::total_cmp)
        };
        match (stage, freed) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Advances to the next decision epoch. Returns `false` once every
    /// request has been served and no stage remains.
    pub fn step(&mut self) -> Result<bool> {
        let Some(t) = self.next_time() else {
            return Ok(false);
        };
        if self.epoch >= MAX_EPOCHS {
            return Err(Error::ModelDomain(format!("simulation did not finish within {MAX_EPOCHS} epochs")));
        }
        self.time = Some(t);
        let incidents = &self.world.incidents;
        while self.next_incident < incidents.len() && incidents[self.next_incident].report_time <= t {
            self.pending.push(self.next_incident);
            self.next_incident += 1;
        }
        let stage = self.world.stage_times.iter().rposition(|&s| s <= t).unwrap_or(0);
        let at_stage = self.world.stage_times.contains(&t);
        let free: Vec<u32> = self.ervs.iter().filter(|e| e.is_free(t)).map(|e| e.id).collect();

        let mut outcome = StageOutcome {
            epoch: self.epoch,
            time_h: t,
            stage,
            free_ervs: free.clone(),
            dispatched: Vec::new(),
            relocated: 0,
            erv_cost: 0.0,
            uav_utility: 0.0,
            delay: 0.0,
        };
        if !free.is_empty() && (at_stage || !self.pending.is_empty()) {
            match self.policy {
                Policy::Conventional => self.conventional(t, &mut outcome)?,
                _ => self.dcop(t, stage, &mut outcome)?,
            }
        }
        if at_stage || !outcome.dispatched.is_empty() || outcome.relocated > 0 {
            self.stages.push(outcome);
        }
        self.epoch += 1;
        Ok(true)
    }

    pub fn run(mut self) -> Result<RunResult> {
        while self.step()? {}
        if !self.pending.is_empty() {
            return Err(Error::ModelDomain(format!("{} requests were never served", self.pending.len())));
        }
        let mut r = RunResult::finish(self.policy, &self.sc.name, self.stages, self.outcomes);
        r.assimilation = self.assimilation;
        r.traces = self.traces;
        Ok(r)
    }

    fn served(&self, idx: usize, erv: u32, t: f64, travel: f64) -> Result<IncidentOutcome> {
        let inc = &self.world.incidents[idx];
        let waited = (t - inc.report_time).max(0.0);
        let response = waited + travel;
        Ok(IncidentOutcome {
            id: inc.id,
            cell: inc.location,
            severity: inc.severity,
            report_time_h: inc.report_time,
            erv,
            dispatch_time_h: t,
            travel_h: travel,
            effective_travel_h: travel,
            response_h: response,
            delay: expected_delay(&inc.params, response)?,
            delay_variance: delay_variance(&inc.params, response)?,
            uav: None,
            posterior: None,
        })
    }

    /// Nearest free ERV per request, oldest request first; each ERV drives
    /// back to its depot after clearing.
    fn conventional(&mut self, t: f64, outcome: &mut StageOutcome) -> Result<()> {
        let net = &self.world.net;
        while let Some(&idx) = self.pending.first() {
            let inc = &self.world.incidents[idx];
            let best = self
                .ervs
                .iter()
                .enumerate()
                .filter(|(_, e)| e.is_free(t))
                .map(|(i, e)| (i, net.times_from(e.cell)[inc.location.index()]))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            let Some((i, travel)) = best else { break };
            let back = net.travel_time(inc.location, self.depots[i])?;
            let o = self.served(idx, self.ervs[i].id, t, travel)?;
            let erv = &mut self.ervs[i];
            erv.available_at = t + travel + inc.params.clearance + back;
            erv.cell = self.depots[i];
            erv.log.push(crate::erv::LogEntry { stage: outcome.stage, cell: inc.location, kind: AssignmentKind::Dispatch });
            outcome.dispatched.push(o.id);
            outcome.delay += o.delay;
            self.outcomes.push(o);
            self.pending.remove(0);
        }
        Ok(())
    }

    fn solver_config(&self, stream: u64) -> SolverConfig {
        let base = rng::derive_seed(self.sc.seed, stream, self.sc.solver.seed);
        SolverConfig { seed: rng::derive_seed(base, stream, self.epoch as u64), ..self.sc.solver }
    }

    fn dcop(&mut self, t: f64, stage: usize, outcome: &mut StageOutcome) -> Result<()> {
        let world = self.world;
        let n_free = outcome.free_ervs.len();
        let window: Vec<usize> = self.pending.iter().copied().take(n_free).collect();
        let mut ctx = StageContext::new(&world.net, &world.forecast, t, stage);
        ctx.stage_time = world.stage_times[stage];
        ctx.stage_gap = self.sc.stage_gap;
        ctx.incidents = window.iter().map(|&i| world.incidents[i].clone()).collect();
        ctx.blocked = self.pending[window.len()..].iter().map(|&i| world.incidents[i].location).collect();

        let ep = build_erv_problem(&mut ctx, &self.ervs, &self.sc.erv)?;
        let trace = solve(&ep.problem, &self.solver_config(rng::ERV_SOLVER))?;
        if !trace.best_total.is_finite() {
            return Err(Error::ModelDomain(format!("ERV solve at {t:.3} h ended in a conflict")));
        }
        let moves = apply_assignment(&ctx, &mut self.ervs, &ep, &trace.best)?;
        outcome.erv_cost = ep.unary_total(&trace.best);
        self.traces.push(trace);

        let mut served = Vec::new();
        for m in &moves {
            match m.incident {
                Some(id) => {
                    let idx = self.pending.iter().copied().find(|&i| world.incidents[i].id == id).expect("pending");
                    served.push(self.served(idx, m.erv, t, m.travel_h)?);
                    self.pending.retain(|&i| i != idx);
                }
                None if m.kind == AssignmentKind::Relocate => outcome.relocated += 1,
                None => {}
            }
        }
        self.deploy_uavs(t, &mut served, outcome)?;
        for o in served {
            outcome.dispatched.push(o.id);
            outcome.delay += o.delay;
            self.outcomes.push(o);
        }
        Ok(())
    }

    /// Sends free UAVs to this epoch's dispatched requests, applies route
    /// support to the matching ERVs and assimilates the observations.
    fn deploy_uavs(&mut self, t: f64, served: &mut [IncidentOutcome], outcome: &mut StageOutcome) -> Result<()> {
        let world = self.world;
        let by_id = |id: u32| world.incidents.iter().find(|i| i.id == id).expect("known incident");
        let targets = served
            .iter()
            .map(|o| {
                let inc = by_id(o.id);
                Ok(UavTarget {
                    incident: inc.id,
                    cell: inc.location,
                    severity: inc.severity,
                    sparsity: SensorSparsity::new(inc.sparsity)?,
                    hazard: HazardIndex::new(inc.hazard)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let Some(up) = build_uav_problem(&targets, &self.uavs, &priority(self.sc), &world.net, &self.sc.uav, t)? else {
            return Ok(());
        };
        let trace = solve(&up.problem, &self.solver_config(rng::UAV_SOLVER))?;
        if !trace.best_total.is_finite() {
            return Err(Error::ModelDomain(format!("UAV solve at {t:.3} h ended in a conflict")));
        }
        for (agent, &v) in trace.best.choice.iter().enumerate() {
            let Some(target) = up.target(v) else { continue };
            outcome.uav_utility += up.utility[agent][v];
            let uav = &mut self.uavs[up.fleet_index[agent]];
            let o = served.iter_mut().find(|o| o.id == target.incident).expect("served target");
            let inc = by_id(target.incident);
            let flight = world.net.travel_time(uav.cell, target.cell)?;
            let cleared = t + o.travel_h + inc.params.clearance;
            uav.cell = target.cell;
            uav.available_at = (t + flight).max(cleared);
            o.uav = Some(uav.id);

            if self.sc.cooperation {
                o.effective_travel_h = cooperation_effect(o.travel_h, target.hazard, true);
                o.response_h = (t - inc.report_time).max(0.0) + o.effective_travel_h;
                o.delay = expected_delay(&inc.params, o.response_h)?;
                o.delay_variance = delay_variance(&inc.params, o.response_h)?;
            }
            if o.delay_variance > 0.0 {
                let prior = DelayBelief::new(o.delay, o.delay_variance)?;
                let mut obs_rng = rng::stream(self.sc.seed, rng::OBSERVATION, inc.id as u64);
                let obs = observe(prior, self.sc.uav.kappa, &mut obs_rng)?;
                let a = assimilate(prior, obs)?;
                o.posterior = Some(a.posterior);
                self.assimilation.push(AssimilationRecord::new(inc.id, prior, obs, &a));
            }
        }
        self.traces.push(trace);
        Ok(())
    }
}
