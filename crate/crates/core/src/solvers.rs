//! Synchronous MGM and DSA local search.
//!
//! Each round is barrier-synchronised: every agent first learns its
//! neighbours' values from the previous round, then computes its current
//! local cost, its best unilateral replacement and the resulting gain.
//! MGM lets an agent move only when its gain is positive and strictly the
//! largest among its neighbours (ties go to the lower agent index). DSA-B
//! lets an agent move when its gain is positive and a uniform draw falls
//! below the activation threshold.
//!
//! The trace records the best total cost seen so far after every round, so
//! both algorithms report anytime results.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dcop::{Assignment, Constraint, DcopProblem};
use crate::error::{invalid, Result};
use crate::rng::{self, SimRng};
use crate::stats::Summary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Algorithm {
    Mgm,
    Dsa,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub iterations: usize,
    pub dsa_threshold: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { algorithm: Algorithm::Dsa, iterations: 45, dsa_threshold: 0.9, seed: 0 }
    }
}

impl SolverConfig {
    pub fn mgm(iterations: usize, seed: u64) -> Self {
        Self { algorithm: Algorithm::Mgm, iterations, dsa_threshold: 0.0, seed }
    }

    pub fn dsa(threshold: f64, iterations: usize, seed: u64) -> Self {
        Self { algorithm: Algorithm::Dsa, iterations, dsa_threshold: threshold, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return invalid("solver needs at least one iteration");
        }
        if !(0.0..=1.0).contains(&self.dsa_threshold) {
            return invalid(format!("DSA threshold must lie in [0, 1], got {}", self.dsa_threshold));
        }
        Ok(())
    }

    /// Name written into outputs; DSA is always the B variant.
    pub fn variant(&self) -> &'static str {
        match self.algorithm {
            Algorithm::Mgm => "MGM",
            Algorithm::Dsa => "DSA-B",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub variant: String,
    pub initial: Assignment,
    pub initial_cost: f64,
    /// Best total cost known after each round.
    pub best_cost: Vec<f64>,
    /// Total cost of the assignment held after each round.
    pub current_cost: Vec<f64>,
    pub moves: Vec<usize>,
    pub messages_per_round: Vec<u64>,
    pub messages: u64,
    /// Assignment held when the last round ended.
    pub final_assignment: Assignment,
    /// Best assignment seen during the search (anytime result).
    pub best: Assignment,
    pub best_total: f64,
}

impl SolveTrace {
    pub fn iterations(&self) -> usize {
        self.best_cost.len()
    }

    /// CSV with columns `iteration,best_cost,moves_this_round,messages`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "best_cost", "moves_this_round", "messages"])
            .map_err(csv_err)?;
        for i in 0..self.iterations() {
            w.write_record([
                (i + 1).to_string(),
                self.best_cost[i].to_string(),
                self.moves[i].to_string(),
                self.messages_per_round[i].to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> crate::Error {
    crate::Error::Io(std::io::Error::other(e))
}

/// Difference in badness between the current value and a candidate; a
/// conflict escaped is an infinite gain, two equal values a zero gain.
fn gain(current: f64, candidate: f64) -> f64 {
    if current == candidate {
        0.0
    } else {
        current - candidate
    }
}

/// Random start: each agent in turn draws uniformly among the values that
/// do not conflict with agents already placed, or from its whole domain if
/// every value conflicts.
fn initial_assignment(p: &DcopProblem, rng: &mut SimRng) -> Vec<usize> {
    let n = p.len();
    let mut choice = vec![0usize; n];
    for i in 0..n {
        let ok: Vec<usize> = (0..p.domain(i).len())
            .filter(|&v| {
                p.constraints().iter().all(|c| match c {
                    Constraint::Binary { a, b, table } => {
                        let nb = p.domain(*b).len();
                        if *a == i && *b < i {
                            table[v * nb + choice[*b]].is_finite()
                        } else if *b == i && *a < i {
                            table[choice[*a] * nb + v].is_finite()
                        } else {
                            true
                        }
                    }
                    Constraint::Unary { .. } => true,
                })
            })
            .collect();
        choice[i] = if ok.is_empty() {
            rng.random_range(0..p.domain(i).len())
        } else {
            ok[rng.random_range(0..ok.len())]
        };
    }
    choice
}

/// Best unilateral value for `agent` against the others' values; keeps the
/// current value on ties, otherwise prefers the lowest index.
fn best_response(p: &DcopProblem, agent: usize, choice: &[usize]) -> (usize, f64) {
    let sense = p.sense();
    let current = sense.badness(p.local_cost(agent, choice[agent], choice));
    let mut best = (choice[agent], current);
    for v in 0..p.domain(agent).len() {
        let c = sense.badness(p.local_cost(agent, v, choice));
        if c < best.1 {
            best = (v, c);
        }
    }
    (best.0, gain(current, best.1))
}

pub fn solve(p: &DcopProblem, cfg: &SolverConfig) -> Result<SolveTrace> {
    solve_from(p, cfg, None)
}

/// Like [`solve`], but starts from `start` instead of a random draw.
pub fn solve_from(p: &DcopProblem, cfg: &SolverConfig, start: Option<&Assignment>) -> Result<SolveTrace> {
    cfg.validate()?;
    if let Some(i) = p.domains().iter().position(Vec::is_empty) {
        return invalid(format!("agent {} has an empty domain", p.agents()[i]));
    }
    let sense = p.sense();
    let n = p.len();
    let neighbors: Vec<Vec<usize>> = (0..n).map(|i| p.neighbors(i)).collect();
    let value_messages: u64 = neighbors.iter().map(|nb| nb.len() as u64).sum();

    let mut rng = rng::rng_from(cfg.seed);
    let mut choice = match start {
        Some(a) => {
            p.check_assignment(a)?;
            a.choice.clone()
        }
        None => initial_assignment(p, &mut rng),
    };
    let initial = Assignment::new(choice.clone());
    let initial_cost = p.total_cost_unchecked(&choice);
    let mut best = choice.clone();
    let mut best_total = initial_cost;

    let mut trace = SolveTrace {
        variant: cfg.variant().to_string(),
        initial,
        initial_cost,
        best_cost: Vec::with_capacity(cfg.iterations),
        current_cost: Vec::with_capacity(cfg.iterations),
        moves: Vec::with_capacity(cfg.iterations),
        messages_per_round: Vec::with_capacity(cfg.iterations),
        messages: 0,
        final_assignment: Assignment::new(Vec::new()),
        best: Assignment::new(Vec::new()),
        best_total: 0.0,
    };

    for _round in 0..cfg.iterations {
        // `choice` is the value set every agent announced at the end of the
        // previous round; responses are computed against it only.
        let responses: Vec<(usize, f64)> = (0..n).map(|i| best_response(p, i, &choice)).collect();
        let mut messages = value_messages;
        let movers: Vec<usize> = match cfg.algorithm {
            Algorithm::Mgm => {
                messages += value_messages;
                (0..n)
                    .filter(|&i| {
                        let g = responses[i].1;
                        g > 0.0
                            && neighbors[i].iter().all(|&j| {
                                let h = responses[j].1;
                                g > h || (g == h && i < j)
                            })
                    })
                    .collect()
            }
            Algorithm::Dsa => (0..n)
                .filter(|&i| {
                    let draw: f64 = rng.random();
                    responses[i].1 > 0.0 && draw < cfg.dsa_threshold
                })
                .collect(),
        };
        for &i in &movers {
            choice[i] = responses[i].0;
        }
        let total = p.total_cost_unchecked(&choice);
        if sense.badness(total) < sense.badness(best_total) {
            best_total = total;
            best.clone_from(&choice);
        }
        trace.best_cost.push(best_total);
        trace.current_cost.push(total);
        trace.moves.push(movers.len());
        trace.messages_per_round.push(messages);
        trace.messages += messages;
    }
    trace.final_assignment = Assignment::new(choice);
    trace.best = Assignment::new(best);
    trace.best_total = best_total;
    Ok(trace)
}

/// Whether some agent could strictly improve by changing only its own value.
pub fn improving_move(p: &DcopProblem, a: &Assignment) -> Option<(usize, usize)> {
    (0..p.len()).find_map(|i| {
        let (v, g) = best_response(p, i, &a.choice);
        (g > 0.0).then_some((i, v))
    })
}

/// Mean and standard error of final costs per configuration over paired
/// trials: trial `k` builds its problem from one seed and every
/// configuration solves that same problem with the same solver seed.
pub fn monte_carlo_compare<G>(
    generate: G,
    cfgs: &[SolverConfig],
    trials: usize,
    seed: u64,
) -> Result<Vec<Summary>>
where
    G: Fn(u64) -> Result<DcopProblem> + Sync,
{
    if trials == 0 {
        return invalid("monte carlo comparison needs at least one trial");
    }
    let per_trial: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let problem = generate(rng::derive_seed(seed, rng::TRIAL, k as u64))?;
            cfgs.iter()
                .map(|cfg| {
                    let cfg = SolverConfig { seed: rng::derive_seed(cfg.seed, rng::TRIAL, k as u64), ..*cfg };
                    Ok(solve(&problem, &cfg)?.best_total)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok((0..cfgs.len())
        .map(|c| Summary::of(&per_trial.iter().map(|row| row[c]).collect::<Vec<_>>()))
        .collect())
}
