//! Generic DCOP substrate: agents, domains, unary and binary constraints.
//!
//! Costs are plain `f64`. A conflict is `+∞` in a minimisation problem and
//! `-∞` in a maximisation problem; IEEE infinities are absorbing under
//! addition, so a single fired conflict makes the whole objective infinite.
//! Solvers compare values through [`Sense::badness`], which maps both senses
//! onto minimisation.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::network::CellId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Minimize,
    Maximize,
}

impl Sense {
    /// Maps an objective value to "lower is better".
    pub fn badness(self, value: f64) -> f64 {
        match self {
            Sense::Minimize => value,
            Sense::Maximize => -value,
        }
    }

    /// Objective value of a conflict.
    pub fn conflict(self) -> f64 {
        match self {
            Sense::Minimize => f64::INFINITY,
            Sense::Maximize => f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// Cost per domain index of one agent.
    Unary { agent: usize, costs: Vec<f64> },
    /// Row-major `|D_a| × |D_b|` cost table.
    Binary { a: usize, b: usize, table: Vec<f64> },
}

/// Complete assignment, stored as one domain index per agent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    pub choice: Vec<usize>,
}

impl Assignment {
    pub fn new(choice: Vec<usize>) -> Self {
        Self { choice }
    }

    pub fn cells(&self, p: &DcopProblem) -> Vec<CellId> {
        self.choice.iter().enumerate().map(|(i, &v)| p.domains[i][v]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcopProblem {
    agents: Vec<AgentId>,
    domains: Vec<Vec<CellId>>,
    constraints: Vec<Constraint>,
    sense: Sense,
    /// Constraint indices touching each agent.
    incident: Vec<Vec<usize>>,
}

pub const DEFAULT_BRUTE_FORCE_CAP: u128 = 1_000_000;

impl DcopProblem {
    pub fn new(agents: Vec<AgentId>, domains: Vec<Vec<CellId>>, sense: Sense) -> Result<Self> {
        if agents.len() != domains.len() {
            return invalid(format!("{} agents but {} domains", agents.len(), domains.len()));
        }
        let mut sorted = agents.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return invalid("agent ids must be unique");
        }
        let incident = vec![Vec::new(); agents.len()];
        Ok(Self { agents, domains, constraints: Vec::new(), sense, incident })
    }

    pub fn add_unary(&mut self, agent: usize, costs: Vec<f64>) -> Result<()> {
        if agent >= self.agents.len() {
            return invalid(format!("unary constraint on undeclared agent index {agent}"));
        }
        if costs.len() != self.domains[agent].len() {
            return invalid(format!(
                "unary table has {} entries, domain has {}",
                costs.len(),
                self.domains[agent].len()
            ));
        }
        self.incident[agent].push(self.constraints.len());
        self.constraints.push(Constraint::Unary { agent, costs });
        Ok(())
    }

    pub fn add_binary(&mut self, a: usize, b: usize, table: Vec<f64>) -> Result<()> {
        let n = self.agents.len();
        if a >= n || b >= n {
            return invalid(format!("binary constraint on undeclared agent ({a}, {b})"));
        }
        if a == b {
            return invalid("binary constraint must reference two distinct agents");
        }
        if table.len() != self.domains[a].len() * self.domains[b].len() {
            return invalid("binary table size does not match the two domains");
        }
        let idx = self.constraints.len();
        self.incident[a].push(idx);
        self.incident[b].push(idx);
        self.constraints.push(Constraint::Binary { a, b, table });
        Ok(())
    }

    /// Adds a binary constraint whose table is filled from `f(cell_a, cell_b)`.
    pub fn add_binary_fn(
        &mut self,
        a: usize,
        b: usize,
        f: impl Fn(usize, usize) -> f64,
    ) -> Result<()> {
        let (da, db) = (self.domain_len(a), self.domain_len(b));
        let table = (0..da).flat_map(|i| (0..db).map(move |j| (i, j))).map(|(i, j)| f(i, j)).collect();
        self.add_binary(a, b, table)
    }

    fn domain_len(&self, agent: usize) -> usize {
        self.domains.get(agent).map_or(0, Vec::len)
    }

    pub fn agents(&self) -> &[AgentId] {
        &self.agents
    }

    pub fn domains(&self) -> &[Vec<CellId>] {
        &self.domains
    }

    pub fn domain(&self, agent: usize) -> &[CellId] {
        &self.domains[agent]
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    /// Agents sharing a constraint with `agent`, ascending.
    pub fn neighbors(&self, agent: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.incident[agent]
            .iter()
            .filter_map(|&c| match &self.constraints[c] {
                Constraint::Binary { a, b, .. } => Some(if *a == agent { *b } else { *a }),
                Constraint::Unary { .. } => None,
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Whether every pair of agents shares a binary constraint.
    pub fn is_complete_graph(&self) -> bool {
        (0..self.len()).all(|i| self.neighbors(i).len() + 1 == self.len())
    }

    /// Size of the joint assignment space, saturating.
    pub fn search_space(&self) -> u128 {
        self.domains.iter().fold(1u128, |acc, d| acc.saturating_mul(d.len() as u128))
    }

    pub fn check_assignment(&self, a: &Assignment) -> Result<()> {
        if a.choice.len() != self.len() {
            return invalid(format!("assignment covers {} of {} agents", a.choice.len(), self.len()));
        }
        for (i, &v) in a.choice.iter().enumerate() {
            if v >= self.domains[i].len() {
                return invalid(format!("agent {} assigned index {v} outside its domain", self.agents[i]));
            }
        }
        Ok(())
    }

    fn eval(&self, c: &Constraint, choice: &[usize]) -> f64 {
        match c {
            Constraint::Unary { agent, costs } => costs[choice[*agent]],
            Constraint::Binary { a, b, table } => table[choice[*a] * self.domains[*b].len() + choice[*b]],
        }
    }

    /// Sum of every constraint touching `agent` if it took `value` while the
    /// others keep their values in `choice`.
    pub fn local_cost(&self, agent: usize, value: usize, choice: &[usize]) -> f64 {
        self.incident[agent]
            .iter()
            .map(|&c| match &self.constraints[c] {
                Constraint::Unary { costs, .. } => costs[value],
                Constraint::Binary { a, b, table } => {
                    let nb = self.domains[*b].len();
                    if *a == agent {
                        table[value * nb + choice[*b]]
                    } else {
                        table[choice[*a] * nb + value]
                    }
                }
            })
            .sum()
    }

    /// Sum over all constraints. Each agent pair contributes once.
    pub fn total_cost(&self, a: &Assignment) -> Result<f64> {
        self.check_assignment(a)?;
        Ok(self.total_cost_unchecked(&a.choice))
    }

    pub(crate) fn total_cost_unchecked(&self, choice: &[usize]) -> f64 {
        self.constraints.iter().map(|c| self.eval(c, choice)).sum()
    }
}

/// Exhaustive optimum; ties resolve to the lexicographically first assignment.
pub fn brute_force_optimum(p: &DcopProblem, cap: u128) -> Result<(Assignment, f64)> {
    if let Some(i) = p.domains.iter().position(Vec::is_empty) {
        return invalid(format!("agent {} has an empty domain", p.agents[i]));
    }
    let space = p.search_space();
    if space > cap {
        return Err(Error::CapExceeded { space, cap });
    }
    let n = p.len();
    let mut choice = vec![0usize; n];
    let mut best = choice.clone();
    let mut best_cost = p.total_cost_unchecked(&choice);
    'outer: loop {
        // odometer, last agent fastest
        let mut i = n;
        loop {
            if i == 0 {
                break 'outer;
            }
            i -= 1;
            choice[i] += 1;
            if choice[i] < p.domains[i].len() {
                break;
            }
            choice[i] = 0;
        }
        let cost = p.total_cost_unchecked(&choice);
        if p.sense.badness(cost) < p.sense.badness(best_cost) {
            best_cost = cost;
            best.clone_from(&choice);
        }
    }
    Ok((Assignment::new(best), best_cost))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cells(ids: &[u32]) -> Vec<CellId> {
        ids.iter().map(|&i| CellId(i)).collect()
    }

    fn conflict_pair(sense: Sense) -> DcopProblem {
        let mut p = DcopProblem::new(vec![AgentId(0), AgentId(1)], vec![cells(&[0, 1]), cells(&[0, 1])], sense)
            .unwrap();
        let (d0, d1) = (p.domain(0).to_vec(), p.domain(1).to_vec());
        p.add_binary_fn(0, 1, |i, j| if d0[i] == d1[j] { sense.conflict() } else { 0.0 }).unwrap();
        p
    }

    #[test]
    fn colocated_agents_are_infinite() {
        let p = conflict_pair(Sense::Minimize);
        assert_eq!(p.total_cost(&Assignment::new(vec![1, 1])).unwrap(), f64::INFINITY);
        let p = conflict_pair(Sense::Maximize);
        assert_eq!(p.total_cost(&Assignment::new(vec![0, 0])).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn single_agent_without_constraints_costs_nothing() {
        let p = DcopProblem::new(vec![AgentId(3)], vec![cells(&[4, 5])], Sense::Minimize).unwrap();
        assert_eq!(p.total_cost(&Assignment::new(vec![1])).unwrap(), 0.0);
    }

    #[test]
    fn incomplete_assignment_rejected() {
        let p = conflict_pair(Sense::Minimize);
        assert!(p.total_cost(&Assignment::new(vec![0])).is_err());
        assert!(p.total_cost(&Assignment::new(vec![0, 2])).is_err());
    }

    #[test]
    fn tie_returns_lexicographically_first() {
        let p = conflict_pair(Sense::Minimize);
        let (a, cost) = brute_force_optimum(&p, DEFAULT_BRUTE_FORCE_CAP).unwrap();
        assert_eq!(a.choice, vec![0, 1]);
        assert_eq!(cost, 0.0);
    }

    #[test]
    fn unary_lifted_single_agent() {
        let mut p = DcopProblem::new(vec![AgentId(0)], vec![cells(&[1, 2])], Sense::Minimize).unwrap();
        p.add_unary(0, vec![5.0, 3.0]).unwrap();
        let (a, cost) = brute_force_optimum(&p, 10).unwrap();
        assert_eq!(a.cells(&p), cells(&[2]));
        assert_eq!(cost, 3.0);
    }

    #[test]
    fn cap_and_empty_domain() {
        let p = conflict_pair(Sense::Minimize);
        assert!(matches!(brute_force_optimum(&p, 3), Err(Error::CapExceeded { space: 4, cap: 3 })));
        let p = DcopProblem::new(vec![AgentId(0)], vec![vec![]], Sense::Minimize).unwrap();
        assert!(brute_force_optimum(&p, 10).is_err());
    }

    #[test]
    fn malformed_constraints_rejected() {
        let mut p = conflict_pair(Sense::Minimize);
        assert!(p.add_binary(0, 0, vec![0.0; 4]).is_err());
        assert!(p.add_binary(0, 2, vec![0.0; 4]).is_err());
        assert!(p.add_binary(0, 1, vec![0.0; 3]).is_err());
        assert!(p.add_unary(1, vec![0.0]).is_err());
        assert!(DcopProblem::new(vec![AgentId(0), AgentId(0)], vec![vec![], vec![]], Sense::Minimize).is_err());
    }

    #[test]
    fn neighborhood_and_completeness() {
        let p = conflict_pair(Sense::Minimize);
        assert_eq!(p.neighbors(0), vec![1]);
        assert!(p.is_complete_graph());
        let q = DcopProblem::new(
            vec![AgentId(0), AgentId(1), AgentId(2)],
            vec![cells(&[0]), cells(&[1]), cells(&[2])],
            Sense::Minimize,
        )
        .unwrap();
        assert!(!q.is_complete_graph());
    }

    #[test]
    fn local_cost_sums_touching_constraints() {
        let mut p = conflict_pair(Sense::Minimize);
        p.add_unary(0, vec![2.0, 7.0]).unwrap();
        assert_eq!(p.local_cost(0, 1, &[0, 0]), 7.0);
        assert_eq!(p.local_cost(0, 0, &[0, 0]), f64::INFINITY);
        assert_eq!(p.local_cost(1, 1, &[0, 0]), 0.0);
    }
}
