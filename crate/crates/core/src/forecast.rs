//! Near-future incident probabilities.
//!
//! The expected probability at cell `k` in stage `u` is the primary
//! probability there plus secondary contributions induced by primary
//! incidents one and two stages earlier:
//!
//! ```text
//! E[k, u] = P[k, u] + Σ_j δ1(j → k)·P[j, u-1] + Σ_j δ2(j → k)·P[j, u-2]
//! ```
//!
//! clamped to `[0, 1]`. Stages outside the field contribute zero.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::network::{CellId, GridNetwork};
use crate::rng;

/// Primary (independent) incident probabilities, `pr_p[stage][cell]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimaryProbField {
    cells: usize,
    pr_p: Vec<Vec<f64>>,
}

impl PrimaryProbField {
    pub fn new(cells: usize, pr_p: Vec<Vec<f64>>) -> Result<Self> {
        for (u, row) in pr_p.iter().enumerate() {
            if row.len() != cells {
                return invalid(format!("stage {u} has {} cells, expected {cells}", row.len()));
            }
            if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return invalid(format!("stage {u} holds probability {p} outside [0, 1]"));
            }
        }
        Ok(Self { cells, pr_p })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn stages(&self) -> usize {
        self.pr_p.len()
    }

    /// Primary probability; zero for stages outside the field.
    pub fn get(&self, cell: CellId, stage: i64) -> f64 {
        if stage < 0 {
            return 0.0;
        }
        self.pr_p
            .get(stage as usize)
            .and_then(|row| row.get(cell.index()))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn stage(&self, stage: usize) -> Option<&[f64]> {
        self.pr_p.get(stage).map(Vec::as_slice)
    }
}

/// One non-zero density ratio `δ` linking a primary at `j` to a secondary at `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaEntry {
    pub j: u32,
    pub k: u32,
    pub lag: u8,
    pub value: f64,
}

/// Sparse secondary-incident kernel, stored by target cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DependencyKernel {
    cells: usize,
    /// `by_target[lag - 1][k]` lists `(j, δ)`.
    by_target: [Vec<Vec<(u32, f64)>>; 2],
}

impl DependencyKernel {
    pub fn zero(cells: usize) -> Self {
        Self { cells, by_target: [vec![Vec::new(); cells], vec![Vec::new(); cells]] }
    }

    pub fn from_entries(cells: usize, entries: &[DeltaEntry]) -> Result<Self> {
        let mut kernel = Self::zero(cells);
        for e in entries {
            kernel.add(*e)?;
        }
        Ok(kernel)
    }

    /// Couples each cell to its 4-neighbourhood at both lags.
    pub fn four_neighborhood(net: &GridNetwork, lag1: f64, lag2: f64) -> Result<Self> {
        let mut kernel = Self::zero(net.cell_count());
        for k in net.cells() {
            for (j, _) in net.neighbors(k) {
                for (lag, value) in [(1, lag1), (2, lag2)] {
                    if value != 0.0 {
                        kernel.add(DeltaEntry { j: j.0, k: k.0, lag, value })?;
                    }
                }
            }
        }
        Ok(kernel)
    }

    pub fn add(&mut self, e: DeltaEntry) -> Result<()> {
        if e.j as usize >= self.cells || e.k as usize >= self.cells {
            return invalid(format!("kernel entry {}->{} outside {} cells", e.j, e.k, self.cells));
        }
        if !(1..=2).contains(&e.lag) {
            return invalid(format!("kernel lag must be 1 or 2, got {}", e.lag));
        }
        if !(e.value >= 0.0) || !e.value.is_finite() {
            return invalid(format!("kernel ratio must be non-negative, got {}", e.value));
        }
        let slot = &mut self.by_target[e.lag as usize - 1][e.k as usize];
        // kept sorted by source so summation order is insertion-independent
        match slot.binary_search_by_key(&e.j, |(j, _)| *j) {
            Ok(i) => slot[i].1 = e.value,
            Err(i) => slot.insert(i, (e.j, e.value)),
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn sources(&self, k: CellId, lag: u8) -> &[(u32, f64)] {
        &self.by_target[lag as usize - 1][k.index()]
    }

    pub fn entries(&self) -> Vec<DeltaEntry> {
        let mut out = Vec::new();
        for lag in 1..=2u8 {
            for (k, list) in self.by_target[lag as usize - 1].iter().enumerate() {
                for &(j, value) in list {
                    out.push(DeltaEntry { j, k: k as u32, lag, value });
                }
            }
        }
        out.sort_by_key(|e| (e.j, e.k, e.lag));
        out
    }
}

/// Expected incident probability at `cell` in `stage`, including secondary
/// incidents induced by the two previous stages.
pub fn expected_probability(
    field: &PrimaryProbField,
    kernel: &DependencyKernel,
    cell: CellId,
    stage: usize,
) -> Result<f64> {
    if field.cells != kernel.cells {
        return invalid(format!("field has {} cells but kernel has {}", field.cells, kernel.cells));
    }
    if cell.index() >= field.cells {
        return invalid(format!("cell {cell} outside a field of {} cells", field.cells));
    }
    let u = stage as i64;
    let mut p = field.get(cell, u);
    for lag in 1..=2u8 {
        for &(j, delta) in kernel.sources(cell, lag) {
            p += delta * field.get(CellId(j), u - lag as i64);
        }
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Parameters for synthetic field generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldConfig {
    /// Primary probabilities are uniform on `[lo, hi]` per cell and stage.
    pub range: (f64, f64),
    /// When set, each stage is rescaled so its total does not exceed this.
    pub normalize_budget: Option<f64>,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self { range: (0.0, 0.15), normalize_budget: None }
    }
}

pub fn generate_field(
    net: &GridNetwork,
    stages: usize,
    seed: u64,
    config: &FieldConfig,
) -> Result<PrimaryProbField> {
    if stages < 3 {
        return invalid(format!("a field needs at least 3 stages, got {stages}"));
    }
    let (lo, hi) = config.range;
    if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
        return invalid(format!("probability range [{lo}, {hi}] is not inside [0, 1]"));
    }
    if let Some(b) = config.normalize_budget {
        if !(b >= 0.0) {
            return invalid(format!("normalization budget must be non-negative, got {b}"));
        }
    }
    let mut rng = rng::stream(seed, rng::FORECAST, 0);
    let cells = net.cell_count();
    let pr_p = (0..stages)
        .map(|_| {
            let mut row: Vec<f64> = (0..cells)
                .map(|_| if hi > lo { rng.random_range(lo..=hi) } else { lo })
                .collect();
            if let Some(budget) = config.normalize_budget {
                let total: f64 = row.iter().sum();
                if total > budget && total > 0.0 {
                    let scale = budget / total;
                    row.iter_mut().for_each(|p| *p *= scale);
                }
            }
            row
        })
        .collect();
    PrimaryProbField::new(cells, pr_p)
}

/// Field plus kernel; the unit the ERV cost functions query.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub field: PrimaryProbField,
    pub kernel: DependencyKernel,
}

impl Forecast {
    pub fn new(field: PrimaryProbField, kernel: DependencyKernel) -> Result<Self> {
        if field.cells != kernel.cells {
            return invalid(format!("field has {} cells but kernel has {}", field.cells, kernel.cells));
        }
        Ok(Self { field, kernel })
    }

    pub fn cells(&self) -> usize {
        self.field.cells
    }

    pub fn expected(&self, cell: CellId, stage: usize) -> f64 {
        expected_probability(&self.field, &self.kernel, cell, stage).unwrap_or(0.0)
    }

    /// Expected probabilities of every cell in `stage`.
    pub fn expected_stage(&self, stage: usize) -> Vec<f64> {
        (0..self.field.cells).map(|k| self.expected(CellId(k as u32), stage)).collect()
    }

    pub fn to_json(&self) -> ForecastJson {
        ForecastJson {
            cells: self.field.cells,
            stages: self.field.stages(),
            pr_p: self.field.pr_p.clone(),
            delta: self.kernel.entries(),
        }
    }

    pub fn from_json(json: &ForecastJson) -> Result<Self> {
        if json.pr_p.len() != json.stages {
            return invalid(format!("declared {} stages but pr_p has {}", json.stages, json.pr_p.len()));
        }
        let field = PrimaryProbField::new(json.cells, json.pr_p.clone())?;
        let kernel = DependencyKernel::from_entries(json.cells, &json.delta)?;
        Self::new(field, kernel)
    }
}

/// File form: `{cells, stages, pr_p: [[...]], delta: [{j, k, lag, value}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastJson {
    pub cells: usize,
    pub stages: usize,
    pub pr_p: Vec<Vec<f64>>,
    #[serde(default)]
    pub delta: Vec<DeltaEntry>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::TimeRange;

    fn grid() -> GridNetwork {
        GridNetwork::build(4, 4, TimeRange::default(), 1).unwrap()
    }

    #[test]
    fn zero_kernel_returns_primary() {
        let net = grid();
        let field = generate_field(&net, 4, 3, &FieldConfig::default()).unwrap();
        let kernel = DependencyKernel::zero(16);
        for k in net.cells() {
            assert_eq!(expected_probability(&field, &kernel, k, 2).unwrap(), field.get(k, 2));
        }
    }

    #[test]
    fn single_lag_one_neighbor() {
        let mut pr_p = vec![vec![0.0; 3]; 3];
        pr_p[1][0] = 0.1;
        pr_p[0][2] = 0.2;
        let field = PrimaryProbField::new(3, pr_p).unwrap();
        let kernel =
            DependencyKernel::from_entries(3, &[DeltaEntry { j: 2, k: 0, lag: 1, value: 0.5 }]).unwrap();
        let p = expected_probability(&field, &kernel, CellId(0), 1).unwrap();
        assert!((p - 0.2).abs() < 1e-15);
    }

    #[test]
    fn missing_history_is_zero() {
        let field = PrimaryProbField::new(2, vec![vec![0.3, 0.4]; 3]).unwrap();
        let kernel =
            DependencyKernel::from_entries(2, &[DeltaEntry { j: 1, k: 0, lag: 2, value: 1.0 }]).unwrap();
        assert_eq!(expected_probability(&field, &kernel, CellId(0), 0).unwrap(), 0.3);
        assert_eq!(expected_probability(&field, &kernel, CellId(0), 1).unwrap(), 0.3);
        assert!((expected_probability(&field, &kernel, CellId(0), 2).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn super_unit_sums_clamp() {
        let field = PrimaryProbField::new(2, vec![vec![0.9, 0.9]; 3]).unwrap();
        let kernel =
            DependencyKernel::from_entries(2, &[DeltaEntry { j: 1, k: 0, lag: 1, value: 1.0 }]).unwrap();
        assert_eq!(expected_probability(&field, &kernel, CellId(0), 2).unwrap(), 1.0);
    }

    #[test]
    fn generated_field_is_reproducible_and_in_range() {
        let net = grid();
        let cfg = FieldConfig::default();
        let a = generate_field(&net, 5, 9, &cfg).unwrap();
        let b = generate_field(&net, 5, 9, &cfg).unwrap();
        assert_eq!(a, b);
        for u in 0..5 {
            assert!(a.stage(u).unwrap().iter().all(|p| (0.0..=0.15).contains(p)));
        }
    }

    #[test]
    fn zero_range_gives_zero_field() {
        let net = grid();
        let cfg = FieldConfig { range: (0.0, 0.0), ..FieldConfig::default() };
        let f = generate_field(&net, 3, 9, &cfg).unwrap();
        assert!((0..3).all(|u| f.stage(u).unwrap().iter().all(|p| *p == 0.0)));
    }

    #[test]
    fn normalization_caps_stage_total() {
        let net = grid();
        let cfg = FieldConfig { range: (0.0, 0.5), normalize_budget: Some(1.0) };
        let f = generate_field(&net, 6, 2, &cfg).unwrap();
        for u in 0..6 {
            let total: f64 = f.stage(u).unwrap().iter().sum();
            assert!(total <= 1.0 + 1e-12, "stage {u} total {total}");
        }
    }

    #[test]
    fn rejects_short_fields_and_bad_inputs() {
        let net = grid();
        assert!(generate_field(&net, 2, 0, &FieldConfig::default()).is_err());
        let bad = FieldConfig { range: (0.2, 0.1), ..FieldConfig::default() };
        assert!(generate_field(&net, 3, 0, &bad).is_err());
        assert!(PrimaryProbField::new(2, vec![vec![0.5, 1.5]]).is_err());
        let mut k = DependencyKernel::zero(2);
        assert!(k.add(DeltaEntry { j: 0, k: 1, lag: 3, value: 0.1 }).is_err());
        assert!(k.add(DeltaEntry { j: 0, k: 1, lag: 1, value: -0.1 }).is_err());
        assert!(k.add(DeltaEntry { j: 0, k: 5, lag: 1, value: 0.1 }).is_err());
    }

    #[test]
    fn default_kernel_couples_four_neighbours() {
        let net = grid();
        let kernel = DependencyKernel::four_neighborhood(&net, 0.3, 0.1).unwrap();
        assert_eq!(kernel.sources(CellId(0), 1).len(), 2);
        assert_eq!(kernel.sources(CellId(5), 1).len(), 4);
        assert!(kernel.sources(CellId(5), 2).iter().all(|(_, d)| *d == 0.1));
        // 24 directed neighbour pairs on a 4x4 grid (48 arcs) at two lags
        assert_eq!(kernel.entries().len(), 2 * 48);
    }

    #[test]
    fn json_round_trip() {
        let net = grid();
        let field = generate_field(&net, 3, 1, &FieldConfig::default()).unwrap();
        let kernel = DependencyKernel::four_neighborhood(&net, 0.3, 0.1).unwrap();
        let fc = Forecast::new(field, kernel).unwrap();
        let text = serde_json::to_string(&fc.to_json()).unwrap();
        let back = Forecast::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back.expected_stage(2), fc.expected_stage(2));
    }
}
