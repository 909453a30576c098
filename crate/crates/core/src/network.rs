//! Grid road network.
//!
//! Cells are intersections on a `rows × cols` lattice and edges are the road
//! segments between 4-neighbours. Edge weights are travel times in hours.
//! Travel-time queries are shortest-path times (Dijkstra), cached per source
//! cell because the solvers query the same sources over and over.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng;

/// Index of a grid cell, `row * cols + col`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellId(pub u32);

impl CellId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Closed interval of edge travel times, in hours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeRange {
    pub lo: f64,
    pub hi: f64,
}

impl TimeRange {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lo && t <= self.hi
    }
}

impl Default for TimeRange {
    fn default() -> Self {
        Self::new(0.1, 1.5)
    }
}

#[derive(Debug, Clone)]
pub struct GridNetwork {
    rows: usize,
    cols: usize,
    /// `(r, c) to (r, c + 1)`, indexed `r * (cols - 1) + c`.
    horizontal: Vec<f64>,
    /// `(r, c) to (r + 1, c)`, indexed `r * cols + c`.
    vertical: Vec<f64>,
    /// All-pairs times, row-major, filled on first use.
    apsp: OnceLock<Vec<f64>>,
}

/// Serialized form: `{rows, cols, edges: [[cellA, cellB, time_h]]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkDump {
    pub rows: usize,
    pub cols: usize,
    pub edges: Vec<(u32, u32, f64)>,
}

impl GridNetwork {
    /// Builds a grid whose edge times are drawn uniformly from `range`.
    pub fn build(rows: usize, cols: usize, range: TimeRange, seed: u64) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return invalid(format!("grid must be at least 2x2, got {rows}x{cols}"));
        }
        if !(range.lo > 0.0) || !(range.hi >= range.lo) || !range.hi.is_finite() {
            return invalid(format!(
                "edge time range must satisfy 0 < lo <= hi, got [{}, {}]",
                range.lo, range.hi
            ));
        }
        let mut rng = rng::stream(seed, rng::NETWORK, 0);
        let mut draw = || {
            if range.hi == range.lo {
                range.lo
            } else {
                rng.random_range(range.lo..=range.hi)
            }
        };
        let horizontal = (0..rows * (cols - 1)).map(|_| draw()).collect();
        let vertical = (0..(rows - 1) * cols).map(|_| draw()).collect();
        Ok(Self::from_parts(rows, cols, horizontal, vertical))
    }

    fn from_parts(rows: usize, cols: usize, horizontal: Vec<f64>, vertical: Vec<f64>) -> Self {
        Self { rows, cols, horizontal, vertical, apsp: OnceLock::new() }
    }

    /// Rebuilds a network from an explicit edge list. Every lattice edge
    /// must appear exactly once with a positive finite time.
    pub fn from_dump(dump: &NetworkDump) -> Result<Self> {
        let (rows, cols) = (dump.rows, dump.cols);
        if rows < 2 || cols < 2 {
            return invalid(format!("grid must be at least 2x2, got {rows}x{cols}"));
        }
        let mut horizontal = vec![f64::NAN; rows * (cols - 1)];
        let mut vertical = vec![f64::NAN; (rows - 1) * cols];
        for &(a, b, t) in &dump.edges {
            if !(t > 0.0) || !t.is_finite() {
                return invalid(format!("edge {a}-{b} has non-positive time {t}"));
            }
            let (a, b) = (a.min(b) as usize, a.max(b) as usize);
            if b >= rows * cols {
                return invalid(format!("edge {a}-{b} references a cell outside the grid"));
            }
            let slot = if b == a + 1 && a % cols != cols - 1 {
                &mut horizontal[(a / cols) * (cols - 1) + a % cols]
            } else if b == a + cols {
                &mut vertical[a]
            } else {
                return invalid(format!("cells {a} and {b} are not adjacent"));
            };
            if !slot.is_nan() {
                return invalid(format!("edge {a}-{b} listed twice"));
            }
            *slot = t;
        }
        if horizontal.iter().chain(&vertical).any(|t| t.is_nan()) {
            return invalid("edge list does not cover every lattice edge");
        }
        Ok(Self::from_parts(rows, cols, horizontal, vertical))
    }

    pub fn dump(&self) -> NetworkDump {
        NetworkDump {
            rows: self.rows,
            cols: self.cols,
            edges: self.edges().map(|(a, b, t)| (a.0, b.0, t)).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn edge_count(&self) -> usize {
        self.horizontal.len() + self.vertical.len()
    }

    pub fn cells(&self) -> impl Iterator<Item = CellId> {
        (0..self.cell_count() as u32).map(CellId)
    }

    pub fn cell(&self, row: usize, col: usize) -> Result<CellId> {
        if row >= self.rows || col >= self.cols {
            return invalid(format!("({row}, {col}) is outside the {}x{} grid", self.rows, self.cols));
        }
        Ok(CellId((row * self.cols + col) as u32))
    }

    pub fn row_col(&self, cell: CellId) -> (usize, usize) {
        (cell.index() / self.cols, cell.index() % self.cols)
    }

    pub fn check(&self, cell: CellId) -> Result<()> {
        if cell.index() >= self.cell_count() {
            return invalid(format!("cell {cell} is outside a grid of {} cells", self.cell_count()));
        }
        Ok(())
    }

    /// All undirected edges as `(a, b, time)` with `a < b`, ordered by `(a, b)`.
    pub fn edges(&self) -> impl Iterator<Item = (CellId, CellId, f64)> + '_ {
        self.cells().flat_map(move |a| {
            let (r, c) = self.row_col(a);
            let right = (c + 1 < self.cols)
                .then(|| (a, CellId(a.0 + 1), self.horizontal[r * (self.cols - 1) + c]));
            let down = (r + 1 < self.rows)
                .then(|| (a, CellId(a.0 + self.cols as u32), self.vertical[a.index()]));
            right.into_iter().chain(down)
        })
    }

    /// Weight of the edge between two adjacent cells.
    pub fn edge_time(&self, a: CellId, b: CellId) -> Option<f64> {
        let (a, b) = (a.min(b), a.max(b));
        if b.index() >= self.cell_count() {
            return None;
        }
        let (r, c) = self.row_col(a);
        if b.index() == a.index() + 1 && c + 1 < self.cols {
            Some(self.horizontal[r * (self.cols - 1) + c])
        } else if b.index() == a.index() + self.cols {
            Some(self.vertical[a.index()])
        } else {
            None
        }
    }

    /// Copy of this network with one edge re-weighted.
    pub fn with_edge_time(&self, a: CellId, b: CellId, time: f64) -> Result<Self> {
        if !(time > 0.0) || !time.is_finite() {
            return invalid(format!("edge time must be positive, got {time}"));
        }
        let (lo, hi) = (a.min(b), a.max(b));
        let (r, c) = self.row_col(lo);
        let mut horizontal = self.horizontal.clone();
        let mut vertical = self.vertical.clone();
        if hi.index() == lo.index() + 1 && c + 1 < self.cols {
            horizontal[r * (self.cols - 1) + c] = time;
        } else if hi.index() == lo.index() + self.cols && hi.index() < self.cell_count() {
            vertical[lo.index()] = time;
        } else {
            return invalid(format!("cells {a} and {b} are not adjacent"));
        }
        Ok(Self::from_parts(self.rows, self.cols, horizontal, vertical))
    }

    pub fn neighbors(&self, cell: CellId) -> impl Iterator<Item = (CellId, f64)> + '_ {
        let (r, c) = self.row_col(cell);
        let i = cell.index();
        let cols = self.cols;
        let left = (c > 0).then(|| (CellId(cell.0 - 1), self.horizontal[r * (cols - 1) + c - 1]));
        let right = (c + 1 < cols).then(|| (CellId(cell.0 + 1), self.horizontal[r * (cols - 1) + c]));
        let up = (r > 0).then(|| (CellId((i - cols) as u32), self.vertical[i - cols]));
        let down = (r + 1 < self.rows).then(|| (CellId((i + cols) as u32), self.vertical[i]));
        left.into_iter().chain(right).chain(up).chain(down)
    }

    /// Shortest-path travel time in hours.
    pub fn travel_time(&self, from: CellId, to: CellId) -> Result<f64> {
        self.check(from)?;
        self.check(to)?;
        Ok(self.times_from(from)[to.index()])
    }

    /// Shortest-path times from `from` to every cell. Panics on an invalid cell.
    pub fn times_from(&self, from: CellId) -> &[f64] {
        let n = self.cell_count();
        let all = self.apsp.get_or_init(|| self.all_pairs());
        &all[from.index() * n..(from.index() + 1) * n]
    }

    /// Dijkstra from every cell. The two directions of a pair can differ in
    /// the last bit from summation order; both are kept equal to the smaller.
    fn all_pairs(&self) -> Vec<f64> {
        let n = self.cell_count();
        let mut all: Vec<f64> = (0..n).flat_map(|i| self.dijkstra(CellId(i as u32))).collect();
        for i in 0..n {
            for j in i + 1..n {
                let t = all[i * n + j].min(all[j * n + i]);
                all[i * n + j] = t;
                all[j * n + i] = t;
            }
        }
        all
    }

    fn dijkstra(&self, source: CellId) -> Vec<f64> {
        #[derive(PartialEq)]
        struct Entry(f64, u32);
        impl Eq for Entry {}
        impl PartialOrd for Entry {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }
        impl Ord for Entry {
            fn cmp(&self, other: &Self) -> Ordering {
                // min-heap on distance
                other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
            }
        }

        let mut dist = vec![f64::INFINITY; self.cell_count()];
        let mut heap = BinaryHeap::new();
        dist[source.index()] = 0.0;
        heap.push(Entry(0.0, source.0));
        while let Some(Entry(d, u)) = heap.pop() {
            if d > dist[u as usize] {
                continue;
            }
            for (v, w) in self.neighbors(CellId(u)) {
                let nd = d + w;
                if nd < dist[v.index()] {
                    dist[v.index()] = nd;
                    heap.push(Entry(nd, v.0));
                }
            }
        }
        dist
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_by_ten_has_180_edges() {
        let net = GridNetwork::build(10, 10, TimeRange::default(), 7).unwrap();
        assert_eq!(net.cell_count(), 100);
        assert_eq!(net.edge_count(), 180);
        assert_eq!(net.edges().count(), 180);
        assert!(net.edges().all(|(_, _, t)| TimeRange::default().contains(t)));
    }

    #[test]
    fn degenerate_range_gives_uniform_weights() {
        let net = GridNetwork::build(2, 2, TimeRange::new(1.0, 1.0), 3).unwrap();
        assert_eq!(net.cell_count(), 4);
        assert_eq!(net.edge_count(), 4);
        assert!(net.edges().all(|(_, _, t)| t == 1.0));
    }

    #[test]
    fn opposite_corners_of_half_hour_grid() {
        let net = GridNetwork::build(3, 3, TimeRange::new(0.5, 0.5), 0).unwrap();
        assert_eq!(net.travel_time(CellId(0), CellId(8)).unwrap(), 2.0);
    }

    #[test]
    fn adjacent_single_edge_and_self() {
        let net = GridNetwork::build(3, 3, TimeRange::new(1.0, 1.0), 0).unwrap();
        let net = net.with_edge_time(CellId(0), CellId(1), 0.7).unwrap();
        assert_eq!(net.travel_time(CellId(0), CellId(1)).unwrap(), 0.7);
        assert_eq!(net.travel_time(CellId(4), CellId(4)).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_dimensions_and_ranges() {
        assert!(GridNetwork::build(1, 5, TimeRange::default(), 0).is_err());
        assert!(GridNetwork::build(5, 0, TimeRange::default(), 0).is_err());
        assert!(GridNetwork::build(3, 3, TimeRange::new(0.0, 1.0), 0).is_err());
        assert!(GridNetwork::build(3, 3, TimeRange::new(-1.0, 1.0), 0).is_err());
        assert!(GridNetwork::build(3, 3, TimeRange::new(1.0, 0.5), 0).is_err());
    }

    #[test]
    fn invalid_cell_is_an_error() {
        let net = GridNetwork::build(3, 3, TimeRange::default(), 0).unwrap();
        assert!(net.travel_time(CellId(0), CellId(9)).is_err());
        assert!(net.cell(3, 0).is_err());
    }

    #[test]
    fn same_seed_same_grid() {
        let a = GridNetwork::build(6, 4, TimeRange::default(), 11).unwrap();
        let b = GridNetwork::build(6, 4, TimeRange::default(), 11).unwrap();
        let c = GridNetwork::build(6, 4, TimeRange::default(), 12).unwrap();
        assert_eq!(a.dump().edges, b.dump().edges);
        assert_ne!(a.dump().edges, c.dump().edges);
    }

    #[test]
    fn dump_round_trip_preserves_times() {
        let net = GridNetwork::build(4, 5, TimeRange::default(), 5).unwrap();
        let back = GridNetwork::from_dump(&net.dump()).unwrap();
        for a in net.cells() {
            assert_eq!(net.times_from(a), back.times_from(a));
        }
    }

    #[test]
    fn from_dump_rejects_missing_and_non_adjacent_edges() {
        let mut dump = GridNetwork::build(3, 3, TimeRange::default(), 5).unwrap().dump();
        let last = dump.edges.pop().unwrap();
        assert!(GridNetwork::from_dump(&dump).is_err());
        dump.edges.push((0, 4, 1.0));
        assert!(GridNetwork::from_dump(&dump).is_err());
        dump.edges.pop();
        dump.edges.push(last);
        dump.edges.push(last);
        assert!(GridNetwork::from_dump(&dump).is_err());
    }

    #[test]
    fn row_wrap_is_not_an_edge() {
        let net = GridNetwork::build(3, 3, TimeRange::default(), 1).unwrap();
        assert!(net.edge_time(CellId(2), CellId(3)).is_none());
        assert!(net.edge_time(CellId(2), CellId(5)).is_some());
    }
}
