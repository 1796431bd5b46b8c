//! Geodesic distances on the 8-connected lattice of inflated-free cells.
//!
//! Axial edges cost one cell size, diagonal edges `sqrt(2)` cell sizes. A
//! diagonal edge is only present when both cells it cuts past are free, so a
//! path never squeezes between two obstacles touching at a corner.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::map::{CellIndex, GridMap};
use super::{EnvError, Position};

/// Result of a geodesic query: a finite length or the unreachable sentinel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geodesic {
    Meters(f64),
    Unreachable,
}

impl Geodesic {
    /// Length in meters, `+inf` when unreachable.
    pub fn meters(self) -> f64 {
        match self {
            Geodesic::Meters(m) => m,
            Geodesic::Unreachable => f64::INFINITY,
        }
    }

    pub fn is_reachable(self) -> bool {
        matches!(self, Geodesic::Meters(_))
    }
}

const NEIGHBORS: [(isize, isize); 8] = [
    (-1, 0),
    (1, 0),
    (0, -1),
    (0, 1),
    (-1, -1),
    (-1, 1),
    (1, -1),
    (1, 1),
];

/// Lattice neighbors of `cell` with edge length in meters.
pub fn lattice_neighbors(map: &GridMap, cell: CellIndex) -> impl Iterator<Item = (CellIndex, f64)> + '_ {
    let cs = map.cell_size();
    NEIGHBORS.iter().filter_map(move |&(dr, dc)| {
        let r = cell.row as isize + dr;
        let c = cell.col as isize + dc;
        if r < 0 || c < 0 || r >= map.rows() as isize || c >= map.cols() as isize {
            return None;
        }
        let next = CellIndex::new(r as usize, c as usize);
        if !map.is_free_cell(next) {
            return None;
        }
        if dr != 0 && dc != 0 {
            let side_a = CellIndex::new(r as usize, cell.col);
            let side_b = CellIndex::new(cell.row, c as usize);
            if !map.is_free_cell(side_a) || !map.is_free_cell(side_b) {
                return None;
            }
            Some((next, cs * std::f64::consts::SQRT_2))
        } else {
            Some((next, cs))
        }
    })
}

#[derive(PartialEq)]
struct Frontier {
    cost: f64,
    idx: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on cost, ties broken by index for determinism
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source shortest path lengths from one cell to every cell.
///
/// The lattice is undirected, so a field rooted at the goal answers
/// "distance to goal" for every agent cell in O(1).
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    source: CellIndex,
    dist: Vec<f64>,
}

impl DistanceField {
    pub fn from_cell(map: &GridMap, source: CellIndex) -> Result<Self, EnvError> {
        if source.row >= map.rows() || source.col >= map.cols() || !map.is_free_cell(source) {
            return Err(EnvError::PositionInObstacle { row: source.row, col: source.col });
        }
        let mut dist = vec![f64::INFINITY; map.len()];
        let mut heap = BinaryHeap::new();
        let s = map.flat(source);
        dist[s] = 0.0;
        heap.push(Frontier { cost: 0.0, idx: s });
        while let Some(Frontier { cost, idx }) = heap.pop() {
            if cost > dist[idx] {
                continue;
            }
            for (next, w) in lattice_neighbors(map, map.unflat(idx)) {
                let n = map.flat(next);
                let nc = cost + w;
                if nc < dist[n] {
                    dist[n] = nc;
                    heap.push(Frontier { cost: nc, idx: n });
                }
            }
        }
        Ok(Self { source, dist })
    }

    pub fn from_position(map: &GridMap, p: Position) -> Result<Self, EnvError> {
        let cell = map.cell_at(p).ok_or(EnvError::OutOfBounds { x: p.x, y: p.y })?;
        Self::from_cell(map, cell)
    }

    pub fn source(&self) -> CellIndex {
        self.source
    }

    pub fn at_cell(&self, map: &GridMap, cell: CellIndex) -> Geodesic {
        let d = self.dist[map.flat(cell)];
        if d.is_finite() {
            Geodesic::Meters(d)
        } else {
            Geodesic::Unreachable
        }
    }

    pub fn at(&self, map: &GridMap, p: Position) -> Geodesic {
        match map.cell_at(p) {
            Some(c) => self.at_cell(map, c),
            None => Geodesic::Unreachable,
        }
    }

    /// Raw per-cell lengths in row-major order (`+inf` for unreachable cells).
    pub fn raw(&self) -> &[f64] {
        &self.dist
    }

    /// Shortest lattice path from `from` down to the field's source, as cells
    /// (both endpoints included). Ties go to the first neighbor in scan order.
    pub fn descend(&self, map: &GridMap, from: CellIndex) -> Option<Vec<CellIndex>> {
        if !self.dist[map.flat(from)].is_finite() {
            return None;
        }
        let mut path = vec![from];
        let mut cur = from;
        while cur != self.source {
            let here = self.dist[map.flat(cur)];
            let mut best: Option<(CellIndex, f64)> = None;
            for (next, w) in lattice_neighbors(map, cur) {
                let through = self.dist[map.flat(next)] + w;
                if through <= here + 1e-9 && best.map_or(true, |(_, b)| self.dist[map.flat(next)] < b) {
                    best = Some((next, self.dist[map.flat(next)]));
                }
            }
            let (next, _) = best?;
            path.push(next);
            cur = next;
        }
        Some(path)
    }
}

/// Geodesic distance between two positions on the inflated-free lattice.
pub fn geodesic_distance(map: &GridMap, from: Position, to: Position) -> Result<Geodesic, EnvError> {
    let a = map.cell_at(from).ok_or(EnvError::OutOfBounds { x: from.x, y: from.y })?;
    let b = map.cell_at(to).ok_or(EnvError::OutOfBounds { x: to.x, y: to.y })?;
    for c in [a, b] {
        if !map.is_free_cell(c) {
            return Err(EnvError::PositionInObstacle { row: c.row, col: c.col });
        }
    }
    if a == b {
        return Ok(Geodesic::Meters(0.0));
    }
    Ok(DistanceField::from_cell(map, b)?.at_cell(map, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::map::{load_map, MapMeta};

    fn open(rows: usize, cols: usize, cs: f64) -> GridMap {
        let text: String = (0..rows).map(|_| ".".repeat(cols) + "\n").collect();
        load_map(&text, &MapMeta { cell_size_m: cs, agent_radius_m: 0.1, name: "o".into() }).unwrap()
    }

    #[test]
    fn identity_is_zero() {
        let map = open(5, 5, 0.25);
        let p = map.cell_center(CellIndex::new(2, 2));
        assert_eq!(geodesic_distance(&map, p, p).unwrap(), Geodesic::Meters(0.0));
    }

    #[test]
    fn four_axial_edges_on_open_grid() {
        let map = open(5, 5, 0.25);
        let a = map.cell_center(CellIndex::new(0, 0));
        let b = map.cell_center(CellIndex::new(0, 4));
        assert_eq!(geodesic_distance(&map, a, b).unwrap(), Geodesic::Meters(1.0));
    }

    #[test]
    fn wall_disconnects() {
        let map = load_map(
            "..#..\n..#..\n..#..\n",
            &MapMeta { cell_size_m: 0.25, agent_radius_m: 0.1, name: "w".into() },
        )
        .unwrap();
        let a = map.cell_center(CellIndex::new(1, 0));
        let b = map.cell_center(CellIndex::new(1, 4));
        assert_eq!(geodesic_distance(&map, a, b).unwrap(), Geodesic::Unreachable);
        assert_eq!(Geodesic::Unreachable.meters(), f64::INFINITY);
    }

    #[test]
    fn obstacle_endpoint_is_an_error() {
        let map = load_map("..#..\n", &MapMeta { cell_size_m: 0.25, agent_radius_m: 0.1, name: "w".into() }).unwrap();
        let a = map.cell_center(CellIndex::new(0, 0));
        let b = map.cell_center(CellIndex::new(0, 2));
        assert!(matches!(geodesic_distance(&map, a, b), Err(EnvError::PositionInObstacle { .. })));
    }

    #[test]
    fn descend_follows_field() {
        let map = open(6, 6, 0.25);
        let goal = CellIndex::new(5, 5);
        let field = DistanceField::from_cell(&map, goal).unwrap();
        let path = field.descend(&map, CellIndex::new(0, 0)).unwrap();
        assert_eq!(path.first(), Some(&CellIndex::new(0, 0)));
        assert_eq!(path.last(), Some(&goal));
        let len: f64 = path
            .windows(2)
            .map(|w| map.cell_center(w[0]).distance(map.cell_center(w[1])))
            .sum();
        let expect = field.at_cell(&map, CellIndex::new(0, 0)).meters();
        assert!((len - expect).abs() < 1e-12);
    }
}
