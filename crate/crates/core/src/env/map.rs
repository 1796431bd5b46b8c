//! Occupancy grid with obstacle inflation.

use serde::{Deserialize, Serialize};

use super::{EnvError, Position};

/// Raw occupancy of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    Free,
    Obstacle,
}

/// Row/column index into a [`GridMap`]. Row 0 is the first line of the ASCII file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub row: usize,
    pub col: usize,
}

impl CellIndex {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Sidecar metadata of an ASCII map file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMeta {
    #[serde(default = "default_cell_size")]
    pub cell_size_m: f64,
    #[serde(default = "default_agent_radius")]
    pub agent_radius_m: f64,
    #[serde(default)]
    pub name: String,
}

fn default_cell_size() -> f64 {
    0.125
}

fn default_agent_radius() -> f64 {
    0.1
}

impl Default for MapMeta {
    fn default() -> Self {
        Self {
            cell_size_m: default_cell_size(),
            agent_radius_m: default_agent_radius(),
            name: String::new(),
        }
    }
}

/// Side length of the egocentric occupancy patch, in samples.
pub const PATCH_SIZE: usize = 11;
/// Spacing between egocentric patch samples, in meters.
pub const PATCH_SPACING_M: f64 = 0.25;

/// Immutable occupancy map.
///
/// World frame: `x = col * cell_size`, `y = row * cell_size`, so cell
/// `(row, col)` covers `[col*cs, (col+1)*cs) x [row*cs, (row+1)*cs)`.
/// The area outside the grid counts as obstacle when inflating.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    name: String,
    rows: usize,
    cols: usize,
    cell_size: f64,
    agent_radius: f64,
    cells: Vec<Cell>,
    inflated: Vec<bool>,
    start_hints: Vec<CellIndex>,
    goal_hints: Vec<CellIndex>,
}

/// Parse an ASCII map (`#` obstacle, `.` free, `S`/`G` free hint cells).
pub fn load_map(text: &str, meta: &MapMeta) -> Result<GridMap, EnvError> {
    if !(meta.cell_size_m > 0.0) || !meta.cell_size_m.is_finite() {
        return Err(EnvError::InvalidMeta(format!("cell_size_m = {}", meta.cell_size_m)));
    }
    if !(meta.agent_radius_m >= 0.0) || !meta.agent_radius_m.is_finite() {
        return Err(EnvError::InvalidMeta(format!("agent_radius_m = {}", meta.agent_radius_m)));
    }
    let lines: Vec<&str> = text
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .collect();
    // Trailing newlines produce empty tail lines; anything else empty is ragged.
    let mut end = lines.len();
    while end > 0 && lines[end - 1].is_empty() {
        end -= 1;
    }
    let lines = &lines[..end];
    if lines.is_empty() {
        return Err(EnvError::EmptyMap);
    }
    let cols = lines[0].chars().count();
    if cols == 0 {
        return Err(EnvError::EmptyMap);
    }
    let mut cells = Vec::with_capacity(lines.len() * cols);
    let mut start_hints = Vec::new();
    let mut goal_hints = Vec::new();
    for (row, line) in lines.iter().enumerate() {
        let len = line.chars().count();
        if len != cols {
            return Err(EnvError::RaggedRows { row, expected: cols, found: len });
        }
        for (col, ch) in line.chars().enumerate() {
            let cell = match ch {
                '#' => Cell::Obstacle,
                '.' => Cell::Free,
                'S' => {
                    start_hints.push(CellIndex::new(row, col));
                    Cell::Free
                }
                'G' => {
                    goal_hints.push(CellIndex::new(row, col));
                    Cell::Free
                }
                other => return Err(EnvError::UnknownGlyph { row, col, glyph: other }),
            };
            cells.push(cell);
        }
    }
    Ok(GridMap::from_cells(
        meta.name.clone(),
        lines.len(),
        cols,
        cells,
        meta.cell_size_m,
        meta.agent_radius_m,
    )
    .with_hints(start_hints, goal_hints))
}

impl GridMap {
    /// Build from a row-major cell array and compute the inflated mask.
    pub fn from_cells(
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        cells: Vec<Cell>,
        cell_size: f64,
        agent_radius: f64,
    ) -> Self {
        assert_eq!(cells.len(), rows * cols, "cell array must be rows * cols");
        let mut map = Self {
            name: name.into(),
            rows,
            cols,
            cell_size,
            agent_radius,
            cells,
            inflated: Vec::new(),
            start_hints: Vec::new(),
            goal_hints: Vec::new(),
        };
        map.inflated = map.compute_inflation();
        map
    }

    fn with_hints(mut self, starts: Vec<CellIndex>, goals: Vec<CellIndex>) -> Self {
        self.start_hints = starts;
        self.goal_hints = goals;
        self
    }

    fn compute_inflation(&self) -> Vec<bool> {
        let cs = self.cell_size;
        let r = self.agent_radius;
        let reach = (r / cs).ceil() as isize + 1;
        let width = self.cols as f64 * cs;
        let height = self.rows as f64 * cs;
        let mut out = vec![false; self.rows * self.cols];
        for row in 0..self.rows {
            for col in 0..self.cols {
                let idx = row * self.cols + col;
                if self.cells[idx] == Cell::Obstacle {
                    out[idx] = true;
                    continue;
                }
                let (px, py) = ((col as f64 + 0.5) * cs, (row as f64 + 0.5) * cs);
                let edge = px.min(width - px).min(py).min(height - py);
                if edge < r {
                    out[idx] = true;
                    continue;
                }
                'scan: for dr in -reach..=reach {
                    for dc in -reach..=reach {
                        let (rr, cc) = (row as isize + dr, col as isize + dc);
                        if rr < 0 || cc < 0 || rr >= self.rows as isize || cc >= self.cols as isize {
                            continue;
                        }
                        let (rr, cc) = (rr as usize, cc as usize);
                        if self.cells[rr * self.cols + cc] != Cell::Obstacle {
                            continue;
                        }
                        if point_to_cell_distance(px, py, rr, cc, cs) < r {
                            out[idx] = true;
                            break 'scan;
                        }
                    }
                }
            }
        }
        out
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn agent_radius(&self) -> f64 {
        self.agent_radius
    }

    pub fn width_m(&self) -> f64 {
        self.cols as f64 * self.cell_size
    }

    pub fn height_m(&self) -> f64 {
        self.rows as f64 * self.cell_size
    }

    pub fn start_hints(&self) -> &[CellIndex] {
        &self.start_hints
    }

    pub fn goal_hints(&self) -> &[CellIndex] {
        &self.goal_hints
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    #[inline]
    pub fn flat(&self, cell: CellIndex) -> usize {
        cell.row * self.cols + cell.col
    }

    #[inline]
    pub fn unflat(&self, idx: usize) -> CellIndex {
        CellIndex::new(idx / self.cols, idx % self.cols)
    }

    pub fn cell(&self, cell: CellIndex) -> Cell {
        self.cells[self.flat(cell)]
    }

    /// Whether the cell is blocked once obstacles are dilated by the agent radius.
    #[inline]
    pub fn is_inflated(&self, cell: CellIndex) -> bool {
        self.inflated[self.flat(cell)]
    }

    #[inline]
    pub fn is_free_cell(&self, cell: CellIndex) -> bool {
        !self.inflated[self.flat(cell)]
    }

    pub fn raw_obstacles(&self) -> impl Iterator<Item = CellIndex> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == Cell::Obstacle)
            .map(|(i, _)| self.unflat(i))
    }

    /// Cells that are free after inflation, in row-major order.
    pub fn free_cells(&self) -> Vec<CellIndex> {
        (0..self.len())
            .filter(|&i| !self.inflated[i])
            .map(|i| self.unflat(i))
            .collect()
    }

    /// Cell containing a world position, or `None` outside the grid.
    pub fn cell_at(&self, p: Position) -> Option<CellIndex> {
        if !(p.x >= 0.0 && p.y >= 0.0) {
            return None;
        }
        let col = (p.x / self.cell_size).floor() as usize;
        let row = (p.y / self.cell_size).floor() as usize;
        (row < self.rows && col < self.cols).then_some(CellIndex::new(row, col))
    }

    pub fn cell_center(&self, cell: CellIndex) -> Position {
        Position::new(
            (cell.col as f64 + 0.5) * self.cell_size,
            (cell.row as f64 + 0.5) * self.cell_size,
        )
    }

    /// Whether a world position lies in free inflated space.
    #[inline]
    pub fn is_free(&self, p: Position) -> bool {
        self.cell_at(p).is_some_and(|c| self.is_free_cell(c))
    }

    /// Sample the segment `a -> b` at intervals of at most half a cell and
    /// check every sample (endpoints included) against the inflated mask.
    pub fn segment_is_free(&self, a: Position, b: Position) -> bool {
        let len = a.distance(b);
        let n = ((len / (self.cell_size * 0.5)).ceil() as usize).max(1);
        (0..=n).all(|i| {
            let t = i as f64 / n as f64;
            self.is_free(Position::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t))
        })
    }

    /// Egocentric occupancy patch around `p` facing `heading_deg`, row-major.
    ///
    /// Row 0 is the farthest row ahead, the center sample is the agent
    /// itself, column 0 is the leftmost. Entry 1 means blocked or off-map.
    pub fn ego_patch(&self, p: Position, heading_deg: f64) -> [u8; PATCH_SIZE * PATCH_SIZE] {
        let half = (PATCH_SIZE / 2) as f64;
        let (s, c) = heading_deg.to_radians().sin_cos();
        let mut out = [0u8; PATCH_SIZE * PATCH_SIZE];
        for i in 0..PATCH_SIZE {
            let fwd = (half - i as f64) * PATCH_SPACING_M;
            for j in 0..PATCH_SIZE {
                let left = (half - j as f64) * PATCH_SPACING_M;
                let q = Position::new(p.x + fwd * c - left * s, p.y + fwd * s + left * c);
                out[i * PATCH_SIZE + j] = u8::from(!self.is_free(q));
            }
        }
        out
    }

    /// Render back to the ASCII format (hints are not preserved).
    pub fn to_ascii(&self) -> String {
        let mut s = String::with_capacity(self.rows * (self.cols + 1));
        for row in 0..self.rows {
            for col in 0..self.cols {
                s.push(match self.cells[row * self.cols + col] {
                    Cell::Free => '.',
                    Cell::Obstacle => '#',
                });
            }
            s.push('\n');
        }
        s
    }
}

/// Euclidean distance from a point to the closed square of cell `(row, col)`.
pub fn point_to_cell_distance(px: f64, py: f64, row: usize, col: usize, cs: f64) -> f64 {
    let (x0, x1) = (col as f64 * cs, (col + 1) as f64 * cs);
    let (y0, y1) = (row as f64 * cs, (row + 1) as f64 * cs);
    let dx = (x0 - px).max(0.0).max(px - x1);
    let dy = (y0 - py).max(0.0).max(py - y1);
    dx.hypot(dy)
}
