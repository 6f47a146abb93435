use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::f64::consts::SQRT_2;

use super::PlanError;
use crate::grid::{Cell, Grid};
use crate::math::Vec2;
use crate::world::Environment;

/// A cell path with its step composition. Length is measured in cells:
/// straight steps cost 1, diagonal steps cost √2.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridPath {
    pub cells: Vec<Cell>,
    pub straight: u32,
    pub diagonal: u32,
}

impl GridPath {
    pub fn length(&self) -> f64 {
        self.straight as f64 + self.diagonal as f64 * SQRT_2
    }
}

/// A grid path expressed as cell centers in world pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldPath {
    pub grid: GridPath,
    pub points: Vec<Vec2>,
    /// Arc length in pixels.
    pub length: f64,
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    f: f64,
    h: f64,
    index: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    // Min-heap on f, then h, then index, so expansion order is deterministic.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.h.total_cmp(&self.h))
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const NEIGHBORS: [(isize, isize); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

#[inline]
fn octile(a: Cell, b: Cell) -> f64 {
    let dx = a.x.abs_diff(b.x) as f64;
    let dy = a.y.abs_diff(b.y) as f64;
    let (lo, hi) = if dx < dy { (dx, dy) } else { (dy, dx) };
    hi - lo + lo * SQRT_2
}

/// A* over an 8-connected grid of free cells. Diagonal moves may not cut a
/// corner: both orthogonally adjacent cells must be free. Returns `Ok(None)`
/// when the endpoints are disconnected.
pub fn shortest_path_on(free: &Grid<bool>, start: Cell, goal: Cell) -> Result<Option<GridPath>, PlanError> {
    for c in [start, goal] {
        if c.x >= free.width() || c.y >= free.height() {
            return Err(PlanError::OutOfBounds(c));
        }
        if !*free.get(c) {
            return Err(PlanError::EndpointBlocked(c));
        }
    }
    let n = free.len();
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let s = free.index(start);
    let t = free.index(goal);
    g[s] = 0.0;
    let mut open = BinaryHeap::new();
    let h0 = octile(start, goal);
    open.push(Entry { f: h0, h: h0, index: s });

    while let Some(Entry { index, .. }) = open.pop() {
        if closed[index] {
            continue;
        }
        closed[index] = true;
        if index == t {
            break;
        }
        let cell = free.cell_of(index);
        for (dx, dy) in NEIGHBORS {
            let nx = cell.x as isize + dx;
            let ny = cell.y as isize + dy;
            if !free.in_bounds(nx, ny) {
                continue;
            }
            let next = Cell::new(nx as usize, ny as usize);
            if !*free.get(next) {
                continue;
            }
            let diagonal = dx != 0 && dy != 0;
            if diagonal
                && !(*free.get(Cell::new(nx as usize, cell.y)) && *free.get(Cell::new(cell.x, ny as usize)))
            {
                continue;
            }
            let ni = free.index(next);
            if closed[ni] {
                continue;
            }
            let step = if diagonal { SQRT_2 } else { 1.0 };
            let cand = g[index] + step;
            if cand < g[ni] {
                g[ni] = cand;
                parent[ni] = index;
                let h = octile(next, goal);
                open.push(Entry { f: cand + h, h, index: ni });
            }
        }
    }

    if !closed[t] {
        return Ok(None);
    }
    let mut cells = vec![goal];
    let mut cur = t;
    while cur != s {
        cur = parent[cur];
        cells.push(free.cell_of(cur));
    }
    cells.reverse();
    let (mut straight, mut diagonal) = (0u32, 0u32);
    for w in cells.windows(2) {
        if w[0].x != w[1].x && w[0].y != w[1].y {
            diagonal += 1;
        } else {
            straight += 1;
        }
    }
    Ok(Some(GridPath { cells, straight, diagonal }))
}

/// Shortest collision-free path between two world points over the
/// environment's traversable cells.
pub fn shortest_path(env: &Environment, a: Vec2, b: Vec2) -> Result<Option<WorldPath>, PlanError> {
    let spec = &env.spec;
    let path = shortest_path_on(env.traversable(), spec.cell_of(a), spec.cell_of(b))?;
    Ok(path.map(|grid| {
        let points = grid.cells.iter().map(|&c| spec.cell_center(c)).collect();
        let length = grid.length() * spec.cell_size();
        WorldPath { grid, points, length }
    }))
}

/// Nearest traversable cell to `p` by breadth-first search from its cell.
pub fn nearest_free_cell(env: &Environment, p: Vec2) -> Option<Cell> {
    let free = env.traversable();
    let spec = &env.spec;
    let origin = spec.cell_of(p);
    if *free.get(origin) {
        return Some(origin);
    }
    let max_r = free.width().max(free.height());
    let mut best: Option<(f64, Cell)> = None;
    for r in 1..=max_r as isize {
        for dy in -r..=r {
            for dx in -r..=r {
                if dx.abs() != r && dy.abs() != r {
                    continue;
                }
                let x = origin.x as isize + dx;
                let y = origin.y as isize + dy;
                if !free.in_bounds(x, y) {
                    continue;
                }
                let c = Cell::new(x as usize, y as usize);
                if *free.get(c) {
                    let d = spec.cell_center(c).distance(p);
                    if best.is_none_or(|(bd, bc)| d < bd || (d == bd && c < bc)) {
                        best = Some((d, c));
                    }
                }
            }
        }
        if let Some((d, c)) = best {
            // centers in later rings are at least (r + 0.5) cells from `p`
            if d <= (r as f64 + 0.5) * spec.cell_size() {
                return Some(c);
            }
        }
    }
    best.map(|(_, c)| c)
}
