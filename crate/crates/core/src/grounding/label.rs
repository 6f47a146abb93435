use alloc::vec;
use alloc::vec::Vec;

use super::GroundingConfig;
use crate::costmap::{CostMap, Mask, OFF_MASK_COST, VELOCITY_CODES};
use crate::grid::Grid;
use crate::math::{sqrt, Vec2};
use crate::world::GridSpec;

/// Cost map and tube mask for a guiding path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathLabel {
    pub cost: CostMap,
    pub mask: Mask,
    /// Arc length of the polyline in pixels.
    pub length: f64,
}

/// Remaining arc length to the end of the polyline at every vertex.
pub fn remaining_lengths(points: &[Vec2]) -> Vec<f64> {
    let mut rem = vec![0.0; points.len()];
    for i in (0..points.len().saturating_sub(1)).rev() {
        rem[i] = rem[i + 1] + points[i].distance(points[i + 1]);
    }
    rem
}

/// Labels a polyline on the cost grid.
///
/// Cells under the polyline get the remaining arc length to its end. Cells
/// within the tube radius take the value of their nearest path cell plus
/// their distance to it, so the tube slopes toward the path. Values are
/// scaled so the full length maps to the on-path ceiling; everything
/// outside the tube is the off-mask wall. An empty polyline labels nothing.
pub fn label_polyline(points: &[Vec2], spec: &GridSpec, cfg: &GroundingConfig) -> PathLabel {
    let (w, h) = (spec.cols(), spec.rows());
    let mut position = Grid::filled(w, h, OFF_MASK_COST);
    let mut mask = Grid::filled(w, h, false);
    let velocity = Grid::filled(w, h, VELOCITY_CODES.unconstrained);
    let rem = remaining_lengths(points);
    let length = rem.first().copied().unwrap_or(0.0);

    // One entry per distinct cell, keeping the visit closest to the end.
    let mut path_cells: Vec<(usize, f64)> = Vec::new();
    let mut best_rem: Grid<Option<usize>> = Grid::filled(w, h, None);
    for (p, &r) in points.iter().zip(&rem) {
        let idx = spec.index_of(*p);
        match *best_rem.at(idx) {
            Some(slot) => path_cells[slot].1 = r,
            None => {
                best_rem.as_mut_slice()[idx] = Some(path_cells.len());
                path_cells.push((idx, r));
            }
        }
    }
    // Later visits override earlier ones; order path cells by remaining length.
    path_cells.sort_by(|a, b| b.1.total_cmp(&a.1));

    let radius = cfg.tube_radius.max(0.0);
    let reach = radius as isize;
    let r2 = radius * radius;
    // (squared cell distance, path order, value) of the nearest path cell.
    let mut nearest: Grid<Option<(isize, usize, f64)>> = Grid::filled(w, h, None);
    for (order, &(idx, r)) in path_cells.iter().enumerate() {
        let c = position.cell_of(idx);
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let d2 = dx * dx + dy * dy;
                if d2 as f64 > r2 {
                    continue;
                }
                let (x, y) = (c.x as isize + dx, c.y as isize + dy);
                if !position.in_bounds(x, y) {
                    continue;
                }
                let j = y as usize * w + x as usize;
                let value = r + sqrt(d2 as f64) * spec.cell_size();
                let slot = &mut nearest.as_mut_slice()[j];
                if slot.is_none_or(|(bd, bo, _)| d2 < bd || (d2 == bd && order > bo)) {
                    *slot = Some((d2, order, value));
                }
            }
        }
    }

    let ceiling = cfg.on_path_ceiling;
    let scale = ceiling / length.max(spec.cell_size());
    for (j, slot) in nearest.as_slice().iter().enumerate() {
        if let Some((_, _, v)) = slot {
            position.as_mut_slice()[j] = (v * scale).min(ceiling);
            mask.as_mut_slice()[j] = true;
        }
    }
    PathLabel { cost: CostMap { position, velocity }, mask: Mask(mask), length }
}
