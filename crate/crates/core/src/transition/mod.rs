//! Interval transition bounds between grid cells.

mod grouping;
mod hull;
mod kernel;

pub use grouping::{group_cells, group_regions, TargetGroup};
pub use hull::{max_over_hull, min_over_hull, rect_extreme_points, HullMax, HULL_MAX_ITERATIONS};
pub use kernel::{axis_mass, kernel_g, KernelTarget};

use crate::error::{Error, Result};
use crate::geometry::{post_image_hull, rect_hull, HyperRect, Polytope, RegionGrid};
use crate::imdp::{Bound, TransitionBoundRow, PROB_FLOOR};
use crate::relax::LinearBounds;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowOptions {
    /// Use the hull maximisation instead of the rect-hull bound for upper
    /// bounds of targets that overlap the hull.
    pub exact_upper: bool,
    pub hull_tolerance: f64,
}

impl Default for RowOptions {
    fn default() -> Self {
        Self {
            exact_upper: false,
            hull_tolerance: 1e-9,
        }
    }
}

/// Overapproximation of the one-step mean image of a cell under one action.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceImage {
    /// Candidate vertices, duplicates removed.
    pub hull: Polytope,
    pub rect: HyperRect,
}

impl SourceImage {
    pub fn new(bounds: &LinearBounds, cell: &HyperRect) -> Self {
        let mut hull = post_image_hull(bounds, cell);
        let mut seen: Vec<Vec<f64>> = Vec::with_capacity(hull.vertices.len());
        for v in hull.vertices.drain(..) {
            if !seen.contains(&v) {
                seen.push(v);
            }
        }
        hull.vertices = seen;
        let rect = rect_hull(&hull);
        Self { hull, rect }
    }
}

/// Lower and upper bound of the transition probability into `cell`.
pub fn target_bounds(image: &SourceImage, cell: &HyperRect, options: &RowOptions) -> (f64, f64) {
    let target = KernelTarget::from(cell);
    let (z_min, z_max) = rect_extreme_points(&image.rect, &target);
    bounds_for(image, &target, &z_min, &z_max, image.rect.intersects(cell), options)
}

fn bounds_for(
    image: &SourceImage,
    target: &KernelTarget,
    z_min: &[f64],
    z_max: &[f64],
    overlaps: bool,
    options: &RowOptions,
) -> (f64, f64) {
    let upper = if overlaps && options.exact_upper {
        max_over_hull(&image.hull, target, options.hull_tolerance).value
    } else {
        kernel_g(z_max, target)
    };
    let lower = if overlaps {
        min_over_hull(&image.hull, target)
    } else {
        kernel_g(z_min, target)
    };
    (lower.min(upper), upper)
}

/// Bounds on the probability of leaving the domain, from the extremes of the
/// mass that stays inside it.
pub fn unsafe_bounds(image: &SourceImage, domain: &HyperRect) -> (f64, f64) {
    let target = KernelTarget::from(domain);
    let (z_min, z_max) = rect_extreme_points(&image.rect, &target);
    let stay_hi = kernel_g(&z_max, &target);
    let stay_lo = kernel_g(&z_min, &target).min(stay_hi);
    ((1.0 - stay_hi).max(0.0), (1.0 - stay_lo).min(1.0))
}

/// Sparse form of one target's bounds; `None` when the upper bound is
/// negligible and the target moves into the row's tail.
pub(crate) fn floor_bound(target: usize, lower: f64, upper: f64) -> Option<Bound> {
    if upper < PROB_FLOOR {
        return None;
    }
    let lower = if lower < PROB_FLOOR { 0.0 } else { lower };
    Some(Bound {
        target,
        lower,
        upper,
    })
}

pub(crate) fn tail_mass(dropped: usize) -> f64 {
    dropped as f64 * PROB_FLOOR
}

pub(crate) fn dropped_count(tail: f64) -> usize {
    (tail / PROB_FLOOR).round() as usize
}

/// Transition row of `(source, action)` over all grid cells plus `q_u`,
/// computing the extreme points once per target group.
pub fn compute_row(
    grid: &RegionGrid,
    image: &SourceImage,
    source: usize,
    action: usize,
    options: &RowOptions,
) -> Result<TransitionBoundRow> {
    let mut entries = Vec::new();
    let mut dropped = 0usize;
    for group in group_regions(grid, &image.rect) {
        let reference = KernelTarget::from(grid.cell(group.cells[0]));
        let (z_min, z_max) = rect_extreme_points(&image.rect, &reference);
        for &id in &group.cells {
            let target = KernelTarget::from(grid.cell(id));
            let (lo, hi) = bounds_for(image, &target, &z_min, &z_max, group.overlaps, options);
            match floor_bound(id, lo, hi) {
                Some(b) => entries.push(b),
                None => dropped += 1,
            }
        }
    }
    let (lo, hi) = unsafe_bounds(image, grid.domain());
    match floor_bound(grid.unsafe_id(), lo, hi) {
        Some(b) => entries.push(b),
        None => dropped += 1,
    }
    entries.sort_by_key(|b| b.target);
    finish_row(source, action, entries, dropped)
}

pub(crate) fn finish_row(
    source: usize,
    action: usize,
    entries: Vec<Bound>,
    dropped: usize,
) -> Result<TransitionBoundRow> {
    let row = TransitionBoundRow {
        source,
        action,
        entries,
        tail: tail_mass(dropped),
    };
    if row.upper_sum() < 1.0 - 1e-9 {
        return Err(Error::InfeasibleRow {
            source_state: source,
            action,
            message: format!("upper bounds sum to {}", row.upper_sum()),
        });
    }
    row.validate()?;
    Ok(row)
}

/// Convenience wrapper building the source image from linear bounds.
pub fn compute_row_from_bounds(
    grid: &RegionGrid,
    bounds: &LinearBounds,
    source: usize,
    action: usize,
    options: &RowOptions,
) -> Result<TransitionBoundRow> {
    let image = SourceImage::new(bounds, grid.cell(source));
    compute_row(grid, &image, source, action, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, Transform};
    use nalgebra::{DMatrix, DVector};

    fn identity_bounds(n: usize, region: HyperRect) -> LinearBounds {
        LinearBounds {
            a_lo: DMatrix::identity(n, n),
            b_lo: DVector::zeros(n),
            a_hi: DMatrix::identity(n, n),
            b_hi: DVector::zeros(n),
            region,
        }
    }

    #[test]
    fn single_cell_identity_row() {
        let domain = HyperRect::new(vec![-10.0, -10.0], vec![10.0, 10.0]).unwrap();
        let grid = build_grid(&domain, &Transform::identity(2), &[1, 1], &[]).unwrap();
        let bounds = identity_bounds(2, grid.cell(0).clone());
        let row = compute_row_from_bounds(&grid, &bounds, 0, 0, &RowOptions::default()).unwrap();
        // a corner start keeps a quarter of its mass, the centre keeps all of it
        assert!((row.lower(0) - 0.25).abs() < 1e-12);
        assert!(row.upper(0) > 1.0 - 1e-12);
        assert!((row.upper(1) - 0.75).abs() < 1e-12);
        assert_eq!(row.lower(1), 0.0);
        assert!(row.lower_sum() <= 1.0 && row.upper_sum() >= 1.0);
    }

    #[test]
    fn far_targets_fold_into_tail() {
        let domain = HyperRect::new(vec![-50.0], vec![50.0]).unwrap();
        let grid = build_grid(&domain, &Transform::identity(1), &[100], &[]).unwrap();
        let bounds = identity_bounds(1, grid.cell(50).clone());
        let row = compute_row_from_bounds(&grid, &bounds, 50, 0, &RowOptions::default()).unwrap();
        assert!(row.entries.len() < 30);
        assert!(row.tail > 0.0);
        assert_eq!(dropped_count(row.tail) + row.entries.len(), 101);
    }

    #[test]
    fn exact_upper_is_tighter() {
        let domain = HyperRect::new(vec![-3.0, -3.0], vec![3.0, 3.0]).unwrap();
        let grid = build_grid(&domain, &Transform::identity(2), &[6, 6], &[]).unwrap();
        let rot = DMatrix::from_row_slice(2, 2, &[0.8, -0.6, 0.6, 0.8]);
        let bounds = LinearBounds {
            a_lo: rot.clone(),
            b_lo: DVector::from_vec(vec![-0.1, -0.1]),
            a_hi: rot,
            b_hi: DVector::from_vec(vec![0.1, 0.1]),
            region: grid.cell(14).clone(),
        };
        let image = SourceImage::new(&bounds, grid.cell(14));
        let exact = RowOptions {
            exact_upper: true,
            ..RowOptions::default()
        };
        for id in 0..grid.num_cells() {
            let (_, fast) = target_bounds(&image, grid.cell(id), &RowOptions::default());
            let (_, tight) = target_bounds(&image, grid.cell(id), &exact);
            assert!(tight <= fast + 1e-12);
        }
    }
}
