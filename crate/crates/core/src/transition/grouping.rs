use std::collections::HashMap;

use crate::geometry::{HyperRect, RegionGrid};

/// Position of a cell interval relative to the hull interval in one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum AxisClass {
    Below,
    Above,
    /// Closed overlap; keyed by the exact interval bits.
    Overlap(u64, u64),
}

fn classify(lo: f64, hi: f64, hull_lo: f64, hull_hi: f64) -> AxisClass {
    if hi < hull_lo {
        AxisClass::Below
    } else if lo > hull_hi {
        AxisClass::Above
    } else {
        AxisClass::Overlap(lo.to_bits(), hi.to_bits())
    }
}

/// Target cells sharing the same `(z_min, z_max)` with respect to a hull.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetGroup {
    /// Cell ids in ascending order.
    pub cells: Vec<usize>,
    /// The group's cells intersect the hull (every dimension overlaps).
    pub overlaps: bool,
}

/// Partitions `cells` into groups: per dimension, intervals below the hull
/// merge into one class, intervals above merge into another, and each
/// overlapping interval is its own class; groups are the non-empty products.
pub fn group_cells(cells: &[HyperRect], hull: &HyperRect) -> Vec<TargetGroup> {
    let mut index: HashMap<Vec<AxisClass>, usize> = HashMap::new();
    let mut groups: Vec<TargetGroup> = Vec::new();
    for (id, cell) in cells.iter().enumerate() {
        let key: Vec<AxisClass> = (0..hull.dim())
            .map(|l| classify(cell.lo[l], cell.hi[l], hull.lo[l], hull.hi[l]))
            .collect();
        let overlaps = key.iter().all(|c| matches!(c, AxisClass::Overlap(..)));
        let g = *index.entry(key).or_insert_with(|| {
            groups.push(TargetGroup {
                cells: Vec::new(),
                overlaps,
            });
            groups.len() - 1
        });
        groups[g].cells.push(id);
    }
    groups
}

pub fn group_regions(grid: &RegionGrid, hull: &HyperRect) -> Vec<TargetGroup> {
    group_cells(grid.cells(), hull)
}
