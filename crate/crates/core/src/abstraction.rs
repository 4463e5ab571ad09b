//! Grid abstraction of a neural dynamic model: relaxations, post images and
//! interval rows for every `(cell, action)`, with incremental splitting.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::automata::UNSAFE;
use crate::error::Result;
use crate::geometry::{HyperRect, LabelSet, RegionGrid, Transform};
use crate::imdp::{Imdp, TransitionBoundRow};
use crate::nn::NeuralDynamics;
use crate::relax::{relax_index, LinearBounds};
use crate::transition::{
    compute_row, dropped_count, finish_row, floor_bound, target_bounds, RowOptions, SourceImage,
};

#[derive(Debug, Clone)]
pub struct Abstraction {
    transform: Transform,
    grid: RegionGrid,
    action_names: Vec<String>,
    options: RowOptions,
    /// Indexed by `cell · m + action`.
    bounds: Vec<LinearBounds>,
    images: Vec<SourceImage>,
    rows: Vec<TransitionBoundRow>,
}

/// What one batch of splits changed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitDelta {
    /// `(parent id, new id, dimension)`; the parent id now names the lower half.
    pub splits: Vec<(usize, usize, usize)>,
    /// Rows recomputed from scratch, as `(cell, action)`.
    pub dirty: Vec<(usize, usize)>,
}

fn relax_cells(
    nd: &NeuralDynamics,
    transform: &Transform,
    grid: &RegionGrid,
    cells: &[usize],
) -> Result<Vec<(LinearBounds, SourceImage)>> {
    let m = nd.num_actions();
    cells
        .par_iter()
        .flat_map_iter(|&c| (0..m).map(move |a| (c, a)))
        .map(|(c, a)| {
            let cell = grid.cell(c);
            let b = relax_index(nd, a, transform, cell)?;
            let image = SourceImage::new(&b, cell);
            Ok((b, image))
        })
        .collect()
}

impl Abstraction {
    pub fn build(
        nd: &NeuralDynamics,
        transform: Transform,
        grid: RegionGrid,
        options: RowOptions,
    ) -> Result<Self> {
        let m = nd.num_actions();
        let cells: Vec<usize> = (0..grid.num_cells()).collect();
        let (bounds, images): (Vec<_>, Vec<_>) =
            relax_cells(nd, &transform, &grid, &cells)?.into_iter().unzip();
        let rows = (0..grid.num_cells() * m)
            .into_par_iter()
            .map(|i| compute_row(&grid, &images[i], i / m, i % m, &options))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            transform,
            grid,
            action_names: nd.actions().to_vec(),
            options,
            bounds,
            images,
            rows,
        })
    }

    pub fn grid(&self) -> &RegionGrid {
        &self.grid
    }

    pub fn transform(&self) -> &Transform {
        &self.transform
    }

    pub fn options(&self) -> &RowOptions {
        &self.options
    }

    pub fn action_names(&self) -> &[String] {
        &self.action_names
    }

    pub fn num_actions(&self) -> usize {
        self.action_names.len()
    }

    pub fn bounds(&self, cell: usize, action: usize) -> &LinearBounds {
        &self.bounds[cell * self.num_actions() + action]
    }

    pub fn image(&self, cell: usize, action: usize) -> &SourceImage {
        &self.images[cell * self.num_actions() + action]
    }

    pub fn row(&self, cell: usize, action: usize) -> &TransitionBoundRow {
        &self.rows[cell * self.num_actions() + action]
    }

    /// Rows of the grid cells (the unsafe state is added by [`Self::imdp`]).
    pub fn rows(&self) -> &[TransitionBoundRow] {
        &self.rows
    }

    /// The IMDP over cells plus the absorbing unsafe state (last index).
    pub fn imdp(&self) -> Result<Imdp> {
        let m = self.num_actions();
        let u = self.grid.unsafe_id();
        let mut rows = self.rows.clone();
        rows.extend((0..m).map(|a| TransitionBoundRow::point(u, a, u)));
        let mut labels: Vec<LabelSet> = self.grid.labels().to_vec();
        labels.push(BTreeSet::from([UNSAFE.to_string()]));
        Imdp::new(u + 1, self.action_names.clone(), rows, labels)
    }

    /// Splits each listed cell at the midpoint of the given dimension and
    /// updates the rows.
    ///
    /// Rows of split cells, and rows whose post-image rect hull touches a
    /// split cell, are recomputed. Every other row only changes in the
    /// entries for split cells, which lie outside its hull and so are
    /// patched per target; the result equals a full rebuild exactly.
    pub fn split(&mut self, nd: &NeuralDynamics, cells: &[(usize, usize)]) -> Result<SplitDelta> {
        let m = self.num_actions();
        let old_unsafe = self.grid.unsafe_id();
        let mut parents: Vec<HyperRect> = Vec::with_capacity(cells.len());
        let mut splits = Vec::with_capacity(cells.len());
        let mut seen = BTreeSet::new();
        for &(id, dim) in cells {
            if !seen.insert(id) {
                continue;
            }
            parents.push(self.grid.cell(id).clone());
            let new_id = self.grid.split_cell(id, dim);
            splits.push((id, new_id, dim));
        }
        let new_unsafe = self.grid.unsafe_id();

        let touched: Vec<usize> = splits.iter().flat_map(|&(p, c, _)| [p, c]).collect();
        let fresh = relax_cells(nd, &self.transform, &self.grid, &touched)?;
        self.bounds.resize(new_unsafe * m, self.bounds[0].clone());
        self.images.resize(new_unsafe * m, self.images[0].clone());
        for (k, (b, image)) in fresh.into_iter().enumerate() {
            let i = touched[k / m] * m + k % m;
            self.bounds[i] = b;
            self.images[i] = image;
        }
        let children: Vec<usize> = touched.clone();
        let is_split: BTreeSet<usize> = touched.iter().copied().collect();

        let grid = &self.grid;
        let images = &self.images;
        let options = &self.options;
        let old_rows = &self.rows;
        let results: Vec<(TransitionBoundRow, bool)> = (0..new_unsafe * m)
            .into_par_iter()
            .map(|i| {
                let (s, a) = (i / m, i % m);
                let image = &images[i];
                let dirty = is_split.contains(&s)
                    || parents.iter().any(|p| image.rect.intersects(p));
                if dirty {
                    return compute_row(grid, image, s, a, options).map(|r| (r, true));
                }
                let old = &old_rows[i];
                let mut dropped = dropped_count(old.tail);
                let mut entries = Vec::with_capacity(old.entries.len() + children.len());
                let mut present = BTreeSet::new();
                for b in &old.entries {
                    let mut b = *b;
                    if b.target == old_unsafe {
                        b.target = new_unsafe;
                    } else if is_split.contains(&b.target) {
                        present.insert(b.target);
                        continue;
                    }
                    entries.push(b);
                }
                // split parents absent from the entries were folded into the tail
                dropped -= splits
                    .iter()
                    .filter(|&&(p, _, _)| !present.contains(&p))
                    .count();
                for &c in &children {
                    let (lo, hi) = target_bounds(image, grid.cell(c), options);
                    match floor_bound(c, lo, hi) {
                        Some(b) => entries.push(b),
                        None => dropped += 1,
                    }
                }
                entries.sort_by_key(|b| b.target);
                finish_row(s, a, entries, dropped).map(|r| (r, false))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut dirty = Vec::new();
        self.rows = results
            .into_iter()
            .enumerate()
            .map(|(i, (row, d))| {
                if d {
                    dirty.push((i / m, i % m));
                }
                row
            })
            .collect();
        Ok(SplitDelta { splits, dirty })
    }
}
