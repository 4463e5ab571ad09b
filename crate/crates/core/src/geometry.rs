//! Whitening transform, grid partition of the transformed domain, labeling,
//! and vertex-based post-image overapproximation.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relax::LinearBounds;

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperRect {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl HyperRect {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidRegion(format!(
                "bound lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        for (l, (a, b)) in lo.iter().zip(&hi).enumerate() {
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::InvalidRegion(format!("non-finite bound in dimension {l}")));
            }
            if a > b {
                return Err(Error::InvalidRegion(format!("lo {a} > hi {b} in dimension {l}")));
            }
        }
        Ok(Self { lo, hi })
    }

    /// Smallest box containing both points (the `rect(x, x')` construction).
    pub fn spanning(a: &[f64], b: &[f64]) -> Self {
        Self {
            lo: a.iter().zip(b).map(|(x, y)| x.min(*y)).collect(),
            hi: a.iter().zip(b).map(|(x, y)| x.max(*y)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn width(&self, l: usize) -> f64 {
        self.hi[l] - self.lo[l]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|l| self.width(l)).product()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    pub fn contains_rect(&self, other: &HyperRect) -> bool {
        (0..self.dim()).all(|l| self.lo[l] <= other.lo[l] && other.hi[l] <= self.hi[l])
    }

    /// Closed intersection test: touching boundaries count.
    pub fn intersects(&self, other: &HyperRect) -> bool {
        (0..self.dim()).all(|l| self.lo[l] <= other.hi[l] && other.lo[l] <= self.hi[l])
    }

    pub fn intersection(&self, other: &HyperRect) -> Option<HyperRect> {
        let lo: Vec<f64> = self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect();
        let hi: Vec<f64> = self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(*b)).collect();
        lo.iter().zip(&hi).all(|(a, b)| a <= b).then_some(HyperRect { lo, hi })
    }

    /// The `2^n` corners; bit `l` of the index selects `hi[l]`.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..1usize << n)
            .map(|mask| {
                (0..n)
                    .map(|l| if mask >> l & 1 == 1 { self.hi[l] } else { self.lo[l] })
                    .collect()
            })
            .collect()
    }

    pub fn split(&self, dim: usize, at: f64) -> (HyperRect, HyperRect) {
        let mut a = self.clone();
        let mut b = self.clone();
        a.hi[dim] = at;
        b.lo[dim] = at;
        (a, b)
    }
}

/// Whitening map `T = Λ^{-1/2} Vᵀ` with `T Σ Tᵀ = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transform {
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
    covariance: DMatrix<f64>,
}

impl Transform {
    /// Mahalanobis transform of a symmetric positive-definite covariance.
    ///
    /// Eigenvectors are ordered by their dominant coordinate and signed so
    /// that coordinate is positive; a diagonal `Σ` therefore yields the
    /// diagonal `T = diag(σ_l^{-1/2})` in the original axis order.
    pub fn mahalanobis(covariance: &DMatrix<f64>) -> Result<Self> {
        let n = covariance.nrows();
        if n == 0 || !covariance.is_square() {
            return Err(Error::Config("covariance must be a non-empty square matrix".into()));
        }
        let asym = (covariance - covariance.transpose()).amax();
        if asym > 1e-9 {
            return Err(Error::NonSymmetric(asym));
        }
        let is_diagonal = (0..n).all(|i| (0..n).all(|j| i == j || covariance[(i, j)] == 0.0));
        let (eigvals, eigvecs) = if is_diagonal {
            (covariance.diagonal(), DMatrix::identity(n, n))
        } else {
            let sym = 0.5 * (covariance + covariance.transpose());
            let eig = SymmetricEigen::new(sym);
            let mut order: Vec<usize> = (0..n).collect();
            let dominant = |k: usize| {
                let col = eig.eigenvectors.column(k);
                (0..n)
                    .max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs()).then(b.cmp(&a)))
                    .unwrap()
            };
            order.sort_by(|&a, &b| {
                dominant(a)
                    .cmp(&dominant(b))
                    .then(eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]))
            });
            let mut vecs = DMatrix::zeros(n, n);
            let mut vals = DVector::zeros(n);
            for (k, &src) in order.iter().enumerate() {
                let mut col = eig.eigenvectors.column(src).into_owned();
                if col[dominant(src)] < 0.0 {
                    col.neg_mut();
                }
                vecs.set_column(k, &col);
                vals[k] = eig.eigenvalues[src];
            }
            (vals, vecs)
        };
        if let Some(bad) = eigvals.iter().find(|&&v| v <= 0.0 || !v.is_finite()) {
            return Err(Error::NotPositiveDefinite(*bad));
        }
        let inv_sqrt = DMatrix::from_diagonal(&eigvals.map(|v| 1.0 / v.sqrt()));
        let sqrt = DMatrix::from_diagonal(&eigvals.map(f64::sqrt));
        Ok(Self {
            matrix: &inv_sqrt * eigvecs.transpose(),
            inverse: &eigvecs * sqrt,
            covariance: covariance.clone(),
        })
    }

    /// Wraps an arbitrary invertible map (no covariance attached).
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        let inverse = matrix.clone().try_inverse().ok_or(Error::SingularTransform)?;
        let n = matrix.nrows();
        Ok(Self {
            covariance: DMatrix::identity(n, n),
            matrix,
            inverse,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: DMatrix::identity(n, n),
            inverse: DMatrix::identity(n, n),
            covariance: DMatrix::identity(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        mat_vec(&self.matrix, x)
    }

    pub fn apply_inverse(&self, z: &[f64]) -> Vec<f64> {
        mat_vec(&self.inverse, z)
    }

    /// True when every row has a single non-zero entry in a distinct
    /// column, i.e. axis-aligned boxes map to axis-aligned boxes.
    pub fn preserves_boxes(&self) -> bool {
        let n = self.dim();
        let scale = self.matrix.amax();
        let mut used = vec![false; n];
        for i in 0..n {
            let nz: Vec<usize> = (0..n)
                .filter(|&j| self.matrix[(i, j)].abs() > 1e-12 * scale)
                .collect();
            if nz.len() != 1 || used[nz[0]] {
                return false;
            }
            used[nz[0]] = true;
        }
        true
    }

    /// Rectangular hull of the image of a box.
    pub fn image_rect(&self, rect: &HyperRect) -> HyperRect {
        rect_hull_points(rect.vertices().iter().map(|v| self.apply(v)))
    }

    /// Rectangular hull of the preimage of a box.
    pub fn preimage_rect(&self, rect: &HyperRect) -> HyperRect {
        rect_hull_points(rect.vertices().iter().map(|v| self.apply_inverse(v)))
    }
}

pub(crate) fn mat_vec(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * x[j]).sum())
        .collect()
}

fn rect_hull_points(mut points: impl Iterator<Item = Vec<f64>>) -> HyperRect {
    let first = points.next().expect("at least one point");
    let mut r = HyperRect {
        lo: first.clone(),
        hi: first,
    };
    for p in points {
        for (l, v) in p.iter().enumerate() {
            r.lo[l] = r.lo[l].min(*v);
            r.hi[l] = r.hi[l].max(*v);
        }
    }
    r
}

/// A labelled box in original coordinates; several boxes may share a label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionOfInterest {
    pub label: String,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl RegionOfInterest {
    pub fn new(label: impl Into<String>, lo: Vec<f64>, hi: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            lo,
            hi,
        }
    }

    pub fn rect(&self) -> Result<HyperRect> {
        HyperRect::new(self.lo.clone(), self.hi.clone())
    }
}

pub type LabelSet = BTreeSet<String>;

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(usize),
    Split { dim: usize, at: f64, lo: usize, hi: usize },
}

/// Point location over the base grid plus per-cell split trees.
#[derive(Debug, Clone, PartialEq)]
struct Locator {
    cuts: Vec<Vec<f64>>,
    roots: Vec<usize>,
    nodes: Vec<Node>,
    leaf_of: Vec<usize>,
}

impl Locator {
    fn locate(&self, z: &[f64]) -> Option<usize> {
        let mut base = 0usize;
        let mut stride = 1usize;
        for (l, cuts) in self.cuts.iter().enumerate() {
            let v = z[l];
            let (first, last) = (cuts[0], cuts[cuts.len() - 1]);
            if !(first..=last).contains(&v) {
                return None;
            }
            let k = cuts.len() - 1;
            let idx = (cuts.partition_point(|c| *c <= v) - 1).min(k - 1);
            base += idx * stride;
            stride *= k;
        }
        let mut node = self.roots[base];
        loop {
            match self.nodes[node] {
                Node::Leaf(cell) => return Some(cell),
                Node::Split { dim, at, lo, hi } => node = if z[dim] < at { lo } else { hi },
            }
        }
    }
}

/// Partition of the transformed domain into axis-aligned cells.
///
/// The unsafe state `q_u` is virtual and has index `num_cells()`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionGrid {
    domain: HyperRect,
    domain_original: HyperRect,
    cells: Vec<HyperRect>,
    labels: Vec<LabelSet>,
    propositions: Vec<String>,
    regions: Vec<(String, HyperRect)>,
    locator: Locator,
}

/// Grid over the transformed domain, additionally cut along every region
/// boundary so each region of interest is a union of cells.
pub fn build_grid(
    domain_original: &HyperRect,
    transform: &Transform,
    counts: &[usize],
    regions: &[RegionOfInterest],
) -> Result<RegionGrid> {
    let n = domain_original.dim();
    if transform.dim() != n {
        return Err(Error::Grid(format!(
            "transform is {}-dimensional, domain is {n}-dimensional",
            transform.dim()
        )));
    }
    if counts.len() != n {
        return Err(Error::Grid(format!("{} cell counts for {n} dimensions", counts.len())));
    }
    if let Some(l) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Grid(format!("zero cell count in dimension {l}")));
    }
    let domain = transform.image_rect(domain_original);
    let mut transformed_regions = Vec::with_capacity(regions.len());
    for r in regions {
        let rect = r.rect()?;
        if rect.dim() != n {
            return Err(Error::Grid(format!("region '{}' has wrong dimension", r.label)));
        }
        if !transform.preserves_boxes() {
            return Err(Error::MisalignedRegion(r.label.clone()));
        }
        transformed_regions.push((r.label.clone(), transform.image_rect(&rect)));
    }

    let mut cuts = Vec::with_capacity(n);
    for l in 0..n {
        let (lo, hi) = (domain.lo[l], domain.hi[l]);
        let width = hi - lo;
        if width <= 0.0 {
            return Err(Error::Grid(format!("degenerate domain in dimension {l}")));
        }
        let tol = 1e-9 * width;
        let mut axis: Vec<f64> = (0..=counts[l])
            .map(|k| {
                if k == counts[l] {
                    hi
                } else {
                    lo + width * k as f64 / counts[l] as f64
                }
            })
            .collect();
        for (_, rect) in &transformed_regions {
            for v in [rect.lo[l], rect.hi[l]] {
                if v <= lo + tol || v >= hi - tol {
                    continue;
                }
                match axis.iter().position(|c| (c - v).abs() <= tol) {
                    Some(k) => axis[k] = v,
                    None => axis.push(v),
                }
            }
        }
        axis.sort_by(f64::total_cmp);
        axis.dedup();
        cuts.push(axis);
    }

    let shape: Vec<usize> = cuts.iter().map(|c| c.len() - 1).collect();
    let total: usize = shape.iter().product();
    let mut cells = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut lo = vec![0.0; n];
        let mut hi = vec![0.0; n];
        for l in 0..n {
            let idx = rem % shape[l];
            rem /= shape[l];
            lo[l] = cuts[l][idx];
            hi[l] = cuts[l][idx + 1];
        }
        cells.push(HyperRect { lo, hi });
    }

    let mut propositions: Vec<String> = Vec::new();
    for (label, _) in &transformed_regions {
        if !propositions.contains(label) {
            propositions.push(label.clone());
        }
    }
    let labels = cells
        .iter()
        .map(|c| label_point(&transformed_regions, &c.center()))
        .collect();
    let locator = Locator {
        cuts,
        roots: (0..total).collect(),
        nodes: (0..total).map(Node::Leaf).collect(),
        leaf_of: (0..total).collect(),
    };
    Ok(RegionGrid {
        domain,
        domain_original: domain_original.clone(),
        cells,
        labels,
        propositions,
        regions: transformed_regions,
        locator,
    })
}

fn label_point(regions: &[(String, HyperRect)], z: &[f64]) -> LabelSet {
    regions
        .iter()
        .filter(|(_, r)| r.contains(z))
        .map(|(label, _)| label.clone())
        .collect()
}

impl RegionGrid {
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Transformed domain (rectangular hull of the image of the original one).
    pub fn domain(&self) -> &HyperRect {
        &self.domain
    }

    pub fn domain_original(&self) -> &HyperRect {
        &self.domain_original
    }

    pub fn cells(&self) -> &[HyperRect] {
        &self.cells
    }

    pub fn cell(&self, id: usize) -> &HyperRect {
        &self.cells[id]
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn unsafe_id(&self) -> usize {
        self.cells.len()
    }

    pub fn label(&self, id: usize) -> &LabelSet {
        &self.labels[id]
    }

    pub fn labels(&self) -> &[LabelSet] {
        &self.labels
    }

    pub fn propositions(&self) -> &[String] {
        &self.propositions
    }

    /// Label of an arbitrary transformed point from region membership.
    pub fn label_of_point(&self, z: &[f64]) -> LabelSet {
        label_point(&self.regions, z)
    }

    /// The point map `m`: transformed point to cell id, `None` outside the domain.
    pub fn locate(&self, z: &[f64]) -> Option<usize> {
        self.locator.locate(z)
    }

    /// Splits a cell at the midpoint of `dim`. The lower half keeps `id`,
    /// the upper half gets the returned new id. Labels are inherited.
    pub fn split_cell(&mut self, id: usize, dim: usize) -> usize {
        let at = 0.5 * (self.cells[id].lo[dim] + self.cells[id].hi[dim]);
        let (lo, hi) = self.cells[id].split(dim, at);
        let new_id = self.cells.len();
        self.cells[id] = lo;
        self.cells.push(hi);
        self.labels.push(self.labels[id].clone());

        let leaf = self.locator.leaf_of[id];
        let lo_node = self.locator.nodes.len();
        self.locator.nodes.push(Node::Leaf(id));
        self.locator.nodes.push(Node::Leaf(new_id));
        self.locator.nodes[leaf] = Node::Split {
            dim,
            at,
            lo: lo_node,
            hi: lo_node + 1,
        };
        self.locator.leaf_of[id] = lo_node;
        self.locator.leaf_of.push(lo_node + 1);
        new_id
    }
}

/// Candidate vertex set of a convex polytope (its hull is the polytope).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polytope {
    pub vertices: Vec<Vec<f64>>,
}

impl Polytope {
    pub fn new(vertices: Vec<Vec<f64>>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::InvalidRegion("polytope with no vertices".into()));
        }
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidRegion("non-finite polytope vertex".into()));
        }
        Ok(Self { vertices })
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].len()
    }
}

/// Vertices of the boxes `rect(f̌(v), f̂(v))` over the corners `v` of `cell`;
/// their convex hull contains the post image of the cell.
pub fn post_image_hull(bounds: &LinearBounds, cell: &HyperRect) -> Polytope {
    let mut vertices = Vec::with_capacity(1 << (2 * cell.dim()));
    for v in cell.vertices() {
        let lower = bounds.lower_at(&v);
        let upper = bounds.upper_at(&v);
        vertices.extend(HyperRect::spanning(&lower, &upper).vertices());
    }
    Polytope { vertices }
}

pub fn rect_hull(p: &Polytope) -> HyperRect {
    rect_hull_points(p.vertices.iter().cloned())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(a: f64, b: f64) -> HyperRect {
        HyperRect::new(vec![a, a], vec![b, b]).unwrap()
    }

    #[test]
    fn diagonal_covariance_gives_diagonal_transform() {
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]));
        let t = Transform::mahalanobis(&cov).unwrap();
        assert!((t.matrix()[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((t.matrix()[(1, 1)] - 1.0).abs() < 1e-15);
        assert_eq!(t.matrix()[(0, 1)], 0.0);
        assert!(t.preserves_boxes());
    }

    #[test]
    fn rejects_indefinite_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(Transform::mahalanobis(&cov), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn uniform_grid_cells() {
        let g = build_grid(&square(-2.0, 2.0), &Transform::identity(2), &[4, 4], &[]).unwrap();
        assert_eq!(g.num_cells(), 16);
        assert!(g.cells().iter().all(|c| (c.volume() - 1.0).abs() < 1e-12));
        assert_eq!(g.unsafe_id(), 16);
    }

    #[test]
    fn region_cuts_inserted() {
        let regions = [RegionOfInterest::new("D", vec![0.3, -2.0], vec![2.0, 2.0])];
        let g = build_grid(&square(-2.0, 2.0), &Transform::identity(2), &[2, 1], &regions).unwrap();
        // cuts at -2, 0, 0.3, 2 in dim 0
        assert_eq!(g.num_cells(), 3);
        let labelled = g.labels().iter().filter(|l| l.contains("D")).count();
        assert_eq!(labelled, 1);
    }

    #[test]
    fn zero_count_rejected() {
        assert!(build_grid(&square(0.0, 1.0), &Transform::identity(2), &[0, 2], &[]).is_err());
    }

    #[test]
    fn locate_after_split() {
        let mut g = build_grid(&square(0.0, 2.0), &Transform::identity(2), &[2, 2], &[]).unwrap();
        let new = g.split_cell(0, 1);
        assert_eq!(g.locate(&[0.5, 0.25]), Some(0));
        assert_eq!(g.locate(&[0.5, 0.75]), Some(new));
        assert_eq!(g.locate(&[1.5, 1.5]), Some(3));
        assert_eq!(g.locate(&[2.5, 0.0]), None);
    }

    #[test]
    fn rect_hull_of_triangle() {
        let p = Polytope::new(vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![1.0, 3.0]]).unwrap();
        let r = rect_hull(&p);
        assert_eq!(r.lo, vec![0.0, 0.0]);
        assert_eq!(r.hi, vec![2.0, 3.0]);
    }
}
