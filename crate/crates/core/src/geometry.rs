//! Metrics on finite-dimensional cubes, covering and packing numbers of
//! finite point clouds, and the regular grid-center quantizer.
//!
//! A cover of a finite cloud at scale `eps` is a partition into clusters whose
//! pairwise distances are all `< eps`. The strict inequality is evaluated as
//! `d < eps * (1 - CLUSTER_TOL)` so that points sitting exactly on a scale
//! boundary are classified the same way on every platform.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack applied to the strict `< eps` test of cluster diameters.
pub const CLUSTER_TOL: f64 = 1e-12;

/// Default largest cloud handed to the exact set-cover search.
pub const DEFAULT_EXACT_CAP: usize = 24;

/// Largest cloud for which greedy covering enumerates maximal clusters.
const MAX_CLIQUE_POINTS: usize = 64;
const MAX_CLIQUES: usize = 200_000;

/// A point of `[0,1]^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if let Some(c) = coords.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::InvalidPoint(format!("coordinate {c} outside [0,1]")));
        }
        Ok(Point(coords))
    }

    /// Builds a point without range validation. Callers guarantee `[0,1]`.
    pub(crate) fn from_unchecked(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }
}

/// The metric attached to a point cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricKind {
    LInfinity,
    /// `(1/n * sum |x_k - y_k|^p)^(1/p)`.
    LpNormalized { p: f64 },
    /// `sum_{|i| <= radius} 2^{-|i|} |x_i - y_i|` over the window's coordinates.
    TauTruncated { radius: usize },
}

impl MetricKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MetricKind::LpNormalized { p } if !(p >= 1.0 && p.is_finite()) => {
                Err(Error::InvalidArgument(format!("lp exponent must be >= 1, got {p}")))
            }
            _ => Ok(()),
        }
    }
}

/// Distance between two points of equal dimension.
pub fn distance(x: &Point, y: &Point, metric: MetricKind) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    metric.validate()?;
    Ok(raw_distance(x.coords(), y.coords(), metric))
}

pub(crate) fn raw_distance(x: &[f64], y: &[f64], metric: MetricKind) -> f64 {
    let diffs = x.iter().zip(y).map(|(a, b)| (a - b).abs());
    match metric {
        MetricKind::LInfinity => diffs.fold(0.0, f64::max),
        MetricKind::LpNormalized { p } => {
            if x.is_empty() {
                return 0.0;
            }
            let s: f64 = diffs.map(|d| d.powf(p)).sum();
            (s / x.len() as f64).powf(1.0 / p)
        }
        MetricKind::TauTruncated { radius } => diffs
            .take(radius.saturating_add(1))
            .enumerate()
            .map(|(i, d)| d * 0.5f64.powi(i as i32))
            .sum(),
    }
}

/// `true` when two points at distance `d` may share a cluster at scale `eps`.
#[inline]
pub fn within_scale(d: f64, eps: f64) -> bool {
    d < eps * (1.0 - CLUSTER_TOL)
}

/// A nonempty finite set of equal-dimension points with a metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    points: Vec<Point>,
    metric: MetricKind,
}

impl PointCloud {
    pub fn new(points: Vec<Point>, metric: MetricKind) -> Result<Self> {
        metric.validate()?;
        let first = points
            .first()
            .ok_or_else(|| Error::InvalidArgument("point cloud must be nonempty".into()))?;
        let dim = first.dim();
        if let Some(p) = points.iter().find(|p| p.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.dim(),
            });
        }
        Ok(PointCloud { points, metric })
    }

    /// Cloud from raw coordinate rows.
    pub fn from_rows(rows: Vec<Vec<f64>>, metric: MetricKind) -> Result<Self> {
        let points = rows.into_iter().map(Point::new).collect::<Result<Vec<_>>>()?;
        Self::new(points, metric)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn metric(&self) -> MetricKind {
        self.metric
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    pub fn diameter(&self) -> f64 {
        let mut diam = 0.0f64;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                diam = diam.max(raw_distance(a.coords(), b.coords(), self.metric));
            }
        }
        diam
    }

    fn dist(&self, i: usize, j: usize) -> f64 {
        raw_distance(self.points[i].coords(), self.points[j].coords(), self.metric)
    }

    /// Bitmask adjacency of the "may share a cluster" relation (self excluded).
    fn close_masks(&self, eps: f64) -> Vec<u64> {
        let n = self.len();
        let mut masks = vec![0u64; n];
        for i in 0..n {
            for j in i + 1..n {
                if within_scale(self.dist(i, j), eps) {
                    masks[i] |= 1 << j;
                    masks[j] |= 1 << i;
                }
            }
        }
        masks
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("scale must be positive, got {eps}")));
    }
    Ok(())
}

/// Exact minimum number of clusters of diameter `< eps` covering the cloud.
pub fn covering_number_exact(cloud: &PointCloud, eps: f64) -> Result<usize> {
    covering_number_exact_capped(cloud, eps, DEFAULT_EXACT_CAP)
}

/// [`covering_number_exact`] with an explicit size cap (at most 64).
pub fn covering_number_exact_capped(cloud: &PointCloud, eps: f64, cap: usize) -> Result<usize> {
    check_eps(eps)?;
    let cap = cap.min(64);
    if cloud.len() > cap {
        return Err(Error::CapExceeded {
            op: "covering_number_exact",
            n: cloud.dim(),
            depth: None,
            requested: cloud.len() as u128,
            cap: cap as u128,
        });
    }
    let masks = cloud.close_masks(eps);
    let incumbent = covering_number_greedy(cloud, eps)?;
    // Visit high-degree points first so that crowded clusters form early.
    let mut order: Vec<usize> = (0..cloud.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(masks[i].count_ones()));
    let mut search = CoverSearch {
        masks: &masks,
        order: &order,
        best: incumbent,
        clusters: Vec::with_capacity(cloud.len()),
    };
    search.branch(0);
    Ok(search.best)
}

struct CoverSearch<'a> {
    masks: &'a [u64],
    order: &'a [usize],
    best: usize,
    clusters: Vec<u64>,
}

impl CoverSearch<'_> {
    fn branch(&mut self, depth: usize) {
        if self.clusters.len() >= self.best {
            return;
        }
        if depth == self.order.len() {
            self.best = self.clusters.len();
            return;
        }
        let p = self.order[depth];
        let compatible = self.masks[p];
        for c in 0..self.clusters.len() {
            let members = self.clusters[c];
            if members & !compatible == 0 {
                self.clusters[c] |= 1 << p;
                self.branch(depth + 1);
                self.clusters[c] = members;
            }
        }
        if self.clusters.len() + 1 < self.best {
            self.clusters.push(1 << p);
            self.branch(depth + 1);
            self.clusters.pop();
        }
    }
}

/// Greedy set-cover upper bound on the covering number.
///
/// Small clouds use the family of maximal clusters, which carries the usual
/// `1 + ln |cloud|` guarantee against the exact value. Larger clouds fall back
/// to balls of radius `< eps/2` centered at cloud points.
pub fn covering_number_greedy(cloud: &PointCloud, eps: f64) -> Result<usize> {
    check_eps(eps)?;
    if cloud.len() <= MAX_CLIQUE_POINTS {
        let masks = cloud.close_masks(eps);
        if let Some(cliques) = maximal_cliques(&masks, MAX_CLIQUES) {
            return Ok(greedy_mask_cover(&cliques, cloud.len()));
        }
    }
    Ok(greedy_ball_cover(cloud, eps))
}

fn greedy_mask_cover(sets: &[u64], n: usize) -> usize {
    let full: u64 = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut uncovered = full;
    let mut count = 0;
    while uncovered != 0 {
        let best = sets
            .iter()
            .copied()
            .max_by(|a, b| {
                (a & uncovered)
                    .count_ones()
                    .cmp(&(b & uncovered).count_ones())
                    // prefer earlier sets on ties: max_by keeps the last maximum
                    .then(Ordering::Greater)
            })
            .expect("clique family covers every point");
        uncovered &= !best;
        count += 1;
    }
    count
}

/// Bron–Kerbosch with pivoting; `None` when the budget is exhausted.
fn maximal_cliques(adj: &[u64], budget: usize) -> Option<Vec<u64>> {
    fn bk(r: u64, mut p: u64, mut x: u64, adj: &[u64], out: &mut Vec<u64>, budget: usize) -> bool {
        if p == 0 && x == 0 {
            out.push(r);
            return out.len() <= budget;
        }
        let pivot_src = p | x;
        let pivot = (0..adj.len())
            .filter(|&u| pivot_src >> u & 1 == 1)
            .max_by_key(|&u| ((adj[u] & p).count_ones(), std::cmp::Reverse(u)))
            .unwrap();
        let mut candidates = p & !adj[pivot];
        while candidates != 0 {
            let v = candidates.trailing_zeros() as usize;
            candidates &= candidates - 1;
            if !bk(r | 1 << v, p & adj[v], x & adj[v], adj, out, budget) {
                return false;
            }
            p &= !(1 << v);
            x |= 1 << v;
        }
        true
    }
    let n = adj.len();
    let all = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut out = Vec::new();
    bk(0, all, 0, adj, &mut out, budget).then_some(out)
}

fn greedy_ball_cover(cloud: &PointCloud, eps: f64) -> usize {
    let n = cloud.len();
    let radius = eps / 2.0;
    let balls: Vec<Vec<usize>> = (0..n)
        .map(|c| (0..n).filter(|&j| within_scale(cloud.dist(c, j), radius)).collect())
        .collect();
    let mut covered = vec![false; n];
    let mut remaining = n;
    let mut count = 0;
    while remaining > 0 {
        let (best, _) = balls
            .iter()
            .enumerate()
            .map(|(c, b)| (c, b.iter().filter(|&&j| !covered[j]).count()))
            .fold((0, 0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        for &j in &balls[best] {
            if !covered[j] {
                covered[j] = true;
                remaining -= 1;
            }
        }
        count += 1;
    }
    count
}

/// Lexicographic order on coordinates; the deterministic visiting order of
/// the packing construction.
pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

/// Size of a maximal `eps`-separated subset, built greedily in lexicographic order.
pub fn packing_number(cloud: &PointCloud, eps: f64) -> Result<usize> {
    Ok(packing_set(cloud, eps)?.len())
}

/// Indices of the greedy maximal separated subset.
pub fn packing_set(cloud: &PointCloud, eps: f64) -> Result<Vec<usize>> {
    check_eps(eps)?;
    let mut order: Vec<usize> = (0..cloud.len()).collect();
    order.sort_by(|&a, &b| lex_cmp(cloud.points[a].coords(), cloud.points[b].coords()));
    let mut chosen: Vec<usize> = Vec::new();
    for i in order {
        if chosen.iter().all(|&c| !within_scale(cloud.dist(i, c), eps)) {
            chosen.push(i);
        }
    }
    Ok(chosen)
}

/// Exact covering number of a finite subset of `[0,1]` at scale `eps`.
///
/// A left-to-right sweep is optimal in one dimension, and the number of
/// clusters it opens equals the greedy packing count.
pub fn interval_covering_number(values: &[f64], eps: f64) -> usize {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut count = 0;
    let mut start = f64::NEG_INFINITY;
    for v in sorted {
        if count == 0 || !within_scale(v - start, eps) {
            start = v;
            count += 1;
        }
    }
    count
}

/// Regular partition of `[0,1]^k` into `ceil(1/eps)^k` cells with the map to
/// cell centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantizer {
    k: usize,
    eps: f64,
    cells_per_axis: usize,
}

/// Builds the grid-center quantizer of `[0,1]^k` at scale `eps`.
pub fn grid_center_quantizer(k: usize, eps: f64) -> Result<Quantizer> {
    if k == 0 {
        return Err(Error::InvalidArgument("quantizer dimension must be >= 1".into()));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidArgument(format!("quantizer scale must lie in (0,1], got {eps}")));
    }
    let mut m = (1.0 / eps).ceil() as usize;
    // 1/eps may round just above an integer; keep the smallest grid with side <= eps.
    if m > 1 && (m - 1) as f64 * eps >= 1.0 {
        m -= 1;
    }
    Ok(Quantizer {
        k,
        eps,
        cells_per_axis: m.max(1),
    })
}

impl Quantizer {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn cells_per_axis(&self) -> usize {
        self.cells_per_axis
    }

    /// `ceil(1/eps)^k`, saturating.
    pub fn num_cells(&self) -> u128 {
        (self.cells_per_axis as u128).saturating_pow(self.k as u32)
    }

    /// Cell index along one axis: half-open cells `[i/m, (i+1)/m)`, last cell closed.
    pub fn cell_index(&self, x: f64) -> usize {
        let m = self.cells_per_axis;
        let mf = m as f64;
        let mut i = ((x * mf).floor().max(0.0) as usize).min(m - 1);
        if i > 0 && x < i as f64 / mf {
            i -= 1;
        } else if i + 1 < m && x >= (i + 1) as f64 / mf {
            i += 1;
        }
        i
    }

    pub fn center_of(&self, index: usize) -> f64 {
        (index as f64 + 0.5) / self.cells_per_axis as f64
    }

    /// The center map `c`.
    pub fn quantize(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                got: x.len(),
            });
        }
        Ok(x.iter().map(|&v| self.center_of(self.cell_index(v))).collect())
    }

    /// Cell multi-index of a point, for counting distinct occupied cells.
    pub fn cell_of(&self, x: &[f64]) -> Vec<usize> {
        x.iter().map(|&v| self.cell_index(v)).collect()
    }

    pub fn centers_1d(&self) -> Vec<f64> {
        (0..self.cells_per_axis).map(|i| self.center_of(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(vals: &[f64]) -> PointCloud {
        PointCloud::from_rows(vals.iter().map(|&v| vec![v]).collect(), MetricKind::LInfinity).unwrap()
    }

    fn corners() -> PointCloud {
        PointCloud::from_rows(
            vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]],
            MetricKind::LInfinity,
        )
        .unwrap()
    }

    fn p(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    #[test]
    fn distance_examples() {
        let x = p(&[0.3, 0.7]);
        assert_eq!(distance(&x, &x, MetricKind::LInfinity).unwrap(), 0.0);
        assert_eq!(distance(&x, &x, MetricKind::LpNormalized { p: 2.0 }).unwrap(), 0.0);
        assert_eq!(
            distance(&p(&[0.0, 0.0]), &p(&[1.0, 1.0]), MetricKind::LInfinity).unwrap(),
            1.0
        );
        assert_eq!(
            distance(&p(&[0.0, 0.0]), &p(&[1.0, 0.0]), MetricKind::LpNormalized { p: 1.0 }).unwrap(),
            0.5
        );
    }

    #[test]
    fn distance_rejects_mismatch_and_bad_points() {
        assert!(matches!(
            distance(&p(&[0.0]), &p(&[0.0, 1.0]), MetricKind::LInfinity),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(Point::new(vec![1.5]).is_err());
        assert!(distance(&p(&[0.0]), &p(&[1.0]), MetricKind::LpNormalized { p: 0.5 }).is_err());
    }

    #[test]
    fn tau_truncation_grows_to_series_bound() {
        let x = p(&[0.0; 12]);
        let y = p(&[1.0; 12]);
        let mut prev = 0.0;
        for r in 0..12 {
            let d = distance(&x, &y, MetricKind::TauTruncated { radius: r }).unwrap();
            assert!(d >= prev && d <= 3.0);
            prev = d;
        }
    }

    #[test]
    fn exact_covering_examples() {
        assert_eq!(covering_number_exact(&line(&[0.4]), 1e-6).unwrap(), 1);
        let five = line(&[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(covering_number_exact(&five, 0.3).unwrap(), 3);
        assert_eq!(covering_number_exact(&corners(), 0.5).unwrap(), 4);
    }

    #[test]
    fn exact_covering_respects_cap() {
        let vals: Vec<f64> = (0..30).map(|i| i as f64 / 29.0).collect();
        assert!(matches!(
            covering_number_exact(&line(&vals), 0.1),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn greedy_covering_examples() {
        assert_eq!(covering_number_greedy(&line(&[0.2]), 0.1).unwrap(), 1);
        let five = line(&[0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = covering_number_greedy(&five, 0.3).unwrap();
        assert!((3..=4).contains(&g));
        assert_eq!(covering_number_greedy(&corners(), 1.5).unwrap(), 1);
    }

    #[test]
    fn ball_fallback_is_a_valid_cover() {
        let vals: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let cloud = line(&vals);
        let g = covering_number_greedy(&cloud, 0.1).unwrap();
        assert!(g >= interval_covering_number(&vals, 0.1));
    }

    #[test]
    fn packing_examples() {
        assert_eq!(packing_number(&line(&[0.9]), 0.5).unwrap(), 1);
        let five = line(&[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(packing_set(&five, 0.3).unwrap(), vec![0, 2, 4]);
        assert_eq!(packing_number(&corners(), 0.5).unwrap(), 4);
    }

    #[test]
    fn interval_cover_matches_exact() {
        let vals = [0.0, 0.1, 0.15, 0.4, 0.41, 0.9, 1.0];
        for eps in [0.05, 0.1, 0.2, 0.5, 1.2] {
            assert_eq!(
                interval_covering_number(&vals, eps),
                covering_number_exact(&line(&vals), eps).unwrap()
            );
        }
    }

    #[test]
    fn quantizer_examples() {
        let q = grid_center_quantizer(1, 0.5).unwrap();
        assert_eq!(q.cells_per_axis(), 2);
        assert_eq!(q.centers_1d(), vec![0.25, 0.75]);
        assert_eq!(q.quantize(&[0.3]).unwrap(), vec![0.25]);

        let q = grid_center_quantizer(1, 0.3).unwrap();
        assert_eq!(q.cells_per_axis(), 4);
        assert_eq!(q.quantize(&[0.5]).unwrap(), vec![0.625]);
        assert_eq!(q.quantize(&[1.0]).unwrap(), vec![0.875]);

        let q = grid_center_quantizer(2, 1.0).unwrap();
        assert_eq!(q.num_cells(), 1);
        assert_eq!(q.quantize(&[0.9, 0.01]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn quantizer_cell_count_for_common_scales() {
        assert_eq!(grid_center_quantizer(1, 0.1).unwrap().cells_per_axis(), 10);
        assert_eq!(grid_center_quantizer(1, 0.03).unwrap().cells_per_axis(), 34);
        assert_eq!(grid_center_quantizer(1, 1.0 / 3.0).unwrap().cells_per_axis(), 3);
        assert!(grid_center_quantizer(1, 0.0).is_err());
        assert!(grid_center_quantizer(0, 0.5).is_err());
    }
}
