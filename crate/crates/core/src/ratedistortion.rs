//! Block rate-distortion functions of window laws under the average
//! absolute-difference distortion, computed with Blahut–Arimoto.
//!
//! Rates are in nats per symbol unless a field says otherwise.

use rayon::prelude::*;
use serde::Serialize;

use crate::dimensions::DimensionEstimate;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::subshifts::{window_law, MeasureModel, WindowLaw};

/// Largest atoms-by-reproductions table a solve will allocate.
pub const MAX_KERNEL_ENTRIES: u128 = 1 << 24;
const BRACKET_RTOL: f64 = 1e-10;
/// Masses and kernel weights below this are treated as exact zeros.
const NEGLIGIBLE: f64 = 1e-200;
const COARSE_ITER: usize = 300;
const STAGED_BA_TOL: f64 = 1e-6;
pub const DEFAULT_BA_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const DEFAULT_DISTORTION_TOL: f64 = 1e-7;
const MASS_TOL: f64 = 1e-12;
const MAX_BISECTIONS: usize = 200;

/// Block distortion `(1/n) sum |x_k - y_k|`.
pub fn block_distortion(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>() / x.len() as f64
}

/// Mutual information in nats of a joint probability table `p[x][y]`.
pub fn mutual_information_table(p: &[Vec<f64>]) -> Result<f64> {
    let cols = p.first().map_or(0, Vec::len);
    if p.is_empty() || cols == 0 || p.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidJoint("joint table must be a nonempty rectangle".into()));
    }
    if p.iter().flatten().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidJoint("joint entries must be finite and nonnegative".into()));
    }
    let total: f64 = p.iter().flatten().sum();
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::InvalidJoint(format!("joint mass is {total}, expected 1")));
    }
    let px: Vec<f64> = p.iter().map(|r| r.iter().sum()).collect();
    let mut py = vec![0.0; cols];
    for row in p {
        for (acc, v) in py.iter_mut().zip(row) {
            *acc += v;
        }
    }
    let mut mi = 0.0;
    for (row, &a) in p.iter().zip(&px) {
        for (&v, &b) in row.iter().zip(&py) {
            if v > 0.0 {
                // logs taken separately: a * b can underflow while v does not
                mi += v * (v.ln() - a.ln() - b.ln());
            }
        }
    }
    Ok(mi.max(0.0))
}

/// Finite joint law of a source window `X` and a reproduction `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    sources: Vec<Point>,
    reproductions: Vec<Point>,
    probs: Vec<Vec<f64>>,
}

impl JointDistribution {
    /// `probs[i][j]` is the mass of `(law.atoms[i], reproductions[j])`; rows
    /// must sum to the atom masses.
    pub fn new(law: &WindowLaw, reproductions: Vec<Point>, probs: Vec<Vec<f64>>) -> Result<Self> {
        if probs.len() != law.len() || probs.iter().any(|r| r.len() != reproductions.len()) {
            return Err(Error::InvalidJoint("table shape does not match atoms".into()));
        }
        if let Some(y) = reproductions.iter().find(|y| y.dim() != law.n) {
            return Err(Error::DimensionMismatch {
                expected: law.n,
                got: y.dim(),
            });
        }
        for (row, atom) in probs.iter().zip(&law.atoms) {
            let m: f64 = row.iter().sum();
            if (m - atom.prob).abs() > MASS_TOL {
                return Err(Error::InvalidJoint(format!(
                    "row mass {m} differs from atom mass {}",
                    atom.prob
                )));
            }
        }
        let joint = JointDistribution {
            sources: law.points(),
            reproductions,
            probs,
        };
        mutual_information_table(&joint.probs)?;
        Ok(joint)
    }

    pub fn probs(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn sources(&self) -> &[Point] {
        &self.sources
    }

    pub fn reproductions(&self) -> &[Point] {
        &self.reproductions
    }

    pub fn y_marginal(&self) -> Vec<f64> {
        let mut py = vec![0.0; self.reproductions.len()];
        for row in &self.probs {
            for (acc, v) in py.iter_mut().zip(row) {
                *acc += v;
            }
        }
        py
    }

    pub fn mean_distortion(&self) -> f64 {
        let mut total = 0.0;
        for (x, row) in self.sources.iter().zip(&self.probs) {
            for (y, &v) in self.reproductions.iter().zip(row) {
                if v > 0.0 {
                    total += v * block_distortion(x.coords(), y.coords());
                }
            }
        }
        total
    }
}

/// `I(X;Y)` in nats.
pub fn mutual_information(joint: &JointDistribution) -> f64 {
    mutual_information_table(&joint.probs).expect("validated at construction")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RdOptions {
    /// Tolerance on the gap between the Blahut upper and lower rate bounds.
    pub ba_tol: f64,
    pub max_iter: usize,
    /// Accepted shortfall below the distortion target.
    pub distortion_tol: f64,
}

impl Default for RdOptions {
    fn default() -> Self {
        RdOptions {
            ba_tol: DEFAULT_BA_TOL,
            max_iter: DEFAULT_MAX_ITER,
            distortion_tol: DEFAULT_DISTORTION_TOL,
        }
    }
}

/// A point on a block rate-distortion curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RdPoint {
    pub n: usize,
    /// `I(X;Y)/n` in nats.
    pub rate: f64,
    pub rate_bits: f64,
    pub distortion: f64,
    /// Multiplier; `-inf` marks the minimum-distortion endpoint and NaN a
    /// mixture of two multipliers across a linear stretch of the curve.
    pub s: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Whether the Lagrangian objective never increased across iterations.
    pub monotone: bool,
}

impl RdPoint {
    fn new(n: usize, mi: f64, distortion: f64, s: f64, iterations: usize, converged: bool, monotone: bool) -> Self {
        let rate = mi / n as f64;
        RdPoint {
            n,
            rate,
            rate_bits: rate / std::f64::consts::LN_2,
            distortion,
            s,
            iterations,
            converged,
            monotone,
        }
    }
}

pub const RD_CSV_HEADER: [&str; 9] = [
    "measure_id",
    "n",
    "eps",
    "rate_nats",
    "rate_bits",
    "distortion",
    "s",
    "iterations",
    "converged",
];

impl RdPoint {
    pub fn csv_row(&self, measure_id: &str, eps: f64) -> Vec<String> {
        vec![
            measure_id.to_string(),
            self.n.to_string(),
            eps.to_string(),
            self.rate.to_string(),
            self.rate_bits.to_string(),
            self.distortion.to_string(),
            self.s.to_string(),
            self.iterations.to_string(),
            self.converged.to_string(),
        ]
    }
}

/// Distortion matrix and source masses shared by every multiplier.
struct Problem {
    n: usize,
    p: Vec<f64>,
    /// Row-major `|X| x |Y|`.
    d: Vec<f64>,
    cols: usize,
    row_min: Vec<f64>,
}

/// Converged channel at one multiplier.
#[derive(Clone)]
struct Solved {
    channel: Vec<f64>,
    q: Vec<f64>,
    point: RdPoint,
}

impl Problem {
    fn new(law: &WindowLaw, reproductions: &[Point]) -> Result<Self> {
        if reproductions.is_empty() {
            return Err(Error::InvalidArgument("reproduction set is empty".into()));
        }
        if let Some(y) = reproductions.iter().find(|y| y.dim() != law.n) {
            return Err(Error::DimensionMismatch {
                expected: law.n,
                got: y.dim(),
            });
        }
        let cols = reproductions.len();
        let entries = law.len() as u128 * cols as u128;
        if entries > MAX_KERNEL_ENTRIES {
            return Err(Error::CapExceeded {
                op: "rd_kernel",
                n: law.n,
                depth: None,
                requested: entries,
                cap: MAX_KERNEL_ENTRIES,
            });
        }
        let mut d = Vec::with_capacity(law.len() * cols);
        let mut row_min = Vec::with_capacity(law.len());
        for atom in &law.atoms {
            let start = d.len();
            d.extend(reproductions.iter().map(|y| block_distortion(atom.point.coords(), y.coords())));
            row_min.push(d[start..].iter().copied().fold(f64::INFINITY, f64::min));
        }
        Ok(Problem {
            n: law.n,
            p: law.probs(),
            d,
            cols,
            row_min,
        })
    }

    fn rows(&self) -> usize {
        self.p.len()
    }

    /// Distortion of the best constant reproduction and its index.
    fn best_constant(&self) -> (usize, f64) {
        (0..self.cols)
            .map(|j| {
                let v: f64 = (0..self.rows()).map(|i| self.p[i] * self.d[i * self.cols + j]).sum();
                (j, v)
            })
            .fold((0, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best })
    }

    fn min_distortion(&self) -> f64 {
        self.p.iter().zip(&self.row_min).map(|(p, m)| p * m).sum()
    }

    /// Row-shifted kernel `exp(s (d_ij - min_j d_ij))`; at `s = -inf` the
    /// indicator of the nearest reproductions.
    fn kernel(&self, s: f64) -> Vec<f64> {
        let mut e = Vec::with_capacity(self.d.len());
        for i in 0..self.rows() {
            let m = self.row_min[i];
            for j in 0..self.cols {
                let excess = self.d[i * self.cols + j] - m;
                e.push(if s == f64::NEG_INFINITY {
                    if excess <= 1e-15 { 1.0 } else { 0.0 }
                } else {
                    let k = (s * excess).exp();
                    if k < NEGLIGIBLE { 0.0 } else { k }
                });
            }
        }
        e
    }

    fn evaluate(&self, channel: &[f64], s: f64, iterations: usize, converged: bool, monotone: bool) -> RdPoint {
        let table: Vec<Vec<f64>> = channel.chunks(self.cols).map(<[f64]>::to_vec).collect();
        let mi = mutual_information_table(&table).unwrap_or(0.0);
        let distortion = channel.iter().zip(&self.d).map(|(c, d)| c * d).sum();
        RdPoint::new(self.n, mi, distortion, s, iterations, converged, monotone)
    }

    fn constant_point(&self) -> Solved {
        let (j, _) = self.best_constant();
        let mut channel = vec![0.0; self.d.len()];
        for i in 0..self.rows() {
            channel[i * self.cols + j] = self.p[i];
        }
        let mut q = vec![0.0; self.cols];
        q[j] = 1.0;
        let distortion = channel.iter().zip(&self.d).map(|(c, d)| c * d).sum();
        let point = RdPoint::new(self.n, 0.0, distortion, 0.0, 0, true, true);
        Solved { channel, q, point }
    }

    fn solve(&self, s: f64, warm: Option<&[f64]>, opts: &RdOptions) -> Solved {
        if s == 0.0 {
            return self.constant_point();
        }
        let e = self.kernel(s);
        let rows = self.rows();
        let mut q: Vec<f64> = match warm {
            Some(w) if w.iter().all(|&v| v > 0.0) => w.to_vec(),
            // a warm start with zeros would pin those outputs at zero forever
            Some(w) => w.iter().map(|&v| 0.9 * v + 0.1 / self.cols as f64).collect(),
            None => vec![1.0 / self.cols as f64; self.cols],
        };
        let mut z = vec![0.0; rows];
        let mut c = vec![0.0; self.cols];
        let mut prev_obj = f64::INFINITY;
        let mut monotone = true;
        let mut converged = false;
        let mut iterations = 0;
        while iterations < opts.max_iter {
            iterations += 1;
            for i in 0..rows {
                let row = &e[i * self.cols..(i + 1) * self.cols];
                z[i] = row.iter().zip(&q).map(|(a, b)| a * b).sum();
            }
            c.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..rows {
                if self.p[i] == 0.0 {
                    continue;
                }
                let w = self.p[i] / z[i];
                let row = &e[i * self.cols..(i + 1) * self.cols];
                for (acc, &k) in c.iter_mut().zip(row) {
                    *acc += w * k;
                }
            }
            let obj: f64 = -(0..rows)
                .filter(|&i| self.p[i] > 0.0)
                .map(|i| self.p[i] * z[i].ln())
                .sum::<f64>();
            if obj > prev_obj + 1e-12 * (1.0 + prev_obj.abs()) {
                monotone = false;
            }
            prev_obj = obj;
            let max_log = c.iter().filter(|&&v| v > 0.0).map(|v| v.ln()).fold(f64::NEG_INFINITY, f64::max);
            let avg_log: f64 = q
                .iter()
                .zip(&c)
                .filter(|(&qj, &cj)| qj > 0.0 && cj > 0.0)
                .map(|(qj, cj)| qj * cj * cj.ln())
                .sum();
            if max_log - avg_log < opts.ba_tol {
                converged = true;
                break;
            }
            let mut total = 0.0;
            for (qj, cj) in q.iter_mut().zip(&c) {
                *qj *= cj;
                total += *qj;
            }
            // flushing dying outputs keeps the loop out of subnormal arithmetic
            q.iter_mut().for_each(|v| {
                *v /= total;
                if *v < NEGLIGIBLE {
                    *v = 0.0;
                }
            });
        }
        let mut channel = vec![0.0; self.d.len()];
        for i in 0..rows {
            let zi: f64 = (0..self.cols).map(|j| q[j] * e[i * self.cols + j]).sum();
            for j in 0..self.cols {
                channel[i * self.cols + j] = self.p[i] * q[j] * e[i * self.cols + j] / zi;
            }
        }
        let point = self.evaluate(&channel, s, iterations, converged, monotone);
        Solved { channel, q, point }
    }
}

/// One Blahut–Arimoto run at multiplier `s <= 0` (`-inf` allowed).
pub fn ba_solve(law: &WindowLaw, reproductions: &[Point], s: f64, opts: &RdOptions) -> Result<RdPoint> {
    check_options(opts)?;
    if !(s <= 0.0) {
        return Err(Error::InvalidArgument(format!("multiplier must be <= 0, got {s}")));
    }
    Ok(Problem::new(law, reproductions)?.solve(s, None, opts).point)
}

fn check_options(opts: &RdOptions) -> Result<()> {
    if !(opts.ba_tol > 0.0) || !(opts.distortion_tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::InvalidArgument("tolerances and iteration budget must be positive".into()));
    }
    Ok(())
}

/// Rate-distortion point of `law` at distortion `eps` over a finite reproduction set.
///
/// Bisects the multiplier until the achieved distortion lies in
/// `[eps - distortion_tol, eps]`. Across a linear stretch of the curve the two
/// bracketing channels are mixed to meet `eps` exactly.
pub fn rd_law(law: &WindowLaw, reproductions: &[Point], eps: f64, opts: &RdOptions) -> Result<RdPoint> {
    check_options(opts)?;
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("distortion target must be >= 0, got {eps}")));
    }
    if law.len() as u128 * reproductions.len() as u128 > MAX_KERNEL_ENTRIES {
        // Targets at or above the constant-reproduction distortion need no table.
        if let Some(d_const) = reproductions
            .par_iter()
            .map(|y| law.atoms.iter().map(|a| a.prob * block_distortion(a.point.coords(), y.coords())).sum::<f64>())
            .min_by(|a, b| a.total_cmp(b))
        {
            if eps >= d_const && reproductions.iter().all(|y| y.dim() == law.n) {
                return Ok(RdPoint::new(law.n, 0.0, d_const, 0.0, 0, true, true));
            }
        }
    }
    let problem = Problem::new(law, reproductions)?;
    let (_, d_const) = problem.best_constant();
    if eps >= d_const {
        return Ok(problem.constant_point().point);
    }
    let d_min = problem.min_distortion();
    if eps < d_min - 1e-15 {
        return Err(Error::DistortionUnreachable { eps, min: d_min });
    }
    let endpoint = problem.solve(f64::NEG_INFINITY, None, opts);
    if endpoint.point.distortion >= eps - opts.distortion_tol {
        return Ok(endpoint.point);
    }

    // Bracket search runs on a short iteration budget, bisection on a looser
    // rate tolerance; the surviving bracket ends are then re-solved at the
    // requested tolerance and bisection resumes if they moved across eps.
    let coarse = RdOptions {
        max_iter: opts.max_iter.min(COARSE_ITER),
        ..*opts
    };
    let staged = RdOptions {
        ba_tol: opts.ba_tol.max(STAGED_BA_TOL),
        ..*opts
    };
    let mut hi = problem.constant_point();
    let mut lo = problem.solve(-1.0, None, &coarse);
    while lo.point.distortion > eps {
        let s = 2.0 * lo.point.s;
        if s < -1e12 {
            lo = endpoint.clone();
            break;
        }
        let next = problem.solve(s, Some(&lo.q), &coarse);
        hi = std::mem::replace(&mut lo, next);
    }
    for stage in [&staged, opts] {
        let refine = |x: Solved| {
            if x.point.s.is_finite() && x.point.s != 0.0 {
                problem.solve(x.point.s, Some(&x.q), stage)
            } else {
                x
            }
        };
        hi = refine(hi);
        lo = refine(lo);
        if hi.point.distortion <= eps {
            lo = std::mem::replace(&mut hi, problem.constant_point());
        }
        if lo.point.distortion > eps {
            lo = endpoint.clone();
        }
        (lo, hi) = bisect(&problem, lo, hi, eps, stage);
    }
    if lo.point.distortion >= eps - opts.distortion_tol {
        return Ok(lo.point);
    }
    Ok(mix(&problem, &lo, &hi, eps))
}

/// Narrows `lo.s < hi.s` (distortions on either side of `eps`) until `lo`
/// meets the distortion tolerance or the multipliers agree.
fn bisect(problem: &Problem, mut lo: Solved, mut hi: Solved, eps: f64, opts: &RdOptions) -> (Solved, Solved) {
    for _ in 0..MAX_BISECTIONS {
        if lo.point.distortion >= eps - opts.distortion_tol {
            break;
        }
        let (a, b) = (lo.point.s, hi.point.s);
        let mid = if a == f64::NEG_INFINITY { 2.0 * b.min(-1.0) } else { 0.5 * (a + b) };
        // Once the slopes agree to ~1e-10 the chord between the two channels
        // is within rounding of the curve.
        if !(mid > a && mid < b) || (b - a) <= BRACKET_RTOL * a.abs() {
            break;
        }
        let warm = if a.is_finite() && mid - a < b - mid { &lo.q } else { &hi.q };
        let next = problem.solve(mid, Some(warm), opts);
        if next.point.distortion > eps {
            hi = next;
        } else {
            lo = next;
        }
    }
    (lo, hi)
}

fn mix(problem: &Problem, lo: &Solved, hi: &Solved, eps: f64) -> RdPoint {
    let (d_lo, d_hi) = (lo.point.distortion, hi.point.distortion);
    let theta = ((d_hi - eps) / (d_hi - d_lo)).clamp(0.0, 1.0);
    let channel: Vec<f64> = lo
        .channel
        .iter()
        .zip(&hi.channel)
        .map(|(a, b)| theta * a + (1.0 - theta) * b)
        .collect();
    problem.evaluate(
        &channel,
        f64::NAN,
        lo.point.iterations + hi.point.iterations,
        lo.point.converged && hi.point.converged,
        lo.point.monotone && hi.point.monotone,
    )
}

/// Block rate-distortion function at window length `n`, with the source
/// window atoms as reproduction alphabet.
pub fn rd_block(measure: &MeasureModel, n: usize, eps: f64, opts: &RdOptions) -> Result<RdPoint> {
    let law = window_law(measure, n)?;
    rd_law(&law, &law.points(), eps, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RdLimit {
    pub eps: f64,
    /// Minimum of the block values over the grid.
    pub estimate: f64,
    /// `(n_k R_k - n_{k-1} R_{k-1}) / (n_k - n_{k-1})` at the two largest lengths.
    pub increment_estimate: Option<f64>,
    pub sequence: Vec<RdPoint>,
}

/// Estimate of `inf_n R(n, eps)` over a grid of window lengths.
pub fn rd_limit_estimate(measure: &MeasureModel, eps: f64, n_grid: &[usize], opts: &RdOptions) -> Result<RdLimit> {
    if n_grid.is_empty() {
        return Err(Error::InvalidArgument("length grid must be nonempty".into()));
    }
    let mut ns = n_grid.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let sequence = ns
        .par_iter()
        .map(|&n| rd_block(measure, n, eps, opts))
        .collect::<Result<Vec<_>>>()?;
    let estimate = sequence.iter().map(|p| p.rate).fold(f64::INFINITY, f64::min);
    let increment_estimate = match sequence.as_slice() {
        [.., a, b] => Some((b.n as f64 * b.rate - a.n as f64 * a.rate) / (b.n - a.n) as f64),
        _ => None,
    };
    Ok(RdLimit {
        eps,
        estimate,
        increment_estimate,
        sequence,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    /// Supremum over the measure grid of `R(eps)/log(1/eps)`; a lower bound on
    /// the supremum over all invariant measures.
    pub sup_ratio: f64,
    pub argmax: String,
    pub per_measure: Vec<(String, f64)>,
    /// Metric mean dimension ratio at the same scale, when joined.
    pub mdim_ratio: Option<f64>,
}

/// Sup over a measure grid of `R(eps)/log(1/eps)` at each scale.
pub fn variational_sweep(
    measures: &[(String, MeasureModel)],
    eps_grid: &[f64],
    n_grid: &[usize],
    opts: &RdOptions,
) -> Result<Vec<SweepRow>> {
    if measures.is_empty() || eps_grid.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::InvalidArgument("need measures and scales in (0,1)".into()));
    }
    if let Some((id, _)) = measures.windows(2).find(|w| w[0].1.model() != w[1].1.model()).map(|w| &w[1]) {
        return Err(Error::InvalidMeasure(format!("measure {id} lives on a different model")));
    }
    let cells: Vec<(usize, usize)> = (0..eps_grid.len())
        .flat_map(|e| (0..measures.len()).map(move |m| (e, m)))
        .collect();
    let rates = cells
        .par_iter()
        .map(|&(e, m)| rd_limit_estimate(&measures[m].1, eps_grid[e], n_grid, opts).map(|r| r.estimate))
        .collect::<Result<Vec<_>>>()?;
    Ok(eps_grid
        .iter()
        .enumerate()
        .map(|(e, &eps)| {
            let per_measure: Vec<(String, f64)> = measures
                .iter()
                .enumerate()
                .map(|(m, (id, _))| (id.clone(), rates[e * measures.len() + m]))
                .collect();
            let log_inv = (1.0 / eps).ln();
            let (argmax, best) = per_measure
                .iter()
                .fold((String::new(), f64::NEG_INFINITY), |acc, (id, r)| {
                    if *r > acc.1 { (id.clone(), *r) } else { acc }
                });
            SweepRow {
                eps,
                sup_ratio: best / log_inv,
                argmax,
                per_measure,
                mdim_ratio: None,
            }
        })
        .collect())
}

/// Fill `mdim_ratio` from the largest-n rows of a profile at matching scales.
pub fn join_mdim(rows: &mut [SweepRow], profile: &DimensionEstimate) {
    let n_max = profile.table.iter().map(|r| r.n).max();
    for row in rows {
        row.mdim_ratio = profile
            .table
            .iter()
            .find(|r| Some(r.n) == n_max && (r.eps - row.eps).abs() <= 1e-12 * row.eps)
            .map(|r| r.ratio);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subshifts::{entropy, Alphabet, SubshiftModel};

    fn h2(p: f64) -> f64 {
        entropy(&[p, 1.0 - p])
    }

    fn bernoulli(p: f64) -> MeasureModel {
        MeasureModel::bernoulli(SubshiftModel::full_shift(Alphabet::binary()), vec![1.0 - p, p]).unwrap()
    }

    fn sticky(stay: f64) -> MeasureModel {
        let t = vec![vec![stay, 1.0 - stay], vec![1.0 - stay, stay]];
        MeasureModel::markov_stationary(SubshiftModel::full_shift(Alphabet::binary()), t).unwrap()
    }

    #[test]
    fn mutual_information_examples() {
        let product = vec![vec![0.12, 0.28], vec![0.18, 0.42]];
        assert!(mutual_information_table(&product).unwrap().abs() < 1e-15);

        let identity: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4).map(|j| if i == j { 0.25 } else { 0.0 }).collect())
            .collect();
        assert!((mutual_information_table(&identity).unwrap() - 4f64.ln()).abs() < 1e-12);

        let joint = vec![vec![0.4, 0.1], vec![0.1, 0.4]];
        // direct summation
        let oracle = 2.0 * 0.4 * (0.4f64 / 0.25).log2() + 2.0 * 0.1 * (0.1f64 / 0.25).log2();
        let bits = mutual_information_table(&joint).unwrap() / std::f64::consts::LN_2;
        assert!((bits - oracle).abs() < 1e-12);
        assert!((bits - 0.278).abs() < 1e-3);

        assert!(mutual_information_table(&[vec![0.5, 0.4]]).is_err());
        assert!(mutual_information_table(&[vec![1.2, -0.2]]).is_err());
    }

    #[test]
    fn joint_validates_marginal() {
        let law = window_law(&bernoulli(0.3), 1).unwrap();
        let ys = law.points();
        assert!(JointDistribution::new(&law, ys.clone(), vec![vec![0.7, 0.0], vec![0.0, 0.3]]).is_ok());
        assert!(JointDistribution::new(&law, ys.clone(), vec![vec![0.5, 0.0], vec![0.0, 0.5]]).is_err());
        let j = JointDistribution::new(&law, ys, vec![vec![0.6, 0.1], vec![0.0, 0.3]]).unwrap();
        assert!((j.mean_distortion() - 0.1).abs() < 1e-15);
        assert!(mutual_information(&j) <= entropy(&[0.7, 0.3]));
    }

    #[test]
    fn slope_zero_endpoint() {
        let law = window_law(&bernoulli(0.3), 1).unwrap();
        let p = ba_solve(&law, &law.points(), 0.0, &RdOptions::default()).unwrap();
        assert_eq!(p.rate, 0.0);
        assert!((p.distortion - 0.3).abs() < 1e-15);
    }

    #[test]
    fn lossless_endpoint() {
        let mu = sticky(0.8);
        let law = window_law(&mu, 3).unwrap();
        for s in [-200.0, f64::NEG_INFINITY] {
            let p = ba_solve(&law, &law.points(), s, &RdOptions::default()).unwrap();
            assert!((p.rate * 3.0 - law.entropy()).abs() < 1e-6, "{p:?}");
            assert!(p.distortion < 1e-6);
        }
    }

    #[test]
    fn binary_hamming_closed_form() {
        for (p, d) in [(0.5, 0.1), (0.3, 0.05), (0.3, 0.1), (0.3, 0.2)] {
            let r = rd_block(&bernoulli(p), 1, d, &RdOptions::default()).unwrap();
            let oracle = (h2(p) - h2(d)) / std::f64::consts::LN_2;
            assert!((r.rate_bits - oracle).abs() < 1e-5, "p={p} d={d} {r:?}");
            assert!(r.distortion <= d && r.distortion >= d - 1e-7);
            assert!(r.monotone);
        }
        let r = rd_block(&bernoulli(0.5), 1, 0.1, &RdOptions::default()).unwrap();
        assert!((r.rate_bits - 0.5310).abs() < 1e-4);
    }

    #[test]
    fn iid_is_single_letter() {
        let r2 = rd_block(&bernoulli(0.5), 2, 0.1, &RdOptions::default()).unwrap();
        let oracle = (h2(0.5) - h2(0.1)) / std::f64::consts::LN_2;
        assert!((r2.rate_bits - oracle).abs() < 1e-5, "{r2:?}");
    }

    #[test]
    fn large_distortion_gives_zero_rate() {
        let r = rd_block(&bernoulli(0.3), 2, 0.4, &RdOptions::default()).unwrap();
        assert_eq!(r.rate, 0.0);
    }

    #[test]
    fn unreachable_distortion() {
        let law = window_law(&bernoulli(0.5), 1).unwrap();
        let ys = vec![Point::new(vec![0.5]).unwrap()];
        assert!(matches!(
            rd_law(&law, &ys, 0.1, &RdOptions::default()),
            Err(Error::DistortionUnreachable { .. })
        ));
    }

    #[test]
    fn memory_lowers_the_rate() {
        let opts = RdOptions::default();
        let iid = rd_limit_estimate(&bernoulli(0.5), 0.05, &[1, 2, 3, 4], &opts).unwrap();
        let markov = rd_limit_estimate(&sticky(0.9), 0.05, &[1, 2, 3, 4], &opts).unwrap();
        assert!(iid.sequence.iter().all(|p| (p.rate - iid.sequence[0].rate).abs() < 1e-6));
        assert!((iid.estimate - iid.sequence[0].rate).abs() < 1e-6);
        assert!(markov.estimate < iid.estimate - 1e-3);
    }

    #[test]
    fn lossless_limit_tracks_entropy_rate() {
        let mu = sticky(0.9);
        let lim = rd_limit_estimate(&mu, 1e-6, &[7, 8], &RdOptions::default()).unwrap();
        assert!((lim.increment_estimate.unwrap() - mu.entropy_rate()).abs() < 0.01);
    }

    #[test]
    fn nonincreasing_and_convex_in_eps() {
        let mu = sticky(0.8);
        let opts = RdOptions::default();
        let pts: Vec<RdPoint> = [0.02, 0.05, 0.1, 0.15, 0.2, 0.3]
            .iter()
            .map(|&e| rd_block(&mu, 3, e, &opts).unwrap())
            .collect();
        for w in pts.windows(2) {
            assert!(w[1].rate <= w[0].rate + 1e-9);
        }
        for w in pts.windows(3) {
            let t = (w[1].distortion - w[0].distortion) / (w[2].distortion - w[0].distortion);
            let chord = w[0].rate + t * (w[2].rate - w[0].rate);
            assert!(w[1].rate <= chord + 1e-6);
        }
    }

    #[test]
    fn sweep_examples() {
        let opts = RdOptions::default();
        let grid: Vec<(String, MeasureModel)> =
            (1..=9).map(|i| (format!("p{i}"), bernoulli(i as f64 / 10.0))).collect();
        let rows = variational_sweep(&grid, &[0.1, 0.01, 0.001], &[1], &opts).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].sup_ratio < w[0].sup_ratio);
        }
        for r in &rows {
            assert!(r.sup_ratio <= 2f64.ln() / (1.0 / r.eps).ln() + 1e-12);
        }

        let point = SubshiftModel::full_shift(Alphabet::new(vec![0.5]).unwrap());
        let fixed = vec![("fixed".to_string(), MeasureModel::uniform(point).unwrap())];
        let rows = variational_sweep(&fixed, &[0.1, 0.01], &[1, 2], &opts).unwrap();
        assert!(rows.iter().all(|r| r.sup_ratio == 0.0));
    }
}
