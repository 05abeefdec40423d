//! Box dimension fits, metric mean dimension through window covering
//! numbers, mean box dimension, and structured upper bounds on the measurable
//! mean box dimension.
//!
//! Every estimate keeps the raw `(n, eps, count)` table it was built from.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{
    covering_number_exact_capped, covering_number_greedy, interval_covering_number, packing_number,
    within_scale, DEFAULT_EXACT_CAP,
};
use crate::subshifts::{window_law, MeasureModel, SubshiftModel, DEFAULT_WINDOW_CAP};

/// Snap applied before flooring mesh coordinates, so grid-aligned letters
/// land in the cell they start.
const MESH_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    BoxFit,
    MdimProfile,
    MbdimLimit,
    RbUpper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitDiagnostics {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the log-log regression.
    pub residual: f64,
}

/// One covering count of a window set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CountRow {
    pub n: usize,
    pub eps: f64,
    pub depth: Option<u32>,
    pub count: f64,
    /// `false` when `count` is a greedy upper bound that the packing bound did not match.
    pub exact: bool,
    /// `log count / (n log(1/eps))`, or the per-n fitted dimension for mean box estimates.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionEstimate {
    pub value: f64,
    pub method: Method,
    pub eps_grid: Vec<f64>,
    pub n_grid: Vec<usize>,
    pub table: Vec<CountRow>,
    pub fit: Option<FitDiagnostics>,
    /// Per-n fits for mean box dimension estimates.
    pub per_n_fits: Vec<(usize, FitDiagnostics)>,
    /// Running minimum of the per-n values (upper bounds on the limit by subadditivity).
    pub upper_sequence: Vec<(usize, f64)>,
}

/// Least-squares slope of `log N` against `log(1/eps)`.
pub fn box_dimension_fit(counts: &[(f64, f64)]) -> Result<DimensionEstimate> {
    if counts.len() < 3 {
        return Err(Error::DegenerateGrid(format!(
            "need at least 3 scales, got {}",
            counts.len()
        )));
    }
    if let Some(&(eps, n)) = counts
        .iter()
        .find(|&&(eps, n)| !(eps > 0.0 && eps < 1.0) || !(n >= 1.0))
    {
        return Err(Error::DegenerateGrid(format!(
            "scales must lie in (0,1) with counts >= 1, got ({eps}, {n})"
        )));
    }
    let fit = log_log_fit(counts)?;
    let eps_grid = counts.iter().map(|c| c.0).collect();
    Ok(DimensionEstimate {
        value: fit.slope.max(0.0),
        method: Method::BoxFit,
        eps_grid,
        n_grid: Vec::new(),
        table: counts
            .iter()
            .map(|&(eps, count)| CountRow {
                n: 1,
                eps,
                depth: None,
                count,
                exact: true,
                ratio: count.ln() / (1.0 / eps).ln(),
            })
            .collect(),
        fit: Some(fit),
        per_n_fits: Vec::new(),
        upper_sequence: Vec::new(),
    })
}

fn log_log_fit(counts: &[(f64, f64)]) -> Result<FitDiagnostics> {
    let xs: Vec<f64> = counts.iter().map(|c| (1.0 / c.0).ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|c| c.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 1e-24 * (1.0 + mx * mx) {
        return Err(Error::DegenerateGrid("all scales are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / k)
        .sqrt();
    Ok(FitDiagnostics {
        slope,
        intercept,
        residual,
    })
}

/// Refinement depth used at each scale of a grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum DepthSchedule {
    /// Use the model's alphabet as given.
    #[default]
    Model,
    Fixed(u32),
    /// One depth per entry of the scale grid.
    PerScale(Vec<u32>),
}

impl DepthSchedule {
    fn depth_at(&self, index: usize) -> Result<Option<u32>> {
        match self {
            DepthSchedule::Model => Ok(None),
            DepthSchedule::Fixed(d) => Ok(Some(*d)),
            DepthSchedule::PerScale(v) => v.get(index).copied().map(Some).ok_or_else(|| {
                Error::InvalidArgument(format!("depth schedule has no entry for scale {index}"))
            }),
        }
    }
}

/// `#(pi_n(S), l_inf, eps)` with a flag telling whether the count is exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverCount {
    pub count: f64,
    pub lower: f64,
    pub exact: bool,
}

/// Covering number of the window set `pi_n(S)` in the sup norm.
///
/// Uses, in order: separation (every pair of distinct windows is at least the
/// smallest letter gap apart), the product structure of full shifts (the
/// sup-norm covering number of `A^n` is `#(A)^n` because one-dimensional
/// covering and packing numbers coincide), and finally enumeration with exact
/// or greedy set cover.
pub fn window_covering_count(model: &SubshiftModel, n: usize, eps: f64) -> Result<CoverCount> {
    if n == 0 {
        return Err(Error::InvalidArgument("window length must be >= 1".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("scale must be positive, got {eps}")));
    }
    let alphabet = model.alphabet();
    if !within_scale(alphabet.min_gap(), eps) {
        let c = model.window_count(n) as f64;
        return Ok(CoverCount {
            count: c,
            lower: c,
            exact: true,
        });
    }
    if model.is_full_shift() {
        let c = (interval_covering_number(alphabet.letters(), eps) as f64).powi(n as i32);
        return Ok(CoverCount {
            count: c,
            lower: c,
            exact: true,
        });
    }
    let cloud = model.window_set(n, DEFAULT_WINDOW_CAP)?;
    if cloud.len() <= DEFAULT_EXACT_CAP {
        let c = covering_number_exact_capped(&cloud, eps, DEFAULT_EXACT_CAP)? as f64;
        return Ok(CoverCount {
            count: c,
            lower: c,
            exact: true,
        });
    }
    let upper = covering_number_greedy(&cloud, eps)? as f64;
    let lower = packing_number(&cloud, eps)? as f64;
    Ok(CoverCount {
        count: upper,
        lower,
        exact: upper == lower,
    })
}

fn check_grids(eps_grid: &[f64], n_grid: &[usize]) -> Result<()> {
    if eps_grid.is_empty() || n_grid.is_empty() {
        return Err(Error::InvalidArgument("scale and length grids must be nonempty".into()));
    }
    if eps_grid.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::InvalidArgument("scales must lie in (0,1)".into()));
    }
    if n_grid.contains(&0) {
        return Err(Error::InvalidArgument("window lengths must be >= 1".into()));
    }
    Ok(())
}

fn count_table(
    model: &SubshiftModel,
    eps_grid: &[f64],
    n_grid: &[usize],
    depths: &DepthSchedule,
) -> Result<Vec<CountRow>> {
    let mut rows = Vec::with_capacity(eps_grid.len() * n_grid.len());
    for (i, &eps) in eps_grid.iter().enumerate() {
        let depth = depths.depth_at(i)?;
        let refined = model.with_depth(depth)?;
        for &n in n_grid {
            let c = window_covering_count(&refined, n, eps)?;
            rows.push(CountRow {
                n,
                eps,
                depth: refined.alphabet().depth(),
                count: c.count,
                exact: c.exact,
                ratio: c.count.ln() / (n as f64 * (1.0 / eps).ln()),
            });
        }
    }
    Ok(rows)
}

/// Metric mean dimension profile from sup-norm window covering numbers.
///
/// The headline value is the largest-n ratio maximized over the two smallest
/// scales of the grid.
pub fn mdim_profile(
    model: &SubshiftModel,
    eps_grid: &[f64],
    n_grid: &[usize],
    depths: &DepthSchedule,
) -> Result<DimensionEstimate> {
    check_grids(eps_grid, n_grid)?;
    let table = count_table(model, eps_grid, n_grid, depths)?;
    let n_max = *n_grid.iter().max().unwrap();
    let mut scales: Vec<f64> = eps_grid.to_vec();
    scales.sort_by(f64::total_cmp);
    scales.dedup();
    let value = scales
        .iter()
        .take(2)
        .filter_map(|&eps| {
            table
                .iter()
                .filter(|r| r.n == n_max && r.eps == eps)
                .map(|r| r.ratio)
                .reduce(f64::max)
        })
        .fold(0.0, f64::max);
    Ok(DimensionEstimate {
        value: value.max(0.0),
        method: Method::MdimProfile,
        eps_grid: eps_grid.to_vec(),
        n_grid: n_grid.to_vec(),
        table,
        fit: None,
        per_n_fits: Vec::new(),
        upper_sequence: Vec::new(),
    })
}

/// Growth rate of `log #(pi_n(S), l_inf, eps) / n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpanRate {
    pub eps: f64,
    /// Value at the largest n, in nats.
    pub rate: f64,
    pub sequence: Vec<(usize, f64)>,
    /// `min_{m <= n} log #(pi_m) / m`.
    pub upper_sequence: Vec<(usize, f64)>,
}

pub fn span_rate(model: &SubshiftModel, eps: f64, n_grid: &[usize]) -> Result<SpanRate> {
    check_grids(&[eps.min(0.5)], n_grid)?;
    let mut ns = n_grid.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let mut sequence = Vec::with_capacity(ns.len());
    for &n in &ns {
        let c = window_covering_count(model, n, eps)?;
        sequence.push((n, c.count.ln() / n as f64));
    }
    let upper_sequence = running_min(&sequence);
    Ok(SpanRate {
        eps,
        rate: sequence.last().unwrap().1,
        sequence,
        upper_sequence,
    })
}

fn running_min(seq: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let mut best = f64::INFINITY;
    seq.iter()
        .map(|&(n, v)| {
            best = best.min(v);
            (n, best)
        })
        .collect()
}

/// Mean box dimension: per-n box fits of `pi_n(S)` divided by n.
pub fn mbdim_estimate(
    model: &SubshiftModel,
    n_grid: &[usize],
    eps_grid: &[f64],
    depths: &DepthSchedule,
) -> Result<DimensionEstimate> {
    check_grids(eps_grid, n_grid)?;
    let counts = count_table(model, eps_grid, n_grid, depths)?;
    let mut ns = n_grid.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let mut per_n_fits = Vec::with_capacity(ns.len());
    let mut per_n = Vec::with_capacity(ns.len());
    let mut table = Vec::with_capacity(ns.len());
    for &n in &ns {
        let pairs: Vec<(f64, f64)> = counts.iter().filter(|r| r.n == n).map(|r| (r.eps, r.count)).collect();
        let fit = box_dimension_fit(&pairs)?;
        let diag = fit.fit.unwrap();
        let value = fit.value / n as f64;
        per_n_fits.push((n, diag));
        per_n.push((n, value));
        table.extend(counts.iter().filter(|r| r.n == n).map(|r| CountRow { ratio: value, ..*r }));
    }
    Ok(DimensionEstimate {
        value: per_n.last().unwrap().1,
        method: Method::MbdimLimit,
        eps_grid: eps_grid.to_vec(),
        n_grid: ns,
        table,
        fit: per_n_fits.last().map(|f| f.1),
        upper_sequence: running_min(&per_n),
        per_n_fits,
    })
}

/// Structured upper bound on the measurable mean box dimension at block length `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RbBound {
    pub delta: f64,
    pub n: usize,
    pub value: f64,
    /// Number of atoms kept in the minimizing candidate set.
    pub kept_atoms: usize,
    pub total_atoms: usize,
    pub kept_mass: f64,
}

/// Upper bound on `inf { dim_B(A)/n : mu(pi_n^{-1} A) >= 1 - delta }`.
///
/// Candidates are the atom sets obtained by dropping the lowest-probability
/// atoms one at a time while at least `1 - delta` of the mass survives; each is
/// a feasible set, so the minimum of their fitted dimensions bounds the
/// infimum from above. Box counts use mesh cells of side `eps`.
pub fn rb_upper_bound(measure: &MeasureModel, delta: f64, n: usize, eps_grid: &[f64]) -> Result<RbBound> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::InvalidArgument(format!("delta must lie in [0,1), got {delta}")));
    }
    check_grids(eps_grid, &[n])?;
    if eps_grid.len() < 3 {
        return Err(Error::DegenerateGrid("rb bound needs at least 3 scales".into()));
    }
    let law = window_law(measure, n)?;
    let mut order: Vec<usize> = (0..law.len()).collect();
    // lowest mass first; among equal masses drop the lexicographically last word first
    order.sort_by(|&a, &b| {
        law.atoms[a]
            .prob
            .total_cmp(&law.atoms[b].prob)
            .then_with(|| law.atoms[b].word.cmp(&law.atoms[a].word))
    });

    let cells = |coords: &[f64], side: f64| -> Vec<i64> {
        coords.iter().map(|&x| (x / side + MESH_SNAP).floor() as i64).collect()
    };
    let mut occupancy: Vec<HashMap<Vec<i64>, usize>> = vec![HashMap::new(); eps_grid.len()];
    for atom in &law.atoms {
        for (s, &side) in eps_grid.iter().enumerate() {
            *occupancy[s].entry(cells(atom.point.coords(), side)).or_insert(0) += 1;
        }
    }
    let fit_value = |occ: &[HashMap<Vec<i64>, usize>]| -> Result<f64> {
        let pairs: Vec<(f64, f64)> = eps_grid.iter().zip(occ).map(|(&e, o)| (e, o.len() as f64)).collect();
        Ok(box_dimension_fit(&pairs)?.value / n as f64)
    };

    let total = law.total_mass();
    let mut kept_mass = total;
    let mut kept = law.len();
    let mut best = (fit_value(&occupancy)?, kept, kept_mass);
    for &i in &order {
        let atom = &law.atoms[i];
        if kept <= 1 || kept_mass - atom.prob < 1.0 - delta - 1e-12 {
            break;
        }
        kept_mass -= atom.prob;
        kept -= 1;
        for (s, &side) in eps_grid.iter().enumerate() {
            let key = cells(atom.point.coords(), side);
            let slot = occupancy[s].get_mut(&key).expect("atom was inserted");
            *slot -= 1;
            if *slot == 0 {
                occupancy[s].remove(&key);
            }
        }
        let v = fit_value(&occupancy)?;
        if v < best.0 {
            best = (v, kept, kept_mass);
        }
    }
    Ok(RbBound {
        delta,
        n,
        value: best.0.max(0.0),
        kept_atoms: best.1,
        total_atoms: law.len(),
        kept_mass: best.2,
    })
}
