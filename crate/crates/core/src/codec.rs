//! Compressor/decompressor pairs, Hölder certification, the quantized-codec
//! rate bound pipeline, and empirical compression-rate search.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{grid_center_quantizer, raw_distance, MetricKind, Point};
use crate::ratedistortion::{block_distortion, mutual_information_table, rd_law, RdOptions, RdPoint};
use crate::subshifts::{entropy, window_law, Alphabet, MeasureModel, WindowLaw};

/// Slack added to the right-hand side of every Hölder comparison.
pub const HOLDER_SLACK: f64 = 1e-12;
pub const DEFAULT_HOLDER_PAIRS: usize = 10_000;
pub const DEFAULT_HOLDER_SEED: u64 = 0x5eed;
/// Smallest digit-packing gap accepted by default.
pub const DEFAULT_PRECISION_FLOOR: f64 = 1e-9;
pub const DEFAULT_DECODER_RESOLUTION: f64 = 1e-3;
/// Sup-norm tolerance standing in for exact equality of reconstructions.
pub const LOSSLESS_TOL: f64 = 1e-12;
const MAX_REGISTERED_PAIRS: usize = 20_000;

type MapFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A map `[0,1]^input_dim -> [0,1]^output_dim`.
#[derive(Clone)]
pub struct VectorMap {
    input_dim: usize,
    output_dim: usize,
    f: MapFn,
}

impl VectorMap {
    pub fn new(input_dim: usize, output_dim: usize, f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        VectorMap {
            input_dim,
            output_dim,
            f: Arc::new(f),
        }
    }

    pub fn identity(dim: usize) -> Self {
        VectorMap::new(dim, dim, <[f64]>::to_vec)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.input_dim);
        (self.f)(x)
    }

    pub fn then(&self, next: &VectorMap) -> VectorMap {
        let (a, b) = (self.clone(), next.clone());
        VectorMap::new(self.input_dim, next.output_dim, move |x| b.apply(&a.apply(x)))
    }
}

impl fmt::Debug for VectorMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VectorMap({} -> {})", self.input_dim, self.output_dim)
    }
}

/// Claimed bound `|g(x) - g(y)|_inf <= l |x - y|_inf^alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderCertificate {
    pub l: f64,
    pub alpha: f64,
}

impl HolderCertificate {
    pub fn new(l: f64, alpha: f64) -> Result<Self> {
        if !(l > 0.0 && l.is_finite()) || !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "certificate needs L > 0 and alpha in (0,1], got L={l} alpha={alpha}"
            )));
        }
        Ok(HolderCertificate { l, alpha })
    }
}

pub type PointPair = (Vec<f64>, Vec<f64>);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderReport {
    pub pass: bool,
    pub pairs_checked: usize,
    /// Largest `|g(x) - g(y)| / |x - y|^alpha` seen.
    pub worst_ratio: f64,
    pub witness: Option<PointPair>,
}

/// Seeded test pairs in `[0,1]^dim`: half uniform, half small perturbations
/// with log-uniform size in `[1e-12, 1]`, plus pairs approaching the corners.
pub fn holder_pairs(dim: usize, count: usize, seed: u64) -> Vec<PointPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(count + 24);
    for i in 0..count {
        let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        let y = if i % 2 == 0 {
            (0..dim).map(|_| rng.random::<f64>()).collect()
        } else {
            let scale = 10f64.powf(-12.0 * rng.random::<f64>());
            x.iter()
                .map(|&v| (v + scale * (2.0 * rng.random::<f64>() - 1.0)).clamp(0.0, 1.0))
                .collect()
        };
        pairs.push((x, y));
    }
    for j in 1..=12 {
        let delta = 10f64.powi(-j);
        pairs.push((vec![0.0; dim], vec![delta; dim]));
        pairs.push((vec![1.0; dim], vec![1.0 - delta; dim]));
    }
    pairs
}

/// Checks a certificate on every pair and reports the worst ratio.
pub fn holder_check(g: &VectorMap, cert: HolderCertificate, pairs: &[PointPair]) -> HolderReport {
    let mut pass = true;
    let mut worst_ratio = 0.0;
    let mut witness = None;
    for (x, y) in pairs {
        let dx = raw_distance(x, y, MetricKind::LInfinity);
        let dg = raw_distance(&g.apply(x), &g.apply(y), MetricKind::LInfinity);
        if dg > cert.l * dx.powf(cert.alpha) + HOLDER_SLACK {
            pass = false;
        }
        if dx > 0.0 {
            let ratio = dg / dx.powf(cert.alpha);
            if ratio > worst_ratio || witness.is_none() {
                worst_ratio = ratio.max(worst_ratio);
                witness = Some((x.clone(), y.clone()));
            }
        }
    }
    HolderReport {
        pass,
        pairs_checked: pairs.len(),
        worst_ratio,
        witness,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Provenance {
    Identity,
    Constant,
    DigitPack,
    RandomLinear,
    QuantizedComposite,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Provenance::Identity => "identity",
            Provenance::Constant => "constant",
            Provenance::DigitPack => "digit_pack",
            Provenance::RandomLinear => "random_linear",
            Provenance::QuantizedComposite => "quantized_composite",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum CompressorClass {
    Borel,
    /// Linear map followed by a global affine rescaling into the cube.
    Linear { affine_normalized: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DecompressorClass {
    Borel,
    Holder(HolderCertificate),
}

/// Compressor `[0,1]^n -> [0,1]^k` with a decompressor back to `[0,1]^n`.
#[derive(Debug, Clone)]
pub struct CodecPair {
    pub id: String,
    pub n: usize,
    pub k: usize,
    pub provenance: Provenance,
    pub compressor_class: CompressorClass,
    pub decompressor_class: DecompressorClass,
    pub compressor: VectorMap,
    pub decompressor: VectorMap,
    /// Pairs straddling the decompressor's construction boundaries.
    pub registered_pairs: Vec<PointPair>,
    /// Result of the construction-time certificate check.
    pub holder: Option<HolderReport>,
    pub seed: Option<u64>,
}

impl CodecPair {
    pub fn rate(&self) -> f64 {
        self.k as f64 / self.n as f64
    }

    pub fn certificate(&self) -> Option<HolderCertificate> {
        match self.decompressor_class {
            DecompressorClass::Holder(c) => Some(c),
            DecompressorClass::Borel => None,
        }
    }

    pub fn roundtrip(&self, x: &[f64]) -> Vec<f64> {
        self.decompressor.apply(&self.compressor.apply(x))
    }

    /// Runs the certificate against `count` seeded pairs plus the registered ones.
    pub fn check_certificate(&self, count: usize, seed: u64) -> Option<HolderReport> {
        let cert = self.certificate()?;
        let mut pairs = holder_pairs(self.k, count, seed);
        pairs.extend(self.registered_pairs.iter().cloned());
        Some(holder_check(&self.decompressor, cert, &pairs))
    }

    fn certified(mut self) -> Result<Self> {
        let report = self
            .check_certificate(DEFAULT_HOLDER_PAIRS, DEFAULT_HOLDER_SEED)
            .expect("certified codecs carry a certificate");
        if !report.pass {
            return Err(Error::InvalidArgument(format!(
                "{}: certificate failed with ratio {}",
                self.id, report.worst_ratio
            )));
        }
        self.holder = Some(report);
        Ok(self)
    }
}

pub fn identity_codec(n: usize) -> Result<CodecPair> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    CodecPair {
        id: format!("identity-n{n}"),
        n,
        k: n,
        provenance: Provenance::Identity,
        compressor_class: CompressorClass::Linear {
            affine_normalized: false,
        },
        decompressor_class: DecompressorClass::Holder(HolderCertificate { l: 1.0, alpha: 1.0 }),
        compressor: VectorMap::identity(n),
        decompressor: VectorMap::identity(n),
        registered_pairs: Vec::new(),
        holder: None,
        seed: None,
    }
    .certified()
}

/// Codec whose decompressor always returns `target`.
pub fn constant_codec(n: usize, k: usize, target: Point) -> Result<CodecPair> {
    if target.dim() != n || k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("constant codec needs 1 <= k <= n = dim(target), got n={n} k={k}")));
    }
    let t = target.into_coords();
    CodecPair {
        id: format!("constant-n{n}-k{k}"),
        n,
        k,
        provenance: Provenance::Constant,
        compressor_class: CompressorClass::Linear {
            affine_normalized: false,
        },
        decompressor_class: DecompressorClass::Holder(HolderCertificate { l: 1.0, alpha: 1.0 }),
        compressor: VectorMap::new(n, k, move |x| x[..k].to_vec()),
        decompressor: VectorMap::new(k, n, move |_| t.clone()),
        registered_pairs: Vec::new(),
        holder: None,
        seed: None,
    }
    .certified()
}

/// Base-`m+1` digit coder for one output coordinate.
#[derive(Debug, Clone)]
struct DigitCoder {
    letters: Vec<f64>,
    m: usize,
    base: u128,
    /// Largest dyadic exponent for which `base * 2^exp` fits in a u128.
    max_exp: u32,
}

impl DigitCoder {
    fn new(letters: Vec<f64>) -> Self {
        let m = letters.len();
        let base = m as u128 + 1;
        let max_exp = 126 - (128 - base.leading_zeros());
        DigitCoder {
            letters,
            m,
            base,
            max_exp,
        }
    }

    fn kappa(&self) -> f64 {
        (self.m as f64 - 1.0) / self.m as f64
    }

    fn encode(&self, digits: &[usize]) -> f64 {
        if self.m == 1 {
            return 0.0;
        }
        let b = self.base as f64;
        digits.iter().rev().fold(0.5 * self.kappa(), |v, &d| (d as f64 + v) / b)
    }

    /// Writes `u = num / 2^exp` exactly, truncating below `2^-max_exp`.
    fn dyadic(&self, u: f64) -> (u128, u32) {
        if !(u > 0.0) {
            return (0, 0);
        }
        if u >= 1.0 {
            return (1, 0);
        }
        let bits = u.to_bits();
        let field = ((bits >> 52) & 0x7ff) as u32;
        let frac = (bits & ((1u64 << 52) - 1)) as u128;
        let (mut num, mut exp) = if field == 0 { (frac, 1074) } else { (frac | (1u128 << 52), 1075 - field) };
        let tz = num.trailing_zeros().min(exp);
        num >>= tz;
        exp -= tz;
        if exp > self.max_exp {
            num >>= exp - self.max_exp;
            exp = self.max_exp;
        }
        (num, exp)
    }

    fn decode(&self, u: f64, levels: usize) -> Vec<f64> {
        let a = &self.letters;
        if self.m == 1 {
            return vec![a[0]; levels];
        }
        let m = self.m as u128;
        let (mut r, exp) = self.dyadic(u.clamp(0.0, 1.0));
        let denom = 1u128 << exp;
        // beyond the top hull everything maps to the largest point
        if r * m > (m - 1) * denom {
            return vec![a[self.m - 1]; levels];
        }
        let mut out = Vec::with_capacity(levels);
        for _ in 0..levels {
            let t = r * self.base;
            let d = (t / denom) as usize;
            let f = t % denom;
            if f * m <= (m - 1) * denom {
                out.push(a[d]);
                r = f;
                continue;
            }
            // gap between the hulls of digits d and d+1: interpolate the endpoints
            let lambda = (f * m - (m - 1) * denom) as f64 / denom as f64;
            out.push(a[d] + lambda * (a[d + 1] - a[d]));
            let tail = (1.0 - lambda) * a[self.m - 1] + lambda * a[0];
            out.resize(levels, tail);
            break;
        }
        out
    }

    /// `(left end, width)` of every gap down to `levels`, coarse levels first.
    fn gaps(&self, levels: usize, cap: usize) -> Vec<(f64, f64)> {
        let b = self.base as f64;
        let kappa = self.kappa();
        let mut out = vec![(kappa, 1.0 - kappa)];
        let mut prefixes = vec![0.0f64];
        let mut scale = 1.0 / b;
        for _ in 0..levels {
            let width = scale / self.m as f64;
            let mut next = Vec::new();
            for &p in &prefixes {
                for d in 0..self.m {
                    let start = p + d as f64 * scale;
                    if d + 1 < self.m {
                        if out.len() >= cap {
                            return out;
                        }
                        out.push((start + kappa * scale, width));
                    }
                    next.push(start);
                }
            }
            prefixes = next;
            scale /= b;
        }
        out
    }
}

/// Options for digit-packing codecs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DigitPackOptions {
    /// Smallest admissible gap between adjacent codewords.
    pub precision_floor: f64,
}

impl Default for DigitPackOptions {
    fn default() -> Self {
        DigitPackOptions {
            precision_floor: DEFAULT_PRECISION_FLOOR,
        }
    }
}

pub fn digit_pack_codec(alphabet: &Alphabet, n: usize, k: usize) -> Result<CodecPair> {
    digit_pack_codec_with(alphabet, n, k, DigitPackOptions::default())
}

/// Interleaves the base-`(m+1)` digit streams of `ceil(n/k)` symbols into each
/// output coordinate. Symbol `s` goes to coordinate `s mod k` at digit level
/// `s / k + 1`; digit `m` is never used, which leaves a gap between adjacent
/// cylinders. The decompressor reads digits exactly from the binary expansion
/// and interpolates linearly across gaps, so it is continuous on `[0,1]^k`.
pub fn digit_pack_codec_with(alphabet: &Alphabet, n: usize, k: usize, opts: DigitPackOptions) -> Result<CodecPair> {
    if n == 0 || k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("digit packing needs 1 <= k <= n, got n={n} k={k}")));
    }
    let m = alphabet.len();
    let q = n.div_ceil(k);
    let b = (m + 1) as f64;
    let gap = 1.0 / (m as f64 * b.powi(q as i32));
    if m > 1 && gap < opts.precision_floor {
        let max_levels = ((1.0 / (opts.precision_floor * m as f64)).ln() / b.ln()).floor().max(0.0) as usize;
        return Err(Error::DigitCapacity {
            symbols: q,
            base: m + 1,
            gap,
            floor: opts.precision_floor,
            max_ratio: max_levels,
        });
    }
    let coder = Arc::new(DigitCoder::new(alphabet.letters().to_vec()));
    let levels: Vec<usize> = (0..k).map(|c| (n - c).div_ceil(k)).collect();

    let enc = (coder.clone(), alphabet.clone());
    let compressor = VectorMap::new(n, k, move |x| {
        let (coder, alphabet) = &enc;
        let digits: Vec<usize> = x.iter().map(|&v| alphabet.index_of(v).unwrap_or_else(|| alphabet.nearest_index(v))).collect();
        (0..k)
            .map(|c| {
                let stream: Vec<usize> = digits.iter().skip(c).step_by(k).copied().collect();
                coder.encode(&stream)
            })
            .collect()
    });
    let dec = (coder.clone(), levels.clone());
    let decompressor = VectorMap::new(k, n, move |y| {
        let (coder, levels) = &dec;
        let streams: Vec<Vec<f64>> = y.iter().zip(levels).map(|(&u, &l)| coder.decode(u, l)).collect();
        (0..n).map(|s| streams[s % k][s / k]).collect()
    });

    let cert = if m == 1 {
        HolderCertificate::new(1.0, 1.0)?
    } else {
        HolderCertificate::new(alphabet.range() * (m as f64 * b.powi(q as i32)).powf(1.0 / q as f64), 1.0 / q as f64)?
    };

    let mut registered_pairs = Vec::new();
    if m > 1 {
        let per_coord = MAX_REGISTERED_PAIRS / (4 * k);
        for (c, &l) in levels.iter().enumerate() {
            for (start, width) in coder.gaps(l, per_coord) {
                let probe = |u: f64, v: f64| {
                    let mut x = vec![0.0; k];
                    let mut y = vec![0.0; k];
                    x[c] = u.clamp(0.0, 1.0);
                    y[c] = v.clamp(0.0, 1.0);
                    (x, y)
                };
                registered_pairs.push(probe(start, start + width));
                registered_pairs.push(probe(start, start + 0.5 * width));
                registered_pairs.push(probe(start + 0.5 * width, start + width));
                registered_pairs.push(probe(start - 1e-3 * width, start + 1e-3 * width));
            }
        }
    }

    CodecPair {
        id: format!("digit-pack-m{m}-n{n}-k{k}"),
        n,
        k,
        provenance: Provenance::DigitPack,
        compressor_class: CompressorClass::Borel,
        decompressor_class: DecompressorClass::Holder(cert),
        compressor,
        decompressor,
        registered_pairs,
        holder: None,
        seed: None,
    }
    .certified()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomLinearOptions {
    /// Grid on which compressed atom images are compared.
    pub resolution: f64,
}

impl Default for RandomLinearOptions {
    fn default() -> Self {
        RandomLinearOptions {
            resolution: DEFAULT_DECODER_RESOLUTION,
        }
    }
}

/// `x -> (Ax - lo) / (hi - lo)` with `A` a seeded standard Gaussian `k x n` matrix.
pub fn random_linear_codec(law: &WindowLaw, k: usize, seed: u64) -> Result<CodecPair> {
    random_linear_codec_with(law, k, seed, RandomLinearOptions::default())
}

pub fn random_linear_codec_with(law: &WindowLaw, k: usize, seed: u64, opts: RandomLinearOptions) -> Result<CodecPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..law.n).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let mut codec = linear_codec_with_matrix(law, a, opts)?;
    codec.id = format!("random-linear-n{}-k{k}-seed{seed}", law.n);
    codec.seed = Some(seed);
    Ok(codec)
}

/// Linear codec for an explicit matrix with a nearest-image decoder built from `law`.
pub fn linear_codec_with_matrix(law: &WindowLaw, a: Vec<Vec<f64>>, opts: RandomLinearOptions) -> Result<CodecPair> {
    let n = law.n;
    let k = a.len();
    if k == 0 || k > n || a.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidArgument(format!("matrix must be k x n with 1 <= k <= n = {n}")));
    }
    if !(opts.resolution > 0.0) {
        return Err(Error::InvalidArgument("decoder resolution must be positive".into()));
    }
    let lo: Vec<f64> = a.iter().map(|r| r.iter().map(|v| v.min(0.0)).sum()).collect();
    let hi: Vec<f64> = a.iter().map(|r| r.iter().map(|v| v.max(0.0)).sum()).collect();
    let map = Arc::new((a, lo, hi));
    let linear = {
        let map = map.clone();
        VectorMap::new(n, k, move |x| {
            let (a, lo, hi) = &*map;
            a.iter()
                .zip(lo.iter().zip(hi))
                .map(|(row, (&l, &h))| {
                    let ax: f64 = row.iter().zip(x).map(|(p, q)| p * q).sum();
                    if h > l { ((ax - l) / (h - l)).clamp(0.0, 1.0) } else { 0.0 }
                })
                .collect()
        })
    };

    let snap = move |y: &[f64]| -> Vec<i64> { y.iter().map(|v| (v / opts.resolution).round() as i64).collect() };
    // heaviest atom first so it wins collisions
    let mut order: Vec<usize> = (0..law.len()).collect();
    order.sort_by(|&i, &j| law.atoms[j].prob.total_cmp(&law.atoms[i].prob).then(i.cmp(&j)));
    let mut seen = HashMap::new();
    let mut table: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for i in order {
        let x = law.atoms[i].point.coords();
        let key = snap(&linear.apply(x));
        if seen.insert(key.clone(), ()).is_none() {
            let image = key.iter().map(|&c| c as f64 * opts.resolution).collect();
            table.push((image, x.to_vec()));
        }
    }
    let decompressor = VectorMap::new(k, n, move |y| {
        let key: Vec<f64> = snap(y).iter().map(|&c| c as f64 * opts.resolution).collect();
        let mut best = (f64::INFINITY, 0);
        for (idx, (image, _)) in table.iter().enumerate() {
            let d = raw_distance(image, &key, MetricKind::LInfinity);
            if d < best.0 {
                best = (d, idx);
            }
        }
        table[best.1].1.clone()
    });

    Ok(CodecPair {
        id: format!("linear-n{n}-k{k}"),
        n,
        k,
        provenance: Provenance::RandomLinear,
        compressor_class: CompressorClass::Linear {
            affine_normalized: true,
        },
        decompressor_class: DecompressorClass::Borel,
        compressor: linear,
        decompressor,
        registered_pairs: Vec::new(),
        holder: None,
        seed: None,
    })
}

/// `c o f` as compressor with the original decompressor, `c` the grid-center quantizer.
pub fn quantized_composite(codec: &CodecPair, eps: f64) -> Result<CodecPair> {
    let quantizer = grid_center_quantizer(codec.k, eps)?;
    let f = codec.compressor.clone();
    let compressor = VectorMap::new(codec.n, codec.k, move |x| {
        quantizer.quantize(&f.apply(x)).expect("compressor output has dimension k")
    });
    Ok(CodecPair {
        id: format!("{}-quantized", codec.id),
        provenance: Provenance::QuantizedComposite,
        compressor_class: CompressorClass::Borel,
        compressor,
        ..codec.clone()
    })
}

/// Exact expectation over a law, or Monte-Carlo over equally weighted samples.
#[derive(Debug, Clone, Copy)]
pub enum CodecSource<'a> {
    Law(&'a WindowLaw),
    Samples(&'a [Point]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StdErrors {
    pub error_lossless: f64,
    pub error_threshold: f64,
    pub distortion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CodecReport {
    pub codec_id: String,
    pub n: usize,
    pub k: usize,
    pub rate: f64,
    pub eps: f64,
    /// Exponent of the normalized distance in the threshold criterion; infinity for the sup norm.
    pub p: f64,
    pub error_prob_lossless: f64,
    pub error_prob_threshold: f64,
    pub mean_distortion: f64,
    /// Present for sample-based reports.
    pub std_errors: Option<StdErrors>,
}

/// Error probabilities and mean distortion of `g o f` on a law or sample set.
pub fn apply_codec(codec: &CodecPair, source: CodecSource<'_>, eps: f64, p: f64) -> Result<CodecReport> {
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("threshold exponent must be >= 1, got {p}")));
    }
    let metric = if p.is_infinite() { MetricKind::LInfinity } else { MetricKind::LpNormalized { p } };
    let weighted: Vec<(&[f64], f64)> = match source {
        CodecSource::Law(law) => law.atoms.iter().map(|a| (a.point.coords(), a.prob)).collect(),
        CodecSource::Samples(s) => {
            if s.is_empty() {
                return Err(Error::InvalidArgument("sample set is empty".into()));
            }
            s.iter().map(|x| (x.coords(), 1.0 / s.len() as f64)).collect()
        }
    };
    if let Some((x, _)) = weighted.iter().find(|(x, _)| x.len() != codec.n) {
        return Err(Error::DimensionMismatch {
            expected: codec.n,
            got: x.len(),
        });
    }
    let mut lossless = 0.0;
    let mut threshold = 0.0;
    let mut distortion = 0.0;
    let mut distortion_sq = 0.0;
    for &(x, w) in &weighted {
        let y = codec.roundtrip(x);
        if raw_distance(x, &y, MetricKind::LInfinity) > LOSSLESS_TOL {
            lossless += w;
        }
        if raw_distance(x, &y, metric) >= eps {
            threshold += w;
        }
        let d = block_distortion(x, &y);
        distortion += w * d;
        distortion_sq += w * d * d;
    }
    let std_errors = match source {
        CodecSource::Samples(s) => {
            let count = s.len() as f64;
            let binomial = |q: f64| (q * (1.0 - q) / count).sqrt();
            Some(StdErrors {
                error_lossless: binomial(lossless),
                error_threshold: binomial(threshold),
                distortion: ((distortion_sq - distortion * distortion).max(0.0) / count).sqrt(),
            })
        }
        CodecSource::Law(_) => None,
    };
    Ok(CodecReport {
        codec_id: codec.id.clone(),
        n: codec.n,
        k: codec.k,
        rate: codec.rate(),
        eps,
        p,
        error_prob_lossless: lossless.min(1.0),
        error_prob_threshold: threshold.min(1.0),
        mean_distortion: distortion,
        std_errors,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Verdict {
    Pass,
    Fail,
    /// A precondition failed; the bound says nothing here.
    Inapplicable(String),
}

/// Outcome of the quantized-codec bound pipeline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantizedBoundRecord {
    pub codec_id: String,
    pub n: usize,
    pub k: usize,
    pub eps: f64,
    pub l: f64,
    pub alpha: f64,
    pub cells_per_axis: usize,
    pub error_prob_lossless: f64,
    pub mean_distortion: f64,
    /// `eps + L (eps/2)^alpha`.
    pub distortion_bound: f64,
    pub mutual_information: f64,
    pub output_entropy: f64,
    /// `k log ceil(1/eps)`.
    pub capacity: f64,
    /// `(L / 2^alpha + eps^(1-alpha)) eps^alpha`.
    pub target_distortion: f64,
    pub rd: Option<RdPoint>,
    /// `R(target) / log ceil(1/eps)`.
    pub display_lhs: f64,
    /// `k/n + 1e-9`.
    pub display_rhs: f64,
    pub distortion_ok: bool,
    pub information_ok: bool,
    pub display_ok: bool,
    pub verdict: Verdict,
}

/// Quantizes the compressed output on the regular `ceil(1/eps)` grid, builds
/// `Y = g(c(f(X)))`, and checks the distortion chain, the information chain
/// `I(X;Y) <= H(Y) <= k log ceil(1/eps)`, and the resulting rate-distortion bound.
pub fn quantized_codec_bound(
    codec: &CodecPair,
    eps: f64,
    measure: &MeasureModel,
    n: usize,
    opts: &RdOptions,
) -> Result<QuantizedBoundRecord> {
    if codec.n != n {
        return Err(Error::DimensionMismatch {
            expected: codec.n,
            got: n,
        });
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0,1), got {eps}")));
    }
    let law = window_law(measure, n)?;
    let report = apply_codec(codec, CodecSource::Law(&law), eps, f64::INFINITY)?;
    let quantizer = grid_center_quantizer(codec.k, eps)?;
    let cells = quantizer.cells_per_axis();
    let capacity = codec.k as f64 * (cells as f64).ln();
    let display_rhs = codec.k as f64 / n as f64 + 1e-9;
    let mut record = QuantizedBoundRecord {
        codec_id: codec.id.clone(),
        n,
        k: codec.k,
        eps,
        l: f64::NAN,
        alpha: f64::NAN,
        cells_per_axis: cells,
        error_prob_lossless: report.error_prob_lossless,
        mean_distortion: f64::NAN,
        distortion_bound: f64::NAN,
        mutual_information: f64::NAN,
        output_entropy: f64::NAN,
        capacity,
        target_distortion: f64::NAN,
        rd: None,
        display_lhs: f64::NAN,
        display_rhs,
        distortion_ok: false,
        information_ok: false,
        display_ok: false,
        verdict: Verdict::Inapplicable(String::new()),
    };
    let Some(cert) = codec.certificate() else {
        record.verdict = Verdict::Inapplicable("decompressor carries no Hölder certificate".into());
        return Ok(record);
    };
    record.l = cert.l;
    record.alpha = cert.alpha;
    let holder_ok = match &codec.holder {
        Some(h) => h.pass,
        None => codec.check_certificate(DEFAULT_HOLDER_PAIRS, DEFAULT_HOLDER_SEED).is_some_and(|h| h.pass),
    };
    if !holder_ok {
        record.verdict = Verdict::Inapplicable("certificate fails its Hölder check".into());
        return Ok(record);
    }
    if report.error_prob_lossless > eps {
        record.verdict = Verdict::Inapplicable(format!(
            "lossless error probability {} exceeds eps",
            report.error_prob_lossless
        ));
        return Ok(record);
    }

    let composite = quantized_composite(codec, eps)?;
    let mut outputs: Vec<Vec<f64>> = Vec::new();
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut assignment = Vec::with_capacity(law.len());
    for atom in &law.atoms {
        let y = composite.roundtrip(atom.point.coords());
        let key: Vec<u64> = y.iter().map(|v| v.to_bits()).collect();
        let j = *index.entry(key).or_insert_with(|| {
            outputs.push(y);
            outputs.len() - 1
        });
        assignment.push(j);
    }
    let mut table = vec![vec![0.0; outputs.len()]; law.len()];
    let mut py = vec![0.0; outputs.len()];
    let mut distortion = 0.0;
    for (i, (atom, &j)) in law.atoms.iter().zip(&assignment).enumerate() {
        table[i][j] = atom.prob;
        py[j] += atom.prob;
        distortion += atom.prob * block_distortion(atom.point.coords(), &outputs[j]);
    }
    // masses of a window law sum to 1 only up to rounding
    let total: f64 = py.iter().sum();
    table.iter_mut().flatten().for_each(|v| *v /= total);
    py.iter_mut().for_each(|v| *v /= total);
    let mi = mutual_information_table(&table)?;
    let h_y = entropy(&py);

    record.mean_distortion = distortion;
    record.distortion_bound = eps + cert.l * (eps / 2.0).powf(cert.alpha);
    record.mutual_information = mi;
    record.output_entropy = h_y;
    record.distortion_ok = distortion <= record.distortion_bound + 1e-12;
    record.information_ok = mi <= h_y + 1e-12 && h_y <= capacity + 1e-12;

    let target = (cert.l / 2f64.powf(cert.alpha) + eps.powf(1.0 - cert.alpha)) * eps.powf(cert.alpha);
    record.target_distortion = target;
    let mut reproductions = law.points();
    reproductions.extend(outputs.into_iter().map(|y| Point::new(y).expect("decoder maps into the cube")));
    let rd = rd_law(&law, &reproductions, target, opts)?;
    record.display_lhs = if cells > 1 { rd.rate / (cells as f64).ln() } else { 0.0 };
    record.rd = Some(rd);
    record.display_ok = record.display_lhs <= display_rhs;
    record.verdict = if record.distortion_ok && record.information_ok && record.display_ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(record)
}

/// A codec for every compressed dimension `k`.
#[derive(Debug, Clone, PartialEq)]
pub enum CodecFamily {
    Identity,
    DigitPack { alphabet: Alphabet, options: DigitPackOptions },
    RandomLinear { seed: u64, options: RandomLinearOptions },
}

impl CodecFamily {
    pub fn name(&self) -> &'static str {
        match self {
            CodecFamily::Identity => "identity",
            CodecFamily::DigitPack { .. } => "digit_pack",
            CodecFamily::RandomLinear { .. } => "random_linear",
        }
    }

    pub fn build(&self, law: &WindowLaw, k: usize) -> Result<CodecPair> {
        match self {
            CodecFamily::Identity if k == law.n => identity_codec(law.n),
            CodecFamily::Identity => Err(Error::InvalidArgument("identity codec needs k = n".into())),
            CodecFamily::DigitPack { alphabet, options } => digit_pack_codec_with(alphabet, law.n, k, *options),
            CodecFamily::RandomLinear { seed, options } => random_linear_codec_with(law, k, *seed, *options),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ErrorCriterion {
    /// `P(g(f(x)) != x) <= eps`.
    Lossless,
    /// `P(|x - g(f(x))|_p >= eps) <= eps` in the normalized `l_p` distance.
    Threshold { p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSearchResult {
    pub k: usize,
    pub rate: f64,
    /// False when no `k <= n` met the criterion; the rate is then 1.
    pub achieved: bool,
    pub report: Option<CodecReport>,
    pub certificate: Option<HolderCertificate>,
    pub holder_pass: Option<bool>,
}

/// Smallest `k` whose codec meets the criterion on the window law; an
/// empirical upper bound on the compression rate.
pub fn rate_search(law: &WindowLaw, family: &CodecFamily, eps: f64, criterion: ErrorCriterion) -> Result<RateSearchResult> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidArgument(format!("eps must lie in [0,1], got {eps}")));
    }
    let p = match criterion {
        ErrorCriterion::Lossless => f64::INFINITY,
        ErrorCriterion::Threshold { p } => p,
    };
    for k in 1..=law.n {
        let codec = match family.build(law, k) {
            Ok(c) => c,
            Err(Error::DigitCapacity { .. } | Error::InvalidArgument(_)) => continue,
            Err(e) => return Err(e),
        };
        let report = apply_codec(&codec, CodecSource::Law(law), eps, p)?;
        let err = match criterion {
            ErrorCriterion::Lossless => report.error_prob_lossless,
            ErrorCriterion::Threshold { .. } => report.error_prob_threshold,
        };
        if err <= eps {
            return Ok(RateSearchResult {
                k,
                rate: codec.rate(),
                achieved: true,
                certificate: codec.certificate(),
                holder_pass: codec.holder.as_ref().map(|h| h.pass),
                report: Some(report),
            });
        }
    }
    Ok(RateSearchResult {
        k: law.n,
        rate: 1.0,
        achieved: false,
        report: None,
        certificate: None,
        holder_pass: None,
    })
}

pub const CODEC_CSV_HEADER: [&str; 13] = [
    "codec_id",
    "provenance",
    "n",
    "k",
    "rate",
    "eps",
    "error_lossless",
    "error_threshold_p",
    "distortion",
    "L",
    "alpha",
    "holder_pass",
    "seed",
];

pub fn codec_csv_row(codec: &CodecPair, report: &CodecReport) -> Vec<String> {
    let cert = codec.certificate();
    let opt = |v: Option<String>| v.unwrap_or_default();
    vec![
        codec.id.clone(),
        codec.provenance.to_string(),
        codec.n.to_string(),
        codec.k.to_string(),
        codec.rate().to_string(),
        report.eps.to_string(),
        report.error_prob_lossless.to_string(),
        report.error_prob_threshold.to_string(),
        report.mean_distortion.to_string(),
        opt(cert.map(|c| c.l.to_string())),
        opt(cert.map(|c| c.alpha.to_string())),
        opt(codec.holder.as_ref().map(|h| h.pass.to_string())),
        opt(codec.seed.map(|s| s.to_string())),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subshifts::{window_set, SubshiftModel};

    fn sqrt_map() -> VectorMap {
        VectorMap::new(1, 1, |x| vec![x[0].sqrt()])
    }

    #[test]
    fn holder_check_examples() {
        let pairs = holder_pairs(1, DEFAULT_HOLDER_PAIRS, 3);
        let id = holder_check(&VectorMap::identity(1), HolderCertificate::new(1.0, 1.0).unwrap(), &pairs);
        assert!(id.pass);

        let half = holder_check(&sqrt_map(), HolderCertificate::new(1.0, 0.5).unwrap(), &pairs);
        assert!(half.pass, "{half:?}");

        let lip = holder_check(&sqrt_map(), HolderCertificate::new(1.0, 1.0).unwrap(), &pairs);
        assert!(!lip.pass);
        let (x, y) = lip.witness.unwrap();
        assert!(x[0].max(y[0]) < 1e-6);
    }

    #[test]
    fn certificate_validation() {
        assert!(HolderCertificate::new(0.0, 0.5).is_err());
        assert!(HolderCertificate::new(1.0, 1.5).is_err());
        assert!(HolderCertificate::new(1.0, 0.0).is_err());
    }

    fn uniform_binary(n: usize) -> WindowLaw {
        let mu = MeasureModel::uniform(SubshiftModel::full_shift(Alphabet::binary())).unwrap();
        window_law(&mu, n).unwrap()
    }

    #[test]
    fn identity_codec_is_lossless() {
        let law = uniform_binary(3);
        let codec = identity_codec(3).unwrap();
        let r = apply_codec(&codec, CodecSource::Law(&law), 0.1, 2.0).unwrap();
        assert_eq!(r.error_prob_lossless, 0.0);
        assert_eq!(r.mean_distortion, 0.0);
        assert_eq!(r.rate, 1.0);
    }

    #[test]
    fn constant_decoder_error_is_complement_of_mode() {
        let mu = MeasureModel::bernoulli(SubshiftModel::full_shift(Alphabet::binary()), vec![0.7, 0.3]).unwrap();
        let law = window_law(&mu, 3).unwrap();
        let mode = law.mode().clone();
        let codec = constant_codec(3, 1, mode.point.clone()).unwrap();
        let r = apply_codec(&codec, CodecSource::Law(&law), 0.1, f64::INFINITY).unwrap();
        assert!((r.error_prob_lossless - (1.0 - mode.prob)).abs() < 1e-12);
        assert!((mode.prob - 0.343).abs() < 1e-12);
    }

    #[test]
    fn digit_pack_examples() {
        let binary = Alphabet::binary();
        let same = digit_pack_codec(&binary, 3, 3).unwrap();
        assert_eq!(same.certificate().unwrap().alpha, 1.0);

        let codec = digit_pack_codec(&binary, 4, 2).unwrap();
        let cert = codec.certificate().unwrap();
        assert_eq!(cert.alpha, 0.5);
        assert!(codec.holder.as_ref().unwrap().pass);
        let model = SubshiftModel::full_shift(binary.clone());
        let windows = window_set(&model, 4, None).unwrap();
        assert_eq!(windows.len(), 16);
        for x in windows.points() {
            assert_eq!(codec.roundtrip(x.coords()), x.coords());
        }

        let strict = DigitPackOptions { precision_floor: 1e-3 };
        assert!(matches!(
            digit_pack_codec_with(&binary, 12, 2, strict),
            Err(Error::DigitCapacity { symbols: 6, .. })
        ));
        match digit_pack_codec(&binary, 40, 2) {
            Err(Error::DigitCapacity { max_ratio, .. }) => assert_eq!(max_ratio, 18),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn digit_pack_is_exact_on_cantor_windows() {
        for (depth, n, k) in [(2, 4, 1), (3, 3, 2), (1, 7, 3)] {
            let alphabet = Alphabet::cantor(depth).unwrap();
            let codec = digit_pack_codec(&alphabet, n, k).unwrap();
            let model = SubshiftModel::full_shift(alphabet);
            for x in window_set(&model, n, None).unwrap().points() {
                assert_eq!(codec.roundtrip(x.coords()), x.coords());
            }
            assert!(codec.holder.as_ref().unwrap().pass);
        }
    }

    #[test]
    fn digit_pack_decoder_is_continuous_at_gap_ends() {
        let coder = DigitCoder::new(vec![0.0, 0.4, 1.0]);
        for (start, width) in coder.gaps(3, 1000) {
            for levels in 1..=3 {
                let left = coder.decode(start, levels);
                let right = coder.decode(start + width, levels);
                let just_in = coder.decode(start + 1e-12, levels);
                let just_out = coder.decode(start + width - 1e-12, levels);
                assert!(raw_distance(&left, &just_in, MetricKind::LInfinity) < 1e-9);
                assert!(raw_distance(&right, &just_out, MetricKind::LInfinity) < 1e-9);
            }
        }
    }

    #[test]
    fn linear_identity_override_is_lossless() {
        let law = uniform_binary(3);
        let a = (0..3).map(|i| (0..3).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        let codec = linear_codec_with_matrix(&law, a, RandomLinearOptions::default()).unwrap();
        let r = apply_codec(&codec, CodecSource::Law(&law), 0.0, f64::INFINITY).unwrap();
        assert_eq!(r.error_prob_lossless, 0.0);
    }

    #[test]
    fn random_linear_examples() {
        let law = uniform_binary(8);
        let mean = (0..20)
            .map(|seed| {
                let codec = random_linear_codec(&law, 6, seed).unwrap();
                apply_codec(&codec, CodecSource::Law(&law), 0.1, f64::INFINITY)
                    .unwrap()
                    .error_prob_lossless
            })
            .sum::<f64>()
            / 20.0;
        assert!(mean < 0.05, "{mean}");

        // 101 grid cells for 256 atoms: at least 155 atoms decode wrongly
        let coarse = RandomLinearOptions { resolution: 1e-2 };
        for seed in 0..5 {
            let codec = random_linear_codec_with(&law, 1, seed, coarse).unwrap();
            let r = apply_codec(&codec, CodecSource::Law(&law), 0.1, f64::INFINITY).unwrap();
            assert!(r.error_prob_lossless >= 155.0 / 256.0 - 1e-12, "{r:?}");
        }
        let mean_k1 = (0..20)
            .map(|seed| {
                let codec = random_linear_codec(&law, 1, seed).unwrap();
                apply_codec(&codec, CodecSource::Law(&law), 0.1, f64::INFINITY)
                    .unwrap()
                    .error_prob_lossless
            })
            .sum::<f64>()
            / 20.0;
        assert!(mean_k1 > 0.01, "{mean_k1}");

        let codec = random_linear_codec(&law, 1, 11).unwrap();
        let again = random_linear_codec(&law, 1, 11).unwrap();
        let x = law.atoms[5].point.coords();
        assert_eq!(codec.compressor.apply(x), again.compressor.apply(x));
    }

    #[test]
    fn samples_report_standard_errors() {
        let mu = MeasureModel::uniform(SubshiftModel::full_shift(Alphabet::binary())).unwrap();
        let samples: Vec<Point> = (0..400).map(|s| crate::subshifts::sample_trajectory(&mu, 3, s)).collect();
        let codec = constant_codec(3, 1, Point::new(vec![0.0; 3]).unwrap()).unwrap();
        let r = apply_codec(&codec, CodecSource::Samples(&samples), 0.1, f64::INFINITY).unwrap();
        let se = r.std_errors.unwrap();
        assert!((r.error_prob_lossless - 0.875).abs() < 4.0 * se.error_lossless + 1e-9);
        assert!(se.error_lossless > 0.0);
        assert!(apply_codec(&identity_codec(2).unwrap(), CodecSource::Samples(&samples), 0.1, 1.0).is_err());
    }

    #[test]
    fn quantized_bound_identity_and_guard() {
        let mu = MeasureModel::bernoulli(SubshiftModel::full_shift(Alphabet::binary()), vec![0.6, 0.4]).unwrap();
        let rec = quantized_codec_bound(&identity_codec(2).unwrap(), 0.1, &mu, 2, &RdOptions::default()).unwrap();
        assert_eq!(rec.verdict, Verdict::Pass, "{rec:?}");
        assert!(rec.output_entropy <= 2.0 * 10f64.ln());

        let law = window_law(&mu, 2).unwrap();
        let bad = constant_codec(2, 1, law.mode().point.clone()).unwrap();
        let rec = quantized_codec_bound(&bad, 0.1, &mu, 2, &RdOptions::default()).unwrap();
        assert!(matches!(rec.verdict, Verdict::Inapplicable(_)));
    }

    #[test]
    fn quantized_bound_digit_pack_on_cantor() {
        let alphabet = Alphabet::cantor(2).unwrap();
        let mu = MeasureModel::uniform(SubshiftModel::full_shift(alphabet.clone())).unwrap();
        let codec = digit_pack_codec(&alphabet, 2, 1).unwrap();
        for eps in [0.1, 0.03] {
            let rec = quantized_codec_bound(&codec, eps, &mu, 2, &RdOptions::default()).unwrap();
            assert_eq!(rec.verdict, Verdict::Pass, "{rec:?}");
        }
    }

    #[test]
    fn rate_search_examples() {
        let law = uniform_binary(4);
        let digits = CodecFamily::DigitPack {
            alphabet: Alphabet::binary(),
            options: DigitPackOptions::default(),
        };
        let r = rate_search(&law, &digits, 0.0, ErrorCriterion::Lossless).unwrap();
        assert_eq!(r.k, 1);
        assert!(r.holder_pass.unwrap());

        let tight = CodecFamily::DigitPack {
            alphabet: Alphabet::binary(),
            options: DigitPackOptions { precision_floor: 1e-2 },
        };
        assert_eq!(rate_search(&law, &tight, 0.0, ErrorCriterion::Lossless).unwrap().k, 2);

        let linear = CodecFamily::RandomLinear {
            seed: 1,
            options: RandomLinearOptions::default(),
        };
        assert_eq!(rate_search(&law, &linear, 1.0, ErrorCriterion::Lossless).unwrap().k, 1);

        let mut prev = usize::MAX;
        for eps in [0.0, 0.05, 0.2, 0.5, 1.0] {
            let k = rate_search(&uniform_binary(6), &linear, eps, ErrorCriterion::Threshold { p: 1.0 }).unwrap().k;
            assert!(k <= prev);
            prev = k;
        }
    }
}
