//! Finite descriptions of subshifts of `[0,1]^Z` and of shift-invariant
//! measures on them.
//!
//! Windows are the one-sided blocks `(x_0, ..., x_{n-1})`. Every model is over a
//! finite letter set; Cantor-type alphabets carry a refinement depth so that a
//! sweep over depths approaches the continuum set.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{lex_cmp, MetricKind, Point, PointCloud};

/// Default cap on enumerated windows and law atoms.
pub const DEFAULT_WINDOW_CAP: u128 = 1_000_000;

/// Tolerance on stationarity `||pi P - pi||_1` and on row sums.
pub const STATIONARITY_TOL: f64 = 1e-10;

/// Refinement family attached to an alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Refinement {
    /// Left endpoints of the depth-`t` middle-thirds intervals: `2^t` letters
    /// `sum_{j<=t} e_j 3^{-j}` with `e_j in {0, 2}`.
    MiddleThirdsCantor { depth: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alphabet {
    letters: Vec<f64>,
    refinement: Option<Refinement>,
}

impl Alphabet {
    pub fn new(letters: Vec<f64>) -> Result<Self> {
        if letters.is_empty() {
            return Err(Error::InvalidModel("alphabet must be nonempty".into()));
        }
        if letters.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(Error::InvalidModel("letters must lie in [0,1]".into()));
        }
        if letters.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidModel("letters must be strictly increasing".into()));
        }
        Ok(Alphabet {
            letters,
            refinement: None,
        })
    }

    /// Middle-thirds Cantor prefix set at the given depth (`depth = 0` is `{0}`).
    pub fn cantor(depth: u32) -> Result<Self> {
        if depth > 20 {
            return Err(Error::InvalidModel(format!("cantor depth {depth} exceeds 20")));
        }
        let scale = 3f64.powi(depth as i32);
        let letters = (0u64..1 << depth)
            .map(|bits| {
                // bit (depth - j) of `bits` selects digit j
                let numerator: u64 = (1..=depth)
                    .filter(|j| bits >> (depth - j) & 1 == 1)
                    .map(|j| 2 * 3u64.pow(depth - j))
                    .sum();
                numerator as f64 / scale
            })
            .collect();
        Ok(Alphabet {
            letters,
            refinement: Some(Refinement::MiddleThirdsCantor { depth }),
        })
    }

    pub fn binary() -> Self {
        Alphabet::new(vec![0.0, 1.0]).expect("valid")
    }

    pub fn letters(&self) -> &[f64] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn refinement(&self) -> Option<Refinement> {
        self.refinement
    }

    pub fn depth(&self) -> Option<u32> {
        self.refinement.map(|Refinement::MiddleThirdsCantor { depth }| depth)
    }

    /// The same family at another depth; plain alphabets are returned unchanged.
    pub fn at_depth(&self, depth: u32) -> Result<Self> {
        match self.refinement {
            Some(Refinement::MiddleThirdsCantor { .. }) => Alphabet::cantor(depth),
            None => Ok(self.clone()),
        }
    }

    /// Smallest gap between consecutive letters (`+inf` for a single letter).
    pub fn min_gap(&self) -> f64 {
        self.letters
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn range(&self) -> f64 {
        self.letters[self.letters.len() - 1] - self.letters[0]
    }

    /// Scales at which covering counts of this alphabet are resolved.
    ///
    /// Cantor sets use `3^{-k}`, `k = 1..=depth`. Plain finite alphabets use
    /// three scales below the smallest letter gap, where every letter is its
    /// own cluster.
    pub fn natural_scales(&self) -> Vec<f64> {
        match self.refinement {
            Some(Refinement::MiddleThirdsCantor { depth }) if depth >= 1 => {
                (1..=depth as i32).map(|k| 3f64.powi(-k)).collect()
            }
            _ => {
                let g = self.min_gap().min(1.0);
                vec![g / 4.0, g / 16.0, g / 64.0]
            }
        }
    }

    pub fn index_of(&self, value: f64) -> Option<usize> {
        self.letters.iter().position(|&l| l == value)
    }

    /// Index of the letter nearest to `value`, lower index on ties.
    pub fn nearest_index(&self, value: f64) -> usize {
        let i = self.letters.partition_point(|&l| l < value);
        if i == self.letters.len() || (i > 0 && value - self.letters[i - 1] <= self.letters[i] - value) {
            i - 1
        } else {
            i
        }
    }
}

/// A subshift given by a finite rule.
#[derive(Debug, Clone, PartialEq)]
pub enum SubshiftModel {
    FullShift {
        alphabet: Alphabet,
    },
    /// First-order shift of finite type: `allowed[i][j]` permits letter `j` after `i`.
    Sft {
        alphabet: Alphabet,
        allowed: Vec<Vec<bool>>,
    },
    /// At most `max_nonzero` nonzero letters in every length-`window` block.
    Sparse {
        alphabet: Alphabet,
        max_nonzero: usize,
        window: usize,
    },
}

impl SubshiftModel {
    pub fn full_shift(alphabet: Alphabet) -> Self {
        SubshiftModel::FullShift { alphabet }
    }

    pub fn sft(alphabet: Alphabet, allowed: Vec<Vec<bool>>) -> Result<Self> {
        let m = alphabet.len();
        if allowed.len() != m || allowed.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidModel(format!("transition relation must be {m}x{m}")));
        }
        for i in 0..m {
            if !allowed[i].iter().any(|&a| a) {
                return Err(Error::InvalidModel(format!("letter {i} has no allowed successor")));
            }
            if !(0..m).any(|j| allowed[j][i]) {
                return Err(Error::InvalidModel(format!("letter {i} has no allowed predecessor")));
            }
        }
        Ok(SubshiftModel::Sft { alphabet, allowed })
    }

    /// Binary shift forbidding two consecutive ones.
    pub fn golden_mean() -> Self {
        SubshiftModel::sft(Alphabet::binary(), vec![vec![true, true], vec![true, false]]).expect("valid")
    }

    pub fn sparse(alphabet: Alphabet, max_nonzero: usize, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidModel("sparse window must be >= 1".into()));
        }
        if max_nonzero > window {
            return Err(Error::InvalidModel(format!(
                "sparse shift needs s <= w, got s={max_nonzero}, w={window}"
            )));
        }
        if window > 24 {
            return Err(Error::InvalidModel("sparse window must be <= 24".into()));
        }
        if alphabet.index_of(0.0).is_none() {
            return Err(Error::InvalidModel("sparse alphabet must contain 0".into()));
        }
        Ok(SubshiftModel::Sparse {
            alphabet,
            max_nonzero,
            window,
        })
    }

    pub fn alphabet(&self) -> &Alphabet {
        match self {
            SubshiftModel::FullShift { alphabet }
            | SubshiftModel::Sft { alphabet, .. }
            | SubshiftModel::Sparse { alphabet, .. } => alphabet,
        }
    }

    /// The model over the alphabet refined to `depth` (Cantor families only).
    pub fn with_depth(&self, depth: Option<u32>) -> Result<Self> {
        let Some(depth) = depth else {
            return Ok(self.clone());
        };
        if self.alphabet().refinement().is_none() {
            return Ok(self.clone());
        }
        match self {
            SubshiftModel::FullShift { alphabet } => Ok(SubshiftModel::FullShift {
                alphabet: alphabet.at_depth(depth)?,
            }),
            _ => Err(Error::InvalidModel(
                "refinement depths are only supported for full shifts".into(),
            )),
        }
    }

    pub fn is_full_shift(&self) -> bool {
        matches!(self, SubshiftModel::FullShift { .. })
    }

    fn zero_index(&self) -> Option<usize> {
        self.alphabet().index_of(0.0)
    }

    /// `|pi_n(S)|`, saturating at `u128::MAX`.
    pub fn window_count(&self, n: usize) -> u128 {
        let m = self.alphabet().len();
        if n == 0 {
            return 1;
        }
        match self {
            SubshiftModel::FullShift { .. } => (m as u128).checked_pow(n as u32).unwrap_or(u128::MAX),
            SubshiftModel::Sft { allowed, .. } => {
                let mut v = vec![1u128; m];
                for _ in 1..n {
                    v = (0..m)
                        .map(|j| {
                            (0..m)
                                .filter(|&i| allowed[i][j])
                                .fold(0u128, |acc, i| acc.saturating_add(v[i]))
                        })
                        .collect();
                }
                v.iter().fold(0u128, |a, &b| a.saturating_add(b))
            }
            SubshiftModel::Sparse {
                max_nonzero, window, ..
            } => {
                let memory = window - 1;
                let mask = (1usize << memory) - 1;
                let nonzero_ways = (m - 1) as u128;
                let mut counts = vec![0u128; 1 << memory];
                counts[0] = 1;
                for _ in 0..n {
                    let mut next = vec![0u128; 1 << memory];
                    for (state, &c) in counts.iter().enumerate() {
                        if c == 0 {
                            continue;
                        }
                        for (flag, ways) in [(0usize, 1u128), (1, nonzero_ways)] {
                            if ways == 0 || (state.count_ones() as usize + flag) > *max_nonzero {
                                continue;
                            }
                            let ns = if memory == 0 { 0 } else { ((state << 1) | flag) & mask };
                            next[ns] = next[ns].saturating_add(c.saturating_mul(ways));
                        }
                    }
                    counts = next;
                }
                counts.iter().fold(0u128, |a, &b| a.saturating_add(b))
            }
        }
    }

    /// Whether letter `next` may follow the partial window `prefix`.
    fn admissible(&self, prefix: &[usize], next: usize) -> bool {
        match self {
            SubshiftModel::FullShift { .. } => true,
            SubshiftModel::Sft { allowed, .. } => prefix.last().is_none_or(|&p| allowed[p][next]),
            SubshiftModel::Sparse {
                max_nonzero, window, ..
            } => {
                let zero = self.zero_index();
                let start = prefix.len().saturating_sub(window - 1);
                let nonzero = prefix[start..]
                    .iter()
                    .chain(std::iter::once(&next))
                    .filter(|&&i| Some(i) != zero)
                    .count();
                nonzero <= *max_nonzero
            }
        }
    }

    /// Letter-index words of `pi_n(S)` in lexicographic order.
    pub fn window_indices(&self, n: usize, cap: u128) -> Result<Vec<Vec<usize>>> {
        let count = self.window_count(n);
        if count > cap {
            return Err(Error::CapExceeded {
                op: "window_set",
                n,
                depth: self.alphabet().depth(),
                requested: count,
                cap,
            });
        }
        let m = self.alphabet().len();
        let mut out = Vec::with_capacity(count as usize);
        let mut word = Vec::with_capacity(n);
        fn dfs(
            model: &SubshiftModel,
            n: usize,
            m: usize,
            word: &mut Vec<usize>,
            out: &mut Vec<Vec<usize>>,
        ) {
            if word.len() == n {
                out.push(word.clone());
                return;
            }
            for next in 0..m {
                if model.admissible(word, next) {
                    word.push(next);
                    dfs(model, n, m, word, out);
                    word.pop();
                }
            }
        }
        dfs(self, n, m, &mut word, &mut out);
        Ok(out)
    }

    pub fn word_to_point(&self, word: &[usize]) -> Point {
        let letters = self.alphabet().letters();
        Point::from_unchecked(word.iter().map(|&i| letters[i]).collect())
    }

    /// Exact enumeration of `pi_n(S)` as an `l_inf` point cloud.
    pub fn window_set(&self, n: usize, cap: u128) -> Result<PointCloud> {
        if n == 0 {
            return Err(Error::InvalidArgument("window length must be >= 1".into()));
        }
        let points = self
            .window_indices(n, cap)?
            .iter()
            .map(|w| self.word_to_point(w))
            .collect();
        PointCloud::new(points, MetricKind::LInfinity)
    }
}

/// `pi_n(S)` at an optional refinement depth.
pub fn window_set(model: &SubshiftModel, n: usize, depth: Option<u32>) -> Result<PointCloud> {
    model.with_depth(depth)?.window_set(n, DEFAULT_WINDOW_CAP)
}

/// Shift-invariant measure on a subshift model.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasureKind {
    Bernoulli { probs: Vec<f64> },
    Markov { initial: Vec<f64>, transition: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureModel {
    model: SubshiftModel,
    kind: MeasureKind,
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidMeasure(format!("{what} has a negative or non-finite entry")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > STATIONARITY_TOL {
        return Err(Error::InvalidMeasure(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

impl MeasureModel {
    pub fn bernoulli(model: SubshiftModel, probs: Vec<f64>) -> Result<Self> {
        let m = model.alphabet().len();
        if probs.len() != m {
            return Err(Error::InvalidMeasure(format!("expected {m} letter probabilities")));
        }
        check_distribution(&probs, "letter distribution")?;
        let measure = MeasureModel {
            model,
            kind: MeasureKind::Bernoulli { probs },
        };
        measure.check_support()?;
        Ok(measure)
    }

    /// Uniform Bernoulli measure over the model's letters.
    pub fn uniform(model: SubshiftModel) -> Result<Self> {
        let m = model.alphabet().len();
        Self::bernoulli(model, vec![1.0 / m as f64; m])
    }

    pub fn markov(model: SubshiftModel, initial: Vec<f64>, transition: Vec<Vec<f64>>) -> Result<Self> {
        let measure = Self::markov_unchecked(model, initial, transition)?;
        let MeasureKind::Markov { initial, transition } = &measure.kind else {
            unreachable!()
        };
        let defect = stationarity_defect(initial, transition);
        if defect > STATIONARITY_TOL {
            return Err(Error::InvalidMeasure(format!(
                "initial distribution is not stationary: ||pi P - pi||_1 = {defect:e}"
            )));
        }
        measure.check_support()?;
        Ok(measure)
    }

    /// Markov measure started from the stationary distribution of `transition`.
    pub fn markov_stationary(model: SubshiftModel, transition: Vec<Vec<f64>>) -> Result<Self> {
        let pi = stationary_distribution(&transition)?;
        Self::markov(model, pi, transition)
    }

    /// Markov chain without the stationarity check. Its window laws need not be
    /// shift-consistent; this exists so that [`shift_invariance_check`] can be
    /// exercised on rejected inputs.
    pub fn markov_unchecked(
        model: SubshiftModel,
        initial: Vec<f64>,
        transition: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let m = model.alphabet().len();
        if initial.len() != m || transition.len() != m || transition.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidMeasure(format!("markov data must be over {m} letters")));
        }
        check_distribution(&initial, "initial distribution")?;
        for (i, row) in transition.iter().enumerate() {
            check_distribution(row, &format!("transition row {i}"))?;
        }
        Ok(MeasureModel {
            model,
            kind: MeasureKind::Markov { initial, transition },
        })
    }

    pub fn model(&self) -> &SubshiftModel {
        &self.model
    }

    pub fn kind(&self) -> &MeasureKind {
        &self.kind
    }

    pub fn is_iid(&self) -> bool {
        matches!(self.kind, MeasureKind::Bernoulli { .. })
    }

    fn first_prob(&self, letter: usize) -> f64 {
        match &self.kind {
            MeasureKind::Bernoulli { probs } => probs[letter],
            MeasureKind::Markov { initial, .. } => initial[letter],
        }
    }

    fn step_prob(&self, from: usize, to: usize) -> f64 {
        match &self.kind {
            MeasureKind::Bernoulli { probs } => probs[to],
            MeasureKind::Markov { transition, .. } => transition[from][to],
        }
    }

    /// The positive-probability transitions must stay inside the subshift.
    fn check_support(&self) -> Result<()> {
        let m = self.model.alphabet().len();
        match &self.model {
            SubshiftModel::FullShift { .. } => Ok(()),
            SubshiftModel::Sft { allowed, .. } => {
                for i in 0..m {
                    if self.first_prob(i) == 0.0 && self.is_iid() {
                        continue;
                    }
                    for j in 0..m {
                        let reachable = match &self.kind {
                            MeasureKind::Bernoulli { probs } => probs[i] > 0.0 && probs[j] > 0.0,
                            MeasureKind::Markov { initial, transition } => {
                                initial[i] > 0.0 && transition[i][j] > 0.0
                            }
                        };
                        if reachable && !allowed[i][j] {
                            return Err(Error::InvalidMeasure(format!(
                                "transition {i}->{j} has positive probability but is forbidden"
                            )));
                        }
                    }
                }
                Ok(())
            }
            SubshiftModel::Sparse { window, .. } => {
                // Constraints are local to length-w blocks: checking the
                // support of the length-(w+1) law covers every block.
                let law = window_law_capped(self, window + 1, DEFAULT_WINDOW_CAP)?;
                for atom in &law.atoms {
                    let ok = (0..atom.word.len()).all(|t| self.model.admissible(&atom.word[..t], atom.word[t]));
                    if !ok {
                        return Err(Error::InvalidMeasure(format!(
                            "window {:?} has positive probability but violates the sparsity rule",
                            atom.word
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// Entropy rate in nats.
    pub fn entropy_rate(&self) -> f64 {
        match &self.kind {
            MeasureKind::Bernoulli { probs } => entropy(probs),
            MeasureKind::Markov { initial, transition } => initial
                .iter()
                .zip(transition)
                .map(|(pi, row)| pi * entropy(row))
                .sum(),
        }
    }
}

/// Shannon entropy in nats with `0 log 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

fn stationarity_defect(pi: &[f64], p: &[Vec<f64>]) -> f64 {
    let m = pi.len();
    (0..m)
        .map(|j| ((0..m).map(|i| pi[i] * p[i][j]).sum::<f64>() - pi[j]).abs())
        .sum()
}

/// Stationary distribution of an irreducible stochastic matrix.
pub fn stationary_distribution(p: &[Vec<f64>]) -> Result<Vec<f64>> {
    let m = p.len();
    if m == 0 || p.iter().any(|r| r.len() != m) {
        return Err(Error::InvalidMeasure("transition matrix must be square and nonempty".into()));
    }
    // (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1.
    let mut a = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            a[(j, i)] = p[i][j] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..m {
        a[(m - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(m);
    b[m - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::InvalidMeasure("transition matrix is not irreducible".into()))?;
    Ok(pi.iter().map(|&x| x.max(0.0)).collect())
}

/// One atom of a window law.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub word: Vec<usize>,
    pub point: Point,
    pub prob: f64,
}

/// Exact law of `(X_0, ..., X_{n-1})` on its (finite) support.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowLaw {
    pub n: usize,
    pub atoms: Vec<Atom>,
}

impl WindowLaw {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.prob).collect()
    }

    pub fn points(&self) -> Vec<Point> {
        self.atoms.iter().map(|a| a.point.clone()).collect()
    }

    /// Entropy of the window in nats.
    pub fn entropy(&self) -> f64 {
        entropy(&self.probs())
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.prob).sum()
    }

    /// Atom of largest mass (first in lexicographic order on ties).
    pub fn mode(&self) -> &Atom {
        self.atoms
            .iter()
            .reduce(|best, a| if a.prob > best.prob { a } else { best })
            .expect("window laws are nonempty")
    }

    /// Law of the sub-window `start..start+len`, keyed by letter words.
    pub fn marginal(&self, start: usize, len: usize) -> BTreeMap<Vec<usize>, f64> {
        let mut out = BTreeMap::new();
        for a in &self.atoms {
            *out.entry(a.word[start..start + len].to_vec()).or_insert(0.0) += a.prob;
        }
        out
    }
}

/// Exact window law with the default atom cap.
pub fn window_law(measure: &MeasureModel, n: usize) -> Result<WindowLaw> {
    window_law_capped(measure, n, DEFAULT_WINDOW_CAP)
}

pub fn window_law_capped(measure: &MeasureModel, n: usize, cap: u128) -> Result<WindowLaw> {
    if n == 0 {
        return Err(Error::InvalidArgument("window length must be >= 1".into()));
    }
    let model = measure.model();
    let m = model.alphabet().len();
    let mut atoms = Vec::new();
    let mut word = Vec::with_capacity(n);
    let mut overflow = false;
    fn dfs(
        measure: &MeasureModel,
        n: usize,
        m: usize,
        prob: f64,
        word: &mut Vec<usize>,
        atoms: &mut Vec<Atom>,
        cap: u128,
        overflow: &mut bool,
    ) {
        if *overflow {
            return;
        }
        if word.len() == n {
            if atoms.len() as u128 >= cap {
                *overflow = true;
                return;
            }
            atoms.push(Atom {
                word: word.clone(),
                point: measure.model().word_to_point(word),
                prob,
            });
            return;
        }
        for next in 0..m {
            let p = match word.last() {
                None => measure.first_prob(next),
                Some(&prev) => measure.step_prob(prev, next),
            };
            if p > 0.0 {
                word.push(next);
                dfs(measure, n, m, prob * p, word, atoms, cap, overflow);
                word.pop();
            }
        }
    }
    dfs(measure, n, m, 1.0, &mut word, &mut atoms, cap, &mut overflow);
    if overflow {
        return Err(Error::CapExceeded {
            op: "window_set",
            n,
            depth: model.alphabet().depth(),
            requested: model.window_count(n),
            cap,
        });
    }
    atoms.sort_by(|a, b| a.word.cmp(&b.word));
    Ok(WindowLaw { n, atoms })
}

/// Sample `(X_0, ..., X_{n-1})` with a generator seeded from `seed`.
pub fn sample_trajectory(measure: &MeasureModel, n: usize, seed: u64) -> Point {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_trajectory_with(measure, n, &mut rng)
}

pub fn sample_trajectory_with<R: Rng + ?Sized>(measure: &MeasureModel, n: usize, rng: &mut R) -> Point {
    let letters = measure.model().alphabet().letters();
    let mut out = Vec::with_capacity(n);
    match measure.kind() {
        MeasureKind::Bernoulli { probs } => {
            let dist = WeightedIndex::new(probs).expect("validated distribution");
            out.extend((0..n).map(|_| letters[dist.sample(rng)]));
        }
        MeasureKind::Markov { initial, transition } => {
            let first = WeightedIndex::new(initial).expect("validated distribution");
            let rows: Vec<WeightedIndex<f64>> = transition
                .iter()
                .map(|r| WeightedIndex::new(r).expect("validated distribution"))
                .collect();
            let mut state: Option<usize> = None;
            for _ in 0..n {
                let s = match state {
                    None => first.sample(rng),
                    Some(prev) => rows[prev].sample(rng),
                };
                out.push(letters[s]);
                state = Some(s);
            }
        }
    }
    Point::from_unchecked(out)
}

/// Total-variation distance between the laws of coordinates `0..n-1` and `1..n`.
pub fn shift_invariance_check(measure: &MeasureModel, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidArgument("shift invariance needs n >= 2".into()));
    }
    let law = window_law(measure, n)?;
    let head = law.marginal(0, n - 1);
    let tail = law.marginal(1, n - 1);
    let mut keys: Vec<&Vec<usize>> = head.keys().chain(tail.keys()).collect();
    keys.sort();
    keys.dedup();
    Ok(0.5
        * keys
            .into_iter()
            .map(|k| (head.get(k).unwrap_or(&0.0) - tail.get(k).unwrap_or(&0.0)).abs())
            .sum::<f64>())
}

/// Lexicographic comparison of two points, exposed for deterministic orderings.
pub fn point_order(a: &Point, b: &Point) -> std::cmp::Ordering {
    lex_cmp(a.coords(), b.coords())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(stay: f64) -> MeasureModel {
        MeasureModel::markov(
            SubshiftModel::full_shift(Alphabet::binary()),
            vec![0.5, 0.5],
            vec![vec![stay, 1.0 - stay], vec![1.0 - stay, stay]],
        )
        .unwrap()
    }

    #[test]
    fn alphabet_validation() {
        assert!(Alphabet::new(vec![]).is_err());
        assert!(Alphabet::new(vec![0.5, 0.2]).is_err());
        assert!(Alphabet::new(vec![0.0, 1.2]).is_err());
        let c = Alphabet::cantor(2).unwrap();
        assert_eq!(c.letters(), &[0.0, 2.0 / 9.0, 2.0 / 3.0, 8.0 / 9.0]);
        assert_eq!(Alphabet::cantor(0).unwrap().letters(), &[0.0]);
    }

    #[test]
    fn cantor_refinements_are_nested() {
        for t in 0..6 {
            let small = Alphabet::cantor(t).unwrap();
            let big = Alphabet::cantor(t + 1).unwrap();
            assert!(small.letters().iter().all(|l| big.index_of(*l).is_some()));
        }
    }

    #[test]
    fn window_set_examples() {
        let full = SubshiftModel::full_shift(Alphabet::binary());
        let ws = window_set(&full, 2, None).unwrap();
        let rows: Vec<Vec<f64>> = ws.points().iter().map(|p| p.coords().to_vec()).collect();
        assert_eq!(rows, vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]);

        assert_eq!(window_set(&SubshiftModel::golden_mean(), 3, None).unwrap().len(), 5);

        let sparse = SubshiftModel::sparse(Alphabet::binary(), 1, 2).unwrap();
        let rows: Vec<Vec<f64>> = window_set(&sparse, 2, None)
            .unwrap()
            .points()
            .iter()
            .map(|p| p.coords().to_vec())
            .collect();
        assert_eq!(rows, vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn window_count_matches_enumeration() {
        let models = [
            SubshiftModel::full_shift(Alphabet::new(vec![0.0, 0.5, 1.0]).unwrap()),
            SubshiftModel::golden_mean(),
            SubshiftModel::sparse(Alphabet::new(vec![0.0, 0.5, 1.0]).unwrap(), 2, 4).unwrap(),
            SubshiftModel::sparse(Alphabet::binary(), 1, 1).unwrap(),
        ];
        for model in &models {
            for n in 1..=7 {
                let enumerated = model.window_indices(n, DEFAULT_WINDOW_CAP).unwrap().len() as u128;
                assert_eq!(model.window_count(n), enumerated, "{model:?} n={n}");
            }
        }
    }

    #[test]
    fn golden_mean_counts_are_fibonacci() {
        let fib = [2u128, 3, 5, 8, 13, 21, 34, 55];
        for (n, f) in (1..=8).zip(fib) {
            assert_eq!(SubshiftModel::golden_mean().window_count(n), f);
        }
    }

    #[test]
    fn window_cap_is_enforced() {
        let full = SubshiftModel::full_shift(Alphabet::binary());
        let err = full.window_set(12, 1000).unwrap_err();
        assert!(matches!(err, Error::CapExceeded { op: "window_set", cap: 1000, .. }));
    }

    #[test]
    fn sft_validation() {
        assert!(SubshiftModel::sft(Alphabet::binary(), vec![vec![true, false], vec![false, false]]).is_err());
        // letter 1 has a successor but no predecessor
        assert!(SubshiftModel::sft(Alphabet::binary(), vec![vec![true, false], vec![true, false]]).is_err());
        assert!(SubshiftModel::sparse(Alphabet::binary(), 3, 2).is_err());
        assert!(SubshiftModel::sparse(Alphabet::new(vec![0.5, 1.0]).unwrap(), 1, 2).is_err());
    }

    #[test]
    fn window_law_examples() {
        let full = SubshiftModel::full_shift(Alphabet::binary());
        let law = window_law(&MeasureModel::uniform(full.clone()).unwrap(), 2).unwrap();
        assert!(law.probs().iter().all(|&p| (p - 0.25).abs() < 1e-15));

        let law = window_law(&MeasureModel::bernoulli(full, vec![0.7, 0.3]).unwrap(), 1).unwrap();
        assert_eq!(law.probs(), vec![0.7, 0.3]);

        let law = window_law(&two_state(0.9), 2).unwrap();
        let expected = [0.45, 0.05, 0.05, 0.45];
        for (a, e) in law.atoms.iter().zip(expected) {
            assert!((a.prob - e).abs() < 1e-15);
        }
    }

    #[test]
    fn measure_support_is_checked() {
        let gm = SubshiftModel::golden_mean();
        assert!(MeasureModel::bernoulli(gm.clone(), vec![0.5, 0.5]).is_err());
        assert!(MeasureModel::bernoulli(gm.clone(), vec![1.0, 0.0]).is_ok());
        assert!(MeasureModel::markov_stationary(gm.clone(), vec![vec![0.6, 0.4], vec![1.0, 0.0]]).is_ok());
        assert!(MeasureModel::markov_stationary(gm, vec![vec![0.6, 0.4], vec![0.5, 0.5]]).is_err());

        let sparse = SubshiftModel::sparse(Alphabet::binary(), 1, 2).unwrap();
        assert!(MeasureModel::markov_stationary(sparse.clone(), vec![vec![0.7, 0.3], vec![1.0, 0.0]]).is_ok());
        assert!(MeasureModel::bernoulli(sparse, vec![0.9, 0.1]).is_err());
    }

    #[test]
    fn law_support_lies_in_window_set() {
        let gm = SubshiftModel::golden_mean();
        let mu = MeasureModel::markov_stationary(gm.clone(), vec![vec![0.6, 0.4], vec![1.0, 0.0]]).unwrap();
        for n in 1..=6 {
            let words = gm.window_indices(n, DEFAULT_WINDOW_CAP).unwrap();
            let law = window_law(&mu, n).unwrap();
            assert!((law.total_mass() - 1.0).abs() < 1e-12);
            assert!(law.atoms.iter().all(|a| words.contains(&a.word)));
        }
    }

    #[test]
    fn non_stationary_markov_is_rejected() {
        let full = SubshiftModel::full_shift(Alphabet::binary());
        let p = vec![vec![0.9, 0.1], vec![0.1, 0.9]];
        assert!(MeasureModel::markov(full.clone(), vec![0.8, 0.2], p.clone()).is_err());
        let raw = MeasureModel::markov_unchecked(full, vec![0.8, 0.2], p).unwrap();
        assert!(shift_invariance_check(&raw, 3).unwrap() > 0.0);
    }

    #[test]
    fn shift_invariance_examples() {
        let full = SubshiftModel::full_shift(Alphabet::new(vec![0.0, 0.5, 1.0]).unwrap());
        let b = MeasureModel::bernoulli(full, vec![0.2, 0.3, 0.5]).unwrap();
        assert!(shift_invariance_check(&b, 4).unwrap() <= 1e-15);
        assert!(shift_invariance_check(&two_state(0.9), 3).unwrap() <= 1e-12);
    }

    #[test]
    fn stationary_distribution_solves() {
        let p = vec![vec![0.5, 0.5, 0.0], vec![0.25, 0.5, 0.25], vec![0.0, 0.5, 0.5]];
        let pi = stationary_distribution(&p).unwrap();
        assert!(stationarity_defect(&pi, &p) < 1e-14);
        assert!((pi[0] - 0.25).abs() < 1e-14 && (pi[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn sampling_is_deterministic() {
        let mu = two_state(0.9);
        assert_eq!(sample_trajectory(&mu, 0, 1).dim(), 0);
        assert_eq!(sample_trajectory(&mu, 50, 11), sample_trajectory(&mu, 50, 11));
    }

    #[test]
    fn bernoulli_sampling_frequency() {
        let full = SubshiftModel::full_shift(Alphabet::binary());
        let mu = MeasureModel::bernoulli(full, vec![0.7, 0.3]).unwrap();
        let x = sample_trajectory(&mu, 100_000, 3);
        let freq = x.coords().iter().filter(|&&v| v == 1.0).count() as f64 / 1e5;
        assert!((freq - 0.3).abs() < 0.01, "{freq}");
    }

    #[test]
    fn entropy_rates() {
        let mu = two_state(0.9);
        let h = -(0.9f64 * 0.9f64.ln() + 0.1 * 0.1f64.ln());
        assert!((mu.entropy_rate() - h).abs() < 1e-14);
    }
}
