//! Configuration-driven experiment runner: builds the model and measures a
//! JSON config describes, runs the requested checks, and assembles a report
//! together with plot-ready CSV tables.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{
    apply_codec, codec_csv_row, digit_pack_codec_with, identity_codec, quantized_codec_bound, random_linear_codec_with,
    rate_search, CodecFamily, CodecPair, CodecSource, DigitPackOptions, ErrorCriterion, QuantizedBoundRecord,
    RandomLinearOptions, RateSearchResult, Verdict, CODEC_CSV_HEADER,
};
use crate::dimensions::{mbdim_estimate, mdim_profile, rb_upper_bound, DepthSchedule, DimensionEstimate};
use crate::error::{Error, Result};
use crate::ratedistortion::{rd_block, rd_limit_estimate, variational_sweep, RdOptions, RD_CSV_HEADER};
use crate::subshifts::{entropy, DEFAULT_WINDOW_CAP, window_law, Alphabet, MeasureModel, Refinement, SubshiftModel};

pub const SCHEMA_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphabetSpec {
    Letters(Vec<f64>),
    CantorDepth(u32),
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    FullShift { alphabet: AlphabetSpec },
    GoldenMean,
    Sft { alphabet: AlphabetSpec, allowed: Vec<Vec<bool>> },
    Sparse { alphabet: AlphabetSpec, max_nonzero: usize, window: usize },
    Bundled { id: String },
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    Uniform {
        id: String,
    },
    Bernoulli {
        id: String,
        probs: Vec<f64>,
    },
    /// Stationary start when `initial` is omitted.
    Markov {
        id: String,
        transition: Vec<Vec<f64>>,
        #[serde(default)]
        initial: Option<Vec<f64>>,
    },
    /// One i.i.d. measure per `p` on a Cantor alphabet: each ternary digit is
    /// 2 with probability `p`, independently.
    DigitBiased {
        id: String,
        p: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum ScaleGrid {
    List(Vec<f64>),
    /// `base^-e` for each exponent.
    Powers { base: f64, exponents: Vec<i32> },
}

impl ScaleGrid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            ScaleGrid::List(v) => v.clone(),
            ScaleGrid::Powers { base, exponents } => exponents.iter().map(|&e| base.powi(-e)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthScheduleSpec {
    Fixed(u32),
    PerScale(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum CodecSpec {
    Identity {
        n: usize,
    },
    DigitPack {
        n: usize,
        k: usize,
        #[serde(default)]
        precision_floor: Option<f64>,
    },
    RandomLinear {
        n: usize,
        k: usize,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        resolution: Option<f64>,
    },
}

impl CodecSpec {
    fn n(&self) -> usize {
        match self {
            CodecSpec::Identity { n } | CodecSpec::DigitPack { n, .. } | CodecSpec::RandomLinear { n, .. } => *n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub mdim_mbdim: f64,
    pub sweep_below: f64,
    pub sweep_above: f64,
    pub digit_pack_upper: f64,
    pub holder_lower: f64,
    pub subadditivity: f64,
    pub closed_form_bits: f64,
    pub ba_tol: f64,
    pub ba_max_iter: usize,
    pub distortion_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            mdim_mbdim: 0.02,
            sweep_below: 0.15,
            sweep_above: 0.02,
            digit_pack_upper: 0.1,
            holder_lower: 0.05,
            subadditivity: 1e-6,
            closed_form_bits: 1e-4,
            ba_tol: 1e-9,
            ba_max_iter: 10_000,
            distortion_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckParams {
    pub eps: Option<f64>,
    pub eps_list: Option<Vec<f64>>,
    pub eps_grid: Option<ScaleGrid>,
    pub n: Option<usize>,
    pub n_grid: Option<Vec<usize>>,
    pub delta: Option<f64>,
    pub alpha: Option<f64>,
    pub p: Option<f64>,
    pub threshold: Option<f64>,
    pub measure: Option<String>,
    /// Alphabet refinement depth for the measures of this check (Cantor models).
    pub depth: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub id: String,
    #[serde(default)]
    pub params: CheckParams,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub model: ModelSpec,
    #[serde(default)]
    pub depth_schedule: Option<DepthScheduleSpec>,
    #[serde(default)]
    pub measures: Vec<MeasureSpec>,
    pub eps_grid: ScaleGrid,
    pub n_grid: Vec<usize>,
    /// Window lengths for `rd` runs.
    #[serde(default)]
    pub rd_n_grid: Option<Vec<usize>>,
    /// Threshold used when `codec` runs report error probabilities.
    #[serde(default)]
    pub codec_eps: Option<f64>,
    #[serde(default)]
    pub codecs: Vec<CodecSpec>,
    #[serde(default)]
    pub checks: Vec<CheckSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out_dir: Option<String>,
}

fn config_err(path: impl Into<String>, msg: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        msg: msg.into(),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            config_err(
                format!("line {} column {}", e.line(), e.column()),
                e.to_string(),
            )
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(path.display().to_string(), e.to_string()))?;
        ExperimentConfig::from_json(&text)
    }

    /// Checks every field that deserialization alone cannot.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(config_err(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        let eps = self.eps_grid.values();
        if eps.is_empty() {
            return Err(config_err("eps_grid", "grid is empty"));
        }
        if let Some(i) = eps.iter().position(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(config_err(format!("eps_grid[{i}]"), "scales must lie in (0,1)"));
        }
        check_lengths("n_grid", &self.n_grid)?;
        if let Some(g) = &self.rd_n_grid {
            check_lengths("rd_n_grid", g)?;
        }
        if let Some(DepthScheduleSpec::PerScale(d)) = &self.depth_schedule {
            if d.len() != eps.len() {
                return Err(config_err("depth_schedule.per_scale", "needs one depth per scale"));
            }
        }
        let t = &self.tolerances;
        let positive = [
            ("mdim_mbdim", t.mdim_mbdim),
            ("sweep_below", t.sweep_below),
            ("sweep_above", t.sweep_above),
            ("digit_pack_upper", t.digit_pack_upper),
            ("holder_lower", t.holder_lower),
            ("subadditivity", t.subadditivity),
            ("closed_form_bits", t.closed_form_bits),
            ("ba_tol", t.ba_tol),
            ("distortion_tol", t.distortion_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(config_err(format!("tolerances.{name}"), "must be positive"));
            }
        }
        if t.ba_max_iter == 0 {
            return Err(config_err("tolerances.ba_max_iter", "must be positive"));
        }
        let model = build_model(&self.model).map_err(|e| config_err("model", e.to_string()))?;
        let mut ids = Vec::new();
        for (i, m) in self.measures.iter().enumerate() {
            for (id, _) in build_measures(&model, m).map_err(|e| config_err(format!("measures[{i}]"), e.to_string()))? {
                if ids.contains(&id) {
                    return Err(config_err(format!("measures[{i}].id"), format!("duplicate measure id {id}")));
                }
                ids.push(id);
            }
        }
        for (i, c) in self.codecs.iter().enumerate() {
            let path = format!("codecs[{i}]");
            match c {
                CodecSpec::Identity { n } if *n == 0 => return Err(config_err(path + ".n", "must be >= 1")),
                CodecSpec::DigitPack { n, k, .. } | CodecSpec::RandomLinear { n, k, .. } if *k == 0 || k > n => {
                    return Err(config_err(path + ".k", "needs 1 <= k <= n"));
                }
                CodecSpec::RandomLinear { seed: None, .. } if self.seed.is_none() => {
                    return Err(config_err(path + ".seed", "random codecs need a seed here or at top level"));
                }
                _ => {}
            }
        }
        for (i, c) in self.checks.iter().enumerate() {
            let path = format!("checks[{i}]");
            let Some(info) = check_info(&c.id) else {
                return Err(config_err(path + ".id", format!("unknown check {}", c.id)));
            };
            if let Some(m) = &c.params.measure {
                if !ids.contains(m) {
                    return Err(config_err(path + ".params.measure", format!("unknown measure {m}")));
                }
            }
            if info.needs_measure && ids.is_empty() && c.params.measure.is_none() {
                return Err(config_err(path, format!("check {} needs at least one measure", c.id)));
            }
            if info.id == "linear-sandwich" && self.seed.is_none() {
                return Err(config_err(path, "linear-sandwich searches random codecs and needs a seed"));
            }
            if let Some(e) = c.params.eps_list.iter().flatten().find(|e| !(**e > 0.0 && **e < 1.0)) {
                return Err(config_err(path + ".params.eps_list", format!("scale {e} outside (0,1)")));
            }
            if let Some(d) = c.params.delta {
                if !(0.0..1.0).contains(&d) {
                    return Err(config_err(path + ".params.delta", "must lie in [0,1)"));
                }
            }
            if let Some(a) = c.params.alpha {
                if !(a > 0.0 && a < 1.0) {
                    return Err(config_err(path + ".params.alpha", "must lie in (0,1)"));
                }
            }
        }
        Ok(())
    }
}

fn check_lengths(path: &str, grid: &[usize]) -> Result<()> {
    if grid.is_empty() {
        return Err(config_err(path, "grid is empty"));
    }
    if let Some(i) = grid.iter().position(|&n| n == 0) {
        return Err(config_err(format!("{path}[{i}]"), "window lengths must be >= 1"));
    }
    Ok(())
}

fn build_alphabet(spec: &AlphabetSpec) -> Result<Alphabet> {
    match spec {
        AlphabetSpec::Letters(l) => Alphabet::new(l.clone()),
        AlphabetSpec::CantorDepth(d) => Alphabet::cantor(*d),
    }
}

pub fn build_model(spec: &ModelSpec) -> Result<SubshiftModel> {
    match spec {
        ModelSpec::FullShift { alphabet } => Ok(SubshiftModel::full_shift(build_alphabet(alphabet)?)),
        ModelSpec::GoldenMean => Ok(SubshiftModel::golden_mean()),
        ModelSpec::Sft { alphabet, allowed } => SubshiftModel::sft(build_alphabet(alphabet)?, allowed.clone()),
        ModelSpec::Sparse {
            alphabet,
            max_nonzero,
            window,
        } => SubshiftModel::sparse(build_alphabet(alphabet)?, *max_nonzero, *window),
        ModelSpec::Bundled { id } => bundled_model(id),
    }
}

/// Letter masses of the digit-biased Cantor measure.
pub fn digit_biased_probs(depth: u32, p: f64) -> Vec<f64> {
    (0u64..1 << depth)
        .map(|bits| {
            let twos = bits.count_ones() as i32;
            p.powi(twos) * (1.0 - p).powi(depth as i32 - twos)
        })
        .collect()
}

pub fn build_measures(model: &SubshiftModel, spec: &MeasureSpec) -> Result<Vec<(String, MeasureModel)>> {
    match spec {
        MeasureSpec::Uniform { id } => Ok(vec![(id.clone(), MeasureModel::uniform(model.clone())?)]),
        MeasureSpec::Bernoulli { id, probs } => Ok(vec![(id.clone(), MeasureModel::bernoulli(model.clone(), probs.clone())?)]),
        MeasureSpec::Markov {
            id,
            transition,
            initial,
        } => {
            let m = match initial {
                Some(init) => MeasureModel::markov(model.clone(), init.clone(), transition.clone())?,
                None => MeasureModel::markov_stationary(model.clone(), transition.clone())?,
            };
            Ok(vec![(id.clone(), m)])
        }
        MeasureSpec::DigitBiased { id, p } => {
            let Some(Refinement::MiddleThirdsCantor { depth }) = model.alphabet().refinement() else {
                return Err(Error::InvalidMeasure("digit-biased measures need a Cantor alphabet".into()));
            };
            if p.is_empty() || p.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
                return Err(Error::InvalidMeasure("digit probabilities must lie in (0,1)".into()));
            }
            p.iter()
                .map(|&v| {
                    Ok((
                        format!("{id}-p{v}"),
                        MeasureModel::bernoulli(model.clone(), digit_biased_probs(depth, v))?,
                    ))
                })
                .collect()
        }
    }
}

// ---------------------------------------------------------------------------
// Registries

pub const BUNDLED_MODELS: [(&str, &str); 4] = [
    ("full-shift-binary", "full shift on {0, 1}"),
    ("golden-mean-sft", "shift of finite type on {0, 1} forbidding 11"),
    ("cantor-full-shift", "full shift on the depth-6 middle-thirds Cantor letters"),
    ("sparse-shift", "sequences over {0, 0.5, 1} with at most one nonzero in every window of 3"),
];

pub fn bundled_model(id: &str) -> Result<SubshiftModel> {
    match id {
        "full-shift-binary" => Ok(SubshiftModel::full_shift(Alphabet::binary())),
        "golden-mean-sft" => Ok(SubshiftModel::golden_mean()),
        "cantor-full-shift" => Ok(SubshiftModel::full_shift(Alphabet::cantor(6)?)),
        "sparse-shift" => SubshiftModel::sparse(Alphabet::new(vec![0.0, 0.5, 1.0])?, 1, 3),
        other => Err(Error::UnknownId(other.to_string())),
    }
}

pub fn list_models() -> Vec<(&'static str, &'static str)> {
    BUNDLED_MODELS.to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckInfo {
    pub id: &'static str,
    pub title: &'static str,
    /// The inequality the check tests.
    pub anchor: &'static str,
    pub assertions: &'static [&'static str],
    pub needs_measure: bool,
}

pub const CHECKS: [CheckInfo; 10] = [
    CheckInfo {
        id: "mdim-vs-mbdim",
        title: "metric mean dimension is at most mean box dimension",
        anchor: "mdim_M(S) <= mbdim(S)",
        assertions: &["mdim_profile.value <= mbdim_estimate.value + tol"],
        needs_measure: false,
    },
    CheckInfo {
        id: "finite-entropy",
        title: "finite topological entropy forces zero metric mean dimension",
        anchor: "h_top(S) < inf => mdim_M(S) = 0",
        assertions: &[
            "log #(pi_n S, eps) / (n log 1/eps) <= threshold at the chosen eps",
            "the ratio strictly decreases as eps decreases",
        ],
        needs_measure: false,
    },
    CheckInfo {
        id: "variational-sweep",
        title: "rate-distortion variational principle",
        anchor: "mdim_M(S) = limsup_eps sup_mu R_mu(eps) / log(1/eps)",
        assertions: &["mdim - below <= sup over the measure grid of R_mu(eps)/log(1/eps) <= mdim + above"],
        needs_measure: true,
    },
    CheckInfo {
        id: "quantized-chain",
        title: "rate bound from a quantized Hölder codec",
        anchor: "R_mu((L/2^a + eps^(1-a)) eps^a) / log ceil(1/eps) <= k/n",
        assertions: &[
            "E (1/n) sum |X_k - Y_k| <= eps + L (eps/2)^a for Y = g(c(f(X)))",
            "I(X;Y) <= H(Y) <= k log ceil(1/eps)",
            "R_mu(n, (L/2^a + eps^(1-a)) eps^a) / log ceil(1/eps) <= k/n + 1e-9",
        ],
        needs_measure: true,
    },
    CheckInfo {
        id: "digit-pack-upper",
        title: "constructive Hölder codec meets the mean box dimension bound",
        anchor: "r_{H_(L,a)}(S, 0) <= min{1, 2/(1-a) mbdim(S)}",
        assertions: &[
            "emitted certificate passes the Hölder check",
            "k/n <= min{1, 2/(1-a) mbdim_estimate.value} + tol",
        ],
        needs_measure: true,
    },
    CheckInfo {
        id: "holder-lower",
        title: "Hölder decompressors cannot beat a times the metric mean dimension",
        anchor: "a mdim_M(S) <= sup_eps sup_mu r_{B-H_(L,a)}(mu, eps)",
        assertions: &["a * mdim_profile.value <= best digit-packing rate + tol"],
        needs_measure: true,
    },
    CheckInfo {
        id: "rb-lower",
        title: "measurable mean box dimension bounds Hölder rates from below",
        anchor: "a R_B(mu, delta) <= r_{B-H_a}(mu, delta)",
        assertions: &["a * rb_upper_bound <= digit-packing rate at error delta + tol"],
        needs_measure: true,
    },
    CheckInfo {
        id: "linear-sandwich",
        title: "linear compressors sit between a R_B and R_B/(1-a)",
        anchor: "a R_B(mu, eps) <= r_{LIN-H_a}(mu, eps) <= R_B(mu, eps)/(1-a)",
        assertions: &[
            "a * rb_upper_bound vs best random linear rate (informational)",
            "best random linear rate vs rb_upper_bound / (1-a) (informational)",
        ],
        needs_measure: true,
    },
    CheckInfo {
        id: "rd-subadditivity",
        title: "subadditivity of n R_mu(n, eps)",
        anchor: "(n+m) R_mu(n+m, eps) <= n R_mu(n, eps) + m R_mu(m, eps)",
        assertions: &["max over n+m <= N of the violation <= tol nats"],
        needs_measure: true,
    },
    CheckInfo {
        id: "ba-closed-form",
        title: "Blahut–Arimoto against the binary Hamming closed form",
        anchor: "R(D) = h(p) - h(D) for Bernoulli(p) under Hamming distortion",
        assertions: &["|rate_bits - (h(p) - h(D))| <= tol for each D"],
        needs_measure: false,
    },
];

/// Alternative identifiers accepted for checks.
const CHECK_ALIASES: [(&str, &str); 1] = [("thm6-chain", "quantized-chain")];

pub fn check_info(id: &str) -> Option<&'static CheckInfo> {
    let id = CHECK_ALIASES.iter().find(|(a, _)| *a == id).map_or(id, |(_, c)| c);
    CHECKS.iter().find(|c| c.id == id)
}

pub fn list_checks() -> Vec<&'static CheckInfo> {
    CHECKS.iter().collect()
}

/// Human-readable description of a bundled model or check.
pub fn describe(id: &str) -> Result<String> {
    if let Some(info) = check_info(id) {
        let mut out = format!("{}: {}\n  {}\n", info.id, info.title, info.anchor);
        for (i, a) in info.assertions.iter().enumerate() {
            out.push_str(&format!("  ({}) {a}\n", i + 1));
        }
        return Ok(out);
    }
    if let Some((mid, text)) = BUNDLED_MODELS.iter().find(|(m, _)| *m == id) {
        let model = bundled_model(mid)?;
        return Ok(format!(
            "{mid}: {text}\n  letters: {}\n  windows of length 8: {}\n",
            model.alphabet().len(),
            model.window_count(8)
        ));
    }
    Err(Error::UnknownId(id.to_string()))
}

// ---------------------------------------------------------------------------
// Report

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Relation {
    Le,
    Ge,
    Lt,
    /// `right - below <= left <= right + above`.
    Within { below: f64, above: f64 },
    /// Both sides are one-sided estimates pointing the same way; nothing is asserted.
    Informational,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Relation::Le => f.write_str("<="),
            Relation::Ge => f.write_str(">="),
            Relation::Lt => f.write_str("<"),
            Relation::Within { below, above } => write!(f, "within[-{below},+{above}]"),
            Relation::Informational => f.write_str("vs"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RowVerdict {
    Pass,
    Fail,
    Inapplicable,
    Info,
}

impl fmt::Display for RowVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RowVerdict::Pass => "pass",
            RowVerdict::Fail => "fail",
            RowVerdict::Inapplicable => "inapplicable",
            RowVerdict::Info => "info",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub check: String,
    pub name: String,
    pub anchor: String,
    pub left: f64,
    pub relation: Relation,
    pub right: f64,
    pub tolerance: f64,
    pub verdict: RowVerdict,
    pub left_source: String,
    pub right_source: String,
    pub note: String,
}

impl CheckRow {
    fn compare(
        info: &CheckInfo,
        name: impl Into<String>,
        left: (f64, &str),
        relation: Relation,
        right: (f64, &str),
        tolerance: f64,
    ) -> Self {
        let (l, r) = (left.0, right.0);
        let holds = match relation {
            Relation::Le => l <= r + tolerance,
            Relation::Ge => l >= r - tolerance,
            Relation::Lt => l < r + tolerance,
            Relation::Within { below, above } => l >= r - below && l <= r + above,
            Relation::Informational => true,
        };
        let verdict = match relation {
            Relation::Informational => RowVerdict::Info,
            _ if holds => RowVerdict::Pass,
            _ => RowVerdict::Fail,
        };
        CheckRow {
            check: info.id.to_string(),
            name: name.into(),
            anchor: info.anchor.to_string(),
            left: l,
            relation,
            right: r,
            tolerance,
            verdict,
            left_source: left.1.to_string(),
            right_source: right.1.to_string(),
            note: String::new(),
        }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    fn inapplicable(mut self, reason: impl Into<String>) -> Self {
        self.verdict = RowVerdict::Inapplicable;
        self.note = reason.into();
        self
    }
}

pub const REPORT_CSV_HEADER: [&str; 11] = [
    "check",
    "name",
    "anchor",
    "left",
    "relation",
    "right",
    "tolerance",
    "verdict",
    "left_source",
    "right_source",
    "note",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub config_name: String,
    pub seed: Option<u64>,
    pub rows: Vec<CheckRow>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.verdict != RowVerdict::Fail)
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.verdict == RowVerdict::Fail).count()
    }

    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.check.clone(),
                    r.name.clone(),
                    r.anchor.clone(),
                    r.left.to_string(),
                    r.relation.to_string(),
                    r.right.to_string(),
                    r.tolerance.to_string(),
                    r.verdict.to_string(),
                    r.left_source.clone(),
                    r.right_source.clone(),
                    r.note.clone(),
                ]
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("report {}", self.config_name);
        if let Some(s) = self.seed {
            out.push_str(&format!(" seed {s}"));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{:<12} {:<18} {:<34} {} {} {} (tol {})",
                r.verdict.to_string().to_uppercase(),
                r.check,
                r.name,
                r.left,
                r.relation,
                r.right,
                r.tolerance
            ));
            if !r.note.is_empty() {
                out.push_str(&format!("  [{}]", r.note));
            }
            out.push('\n');
        }
        out.push_str(&format!(
            "{} rows, {} failed\n",
            self.rows.len(),
            self.failures()
        ));
        out
    }
}

/// A CSV table with a fixed header.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Report plus named tables, merged in check order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOutput {
    pub report: Option<VerificationReport>,
    pub tables: BTreeMap<String, Table>,
}

impl RunOutput {
    fn merge_table(&mut self, name: &str, table: Table) {
        match self.tables.get_mut(name) {
            Some(t) => t.rows.extend(table.rows),
            None => {
                self.tables.insert(name.to_string(), table);
            }
        }
    }

    /// Writes `report.csv` (when present) and one CSV per table into `dir`.
    pub fn write_artifacts(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        if let Some(report) = &self.report {
            let table = Table {
                header: REPORT_CSV_HEADER.iter().map(|s| s.to_string()).collect(),
                rows: report.csv_rows(),
            };
            table.write(&dir.join("report.csv"))?;
        }
        for (name, table) in &self.tables {
            table.write(&dir.join(format!("{name}.csv")))?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Running

const COUNTS_HEADER: [&str; 8] = ["model", "n", "eps", "depth", "count", "exact", "ratio", "source"];
const MBDIM_HEADER: [&str; 6] = ["n", "slope", "intercept", "residual", "per_n_value", "running_min"];
const SWEEP_HEADER: [&str; 6] = ["eps", "measure_id", "rate_nats", "ratio", "sup_ratio", "mdim_value"];
const QUANTIZED_HEADER: [&str; 17] = [
    "codec_id",
    "eps",
    "L",
    "alpha",
    "cells_per_axis",
    "error_lossless",
    "mean_distortion",
    "distortion_bound",
    "mutual_information",
    "output_entropy",
    "capacity",
    "target_distortion",
    "rd_rate_nats",
    "display_lhs",
    "display_rhs",
    "verdict",
    "note",
];
const RATE_SEARCH_HEADER: [&str; 10] =
    ["check", "family", "measure_id", "n", "eps", "k", "rate", "achieved", "alpha", "holder_pass"];
const RB_HEADER: [&str; 7] = ["measure_id", "n", "delta", "value", "kept_atoms", "total_atoms", "kept_mass"];

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    model: SubshiftModel,
    measures: Vec<(String, MeasureModel)>,
    eps_grid: Vec<f64>,
    depths: DepthSchedule,
    rd_opts: RdOptions,
    seed: Option<u64>,
    mdim: OnceLock<Result<DimensionEstimate>>,
    mbdim: OnceLock<Result<DimensionEstimate>>,
}

impl<'a> Context<'a> {
    fn new(cfg: &'a ExperimentConfig, seed: Option<u64>) -> Result<Self> {
        cfg.validate()?;
        let model = build_model(&cfg.model)?;
        let mut measures = Vec::new();
        for spec in &cfg.measures {
            measures.extend(build_measures(&model, spec)?);
        }
        let depths = match &cfg.depth_schedule {
            None => DepthSchedule::Model,
            Some(DepthScheduleSpec::Fixed(d)) => DepthSchedule::Fixed(*d),
            Some(DepthScheduleSpec::PerScale(d)) => DepthSchedule::PerScale(d.clone()),
        };
        let t = &cfg.tolerances;
        Ok(Context {
            cfg,
            model,
            measures,
            eps_grid: cfg.eps_grid.values(),
            depths,
            rd_opts: RdOptions {
                ba_tol: t.ba_tol,
                max_iter: t.ba_max_iter,
                distortion_tol: t.distortion_tol,
            },
            seed: seed.or(cfg.seed),
            mdim: OnceLock::new(),
            mbdim: OnceLock::new(),
        })
    }

    fn model_id(&self) -> String {
        match &self.cfg.model {
            ModelSpec::Bundled { id } => id.clone(),
            _ => self.cfg.name.clone(),
        }
    }

    fn mdim(&self) -> Result<DimensionEstimate> {
        self.mdim
            .get_or_init(|| mdim_profile(&self.model, &self.eps_grid, &self.cfg.n_grid, &self.depths))
            .clone()
    }

    fn mbdim(&self) -> Result<DimensionEstimate> {
        self.mbdim
            .get_or_init(|| mbdim_estimate(&self.model, &self.cfg.n_grid, &self.eps_grid, &self.depths))
            .clone()
    }

    fn measure(&self, id: Option<&str>) -> Result<&(String, MeasureModel)> {
        match id {
            Some(id) => self
                .measures
                .iter()
                .find(|(m, _)| m == id)
                .ok_or_else(|| Error::UnknownId(id.to_string())),
            None => self
                .measures
                .first()
                .ok_or_else(|| Error::InvalidArgument("configuration has no measures".into())),
        }
    }

    fn digit_family(&self) -> CodecFamily {
        let floor = self.cfg.codecs.iter().find_map(|c| match c {
            CodecSpec::DigitPack {
                precision_floor: Some(f),
                ..
            } => Some(*f),
            _ => None,
        });
        CodecFamily::DigitPack {
            alphabet: self.model.alphabet().clone(),
            options: floor.map_or_else(DigitPackOptions::default, |f| DigitPackOptions { precision_floor: f }),
        }
    }

    /// Window length for codec checks: the parameter, else the largest digit-packing codec, else 2.
    fn codec_n(&self, params: &CheckParams) -> usize {
        params.n.unwrap_or_else(|| {
            self.cfg
                .codecs
                .iter()
                .filter(|c| matches!(c, CodecSpec::DigitPack { .. }))
                .map(CodecSpec::n)
                .max()
                .unwrap_or(2)
        })
    }

    fn build_codec(&self, index: usize, spec: &CodecSpec, law: &crate::subshifts::WindowLaw) -> Result<CodecPair> {
        match spec {
            CodecSpec::Identity { n } => identity_codec(*n),
            CodecSpec::DigitPack { n, k, precision_floor } => digit_pack_codec_with(
                self.model.alphabet(),
                *n,
                *k,
                precision_floor.map_or_else(DigitPackOptions::default, |f| DigitPackOptions { precision_floor: f }),
            ),
            CodecSpec::RandomLinear {
                k, seed, resolution, ..
            } => {
                let seed = seed
                    .or(self.seed.map(|s| s.wrapping_add(index as u64)))
                    .ok_or_else(|| Error::InvalidArgument("random codec without a seed".into()))?;
                let opts = resolution.map_or_else(RandomLinearOptions::default, |r| RandomLinearOptions { resolution: r });
                random_linear_codec_with(law, *k, seed, opts)
            }
        }
    }
}

/// Rows and tables produced by one check.
#[derive(Default)]
struct CheckOutput {
    rows: Vec<CheckRow>,
    tables: Vec<(&'static str, Table)>,
}

fn counts_table(model_id: &str, est: &DimensionEstimate, source: &str) -> Table {
    let mut t = Table::new(&COUNTS_HEADER);
    for r in &est.table {
        t.rows.push(vec![
            model_id.to_string(),
            r.n.to_string(),
            r.eps.to_string(),
            r.depth.map(|d| d.to_string()).unwrap_or_default(),
            r.count.to_string(),
            r.exact.to_string(),
            r.ratio.to_string(),
            source.to_string(),
        ]);
    }
    t
}

fn mbdim_table(est: &DimensionEstimate) -> Table {
    let mut t = Table::new(&MBDIM_HEADER);
    for ((n, fit), (_, running)) in est.per_n_fits.iter().zip(&est.upper_sequence) {
        let per_n = est.table.iter().find(|r| r.n == *n).map_or(f64::NAN, |r| r.ratio);
        t.rows.push(vec![
            n.to_string(),
            fit.slope.to_string(),
            fit.intercept.to_string(),
            fit.residual.to_string(),
            per_n.to_string(),
            running.to_string(),
        ]);
    }
    t
}

fn rate_search_row(check: &str, family: &str, measure: &str, n: usize, eps: f64, r: &RateSearchResult) -> Vec<String> {
    vec![
        check.to_string(),
        family.to_string(),
        measure.to_string(),
        n.to_string(),
        eps.to_string(),
        r.k.to_string(),
        r.rate.to_string(),
        r.achieved.to_string(),
        r.certificate.map(|c| c.alpha.to_string()).unwrap_or_default(),
        r.holder_pass.map(|p| p.to_string()).unwrap_or_default(),
    ]
}

fn quantized_row(rec: &QuantizedBoundRecord) -> Vec<String> {
    let (verdict, note) = match &rec.verdict {
        Verdict::Pass => ("pass", String::new()),
        Verdict::Fail => ("fail", String::new()),
        Verdict::Inapplicable(r) => ("inapplicable", r.clone()),
    };
    vec![
        rec.codec_id.clone(),
        rec.eps.to_string(),
        rec.l.to_string(),
        rec.alpha.to_string(),
        rec.cells_per_axis.to_string(),
        rec.error_prob_lossless.to_string(),
        rec.mean_distortion.to_string(),
        rec.distortion_bound.to_string(),
        rec.mutual_information.to_string(),
        rec.output_entropy.to_string(),
        rec.capacity.to_string(),
        rec.target_distortion.to_string(),
        rec.rd.map(|p| p.rate.to_string()).unwrap_or_default(),
        rec.display_lhs.to_string(),
        rec.display_rhs.to_string(),
        verdict.to_string(),
        note,
    ]
}

fn run_check(ctx: &Context<'_>, spec: &CheckSpec) -> Result<CheckOutput> {
    let info = check_info(&spec.id).ok_or_else(|| Error::UnknownId(spec.id.clone()))?;
    let params = &spec.params;
    let tol = &ctx.cfg.tolerances;
    let mut out = CheckOutput::default();
    match info.id {
        "mdim-vs-mbdim" => {
            let mdim = ctx.mdim()?;
            let mbdim = ctx.mbdim()?;
            out.rows.push(CheckRow::compare(
                info,
                "mdim <= mbdim",
                (mdim.value, "counts.csv: max over two smallest eps of ratio at largest n"),
                Relation::Le,
                (mbdim.value, "mbdim.csv: per_n_value at largest n"),
                tol.mdim_mbdim,
            ));
            out.tables.push(("counts", counts_table(&ctx.model_id(), &mdim, "profile")));
            out.tables.push(("mbdim", mbdim_table(&mbdim)));
        }
        "finite-entropy" => {
            let grid = params.eps_grid.as_ref().map_or_else(|| ctx.eps_grid.clone(), ScaleGrid::values);
            let n = params.n.unwrap_or_else(|| *ctx.cfg.n_grid.iter().max().unwrap());
            let threshold = params.threshold.unwrap_or(0.12);
            let mut sorted = grid.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            let at = params.eps.unwrap_or(*sorted.last().unwrap());
            let est = mdim_profile(&ctx.model, &sorted, &[n], &DepthSchedule::Model)?;
            let ratio_at = |e: f64| est.table.iter().find(|r| r.eps == e).map(|r| r.ratio);
            let Some(r_at) = ratio_at(at) else {
                return Err(config_err(format!("checks.{}.params.eps", info.id), "eps must belong to the grid"));
            };
            out.rows.push(CheckRow::compare(
                info,
                format!("ratio at eps={at}"),
                (r_at, "counts.csv: ratio"),
                Relation::Le,
                (threshold, "params.threshold"),
                0.0,
            ));
            let ratios: Vec<f64> = sorted.iter().filter_map(|&e| ratio_at(e)).collect();
            let worst_step = ratios.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
            if ratios.len() >= 2 {
                out.rows.push(CheckRow::compare(
                    info,
                    "strictly decreasing in eps",
                    (worst_step, "counts.csv: max successive change of ratio"),
                    Relation::Lt,
                    (0.0, "zero"),
                    0.0,
                ));
            }
            out.tables.push(("counts", counts_table(&ctx.model_id(), &est, "finite-entropy")));
        }
        "variational-sweep" => {
            let mdim = ctx.mdim()?;
            let eps_list = params
                .eps_list
                .clone()
                .or_else(|| params.eps_grid.as_ref().map(ScaleGrid::values))
                .unwrap_or_else(|| vec![params.eps.unwrap_or_else(|| ctx.eps_grid.iter().copied().fold(1.0, f64::min))]);
            let n_grid = params.n_grid.clone().unwrap_or_else(|| vec![1]);
            let refined;
            let measures = match params.depth {
                Some(d) => {
                    let model = ctx.model.with_depth(Some(d))?;
                    let mut built = Vec::new();
                    for spec in &ctx.cfg.measures {
                        built.extend(build_measures(&model, spec)?);
                    }
                    refined = built;
                    &refined
                }
                None => &ctx.measures,
            };
            let rows = variational_sweep(measures, &eps_list, &n_grid, &ctx.rd_opts)?;
            let mut table = Table::new(&SWEEP_HEADER);
            for row in &rows {
                for (id, rate) in &row.per_measure {
                    table.rows.push(vec![
                        row.eps.to_string(),
                        id.clone(),
                        rate.to_string(),
                        (rate / (1.0 / row.eps).ln()).to_string(),
                        row.sup_ratio.to_string(),
                        mdim.value.to_string(),
                    ]);
                }
                out.rows.push(
                    CheckRow::compare(
                        info,
                        format!("sup ratio at eps={}", row.eps),
                        (row.sup_ratio, "sweep.csv: sup_ratio"),
                        Relation::Within {
                            below: tol.sweep_below,
                            above: tol.sweep_above,
                        },
                        (mdim.value, "counts.csv: profile value"),
                        0.0,
                    )
                    .with_note(format!("grid supremum attained by {}", row.argmax)),
                );
            }
            out.tables.push(("sweep", table));
        }
        "quantized-chain" => {
            let (mid, measure) = ctx.measure(params.measure.as_deref())?;
            let eps_list = params.eps_list.clone().unwrap_or_else(|| vec![0.1, 0.03]);
            let mut table = Table::new(&QUANTIZED_HEADER);
            for (index, spec) in ctx.cfg.codecs.iter().enumerate() {
                if matches!(spec, CodecSpec::RandomLinear { .. }) {
                    continue;
                }
                let law = window_law(measure, spec.n())?;
                let codec = ctx.build_codec(index, spec, &law)?;
                for &eps in &eps_list {
                    let rec = quantized_codec_bound(&codec, eps, measure, spec.n(), &ctx.rd_opts)?;
                    table.rows.push(quantized_row(&rec));
                    let tag = format!("{} eps={eps}", codec.id);
                    let mut rows = vec![
                        CheckRow::compare(
                            info,
                            format!("distortion {tag}"),
                            (rec.mean_distortion, "quantized.csv: mean_distortion"),
                            Relation::Le,
                            (rec.distortion_bound, "quantized.csv: distortion_bound"),
                            1e-12,
                        ),
                        CheckRow::compare(
                            info,
                            format!("I(X;Y) <= H(Y) {tag}"),
                            (rec.mutual_information, "quantized.csv: mutual_information"),
                            Relation::Le,
                            (rec.output_entropy, "quantized.csv: output_entropy"),
                            1e-12,
                        ),
                        CheckRow::compare(
                            info,
                            format!("H(Y) <= k log m {tag}"),
                            (rec.output_entropy, "quantized.csv: output_entropy"),
                            Relation::Le,
                            (rec.capacity, "quantized.csv: capacity"),
                            1e-12,
                        ),
                        CheckRow::compare(
                            info,
                            format!("rate display {tag}"),
                            (rec.display_lhs, "quantized.csv: display_lhs"),
                            Relation::Le,
                            (rec.display_rhs, "quantized.csv: display_rhs (k/n + 1e-9)"),
                            0.0,
                        )
                        .with_note(format!("measure {mid}")),
                    ];
                    if let Verdict::Inapplicable(reason) = &rec.verdict {
                        rows = rows.into_iter().map(|r| r.inapplicable(reason.clone())).collect();
                    }
                    out.rows.extend(rows);
                }
            }
            out.tables.push(("quantized", table));
        }
        "digit-pack-upper" | "holder-lower" | "rb-lower" => {
            let (mid, measure) = ctx.measure(params.measure.as_deref())?;
            let n = ctx.codec_n(params);
            let law = window_law(measure, n)?;
            let family = ctx.digit_family();
            let search_eps = if info.id == "rb-lower" { params.delta.unwrap_or(0.1) } else { params.eps.unwrap_or(0.0) };
            let found = rate_search(&law, &family, search_eps, ErrorCriterion::Lossless)?;
            let mut searches = Table::new(&RATE_SEARCH_HEADER);
            searches.rows.push(rate_search_row(info.id, family.name(), mid, n, search_eps, &found));
            out.tables.push(("rate_search", searches));
            let Some(cert) = found.certificate.filter(|_| found.achieved) else {
                out.rows.push(CheckRow::compare(
                    info,
                    "digit packing achieves some k <= n",
                    (0.0, "rate_search.csv: achieved"),
                    Relation::Ge,
                    (1.0, "one"),
                    0.0,
                ));
                return Ok(out);
            };
            match info.id {
                "digit-pack-upper" => {
                    let codec = family.build(&law, found.k)?;
                    let report = codec.holder.clone().expect("digit codecs are certified at construction");
                    out.rows.push(CheckRow::compare(
                        info,
                        format!("certificate {}", codec.id),
                        (report.worst_ratio, "holder check: worst |dg|/|dx|^a"),
                        Relation::Le,
                        (cert.l, "certificate L"),
                        1e-12,
                    ).with_note(format!("{} pairs, alpha {}", report.pairs_checked, cert.alpha)));
                    let mbdim = ctx.mbdim()?;
                    let bound = if cert.alpha < 1.0 { (2.0 / (1.0 - cert.alpha) * mbdim.value).min(1.0) } else { 1.0 };
                    out.rows.push(
                        CheckRow::compare(
                            info,
                            format!("rate k/n at n={n}"),
                            (found.rate, "rate_search.csv: rate"),
                            Relation::Le,
                            (bound, "min{1, 2/(1-a) mbdim}"),
                            tol.digit_pack_upper,
                        )
                        .with_note("compressor is Borel, not linear"),
                    );
                }
                "holder-lower" => {
                    let mdim = ctx.mdim()?;
                    out.rows.push(CheckRow::compare(
                        info,
                        format!("a * mdim at n={n}"),
                        (cert.alpha * mdim.value, "alpha * counts.csv profile value"),
                        Relation::Le,
                        (found.rate, "rate_search.csv: rate"),
                        tol.holder_lower,
                    ));
                }
                _ => {
                    let delta = params.delta.unwrap_or(0.1);
                    let rb = rb_upper_bound(measure, delta, n, &ctx.model.alphabet().natural_scales())?;
                    let mut rb_table = Table::new(&RB_HEADER);
                    rb_table.rows.push(rb_row(mid, &rb));
                    out.tables.push(("rb", rb_table));
                    out.rows.push(CheckRow::compare(
                        info,
                        format!("a * R_B at delta={delta}, n={n}"),
                        (cert.alpha * rb.value, "alpha * rb.csv: value"),
                        Relation::Le,
                        (found.rate, "rate_search.csv: rate"),
                        tol.holder_lower,
                    ).with_note("both sides are upper bounds"));
                }
            }
        }
        "linear-sandwich" => {
            let (mid, measure) = ctx.measure(params.measure.as_deref())?;
            let n = ctx.codec_n(params);
            let alpha = params.alpha.unwrap_or(0.5);
            let delta = params.delta.unwrap_or(0.1);
            let law = window_law(measure, n)?;
            let family = CodecFamily::RandomLinear {
                seed: ctx.seed.expect("validated"),
                options: RandomLinearOptions::default(),
            };
            let found = rate_search(&law, &family, delta, ErrorCriterion::Lossless)?;
            let rb = rb_upper_bound(measure, delta, n, &ctx.model.alphabet().natural_scales())?;
            let mut searches = Table::new(&RATE_SEARCH_HEADER);
            searches.rows.push(rate_search_row(info.id, family.name(), mid, n, delta, &found));
            out.tables.push(("rate_search", searches));
            let mut rb_table = Table::new(&RB_HEADER);
            rb_table.rows.push(rb_row(mid, &rb));
            out.tables.push(("rb", rb_table));
            let note = "decoder is nearest-image (Borel); compressor affine-normalized";
            out.rows.push(
                CheckRow::compare(
                    info,
                    format!("a * R_B vs linear rate, a={alpha}"),
                    (alpha * rb.value, "alpha * rb.csv: value"),
                    Relation::Informational,
                    (found.rate, "rate_search.csv: rate"),
                    0.0,
                )
                .with_note(note),
            );
            out.rows.push(
                CheckRow::compare(
                    info,
                    format!("linear rate vs R_B/(1-a), a={alpha}"),
                    (found.rate, "rate_search.csv: rate"),
                    Relation::Informational,
                    (rb.value / (1.0 - alpha), "rb.csv: value / (1 - alpha)"),
                    0.0,
                )
                .with_note(note),
            );
        }
        "rd-subadditivity" => {
            let (mid, measure) = ctx.measure(params.measure.as_deref())?;
            let eps = params.eps.unwrap_or(0.05);
            let n_max = params.n.unwrap_or(8);
            let windows = ctx.model.window_count(n_max);
            if windows > DEFAULT_WINDOW_CAP {
                return Err(Error::CapExceeded {
                    op: "window_set",
                    n: n_max,
                    depth: ctx.model.alphabet().depth(),
                    requested: windows,
                    cap: DEFAULT_WINDOW_CAP,
                });
            }
            let points = (1..=n_max)
                .into_par_iter()
                .map(|n| rd_block(measure, n, eps, &ctx.rd_opts))
                .collect::<Result<Vec<_>>>()?;
            let total = |n: usize| n as f64 * points[n - 1].rate;
            let mut worst = f64::NEG_INFINITY;
            let mut at = (0, 0);
            for n in 1..n_max {
                for m in 1..=n_max - n {
                    let v = total(n + m) - total(n) - total(m);
                    if v > worst {
                        worst = v;
                        at = (n, m);
                    }
                }
            }
            let mut table = Table::new(&RD_CSV_HEADER);
            table.rows.extend(points.iter().map(|p| p.csv_row(mid, eps)));
            out.tables.push(("rd", table));
            if n_max >= 2 {
                out.rows.push(
                    CheckRow::compare(
                        info,
                        format!("max violation, n+m <= {n_max}"),
                        (worst, "rd.csv: (n+m)R(n+m) - nR(n) - mR(m)"),
                        Relation::Le,
                        (0.0, "zero"),
                        tol.subadditivity,
                    )
                    .with_note(format!("worst at n={} m={}", at.0, at.1)),
                );
            }
        }
        "ba-closed-form" => {
            let p = params.p.unwrap_or(0.3);
            let eps_list = params.eps_list.clone().unwrap_or_else(|| vec![0.05, 0.1, 0.2]);
            if !(p > 0.0 && p < 1.0) {
                return Err(config_err(format!("checks.{}.params.p", info.id), "must lie in (0,1)"));
            }
            let mu = MeasureModel::bernoulli(SubshiftModel::full_shift(Alphabet::binary()), vec![1.0 - p, p])?;
            let h = |x: f64| entropy(&[x, 1.0 - x]) / std::f64::consts::LN_2;
            let mut table = Table::new(&RD_CSV_HEADER);
            for &d in &eps_list {
                let point = rd_block(&mu, 1, d, &ctx.rd_opts)?;
                let oracle = if d < p.min(1.0 - p) { h(p) - h(d) } else { 0.0 };
                table.rows.push(point.csv_row(&format!("bernoulli-{p}"), d));
                out.rows.push(CheckRow::compare(
                    info,
                    format!("p={p} D={d}"),
                    ((point.rate_bits - oracle).abs(), "rd.csv: |rate_bits - closed form|"),
                    Relation::Le,
                    (0.0, "zero"),
                    tol.closed_form_bits,
                ));
            }
            out.tables.push(("rd", table));
        }
        other => return Err(Error::UnknownId(other.to_string())),
    }
    Ok(out)
}

fn rb_row(measure_id: &str, rb: &crate::dimensions::RbBound) -> Vec<String> {
    vec![
        measure_id.to_string(),
        rb.n.to_string(),
        rb.delta.to_string(),
        rb.value.to_string(),
        rb.kept_atoms.to_string(),
        rb.total_atoms.to_string(),
        rb.kept_mass.to_string(),
    ]
}

/// Runs every configured check. `seed` overrides the config's master seed.
pub fn run(cfg: &ExperimentConfig, seed: Option<u64>) -> Result<RunOutput> {
    let ctx = Context::new(cfg, seed)?;
    let outputs = cfg
        .checks
        .par_iter()
        .map(|spec| run_check(&ctx, spec))
        .collect::<Result<Vec<_>>>()?;
    let mut run = RunOutput::default();
    let mut rows = Vec::new();
    for out in outputs {
        rows.extend(out.rows);
        for (name, table) in out.tables {
            run.merge_table(name, table);
        }
    }
    run.report = Some(VerificationReport {
        config_name: cfg.name.clone(),
        seed: ctx.seed,
        rows,
    });
    Ok(run)
}

/// Dimension tables: covering counts, mean box fits, and a text summary.
pub fn run_dims(cfg: &ExperimentConfig) -> Result<(RunOutput, String)> {
    let ctx = Context::new(cfg, None)?;
    let mdim = ctx.mdim()?;
    let mbdim = ctx.mbdim()?;
    let mut run = RunOutput::default();
    run.merge_table("counts", counts_table(&ctx.model_id(), &mdim, "profile"));
    run.merge_table("mbdim", mbdim_table(&mbdim));
    let summary = format!(
        "{}: mdim_profile {} mbdim_estimate {}\n",
        cfg.name, mdim.value, mbdim.value
    );
    Ok((run, summary))
}

/// Block rate-distortion values for every measure and scale.
pub fn run_rd(cfg: &ExperimentConfig) -> Result<(RunOutput, String)> {
    let ctx = Context::new(cfg, None)?;
    let n_grid = cfg.rd_n_grid.clone().unwrap_or_else(|| vec![1]);
    let cells: Vec<(usize, f64)> = (0..ctx.measures.len())
        .flat_map(|m| ctx.eps_grid.iter().map(move |&e| (m, e)))
        .collect();
    let limits = cells
        .par_iter()
        .map(|&(m, e)| rd_limit_estimate(&ctx.measures[m].1, e, &n_grid, &ctx.rd_opts))
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(&RD_CSV_HEADER);
    let mut summary = String::new();
    for (&(m, e), lim) in cells.iter().zip(&limits) {
        let id = &ctx.measures[m].0;
        table.rows.extend(lim.sequence.iter().map(|p| p.csv_row(id, e)));
        summary.push_str(&format!("{id} eps={e} R={} nats\n", lim.estimate));
    }
    let mut run = RunOutput::default();
    run.merge_table("rd", table);
    Ok((run, summary))
}

/// Error probabilities and distortions of every configured codec on the first measure.
pub fn run_codecs(cfg: &ExperimentConfig, seed: Option<u64>) -> Result<(RunOutput, String)> {
    let ctx = Context::new(cfg, seed)?;
    let eps = cfg.codec_eps.unwrap_or(0.1);
    let mut table = Table::new(&CODEC_CSV_HEADER);
    let mut summary = String::new();
    let measure = match cfg.codecs.is_empty() {
        true => None,
        false => Some(&ctx.measure(None)?.1),
    };
    for (index, spec) in cfg.codecs.iter().enumerate() {
        let law = window_law(measure.expect("codecs need a measure"), spec.n())?;
        let codec = ctx.build_codec(index, spec, &law)?;
        let report = apply_codec(&codec, CodecSource::Law(&law), eps, f64::INFINITY)?;
        summary.push_str(&format!(
            "{} rate {} error {} distortion {}\n",
            codec.id,
            codec.rate(),
            report.error_prob_lossless,
            report.mean_distortion
        ));
        table.rows.push(codec_csv_row(&codec, &report));
    }
    let mut run = RunOutput::default();
    run.merge_table("codecs", table);
    Ok((run, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(checks: &str) -> String {
        format!(
            r#"{{
                "schema_version": 1,
                "name": "t",
                "model": {{"kind": "bundled", "id": "full-shift-binary"}},
                "measures": [{{"kind": "uniform", "id": "u"}}],
                "eps_grid": [0.1, 0.01, 0.001],
                "n_grid": [1, 2],
                "checks": {checks}
            }}"#
        )
    }

    #[test]
    fn empty_check_set_gives_empty_report() {
        let cfg = ExperimentConfig::from_json(&minimal("[]")).unwrap();
        let out = run(&cfg, None).unwrap();
        let report = out.report.unwrap();
        assert!(report.rows.is_empty());
        assert!(report.passed());
    }

    #[test]
    fn validation_names_field_paths() {
        let bad = minimal("[]").replace("\"n_grid\": [1, 2]", "\"n_grid\": [1, 0]");
        match ExperimentConfig::from_json(&bad) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "n_grid[1]"),
            other => panic!("{other:?}"),
        }
        let bad = minimal(r#"[{"id": "nonexistent"}]"#);
        match ExperimentConfig::from_json(&bad) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "checks[0].id"),
            other => panic!("{other:?}"),
        }
        let bad = minimal("[]").replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(matches!(ExperimentConfig::from_json(&bad), Err(Error::Config { .. })));
        assert!(matches!(ExperimentConfig::from_json("{"), Err(Error::Config { .. })));
    }

    #[test]
    fn random_codecs_need_a_seed() {
        let cfg = minimal("[]").replace(
            "\"checks\"",
            "\"codecs\": [{\"family\": \"random_linear\", \"n\": 2, \"k\": 1}], \"checks\"",
        );
        match ExperimentConfig::from_json(&cfg) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "codecs[0].seed"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rd_beyond_cap_names_window_set() {
        let cfg = ExperimentConfig::from_json(&minimal(r#"[{"id": "rd-subadditivity", "params": {"n": 21}}]"#)).unwrap();
        match run(&cfg, None) {
            Err(Error::CapExceeded { op, n, cap, .. }) => {
                assert_eq!(op, "window_set");
                assert!(n >= 20);
                assert_eq!(cap, 1_000_000);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn registries() {
        let ids: Vec<&str> = list_models().iter().map(|m| m.0).collect();
        for id in ["full-shift-binary", "golden-mean-sft", "cantor-full-shift", "sparse-shift"] {
            assert!(ids.contains(&id));
            bundled_model(id).unwrap();
        }
        let text = describe("thm6-chain").unwrap();
        assert!(text.contains("log ceil(1/eps) <= k/n"));
        assert_eq!(text.matches("\n  (").count(), 3);
        assert!(matches!(describe("nonexistent"), Err(Error::UnknownId(_))));
    }

    #[test]
    fn digit_biased_masses() {
        let p = digit_biased_probs(3, 0.2);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((p[0] - 0.8f64.powi(3)).abs() < 1e-15);
        assert!((p[7] - 0.2f64.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn closed_form_check_passes() {
        let cfg = ExperimentConfig::from_json(&minimal(r#"[{"id": "ba-closed-form"}]"#)).unwrap();
        let out = run(&cfg, None).unwrap();
        let report = out.report.unwrap();
        assert_eq!(report.rows.len(), 3);
        assert!(report.passed(), "{}", report.to_text());
        assert_eq!(out.tables["rd"].rows.len(), 3);
    }
}
