//! Inter-token-latency side channel.
//!
//! A probe request's gaps are summarised into eight features and classified
//! into KV-usage bins by a small gradient-boosted tree ensemble (softmax
//! objective, histogram split finding, Newton leaf values).

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::StreamRng;
use crate::stats;

pub const N_FEATURES: usize = 8;
pub const FEATURE_NAMES: [&str; N_FEATURES] = ["mean", "median", "p95", "stddev", "min", "max", "last", "slope"];
pub const MODEL_FORMAT_VERSION: u32 = 1;

pub type Features = [f64; N_FEATURES];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProbeError {
    #[error("window of {len} gaps is shorter than {min}")]
    WindowTooShort { len: usize, min: usize },
    #[error("bin {bin} has {count} samples, need at least {needed}")]
    InsufficientCoverage { bin: usize, count: usize, needed: usize },
    #[error("{have} samples, need at least {needed}")]
    InsufficientSamples { have: usize, needed: usize },
    #[error("label {bin} outside {n_bins} bins")]
    BadLabel { bin: usize, n_bins: usize },
    #[error("invalid model: {0}")]
    InvalidModel(&'static str),
}

/// Samples per bin below which training refuses to run.
pub const MIN_PER_BIN: usize = 10;
/// Total samples per bin expected by training.
pub const SAMPLES_PER_BIN: usize = 50;

/// `[mean, median, p95, stddev, min, max, last, slope]` of the gaps.
pub fn extract_features(gaps_us: &[u64], min_window: usize) -> Result<Features, ProbeError> {
    if gaps_us.len() < min_window.max(1) {
        return Err(ProbeError::WindowTooShort {
            len: gaps_us.len(),
            min: min_window,
        });
    }
    let xs: Vec<f64> = gaps_us.iter().map(|g| *g as f64).collect();
    let mut sorted = xs.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let p95_rank = libm::ceil(0.95 * n as f64) as usize;
    Ok([
        stats::mean(&xs),
        median,
        sorted[p95_rank.max(1) - 1],
        stats::stddev(&xs),
        sorted[0],
        sorted[n - 1],
        xs[n - 1],
        stats::index_slope(&xs),
    ])
}

/// How usage in `[0, 1]` is cut into classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BinEdges {
    Uniform,
    /// Uniform bins with one extra edge at the saturation threshold, so the
    /// top band gets its own class. `None` takes the attacker's threshold.
    SaturationSplit {
        #[serde(default)]
        c_sat: Option<f64>,
    },
    Explicit {
        edges: Vec<f64>,
    },
}

impl BinEdges {
    pub fn edges(&self, n_bins: usize, default_c_sat: f64) -> Vec<f64> {
        let uniform = || (0..=n_bins).map(|i| i as f64 / n_bins as f64).collect::<Vec<_>>();
        match self {
            BinEdges::Uniform => uniform(),
            BinEdges::SaturationSplit { c_sat } => {
                let c = c_sat.unwrap_or(default_c_sat);
                let mut e = uniform();
                if !e.iter().any(|x| (x - c).abs() < 1e-12) {
                    e.push(c);
                    e.sort_by(f64::total_cmp);
                }
                e
            }
            BinEdges::Explicit { edges } => edges.clone(),
        }
    }
}

/// Checks that `edges` partition `[0, 1]`.
pub fn validate_edges(edges: &[f64]) -> Result<(), ProbeError> {
    if edges.len() < 3 || edges[0] != 0.0 || edges[edges.len() - 1] != 1.0 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ProbeError::InvalidModel("bin edges must increase strictly from 0 to 1"));
    }
    Ok(())
}

/// Class of usage `u` under `edges`; 1.0 falls in the top bin.
pub fn bin_of(u: f64, edges: &[f64]) -> usize {
    let n = edges.len() - 1;
    let idx = edges.partition_point(|e| *e <= u);
    idx.saturating_sub(1).min(n - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtParams {
    pub n_trees: u32,
    pub max_depth: u32,
    pub learning_rate: f64,
    pub max_bins: u32,
    pub min_samples_leaf: u32,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            n_trees: 60,
            max_depth: 3,
            learning_rate: 0.3,
            max_bins: 256,
            min_samples_leaf: 4,
            lambda: 1.0,
            seed: 7,
        }
    }
}

/// Offline data collection for the classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Added to the run seed so calibration traffic never replays the run.
    pub seed_offset: u64,
    /// Closed-loop client counts, one calibration run each. Sized for a
    /// 32768-token pool; see [`CalibrationConfig::levels_for`].
    pub concurrency_levels: Vec<u32>,
    pub horizon_us: u64,
    /// Probe requests kept in flight during calibration.
    pub probes_in_flight: u32,
    /// Output length range of the calibration traffic.
    pub output_min: u32,
    pub output_max: u32,
}

impl CalibrationConfig {
    /// Concurrency levels scaled to a pool of `capacity_tokens`, so every
    /// pool size gets traffic from idle to saturated.
    pub fn levels_for(&self, capacity_tokens: u64) -> Vec<u32> {
        let scale = capacity_tokens as f64 / 32_768.0;
        let mut v: Vec<u32> = self
            .concurrency_levels
            .iter()
            .map(|c| (libm::round(f64::from(*c) * scale) as u32).max(1))
            .collect();
        v.dedup();
        v
    }
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            seed_offset: 0x5eed_ca11,
            concurrency_levels: vec![1, 2, 4, 8, 12, 16, 24, 32, 48, 64],
            horizon_us: 240_000_000,
            probes_in_flight: 4,
            output_min: 500,
            output_max: 6000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    /// Classes for standalone training with uniform edges.
    pub n_bins: u32,
    pub edges: BinEdges,
    /// Edges of the classifier the closed-loop attacker trains for itself.
    pub attacker_edges: BinEdges,
    /// Gaps per decision window.
    pub window: u32,
    pub min_window: u32,
    /// New gaps between successive decisions.
    pub stride: u32,
    pub hyper: GbdtParams,
    pub calibration: CalibrationConfig,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            n_bins: 10,
            edges: BinEdges::Uniform,
            attacker_edges: BinEdges::SaturationSplit { c_sat: None },
            window: 32,
            min_window: 8,
            stride: 8,
            hyper: GbdtParams::default(),
            calibration: CalibrationConfig::default(),
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.n_bins < 2 {
            return Err("probe.n_bins must be >= 2");
        }
        if self.min_window < 2 || self.window < self.min_window {
            return Err("probe windows need 2 <= min_window <= window");
        }
        if self.stride == 0 {
            return Err("probe.stride must be >= 1");
        }
        let h = &self.hyper;
        if h.n_trees == 0
            || h.max_depth == 0
            || h.max_bins < 2
            || h.learning_rate.is_nan()
            || h.learning_rate <= 0.0
            || h.lambda.is_nan()
            || h.lambda < 0.0
        {
            return Err("probe.hyper out of range");
        }
        if self.calibration.concurrency_levels.is_empty()
            || self.calibration.output_min == 0
            || self.calibration.output_min > self.calibration.output_max
        {
            return Err("probe.calibration needs concurrency levels and 1 <= output_min <= output_max");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: Features,
    pub true_bin: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: u8,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub class: u16,
    pub weight: f64,
    pub nodes: Vec<Node>,
}

impl Tree {
    fn eval(&self, x: &Features) -> f64 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value * self.weight,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature as usize] <= *threshold {
                        *left
                    } else {
                        *right
                    } as usize;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub bin: usize,
    pub usage_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub format_version: u32,
    pub n_bins: usize,
    pub feature_names: Vec<String>,
    pub bin_edges: Vec<f64>,
    pub min_window: usize,
    pub base_scores: Vec<f64>,
    pub trees: Vec<Tree>,
    pub holdout_accuracy: f64,
}

impl ProbeModel {
    pub fn validate(&self) -> Result<(), ProbeError> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(ProbeError::InvalidModel("unsupported format_version"));
        }
        validate_edges(&self.bin_edges)?;
        if self.bin_edges.len() != self.n_bins + 1 || self.base_scores.len() != self.n_bins {
            return Err(ProbeError::InvalidModel("bin count mismatch"));
        }
        if self.feature_names.len() != N_FEATURES || self.feature_names.iter().zip(FEATURE_NAMES).any(|(a, b)| a != b) {
            return Err(ProbeError::InvalidModel("feature spec mismatch"));
        }
        for t in &self.trees {
            if usize::from(t.class) >= self.n_bins {
                return Err(ProbeError::InvalidModel("tree class out of range"));
            }
            for n in &t.nodes {
                if let Node::Split {
                    feature, left, right, ..
                } = n
                {
                    if usize::from(*feature) >= N_FEATURES
                        || *left as usize >= t.nodes.len()
                        || *right as usize >= t.nodes.len()
                    {
                        return Err(ProbeError::InvalidModel("dangling tree node"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn scores(&self, x: &Features) -> Vec<f64> {
        let mut s = self.base_scores.clone();
        for t in &self.trees {
            s[usize::from(t.class)] += t.eval(x);
        }
        s
    }

    pub fn classify(&self, x: &Features) -> usize {
        argmax(&self.scores(x))
    }

    pub fn midpoint(&self, bin: usize) -> f64 {
        (self.bin_edges[bin] + self.bin_edges[bin + 1]) / 2.0
    }

    pub fn predict(&self, gaps_us: &[u64]) -> Result<Prediction, ProbeError> {
        let x = extract_features(gaps_us, self.min_window)?;
        let bin = self.classify(&x);
        Ok(Prediction {
            bin,
            usage_estimate: self.midpoint(bin),
        })
    }

    pub fn accuracy(&self, samples: &[LabeledSample]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        let hits = samples
            .iter()
            .filter(|s| self.classify(&s.features) == s.true_bin)
            .count();
        hits as f64 / samples.len() as f64
    }

    /// Rows: true bin, columns: predicted bin.
    pub fn confusion(&self, samples: &[LabeledSample]) -> Vec<Vec<u32>> {
        let mut m = vec![vec![0u32; self.n_bins]; self.n_bins];
        for s in samples {
            m[s.true_bin][self.classify(&s.features)] += 1;
        }
        m
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ProbeModel,
    pub holdout_accuracy: f64,
    pub confusion: Vec<Vec<u32>>,
    pub n_train: usize,
    pub n_test: usize,
}

/// Per-bin sample counts.
pub fn coverage(samples: &[LabeledSample], n_bins: usize) -> Vec<usize> {
    let mut c = vec![0usize; n_bins];
    for s in samples {
        if s.true_bin < n_bins {
            c[s.true_bin] += 1;
        }
    }
    c
}

/// Trains on a deterministic 80 % split and reports accuracy on the rest.
pub fn train(
    samples: &[LabeledSample],
    edges: &[f64],
    min_window: usize,
    hyper: &GbdtParams,
) -> Result<TrainOutcome, ProbeError> {
    validate_edges(edges)?;
    let n_bins = edges.len() - 1;
    if let Some(s) = samples.iter().find(|s| s.true_bin >= n_bins) {
        return Err(ProbeError::BadLabel {
            bin: s.true_bin,
            n_bins,
        });
    }
    for (bin, count) in coverage(samples, n_bins).into_iter().enumerate() {
        if count < MIN_PER_BIN {
            return Err(ProbeError::InsufficientCoverage {
                bin,
                count,
                needed: MIN_PER_BIN,
            });
        }
    }
    let needed = n_bins * SAMPLES_PER_BIN;
    if samples.len() < needed {
        return Err(ProbeError::InsufficientSamples {
            have: samples.len(),
            needed,
        });
    }

    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut StreamRng::seed_from_u64(hyper.seed));
    let n_train = samples.len() * 4 / 5;
    let train_set: Vec<LabeledSample> = order[..n_train].iter().map(|i| samples[*i].clone()).collect();
    let test_set: Vec<LabeledSample> = order[n_train..].iter().map(|i| samples[*i].clone()).collect();

    let mut model = fit(&train_set, edges, min_window, hyper);
    let holdout_accuracy = model.accuracy(&test_set);
    model.holdout_accuracy = holdout_accuracy;
    Ok(TrainOutcome {
        confusion: model.confusion(&test_set),
        model,
        holdout_accuracy,
        n_train,
        n_test: test_set.len(),
    })
}

/// Split candidates per feature: `x <= thresholds[j]` goes left.
fn feature_thresholds(samples: &[LabeledSample], f: usize, max_bins: usize) -> Vec<f64> {
    let mut v: Vec<f64> = samples.iter().map(|s| s.features[f]).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    if v.len() <= 1 {
        return Vec::new();
    }
    if v.len() <= max_bins {
        return v.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
    }
    let mut t: Vec<f64> = (1..max_bins)
        .map(|i| {
            let k = i * v.len() / max_bins;
            (v[k - 1] + v[k]) / 2.0
        })
        .collect();
    t.dedup();
    t
}

struct Binned {
    thresholds: Vec<Vec<f64>>,
    /// bins[f][i]: histogram bin of sample i on feature f
    bins: Vec<Vec<u16>>,
}

impl Binned {
    fn new(samples: &[LabeledSample], max_bins: usize) -> Self {
        let thresholds: Vec<Vec<f64>> = (0..N_FEATURES)
            .map(|f| feature_thresholds(samples, f, max_bins))
            .collect();
        let bins = (0..N_FEATURES)
            .map(|f| {
                samples
                    .iter()
                    .map(|s| thresholds[f].partition_point(|t| *t < s.features[f]) as u16)
                    .collect()
            })
            .collect();
        Self { thresholds, bins }
    }
}

struct Grower<'a> {
    binned: &'a Binned,
    grad: &'a [f64],
    hess: &'a [f64],
    hyper: &'a GbdtParams,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn leaf(&self, idx: &[usize]) -> Node {
        let g: f64 = idx.iter().map(|i| self.grad[*i]).sum();
        let h: f64 = idx.iter().map(|i| self.hess[*i]).sum();
        Node::Leaf {
            value: -g / (h + self.hyper.lambda),
        }
    }

    fn grow(&mut self, idx: Vec<usize>, depth: u32) -> u32 {
        let at = self.nodes.len() as u32;
        self.nodes.push(Node::Leaf { value: 0.0 });
        let min_leaf = self.hyper.min_samples_leaf.max(1) as usize;
        let split = if depth < self.hyper.max_depth && idx.len() >= 2 * min_leaf {
            self.best_split(&idx, min_leaf)
        } else {
            None
        };
        let Some((f, j)) = split else {
            self.nodes[at as usize] = self.leaf(&idx);
            return at;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|i| (self.binned.bins[f][*i] as usize) <= j);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[at as usize] = Node::Split {
            feature: f as u8,
            threshold: self.binned.thresholds[f][j],
            left,
            right,
        };
        at
    }

    fn best_split(&self, idx: &[usize], min_leaf: usize) -> Option<(usize, usize)> {
        let lambda = self.hyper.lambda;
        let g_tot: f64 = idx.iter().map(|i| self.grad[*i]).sum();
        let h_tot: f64 = idx.iter().map(|i| self.hess[*i]).sum();
        let parent = g_tot * g_tot / (h_tot + lambda);
        let mut best: Option<(f64, usize, usize)> = None;
        for f in 0..N_FEATURES {
            let nt = self.binned.thresholds[f].len();
            if nt == 0 {
                continue;
            }
            let mut hg = vec![0.0; nt + 1];
            let mut hh = vec![0.0; nt + 1];
            let mut hc = vec![0usize; nt + 1];
            for i in idx {
                let b = self.binned.bins[f][*i] as usize;
                hg[b] += self.grad[*i];
                hh[b] += self.hess[*i];
                hc[b] += 1;
            }
            let (mut gl, mut hl, mut cl) = (0.0, 0.0, 0usize);
            for j in 0..nt {
                gl += hg[j];
                hl += hh[j];
                cl += hc[j];
                let cr = idx.len() - cl;
                if cl < min_leaf || cr < min_leaf {
                    continue;
                }
                let gr = g_tot - gl;
                let hr = h_tot - hl;
                let gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
                if gain > 1e-9 && best.is_none_or(|(bg, _, _)| gain > bg) {
                    best = Some((gain, f, j));
                }
            }
        }
        best.map(|(_, f, j)| (f, j))
    }
}

fn fit(samples: &[LabeledSample], edges: &[f64], min_window: usize, hyper: &GbdtParams) -> ProbeModel {
    let n_bins = edges.len() - 1;
    let n = samples.len();
    let counts = coverage(samples, n_bins);
    let base_scores: Vec<f64> = counts
        .iter()
        .map(|c| libm::log((*c as f64 + 1.0) / (n as f64 + n_bins as f64)))
        .collect();
    let binned = Binned::new(samples, hyper.max_bins as usize);
    let mut raw: Vec<Vec<f64>> = vec![base_scores.clone(); n];
    let mut trees = Vec::new();
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    for _ in 0..hyper.n_trees {
        let probs: Vec<Vec<f64>> = raw.iter().map(|r| softmax(r)).collect();
        for k in 0..n_bins {
            for i in 0..n {
                let p = probs[i][k];
                let y = if samples[i].true_bin == k { 1.0 } else { 0.0 };
                grad[i] = p - y;
                hess[i] = (p * (1.0 - p)).max(1e-6);
            }
            let mut g = Grower {
                binned: &binned,
                grad: &grad,
                hess: &hess,
                hyper,
                nodes: Vec::new(),
            };
            g.grow((0..n).collect(), 0);
            let tree = Tree {
                class: k as u16,
                weight: hyper.learning_rate,
                nodes: g.nodes,
            };
            for (i, s) in samples.iter().enumerate() {
                raw[i][k] += tree.eval(&s.features);
            }
            trees.push(tree);
        }
    }
    ProbeModel {
        format_version: MODEL_FORMAT_VERSION,
        n_bins,
        feature_names: FEATURE_NAMES.iter().map(|s| String::from(*s)).collect(),
        bin_edges: edges.to_vec(),
        min_window,
        base_scores,
        trees,
        holdout_accuracy: 0.0,
    }
}

fn softmax(r: &[f64]) -> Vec<f64> {
    let m = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = r.iter().map(|x| libm::exp(x - m)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}
