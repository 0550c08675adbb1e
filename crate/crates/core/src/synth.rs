//! Seeded synthetic graphs with a controllable distribution of node
//! homophily ratios, and homophily-biased training-set samplers.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::{true_homophily_all, Graph};
use crate::homophily::bin_index;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SynthConfig {
    pub n: usize,
    pub classes: usize,
    pub feature_dim: usize,
    pub mean_degree: f64,
    /// Relative weight of each homophily bin when drawing per-node targets.
    pub target_histogram: Vec<f64>,
    /// Distance scale between class-mean feature vectors.
    pub separation: f64,
    /// Probability that a cross-class partner comes from the paired class
    /// (0↔1, 2↔3, …; an unpaired last class falls back to any other class).
    /// Higher values make 2-hop neighborhoods of heterophilic nodes share
    /// their class.
    pub pair_bias: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 500,
            classes: 5,
            feature_dim: 16,
            mean_degree: 8.0,
            target_histogram: vec![0.22, 0.16, 0.12, 0.09, 0.07, 0.06, 0.06, 0.06, 0.07, 0.09],
            separation: 1.0,
            pair_bias: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.classes == 0 || self.feature_dim == 0 {
            return Err(Error::InvalidConfig(
                "synthetic graph needs n >= 2, classes >= 1, feature_dim >= 1".into(),
            ));
        }
        if !(self.mean_degree > 0.0) || self.mean_degree > (self.n - 1) as f64 {
            return Err(Error::InvalidConfig(alloc::format!(
                "mean degree {} infeasible for {} nodes",
                self.mean_degree,
                self.n
            )));
        }
        if self.target_histogram.is_empty()
            || self.target_histogram.iter().any(|w| !w.is_finite() || *w < 0.0)
            || !(self.target_histogram.iter().sum::<f64>() > 0.0)
        {
            return Err(Error::InvalidConfig(
                "target histogram must be non-negative with positive sum".into(),
            ));
        }
        if !(self.separation >= 0.0) {
            return Err(Error::InvalidConfig("separation must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.pair_bias) {
            return Err(Error::InvalidConfig("pair bias must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Mass-weighted mean of the bin centers of the target histogram.
    pub fn histogram_mean(&self) -> f64 {
        let n = self.target_histogram.len() as f64;
        let total: f64 = self.target_histogram.iter().sum();
        self.target_histogram
            .iter()
            .enumerate()
            .map(|(i, w)| w * (i as f64 + 0.5) / n)
            .sum::<f64>()
            / total
    }
}

/// Generates a labeled graph. Each node draws a personal homophily target
/// from the histogram, then initiates about `mean_degree / 2` edges: with
/// probability equal to its target the partner is same-class (favoring
/// partners with high targets), otherwise cross-class (favoring partners
/// with low targets, and with probability `pair_bias` restricted to the
/// paired class).
pub fn generate_graph(cfg: &SynthConfig) -> Result<Graph> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n;
    let c = cfg.classes;
    let bins = cfg.target_histogram.len();

    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
    let bin_pick =
        WeightedIndex::new(&cfg.target_histogram).map_err(|_| Error::InvalidConfig("target histogram".into()))?;
    let targets: Vec<f64> = (0..n)
        .map(|_| {
            let b = bin_pick.sample(&mut rng);
            ((b as f64 + rng.random::<f64>()) / bins as f64).clamp(0.0, 1.0)
        })
        .collect();

    // small floor keeps every partner reachable
    const FLOOR: f64 = 1e-3;
    let mut same_pool: Vec<(Vec<usize>, Option<WeightedIndex<f64>>)> = Vec::with_capacity(c);
    let mut cross_pool: Vec<(Vec<usize>, Option<WeightedIndex<f64>>)> = Vec::with_capacity(c);
    let mut pair_pool: Vec<(Vec<usize>, Option<WeightedIndex<f64>>)> = Vec::with_capacity(c);
    for class in 0..c {
        let same: Vec<usize> = (0..n).filter(|&v| labels[v] == class).collect();
        let w: Vec<f64> = same.iter().map(|&v| targets[v] + FLOOR).collect();
        same_pool.push((same, WeightedIndex::new(&w).ok()));
        let cross: Vec<usize> = (0..n).filter(|&v| labels[v] != class).collect();
        let w: Vec<f64> = cross.iter().map(|&v| 1.0 - targets[v] + FLOOR).collect();
        cross_pool.push((cross, WeightedIndex::new(&w).ok()));
        let pair = class ^ 1;
        let paired: Vec<usize> = if pair < c {
            (0..n).filter(|&v| labels[v] == pair).collect()
        } else {
            cross_pool[class].0.clone()
        };
        let w: Vec<f64> = paired.iter().map(|&v| 1.0 - targets[v] + FLOOR).collect();
        pair_pool.push((paired, WeightedIndex::new(&w).ok()));
    }

    let half = cfg.mean_degree / 2.0;
    let base = libm::floor(half) as usize;
    let frac = half - base as f64;
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for v in 0..n {
        let quota = base + usize::from(rng.random::<f64>() < frac);
        for _ in 0..quota.max(1) {
            for _attempt in 0..32 {
                let want_same = rng.random::<f64>() < targets[v];
                let (pool, dist) = if want_same {
                    &same_pool[labels[v]]
                } else if cfg.pair_bias > 0.0 && rng.random::<f64>() < cfg.pair_bias {
                    &pair_pool[labels[v]]
                } else {
                    &cross_pool[labels[v]]
                };
                let Some(dist) = dist else { continue };
                let u = pool[dist.sample(&mut rng)];
                if u != v && edges.insert((v.min(u), v.max(u))) {
                    break;
                }
            }
        }
    }

    let features = class_features(cfg, &labels, &mut rng);
    let edges: Vec<(usize, usize)> = edges.into_iter().collect();
    Graph::new(&edges, features, Some(labels), Some(c))
}

fn class_features(cfg: &SynthConfig, labels: &[usize], rng: &mut ChaCha8Rng) -> Array2<f64> {
    let d = cfg.feature_dim;
    let mut means = Array2::zeros((cfg.classes, d));
    for class in 0..cfg.classes {
        if d >= cfg.classes {
            means[[class, class]] = cfg.separation;
        } else {
            let mut dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
            let norm = libm::sqrt(dir.iter().map(|v| v * v).sum::<f64>()).max(1e-12);
            dir.iter_mut().for_each(|v| *v *= cfg.separation / norm);
            for (j, v) in dir.into_iter().enumerate() {
                means[[class, j]] = v;
            }
        }
    }
    let mut features = Array2::zeros((labels.len(), d));
    for (v, &y) in labels.iter().enumerate() {
        for j in 0..d {
            let noise: f64 = StandardNormal.sample(rng);
            features[[v, j]] = means[[y, j]] + noise;
        }
    }
    features
}

/// How the labeled set's homophily distribution relates to the graph's.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BiasMode {
    /// All budget in the four highest bins.
    HomophilyBiased,
    /// Bin sizes proportional to the global distribution.
    Representative,
    /// All budget in the four lowest bins.
    HeterophilyBiased,
}

impl core::str::FromStr for BiasMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "homophily_biased" => Ok(Self::HomophilyBiased),
            "representative" => Ok(Self::Representative),
            "heterophily_biased" => Ok(Self::HeterophilyBiased),
            other => Err(Error::InvalidConfig(alloc::format!("unknown bias mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingSample {
    pub nodes: Vec<usize>,
    /// Nodes taken from a neighboring bin because the requested bin ran out.
    pub fallbacks: usize,
}

/// Largest-remainder apportionment of `total` units by `weights`.
fn apportion(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| libm::floor(*e) as usize).collect();
    let mut rest = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - counts[a] as f64;
        let rb = exact[b] - counts[b] as f64;
        rb.partial_cmp(&ra)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        if weights[i] > 0.0 {
            counts[i] += 1;
            rest -= 1;
        }
    }
    counts
}

/// Draws `floor(label_rate · n)` distinct nodes whose true-homophily bins
/// follow the requested bias. Within a bin, classes are interleaved so the
/// budget spreads across classes. Exhausted bins borrow from the nearest
/// bin that still has nodes.
pub fn sample_training_set(
    graph: &Graph,
    label_rate: f64,
    mode: BiasMode,
    n_bins: usize,
    seed: u64,
) -> Result<TrainingSample> {
    let n = graph.node_count();
    if n == 0 {
        return Err(Error::InvalidConfig("cannot sample from an empty graph".into()));
    }
    if n_bins == 0 {
        return Err(Error::InvalidConfig("bin count must be at least 1".into()));
    }
    let labels = graph.labels().ok_or(Error::MissingLabels)?;
    let budget = libm::floor(label_rate * n as f64) as usize;
    if budget == 0 || budget > n {
        return Err(Error::InvalidConfig(alloc::format!(
            "label rate {label_rate} gives {budget} labeled nodes out of {n}"
        )));
    }
    let ratios = true_homophily_all(graph)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); n_bins];
    for (v, &h) in ratios.iter().enumerate() {
        pools[bin_index(h, n_bins)].push(v);
    }
    for pool in &mut pools {
        pool.shuffle(&mut rng);
        let mut seen = vec![0usize; graph.class_count().max(1)];
        let mut keyed: Vec<(usize, usize, usize)> = pool
            .iter()
            .enumerate()
            .map(|(pos, &v)| {
                let rank = seen[labels[v]];
                seen[labels[v]] += 1;
                (rank, pos, v)
            })
            .collect();
        keyed.sort_unstable();
        *pool = keyed.into_iter().map(|(_, _, v)| v).collect();
        // pop from the back
        pool.reverse();
    }

    let global: Vec<f64> = pools.iter().map(|p| p.len() as f64).collect();
    let span = n_bins.min(4);
    let mut weights = match mode {
        BiasMode::Representative => global.clone(),
        BiasMode::HomophilyBiased => (0..n_bins)
            .map(|i| if i >= n_bins - span { global[i] } else { 0.0 })
            .collect(),
        BiasMode::HeterophilyBiased => (0..n_bins)
            .map(|i| if i < span { global[i] } else { 0.0 })
            .collect::<Vec<f64>>(),
    };
    if weights.iter().sum::<f64>() == 0.0 {
        let range = match mode {
            BiasMode::HomophilyBiased => n_bins - span..n_bins,
            _ => 0..span,
        };
        weights = (0..n_bins)
            .map(|i| if range.contains(&i) { 1.0 } else { 0.0 })
            .collect();
    }
    let targets = apportion(&weights, budget);

    let mut nodes = Vec::with_capacity(budget);
    let mut fallbacks = 0;
    for (bin, &want) in targets.iter().enumerate() {
        for _ in 0..want {
            if let Some(v) = pools[bin].pop() {
                nodes.push(v);
                continue;
            }
            let prefer_up = mode == BiasMode::HomophilyBiased;
            let donor = (1..n_bins).find_map(|dist| {
                let up = (bin + dist < n_bins && !pools[bin + dist].is_empty()).then_some(bin + dist);
                let down = (bin >= dist && !pools[bin - dist].is_empty()).then(|| bin - dist);
                if prefer_up {
                    up.or(down)
                } else {
                    down.or(up)
                }
            });
            let Some(donor) = donor else { break };
            nodes.push(pools[donor].pop().expect("donor is non-empty"));
            fallbacks += 1;
        }
    }
    if fallbacks > 0 {
        log::warn!("training-set sampler borrowed {fallbacks} nodes from neighboring bins");
    }
    Ok(TrainingSample { nodes, fallbacks })
}
