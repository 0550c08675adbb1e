//! Soft-label homophily estimation and binned homophily-ratio distributions.

use alloc::vec;
use alloc::vec::Vec;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Histogram of homophily ratios over `N` equal-width bins. Counts are real
/// so the same type can hold fractional (selection-weighted) masses.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HomophilyDistribution {
    counts: Vec<f64>,
}

impl HomophilyDistribution {
    pub fn zeros(n_bins: usize) -> Self {
        Self {
            counts: vec![0.0; n_bins],
        }
    }

    pub fn from_counts(counts: Vec<f64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InvalidConfig("distribution needs at least one bin".into()));
        }
        if counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidConfig(
                "bin counts must be finite and non-negative".into(),
            ));
        }
        Ok(Self { counts })
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub(crate) fn add(&mut self, bin: usize, mass: f64) {
        self.counts[bin] += mass;
    }
}

/// Per-bin target counts for the next batch of pseudo-nodes.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TargetDistribution {
    counts: Vec<f64>,
}

impl TargetDistribution {
    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn as_distribution(&self) -> HomophilyDistribution {
        HomophilyDistribution {
            counts: self.counts.clone(),
        }
    }
}

/// Bin index of a ratio in `[0, 1]`; intervals are `[(i-1)/N, i/N)` except
/// the last, which is closed so that a ratio of exactly 1 is representable.
pub fn bin_index(ratio: f64, n_bins: usize) -> usize {
    let idx = libm::floor(ratio * n_bins as f64);
    if idx < 0.0 {
        0
    } else {
        (idx as usize).min(n_bins - 1)
    }
}

pub fn bin_distribution(ratios: &[f64], n_bins: usize) -> Result<HomophilyDistribution> {
    if n_bins == 0 {
        return Err(Error::InvalidConfig("bin count must be at least 1".into()));
    }
    let mut dist = HomophilyDistribution::zeros(n_bins);
    for (index, &value) in ratios.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::RatioOutOfRange { index, value });
        }
        dist.add(bin_index(value, n_bins), 1.0);
    }
    Ok(dist)
}

fn check_row(soft: &ArrayView2<'_, f64>, node: usize) -> Result<f64> {
    let row = soft.row(node);
    if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidSoftLabel(node));
    }
    let norm = libm::sqrt(row.dot(&row));
    if norm > 0.0 {
        Ok(norm)
    } else {
        Err(Error::InvalidSoftLabel(node))
    }
}

/// Mean cosine similarity between a node's soft label and those of its
/// 1-hop neighbors. Isolated nodes estimate to 0.
pub fn estimate_node_homophily(soft: ArrayView2<'_, f64>, graph: &Graph, node: usize) -> Result<f64> {
    if soft.nrows() != graph.node_count() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "soft labels have {} rows, graph has {} nodes",
            soft.nrows(),
            graph.node_count()
        )));
    }
    if node >= graph.node_count() {
        return Err(Error::NodeOutOfRange(node));
    }
    let nbrs = graph.neighbors(node);
    if nbrs.is_empty() {
        return Ok(0.0);
    }
    let own_norm = check_row(&soft, node)?;
    let own = soft.row(node);
    let mut acc = 0.0;
    for &j in nbrs {
        let norm = check_row(&soft, j)?;
        acc += own.dot(&soft.row(j)) / (own_norm * norm);
    }
    Ok((acc / nbrs.len() as f64).clamp(0.0, 1.0))
}

/// Estimated ratios for every node.
pub fn estimate_all(soft: ArrayView2<'_, f64>, graph: &Graph) -> Result<Vec<f64>> {
    if soft.nrows() != graph.node_count() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "soft labels have {} rows, graph has {} nodes",
            soft.nrows(),
            graph.node_count()
        )));
    }
    let norms = (0..graph.node_count())
        .map(|v| {
            if graph.degree(v) == 0 {
                Ok(0.0)
            } else {
                check_row(&soft, v)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((0..graph.node_count())
        .map(|v| {
            let nbrs = graph.neighbors(v);
            if nbrs.is_empty() {
                return 0.0;
            }
            let own = soft.row(v);
            let acc: f64 = nbrs
                .iter()
                .map(|&j| own.dot(&soft.row(j)) / (norms[v] * norms[j]))
                .sum();
            (acc / nbrs.len() as f64).clamp(0.0, 1.0)
        })
        .collect())
}

/// Replaces the rows of `nodes` by one-hot vectors of the given labels.
pub fn override_with_one_hot(soft: ArrayView2<'_, f64>, assignments: &[(usize, usize)]) -> Result<Array2<f64>> {
    let mut out = soft.to_owned();
    let classes = out.ncols();
    for &(node, label) in assignments {
        if node >= out.nrows() {
            return Err(Error::NodeOutOfRange(node));
        }
        if label >= classes {
            return Err(Error::LabelOutOfRange {
                index: node,
                label,
                classes,
            });
        }
        let mut row = out.row_mut(node);
        row.fill(0.0);
        row[label] = 1.0;
    }
    Ok(out)
}

/// Bins the estimated ratios of `node_set`. When `overrides` is given, those
/// nodes' soft labels are replaced by one-hot labels before estimation.
pub fn estimate_distribution(
    soft: ArrayView2<'_, f64>,
    graph: &Graph,
    node_set: &[usize],
    overrides: Option<&[(usize, usize)]>,
    n_bins: usize,
) -> Result<HomophilyDistribution> {
    let owned;
    let soft = match overrides {
        Some(o) => {
            owned = override_with_one_hot(soft, o)?;
            owned.view()
        }
        None => soft,
    };
    let ratios = node_set
        .iter()
        .map(|&v| estimate_node_homophily(soft, graph, v))
        .collect::<Result<Vec<f64>>>()?;
    bin_distribution(&ratios, n_bins)
}

/// Per-bin number of new nodes needed so that, after adding `k` nodes, the
/// local histogram follows the global bin frequencies:
/// `max(ceil(fr_i * (k + |local|) - local_i), 0)`.
pub fn target_distribution(
    global: &HomophilyDistribution,
    local: &HomophilyDistribution,
    k: usize,
) -> Result<TargetDistribution> {
    if global.n_bins() != local.n_bins() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "global has {} bins, local has {}",
            global.n_bins(),
            local.n_bins()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidConfig("K must be at least 1".into()));
    }
    let global_total = global.total();
    if !(global_total > 0.0) {
        return Err(Error::ZeroTotal("global homophily distribution"));
    }
    let expanded = k as f64 + local.total();
    // numerator first: exact for integer counts, so the ceiling is exact
    let counts = global
        .counts()
        .iter()
        .zip(local.counts())
        .map(|(&g, &l)| libm::ceil((g * expanded - l * global_total) / global_total).max(0.0))
        .collect();
    Ok(TargetDistribution { counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn path_graph(labels: Vec<usize>) -> Graph {
        let n = labels.len();
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        Graph::new(&edges, Array2::zeros((n, 1)), Some(labels), None).unwrap()
    }

    #[test]
    fn identical_soft_labels_estimate_one() {
        let g = path_graph(vec![0, 0, 0]);
        let soft = array![[0.2, 0.8], [0.2, 0.8], [0.2, 0.8]];
        let h = estimate_node_homophily(soft.view(), &g, 1).unwrap();
        assert!((h - 1.0).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_neighbor_estimates_zero() {
        let g = path_graph(vec![0, 1]);
        let soft = array![[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(estimate_node_homophily(soft.view(), &g, 0).unwrap(), 0.0);
    }

    #[test]
    fn mixed_neighbors_average() {
        let g = path_graph(vec![0, 0, 1]);
        let soft = array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert_eq!(estimate_node_homophily(soft.view(), &g, 1).unwrap(), 0.5);
    }

    #[test]
    fn zero_norm_row_is_named() {
        let g = path_graph(vec![0, 0]);
        let soft = array![[1.0, 0.0], [0.0, 0.0]];
        assert_eq!(
            estimate_node_homophily(soft.view(), &g, 0),
            Err(Error::InvalidSoftLabel(1))
        );
        assert_eq!(estimate_all(soft.view(), &g), Err(Error::InvalidSoftLabel(1)));
    }

    #[test]
    fn isolated_node_estimates_zero() {
        let g = Graph::new(&[], Array2::zeros((1, 1)), None, None).unwrap();
        let soft = array![[0.5, 0.5]];
        assert_eq!(estimate_node_homophily(soft.view(), &g, 0).unwrap(), 0.0);
    }

    #[test]
    fn binning_examples() {
        let d = bin_distribution(&[0.0, 0.05], 10).unwrap();
        assert_eq!(d.counts()[0], 2.0);
        assert_eq!(d.total(), 2.0);

        let d = bin_distribution(&[1.0], 10).unwrap();
        assert_eq!(d.counts()[9], 1.0);
        assert_eq!(d.total(), 1.0);

        let d = bin_distribution(&[0.05, 0.15, 0.15, 0.95], 10).unwrap();
        assert_eq!(d.counts(), &[1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn binning_rejects_out_of_range() {
        assert_eq!(
            bin_distribution(&[0.5, 1.2], 4),
            Err(Error::RatioOutOfRange { index: 1, value: 1.2 })
        );
        assert!(bin_distribution(&[-0.1], 4).is_err());
        assert!(bin_distribution(&[f64::NAN], 4).is_err());
    }

    #[test]
    fn estimated_distribution_on_labeled_path() {
        // a-a-b-b: ratios 1, 0.5, 0.5, 1
        let g = path_graph(vec![0, 0, 1, 1]);
        let soft = array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]];
        let d = estimate_distribution(soft.view(), &g, &[0, 1, 2, 3], None, 2).unwrap();
        assert_eq!(d.counts(), &[0.0, 4.0]);
        let d = estimate_distribution(soft.view(), &g, &[], None, 2).unwrap();
        assert_eq!(d.counts(), &[0.0, 0.0]);
    }

    #[test]
    fn one_hot_override_reproduces_truth() {
        let g = path_graph(vec![0, 1, 1, 0]);
        let uniform = Array2::from_elem((4, 2), 0.5);
        let truth: Vec<(usize, usize)> = vec![(0, 0), (1, 1), (2, 1), (3, 0)];
        let d = estimate_distribution(uniform.view(), &g, &[0, 1, 2, 3], Some(&truth), 2).unwrap();
        // ratios 0, 0.5, 0.5, 0
        assert_eq!(d.counts(), &[2.0, 2.0]);
    }

    #[test]
    fn target_examples() {
        let global = HomophilyDistribution::from_counts(vec![1.0; 5]).unwrap();
        let local = HomophilyDistribution::zeros(5);
        let t = target_distribution(&global, &local, 10).unwrap();
        assert_eq!(t.counts(), &[2.0; 5]);

        let global = HomophilyDistribution::from_counts(vec![9.0, 1.0]).unwrap();
        let local = HomophilyDistribution::from_counts(vec![0.0, 5.0]).unwrap();
        let t = target_distribution(&global, &local, 5).unwrap();
        assert_eq!(t.counts(), &[9.0, 0.0]);

        // local already at its share in bin 0: 0.5 * (2 + 2) = 2
        let global = HomophilyDistribution::from_counts(vec![1.0, 1.0]).unwrap();
        let local = HomophilyDistribution::from_counts(vec![2.0, 0.0]).unwrap();
        let t = target_distribution(&global, &local, 2).unwrap();
        assert_eq!(t.counts()[0], 0.0);
    }

    #[test]
    fn target_rejects_empty_global() {
        let z = HomophilyDistribution::zeros(3);
        assert_eq!(
            target_distribution(&z, &z, 1),
            Err(Error::ZeroTotal("global homophily distribution"))
        );
    }
}
