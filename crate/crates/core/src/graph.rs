//! Undirected attributed graphs, k-hop neighbor structure and ground-truth
//! homophily ratios.

use alloc::vec;
use alloc::vec::Vec;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Immutable undirected graph with dense node features and optional labels.
///
/// Edges are stored once per unordered pair as `(lo, hi)` with `lo < hi`,
/// sorted. Neighbor lists are sorted and symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    features: Array2<f64>,
    labels: Option<Vec<usize>>,
    classes: usize,
}

impl Graph {
    /// Builds a graph from an edge list. The node count is the number of
    /// feature rows. Duplicate pairs (in either orientation) collapse to one
    /// edge and self-loops are dropped.
    ///
    /// `classes` defaults to `max(label) + 1` when labels are given and to 0
    /// otherwise.
    pub fn new(
        edge_pairs: &[(usize, usize)],
        features: Array2<f64>,
        labels: Option<Vec<usize>>,
        classes: Option<usize>,
    ) -> Result<Self> {
        let n = features.nrows();
        let mut edges = Vec::with_capacity(edge_pairs.len());
        for (index, &(a, b)) in edge_pairs.iter().enumerate() {
            if a >= n || b >= n {
                return Err(Error::EdgeOutOfRange { index, n });
            }
            if a != b {
                edges.push((a.min(b), a.max(b)));
            }
        }
        edges.sort_unstable();
        edges.dedup();

        let classes = match (&labels, classes) {
            (_, Some(c)) => c,
            (Some(l), None) => l.iter().max().map_or(0, |m| m + 1),
            (None, None) => 0,
        };
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::LabelLength { len: l.len(), n });
            }
            if let Some((index, &label)) = l.iter().enumerate().find(|(_, &y)| y >= classes) {
                return Err(Error::LabelOutOfRange { index, label, classes });
            }
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("node features"));
        }

        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in &edges {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }

        Ok(Self {
            edges,
            neighbors,
            features,
            labels,
            classes,
        })
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors[node].len()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn class_count(&self) -> usize {
        self.classes
    }

    /// The raw 1-hop view.
    pub fn adjacency(&self) -> AdjacencyView {
        AdjacencyView {
            hop: 1,
            neighbors: self.neighbors.clone(),
        }
    }

    fn require_labels(&self) -> Result<&[usize]> {
        self.labels.as_deref().ok_or(Error::MissingLabels)
    }
}

/// Binary neighbor structure of `A^k` with the diagonal removed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyView {
    hop: usize,
    neighbors: Vec<Vec<usize>>,
}

impl AdjacencyView {
    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn is_symmetric(&self) -> bool {
        self.neighbors.iter().enumerate().all(|(i, list)| {
            list.iter()
                .all(|&j| j != i && self.neighbors[j].binary_search(&i).is_ok())
        })
    }

    /// Relabels nodes: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut neighbors = vec![Vec::new(); self.neighbors.len()];
        for (i, list) in self.neighbors.iter().enumerate() {
            let mut mapped: Vec<usize> = list.iter().map(|&j| perm[j]).collect();
            mapped.sort_unstable();
            neighbors[perm[i]] = mapped;
        }
        Self {
            hop: self.hop,
            neighbors,
        }
    }

    /// Symmetric degree normalization with self-loops,
    /// `D^{-1/2} (A + I) D^{-1/2}`, in compressed row form.
    pub fn normalized(&self) -> NormalizedAdjacency {
        let n = self.neighbors.len();
        let inv_sqrt: Vec<f64> = self
            .neighbors
            .iter()
            .map(|l| 1.0 / libm::sqrt((l.len() + 1) as f64))
            .collect();
        let nnz = self.neighbors.iter().map(|l| l.len() + 1).sum();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::with_capacity(nnz);
        let mut weights = Vec::with_capacity(nnz);
        indptr.push(0);
        for (i, list) in self.neighbors.iter().enumerate() {
            let mut self_done = false;
            for &j in list {
                if !self_done && j > i {
                    indices.push(i);
                    weights.push(inv_sqrt[i] * inv_sqrt[i]);
                    self_done = true;
                }
                indices.push(j);
                weights.push(inv_sqrt[i] * inv_sqrt[j]);
            }
            if !self_done {
                indices.push(i);
                weights.push(inv_sqrt[i] * inv_sqrt[i]);
            }
            indptr.push(indices.len());
        }
        NormalizedAdjacency {
            indptr,
            indices,
            weights,
        }
    }
}

/// Sparse symmetric propagation matrix used by the message-passing model.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    weights: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn node_count(&self) -> usize {
        self.indptr.len() - 1
    }

    /// Row `i` as `(column, weight)` pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.weights[span].iter().copied())
    }

    /// Computes `Â · x`.
    pub fn propagate(&self, x: &Array2<f64>) -> Array2<f64> {
        let cols = x.ncols();
        let mut out = Array2::zeros((self.node_count(), cols));
        let src = x.as_standard_layout();
        let src = src.as_slice().expect("standard layout");
        {
            let dst = out.as_slice_mut().expect("fresh array is contiguous");
            for i in 0..self.node_count() {
                let target = &mut dst[i * cols..(i + 1) * cols];
                for (j, w) in self.row(i) {
                    let source = &src[j * cols..(j + 1) * cols];
                    for (t, s) in target.iter_mut().zip(source) {
                        *t += w * s;
                    }
                }
            }
        }
        out
    }
}

/// Neighbor structure of the k-th adjacency power: `j` is a neighbor of `i`
/// iff some walk of exactly `k` edges joins them and `i != j`.
pub fn k_hop_adjacency(graph: &Graph, k: usize) -> Result<AdjacencyView> {
    if k == 0 {
        return Err(Error::InvalidHop);
    }
    if k == 1 {
        return Ok(graph.adjacency());
    }
    let n = graph.node_count();
    let mut neighbors = Vec::with_capacity(n);
    let mut mark = vec![usize::MAX; n];
    let mut frontier: Vec<usize> = Vec::new();
    let mut next: Vec<usize> = Vec::new();
    for v in 0..n {
        frontier.clear();
        frontier.push(v);
        for step in 0..k {
            next.clear();
            // stamp is unique per (v, step) so marks never need resetting
            let stamp = v * k + step;
            for &u in &frontier {
                for &w in graph.neighbors(u) {
                    if mark[w] != stamp {
                        mark[w] = stamp;
                        next.push(w);
                    }
                }
            }
            core::mem::swap(&mut frontier, &mut next);
        }
        let mut list: Vec<usize> = frontier.iter().copied().filter(|&w| w != v).collect();
        list.sort_unstable();
        neighbors.push(list);
    }
    Ok(AdjacencyView { hop: k, neighbors })
}

/// Fraction of a node's neighbors that share its label. Isolated nodes have
/// ratio 0.
pub fn true_node_homophily(graph: &Graph, node: usize) -> Result<f64> {
    let labels = graph.require_labels()?;
    if node >= graph.node_count() {
        return Err(Error::NodeOutOfRange(node));
    }
    Ok(homophily_of(graph, labels, node))
}

/// Ratios for every node, in node order.
pub fn true_homophily_all(graph: &Graph) -> Result<Vec<f64>> {
    let labels = graph.require_labels()?;
    Ok((0..graph.node_count())
        .map(|v| homophily_of(graph, labels, v))
        .collect())
}

/// Unweighted mean of node homophily ratios.
pub fn graph_homophily(graph: &Graph) -> Result<f64> {
    let all = true_homophily_all(graph)?;
    if all.is_empty() {
        return Ok(0.0);
    }
    Ok(all.iter().sum::<f64>() / all.len() as f64)
}

fn homophily_of(graph: &Graph, labels: &[usize], node: usize) -> f64 {
    let nbrs = graph.neighbors(node);
    if nbrs.is_empty() {
        return 0.0;
    }
    let same = nbrs.iter().filter(|&&j| labels[j] == labels[node]).count();
    same as f64 / nbrs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feats(n: usize) -> Array2<f64> {
        Array2::zeros((n, 1))
    }

    #[test]
    fn dedup_and_self_loops() {
        let g = Graph::new(&[(0, 1), (1, 0), (2, 2)], feats(3), None, None).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
        assert_eq!(g.degree(2), 0);
    }

    #[test]
    fn isolated_nodes() {
        let g = Graph::new(&[], feats(4), None, None).unwrap();
        assert!((0..4).all(|v| g.degree(v) == 0));
    }

    #[test]
    fn triangle_degrees() {
        let g = Graph::new(&[(0, 1), (1, 2), (0, 2)], feats(3), None, None).unwrap();
        assert!((0..3).all(|v| g.degree(v) == 2));
    }

    #[test]
    fn rejects_bad_records() {
        assert_eq!(
            Graph::new(&[(0, 1), (1, 5)], feats(3), None, None),
            Err(Error::EdgeOutOfRange { index: 1, n: 3 })
        );
        assert_eq!(
            Graph::new(&[], feats(3), Some(vec![0, 1]), None),
            Err(Error::LabelLength { len: 2, n: 3 })
        );
        assert!(matches!(
            Graph::new(&[], feats(2), Some(vec![0, 3]), Some(2)),
            Err(Error::LabelOutOfRange { index: 1, .. })
        ));
    }

    #[test]
    fn two_hop_on_path() {
        let g = Graph::new(&[(0, 1), (1, 2)], feats(3), None, None).unwrap();
        let a2 = k_hop_adjacency(&g, 2).unwrap();
        assert_eq!(a2.neighbors(0), &[2]);
        assert_eq!(a2.neighbors(1), &[] as &[usize]);
        assert_eq!(a2.neighbors(2), &[0]);
        assert!(a2.is_symmetric());
    }

    #[test]
    fn two_hop_on_triangle() {
        let g = Graph::new(&[(0, 1), (1, 2), (0, 2)], feats(3), None, None).unwrap();
        let a2 = k_hop_adjacency(&g, 2).unwrap();
        assert_eq!(a2.neighbors(0), &[1, 2]);
        assert_eq!(a2.neighbors(1), &[0, 2]);
        assert_eq!(a2.neighbors(2), &[0, 1]);
    }

    #[test]
    fn one_hop_is_identity_and_zero_hop_rejected() {
        let g = Graph::new(&[(0, 1), (1, 2), (2, 3)], feats(4), None, None).unwrap();
        assert_eq!(k_hop_adjacency(&g, 1).unwrap(), g.adjacency());
        assert_eq!(k_hop_adjacency(&g, 0), Err(Error::InvalidHop));
    }

    #[test]
    fn node_ratios() {
        // center 0 labeled a=0 with neighbors [a, a, b, b]
        let g = Graph::new(
            &[(0, 1), (0, 2), (0, 3), (0, 4)],
            feats(5),
            Some(vec![0, 0, 0, 1, 1]),
            None,
        )
        .unwrap();
        assert_eq!(true_node_homophily(&g, 0).unwrap(), 0.5);

        let g = Graph::new(&[(0, 1), (0, 2), (0, 3)], feats(4), Some(vec![2, 2, 2, 2]), None).unwrap();
        assert_eq!(true_node_homophily(&g, 0).unwrap(), 1.0);

        let g = Graph::new(&[(0, 1), (0, 2), (0, 3)], feats(4), Some(vec![0, 1, 1, 1]), None).unwrap();
        assert_eq!(true_node_homophily(&g, 0).unwrap(), 0.0);
    }

    #[test]
    fn graph_ratio_of_disjoint_union() {
        let same = Graph::new(&[(0, 1)], feats(2), Some(vec![0, 0]), None).unwrap();
        assert_eq!(graph_homophily(&same).unwrap(), 1.0);
        let diff = Graph::new(&[(0, 1)], feats(2), Some(vec![0, 1]), None).unwrap();
        assert_eq!(graph_homophily(&diff).unwrap(), 0.0);
        let union = Graph::new(&[(0, 1), (2, 3)], feats(4), Some(vec![0, 0, 0, 1]), None).unwrap();
        assert_eq!(graph_homophily(&union).unwrap(), 0.5);
    }

    #[test]
    fn ratios_need_labels() {
        let g = Graph::new(&[(0, 1)], feats(2), None, None).unwrap();
        assert_eq!(graph_homophily(&g), Err(Error::MissingLabels));
        assert_eq!(true_node_homophily(&g, 0), Err(Error::MissingLabels));
    }

    #[test]
    fn normalized_rows_include_self_loop() {
        let g = Graph::new(&[(0, 1)], feats(3), None, None).unwrap();
        let norm = g.adjacency().normalized();
        let row0: Vec<_> = norm.row(0).collect();
        assert_eq!(row0.len(), 2);
        assert!((row0[0].1 - 0.5).abs() < 1e-15);
        let row2: Vec<_> = norm.row(2).collect();
        assert_eq!(row2, vec![(2, 1.0)]);
    }
}
