//! Multi-hop output routing and pseudo-label assignment.

use alloc::vec::Vec;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::model::argmax;

/// Which model output labeled a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum HopSource {
    OneHop,
    MultiHop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedOutput {
    pub rows: Array2<f64>,
    pub sources: Vec<HopSource>,
}

/// Row `i` comes from the k-hop output when the node's estimated homophily
/// is below `delta_h`, otherwise from the 1-hop output.
pub fn mix_outputs(
    one_hop: ArrayView2<'_, f64>,
    multi_hop: ArrayView2<'_, f64>,
    est_homophily: &[f64],
    delta_h: f64,
) -> Result<MixedOutput> {
    if one_hop.dim() != multi_hop.dim() || est_homophily.len() != one_hop.nrows() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "1-hop {:?}, multi-hop {:?}, {} ratios",
            one_hop.dim(),
            multi_hop.dim(),
            est_homophily.len()
        )));
    }
    let mut rows = one_hop.to_owned();
    let mut sources = Vec::with_capacity(est_homophily.len());
    for (i, &h) in est_homophily.iter().enumerate() {
        if h < delta_h {
            rows.row_mut(i).assign(&multi_hop.row(i));
            sources.push(HopSource::MultiHop);
        } else {
            sources.push(HopSource::OneHop);
        }
    }
    Ok(MixedOutput { rows, sources })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PseudoLabel {
    pub node: usize,
    pub label: usize,
    pub source: HopSource,
    /// Softmax probability of the assigned label under the routed output.
    pub confidence: f64,
}

/// Argmax label (lowest class on ties) of each node's routed output row.
pub fn assign_pseudo_labels(mixed: &MixedOutput, nodes: &[usize]) -> Result<Vec<PseudoLabel>> {
    nodes
        .iter()
        .map(|&node| {
            if node >= mixed.rows.nrows() {
                return Err(Error::NodeOutOfRange(node));
            }
            let row = mixed.rows.row(node);
            let label = argmax(row);
            let max = row[label];
            let denom: f64 = row.iter().map(|&v| libm::exp(v - max)).sum();
            Ok(PseudoLabel {
                node,
                label,
                source: mixed.sources[node],
                confidence: 1.0 / denom,
            })
        })
        .collect()
}
