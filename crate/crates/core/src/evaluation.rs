//! Per-homophily-bin accuracy and the training-bias metrics TPV / NPV / PPV.

use alloc::vec::Vec;

use crate::homophily::bin_index;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BinAccuracy {
    pub count: usize,
    /// `None` when no test node falls in the bin.
    pub accuracy: Option<f64>,
}

/// Accuracy among `test_set` nodes grouped by their true homophily bin.
pub fn per_bin_accuracy(
    predictions: &[usize],
    truth: &[usize],
    true_homophily: &[f64],
    n_bins: usize,
    test_set: &[usize],
) -> Vec<BinAccuracy> {
    let mut total = alloc::vec![0usize; n_bins];
    let mut correct = alloc::vec![0usize; n_bins];
    for &v in test_set {
        let b = bin_index(true_homophily[v], n_bins);
        total[b] += 1;
        if predictions[v] == truth[v] {
            correct[b] += 1;
        }
    }
    total
        .iter()
        .zip(&correct)
        .map(|(&t, &c)| BinAccuracy {
            count: t,
            accuracy: (t > 0).then(|| c as f64 / t as f64),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BiasMetrics {
    /// Mean change over all bins.
    pub tpv: f64,
    /// Mean change over bins that got worse; 0 when none did.
    pub npv: f64,
    /// Mean change over bins that improved; 0 when none did.
    pub ppv: f64,
}

/// Bias metrics from co-indexed per-bin accuracies of the self-trained model
/// and the backbone (non-empty bins only).
pub fn bias_metrics(self_trained: &[f64], backbone: &[f64]) -> BiasMetrics {
    let deltas: Vec<f64> = self_trained.iter().zip(backbone).map(|(s, b)| s - b).collect();
    let mean = |xs: &mut dyn Iterator<Item = f64>| {
        let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    };
    BiasMetrics {
        tpv: mean(&mut deltas.iter().copied()),
        npv: mean(&mut deltas.iter().copied().filter(|d| *d < 0.0)),
        ppv: mean(&mut deltas.iter().copied().filter(|d| *d > 0.0)),
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BinReport {
    pub backbone: Vec<BinAccuracy>,
    pub self_trained: Vec<BinAccuracy>,
    /// `self_trained - backbone` for non-empty bins.
    pub deltas: Vec<Option<f64>>,
    pub metrics: BiasMetrics,
    pub accuracy: f64,
    pub backbone_accuracy: f64,
}

impl BinReport {
    pub fn new(
        backbone: Vec<BinAccuracy>,
        self_trained: Vec<BinAccuracy>,
        accuracy: f64,
        backbone_accuracy: f64,
    ) -> Self {
        let deltas: Vec<Option<f64>> = backbone
            .iter()
            .zip(&self_trained)
            .map(|(b, s)| match (b.accuracy, s.accuracy) {
                (Some(b), Some(s)) => Some(s - b),
                _ => None,
            })
            .collect();
        let (st, bb): (Vec<f64>, Vec<f64>) = backbone
            .iter()
            .zip(&self_trained)
            .filter_map(|(b, s)| Some((s.accuracy?, b.accuracy?)))
            .unzip();
        Self {
            metrics: bias_metrics(&st, &bb),
            backbone,
            self_trained,
            deltas,
            accuracy,
            backbone_accuracy,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_accuracies_have_no_bias() {
        let m = bias_metrics(&[0.3, 0.5], &[0.3, 0.5]);
        assert_eq!(m, BiasMetrics::default());
    }

    #[test]
    fn formula_examples() {
        let m = bias_metrics(&[2.0, -4.0], &[0.0, 0.0]);
        assert_eq!((m.tpv, m.npv, m.ppv), (-1.0, -4.0, 2.0));
        let m = bias_metrics(&[16.0, 8.0], &[10.0, 10.0]);
        assert_eq!((m.tpv, m.npv, m.ppv), (2.0, -2.0, 6.0));
    }

    #[test]
    fn per_bin_examples() {
        let truth = [0, 1, 0, 1, 1];
        let h = [0.05, 0.05, 0.05, 0.05, 0.95];
        let all = per_bin_accuracy(&truth, &truth, &h, 2, &[0, 1, 2, 3]);
        assert_eq!(all[0].accuracy, Some(1.0));
        assert_eq!(
            all[1],
            BinAccuracy {
                count: 0,
                accuracy: None
            }
        );

        let preds = [0, 1, 1, 0, 1];
        let half = per_bin_accuracy(&preds, &truth, &h, 2, &[0, 1, 2, 3]);
        assert_eq!(half[0].accuracy, Some(0.5));
    }

    #[test]
    fn report_skips_empty_bins() {
        let bb = alloc::vec![
            BinAccuracy {
                count: 2,
                accuracy: Some(0.5)
            },
            BinAccuracy {
                count: 0,
                accuracy: None
            },
        ];
        let st = alloc::vec![
            BinAccuracy {
                count: 2,
                accuracy: Some(1.0)
            },
            BinAccuracy {
                count: 0,
                accuracy: None
            },
        ];
        let r = BinReport::new(bb, st, 1.0, 0.5);
        assert_eq!(r.deltas, alloc::vec![Some(0.5), None]);
        assert_eq!(r.metrics.tpv, 0.5);
    }
}
