//! Distribution distances: Central Moment Discrepancy between representation
//! samples and smoothed KL divergence between homophily histograms.
//!
//! Both metrics come with analytic gradients with respect to sample weights /
//! bin masses, which the selection optimizer needs.

use alloc::vec;
use alloc::vec::Vec;

use ndarray::{Array1, ArrayView2};

use crate::error::{Error, Result};
use crate::homophily::HomophilyDistribution;

/// Additive smoothing applied to raw bin counts before normalizing.
pub const DEFAULT_KL_EPS: f64 = 1e-8;

/// How the support interval `[a, b]` of the moment scaling is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Support {
    /// Overall min and max over the union of both sample sets.
    DataDriven,
    Fixed {
        lo: f64,
        hi: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CmdConfig {
    pub max_order: usize,
    pub support: Support,
}

impl Default for CmdConfig {
    fn default() -> Self {
        Self {
            max_order: 5,
            support: Support::DataDriven,
        }
    }
}

impl CmdConfig {
    pub fn with_support(max_order: usize, lo: f64, hi: f64) -> Self {
        Self {
            max_order,
            support: Support::Fixed { lo, hi },
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_order == 0 {
            return Err(Error::InvalidConfig("CMD order must be at least 1".into()));
        }
        if let Support::Fixed { lo, hi } = self.support {
            if !(hi > lo) {
                return Err(Error::InvalidConfig("CMD support needs hi > lo".into()));
            }
        }
        Ok(())
    }
}

/// A non-empty, finite set of representation rows.
#[derive(Debug, Clone, Copy)]
pub struct SampleSet<'a> {
    rows: ArrayView2<'a, f64>,
}

impl<'a> SampleSet<'a> {
    pub fn new(rows: ArrayView2<'a, f64>) -> Result<Self> {
        if rows.nrows() == 0 {
            return Err(Error::InvalidConfig("sample set must have at least one row".into()));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sample set"));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> ArrayView2<'a, f64> {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    fn min_max(&self) -> (f64, f64) {
        self.rows
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Weighted mean and central moments of orders 2..=max_order.
struct Moments {
    mean: Array1<f64>,
    // central[k] holds the order-k central moment; index 0 and 1 unused
    central: Vec<Array1<f64>>,
}

fn moments(rows: ArrayView2<'_, f64>, p: &[f64], max_order: usize) -> Moments {
    let d = rows.ncols();
    let mut mean = Array1::zeros(d);
    for (row, &w) in rows.outer_iter().zip(p) {
        mean.scaled_add(w, &row);
    }
    let mut central = vec![Array1::zeros(d); max_order + 1];
    for (row, &w) in rows.outer_iter().zip(p) {
        for j in 0..d {
            let dev = row[j] - mean[j];
            let mut pow = dev;
            for order in central.iter_mut().take(max_order + 1).skip(2) {
                pow *= dev;
                order[j] += w * pow;
            }
        }
    }
    Moments { mean, central }
}

fn scale(cfg: &CmdConfig, x: &SampleSet<'_>, y: &SampleSet<'_>) -> Option<f64> {
    let (lo, hi) = match cfg.support {
        Support::Fixed { lo, hi } => (lo, hi),
        Support::DataDriven => {
            let (xl, xh) = x.min_max();
            let (yl, yh) = y.min_max();
            (xl.min(yl), xh.max(yh))
        }
    };
    let span = libm::fabs(hi - lo);
    (span > 0.0).then_some(span)
}

fn l2(v: &Array1<f64>) -> f64 {
    libm::sqrt(v.dot(v))
}

/// Unweighted CMD between two sample sets.
pub fn cmd(x: &SampleSet<'_>, y: &SampleSet<'_>, cfg: &CmdConfig) -> Result<f64> {
    let w = vec![1.0; x.len()];
    cmd_weighted(x, &w, y, cfg)
}

/// CMD where the moments of `x` are taken under `weights` normalized to sum 1.
pub fn cmd_weighted(x: &SampleSet<'_>, weights: &[f64], y: &SampleSet<'_>, cfg: &CmdConfig) -> Result<f64> {
    cmd_weighted_impl(x, weights, y, cfg, false).map(|(v, _)| v)
}

/// `cmd_weighted` together with its gradient with respect to the raw weights.
pub fn cmd_weighted_grad(
    x: &SampleSet<'_>,
    weights: &[f64],
    y: &SampleSet<'_>,
    cfg: &CmdConfig,
) -> Result<(f64, Vec<f64>)> {
    cmd_weighted_impl(x, weights, y, cfg, true).map(|(v, g)| (v, g.unwrap_or_default()))
}

fn cmd_weighted_impl(
    x: &SampleSet<'_>,
    weights: &[f64],
    y: &SampleSet<'_>,
    cfg: &CmdConfig,
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    cfg.validate()?;
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "sample sets have dimensions {} and {}",
            x.dim(),
            y.dim()
        )));
    }
    if weights.len() != x.len() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "{} weights for {} rows",
            weights.len(),
            x.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::NonFinite("CMD weights"));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroTotal("CMD weights"));
    }
    let Some(span) = scale(cfg, x, y) else {
        // every value identical: all moment differences vanish
        return Ok((0.0, want_grad.then(|| vec![0.0; x.len()])));
    };

    let p: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let uniform = vec![1.0 / y.len() as f64; y.len()];
    let order = cfg.max_order;
    let mx = moments(x.rows(), &p, order);
    let my = moments(y.rows(), &uniform, order);

    let mean_diff = &mx.mean - &my.mean;
    let mean_norm = l2(&mean_diff);
    let mut value = mean_norm / span;
    let mut diffs = Vec::with_capacity(order + 1);
    diffs.push(None);
    diffs.push(None);
    for k in 2..=order {
        let diff = &mx.central[k] - &my.central[k];
        let norm = l2(&diff);
        value += norm / libm::pow(span, k as f64);
        diffs.push(Some((diff, norm)));
    }
    if !value.is_finite() {
        return Err(Error::NonFinite("CMD value"));
    }
    if !want_grad {
        return Ok((value, None));
    }

    // Gradient with respect to the normalized weights p, treating
    // mean = sum p_i x_i and c_k = sum p_i (x_i - mean)^k as functions of p.
    let d = x.dim();
    let rows = x.rows();
    let mut g_p = vec![0.0; x.len()];
    // unit directions of each norm term, pre-scaled by the support factor
    let mean_dir: Array1<f64> = if mean_norm > 0.0 {
        mean_diff.mapv(|v| v / (mean_norm * span))
    } else {
        Array1::zeros(d)
    };
    let mut dirs: Vec<Array1<f64>> = vec![Array1::zeros(d); order + 1];
    for k in 2..=order {
        if let Some((diff, norm)) = &diffs[k] {
            if *norm > 0.0 {
                let s = norm * libm::pow(span, k as f64);
                dirs[k] = diff.mapv(|v| v / s);
            }
        }
    }
    // m_{k-1} = sum_i p_i (x_i - mean)^{k-1}; m_1 is identically zero on the simplex
    let mut lower: Vec<Array1<f64>> = vec![Array1::zeros(d); order + 1];
    if order >= 3 {
        lower[3..=order].clone_from_slice(&mx.central[2..order]);
    }
    for (i, row) in rows.outer_iter().enumerate() {
        let mut acc = 0.0;
        for j in 0..d {
            let xv = row[j];
            acc += mean_dir[j] * xv;
            let dev = xv - mx.mean[j];
            let mut pow = dev;
            for k in 2..=order {
                pow *= dev;
                let dck = pow - k as f64 * lower[k][j] * xv;
                acc += dirs[k][j] * dck;
            }
        }
        g_p[i] = acc;
    }
    let avg: f64 = g_p.iter().zip(&p).map(|(g, pi)| g * pi).sum();
    let grad = g_p.iter().map(|g| (g - avg) / total).collect();
    Ok((value, Some(grad)))
}

fn smoothed(counts: &[f64], eps: f64) -> (Vec<f64>, f64) {
    let total: f64 = counts.iter().map(|c| c + eps).sum();
    (counts.iter().map(|c| (c + eps) / total).collect(), total)
}

/// `KL(P || Q)` after adding `eps` to every raw count and normalizing.
pub fn kl_divergence(p: &HomophilyDistribution, q: &HomophilyDistribution, eps: f64) -> Result<f64> {
    kl_divergence_grad(p, q, eps).map(|(v, _)| v)
}

/// KL value and its gradient with respect to the raw counts of `p`.
pub fn kl_divergence_grad(p: &HomophilyDistribution, q: &HomophilyDistribution, eps: f64) -> Result<(f64, Vec<f64>)> {
    if p.n_bins() != q.n_bins() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "distributions have {} and {} bins",
            p.n_bins(),
            q.n_bins()
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig("KL smoothing must be positive".into()));
    }
    let (pn, p_total) = smoothed(p.counts(), eps);
    let (qn, _) = smoothed(q.counts(), eps);
    let log_ratio: Vec<f64> = pn.iter().zip(&qn).map(|(a, b)| libm::log(a / b)).collect();
    let value: f64 = pn.iter().zip(&log_ratio).map(|(a, l)| a * l).sum();
    // tiny negative values can come from rounding when p == q
    let value = value.max(0.0);
    let grad = log_ratio.iter().map(|l| (l - value) / p_total).collect();
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cmd_identity_is_zero() {
        let x = array![[0.1, 2.0], [0.5, -1.0], [3.0, 0.0]];
        let s = SampleSet::new(x.view()).unwrap();
        assert_eq!(cmd(&s, &s, &CmdConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn cmd_first_moment_fixture() {
        let x = array![[0.0]];
        let y = array![[1.0]];
        let cfg = CmdConfig::with_support(1, 0.0, 1.0);
        let v = cmd(
            &SampleSet::new(x.view()).unwrap(),
            &SampleSet::new(y.view()).unwrap(),
            &cfg,
        )
        .unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cmd_second_moment_fixture() {
        let x = array![[0.0], [2.0]];
        let y = array![[1.0], [1.0]];
        let cfg = CmdConfig::with_support(2, 0.0, 2.0);
        let v = cmd(
            &SampleSet::new(x.view()).unwrap(),
            &SampleSet::new(y.view()).unwrap(),
            &cfg,
        )
        .unwrap();
        assert!((v - 0.25).abs() < 1e-12);
    }

    #[test]
    fn weighted_mean_fixture() {
        let x = array![[0.0], [2.0]];
        let y = array![[0.5]];
        let cfg = CmdConfig::with_support(1, 0.0, 2.0);
        let v = cmd_weighted(
            &SampleSet::new(x.view()).unwrap(),
            &[0.75, 0.25],
            &SampleSet::new(y.view()).unwrap(),
            &cfg,
        )
        .unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn one_hot_weights_select_a_row() {
        let x = array![[0.0, 1.0], [2.0, 5.0], [1.0, 1.0]];
        let y = array![[0.3, 0.2], [1.5, 4.0]];
        let cfg = CmdConfig::with_support(5, -1.0, 6.0);
        let ys = SampleSet::new(y.view()).unwrap();
        let a = cmd_weighted(&SampleSet::new(x.view()).unwrap(), &[0.0, 1.0, 0.0], &ys, &cfg).unwrap();
        let row = x.slice(ndarray::s![1..2, ..]);
        let b = cmd(&SampleSet::new(row).unwrap(), &ys, &cfg).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = array![[0.0, 1.0]];
        let y = array![[0.0]];
        let xs = SampleSet::new(x.view()).unwrap();
        let ys = SampleSet::new(y.view()).unwrap();
        assert!(matches!(
            cmd(&xs, &ys, &CmdConfig::default()),
            Err(Error::DimensionMismatch(_))
        ));
        assert_eq!(
            cmd_weighted(&xs, &[0.0], &xs, &CmdConfig::default()),
            Err(Error::ZeroTotal("CMD weights"))
        );
        let bad = array![[f64::NAN]];
        assert!(SampleSet::new(bad.view()).is_err());
    }

    #[test]
    fn kl_fixtures() {
        let a = HomophilyDistribution::from_counts(vec![3.0, 1.0]).unwrap();
        let b = HomophilyDistribution::from_counts(vec![1.0, 1.0]).unwrap();
        let v = kl_divergence(&a, &b, 1e-10).unwrap();
        let expected = 0.75 * libm::log(1.5) + 0.25 * libm::log(0.5);
        assert!((v - expected).abs() < 1e-8);
        assert_eq!(kl_divergence(&a, &a, 1e-8).unwrap(), 0.0);

        let p = HomophilyDistribution::from_counts(vec![1.0, 0.0]).unwrap();
        let q = HomophilyDistribution::from_counts(vec![0.0, 1.0]).unwrap();
        let v = kl_divergence(&p, &q, 1e-8).unwrap();
        assert!(v.is_finite() && v > 15.0);
    }

    #[test]
    fn kl_rejects_mismatched_bins() {
        let a = HomophilyDistribution::zeros(2);
        let b = HomophilyDistribution::zeros(3);
        assert!(kl_divergence(&a, &b, 1e-8).is_err());
    }
}
