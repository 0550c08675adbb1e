//! Distribution-consistent pseudo-node selection.
//!
//! A relaxed selection vector `q ∈ [0,1]^|C|` over the candidate set is
//! optimized by projected gradient descent on
//!
//! ```text
//! L(q) = CMD(Z_global, q ⋆ Z_cand) + λ_S · KL(B_q || B_target) + max(0, ‖q‖₁ − K)
//! ```
//!
//! where `B_q` puts each candidate's `q_j` into the bin of its estimated
//! homophily ratio. The `K` largest entries of the result become the new
//! pseudo-nodes.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::homophily::{bin_index, HomophilyDistribution, TargetDistribution};
use crate::shift::{cmd_weighted_grad, kl_divergence_grad, CmdConfig, SampleSet, DEFAULT_KL_EPS};

/// Confident nodes not yet labeled, pseudo-labeled or held out for
/// validation, in ascending node order.
pub fn candidate_set(
    soft: ArrayView2<'_, f64>,
    prior_pseudo: &[usize],
    labeled: &[usize],
    validation: &[usize],
    delta_c: f64,
) -> Vec<usize> {
    let mut excluded = vec![false; soft.nrows()];
    for &v in prior_pseudo.iter().chain(labeled).chain(validation) {
        if v < excluded.len() {
            excluded[v] = true;
        }
    }
    soft.rows()
        .into_iter()
        .enumerate()
        .filter(|(v, row)| !excluded[*v] && row.fold(f64::NEG_INFINITY, |m, &p| m.max(p)) > delta_c)
        .map(|(v, _)| v)
        .collect()
}

/// Selection mass per homophily bin: the sum of `q_j` over candidates whose
/// estimated ratio falls in that bin.
pub fn selection_bin_mass(q: &[f64], cand_homophily: &[f64], n_bins: usize) -> HomophilyDistribution {
    let mut dist = HomophilyDistribution::zeros(n_bins);
    for (&qj, &h) in q.iter().zip(cand_homophily) {
        dist.add(bin_index(h, n_bins), qj);
    }
    dist
}

#[derive(Debug, Clone)]
pub struct SelectionProblem {
    pub candidates: Vec<usize>,
    /// Candidate representation rows, co-indexed with `candidates`.
    pub cand_repr: Array2<f64>,
    pub global_repr: Array2<f64>,
    pub cand_homophily: Vec<f64>,
    pub target: TargetDistribution,
    pub k: usize,
    pub lambda_s: f64,
    pub n_bins: usize,
    pub cmd: CmdConfig,
    pub kl_eps: f64,
}

impl SelectionProblem {
    pub fn new(
        candidates: Vec<usize>,
        cand_repr: Array2<f64>,
        global_repr: Array2<f64>,
        cand_homophily: Vec<f64>,
        target: TargetDistribution,
        k: usize,
        lambda_s: f64,
    ) -> Result<Self> {
        let n_bins = target.counts().len();
        let problem = Self {
            candidates,
            cand_repr,
            global_repr,
            cand_homophily,
            target,
            k,
            lambda_s,
            n_bins,
            cmd: CmdConfig::default(),
            kl_eps: DEFAULT_KL_EPS,
        };
        problem.validate()?;
        Ok(problem)
    }

    fn validate(&self) -> Result<()> {
        let m = self.candidates.len();
        if m == 0 {
            return Err(Error::InvalidConfig("selection needs at least one candidate".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidConfig("K must be at least 1".into()));
        }
        if self.cand_repr.nrows() != m || self.cand_homophily.len() != m {
            return Err(Error::DimensionMismatch(alloc::format!(
                "{m} candidates, {} representation rows, {} ratios",
                self.cand_repr.nrows(),
                self.cand_homophily.len()
            )));
        }
        if let Some((index, &value)) = self
            .cand_homophily
            .iter()
            .enumerate()
            .find(|(_, h)| !(0.0..=1.0).contains(*h))
        {
            return Err(Error::RatioOutOfRange { index, value });
        }
        if self.n_bins == 0 || self.n_bins != self.target.counts().len() {
            return Err(Error::InvalidConfig("bin count must match the target".into()));
        }
        if !(self.lambda_s >= 0.0) {
            return Err(Error::InvalidConfig("lambda_s must be non-negative".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Uniform start `min(K/|C|, 1)`.
    pub fn initial_q(&self) -> Vec<f64> {
        vec![(self.k as f64 / self.len() as f64).min(1.0); self.len()]
    }

    /// Loss terms at `q`.
    pub fn loss(&self, q: &[f64]) -> Result<LossBreakdown> {
        self.loss_and_grad(q).map(|(l, _)| l)
    }

    /// Loss terms and the gradient with respect to `q`.
    pub fn loss_and_grad(&self, q: &[f64]) -> Result<(LossBreakdown, Vec<f64>)> {
        if q.len() != self.len() {
            return Err(Error::DimensionMismatch(alloc::format!(
                "q has {} entries for {} candidates",
                q.len(),
                self.len()
            )));
        }
        let cand = SampleSet::new(self.cand_repr.view())?;
        let global = SampleSet::new(self.global_repr.view())?;
        let (cmd, mut grad) = cmd_weighted_grad(&cand, q, &global, &self.cmd)?;

        let mass = selection_bin_mass(q, &self.cand_homophily, self.n_bins);
        let (kl, kl_grad) = kl_divergence_grad(&mass, &self.target.as_distribution(), self.kl_eps)?;
        if self.lambda_s != 0.0 {
            for (g, &h) in grad.iter_mut().zip(&self.cand_homophily) {
                *g += self.lambda_s * kl_grad[bin_index(h, self.n_bins)];
            }
        }

        let l1: f64 = q.iter().sum();
        let excess = l1 - self.k as f64;
        let penalty = excess.max(0.0);
        if excess > 0.0 {
            for g in &mut grad {
                *g += 1.0;
            }
        }
        Ok((
            LossBreakdown {
                cmd,
                kl,
                penalty,
                total: cmd + self.lambda_s * kl + penalty,
                l1,
            },
            grad,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossBreakdown {
    pub cmd: f64,
    pub kl: f64,
    pub penalty: f64,
    pub total: f64,
    /// `‖q‖₁`
    pub l1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SelectionConfig {
    pub iterations: usize,
    pub step: f64,
    pub trace: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            step: 0.05,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceRow {
    pub iteration: usize,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutcome {
    /// Lowest-loss iterate, every entry in `[0, 1]`.
    pub q: Vec<f64>,
    pub loss: LossBreakdown,
    pub initial_loss: LossBreakdown,
    pub trace: Vec<TraceRow>,
}

fn check_finite(l: &LossBreakdown, iteration: usize) -> Result<()> {
    let term = if !l.cmd.is_finite() {
        "CMD"
    } else if !l.kl.is_finite() {
        "KL"
    } else if !l.penalty.is_finite() {
        "cardinality"
    } else {
        return Ok(());
    };
    Err(Error::SelectionDiverged { term, iteration })
}

/// Projected gradient descent with clamp-to-box projection. Iterate 0 is
/// the uniform start; the lowest-loss iterate is returned.
pub fn optimize_selection(problem: &SelectionProblem, cfg: &SelectionConfig) -> Result<SelectionOutcome> {
    problem.validate()?;
    let mut q = problem.initial_q();
    let mut trace = Vec::new();
    let (initial_loss, mut grad) = problem.loss_and_grad(&q)?;
    check_finite(&initial_loss, 0)?;
    let mut best = (initial_loss, q.clone());
    if cfg.trace {
        trace.push(TraceRow {
            iteration: 0,
            loss: initial_loss,
        });
    }
    for iteration in 1..=cfg.iterations {
        for (qj, g) in q.iter_mut().zip(&grad) {
            *qj = (*qj - cfg.step * g).clamp(0.0, 1.0);
        }
        if q.iter().all(|&v| v == 0.0) {
            // weighted moments undefined at the origin
            break;
        }
        let (l, g) = problem.loss_and_grad(&q)?;
        check_finite(&l, iteration)?;
        if cfg.trace {
            trace.push(TraceRow { iteration, loss: l });
        }
        if l.total < best.0.total {
            best = (l, q.clone());
        }
        grad = g;
    }
    Ok(SelectionOutcome {
        q: best.1,
        loss: best.0,
        initial_loss,
        trace,
    })
}

/// The `K` candidates with the largest `q`; ties go to higher confidence,
/// then to the lower node id. Returns every candidate when fewer than `K`.
pub fn top_k(q: &[f64], k: usize, candidates: &[usize], confidence: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        q[b].partial_cmp(&q[a])
            .unwrap_or(Ordering::Equal)
            .then(confidence[b].partial_cmp(&confidence[a]).unwrap_or(Ordering::Equal))
            .then(candidates[a].cmp(&candidates[b]))
    });
    order.truncate(k);
    order.into_iter().map(|i| candidates[i]).collect()
}
