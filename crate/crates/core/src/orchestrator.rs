//! The staged self-training loop and its ablation / baseline variants.
//!
//! Each stage: form the confident candidate set, estimate homophily ratios
//! from the current soft labels (labeled and pseudo-labeled nodes use their
//! one-hot labels), pick `K` pseudo-nodes, label them from the 1-hop or
//! k-hop output depending on their estimated homophily, then retrain the
//! dual-head model from scratch. The stage with the best validation score
//! wins.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::evaluation::{per_bin_accuracy, BinReport};
use crate::graph::{k_hop_adjacency, true_homophily_all, Graph};
use crate::homophily::{
    bin_distribution, estimate_all, override_with_one_hot, target_distribution, HomophilyDistribution,
};
use crate::model::{
    forward, init_params, predict, train_dual, train_supervised, ModelParams, Propagation, TrainConfig, TrainOutcome,
    ValidationScore,
};
use crate::pseudolabel::{assign_pseudo_labels, mix_outputs, HopSource, MixedOutput, PseudoLabel};
use crate::selection::{
    candidate_set, optimize_selection, top_k, LossBreakdown, SelectionConfig, SelectionProblem, TraceRow,
};
use crate::shift::{cmd, kl_divergence, CmdConfig, SampleSet, DEFAULT_KL_EPS};
use crate::synth::{sample_training_set, BiasMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Variant {
    Hcgst,
    StConfidence,
    NoSelection,
    NoMultihop,
    NoDualhead,
    BackboneOnly,
    CmdOnly,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Hcgst,
        Variant::StConfidence,
        Variant::NoSelection,
        Variant::NoMultihop,
        Variant::NoDualhead,
        Variant::BackboneOnly,
        Variant::CmdOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Hcgst => "hcgst",
            Variant::StConfidence => "st_confidence",
            Variant::NoSelection => "no_selection",
            Variant::NoMultihop => "no_multihop",
            Variant::NoDualhead => "no_dualhead",
            Variant::BackboneOnly => "backbone_only",
            Variant::CmdOnly => "cmd_only",
        }
    }
}

impl core::fmt::Display for Variant {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(alloc::format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct RunConfig {
    pub stages: usize,
    /// New pseudo-nodes per stage; `None` means the labeled-set size.
    pub k: Option<usize>,
    pub delta_c: f64,
    pub delta_h: f64,
    pub lambda_s: f64,
    pub lambda_d: f64,
    pub n_bins: usize,
    pub hop: usize,
    /// Stages without validation improvement before stopping.
    pub patience: usize,
    pub variant: Variant,
    pub seed: u64,
    pub train: TrainConfig,
    pub selection: SelectionConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            stages: 10,
            k: None,
            delta_c: 0.65,
            delta_h: 0.4,
            lambda_s: 2.0,
            lambda_d: 0.09,
            n_bins: 10,
            hop: 2,
            patience: 2,
            variant: Variant::Hcgst,
            seed: 0,
            train: TrainConfig::default(),
            selection: SelectionConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.stages == 0 {
            return bad("stages must be at least 1");
        }
        if self.k == Some(0) {
            return bad("K must be at least 1");
        }
        if !(self.delta_c > 0.0 && self.delta_c < 1.0) {
            return bad("delta_c must lie in (0, 1)");
        }
        if !(self.delta_h >= 0.0) {
            return bad("delta_h must be non-negative");
        }
        if !(self.lambda_s >= 0.0) || !(self.lambda_d >= 0.0) {
            return bad("lambda_s and lambda_d must be non-negative");
        }
        if self.n_bins == 0 {
            return bad("n_bins must be at least 1");
        }
        if self.hop < 2 {
            return bad("multi-hop order must be at least 2");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.selection.iterations == 0 || !(self.selection.step > 0.0) {
            return bad("selection needs positive iterations and step");
        }
        self.train.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Selector {
    Confidence,
    Optimized,
}

#[derive(Debug, Clone, Copy)]
struct Strategy {
    selector: Selector,
    lambda_s: f64,
    delta_h: f64,
    dual: bool,
    stages: usize,
}

impl Strategy {
    fn for_config(cfg: &RunConfig, variant: Variant) -> Self {
        let full = Strategy {
            selector: Selector::Optimized,
            lambda_s: cfg.lambda_s,
            delta_h: cfg.delta_h,
            dual: true,
            stages: cfg.stages,
        };
        match variant {
            Variant::Hcgst => full,
            Variant::NoSelection => Strategy {
                selector: Selector::Confidence,
                ..full
            },
            Variant::NoMultihop => Strategy { delta_h: 0.0, ..full },
            Variant::NoDualhead => Strategy { dual: false, ..full },
            Variant::StConfidence => Strategy {
                selector: Selector::Confidence,
                delta_h: 0.0,
                dual: false,
                ..full
            },
            Variant::CmdOnly => Strategy {
                lambda_s: 0.0,
                delta_h: 0.0,
                dual: false,
                ..full
            },
            Variant::BackboneOnly => Strategy { stages: 0, ..full },
        }
    }

    fn multi_hop(&self) -> bool {
        self.delta_h > 0.0
    }
}

/// A pseudo-labeled node and the stage that added it.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PseudoNode {
    pub stage: usize,
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub label: PseudoLabel,
}

/// Disjoint labeled / validation / unlabeled node sets. Pseudo-nodes are
/// drawn from the unlabeled set during a run.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NodePartition {
    pub labeled: Vec<usize>,
    pub validation: Vec<usize>,
    pub unlabeled: Vec<usize>,
}

impl NodePartition {
    pub fn new(n: usize, labeled: Vec<usize>, validation: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; n];
        for &v in labeled.iter().chain(&validation) {
            if v >= n {
                return Err(Error::NodeOutOfRange(v));
            }
            if seen[v] {
                return Err(Error::InvalidConfig(alloc::format!(
                    "node {v} appears twice across labeled and validation sets"
                )));
            }
            seen[v] = true;
        }
        let unlabeled = (0..n).filter(|&v| !seen[v]).collect();
        Ok(Self {
            labeled,
            validation,
            unlabeled,
        })
    }

    /// Biased labeled set via [`sample_training_set`], then a uniformly
    /// random validation set of `max(1, round(val_rate · n))` nodes from the
    /// rest.
    pub fn sample(
        graph: &Graph,
        label_rate: f64,
        val_rate: f64,
        mode: BiasMode,
        n_bins: usize,
        seed: u64,
    ) -> Result<Self> {
        let n = graph.node_count();
        let labeled = sample_training_set(graph, label_rate, mode, n_bins, seed)?.nodes;
        let mut taken = vec![false; n];
        labeled.iter().for_each(|&v| taken[v] = true);
        let mut rest: Vec<usize> = (0..n).filter(|&v| !taken[v]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_7a1d);
        rest.shuffle(&mut rng);
        let n_val = (libm::round(val_rate * n as f64) as usize).max(1).min(rest.len());
        let mut validation = rest[..n_val].to_vec();
        validation.sort_unstable();
        Self::new(n, labeled, validation)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StageReport {
    pub stage: usize,
    /// Set when the stage had no candidates and was skipped.
    pub skipped: bool,
    pub candidates: usize,
    pub selected: Vec<PseudoLabel>,
    pub multi_hop_routed: usize,
    pub pseudo_total: usize,
    /// Mean estimated homophily of the cumulative pseudo set.
    pub pseudo_mean_est_homophily: Option<f64>,
    pub pseudo_mean_true_homophily: Option<f64>,
    /// Mean estimated homophily over all nodes, from the same estimates as
    /// `pseudo_mean_est_homophily`.
    pub global_mean_est_homophily: f64,
    /// `KL(B_local || B_global)` over estimated ratios, local = labeled ∪ pseudo.
    pub kl_local_global: f64,
    /// Same with ground-truth ratios, when labels are known.
    pub kl_local_global_true: Option<f64>,
    /// CMD between all-node and local-node representations.
    pub cmd_local_global: f64,
    pub selection_loss: Option<LossBreakdown>,
    pub selection_trace: Vec<TraceRow>,
    pub validation_accuracy: Option<f64>,
    pub validation_loss: Option<f64>,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunReport {
    pub variant: Variant,
    pub config: RunConfig,
    pub labeled: usize,
    pub k: usize,
    pub stages: Vec<StageReport>,
    pub best_stage: usize,
    pub pseudo: Vec<PseudoNode>,
    pub bins: BinReport,
    pub global_mean_est_homophily: f64,
    pub global_mean_true_homophily: f64,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn accuracy(&self) -> f64 {
        self.bins.accuracy
    }

    pub fn last_stage(&self) -> &StageReport {
        self.stages.last().expect("stage 0 is always recorded")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub report: RunReport,
    /// Parameters of the best-validation stage.
    pub model: ModelParams,
    pub backbone: ModelParams,
}

/// Runs the full HC-GST pipeline regardless of `cfg.variant`.
pub fn run_self_training(graph: &Graph, partition: &NodePartition, cfg: &RunConfig) -> Result<RunOutcome> {
    run(graph, partition, cfg, Variant::Hcgst)
}

/// Runs the variant named by `cfg.variant`.
pub fn run_variant(graph: &Graph, partition: &NodePartition, cfg: &RunConfig) -> Result<RunOutcome> {
    run(graph, partition, cfg, cfg.variant)
}

struct Context<'a> {
    graph: &'a Graph,
    truth: &'a [usize],
    true_h: Vec<f64>,
    partition: &'a NodePartition,
    n_bins: usize,
}

struct Shift {
    est: Vec<f64>,
    kl: f64,
    kl_true: f64,
    cmd: f64,
}

impl Context<'_> {
    fn with_truth(&self, nodes: &[usize]) -> Vec<(usize, usize)> {
        nodes.iter().map(|&v| (v, self.truth[v])).collect()
    }

    fn accuracy(&self, preds: &[usize], nodes: &[usize]) -> f64 {
        if nodes.is_empty() {
            return 0.0;
        }
        nodes.iter().filter(|&&v| preds[v] == self.truth[v]).count() as f64 / nodes.len() as f64
    }

    /// Estimated homophily of every node plus the local-vs-global shift,
    /// local being labeled ∪ pseudo.
    fn measure(&self, soft: &Array2<f64>, logits: &Array2<f64>, pseudo: &[PseudoNode]) -> Result<Shift> {
        let mut overrides = self.with_truth(&self.partition.labeled);
        overrides.extend(pseudo.iter().map(|p| (p.label.node, p.label.label)));
        let overridden = override_with_one_hot(soft.view(), &overrides)?;
        let est = estimate_all(overridden.view(), self.graph)?;
        let local: Vec<usize> = overrides.iter().map(|&(v, _)| v).collect();
        let pick = |values: &[f64]| -> Result<(HomophilyDistribution, HomophilyDistribution)> {
            let local_vals: Vec<f64> = local.iter().map(|&v| values[v]).collect();
            Ok((
                bin_distribution(&local_vals, self.n_bins)?,
                bin_distribution(values, self.n_bins)?,
            ))
        };
        let (l, g) = pick(&est)?;
        let kl = kl_divergence(&l, &g, DEFAULT_KL_EPS)?;
        let (l, g) = pick(&self.true_h)?;
        let kl_true = kl_divergence(&l, &g, DEFAULT_KL_EPS)?;
        let local_rows = logits.select(Axis(0), &local);
        let cmd = cmd(
            &SampleSet::new(logits.view())?,
            &SampleSet::new(local_rows.view())?,
            &CmdConfig::default(),
        )?;
        Ok(Shift { est, kl, kl_true, cmd })
    }
}

fn mean_of(values: &[f64], nodes: impl Iterator<Item = usize>) -> Option<f64> {
    let (sum, n) = nodes.fold((0.0, 0usize), |(s, n), v| (s + values[v], n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn run(graph: &Graph, partition: &NodePartition, cfg: &RunConfig, variant: Variant) -> Result<RunOutcome> {
    cfg.validate()?;
    let truth = graph.labels().ok_or(Error::MissingLabels)?;
    if partition.labeled.is_empty() {
        return Err(Error::EmptyCleanSet);
    }
    let n = graph.node_count();
    if partition
        .labeled
        .iter()
        .chain(&partition.validation)
        .chain(&partition.unlabeled)
        .any(|&v| v >= n)
    {
        return Err(Error::InvalidConfig("partition does not match the graph".into()));
    }
    let strategy = Strategy::for_config(cfg, variant);
    let ctx = Context {
        graph,
        truth,
        true_h: true_homophily_all(graph)?,
        partition,
        n_bins: cfg.n_bins,
    };
    let k = cfg.k.unwrap_or(partition.labeled.len());
    let clean = ctx.with_truth(&partition.labeled);
    let validation = ctx.with_truth(&partition.validation);
    let test = &partition.unlabeled;
    let mut warnings = Vec::new();

    let prop = Propagation::new(&graph.adjacency(), graph.features())?;
    let prop_k = if strategy.multi_hop() && strategy.stages > 0 {
        Some(Propagation::new(&k_hop_adjacency(graph, cfg.hop)?, graph.features())?)
    } else {
        None
    };
    let train_cfg = TrainConfig {
        lambda_dual: if strategy.dual { cfg.lambda_d } else { 0.0 },
        seed: cfg.seed,
        ..cfg.train
    };
    let fresh = || init_params(graph.feature_dim(), train_cfg.hidden, graph.class_count(), cfg.seed);

    let diverged = |stage: usize| {
        move |e: Error| match e {
            Error::NonFinite(_) => Error::TrainingDiverged { stage },
            other => other,
        }
    };
    let backbone: TrainOutcome =
        train_supervised(fresh()?, &prop, &clean, &validation, &train_cfg).map_err(diverged(0))?;
    let backbone_preds = predict(&backbone.params, &prop)?;
    let mut model = backbone.params.clone();
    let mut out = forward(&model, &prop)?;
    let mut shift = ctx.measure(&out.soft, &out.logits, &[])?;
    let global_mean_est = shift.est.iter().sum::<f64>() / n as f64;

    let mut stages = vec![StageReport {
        stage: 0,
        skipped: false,
        candidates: 0,
        selected: Vec::new(),
        multi_hop_routed: 0,
        pseudo_total: 0,
        pseudo_mean_est_homophily: None,
        pseudo_mean_true_homophily: None,
        global_mean_est_homophily: global_mean_est,
        kl_local_global: shift.kl,
        kl_local_global_true: Some(shift.kl_true),
        cmd_local_global: shift.cmd,
        selection_loss: None,
        selection_trace: Vec::new(),
        validation_accuracy: backbone.validation.map(|s| s.accuracy),
        validation_loss: backbone.validation.map(|s| s.loss),
        test_accuracy: ctx.accuracy(&backbone_preds, test),
    }];

    let mut pseudo: Vec<PseudoNode> = Vec::new();
    let mut best: (Option<ValidationScore>, usize, ModelParams, Vec<usize>) =
        (backbone.validation, 0, model.clone(), backbone_preds.clone());
    let mut stale = 0;

    for stage in 1..=strategy.stages {
        let pseudo_ids: Vec<usize> = pseudo.iter().map(|p| p.label.node).collect();
        let candidates = candidate_set(
            out.soft.view(),
            &pseudo_ids,
            &partition.labeled,
            &partition.validation,
            cfg.delta_c,
        );
        if candidates.is_empty() {
            let msg = alloc::format!("stage {stage}: empty candidate set, stage skipped");
            log::warn!("{msg}");
            warnings.push(msg);
            let mut skipped = stages.last().cloned().expect("stage 0 recorded");
            skipped.stage = stage;
            skipped.skipped = true;
            skipped.candidates = 0;
            skipped.selected = Vec::new();
            skipped.multi_hop_routed = 0;
            skipped.selection_loss = None;
            skipped.selection_trace = Vec::new();
            stages.push(skipped);
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
            continue;
        }

        let confidence: Vec<f64> = candidates
            .iter()
            .map(|&v| out.soft.row(v).fold(0.0_f64, |m, &p| m.max(p)))
            .collect();
        let (chosen, selection_loss, selection_trace) = match strategy.selector {
            Selector::Confidence => (top_k(&confidence, k, &candidates, &confidence), None, Vec::new()),
            Selector::Optimized => {
                let local: Vec<usize> = partition
                    .labeled
                    .iter()
                    .copied()
                    .chain(pseudo_ids.iter().copied())
                    .collect();
                let local_vals: Vec<f64> = local.iter().map(|&v| shift.est[v]).collect();
                let global = bin_distribution(&shift.est, cfg.n_bins)?;
                let local_dist = bin_distribution(&local_vals, cfg.n_bins)?;
                let target = target_distribution(&global, &local_dist, k)?;
                let problem = SelectionProblem::new(
                    candidates.clone(),
                    out.logits.select(Axis(0), &candidates),
                    out.logits.clone(),
                    candidates.iter().map(|&v| shift.est[v]).collect(),
                    target,
                    k,
                    strategy.lambda_s,
                )?;
                let sel = optimize_selection(&problem, &cfg.selection)?;
                (top_k(&sel.q, k, &candidates, &confidence), Some(sel.loss), sel.trace)
            }
        };

        let mixed = match &prop_k {
            Some(pk) => {
                let h = forward(&model, pk)?;
                mix_outputs(out.logits.view(), h.logits.view(), &shift.est, strategy.delta_h)?
            }
            None => MixedOutput {
                rows: out.logits.clone(),
                sources: vec![HopSource::OneHop; n],
            },
        };
        let selected = assign_pseudo_labels(&mixed, &chosen)?;
        let leftover: Vec<(usize, usize)> = if strategy.dual {
            let mut is_chosen = vec![false; n];
            chosen.iter().for_each(|&v| is_chosen[v] = true);
            let rest: Vec<usize> = candidates.iter().copied().filter(|&v| !is_chosen[v]).collect();
            assign_pseudo_labels(&mixed, &rest)?
                .into_iter()
                .map(|p| (p.node, p.label))
                .collect()
        } else {
            Vec::new()
        };
        pseudo.extend(selected.iter().map(|&label| PseudoNode { stage, label }));

        let consistent: Vec<(usize, usize)> = pseudo.iter().map(|p| (p.label.node, p.label.label)).collect();
        let trained = train_dual(fresh()?, &prop, &clean, &consistent, &leftover, &validation, &train_cfg)
            .map_err(diverged(stage))?;
        let preds = predict(&trained.params, &prop)?;
        let shift_after = ctx.measure(&out.soft, &out.logits, &pseudo)?;

        stages.push(StageReport {
            stage,
            skipped: false,
            candidates: candidates.len(),
            multi_hop_routed: selected.iter().filter(|p| p.source == HopSource::MultiHop).count(),
            selected,
            pseudo_total: pseudo.len(),
            pseudo_mean_est_homophily: mean_of(&shift.est, pseudo.iter().map(|p| p.label.node)),
            pseudo_mean_true_homophily: mean_of(&ctx.true_h, pseudo.iter().map(|p| p.label.node)),
            global_mean_est_homophily: shift.est.iter().sum::<f64>() / n as f64,
            kl_local_global: shift_after.kl,
            kl_local_global_true: Some(shift_after.kl_true),
            cmd_local_global: shift_after.cmd,
            selection_loss,
            selection_trace,
            validation_accuracy: trained.validation.map(|s| s.accuracy),
            validation_loss: trained.validation.map(|s| s.loss),
            test_accuracy: ctx.accuracy(&preds, test),
        });

        let improved = match (&trained.validation, &best.0) {
            (Some(now), Some(prev)) => now.better_than(prev),
            // without validation nodes the latest stage is kept
            _ => true,
        };
        model = trained.params;
        if improved {
            best = (trained.validation, stage, model.clone(), preds);
            stale = 0;
        } else {
            stale += 1;
        }
        out = forward(&model, &prop)?;
        shift = ctx.measure(&out.soft, &out.logits, &pseudo)?;
        if stale >= cfg.patience {
            break;
        }
    }

    let (_, best_stage, best_model, best_preds) = best;
    let bins = BinReport::new(
        per_bin_accuracy(&backbone_preds, truth, &ctx.true_h, cfg.n_bins, test),
        per_bin_accuracy(&best_preds, truth, &ctx.true_h, cfg.n_bins, test),
        ctx.accuracy(&best_preds, test),
        ctx.accuracy(&backbone_preds, test),
    );
    let report = RunReport {
        variant,
        config: RunConfig { variant, ..cfg.clone() },
        labeled: partition.labeled.len(),
        k,
        stages,
        best_stage,
        pseudo,
        bins,
        global_mean_est_homophily: global_mean_est,
        global_mean_true_homophily: ctx.true_h.iter().sum::<f64>() / n as f64,
        warnings,
    };
    Ok(RunOutcome {
        report,
        model: best_model,
        backbone: backbone.params,
    })
}
