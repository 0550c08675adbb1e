//! Experiment manifests, the parallel run loop and parameter sweeps.

use std::fs;
use std::path::{Path, PathBuf};

use hcgst_core::graph::Graph;
use hcgst_core::orchestrator::{run_variant, NodePartition, RunConfig, RunOutcome, RunReport, Variant};
use hcgst_core::synth::{generate_graph, BiasMode, SynthConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::io::read_graph;
use crate::report::{self, AggregateRow};

/// Everything needed to reproduce a batch of runs. Loaded from a JSON file
/// with command-line flags applied on top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Graph directory; when absent the graph is generated from `synth`.
    pub graph: Option<PathBuf>,
    pub synth: SynthConfig,
    pub output: PathBuf,
    /// Number of seeds, counting up from `run.seed`.
    pub repeat: usize,
    pub variants: Vec<Variant>,
    pub label_rate: f64,
    pub val_rate: f64,
    pub bias_mode: BiasMode,
    /// Worker threads for independent runs.
    pub jobs: usize,
    /// Emit per-run selection traces.
    pub trace: bool,
    /// Save the best model of each run as a checkpoint.
    pub save_models: bool,
    pub run: RunConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            graph: None,
            synth: SynthConfig::default(),
            output: PathBuf::from("out"),
            repeat: 1,
            variants: vec![Variant::Hcgst],
            label_rate: 0.02,
            val_rate: 0.1,
            bias_mode: BiasMode::HeterophilyBiased,
            jobs: 1,
            trace: false,
            save_models: false,
            run: RunConfig::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.repeat == 0 {
            return Err(Error::Config("repeat must be at least 1".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("at least one variant is required".into()));
        }
        if !(self.label_rate > 0.0 && self.label_rate < 1.0) || !(0.0..1.0).contains(&self.val_rate) {
            return Err(Error::Config("label and validation rates must lie in (0, 1)".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        self.run.validate()?;
        if self.graph.is_none() {
            self.synth.validate()?;
        }
        Ok(())
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.repeat as u64).map(|i| self.run.seed + i)
    }

    pub fn load_graph(&self) -> Result<Graph> {
        match &self.graph {
            Some(dir) => read_graph(dir),
            None => Ok(generate_graph(&self.synth)?),
        }
    }
}

/// Runs every variant × seed combination on `graph`. Results come back in
/// variant-major, seed-minor order regardless of `jobs`.
pub fn run_all(spec: &ExperimentSpec, graph: &Graph) -> Result<Vec<RunOutcome>> {
    spec.validate()?;
    let seeds: Vec<u64> = spec.seeds().collect();
    let partitions: Vec<NodePartition> = seeds
        .iter()
        .map(|&seed| {
            NodePartition::sample(
                graph,
                spec.label_rate,
                spec.val_rate,
                spec.bias_mode,
                spec.run.n_bins,
                seed,
            )
        })
        .collect::<hcgst_core::Result<_>>()?;
    let mut trace_selection = spec.run.selection;
    trace_selection.trace |= spec.trace;
    let tasks: Vec<(Variant, usize)> = spec
        .variants
        .iter()
        .flat_map(|&v| (0..seeds.len()).map(move |i| (v, i)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| {
        tasks
            .par_iter()
            .map(|&(variant, i)| {
                let cfg = RunConfig {
                    variant,
                    seed: seeds[i],
                    selection: trace_selection,
                    ..spec.run.clone()
                };
                log::info!("running {variant} with seed {}", seeds[i]);
                Ok(run_variant(graph, &partitions[i], &cfg)?)
            })
            .collect()
    })
}

/// Runs the experiment and writes per-run JSON (plus traces and checkpoints
/// when requested) and the summary CSVs into `spec.output`. The returned
/// reports are ordered by variant, then seed.
pub fn execute(spec: &ExperimentSpec) -> Result<Vec<RunReport>> {
    spec.validate()?;
    let graph = spec.load_graph()?;
    let outcomes = run_all(spec, &graph)?;
    let out = &spec.output;
    fs::create_dir_all(out).map_err(Error::write(out))?;
    for o in &outcomes {
        let r = &o.report;
        report::write_run(out, r)?;
        if spec.trace && r.stages.iter().any(|s| !s.selection_trace.is_empty()) {
            report::write_trace_csv(&out.join(report::trace_file_name(r.variant, r.config.seed)), r)?;
        }
        if spec.save_models {
            let name = format!("model_{}_{}.ckpt", r.variant, r.config.seed);
            checkpoint::save(&out.join(name), &o.model)?;
        }
    }
    let mut reports: Vec<RunReport> = outcomes.into_iter().map(|o| o.report).collect();
    // same order as `report::read_runs`, so rebuilt summaries match
    reports.sort_by_key(|r| (r.variant, r.config.seed));
    report::write_summaries(out, &reports)?;
    Ok(reports)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum SweepParam {
    LambdaS,
    LambdaD,
    DeltaH,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::LambdaS => "lambda_s",
            SweepParam::LambdaD => "lambda_d",
            SweepParam::DeltaH => "delta_h",
        }
    }

    /// Default grids, written as integer hundredths so the values print
    /// without rounding noise.
    pub fn default_grid(self) -> Vec<f64> {
        let (start, step, count) = match self {
            SweepParam::LambdaS => (130, 20, 8),
            SweepParam::LambdaD => (7, 1, 8),
            SweepParam::DeltaH => (10, 10, 9),
        };
        (0..count).map(|i| (start + step * i) as f64 / 100.0).collect()
    }

    pub fn apply(self, cfg: &mut RunConfig, value: f64) {
        match self {
            SweepParam::LambdaS => cfg.lambda_s = value,
            SweepParam::LambdaD => cfg.lambda_d = value,
            SweepParam::DeltaH => cfg.delta_h = value,
        }
    }
}

pub fn sweep_file_name(param: SweepParam) -> String {
    format!("sweep_{}.csv", param.name())
}

/// One full experiment per value, each in `<output>/<param>_<value>/`, plus
/// `sweep_<param>.csv` with one aggregate row per value and variant.
pub fn sweep(spec: &ExperimentSpec, param: SweepParam, values: &[f64]) -> Result<Vec<(f64, Vec<AggregateRow>)>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let mut sub = spec.clone();
        param.apply(&mut sub.run, value);
        sub.output = value_dir(&spec.output, param, value);
        let reports = execute(&sub)?;
        rows.push((value, report::aggregate(&reports)));
    }
    report::write_sweep_csv(&spec.output.join(sweep_file_name(param)), param.name(), &rows)?;
    Ok(rows)
}

fn value_dir(root: &Path, param: SweepParam, value: f64) -> PathBuf {
    root.join(format!("{}_{value}", param.name()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grids() {
        assert_eq!(
            SweepParam::LambdaS.default_grid(),
            [1.3, 1.5, 1.7, 1.9, 2.1, 2.3, 2.5, 2.7]
        );
        assert_eq!(
            SweepParam::LambdaD.default_grid(),
            [0.07, 0.08, 0.09, 0.1, 0.11, 0.12, 0.13, 0.14]
        );
        assert_eq!(
            SweepParam::DeltaH.default_grid(),
            [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
        );
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = ExperimentSpec {
            variants: vec![Variant::Hcgst, Variant::BackboneOnly],
            repeat: 3,
            ..Default::default()
        };
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentSpec>(&text).unwrap(), spec);
        let partial: ExperimentSpec = serde_json::from_str(r#"{"repeat": 4, "run": {"stages": 2}}"#).unwrap();
        assert_eq!(partial.repeat, 4);
        assert_eq!(partial.run.stages, 2);
        assert_eq!(partial.run.delta_c, RunConfig::default().delta_c);
    }
}
