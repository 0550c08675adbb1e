use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hcgst::experiment::{self, ExperimentSpec, SweepParam};
use hcgst::io::{read_json, write_generated};
use hcgst::report::{self, AggregateRow};
use hcgst::{Error, Result};
use hcgst_core::orchestrator::Variant;
use hcgst_core::synth::{generate_graph, BiasMode};

/// Heterophily-aware graph self-training experiments.
#[derive(Parser)]
#[command(name = "hcgst", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled graph directory.
    Generate(GenerateArgs),
    /// Run variants over several seeds and write reports.
    Run(RunArgs),
    /// Repeat `run` over a grid of one hyperparameter.
    Sweep(SweepArgs),
    /// Rebuild the summary CSVs from the run JSON files in a directory.
    Report { dir: PathBuf },
}

#[derive(Args)]
struct GenerateArgs {
    /// JSON experiment manifest; its `synth` section is used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Same as --graph-seed.
    #[arg(long, conflicts_with = "graph_seed")]
    seed: Option<u64>,
    #[command(flatten)]
    synth: SynthFlags,
}

#[derive(Args, Default)]
struct SynthFlags {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    mean_degree: Option<f64>,
    /// Comma-separated bin weights for per-node homophily targets.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    histogram: Option<Vec<f64>>,
    #[arg(long)]
    separation: Option<f64>,
    /// Share of cross-class edges that go to the paired class.
    #[arg(long)]
    pair_bias: Option<f64>,
    /// Generator seed.
    #[arg(long)]
    graph_seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment manifest; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Graph directory. Without it a graph is generated from the synth flags.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated variant names.
    #[arg(long, value_delimiter = ',')]
    variant: Option<Vec<String>>,
    #[arg(long)]
    repeat: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    label_rate: Option<f64>,
    #[arg(long)]
    val_rate: Option<f64>,
    /// homophily_biased, representative or heterophily_biased.
    #[arg(long)]
    bias_mode: Option<String>,
    #[arg(long)]
    trace: bool,
    #[arg(long)]
    save_models: bool,
    #[command(flatten)]
    run: RunFlags,
    #[command(flatten)]
    synth: SynthFlags,
}

#[derive(Args)]
struct RunFlags {
    #[arg(long)]
    stages: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    delta_c: Option<f64>,
    #[arg(long)]
    delta_h: Option<f64>,
    #[arg(long)]
    lambda_s: Option<f64>,
    #[arg(long)]
    lambda_d: Option<f64>,
    #[arg(long)]
    n_bins: Option<usize>,
    #[arg(long)]
    hop: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// First seed; runs use `seed..seed+repeat`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    selection_iterations: Option<usize>,
    #[arg(long)]
    selection_step: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    param: SweepParam,
    /// Comma-separated values; defaults to the parameter's standard grid.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    #[command(flatten)]
    run: RunArgs,
}

fn base_spec(config: &Option<PathBuf>) -> Result<ExperimentSpec> {
    match config {
        Some(path) => read_json(path),
        None => Ok(ExperimentSpec::default()),
    }
}

macro_rules! set {
    ($($target:expr => $flag:expr),* $(,)?) => {
        $(if let Some(v) = $flag { $target = v; })*
    };
}

impl SynthFlags {
    fn apply(self, spec: &mut ExperimentSpec) {
        let s = &mut spec.synth;
        set! {
            s.n => self.n,
            s.classes => self.classes,
            s.feature_dim => self.feature_dim,
            s.mean_degree => self.mean_degree,
            s.target_histogram => self.histogram,
            s.separation => self.separation,
            s.pair_bias => self.pair_bias,
            s.seed => self.graph_seed,
        }
    }
}

impl RunFlags {
    fn apply(self, spec: &mut ExperimentSpec) {
        let r = &mut spec.run;
        set! {
            r.stages => self.stages,
            r.delta_c => self.delta_c,
            r.delta_h => self.delta_h,
            r.lambda_s => self.lambda_s,
            r.lambda_d => self.lambda_d,
            r.n_bins => self.n_bins,
            r.hop => self.hop,
            r.patience => self.patience,
            r.seed => self.seed,
            r.train.epochs => self.epochs,
            r.train.learning_rate => self.learning_rate,
            r.train.weight_decay => self.weight_decay,
            r.train.hidden => self.hidden,
            r.selection.iterations => self.selection_iterations,
            r.selection.step => self.selection_step,
        }
        if self.k.is_some() {
            r.k = self.k;
        }
    }
}

impl RunArgs {
    fn into_spec(self) -> Result<ExperimentSpec> {
        let mut spec = base_spec(&self.config)?;
        if self.graph.is_some() {
            spec.graph = self.graph;
        }
        set! {
            spec.output => self.out,
            spec.repeat => self.repeat,
            spec.jobs => self.jobs,
            spec.label_rate => self.label_rate,
            spec.val_rate => self.val_rate,
        }
        if let Some(names) = self.variant {
            spec.variants = names
                .iter()
                .map(|n| n.parse::<Variant>())
                .collect::<hcgst_core::Result<_>>()?;
        }
        if let Some(mode) = self.bias_mode {
            spec.bias_mode = mode.parse::<BiasMode>()?;
        }
        spec.trace |= self.trace;
        spec.save_models |= self.save_models;
        self.run.apply(&mut spec);
        self.synth.apply(&mut spec);
        spec.validate()?;
        Ok(spec)
    }
}

fn print_aggregate(rows: &[AggregateRow]) {
    println!(
        "{:<14} {:>4} {:>16} {:>16} {:>16} {:>16}",
        "variant", "runs", "ACC", "TPV", "NPV", "PPV"
    );
    for r in rows {
        let f = |m: report::MeanStd| format!("{:.2} ± {:.2}", 100.0 * m.mean, 100.0 * m.std);
        println!(
            "{:<14} {:>4} {:>16} {:>16} {:>16} {:>16}",
            r.variant.as_str(),
            r.runs,
            f(r.acc),
            f(r.tpv),
            f(r.npv),
            f(r.ppv)
        );
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(mut args) => {
            if args.seed.is_some() {
                args.synth.graph_seed = args.seed;
            }
            let mut spec = base_spec(&args.config)?;
            if let Some(out) = args.out {
                spec.output = out;
            }
            args.synth.apply(&mut spec);
            let graph = generate_graph(&spec.synth)?;
            let meta = write_generated(&spec.output, &spec.synth, &graph)?;
            println!(
                "wrote {} nodes, {} edges, graph homophily {:.4} to {}",
                meta.nodes,
                meta.edges,
                meta.graph_homophily,
                spec.output.display()
            );
        }
        Command::Run(args) => {
            let spec = args.into_spec()?;
            let reports = experiment::execute(&spec)?;
            print_aggregate(&report::aggregate(&reports));
        }
        Command::Sweep(args) => {
            let values = args.values.unwrap_or_else(|| args.param.default_grid());
            let spec = args.run.into_spec()?;
            for (value, rows) in experiment::sweep(&spec, args.param, &values)? {
                println!("{} = {value}", args.param.name());
                print_aggregate(&rows);
            }
        }
        Command::Report { dir } => {
            let reports = report::read_runs(&dir)?;
            if reports.is_empty() {
                return Err(Error::Config(format!("no run_*.json files in {}", dir.display())));
            }
            print_aggregate(&report::write_summaries(&dir, &reports)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
