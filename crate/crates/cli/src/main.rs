use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use fedsched::harness::{
    run_experiment, DataBundle, ExperimentConfig, ExperimentPlan, FederatedEnv, SummaryRow,
};
use fedsched::scheduler::PolicyKind;

#[derive(Parser)]
#[command(name = "fedsched", version, about = "Federated learning client-scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one policy at one K over one or more seeds.
    Run(RunArgs),
    /// Run every combination of policies and K values.
    Sweep(SweepArgs),
    /// Print the node embeddings of an episode as CSV.
    EmbedInspect(InspectArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    policy: Option<PolicyKind>,
    #[arg(long)]
    k: Option<usize>,
    /// Comma-separated episode seeds; defaults to the config's episodes.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Write the sensing graph of each seed as an `i j` edge list.
    #[arg(long)]
    dump_graph: bool,
    /// Write the node embeddings of each seed as CSV.
    #[arg(long)]
    dump_embeddings: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    policies: Vec<PolicyKind>,
    #[arg(long, value_delimiter = ',', required = true)]
    k_values: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    config: PathBuf,
    /// Episode seed; defaults to the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also print the sensing graph edge list to stderr.
    #[arg(long)]
    dump_graph: bool,
}

fn load(config: &Path) -> Result<(ExperimentConfig, DataBundle)> {
    let cfg = ExperimentConfig::from_file(config)
        .with_context(|| format!("loading config {}", config.display()))?;
    let data = DataBundle::load(&cfg.dataset, cfg.master_seed).context("loading dataset")?;
    Ok((cfg, data))
}

fn print_summary(rows: &[SummaryRow]) {
    println!(
        "{:<6} {:>4} {:>9} {:>9} {:>8} {:>12} {:>12}",
        "policy", "K", "final_acc", "std", "reached", "rounds@tgt", "energy@tgt"
    );
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.1}"));
    for r in rows {
        println!(
            "{:<6} {:>4} {:>9.4} {:>9.4} {:>5}/{:<2} {:>12} {:>12}",
            r.policy.as_str(),
            r.k,
            r.final_accuracy_mean,
            r.final_accuracy_std,
            r.reached,
            r.episodes,
            opt(r.rounds_to_target_mean),
            opt(r.energy_cost_mean),
        );
    }
}

fn execute(cfg: &ExperimentConfig, data: &DataBundle, plan: &ExperimentPlan, out_dir: &Path) -> Result<()> {
    let start = Instant::now();
    let report = run_experiment(cfg, data, plan, Some(out_dir)).context("running episodes")?;
    print_summary(&report.summary);
    for path in &report.written {
        eprintln!("wrote {}", path.display());
    }
    eprintln!("{} episodes in {:.1?}", report.episodes.len(), start.elapsed());
    if let Some(first) = report.io_errors.first() {
        for e in &report.io_errors {
            eprintln!("error: writing outputs: {e}");
        }
        bail!("writing outputs: {first}");
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let (mut cfg, data) = load(&args.config)?;
    if let Some(p) = args.policy {
        cfg.policy = p;
    }
    if let Some(k) = args.k {
        cfg.scheduled = k;
    }
    cfg.validate().context("validating overrides")?;
    let seeds = args.seeds.unwrap_or_else(|| cfg.episode_seeds());
    if args.dump_graph || args.dump_embeddings {
        fs::create_dir_all(&args.out_dir)
            .with_context(|| format!("writing outputs: creating {}", args.out_dir.display()))?;
        for &seed in &seeds {
            let env = FederatedEnv::new(&cfg, &data, seed).context("setting up episode")?;
            if args.dump_graph {
                let path = args.out_dir.join(format!("graph_seed{seed}.txt"));
                let file = File::create(&path)
                    .with_context(|| format!("writing outputs: {}", path.display()))?;
                env.graph()
                    .write_edge_list(BufWriter::new(file))
                    .with_context(|| format!("writing outputs: {}", path.display()))?;
            }
            if args.dump_embeddings {
                let path = args.out_dir.join(format!("embeddings_seed{seed}.csv"));
                let file = File::create(&path)
                    .with_context(|| format!("writing outputs: {}", path.display()))?;
                env.embeddings()
                    .write_csv(BufWriter::new(file))
                    .with_context(|| format!("writing outputs: {}", path.display()))?;
            }
        }
    }
    let plan = ExperimentPlan {
        policies: vec![cfg.policy],
        k_values: vec![cfg.scheduled],
        seeds,
    };
    execute(&cfg, &data, &plan, &args.out_dir)
}

fn sweep(args: SweepArgs) -> Result<()> {
    let (cfg, data) = load(&args.config)?;
    let plan = ExperimentPlan {
        policies: args.policies,
        k_values: args.k_values,
        seeds: args.seeds.unwrap_or_else(|| cfg.episode_seeds()),
    };
    execute(&cfg, &data, &plan, &args.out_dir)
}

fn inspect(args: InspectArgs) -> Result<()> {
    let (cfg, data) = load(&args.config)?;
    let seed = args.seed.unwrap_or(cfg.master_seed);
    let env = FederatedEnv::new(&cfg, &data, seed).context("setting up episode")?;
    let report = env.embedding_report();
    eprintln!(
        "{} nodes, {} edges, T={}, {} untrained nodes, epoch losses {:?}",
        env.graph().node_count(),
        env.graph().edges().len(),
        env.embeddings().dim(),
        report.untrained_nodes,
        report.epoch_losses
    );
    if args.dump_graph {
        env.graph()
            .write_edge_list(io::stderr().lock())
            .context("writing outputs: edge list")?;
    }
    match args.out {
        Some(path) => {
            let file = File::create(&path)
                .with_context(|| format!("writing outputs: {}", path.display()))?;
            env.embeddings()
                .write_csv(BufWriter::new(file))
                .with_context(|| format!("writing outputs: {}", path.display()))?;
        }
        None => {
            let mut out = io::stdout().lock();
            env.embeddings()
                .write_csv(&mut out)
                .and_then(|_| out.flush())
                .context("writing outputs: stdout")?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::EmbedInspect(a) => inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
