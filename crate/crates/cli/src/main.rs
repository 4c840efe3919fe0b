use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use ddi_core::experiment::{
    aggregate_reports, aggregate_table, compare_models, load_data, run_experiment, Data, ExperimentConfig,
    SeedRun,
};
use ddi_core::graph_store::{load_triples, LoadOptions};
use ddi_core::synth_world::{self, WorldSpec};

#[derive(Parser)]
#[command(name = "ddi", version, about = "Leakage-safe drug-pair interaction experiments")]
struct Cli {
    /// Log progress (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory; each seed writes to `<out>/seed-<s>/`.
    #[arg(short, long)]
    out: PathBuf,
    /// Run only this seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic world.
    Gen {
        /// World spec (TOML); defaults apply to missing keys.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
        /// Override the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Split the KG into train/valid/test.
    Split(RunArgs),
    /// Sample and freeze the negative pools.
    Pools(RunArgs),
    /// Train the fusion teacher.
    TrainTeacher(RunArgs),
    /// Distil the feature-only student.
    Distill {
        #[command(flatten)]
        run: RunArgs,
        /// Extra labelled triples for the KD set; they must pass the leakage checks.
        #[arg(long)]
        extra_kd: Option<PathBuf>,
    },
    /// Train the comparison baselines.
    Baselines(RunArgs),
    /// Score validation and test candidates with every model.
    Score(RunArgs),
    /// Choose each model's alert threshold on validation scores.
    Calibrate(RunArgs),
    /// Evaluate every model on the frozen test pool.
    Eval(RunArgs),
    /// Aggregate per-seed reports into mean ± std.
    Report(RunArgs),
    /// Tabulate per-seed reports that share the same pools.
    Compare {
        /// Report JSON files (`seed-<s>/reports/<model>.json`).
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Row to measure false-positive reduction against.
        #[arg(long)]
        baseline: Option<String>,
    },
    /// Run every stage for every seed, then aggregate.
    Run(RunArgs),
    /// Render ROC and PR curves from the test score files.
    Plot(RunArgs),
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        config.seeds = Some(vec![s]);
    }
    Ok(config)
}

/// Runs `f` on every configured seed's run directory.
fn each_seed(args: &RunArgs, mut f: impl FnMut(&mut SeedRun<'_>) -> Result<()>) -> Result<()> {
    let config = load_config(args)?;
    let data = load_data(&config)?;
    for seed in config.seeds() {
        let mut run = SeedRun::open(&config, &data, &args.out, seed)?;
        f(&mut run)?;
    }
    Ok(())
}

fn stage(args: &RunArgs, name: &str) -> Result<()> {
    each_seed(args, |run| {
        for report in run.run_stage(name)? {
            print!("{}", report.to_text());
        }
        Ok(())
    })
}

fn gen(spec: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut spec: WorldSpec = match spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).map_err(|e| ddi_core::Error::Config(format!("{}: {e}", p.display())))?
        }
        None => WorldSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let world = synth_world::generate(&spec)?;
    world.write(out)?;
    println!(
        "wrote {} drugs, {} triples to {}",
        spec.num_drugs,
        world.kg.len(),
        out.display()
    );
    Ok(())
}

fn distill(args: &RunArgs, extra: Option<&Path>) -> Result<()> {
    let config = load_config(args)?;
    let data: Data = load_data(&config)?;
    let extra = match extra {
        Some(p) => {
            let opts = LoadOptions {
                num_relations: config.num_relations(),
                num_drugs: Some(data.kg.num_drugs()),
                ..LoadOptions::default()
            };
            load_triples(p, &opts)?.set.triples().to_vec()
        }
        None => Vec::new(),
    };
    for seed in config.seeds() {
        SeedRun::open(&config, &data, &args.out, seed)?.distill(&extra)?;
    }
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Gen { spec, out, seed } => gen(spec.as_deref(), &out, seed),
        Command::Split(a) => stage(&a, "split"),
        Command::Pools(a) => stage(&a, "pools"),
        Command::TrainTeacher(a) => stage(&a, "train-teacher"),
        Command::Distill { run, extra_kd } => distill(&run, extra_kd.as_deref()),
        Command::Baselines(a) => stage(&a, "baselines"),
        Command::Score(a) => stage(&a, "score"),
        Command::Calibrate(a) => stage(&a, "calibrate"),
        Command::Eval(a) => stage(&a, "eval"),
        Command::Report(a) => {
            let config = load_config(&a)?;
            let aggregates = aggregate_reports(&config, &a.out)?;
            print!("{}", aggregate_table(&aggregates));
            Ok(())
        }
        Command::Compare { reports, baseline } => {
            print!("{}", compare_models(&reports, baseline.as_deref())?.to_text());
            Ok(())
        }
        Command::Run(a) => {
            let config = load_config(&a)?;
            let outcome = run_experiment(&config, &a.out)?;
            println!("config {}", outcome.config_hash);
            print!("{}", aggregate_table(&outcome.aggregates));
            Ok(())
        }
        Command::Plot(a) => each_seed(&a, |run| {
            for p in run.plot()? {
                println!("{}", p.display());
            }
            Ok(())
        }),
    }
}

/// Exit code of the innermost library error, or 1.
fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<ddi_core::Error>())
        .map_or(1, |e| e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
