//! `mtlsa`: generate disjoint datasets, train, run the ablation matrix,
//! summarize results and audit sample weights.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mtlsa::bench::{self, MatrixData};
use mtlsa::dataio::{gen_two_task, load_csv, metadata_path, save_csv, DatasetMetadata, DisjointDataset, TaskData};
use mtlsa::nn::{read_checkpoint, write_checkpoint, Task};
use mtlsa::textio::write_file_atomically;
use mtlsa::trainer::{make_targets, sample_weights, train, TrainedModel};
use mtlsa::weighting::write_audit;

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "mtlsa", version, about = "Multi-task training on disjoint datasets")]
struct Cli {
    /// More log output (repeatable). MTLSA_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override one configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset pair (train/test CSVs plus sidecars).
    GenData {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "n-a")]
        n_a: Option<usize>,
        #[arg(long = "n-b")]
        n_b: Option<usize>,
    },
    /// Train one strategy; writes checkpoint, history and weight audits.
    Train {
        #[command(flatten)]
        common: Common,
        /// Directory written by gen-data.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        /// stl, joint, mtl-wf or mtl-sa.
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Run the strategy matrix over several seeds and write a report.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Fixed dataset directory. Without it a fresh pair is generated per seed.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Comma-separated roster ids (default: all eleven).
        #[arg(long = "strategy", value_delimiter = ',')]
        strategies: Option<Vec<String>>,
    },
    /// Summarize a results file into report.csv and report.dat.
    Report {
        /// results.csv written by ablate.
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute the per-sample weights of a trained checkpoint.
    AuditWeights {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Task to augment: `a` weighs dataset B, `b` weighs dataset A.
        #[arg(long, default_value = "a")]
        task: String,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    cfg.apply_overrides(&common.set)?;
    if let Some(seed) = common.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    Ok(cfg)
}

const DATA_FILES: [(&str, Task); 4] = [
    ("a_train.csv", Task::A),
    ("b_train.csv", Task::B),
    ("a_test.csv", Task::A),
    ("b_test.csv", Task::B),
];

fn write_dataset(ds: &DisjointDataset, path: &Path, cfg: &RunConfig) -> Result<()> {
    save_csv(ds, path)?;
    let shift = (ds.task == Task::B).then_some(&cfg.data.shift);
    DatasetMetadata::describe(ds, Some(cfg.data.seed), shift).write(&metadata_path(path))?;
    Ok(())
}

fn cmd_gen_data(common: &Common, out: &Path, n_a: Option<usize>, n_b: Option<usize>) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(n) = n_a {
        cfg.data.n_a = n;
    }
    if let Some(n) = n_b {
        cfg.data.n_b = n;
    }
    let pair = gen_two_task(&cfg.data)?;
    let split = pair.split(cfg.train_fraction, cfg.data.seed)?;
    let d = split.data;
    let sets = [Some(&d.train_a), Some(&d.train_b), d.test_a.as_ref(), d.test_b.as_ref()];
    for ((name, _), ds) in DATA_FILES.iter().zip(sets) {
        let path = out.join(name);
        write_dataset(ds.expect("generated pair has test sets"), &path, &cfg)?;
        println!("{}", path.display());
    }
    for (name, ds) in [("a_full.csv", &pair.a), ("b_full.csv", &pair.b)] {
        let path = out.join(name);
        write_dataset(ds, &path, &cfg)?;
        println!("{}", path.display());
    }
    let config_path = out.join("generator.cfg");
    write_file_atomically(&config_path, &cfg.to_text())?;
    println!("{}", config_path.display());
    Ok(())
}

/// Loads the four split files. Train files are required; test files are
/// required when `need_test` is set.
fn load_data(dir: &Path, need_test: bool) -> Result<TaskData> {
    let required = if need_test { 4 } else { 2 };
    let missing: Vec<String> = DATA_FILES[..required]
        .iter()
        .map(|(name, _)| dir.join(name))
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        bail!("missing dataset files: {}", missing.join(", "));
    }
    let load = |i: usize| -> Result<Option<DisjointDataset>> {
        let (name, task) = DATA_FILES[i];
        let path = dir.join(name);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(load_csv(&path, task)?))
    };
    let data = TaskData {
        train_a: load(0)?.unwrap(),
        train_b: load(1)?.unwrap(),
        test_a: load(2)?,
        test_b: load(3)?,
    };
    data.validate()?;
    Ok(data)
}

fn cmd_train(common: &Common, data_dir: &Path, out: &Path, epochs: Option<usize>, strategy: Option<&str>) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    if let Some(s) = strategy {
        cfg.set("strategy", s)?;
    }
    cfg.train.validate()?;
    let data = load_data(data_dir, false)?;
    let result = train(&cfg.train, &data)?;

    match &result.model {
        TrainedModel::Shared(net) => write_checkpoint(net, &out.join("checkpoint.txt"))?,
        TrainedModel::Separate { a, b } => {
            write_checkpoint(a, &out.join("checkpoint_a.txt"))?;
            write_checkpoint(b, &out.join("checkpoint_b.txt"))?;
        }
    }
    result.history.write(&out.join("history.csv"))?;
    write_audit(&result.audit_task_a, &out.join("weights_task_a.csv"))?;
    write_audit(&result.audit_task_b, &out.join("weights_task_b.csv"))?;
    write_file_atomically(&out.join("train.cfg"), &cfg.to_text())?;

    for task in [Task::A, Task::B] {
        match result.test_accuracy(&data, task)? {
            Some(acc) => println!("test_acc_{} = {acc:.4}", task.name().to_lowercase()),
            None => println!("test_acc_{} = n/a", task.name().to_lowercase()),
        }
    }
    Ok(())
}

fn cmd_ablate(
    common: &Common,
    data_dir: Option<&Path>,
    out: &Path,
    epochs: Option<usize>,
    seeds: Option<&[u64]>,
    strategies: Option<&[String]>,
) -> Result<bool> {
    let mut cfg = load_config(common)?;
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    if let Some(s) = seeds {
        cfg.seeds = s.to_vec();
    }
    if let Some(s) = strategies {
        cfg.strategies = s.to_vec();
    }
    let roster = if cfg.strategies.is_empty() {
        bench::default_roster()
    } else {
        let ids: Vec<&str> = cfg.strategies.iter().map(String::as_str).collect();
        bench::select_roster(&ids)?
    };
    let fixed;
    let data = match data_dir {
        Some(dir) => {
            fixed = load_data(dir, true)?;
            MatrixData::Fixed(&fixed)
        }
        None => MatrixData::Generated {
            generator: cfg.data.clone(),
            train_fraction: cfg.train_fraction,
        },
    };
    let outcome = bench::run_matrix(&roster, &cfg.train, &data, &cfg.seeds)?;
    for r in &outcome.results {
        log::info!("{} seed {} took {:.2}s", r.strategy, r.seed, r.seconds);
    }
    write_file_atomically(&out.join("results.csv"), &bench::results_csv(&outcome.results))?;
    let rows = bench::summarize(&outcome.results);
    bench::write_report(&rows, out)?;
    write_file_atomically(&out.join("ablate.cfg"), &cfg.to_text())?;
    print!("{}", bench::report_csv(&rows));
    for f in &outcome.failures {
        eprintln!("failed: {} seed {}: {}", f.strategy, f.seed, f.error);
    }
    Ok(outcome.failures.is_empty())
}

fn cmd_report(results: &Path, out: &Path) -> Result<()> {
    let results = bench::read_results(results)?;
    if results.is_empty() {
        bail!("no results to summarize");
    }
    let rows = bench::summarize(&results);
    bench::write_report(&rows, out)?;
    print!("{}", bench::report_csv(&rows));
    Ok(())
}

fn cmd_audit(common: &Common, data_dir: &Path, checkpoint: &Path, task: &str, out: &Path) -> Result<()> {
    let cfg = load_config(common)?;
    let augment = match task.to_ascii_lowercase().as_str() {
        "a" => Task::A,
        "b" => Task::B,
        other => bail!("unknown task '{other}' (expected a or b)"),
    };
    let data = load_data(data_dir, false)?;
    let net = read_checkpoint(checkpoint)?;
    let unlabeled = data.train(augment.other());
    let labeled = data.train(augment);
    let aux = make_targets(&net, augment, &unlabeled.features, cfg.train.temperature)?;
    let (w, records) = sample_weights(&net, augment, unlabeled, labeled, &aux.soft, &cfg.train, cfg.train.weight_mode)
        .context("computing weights")?;
    write_audit(&records, out)?;
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    println!("{} samples, mean weight {mean:.4}", w.len());
    Ok(())
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MTLSA_LOG", level))
        .format_timestamp(None)
        .init();
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenData { common, out, n_a, n_b } => cmd_gen_data(&common, &out, n_a, n_b)?,
        Command::Train {
            common,
            data,
            out,
            epochs,
            strategy,
        } => cmd_train(&common, &data, &out, epochs, strategy.as_deref())?,
        Command::Ablate {
            common,
            data,
            out,
            epochs,
            seeds,
            strategies,
        } => return cmd_ablate(&common, data.as_deref(), &out, epochs, seeds.as_deref(), strategies.as_deref()),
        Command::Report { results, out } => cmd_report(&results, &out)?,
        Command::AuditWeights {
            common,
            data,
            checkpoint,
            task,
            out,
        } => cmd_audit(&common, &data, &checkpoint, &task, &out)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
