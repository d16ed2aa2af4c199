use std::path::{Path, PathBuf};
use std::process::ExitCode;

use batchmix_harness::checks;
use batchmix_harness::config::{preset, ExperimentConfig, PRESETS};
use batchmix_harness::experiment::{evaluate, generate_cell, run_cells, summarize, CellOutput, EvalRecord};
use batchmix_harness::report::{emit_csv, emit_summary, summary_path, write_records};
use batchmix_harness::HarnessError;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "batchmix", version, about = "Mixture-of-regressions recovery experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment config; a "preset" key inside it is expanded first.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset: fig1, fig2, fig3 or fig4.
    #[arg(long)]
    preset: Option<String>,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Shrink dimension, medium pool and evaluation batches by this factor.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Write the pools of one cell to JSON.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Medium batch size (default: first sweep value).
        #[arg(long)]
        n_m: Option<usize>,
    },
    /// Run the experiment at one medium batch size over all seeds.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_m: Option<usize>,
        /// Directory for per-cell JSON with the recovered list.
        #[arg(long)]
        save_lists: Option<PathBuf>,
    },
    /// Re-evaluate a saved list.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Cell JSON written by `run --save-lists`.
        #[arg(long)]
        list: PathBuf,
    },
    /// Run every medium batch size in the sweep over all seeds.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        save_lists: Option<PathBuf>,
    },
    /// Run the quick property checks.
    Selftest {
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match (&common.config, &common.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => preset(name)
            .ok_or_else(|| HarnessError::Config(format!("unknown preset {name:?}; expected one of {}", PRESETS.join(", "))))?,
        (None, None) => return Err(HarnessError::Config("either --config or --preset is required".into())),
    };
    if let (Some(_), Some(name)) = (&common.config, &common.preset) {
        cfg.preset = name.clone();
    }
    cfg = cfg.scaled(common.scale)?;
    if let Some(seed) = common.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &common.out {
        cfg.output_path = out.display().to_string();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn set_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
}

fn save_lists(dir: &Path, cells: &[(Option<CellOutput>, EvalRecord)]) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    for (out, rec) in cells {
        if let Some(out) = out {
            let path = dir.join(format!("{}_nm{}_seed{}.json", rec.preset, rec.n_m, rec.seed));
            std::fs::write(path, serde_json::to_vec(out)?)?;
        }
    }
    Ok(())
}

fn run_and_report(cfg: &ExperimentConfig, lists: Option<&Path>) -> Result<bool, HarnessError> {
    let cells = run_cells(cfg);
    if let Some(dir) = lists {
        save_lists(dir, &cells)?;
    }
    let records: Vec<EvalRecord> = cells.into_iter().map(|(_, r)| r).collect();
    let path = PathBuf::from(&cfg.output_path);
    emit_csv(&records, &path)?;
    let summary = summarize(&records);
    emit_summary(&summary, &summary_path(&path))?;
    for row in &summary {
        println!("{} n_m={:<3} runs={:<2} mean_mse={:.4} se={:.4}", row.preset, row.n_m, row.runs, row.mean_mse, row.stderr);
    }
    Ok(records.iter().all(|r| !r.failed()))
}

fn execute(cmd: Command) -> Result<bool, HarnessError> {
    match cmd {
        Command::Generate { common, n_m } => {
            set_threads(common.threads);
            let cfg = load(&common)?;
            let n_m = n_m.unwrap_or(cfg.sweep[0]);
            let data = generate_cell(&cfg, cfg.seeds[0], n_m)?;
            let doc = serde_json::json!({
                "mixture": data.mixture,
                "algo": data.algo,
                "small": data.small,
                "medium": data.medium,
            });
            let path = common.out.unwrap_or_else(|| PathBuf::from(format!("{}_pools.json", cfg.preset)));
            std::fs::write(&path, serde_json::to_vec(&doc)?)?;
            println!("wrote {}", path.display());
            Ok(true)
        }
        Command::Run { common, n_m, save_lists } => {
            set_threads(common.threads);
            let mut cfg = load(&common)?;
            cfg.sweep = vec![n_m.unwrap_or(cfg.sweep[0])];
            run_and_report(&cfg, save_lists.as_deref())
        }
        Command::Sweep { common, save_lists } => {
            set_threads(common.threads);
            let cfg = load(&common)?;
            run_and_report(&cfg, save_lists.as_deref())
        }
        Command::Eval { common, list } => {
            set_threads(common.threads);
            let cfg = load(&common)?;
            let text = std::fs::read_to_string(&list).map_err(|e| HarnessError::Io(format!("{}: {e}", list.display())))?;
            let cell: CellOutput = serde_json::from_str(&text)?;
            let eval_seed = batchmix::Seed::new(cell.record.seed).child("re-eval", 0);
            let (avg_mse, stderr) = evaluate(&cfg, &cell.mixture, &cell.estimates, eval_seed)?;
            let rec = EvalRecord { avg_mse, stderr, new_batch_size: cfg.new_batch_size, wall_ms: 0, ..cell.record };
            match common.out {
                Some(path) => emit_csv(&[rec], &path)?,
                None => write_records(std::io::stdout().lock(), &[rec])?,
            }
            Ok(true)
        }
        Command::Selftest { threads } => {
            set_threads(threads);
            let results = checks::quick_suite();
            for r in &results {
                println!("{r}");
            }
            Ok(results.iter().all(|r| r.pass))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
