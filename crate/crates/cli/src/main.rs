use clap::{Parser, Subcommand, ValueEnum};
use riskgrad_cli::checkpoint::Checkpoint;
use riskgrad_cli::config::ExperimentConfig;
use riskgrad_cli::eval::{evaluate, write_matrix, EvalOptions};
use riskgrad_cli::study::{self, StudyConfig, StudyKind};
use riskgrad_cli::{output_root, plot, sweep, train, CliError, Result, OUT_ENV};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "riskgrad", version, about = "Risk-sensitive policy gradient experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured seed.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output root; overrides RISKGRAD_OUT and the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        parallel_seeds: usize,
    },
    /// Roll out checkpoints and write a metric matrix.
    Eval {
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long)]
        episodes: usize,
        #[arg(long, value_enum, default_value_t = OnOff::Off)]
        sampling: OnOff,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV destination; defaults to eval.csv under the output root.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an estimator study and check its verdicts.
    Study {
        #[arg(value_enum)]
        kind: StudyKind,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train under Wang weights for each eta and aggregate.
    SweepEta {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        eta: Vec<f64>,
        /// Cost level for epochs-to-target; defaults to the cost limit.
        #[arg(long)]
        cost_target: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        parallel_seeds: usize,
    },
    /// Chart CSV columns as SVG.
    Plot {
        #[arg(long = "csv", required = true)]
        csvs: Vec<PathBuf>,
        #[arg(long = "column", required = true)]
        columns: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        title: Option<String>,
    },
}

fn root(flag: Option<&Path>, fallback: &Path) -> PathBuf {
    output_root(flag, std::env::var(OUT_ENV).ok().as_deref(), fallback)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, out, parallel_seeds } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = root(out.as_deref(), &cfg.output_dir);
            let runs = train::train(&cfg, &dir, parallel_seeds)?;
            for r in &runs {
                let last = r.reports.last().expect("epochs >= 1");
                println!(
                    "seed {}: {} epochs, reward {:.3}, cost {:.3}, lambda {:.4}",
                    r.seed,
                    r.reports.len(),
                    last.ep_reward_mean,
                    last.ep_cost_mean,
                    last.lambda
                );
            }
            println!("wrote {}", dir.display());
        }
        Command::Eval { checkpoints, episodes, sampling, seed, out } => {
            let loaded: Vec<Checkpoint> = checkpoints.iter().map(|p| Checkpoint::load(p)).collect::<Result<_>>()?;
            let opts = EvalOptions {
                episodes,
                sampling: matches!(sampling, OnOff::On),
                seed,
                weights: Some(loaded[0].config.eval_weights.clone()),
                env: None,
            };
            let mut rows = Vec::with_capacity(loaded.len());
            for (path, ckpt) in checkpoints.iter().zip(&loaded) {
                let label = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into());
                let s = evaluate(ckpt, &label, &opts)?;
                let objs: Vec<String> = s.objectives.iter().map(|(k, v)| format!("{k} {v:.3}")).collect();
                println!(
                    "{}: return {:.3} +- {:.3}, cost {:.3} +- {:.3}, {}",
                    s.label,
                    s.mean_return,
                    s.std_return,
                    s.mean_cost,
                    s.std_cost,
                    objs.join(", ")
                );
                rows.push(s);
            }
            let path = match out {
                Some(p) => p,
                None => {
                    let dir = root(None, Path::new("."));
                    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
                    dir.join("eval.csv")
                }
            };
            write_matrix(&path, &rows)?;
            println!("wrote {}", path.display());
        }
        Command::Study { kind, config, out } => {
            let cfg = match config {
                Some(p) => StudyConfig::load(&p)?,
                None => StudyConfig::default(),
            };
            let dir = root(out.as_deref(), Path::new("study"));
            let report = study::run(kind, &cfg)?;
            study::write(kind, &report, &dir)?;
            for v in &report.verdicts {
                println!("{v}");
            }
            let failed: Vec<&str> = report.verdicts.iter().filter(|v| !v.passed).map(|v| v.name.as_str()).collect();
            if !failed.is_empty() {
                return Err(CliError::Verdict(failed.join("; ")));
            }
        }
        Command::SweepEta { config, eta, cost_target, out, parallel_seeds } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = root(out.as_deref(), &cfg.output_dir);
            let res = sweep::sweep(&cfg, &eta, cost_target, &dir, parallel_seeds)?;
            for r in &res.rows {
                println!(
                    "eta {}: entropy {:.4}, reward {:.3}, cost {:.3}, epochs-to-target {}",
                    r.eta, r.entropy, r.reward, r.cost, r.epochs_to_cost_target
                );
            }
            let show = |x: Option<f64>| x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"));
            println!(
                "spearman(eta, entropy) {}, spearman(eta, cost) {}, spearman(eta, epochs-to-target) {}",
                show(res.entropy_corr),
                show(res.cost_corr),
                show(res.target_corr)
            );
            println!("wrote {}", dir.join("sweep.csv").display());
        }
        Command::Plot { csvs, columns, out, title } => {
            let paths: Vec<&Path> = csvs.iter().map(PathBuf::as_path).collect();
            plot::plot(&paths, &columns, &out, title.as_deref())?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
