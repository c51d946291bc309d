use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ktsim_core::episode::write_jsonl;
use ktsim_core::experiment::{simulate_condition, ConditionResult, EpisodeOutcome};
use ktsim_core::model::model_file_name;
use ktsim_core::report::{emit_report, load_conditions, save_condition};
use ktsim_core::session::SessionManager;
use ktsim_core::training::{accuracy_reports, generate_dataset, train_all, TrainConfig};
use ktsim_core::{BktGainMode, Condition, Dataset, ModelSet, Scenario, TrainedModel};

#[derive(Parser, Debug)]
#[command(name = "ktsim", version, about = "Knowledge-tracing teaching simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate random-choice practice data.
    GenData {
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit tracers on the training part of a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Fit only this family and write a single model file to `--out`.
        /// Without it, all three are written into the `--out` directory.
        #[arg(long)]
        model: Option<Condition>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Held-out accuracy of trained models.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        models_dir: PathBuf,
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        scenario: ScenarioArg,
    },
    /// Run closed-loop teaching episodes for one condition.
    Simulate {
        #[arg(long)]
        model: Condition,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        models_dir: PathBuf,
        #[command(flatten)]
        scenario: ScenarioArg,
        #[command(flatten)]
        gain: GainArg,
        #[arg(long)]
        out: PathBuf,
        /// Also write full episode logs as JSONL.
        #[arg(long)]
        logs: Option<PathBuf>,
    },
    /// Summaries and paired tests over simulated conditions.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve interactive sessions over HTTP.
    Serve {
        #[arg(long)]
        models_dir: PathBuf,
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Append-only store of finished sessions.
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Data generation, training, evaluation and all four conditions in one go.
    Replicate {
        #[arg(long, default_value_t = 500)]
        train_students: usize,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        scenario: ScenarioArg,
        #[command(flatten)]
        gain: GainArg,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
pub struct ScenarioArg {
    /// Scenario JSON; the built-in default when absent.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
}

impl ScenarioArg {
    pub fn load(&self) -> Result<Scenario> {
        match &self.scenario {
            Some(p) => Scenario::load(p).with_context(|| format!("loading {}", p.display())),
            None => Ok(Scenario::default_scenario()),
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct SplitArgs {
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct GainArg {
    /// Leave the learning transition out of the BKT gain.
    #[arg(long)]
    pub bkt_posterior_only: bool,
}

impl GainArg {
    fn mode(&self) -> BktGainMode {
        if self.bkt_posterior_only {
            BktGainMode::PosteriorOnly
        } else {
            BktGainMode::WithTransition
        }
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn load_data(path: &Path, s: &Scenario) -> Result<Dataset> {
    let d = Dataset::load(path).with_context(|| format!("loading {}", path.display()))?;
    d.validate(s)?;
    Ok(d)
}

fn simulate(
    models: &ModelSet,
    c: Condition,
    n: usize,
    seed: u64,
    mode: BktGainMode,
    out: &Path,
    logs: Option<&Path>,
) -> Result<ConditionResult> {
    let episodes = simulate_condition(models, c, n, seed, mode)?;
    if let Some(p) = logs {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        write_jsonl(p, &episodes)?;
    }
    let r = ConditionResult::from_outcomes(
        c,
        &models.scenario,
        seed,
        episodes.iter().map(EpisodeOutcome::from_log).collect(),
    );
    let path = save_condition(out, &r)?;
    log::info!("{c}: wrote {}", path.display());
    Ok(r)
}

pub async fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData {
            n,
            seed,
            scenario,
            out,
        } => {
            if n == 0 {
                bail!("--n must be at least 1");
            }
            let s = scenario.load()?;
            let d = generate_dataset(n, &s, seed);
            d.save(&out)?;
            log::info!("wrote {} trajectories to {}", d.len(), out.display());
        }
        Command::Train {
            data,
            model,
            seed,
            split,
            scenario,
            out,
        } => {
            let s = scenario.load()?;
            let (train, _) = load_data(&data, &s)?.split(split.split_seed, split.train_fraction);
            let cfg = TrainConfig::with_seed(seed);
            match model {
                None => {
                    let t = train_all(&train, &s, &cfg)?;
                    t.models.save_dir(&out)?;
                    log::info!("wrote models to {}", out.display());
                }
                Some(c) => {
                    let m = match c {
                        Condition::Bkt => TrainedModel::Bkt(ktsim_core::bkt::fit_em(&train, &s, &cfg.em)?.model),
                        Condition::Pfa => TrainedModel::Pfa(ktsim_core::pfa::fit_mle(&train, &s, &cfg.mle)?.params),
                        Condition::Dkt => TrainedModel::Dkt(ktsim_core::dkt::fit_bptt(&train, &s, &cfg.dkt)?.params),
                        Condition::EloOracle => bail!("the oracle is not trainable"),
                    };
                    m.save(&out)?;
                    log::info!("wrote {} (load it from a directory as {})", out.display(), model_file_name(c));
                }
            }
        }
        Command::Evaluate {
            data,
            models_dir,
            split,
            scenario,
        } => {
            let s = scenario.load()?;
            let (_, test) = load_data(&data, &s)?.split(split.split_seed, split.train_fraction);
            let models = ModelSet::load_dir(&models_dir, s)?;
            print_json(&accuracy_reports(&models, &test)?)?;
        }
        Command::Simulate {
            model,
            n,
            seed,
            models_dir,
            scenario,
            gain,
            out,
            logs,
        } => {
            if n == 0 {
                bail!("--n must be at least 1");
            }
            let models = ModelSet::load_dir(&models_dir, scenario.load()?)?;
            let r = simulate(&models, model, n, seed, gain.mode(), &out, logs.as_deref())?;
            print_json(&r.summary)?;
        }
        Command::Report { input, out } => {
            let results = load_conditions(&input)?;
            print_json(&emit_report(&results, &out)?)?;
        }
        Command::Serve {
            models_dir,
            scenario,
            port,
            host,
            log,
            seed,
        } => {
            let models = ModelSet::load_dir(&models_dir, scenario.load()?)?;
            let manager = Arc::new(SessionManager::new(models, seed, Some(log)));
            let listener = tokio::net::TcpListener::bind((host.as_str(), port)).await?;
            log::info!("listening on {}", listener.local_addr()?);
            axum::serve(listener, crate::server::router(manager))
                .with_graceful_shutdown(async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await?;
        }
        Command::Replicate {
            train_students,
            n,
            seed,
            scenario,
            gain,
            out,
        } => {
            let s = scenario.load()?;
            std::fs::create_dir_all(&out)?;
            let data = generate_dataset(train_students, &s, seed);
            data.save(&out.join("train.jsonl"))?;
            let (train, test) = data.split(seed, 0.8);
            let trained = train_all(&train, &s, &TrainConfig::with_seed(seed))?;
            trained.models.save_dir(&out.join("models"))?;
            let acc = accuracy_reports(&trained.models, &test)?;
            std::fs::write(out.join("accuracy.json"), serde_json::to_string_pretty(&acc)?)?;
            let results = Condition::ALL
                .into_iter()
                .map(|c| simulate(&trained.models, c, n, seed, gain.mode(), &out.join("results"), None))
                .collect::<Result<Vec<_>>>()?;
            let report = emit_report(&results, &out.join("report"))?;
            print_json(&serde_json::json!({ "accuracy": acc, "report": report }))?;
        }
    }
    Ok(())
}
