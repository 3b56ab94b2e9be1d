use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use mvmsynth::harness::{
    emit_figures, evaluate, run_ablations, save_velocity_plot, train, Dataset, EvalOptions, ExperimentConfig,
    ExperimentReport, MethodKind,
};
use mvmsynth::network::{load_checkpoint, AblationRow, Checkpoint};
use mvmsynth::series::load_series;
use mvmsynth::velocity::{velocity_coefficient, velocity_curves};
use mvmsynth::{Error, Result};

const THREADS_ENV: &str = "MVMSYNTH_THREADS";

#[derive(Parser)]
#[command(name = "mvmsynth", version, about = "Frame synthesis for cine velocity mapping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Dataset split file (`split.json`). Without it a phantom cohort is generated in memory.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone, Default)]
struct TrainFlags {
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    base_channels: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a phantom cohort with `split.json`.
    Phantom {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        train_subjects: Option<usize>,
        #[arg(long)]
        val_subjects: Option<usize>,
        #[arg(long)]
        test_subjects: Option<usize>,
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Train the network; writes `best.ckpt` and periodic checkpoints.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Score a checkpoint and/or baselines on the test split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated subset of linear,hs_flow,model.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<MethodKind>,
        /// Score velocity with ground-truth masks.
        #[arg(long)]
        gt_masks: bool,
        /// Also write figures for the first test series.
        #[arg(long)]
        figures: bool,
    },
    /// Score the classical baselines only.
    Baseline {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        methods: Vec<MethodKind>,
    },
    /// Train and score the ablation rows.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: TrainFlags,
        #[arg(long, value_delimiter = ',')]
        rows: Vec<AblationRow>,
    },
    /// Velocity curves of one series archive, optionally against a model reconstruction.
    Velocity {
        #[command(flatten)]
        common: Common,
        /// Series archive directory.
        #[arg(long)]
        series: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Print the tables of a saved report and optionally draw figures.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "report.json")]
        input: PathBuf,
        /// Draw figures for the first test series.
        #[arg(long)]
        figures: bool,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(d) = &common.data {
        cfg.train.data = Some(d.clone());
    }
    if let Some(s) = common.seed {
        cfg.train.seed = s;
        cfg.cohort.seed = s;
    }
    Ok(cfg)
}

fn apply_train_flags(cfg: &mut ExperimentConfig, f: &TrainFlags) {
    let t = &mut cfg.train;
    if let Some(v) = f.steps {
        t.max_steps = v;
    }
    if let Some(v) = f.learning_rate {
        t.learning_rate = v;
    }
    if let Some(v) = f.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = f.base_channels {
        t.net.base_channels = v;
    }
    if let Some(v) = f.eval_every {
        t.eval_every = v;
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, serde_json::to_vec_pretty(value)?)?;
    Ok(())
}

fn finish_report(report: &ExperimentReport, out: &Path) -> Result<()> {
    report.write_json(&out.join("report.json"))?;
    print!("{}", report.render());
    for row in &report.methods {
        for f in &row.report.failures {
            log::warn!("{}: {f}", row.report.method);
        }
    }
    Ok(())
}

fn open_checkpoint(path: Option<&PathBuf>) -> Result<Option<Checkpoint>> {
    path.map(|p| load_checkpoint(p, None)).transpose()
}

fn figures_for(report: &ExperimentReport, data: &Dataset, ck: Option<&Checkpoint>, opts: &EvalOptions, out: &Path) -> Result<()> {
    let series = data
        .test
        .first()
        .ok_or_else(|| Error::Argument("test split is empty".into()))?;
    for p in emit_figures(report, series, ck, opts, &out.join("figures"))? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Phantom {
            common,
            train_subjects,
            val_subjects,
            test_subjects,
            frames,
        } => {
            let mut cfg = load_config(&common)?;
            let c = &mut cfg.cohort;
            c.train_subjects = train_subjects.unwrap_or(c.train_subjects);
            c.val_subjects = val_subjects.unwrap_or(c.val_subjects);
            c.test_subjects = test_subjects.unwrap_or(c.test_subjects);
            c.base.frames = frames.unwrap_or(c.base.frames);
            let split = cfg.cohort.write(&common.out)?;
            println!(
                "wrote {} train, {} val, {} test series to {}",
                split.train.len(),
                split.val.len(),
                split.test.len(),
                common.out.display()
            );
        }
        Command::Train { common, flags } => {
            let mut cfg = load_config(&common)?;
            apply_train_flags(&mut cfg, &flags);
            cfg.train.checkpoint_dir = Some(common.out.clone());
            let data = cfg.dataset()?;
            let out = train(&cfg.train, &data)?;
            write_json(&common.out.join("train.json"), &serde_json::json!({
                "steps": out.steps,
                "best_step": out.best_step,
                "wall_clock_s": out.wall_clock_s,
                "trace": out.trace,
                "val_trace": out.val_trace,
            }))?;
            println!(
                "trained {} steps in {:.1}s; best step {}; final loss {:.5}",
                out.steps,
                out.wall_clock_s,
                out.best_step,
                out.trace.last().map_or(f64::NAN, |b| b.total)
            );
        }
        Command::Evaluate {
            common,
            checkpoint,
            methods,
            gt_masks,
            figures,
        } => {
            let mut cfg = load_config(&common)?;
            cfg.eval.gt_masks_for_velocity |= gt_masks;
            let ck = open_checkpoint(checkpoint.as_ref())?;
            let methods = if !methods.is_empty() {
                methods
            } else if ck.is_some() {
                cfg.methods.clone()
            } else {
                cfg.methods.iter().copied().filter(|m| *m != MethodKind::Model).collect()
            };
            let data = cfg.dataset()?;
            let report = evaluate(ck.as_ref(), &data.test, &methods, &cfg.eval)?;
            finish_report(&report, &common.out)?;
            if figures {
                figures_for(&report, &data, ck.as_ref(), &cfg.eval, &common.out)?;
            }
        }
        Command::Baseline { common, methods } => {
            let cfg = load_config(&common)?;
            if methods.contains(&MethodKind::Model) {
                return Err(Error::Argument("baseline accepts linear and hs_flow only".into()));
            }
            let methods = if methods.is_empty() {
                vec![MethodKind::Linear, MethodKind::HsFlow]
            } else {
                methods
            };
            let data = cfg.dataset()?;
            finish_report(&evaluate(None, &data.test, &methods, &cfg.eval)?, &common.out)?;
        }
        Command::Ablate { common, flags, rows } => {
            let mut cfg = load_config(&common)?;
            apply_train_flags(&mut cfg, &flags);
            cfg.train.checkpoint_dir = Some(common.out.join("checkpoints"));
            let rows = if rows.is_empty() { cfg.rows.clone() } else { rows };
            let data = cfg.dataset()?;
            let run = run_ablations(&cfg.train, &data, &cfg.eval, &rows)?;
            finish_report(&run.report, &common.out)?;
        }
        Command::Velocity {
            common,
            series,
            checkpoint,
        } => {
            let cfg = load_config(&common)?;
            let s = load_series(&series)?;
            let truth = velocity_curves(&s, &s.mask)?;
            std::fs::create_dir_all(&common.out)?;
            let ck = open_checkpoint(checkpoint.as_ref())?;
            let pred = match &ck {
                Some(c) => {
                    let ev = mvmsynth::harness::evaluate_series(
                        mvmsynth::harness::Method::Model(&c.network),
                        &s,
                        &cfg.eval,
                    )?;
                    Some(ev.predicted_curves)
                }
                None => None,
            };
            let coefficient = pred.as_ref().map(|p| velocity_coefficient(p, &truth).map_err(|e| e.to_string()));
            write_json(&common.out.join("velocity.json"), &serde_json::json!({
                "truth": truth,
                "predicted": pred,
                "coefficient": coefficient.as_ref().and_then(|c| c.as_ref().ok()),
                "error": coefficient.as_ref().and_then(|c| c.as_ref().err()),
            }))?;
            save_velocity_plot(pred.as_ref().unwrap_or(&truth), Some(&truth), &common.out.join("velocity.png"))?;
            match coefficient {
                Some(Ok(c)) => println!("velocity coefficient {c:.4}"),
                Some(Err(e)) => log::warn!("velocity coefficient undefined: {e}"),
                None => println!("wrote curves for {} frames", truth.len()),
            }
        }
        Command::Report {
            common,
            input,
            figures,
            checkpoint,
        } => {
            let report = ExperimentReport::read_json(&input)?;
            if report.is_empty() {
                return Err(Error::Argument(format!("{} has no rows", input.display())));
            }
            print!("{}", report.render());
            if figures {
                let cfg = load_config(&common)?;
                let ck = open_checkpoint(checkpoint.as_ref())?;
                figures_for(&report, &cfg.dataset()?, ck.as_ref(), &cfg.eval, &common.out)?;
            }
        }
    }
    Ok(())
}

fn init_threads() {
    let Ok(v) = std::env::var(THREADS_ENV) else { return };
    match v.parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("could not size the thread pool: {e}");
            }
        }
        _ => log::warn!("ignoring {THREADS_ENV}={v:?}"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    init_threads();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
