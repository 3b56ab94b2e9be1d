use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::evaluate::{evaluate_method, EvalOptions, Method};
use super::train::{train, TrainConfig};
use super::Dataset;
use crate::baselines::BaselineMethod;
use crate::error::{Error, Result};
use crate::metrics::{MetricReport, Summary};
use crate::network::{configure_ablation, AblationRow, Checkpoint, NetworkConfig};
use crate::series::MvmSeries;

/// Methods selectable for evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Linear,
    HsFlow,
    Model,
}

impl MethodKind {
    pub const ALL: [MethodKind; 3] = [MethodKind::Linear, MethodKind::HsFlow, MethodKind::Model];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Linear => "linear",
            MethodKind::HsFlow => "hs_flow",
            MethodKind::Model => "model",
        }
    }
}

impl std::str::FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown method {s:?}")))
    }
}

/// SHA-256 of the compact JSON encoding of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config types serialise");
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 over ids and raw little-endian values of every series, split by split.
pub fn dataset_hash(data: &Dataset) -> String {
    let mut h = Sha256::new();
    for (tag, split) in [("train", &data.train), ("val", &data.val), ("test", &data.test)] {
        h.update(tag.as_bytes());
        for s in split {
            hash_series(&mut h, s);
        }
    }
    hex::encode(h.finalize())
}

/// Hash of the test split alone, for reports that only touch it.
pub fn series_hash(series: &[MvmSeries]) -> String {
    let mut h = Sha256::new();
    for s in series {
        hash_series(&mut h, s);
    }
    hex::encode(h.finalize())
}

fn hash_series(h: &mut Sha256, s: &MvmSeries) {
    h.update(s.subject_id.as_bytes());
    h.update([0]);
    h.update(s.slice_id.as_bytes());
    h.update([0]);
    for v in s.magnitude.iter().chain(s.phase.iter()).chain(s.mask.iter()) {
        h.update(v.to_le_bytes());
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub config_hash: String,
    pub dataset_hash: String,
    pub report: MetricReport,
}

/// One row of the ablation grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationEntry {
    pub row: AblationRow,
    pub config_hash: String,
    pub net: NetworkConfig,
    pub weighted_loss: bool,
    pub magnitude_psnr: Summary,
    pub phase_psnr: Summary,
    pub dice: Option<Summary>,
    pub velocity_coefficient: Option<Summary>,
    pub steps: usize,
    pub best_step: usize,
    pub train_wall_clock_s: f64,
    pub report: MetricReport,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub config_hash: String,
    pub dataset_hash: String,
    #[serde(default)]
    pub methods: Vec<MethodRow>,
    #[serde(default)]
    pub ablations: Vec<AblationEntry>,
    pub wall_clock_s: f64,
}

impl ExperimentReport {
    pub fn method(&self, name: &str) -> Option<&MetricReport> {
        self.methods.iter().map(|m| &m.report).find(|r| r.method == name)
    }

    pub fn ablation(&self, row: AblationRow) -> Option<&AblationEntry> {
        self.ablations.iter().find(|a| a.row == row)
    }

    pub fn is_empty(&self) -> bool {
        self.methods.is_empty() && self.ablations.is_empty()
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    /// Both table layouts, skipping whichever has no rows.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if !self.methods.is_empty() {
            out.push_str(&method_table(&self.methods.iter().map(|m| m.report.clone()).collect::<Vec<_>>()));
        }
        if !self.ablations.is_empty() {
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(&ablation_table(&self.ablations));
        }
        out
    }
}

/// Evaluates the selected methods on `test`. `Model` requires a checkpoint.
pub fn evaluate(
    checkpoint: Option<&Checkpoint>,
    test: &[MvmSeries],
    methods: &[MethodKind],
    opts: &EvalOptions,
) -> Result<ExperimentReport> {
    if test.is_empty() {
        return Err(Error::Argument("test split is empty".into()));
    }
    if methods.is_empty() {
        return Err(Error::Argument("no methods selected".into()));
    }
    let started = Instant::now();
    let data_hash = series_hash(test);
    let mut rows = Vec::new();
    for &m in methods {
        let (method, hash) = match m {
            MethodKind::Linear => (Method::Baseline(BaselineMethod::Linear), config_hash(&("linear", opts))),
            MethodKind::HsFlow => (Method::Baseline(BaselineMethod::HsFlow), config_hash(&("hs_flow", opts))),
            MethodKind::Model => {
                let ck = checkpoint.ok_or_else(|| Error::Argument("method model needs a checkpoint".into()))?;
                let hash = config_hash(&("model", &ck.network.config, &ck.metadata, opts));
                (Method::Model(&ck.network), hash)
            }
        };
        rows.push(MethodRow {
            config_hash: hash,
            dataset_hash: data_hash.clone(),
            report: evaluate_method(method, test, opts),
        });
    }
    let seed = checkpoint.map_or(0, |c| c.metadata.seed);
    Ok(ExperimentReport {
        seed,
        config_hash: config_hash(&(methods, opts)),
        dataset_hash: data_hash,
        methods: rows,
        ablations: Vec::new(),
        wall_clock_s: started.elapsed().as_secs_f64(),
    })
}

/// Trained networks of an ablation run, in row order.
pub struct AblationRun {
    pub report: ExperimentReport,
    pub checkpoints: Vec<(AblationRow, Checkpoint)>,
}

/// Trains and evaluates every listed ablation row with the same seed and data.
pub fn run_ablations(base: &TrainConfig, data: &Dataset, opts: &EvalOptions, rows: &[AblationRow]) -> Result<AblationRun> {
    base.validate()?;
    if data.test.is_empty() {
        return Err(Error::Argument("test split is empty".into()));
    }
    let started = Instant::now();
    let mut entries = Vec::new();
    let mut checkpoints = Vec::new();
    for &row in rows {
        let (net, loss) = configure_ablation(row, &base.net, &base.loss);
        let cfg = TrainConfig {
            net,
            loss,
            checkpoint_dir: base.checkpoint_dir.as_ref().map(|d| d.join(row.name())),
            ..base.clone()
        };
        log::info!("ablation row {}", row.name());
        let out = train(&cfg, data)?;
        let report = evaluate_method(Method::Model(&out.checkpoint.network), &data.test, opts);
        let a = &report.aggregate;
        entries.push(AblationEntry {
            row,
            config_hash: config_hash(&(&cfg.net, &cfg.loss, cfg.seed, cfg.learning_rate, cfg.batch_size, cfg.max_steps, opts)),
            net: cfg.net.clone(),
            weighted_loss: cfg.loss.weighted,
            magnitude_psnr: a.magnitude.psnr,
            phase_psnr: a.phase.psnr,
            dice: a.dice,
            velocity_coefficient: a.velocity_coefficient,
            steps: out.steps,
            best_step: out.best_step,
            train_wall_clock_s: out.wall_clock_s,
            report,
        });
        checkpoints.push((row, out.checkpoint));
    }
    Ok(AblationRun {
        report: ExperimentReport {
            seed: base.seed,
            config_hash: config_hash(&(base, opts, rows)),
            dataset_hash: dataset_hash(data),
            methods: Vec::new(),
            ablations: entries,
            wall_clock_s: started.elapsed().as_secs_f64(),
        },
        checkpoints,
    })
}

fn fmt_summary(s: Option<&Summary>, prec: usize) -> String {
    match s {
        Some(s) if s.n > 0 => format!("{:.prec$} ± {:.prec$}", s.mean, s.sd),
        _ => "-".into(),
    }
}

fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| {
        let mut s = String::new();
        for (i, (c, w)) in cells.zip(&widths).enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            let pad = w - c.chars().count();
            if i == 0 {
                let _ = write!(s, "{c}{}", " ".repeat(pad));
            } else {
                let _ = write!(s, "{}{c}", " ".repeat(pad));
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(&mut header.iter().copied());
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for r in rows {
        out.push_str(&line(&mut r.iter().map(String::as_str)));
    }
    out
}

/// Comparison-methods layout: MAE, PSNR and SSIM for magnitude and phase.
pub fn method_table(reports: &[MetricReport]) -> String {
    let header = ["Method", "Mag MAE", "Mag PSNR", "Mag SSIM", "Phase MAE", "Phase PSNR", "Phase SSIM"];
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let (m, p) = (&r.aggregate.magnitude, &r.aggregate.phase);
            vec![
                r.method.clone(),
                fmt_summary(Some(&m.mae), 4),
                fmt_summary(Some(&m.psnr), 3),
                fmt_summary(Some(&m.ssim), 4),
                fmt_summary(Some(&p.mae), 4),
                fmt_summary(Some(&p.psnr), 3),
                fmt_summary(Some(&p.ssim), 4),
            ]
        })
        .collect();
    render_table(&header, &rows)
}

/// Ablation layout: magnitude PSNR, phase PSNR, Dice and velocity coefficient per row.
pub fn ablation_table(entries: &[AblationEntry]) -> String {
    let header = ["Configuration", "Magnitude PSNR", "Phase PSNR", "Dice coefficient", "Velocity coefficient"];
    let rows: Vec<Vec<String>> = entries
        .iter()
        .map(|e| {
            vec![
                e.row.name().to_string(),
                fmt_summary(Some(&e.magnitude_psnr), 3),
                fmt_summary(Some(&e.phase_psnr), 3),
                fmt_summary(e.dice.as_ref(), 4),
                fmt_summary(e.velocity_coefficient.as_ref(), 4),
            ]
        })
        .collect();
    render_table(&header, &rows)
}
