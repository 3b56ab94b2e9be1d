//! Training, evaluation, ablations and reporting.

mod evaluate;
mod experiment;
mod figures;
mod train;

pub use evaluate::{
    binarize, evaluate_method, evaluate_series, mask_difference, predict_samples, reconstruct_series, score_sample,
    window_samples, EvalOptions, Method, SeriesEvaluation, DATA_RANGE, MASK_THRESHOLD,
};
pub use experiment::{
    ablation_table, config_hash, dataset_hash, evaluate, method_table, run_ablations, series_hash, AblationEntry, AblationRun,
    ExperimentReport, MethodKind, MethodRow,
};
pub use figures::{contour, contour_overlay, emit_figures, figure_stem, save_velocity_plot, DIFF_COLOR};
pub use train::{train, TrainConfig, TrainOutcome};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::AblationRow;
use crate::phantom::{generate_phantom, CohortConfig};
use crate::sampling::ANCHOR_GAP;
use crate::series::{load_all, DatasetSplit, MvmSeries};

/// Loaded series of a train/validation/test partition.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub train: Vec<MvmSeries>,
    pub val: Vec<MvmSeries>,
    pub test: Vec<MvmSeries>,
}

impl Dataset {
    pub fn load(split: &DatasetSplit) -> Result<Self> {
        Ok(Self {
            train: load_all(&split.train)?,
            val: load_all(&split.val)?,
            test: load_all(&split.test)?,
        })
    }

    /// Generates a phantom cohort in memory, split like [`CohortConfig::write`].
    pub fn from_cohort(cohort: &CohortConfig) -> Result<Self> {
        let all = cohort
            .series_configs()
            .iter()
            .map(generate_phantom)
            .collect::<Result<Vec<_>>>()?;
        let per = cohort.slices_per_subject;
        let a = cohort.train_subjects * per;
        let b = a + cohort.val_subjects * per;
        Ok(Self {
            train: all[..a].to_vec(),
            val: all[a..b].to_vec(),
            test: all[b..].to_vec(),
        })
    }
}

/// Everything a CLI run reads from `--config`. Missing sections take defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub cohort: CohortConfig,
    pub train: TrainConfig,
    pub eval: EvalOptions,
    pub methods: Vec<MethodKind>,
    pub rows: Vec<AblationRow>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            cohort: CohortConfig::default(),
            train: TrainConfig::desk_scale(),
            eval: EvalOptions::default(),
            methods: MethodKind::ALL.to_vec(),
            rows: AblationRow::ALL.to_vec(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    /// Split from `train.data` when set, otherwise the in-memory phantom cohort.
    pub fn dataset(&self) -> Result<Dataset> {
        match &self.train.data {
            Some(p) => Dataset::load(&DatasetSplit::load(p)?),
            None => Dataset::from_cohort(&self.cohort),
        }
    }
}

/// Anchor frames `0, 4, 8, ...` whose far anchor still lies inside the series.
pub fn evaluation_windows(frames: usize) -> Vec<usize> {
    (0..frames).step_by(ANCHOR_GAP).filter(|tau| tau + ANCHOR_GAP < frames).collect()
}
