use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluation_windows, Dataset};
use crate::autograd::{Adam, Tensor};
use crate::error::{Error, Result};
use crate::loss::{total_loss, LossBreakdown, LossConfig, LossTargets, Predictions};
use crate::network::{stack_f64, unstack_f64};
use crate::network::{save_checkpoint, Batch, Checkpoint, Network, NetworkConfig, TrainingMetadata};
use crate::sampling::{build_sample, sample_keys, SampleKey, SynthesisSample};
use crate::series::MvmSeries;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Passes over the training samples; `None` runs until `max_steps`.
    pub epochs: Option<usize>,
    pub max_steps: usize,
    pub seed: u64,
    pub eval_every: usize,
    /// Validation evaluations without improvement before stopping.
    pub patience: usize,
    /// Cap on the validation samples scored at each evaluation.
    pub val_samples: usize,
    pub net: NetworkConfig,
    pub loss: LossConfig,
    pub data: Option<PathBuf>,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: None,
            max_steps: 20_000,
            seed: 0,
            eval_every: 100,
            patience: 10,
            val_samples: 48,
            net: NetworkConfig::default(),
            loss: LossConfig::default(),
            data: None,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    /// 64x64 phantom profile: base 8, batch 8, about ten minutes on one core.
    pub fn desk_scale() -> Self {
        Self {
            learning_rate: 2e-3,
            batch_size: 8,
            max_steps: 1500,
            net: NetworkConfig {
                base_channels: 8,
                ..NetworkConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation("learning_rate", "must be finite and >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size", "must be at least 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::validation("eval_every", "must be at least 1"));
        }
        self.net.validate()?;
        self.loss.validate()
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation loss (the last ones without validation data).
    pub checkpoint: Checkpoint,
    pub trace: Vec<LossBreakdown>,
    pub val_trace: Vec<(usize, f64)>,
    pub best_step: usize,
    pub steps: usize,
    pub wall_clock_s: f64,
}

/// Mean loss breakdown and per-sample gradients for one batch.
pub(crate) fn batch_loss(
    net: &Network,
    samples: &[&SynthesisSample],
    targets: &[LossTargets],
    cfg: &LossConfig,
    with_grad: bool,
) -> Result<(LossBreakdown, Option<crate::autograd::ParamGrads<f32>>)> {
    let batch = Batch::<f32>::from_samples(samples)?;
    let f = net.forward(&batch)?;
    let mags = unstack_f64(f.graph.value(f.mag));
    let phases = unstack_f64(f.graph.value(f.phase));
    let masks = unstack_f64(f.graph.value(f.mask));
    let n = samples.len() as f64;
    let mut sum = LossBreakdown::default();
    let (mut gm, mut gp, mut gk) = (Vec::new(), Vec::new(), Vec::new());
    for (i, t) in targets.iter().enumerate() {
        let pred = Predictions {
            mag: mags[i].clone(),
            phase: phases[i].clone(),
            mask_prob: masks[i].clone(),
        };
        let (b, g) = total_loss(&pred, t, cfg)?;
        sum.total += b.total / n;
        sum.syn_mag += b.syn_mag / n;
        sum.syn_phase += b.syn_phase / n;
        sum.dice += b.dice / n;
        sum.boundary += b.boundary / n;
        if with_grad {
            gm.push(g.mag / n);
            gp.push(g.phase / n);
            gk.push(g.mask_prob / n);
        }
    }
    if !with_grad {
        return Ok((sum, None));
    }
    if !sum.total.is_finite() {
        return Ok((sum, None));
    }
    let grads = f.graph.backward(vec![
        (f.mag, stack_f64::<f32>(&gm)),
        (f.phase, stack_f64::<f32>(&gp)),
        (f.mask, stack_f64::<f32>(&gk)),
    ]);
    Ok((sum, Some(grads)))
}

fn prepare(series: &[MvmSeries], keys: &[SampleKey], cfg: &LossConfig) -> Result<Vec<(SynthesisSample, LossTargets)>> {
    keys.par_iter()
        .map(|k| {
            let s = build_sample(&series[k.series], k.tau, k.k)?;
            let t = LossTargets::from_sample(&s, cfg)?;
            Ok((s, t))
        })
        .collect()
}

/// Fixed validation subset: tiling windows of every validation series,
/// thinned to at most `cap` samples with an even stride.
pub(crate) fn validation_keys(val: &[MvmSeries], cap: usize) -> Vec<SampleKey> {
    let all: Vec<SampleKey> = val
        .iter()
        .enumerate()
        .flat_map(|(i, s)| {
            evaluation_windows(s.frames())
                .into_iter()
                .flat_map(move |tau| (1..=3).map(move |k| SampleKey { series: i, tau, k }))
        })
        .collect();
    if all.len() <= cap || cap == 0 {
        return all;
    }
    (0..cap).map(|i| all[i * all.len() / cap]).collect()
}

fn mean_loss(net: &Network, prepared: &[(SynthesisSample, LossTargets)], cfg: &TrainConfig) -> Result<f64> {
    let mut total = 0.0;
    for chunk in prepared.chunks(cfg.batch_size) {
        let samples: Vec<&SynthesisSample> = chunk.iter().map(|p| &p.0).collect();
        let targets: Vec<LossTargets> = chunk.iter().map(|p| p.1.clone()).collect();
        let (b, _) = batch_loss(net, &samples, &targets, &cfg.loss, false)?;
        total += b.total * chunk.len() as f64;
    }
    Ok(total / prepared.len() as f64)
}

/// Minibatch training with Adam. Deterministic for a given seed and dataset.
pub fn train(cfg: &TrainConfig, data: &Dataset) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::Argument("training split is empty".into()));
    }
    let started = Instant::now();
    let mut net = Network::new(cfg.net.clone(), cfg.seed)?;
    let sizes: Vec<usize> = net.params.iter().map(Tensor::numel).collect();
    let mut adam = Adam::new(cfg.learning_rate, &sizes);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_0F_BA7C);

    let mut keys: Vec<SampleKey> = data
        .train
        .iter()
        .enumerate()
        .flat_map(|(i, s)| sample_keys(i, s.frames()))
        .collect();
    if keys.is_empty() {
        return Err(Error::Argument("training series are too short for any sample".into()));
    }
    let val = prepare(&data.val, &validation_keys(&data.val, cfg.val_samples), &cfg.loss)?;

    let mut trace = Vec::new();
    let mut val_trace = Vec::new();
    let mut best: Option<(f64, usize, Network)> = None;
    let mut stale = 0usize;
    let (mut cursor, mut epoch) = (keys.len(), 0usize);
    let mut step = 0usize;
    while step < cfg.max_steps {
        let mut batch_keys = Vec::with_capacity(cfg.batch_size);
        while batch_keys.len() < cfg.batch_size {
            if cursor == keys.len() {
                if cfg.epochs.is_some_and(|e| epoch >= e) {
                    break;
                }
                keys.shuffle(&mut rng);
                cursor = 0;
                epoch += 1;
            }
            let take = (cfg.batch_size - batch_keys.len()).min(keys.len() - cursor);
            batch_keys.extend_from_slice(&keys[cursor..cursor + take]);
            cursor += take;
        }
        if batch_keys.is_empty() {
            break;
        }
        let prepared = prepare(&data.train, &batch_keys, &cfg.loss)?;
        let samples: Vec<&SynthesisSample> = prepared.iter().map(|p| &p.0).collect();
        let targets: Vec<LossTargets> = prepared.iter().map(|p| p.1.clone()).collect();
        let (b, grads) = batch_loss(&net, &samples, &targets, &cfg.loss, true)?;
        let Some(grads) = grads.filter(|_| b.total.is_finite()) else {
            let dump = format!(
                "non-finite loss at step {step}: {b:?}; batch {:?}",
                batch_keys
                    .iter()
                    .map(|k| format!("{}:tau={},k={}", data.train[k.series].subject_id, k.tau, k.k))
                    .collect::<Vec<_>>()
            );
            if let Some(dir) = &cfg.checkpoint_dir {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("nan_batch.txt"), &dump)?;
            }
            return Err(Error::Numeric(dump));
        };
        let g: Vec<Option<&Tensor<f32>>> = (0..net.params.len()).map(|i| grads.get(&i)).collect();
        adam.update(&mut net.params, &g);
        trace.push(b);
        step += 1;
        log::debug!("step {step} loss {:.5}", b.total);

        if !val.is_empty() && (step % cfg.eval_every == 0 || step == cfg.max_steps) {
            let v = mean_loss(&net, &val, cfg)?;
            val_trace.push((step, v));
            log::info!("step {step} train {:.5} val {v:.5}", b.total);
            if best.as_ref().is_none_or(|(bv, ..)| v < *bv) {
                best = Some((v, step, net.clone()));
                stale = 0;
            } else {
                stale += 1;
            }
            if let Some(dir) = &cfg.checkpoint_dir {
                let ck = checkpoint_of(&net, cfg, step, &trace, &val_trace, best.as_ref().map(|b| b.0));
                save_checkpoint(&ck, &dir.join(format!("step_{step:06}.ckpt")))?;
            }
            if stale >= cfg.patience {
                log::info!("early stop at step {step}");
                break;
            }
        }
    }
    let (best_val, best_step, best_net) = match best {
        Some((v, s, n)) => (Some(v), s, n),
        None => (None, step, net),
    };
    let checkpoint = checkpoint_of(&best_net, cfg, best_step, &trace, &val_trace, best_val);
    if let Some(dir) = &cfg.checkpoint_dir {
        save_checkpoint(&checkpoint, &dir.join("best.ckpt"))?;
    }
    Ok(TrainOutcome {
        checkpoint,
        trace,
        val_trace,
        best_step,
        steps: step,
        wall_clock_s: started.elapsed().as_secs_f64(),
    })
}

fn checkpoint_of(
    net: &Network,
    cfg: &TrainConfig,
    step: usize,
    trace: &[LossBreakdown],
    val_trace: &[(usize, f64)],
    best_val: Option<f64>,
) -> Checkpoint {
    Checkpoint {
        network: net.clone(),
        metadata: TrainingMetadata {
            step,
            seed: cfg.seed,
            loss_history: trace.iter().map(|b| b.total).collect(),
            val_history: val_trace.iter().map(|v| v.1).collect(),
            best_val_loss: best_val,
        },
    }
}
