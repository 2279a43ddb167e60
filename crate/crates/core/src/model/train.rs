use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::checkpoint::{init_model, Checkpoint, OptimizerState};
use super::config::ModelConfig;
use super::seq2seq::{backward, forward_teacher_forced, Dropout};
use super::weights::Weights;
use crate::dataset::EncodedPair;
use crate::nn::optim::{adam_update, rmsprop_update};
use crate::nn::{AdamConfig, OptimizerKind, RmsPropConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Checkpoint with the lowest validation loss (training loss when there
    /// is no validation set).
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

impl TrainOutcome {
    pub fn final_train_loss(&self) -> Option<f64> {
        self.history.last().map(|r| r.train_loss)
    }

    pub fn best_valid_loss(&self) -> Option<f64> {
        let best = self.best_epoch?;
        self.history.iter().find(|r| r.epoch == best)?.valid_loss
    }
}

/// Token-weighted mean teacher-forced loss without dropout.
pub fn evaluate_loss(w: &Weights<f32>, pairs: &[EncodedPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Invalid("no pairs to evaluate".into()));
    }
    let (mut sum, mut count) = (0.0f64, 0usize);
    for p in pairs {
        let tr = forward_teacher_forced::<f32, rand::rngs::mock::StepRng>(w, p, None)?;
        sum += f64::from(tr.nll_sum);
        count += tr.positions();
    }
    Ok(sum / count as f64)
}

fn apply_update(ck: &mut Checkpoint, grads: &Weights<f32>) -> Result<()> {
    let cfg = &ck.config;
    let state = ck.optimizer.get_or_insert_with(|| OptimizerState::zeros_like(&ck.weights));
    ck.step += 1;
    let values = ck.weights.tensors_mut();
    let m = state.m.tensors_mut();
    let v = state.v.tensors_mut();
    match cfg.optimizer {
        OptimizerKind::Adam => {
            let opt = AdamConfig::with_lr(cfg.lr);
            for (((w, g), m), v) in values.into_iter().zip(grads.tensors()).zip(m).zip(v) {
                adam_update(w.data_mut(), g.data(), m.data_mut(), v.data_mut(), ck.step, &opt)?;
            }
        }
        OptimizerKind::RmsProp => {
            let opt = RmsPropConfig::with_lr(cfg.lr);
            for ((w, g), v) in values.into_iter().zip(grads.tensors()).zip(v) {
                rmsprop_update(w.data_mut(), g.data(), v.data_mut(), &opt);
            }
        }
    }
    Ok(())
}

/// Trains a freshly initialized model (seeded by `config.seed`).
pub fn train(train_pairs: &[EncodedPair], valid_pairs: &[EncodedPair], config: &ModelConfig) -> Result<TrainOutcome> {
    train_from(init_model(config, config.seed)?, train_pairs, valid_pairs)
}

/// Continues training `ck` for `ck.config.epochs` more epochs.
pub fn train_from(mut ck: Checkpoint, train_pairs: &[EncodedPair], valid_pairs: &[EncodedPair]) -> Result<TrainOutcome> {
    if train_pairs.is_empty() {
        return Err(Error::Invalid("empty training set".into()));
    }
    ck.config.validate()?;
    let cfg = ck.config.clone();
    info!(
        "training on {} pairs ({} validation), {} epochs, batch {}",
        train_pairs.len(),
        valid_pairs.len(),
        cfg.epochs,
        cfg.batch_size
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(ck.step.wrapping_add(1));
    let mut order: Vec<usize> = (0..train_pairs.len()).collect();
    let mut grads = ck.weights.zeros_like();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Checkpoint)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut nll, mut positions) = (0.0f64, 0usize);
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            grads.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
            let traces = chunk
                .iter()
                .map(|&i| {
                    let mut d = Dropout { rate: cfg.dropout, rng: &mut rng };
                    forward_teacher_forced(&ck.weights, &train_pairs[i], Some(&mut d))
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| match e {
                    Error::NonFinite(_) => Error::Diverged { epoch, batch: batch + 1 },
                    other => other,
                })?;
            let tokens: usize = traces.iter().map(|t| t.positions()).sum();
            let scale = 1.0 / tokens as f32;
            for tr in &traces {
                backward(&ck.weights, tr, scale, &mut grads);
                nll += f64::from(tr.nll_sum);
            }
            positions += tokens;
            if !grads.all_finite() {
                return Err(Error::Diverged { epoch, batch: batch + 1 });
            }
            apply_update(&mut ck, &grads)?;
        }
        if !ck.weights.all_finite() {
            return Err(Error::Diverged { epoch, batch: order.len().div_ceil(cfg.batch_size) });
        }
        let train_loss = nll / positions as f64;
        let valid_loss = if valid_pairs.is_empty() {
            None
        } else {
            Some(evaluate_loss(&ck.weights, valid_pairs)?)
        };
        info!("epoch {epoch}: train loss {train_loss:.5}{}", valid_loss.map_or(String::new(), |v| format!(", valid loss {v:.5}")));
        history.push(EpochRecord { epoch, train_loss, valid_loss });
        let score = valid_loss.unwrap_or(train_loss);
        if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
            debug!("epoch {epoch} is the new best ({score:.5})");
            best = Some((score, epoch, ck.clone()));
        }
        if cfg.stop_train_loss.is_some_and(|target| train_loss < target) {
            info!("training loss below {} after epoch {epoch}", cfg.stop_train_loss.unwrap_or_default());
            break;
        }
    }
    Ok(match best {
        Some((_, epoch, checkpoint)) => TrainOutcome {
            checkpoint,
            history,
            best_epoch: Some(epoch),
        },
        None => TrainOutcome {
            checkpoint: ck,
            history,
            best_epoch: None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{EOS, PAD, SOS};
    use crate::model::seq2seq::greedy_decode;

    fn cfg() -> ModelConfig {
        ModelConfig {
            emb_dim: 8,
            enc_hidden: 8,
            dec_hidden: 8,
            align_dim: 8,
            t_x: 3,
            batch_size: 2,
            epochs: 4,
            seed: 11,
            term_vocab_size: 10,
            label_vocab_size: 8,
            lr: 0.01,
            ..Default::default()
        }
    }

    fn pairs() -> Vec<EncodedPair> {
        (0..5)
            .map(|i| EncodedPair {
                input_ids: vec![4 + i, 5 + i, PAD],
                target_ids: vec![SOS, 4 + (i % 3), EOS, PAD],
            })
            .collect()
    }

    #[test]
    fn zero_epochs_returns_initial_checkpoint() {
        let c = ModelConfig { epochs: 0, ..cfg() };
        let out = train(&pairs(), &[], &c).unwrap();
        assert!(out.history.is_empty());
        assert_eq!(out.checkpoint, init_model(&c, c.seed).unwrap());
    }

    #[test]
    fn deterministic_histories() {
        let p = pairs();
        let a = train(&p, &p[..2], &cfg()).unwrap();
        let b = train(&p, &p[..2], &cfg()).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.checkpoint, b.checkpoint);
        assert_eq!(a.history.len(), 4);
        // 5 pairs in batches of 2 give 3 updates per epoch.
        assert!(a.checkpoint.step % 3 == 0 && a.checkpoint.step > 0);
    }

    #[test]
    fn retained_checkpoint_has_lowest_valid_loss() {
        let p = pairs();
        let c = ModelConfig { epochs: 6, lr: 0.05, ..cfg() };
        let out = train(&p, &p[..3], &c).unwrap();
        let best = out.best_valid_loss().unwrap();
        assert!(out.history.iter().all(|r| best <= r.valid_loss.unwrap()));
        let again = evaluate_loss(&out.checkpoint.weights, &p[..3]).unwrap();
        assert!((again - best).abs() < 1e-9);
    }

    #[test]
    fn loss_decreases_and_decode_is_sane() {
        let p = pairs();
        let c = ModelConfig { epochs: 30, lr: 0.02, dropout: 0.0, ..cfg() };
        let out = train(&p, &[], &c).unwrap();
        let first = out.history[0].train_loss;
        assert!(out.final_train_loss().unwrap() < first);
        let ids = greedy_decode(&out.checkpoint.weights, &p[0].input_ids, 5).unwrap();
        assert!(ids.len() <= 5);
    }

    #[test]
    fn rmsprop_trains() {
        let p = pairs();
        let c = ModelConfig {
            optimizer: OptimizerKind::RmsProp,
            epochs: 10,
            lr: 0.005,
            ..cfg()
        };
        let out = train(&p, &[], &c).unwrap();
        assert!(out.final_train_loss().unwrap() < out.history[0].train_loss);
    }

    #[test]
    fn divergence_reports_epoch_and_batch() {
        let p = pairs();
        let mut ck = init_model(&cfg(), 1).unwrap();
        ck.weights.output.w.data_mut()[0] = f32::NAN;
        let err = train_from(ck, &p, &[]).unwrap_err();
        assert!(matches!(err, Error::Diverged { epoch: 1, batch: 1 }), "{err:?}");
    }

    #[test]
    fn empty_training_set_is_rejected() {
        assert!(train(&[], &[], &cfg()).is_err());
    }
}
