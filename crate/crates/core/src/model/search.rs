use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::ModelConfig;
use crate::nn::OptimizerKind;
use crate::{Error, Result};

/// Candidate values for each searched setting. `hidden` sizes both the
/// encoder and the decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct HParamSpace {
    pub optimizer: Vec<OptimizerKind>,
    pub enc_layers: Vec<usize>,
    pub dec_layers: Vec<usize>,
    pub hidden: Vec<usize>,
    pub dropout: Vec<f64>,
    pub lr: Vec<f64>,
    pub emb_dim: Vec<usize>,
}

impl Default for HParamSpace {
    fn default() -> Self {
        HParamSpace {
            optimizer: vec![OptimizerKind::Adam, OptimizerKind::RmsProp],
            enc_layers: vec![1, 2],
            dec_layers: vec![1, 2],
            hidden: vec![50, 100, 200, 300, 400, 500],
            dropout: vec![0.1, 0.2, 0.3, 0.4],
            lr: vec![1e-2, 1e-3, 1e-4, 1e-5],
            emb_dim: vec![200, 300, 400],
        }
    }
}

fn pick<T: Copy, R: Rng>(values: &[T], what: &str, rng: &mut R) -> Result<T> {
    values
        .choose(rng)
        .copied()
        .ok_or_else(|| Error::Invalid(format!("search space has no `{what}` values")))
}

impl HParamSpace {
    /// One uniform draw on top of `base`. The alignment size follows the
    /// hidden size.
    pub fn sample<R: Rng>(&self, base: &ModelConfig, rng: &mut R) -> Result<ModelConfig> {
        let hidden = pick(&self.hidden, "hidden", rng)?;
        Ok(ModelConfig {
            optimizer: pick(&self.optimizer, "optimizer", rng)?,
            enc_layers: pick(&self.enc_layers, "enc_layers", rng)?,
            dec_layers: pick(&self.dec_layers, "dec_layers", rng)?,
            enc_hidden: hidden,
            dec_hidden: hidden,
            align_dim: hidden,
            dropout: pick(&self.dropout, "dropout", rng)?,
            lr: pick(&self.lr, "lr", rng)?,
            emb_dim: pick(&self.emb_dim, "emb_dim", rng)?,
            ..base.clone()
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Trial {
    pub index: usize,
    pub seed: u64,
    pub optimizer: String,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub lr: f64,
    pub emb_dim: usize,
    pub valid_loss: Option<f64>,
    pub error: Option<String>,
    #[serde(skip)]
    pub config: ModelConfig,
}

/// Draws `n_samples` configurations (duplicates allowed) and scores each with
/// `run`, which returns the trial's validation loss. Trial `i` trains with
/// seed `seed + i`. Returns the best configuration (ties go to the earliest
/// trial) and the full log. Numeric failures are logged and skipped.
pub fn hyperparameter_search<F>(
    space: &HParamSpace,
    base: &ModelConfig,
    n_samples: usize,
    seed: u64,
    mut run: F,
) -> Result<(ModelConfig, Vec<Trial>)>
where
    F: FnMut(&ModelConfig) -> Result<f64>,
{
    if n_samples == 0 {
        return Err(Error::Invalid("hyperparameter search needs at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut configs = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let mut c = space.sample(base, &mut rng)?;
        c.seed = seed.wrapping_add(i as u64);
        configs.push(c);
    }
    let mut trials = Vec::with_capacity(n_samples);
    let mut best: Option<(f64, usize)> = None;
    for (index, config) in configs.into_iter().enumerate() {
        let (valid_loss, error) = match run(&config) {
            Ok(loss) if loss.is_finite() => (Some(loss), None),
            Ok(loss) => (None, Some(format!("non-finite validation loss {loss}"))),
            Err(e) if e.is_numeric() => (None, Some(e.to_string())),
            Err(e) => return Err(e),
        };
        match (valid_loss, &error) {
            (Some(loss), _) => {
                info!("trial {index}: validation loss {loss:.5}");
                if best.is_none_or(|(b, _)| loss < b) {
                    best = Some((loss, index));
                }
            }
            (None, Some(msg)) => warn!("trial {index} failed: {msg}"),
            (None, None) => unreachable!(),
        }
        trials.push(Trial {
            index,
            seed: config.seed,
            optimizer: config.optimizer.to_string(),
            enc_layers: config.enc_layers,
            dec_layers: config.dec_layers,
            hidden: config.enc_hidden,
            dropout: config.dropout,
            lr: config.lr,
            emb_dim: config.emb_dim,
            valid_loss,
            error,
            config,
        });
    }
    let (_, index) = best.ok_or_else(|| Error::Invalid("every trial diverged".into()))?;
    Ok((trials[index].config.clone(), trials))
}
