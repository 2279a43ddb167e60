use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::nn::gru::GRU_TENSOR_NAMES;
use crate::nn::{AttentionParams, Dense, GruParams, Scalar, Tensor};
use crate::Result;

const EMBEDDING_RANGE: f64 = 0.05;

/// One bidirectional encoder layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLayer<T> {
    pub fwd: GruParams<T>,
    pub bwd: GruParams<T>,
}

/// Every learnable tensor of the labeller.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights<T> {
    pub term_emb: Tensor<T>,
    pub label_emb: Tensor<T>,
    pub encoder: Vec<BiLayer<T>>,
    pub decoder: Vec<GruParams<T>>,
    pub attention: AttentionParams<T>,
    /// Maps the top encoder layer's final states to each decoder layer's `s_0`.
    pub init: Vec<Dense<T>>,
    pub output: Dense<T>,
}

impl<T: Scalar> Weights<T> {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let enc_out = 2 * cfg.enc_hidden;
        let encoder = (0..cfg.enc_layers)
            .map(|l| {
                let input = if l == 0 { cfg.emb_dim } else { enc_out };
                BiLayer {
                    fwd: GruParams::zeros(input, cfg.enc_hidden),
                    bwd: GruParams::zeros(input, cfg.enc_hidden),
                }
            })
            .collect();
        let decoder = (0..cfg.dec_layers)
            .map(|l| {
                let input = if l == 0 { cfg.emb_dim + enc_out } else { cfg.dec_hidden };
                GruParams::zeros(input, cfg.dec_hidden)
            })
            .collect();
        Weights {
            term_emb: Tensor::zeros(&[cfg.term_vocab_size, cfg.emb_dim]),
            label_emb: Tensor::zeros(&[cfg.label_vocab_size, cfg.emb_dim]),
            encoder,
            decoder,
            attention: AttentionParams::zeros(cfg.dec_hidden, enc_out, cfg.align_dim),
            init: (0..cfg.dec_layers).map(|_| Dense::zeros(enc_out, cfg.dec_hidden)).collect(),
            output: Dense::zeros(cfg.dec_hidden, cfg.label_vocab_size),
        }
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.fill(T::zero()));
        z
    }

    pub fn emb_dim(&self) -> usize {
        self.term_emb.cols()
    }

    pub fn enc_hidden(&self) -> usize {
        self.encoder[0].fwd.hidden_dim()
    }

    /// Tensor names, aligned with [`Weights::tensors`].
    pub fn names(&self) -> Vec<String> {
        let mut names = vec!["term_embedding".to_string(), "label_embedding".to_string()];
        for l in 0..self.encoder.len() {
            for dir in ["fwd", "bwd"] {
                names.extend(GRU_TENSOR_NAMES.iter().map(|n| format!("encoder.{l}.{dir}.{n}")));
            }
        }
        for l in 0..self.decoder.len() {
            names.extend(GRU_TENSOR_NAMES.iter().map(|n| format!("decoder.{l}.{n}")));
        }
        names.extend(["attention.W_s", "attention.W_h", "attention.v"].map(String::from));
        for l in 0..self.init.len() {
            names.push(format!("init.{l}.W"));
            names.push(format!("init.{l}.b"));
        }
        names.extend(["output.W", "output.b"].map(String::from));
        names
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = vec![&self.term_emb, &self.label_emb];
        for layer in &self.encoder {
            out.extend(layer.fwd.tensors());
            out.extend(layer.bwd.tensors());
        }
        for p in &self.decoder {
            out.extend(p.tensors());
        }
        out.extend(self.attention.tensors());
        for d in &self.init {
            out.extend(d.tensors());
        }
        out.extend(self.output.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = vec![&mut self.term_emb, &mut self.label_emb];
        for layer in &mut self.encoder {
            out.extend(layer.fwd.tensors_mut());
            out.extend(layer.bwd.tensors_mut());
        }
        for p in &mut self.decoder {
            out.extend(p.tensors_mut());
        }
        out.extend(self.attention.tensors_mut());
        for d in &mut self.init {
            out.extend(d.tensors_mut());
        }
        out.extend(self.output.tensors_mut());
        out
    }

    pub fn cast<U: Scalar>(&self) -> Weights<U> {
        let cast_gru = |p: &GruParams<T>| {
            let mut q = GruParams::zeros(p.input_dim(), p.hidden_dim());
            for (a, b) in q.tensors_mut().into_iter().zip(p.tensors()) {
                *a = b.cast();
            }
            q
        };
        let cast_dense = |d: &Dense<T>| Dense { w: d.w.cast(), b: d.b.cast() };
        Weights {
            term_emb: self.term_emb.cast(),
            label_emb: self.label_emb.cast(),
            encoder: self
                .encoder
                .iter()
                .map(|l| BiLayer { fwd: cast_gru(&l.fwd), bwd: cast_gru(&l.bwd) })
                .collect(),
            decoder: self.decoder.iter().map(cast_gru).collect(),
            attention: AttentionParams {
                w_s: self.attention.w_s.cast(),
                w_h: self.attention.w_h.cast(),
                v: self.attention.v.cast(),
            },
            init: self.init.iter().map(cast_dense).collect(),
            output: cast_dense(&self.output),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.all_finite())
    }
}

fn is_bias(name: &str) -> bool {
    let last = name.rsplit('.').next().unwrap_or(name);
    last == "b" || last.starts_with("b_")
}

/// `√(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Seeded initialization: Glorot-uniform matrices, zero biases, embeddings
/// uniform in ±0.05. Tensors are drawn in [`Weights::names`] order.
pub fn init_weights<T: Scalar>(cfg: &ModelConfig, seed: u64) -> Result<Weights<T>> {
    cfg.validate()?;
    let mut w = Weights::<T>::zeros(cfg);
    let names = w.names();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (name, t) in names.iter().zip(w.tensors_mut()) {
        if is_bias(name) {
            continue;
        }
        let bound = if name.ends_with("embedding") {
            EMBEDDING_RANGE
        } else if t.shape().len() == 1 {
            glorot_bound(t.len(), 1)
        } else {
            glorot_bound(t.cols(), t.rows())
        };
        for v in t.data_mut() {
            *v = T::of(rng.gen_range(-bound..bound));
        }
    }
    Ok(w)
}
