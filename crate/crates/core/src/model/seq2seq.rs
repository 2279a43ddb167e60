//! Forward and backward passes of the attentional encoder-decoder.

use rand::Rng;

use super::weights::Weights;
use crate::dataset::{EncodedPair, EOS, PAD, SOS, UNK};
use crate::nn::attention::{attend, attend_backward, keys_backward, project_keys, AttentionStep};
use crate::nn::dense::cross_entropy_logit_grad;
use crate::nn::gru::{bigru_backward, bigru_trace, cell_backward, project_input, step, BiTrace, GruStep};
use crate::nn::tensor::axpy;
use crate::nn::{softmax, DropoutMask, Scalar, Tensor};
use crate::{Error, Result};

/// Dropout settings for a training-mode pass.
pub struct Dropout<'a, R: ?Sized> {
    pub rate: f64,
    pub rng: &'a mut R,
}

impl<R: Rng + ?Sized> Dropout<'_, R> {
    fn mask<T: Scalar>(&mut self, len: usize) -> Result<Option<DropoutMask<T>>> {
        if self.rate == 0.0 {
            return Ok(None);
        }
        DropoutMask::sample(len, self.rate, self.rng).map(Some)
    }
}

/// Number of leading non-PAD ids.
pub fn real_length(input_ids: &[usize]) -> Result<usize> {
    let n = input_ids.iter().take_while(|&&id| id != PAD).count();
    if n == 0 {
        return Err(Error::Invalid("input has no real terms".into()));
    }
    Ok(n)
}

#[derive(Debug, Clone)]
pub struct EncoderTrace<T> {
    pub ids: Vec<usize>,
    /// Input matrix of each layer; layer 0 holds the (dropped-out) embeddings.
    pub inputs: Vec<Tensor<T>>,
    pub emb_mask: Option<DropoutMask<T>>,
    pub layers: Vec<BiTrace<T>>,
    /// Top-layer states, n × 2h.
    pub states: Tensor<T>,
    pub keys: Tensor<T>,
    /// `[final forward state; final backward state]` of the top layer.
    pub finals: Vec<T>,
}

/// Runs the encoder over the real (non-PAD) prefix of `input_ids`.
pub fn encode<T: Scalar, R: Rng + ?Sized>(
    w: &Weights<T>,
    input_ids: &[usize],
    mut dropout: Option<&mut Dropout<'_, R>>,
) -> Result<EncoderTrace<T>> {
    let n = real_length(input_ids)?;
    let ids = input_ids[..n].to_vec();
    let e = w.emb_dim();
    let mut x = Tensor::zeros(&[n, e]);
    for (t, &id) in ids.iter().enumerate() {
        if id >= w.term_emb.rows() {
            return Err(Error::Invalid(format!("term id {id} outside vocabulary of {}", w.term_emb.rows())));
        }
        x.row_mut(t).copy_from_slice(w.term_emb.row(id));
    }
    let emb_mask = match dropout.as_mut() {
        Some(d) => d.mask(n * e)?,
        None => None,
    };
    if let Some(m) = &emb_mask {
        m.apply(x.data_mut());
    }
    let mut inputs = Vec::with_capacity(w.encoder.len());
    let mut layers = Vec::with_capacity(w.encoder.len());
    for layer in &w.encoder {
        let tr = bigru_trace(&x, &layer.fwd, &layer.bwd)?;
        let out = tr.outputs();
        inputs.push(std::mem::replace(&mut x, out));
        layers.push(tr);
    }
    let finals = layers.last().expect("at least one encoder layer").final_states();
    let keys = project_keys(&w.attention, &x);
    Ok(EncoderTrace {
        ids,
        inputs,
        emb_mask,
        layers,
        states: x,
        keys,
        finals,
    })
}

/// `s_0 = tanh(W_init [hf_n; hb_1] + b_init)` for each decoder layer.
pub fn init_decoder_state<T: Scalar>(w: &Weights<T>, finals: &[T]) -> Vec<Vec<T>> {
    w.init
        .iter()
        .map(|d| d.forward(finals).into_iter().map(|v| v.tanh()).collect())
        .collect()
}

#[derive(Debug, Clone)]
pub struct DecoderStep<T> {
    pub prev: usize,
    /// Input to the first decoder layer after dropout.
    pub x: Vec<T>,
    pub mask: Option<DropoutMask<T>>,
    pub attention: AttentionStep<T>,
    pub cells: Vec<GruStep<T>>,
    pub logits: Vec<T>,
}

impl<T: Scalar> DecoderStep<T> {
    pub fn top_state(&self) -> &[T] {
        &self.cells.last().expect("at least one decoder layer").h
    }
}

/// One decoder step from the previous states and token.
pub fn decoder_forward<T: Scalar, R: Rng + ?Sized>(
    w: &Weights<T>,
    enc: &EncoderTrace<T>,
    states: &[Vec<T>],
    prev: usize,
    dropout: Option<&mut Dropout<'_, R>>,
) -> Result<DecoderStep<T>> {
    let top = states.last().expect("at least one decoder layer");
    let att = attend(&w.attention, top, &enc.states, &enc.keys, None)?;
    let mut x = Vec::with_capacity(w.emb_dim() + att.context.len());
    x.extend_from_slice(w.label_emb.row(prev));
    x.extend_from_slice(&att.context);
    let mask = match dropout {
        Some(d) => d.mask(x.len())?,
        None => None,
    };
    if let Some(m) = &mask {
        m.apply(&mut x);
    }
    let mut cells: Vec<GruStep<T>> = Vec::with_capacity(w.decoder.len());
    for (l, p) in w.decoder.iter().enumerate() {
        let input = if l == 0 { &x } else { &cells[l - 1].h };
        let proj = project_input(p, input);
        cells.push(step(p, &proj, &states[l]));
    }
    let logits = w.output.forward(&cells[cells.len() - 1].h);
    Ok(DecoderStep {
        prev,
        x,
        mask,
        attention: att,
        cells,
        logits,
    })
}

/// `ln Σ exp(l) - l[target]`.
fn nll<T: Scalar>(logits: &[T], target: usize) -> T {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let sum = logits.iter().fold(T::zero(), |a, &l| a + (l - max).exp());
    sum.ln() + max - logits[target]
}

#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    pub encoder: EncoderTrace<T>,
    pub s0: Vec<Vec<T>>,
    pub steps: Vec<DecoderStep<T>>,
    pub targets: Vec<usize>,
    /// Summed negative log-likelihood over the scored positions.
    pub nll_sum: T,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn positions(&self) -> usize {
        self.targets.len()
    }

    /// Mean over positions up to and including EOS.
    pub fn loss(&self) -> T {
        self.nll_sum / T::of(self.positions() as f64)
    }

    pub fn probs(&self) -> Vec<Vec<T>> {
        self.steps.iter().map(|s| softmax(&s.logits)).collect()
    }
}

/// Teacher-forced pass: the gold token `y_{t-1}` (starting from SOS) is fed
/// at each step.
pub fn forward_teacher_forced<T: Scalar, R: Rng + ?Sized>(
    w: &Weights<T>,
    pair: &EncodedPair,
    mut dropout: Option<&mut Dropout<'_, R>>,
) -> Result<ForwardTrace<T>> {
    let target = &pair.target_ids;
    let len = target.iter().take_while(|&&id| id != PAD).count();
    if len < 2 || target[0] != SOS {
        return Err(Error::Invalid("target must start with SOS and hold at least one token".into()));
    }
    let n_labels = w.label_emb.rows();
    if let Some(&bad) = target[..len].iter().find(|&&id| id >= n_labels) {
        return Err(Error::Invalid(format!("label id {bad} outside vocabulary of {n_labels}")));
    }
    let encoder = encode(w, &pair.input_ids, dropout.as_deref_mut())?;
    let s0 = init_decoder_state(w, &encoder.finals);
    let mut states = s0.clone();
    let mut steps = Vec::with_capacity(len - 1);
    let mut nll_sum = T::zero();
    for t in 1..len {
        let st = decoder_forward(w, &encoder, &states, target[t - 1], dropout.as_deref_mut())?;
        nll_sum += nll(&st.logits, target[t]);
        for (s, c) in states.iter_mut().zip(&st.cells) {
            s.clone_from(&c.h);
        }
        steps.push(st);
    }
    if !nll_sum.is_finite() {
        return Err(Error::NonFinite("teacher-forced loss".into()));
    }
    Ok(ForwardTrace {
        encoder,
        s0,
        steps,
        targets: target[1..len].to_vec(),
        nll_sum,
    })
}

/// Accumulates `scale · ∂nll_sum/∂θ` into `g`.
pub fn backward<T: Scalar>(w: &Weights<T>, tr: &ForwardTrace<T>, scale: T, g: &mut Weights<T>) {
    let enc = &tr.encoder;
    let n_layers = w.decoder.len();
    let top = n_layers - 1;
    let e = w.emb_dim();
    let hidden = w.init[0].output_dim();
    let mut ds = vec![vec![T::zero(); hidden]; n_layers];
    let mut d_keys = Tensor::zeros(enc.keys.shape());
    let mut d_states = Tensor::zeros(enc.states.shape());

    for (st, &target) in tr.steps.iter().zip(&tr.targets).rev() {
        let probs = softmax(&st.logits);
        let dlogits = cross_entropy_logit_grad(&probs, target, scale);
        w.output.backward(st.top_state(), &dlogits, &mut g.output, &mut ds[top]);
        let mut dx = Vec::new();
        for l in (0..n_layers).rev() {
            let dh = std::mem::take(&mut ds[l]);
            let mut dh_prev = vec![T::zero(); hidden];
            let input = if l == 0 { &st.x } else { &st.cells[l - 1].h };
            let d_in = cell_backward(&w.decoder[l], input, &st.cells[l], &dh, &mut g.decoder[l], &mut dh_prev);
            ds[l] = dh_prev;
            if l > 0 {
                axpy(&mut ds[l - 1], T::one(), &d_in);
            } else {
                dx = d_in;
            }
        }
        if let Some(m) = &st.mask {
            m.apply(&mut dx);
        }
        axpy(g.label_emb.row_mut(st.prev), T::one(), &dx[..e]);
        attend_backward(
            &w.attention,
            &st.cells[top].h_prev,
            &enc.states,
            &st.attention,
            &dx[e..],
            &mut g.attention,
            &mut d_keys,
            &mut d_states,
            &mut ds[top],
        );
    }

    let mut d_finals = vec![T::zero(); enc.finals.len()];
    for (l, s0) in tr.s0.iter().enumerate() {
        let da: Vec<T> = ds[l].iter().zip(s0).map(|(&d, &s)| d * (T::one() - s * s)).collect();
        w.init[l].backward(&enc.finals, &da, &mut g.init[l], &mut d_finals);
    }
    keys_backward(&w.attention, &enc.states, &d_keys, &mut g.attention, &mut d_states);
    let n = enc.states.rows();
    let h = w.enc_hidden();
    axpy(&mut d_states.row_mut(n - 1)[..h], T::one(), &d_finals[..h]);
    axpy(&mut d_states.row_mut(0)[h..], T::one(), &d_finals[h..]);

    let mut d_out = d_states;
    for l in (0..w.encoder.len()).rev() {
        let layer = &w.encoder[l];
        let gl = &mut g.encoder[l];
        d_out = bigru_backward(&enc.inputs[l], &layer.fwd, &layer.bwd, &enc.layers[l], &d_out, &mut gl.fwd, &mut gl.bwd);
    }
    if let Some(m) = &enc.emb_mask {
        m.apply(d_out.data_mut());
    }
    for (t, &id) in enc.ids.iter().enumerate() {
        axpy(g.term_emb.row_mut(id), T::one(), d_out.row(t));
    }
}

/// Mean teacher-forced loss of one pair with its gradient added into `g`.
pub fn loss_and_grad<T: Scalar, R: Rng + ?Sized>(
    w: &Weights<T>,
    pair: &EncodedPair,
    dropout: Option<&mut Dropout<'_, R>>,
    g: &mut Weights<T>,
) -> Result<T> {
    let tr = forward_teacher_forced(w, pair, dropout)?;
    let n = T::of(tr.positions() as f64);
    backward(w, &tr, T::one() / n, g);
    Ok(tr.loss())
}

/// Index of the largest entry among allowed ids; ties go to the lowest id.
fn argmax_allowed<T: Scalar>(logits: &[T]) -> usize {
    let mut best = None::<(usize, T)>;
    for (id, &l) in logits.iter().enumerate() {
        if id == PAD || id == SOS || id == UNK {
            continue;
        }
        if best.is_none_or(|(_, b)| l > b) {
            best = Some((id, l));
        }
    }
    best.map_or(EOS, |(id, _)| id)
}

/// Greedy decoding. PAD, SOS and UNK are never emitted; the result excludes
/// SOS and EOS and holds at most `max_len` ids.
pub fn greedy_decode<T: Scalar>(w: &Weights<T>, input_ids: &[usize], max_len: usize) -> Result<Vec<usize>> {
    let enc = encode::<T, rand::rngs::mock::StepRng>(w, input_ids, None)?;
    let mut states = init_decoder_state(w, &enc.finals);
    let mut prev = SOS;
    let mut out = Vec::new();
    while out.len() < max_len {
        let st = decoder_forward::<T, rand::rngs::mock::StepRng>(w, &enc, &states, prev, None)?;
        let next = argmax_allowed(&st.logits);
        if next == EOS {
            break;
        }
        out.push(next);
        for (s, c) in states.iter_mut().zip(st.cells) {
            s.clone_from(&c.h);
        }
        prev = next;
    }
    Ok(out)
}
