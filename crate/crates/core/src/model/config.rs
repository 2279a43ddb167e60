use std::fmt::Write as _;
use std::path::Path;

use crate::dataset::{DEFAULT_MAX_LABEL_LEN, NUM_RESERVED, TOPIC_LEN};
use crate::nn::OptimizerKind;
use crate::{Error, Result};

/// Architecture and training settings. Defaults are the selected
/// configuration: 300-d embeddings, one 200-unit BiGRU encoder layer, one
/// 200-unit GRU decoder layer, dropout 0.1, Adam at 0.001.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub emb_dim: usize,
    pub enc_hidden: usize,
    pub dec_hidden: usize,
    pub align_dim: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub dropout: f64,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub t_x: usize,
    pub max_label_len: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub term_vocab_size: usize,
    pub label_vocab_size: usize,
    /// Stop once an epoch's mean training loss falls below this value.
    pub stop_train_loss: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            emb_dim: 300,
            enc_hidden: 200,
            dec_hidden: 200,
            align_dim: 200,
            enc_layers: 1,
            dec_layers: 1,
            dropout: 0.1,
            lr: 1e-3,
            optimizer: OptimizerKind::Adam,
            t_x: TOPIC_LEN,
            max_label_len: DEFAULT_MAX_LABEL_LEN,
            batch_size: 64,
            epochs: 10,
            seed: 0,
            term_vocab_size: 0,
            label_vocab_size: 0,
            stop_train_loss: None,
        }
    }
}

/// Keys accepted by [`ModelConfig::set`].
pub const MODEL_KEYS: &[&str] = &[
    "emb_dim",
    "enc_hidden",
    "dec_hidden",
    "align_dim",
    "enc_layers",
    "dec_layers",
    "dropout",
    "lr",
    "optimizer",
    "t_x",
    "max_label_len",
    "batch_size",
    "epochs",
    "seed",
    "term_vocab_size",
    "label_vocab_size",
    "stop_train_loss",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Invalid(format!("bad value `{value}` for `{key}`")))
}

impl ModelConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "emb_dim" => self.emb_dim = parse(key, value)?,
            "enc_hidden" => self.enc_hidden = parse(key, value)?,
            "dec_hidden" => self.dec_hidden = parse(key, value)?,
            "align_dim" => self.align_dim = parse(key, value)?,
            "enc_layers" => self.enc_layers = parse(key, value)?,
            "dec_layers" => self.dec_layers = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "optimizer" => self.optimizer = value.parse()?,
            "t_x" => self.t_x = parse(key, value)?,
            "max_label_len" => self.max_label_len = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "term_vocab_size" => self.term_vocab_size = parse(key, value)?,
            "label_vocab_size" => self.label_vocab_size = parse(key, value)?,
            "stop_train_loss" => {
                self.stop_train_loss = if value == "none" { None } else { Some(parse(key, value)?) }
            }
            other => return Err(Error::Invalid(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("emb_dim", self.emb_dim),
            ("enc_hidden", self.enc_hidden),
            ("dec_hidden", self.dec_hidden),
            ("align_dim", self.align_dim),
            ("t_x", self.t_x),
            ("max_label_len", self.max_label_len),
            ("batch_size", self.batch_size),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Invalid(format!("`{k}` must be positive")));
            }
        }
        for (k, v) in [("enc_layers", self.enc_layers), ("dec_layers", self.dec_layers)] {
            if !(1..=2).contains(&v) {
                return Err(Error::Invalid(format!("`{k}` must be 1 or 2, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Invalid(format!("learning rate {} must be positive", self.lr)));
        }
        if self.term_vocab_size <= NUM_RESERVED || self.label_vocab_size <= NUM_RESERVED {
            return Err(Error::Invalid(format!(
                "vocabulary sizes must exceed the {NUM_RESERVED} reserved ids (got {} and {})",
                self.term_vocab_size, self.label_vocab_size
            )));
        }
        Ok(())
    }

    /// `key = value` lines in [`MODEL_KEYS`] order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let stop = self.stop_train_loss.map_or_else(|| "none".to_string(), |v| v.to_string());
        let values: [String; 17] = [
            self.emb_dim.to_string(),
            self.enc_hidden.to_string(),
            self.dec_hidden.to_string(),
            self.align_dim.to_string(),
            self.enc_layers.to_string(),
            self.dec_layers.to_string(),
            self.dropout.to_string(),
            self.lr.to_string(),
            self.optimizer.to_string(),
            self.t_x.to_string(),
            self.max_label_len.to_string(),
            self.batch_size.to_string(),
            self.epochs.to_string(),
            self.seed.to_string(),
            self.term_vocab_size.to_string(),
            self.label_vocab_size.to_string(),
            stop,
        ];
        for (k, v) in MODEL_KEYS.iter().zip(values) {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Applies `key = value` lines on top of the defaults.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        for (line_no, key, value) in parse_kv_lines(text, "config")? {
            cfg.set(&key, &value)
                .map_err(|e| Error::parse("config", line_no, e.to_string()))?;
        }
        Ok(cfg)
    }
}

/// Parses `key = value` lines, skipping blanks and `#` comments.
pub fn parse_kv_lines(text: &str, location: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(location, i + 1, "expected `key = value`"))?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_kv_file(path: &Path) -> Result<Vec<(usize, String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_kv_lines(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_selected_setting() {
        let c = ModelConfig::default();
        assert_eq!((c.emb_dim, c.enc_hidden, c.dec_hidden), (300, 200, 200));
        assert_eq!((c.enc_layers, c.dec_layers), (1, 1));
        assert_eq!(c.dropout, 0.1);
        assert_eq!(c.lr, 0.001);
        assert_eq!(c.optimizer, OptimizerKind::Adam);
        assert_eq!(c.t_x, 30);
        assert_eq!(c.align_dim, 200);
    }

    #[test]
    fn text_roundtrip() {
        let mut c = ModelConfig {
            term_vocab_size: 50,
            label_vocab_size: 20,
            lr: 3e-4,
            stop_train_loss: Some(0.05),
            ..Default::default()
        };
        c.optimizer = OptimizerKind::RmsProp;
        let back = ModelConfig::from_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ModelConfig::from_text("bogus = 1").is_err());
        assert!(ModelConfig::from_text("emb_dim = x").is_err());
        assert!(ModelConfig::from_text("emb_dim 3").is_err());
        let c = ModelConfig::from_text("# comment\n\nemb_dim = 8\n").unwrap();
        assert_eq!(c.emb_dim, 8);
    }

    #[test]
    fn validation() {
        let mut c = ModelConfig {
            term_vocab_size: 10,
            label_vocab_size: 10,
            ..Default::default()
        };
        assert!(c.validate().is_ok());
        c.dropout = 1.0;
        assert!(c.validate().is_err());
        c.dropout = 0.1;
        c.enc_layers = 3;
        assert!(c.validate().is_err());
        c.enc_layers = 1;
        c.label_vocab_size = 4;
        assert!(c.validate().is_err());
    }
}
