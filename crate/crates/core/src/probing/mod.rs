//! The multi-head probing network.
//!
//! `k` independent sequences of bias-free linear heads map the document
//! embedding `e0` through `ℓ` layers. The final-layer head outputs are
//! concatenated, L2-normalized into the pooled feature `g`, and a linear
//! output layer with bias produces the class logits.

mod gradcheck;
mod model_file;
mod network;
mod train;

pub use gradcheck::{grad_check, GradCheckReport};
pub use model_file::{read_model, write_model, PRB1_MAGIC, PRB1_VERSION};
pub use network::{BatchTrace, ForwardTrace, Gradients, ProbingNetwork};
pub(crate) use train::Adam;
pub use train::{evaluate, format_mean_std, train, EpochMetrics, Evaluation, TrainOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parses a colon-delimited layer preset such as `"128:64:32"`.
pub fn parse_preset(preset: &str) -> Result<Vec<usize>> {
    let dims = preset
        .split(':')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .ok()
                .filter(|&d| d > 0)
                .ok_or_else(|| Error::Config(format!("bad layer preset {preset:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(dims)
}

pub fn preset_string(dims: &[usize]) -> String {
    dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(":")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbingConfig {
    /// Output width of each probing layer, `[d1, …, dℓ]`.
    pub layer_dims: Vec<usize>,
    /// Heads per layer (`k`).
    pub heads: usize,
    /// Width of the document embedding (`d0`).
    pub input_dim: usize,
    pub classes: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Encoder truncation length; recorded for provenance only.
    pub max_doc_length: usize,
}

impl Default for ProbingConfig {
    fn default() -> Self {
        Self {
            layer_dims: vec![64, 32],
            heads: 8,
            input_dim: 768,
            classes: 32,
            learning_rate: 5e-5,
            batch_size: 32,
            epochs: 10,
            seed: 0,
            max_doc_length: 128,
        }
    }
}

impl ProbingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.layer_dims.is_empty() || self.layer_dims.contains(&0) {
            return bad(format!("layer dims must be positive, got {:?}", self.layer_dims));
        }
        if self.heads == 0 {
            return bad("heads must be >= 1".into());
        }
        if self.input_dim == 0 {
            return bad("input_dim must be >= 1".into());
        }
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        Ok(())
    }

    pub fn layers(&self) -> usize {
        self.layer_dims.len()
    }

    /// Input width of layer `i` (0-based).
    pub fn layer_input_dim(&self, i: usize) -> usize {
        if i == 0 {
            self.input_dim
        } else {
            self.layer_dims[i - 1]
        }
    }

    /// Width of the pooled feature `g`, `dℓ · k`.
    pub fn pooled_dim(&self) -> usize {
        self.layer_dims[self.layers() - 1] * self.heads
    }

    pub fn parameter_count(&self) -> usize {
        let heads: usize = (0..self.layers())
            .map(|i| self.layer_input_dim(i) * self.layer_dims[i] * self.heads)
            .sum();
        heads + self.pooled_dim() * self.classes + self.classes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        assert_eq!(parse_preset("128:64:32").unwrap(), [128, 64, 32]);
        assert_eq!(parse_preset("64:32").unwrap(), [64, 32]);
        assert_eq!(parse_preset("32").unwrap(), [32]);
        assert!(parse_preset("64::32").is_err());
        assert!(parse_preset("0").is_err());
        assert_eq!(preset_string(&[64, 32]), "64:32");
    }

    #[test]
    fn parameter_count_by_hand() {
        let cfg = ProbingConfig {
            layer_dims: vec![4],
            heads: 1,
            input_dim: 8,
            classes: 2,
            ..Default::default()
        };
        assert_eq!(cfg.parameter_count(), 8 * 4 + 4 * 2 + 2);
    }

    #[test]
    fn validation() {
        assert!(ProbingConfig::default().validate().is_ok());
        for cfg in [
            ProbingConfig { layer_dims: vec![], ..Default::default() },
            ProbingConfig { heads: 0, ..Default::default() },
            ProbingConfig { classes: 1, ..Default::default() },
            ProbingConfig { batch_size: 0, ..Default::default() },
            ProbingConfig { learning_rate: -1.0, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }
}
