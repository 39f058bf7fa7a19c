use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Logit assigned by [`MaskInit::Ones`]; `sigmoid(6) ~ 0.9975`.
pub const ONES_LOGIT: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskInit {
    #[default]
    Half,
    Ones,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Ratio mask over the magnitude-spectrogram grid, parameterized by free
/// logits so every value stays in (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    logits: Array2<f64>,
}

impl Mask {
    pub fn init(shape: (usize, usize), init: MaskInit) -> Result<Self> {
        if shape.0 == 0 || shape.1 == 0 {
            return Err(Error::Config(format!("mask shape {shape:?} must be positive")));
        }
        let logit = match init {
            MaskInit::Half => 0.0,
            MaskInit::Ones => ONES_LOGIT,
        };
        Ok(Self {
            logits: Array2::from_elem(shape, logit),
        })
    }

    pub fn from_logits(logits: Array2<f64>) -> Result<Self> {
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::Domain("mask logits must be finite".into()));
        }
        Ok(Self { logits })
    }

    pub fn logits(&self) -> &Array2<f64> {
        &self.logits
    }

    pub(crate) fn logits_mut(&mut self) -> &mut Array2<f64> {
        &mut self.logits
    }

    pub fn shape(&self) -> (usize, usize) {
        self.logits.dim()
    }

    pub fn values(&self) -> Array2<f64> {
        self.logits.mapv(sigmoid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_init_is_half_everywhere() {
        let m = Mask::init((1025, 1025), MaskInit::Half).unwrap();
        assert!(m.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn ones_init_within_quarter_percent() {
        let m = Mask::init((4, 3), MaskInit::Ones).unwrap();
        assert!(m.values().iter().all(|&v| (1.0 - v) < 0.0025 && v < 1.0));
    }

    #[test]
    fn init_is_deterministic() {
        assert_eq!(
            Mask::init((7, 5), MaskInit::Half).unwrap(),
            Mask::init((7, 5), MaskInit::Half).unwrap()
        );
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!(sigmoid(-30.0) > 0.0 && sigmoid(30.0) < 1.0 + 1e-16);
        assert!(Mask::init((0, 3), MaskInit::Half).is_err());
    }
}
