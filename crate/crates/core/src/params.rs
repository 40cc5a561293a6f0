use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the dissipative standard map.
///
/// `k` is the kick amplitude in rescaled-momentum units (`p' = gamma p + k sin x`),
/// `gamma` the per-period momentum contraction and `hbar_eff` the effective
/// Planck constant of the quantized map (equal to the kick period).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapParams {
    pub k: f64,
    pub gamma: f64,
    pub hbar_eff: f64,
}

impl MapParams {
    pub fn new(k: f64, gamma: f64, hbar_eff: f64) -> Result<Self> {
        let params = Self { k, gamma, hbar_eff };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidParams(format!(
                "gamma = {} outside [0, 1]",
                self.gamma
            )));
        }
        if !(self.k >= 0.0 && self.k.is_finite()) {
            return Err(Error::InvalidParams(format!("k = {} must be >= 0", self.k)));
        }
        if !(self.hbar_eff > 0.0 && self.hbar_eff.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "hbar_eff = {} must be > 0",
                self.hbar_eff
            )));
        }
        Ok(())
    }

    /// Half-width `k / (1 - gamma)` of the forward-invariant momentum band.
    /// Infinite for the conservative map.
    pub fn p_band(&self) -> f64 {
        if self.gamma < 1.0 {
            self.k / (1.0 - self.gamma)
        } else {
            f64::INFINITY
        }
    }

    /// Like [`p_band`](Self::p_band) but fails for `gamma == 1`.
    pub fn finite_band(&self) -> Result<f64> {
        let band = self.p_band();
        if band.is_finite() {
            Ok(band)
        } else {
            Err(Error::InvalidParams(
                "trapping band is unbounded for gamma = 1".into(),
            ))
        }
    }

    /// Squared Lindblad coupling `g^2 = -ln gamma`.
    pub fn coupling_sq(&self) -> f64 {
        -self.gamma.ln()
    }

    pub fn with_k(self, k: f64) -> Self {
        Self { k, ..self }
    }

    pub fn with_gamma(self, gamma: f64) -> Self {
        Self { gamma, ..self }
    }
}

impl Default for MapParams {
    fn default() -> Self {
        Self {
            k: 4.0,
            gamma: 0.33,
            hbar_eff: 0.042,
        }
    }
}
