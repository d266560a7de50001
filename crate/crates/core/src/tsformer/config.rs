use super::ModelError;

/// Architecture of the forecaster.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub features: usize,
    pub lookback: usize,
    pub horizon: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    /// Layer-norm epsilon.
    pub eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            features: 1,
            lookback: 96,
            horizon: 4,
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            d_ff: 128,
            eps: 1e-5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.features == 0 || self.lookback == 0 || self.horizon == 0 {
            return bad("features, lookback and horizon must be positive".into());
        }
        if self.n_layers == 0 || self.d_ff == 0 || self.n_heads == 0 {
            return bad("n_layers, n_heads and d_ff must be positive".into());
        }
        if !self.d_model.is_multiple_of(2) {
            return Err(ModelError::OddDimension(self.d_model));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.n_heads
            ));
        }
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return bad(format!("layer-norm eps {} must be finite and >= 0", self.eps));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}
