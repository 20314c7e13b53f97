use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Isotropic elastic material.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub young_modulus: f64,
    pub poisson_ratio: f64,
    pub density: f64,
}

impl MaterialParams {
    pub fn new(young_modulus: f64, poisson_ratio: f64, density: f64) -> Result<Self> {
        let p = MaterialParams {
            young_modulus,
            poisson_ratio,
            density,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.young_modulus > 0.0 && self.young_modulus.is_finite()) {
            return Err(Error::invalid("models", format!("Young modulus must be positive, got {}", self.young_modulus)));
        }
        if !(0.0..0.5).contains(&self.poisson_ratio) {
            return Err(Error::invalid("models", format!("Poisson ratio must lie in [0, 0.5), got {}", self.poisson_ratio)));
        }
        if !(self.density > 0.0 && self.density.is_finite()) {
            return Err(Error::invalid("models", format!("density must be positive, got {}", self.density)));
        }
        Ok(())
    }

    /// First Lamé parameter `Eν / ((1 + ν)(1 − 2ν))`.
    pub fn lame_lambda(&self) -> f64 {
        let (e, nu) = (self.young_modulus, self.poisson_ratio);
        e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    }

    /// Shear modulus `E / (2(1 + ν))`.
    pub fn lame_mu(&self) -> f64 {
        self.young_modulus / (2.0 * (1.0 + self.poisson_ratio))
    }
}
