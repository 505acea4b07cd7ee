use serde::{Deserialize, Serialize};

use super::FemError;

/// Isotropic hyperelastic material.
///
/// Moduli are in Pa; `alpha` is the dimensionless exponent of the Ogden-form
/// strain energy (2 recovers the classical neo-Hookean model).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    pub density: f64,
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    2.0
}

impl Material {
    pub fn new(density: f64, youngs_modulus: f64, poisson_ratio: f64, alpha: f64) -> Result<Self, FemError> {
        let m = Self {
            density,
            youngs_modulus,
            poisson_ratio,
            alpha,
        };
        m.validate()?;
        Ok(m)
    }

    /// Healthy brain tissue: 1000 kg/m³, E = 3000 Pa, ν = 0.49.
    pub fn healthy_brain() -> Self {
        Self {
            density: 1000.0,
            youngs_modulus: 3000.0,
            poisson_ratio: 0.49,
            alpha: 2.0,
        }
    }

    /// Tumour tissue: 1000 kg/m³, E = 7500 Pa, ν = 0.49.
    pub fn tumour() -> Self {
        Self {
            density: 1000.0,
            youngs_modulus: 7500.0,
            poisson_ratio: 0.49,
            alpha: 2.0,
        }
    }

    pub fn validate(&self) -> Result<(), FemError> {
        derive_shear_modulus(self.youngs_modulus, self.poisson_ratio)?;
        if !(self.alpha.is_finite() && self.alpha != 0.0) {
            return Err(FemError::InvalidMaterial(format!("alpha must be finite and nonzero, got {}", self.alpha)));
        }
        Ok(())
    }

    /// μ = E / (2(1 + ν)).
    pub fn shear_modulus(&self) -> f64 {
        self.youngs_modulus / (2.0 * (1.0 + self.poisson_ratio))
    }

    /// κ = E / (3(1 − 2ν)).
    pub fn bulk_modulus(&self) -> f64 {
        self.youngs_modulus / (3.0 * (1.0 - 2.0 * self.poisson_ratio))
    }

    /// Lamé's first parameter λ = Eν / ((1 + ν)(1 − 2ν)).
    pub fn lame_lambda(&self) -> f64 {
        let (e, nu) = (self.youngs_modulus, self.poisson_ratio);
        e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    }
}

/// μ = E / (2(1 + ν)) for E > 0 and 0 ≤ ν < 0.5.
pub fn derive_shear_modulus(youngs_modulus: f64, poisson_ratio: f64) -> Result<f64, FemError> {
    if !(youngs_modulus > 0.0 && youngs_modulus.is_finite()) {
        return Err(FemError::InvalidMaterial(format!(
            "Young's modulus must be positive, got {youngs_modulus}"
        )));
    }
    if poisson_ratio >= 0.5 {
        return Err(FemError::Incompressible(poisson_ratio));
    }
    if !(poisson_ratio >= 0.0) {
        return Err(FemError::InvalidMaterial(format!(
            "Poisson ratio must be in [0, 0.5), got {poisson_ratio}"
        )));
    }
    Ok(youngs_modulus / (2.0 * (1.0 + poisson_ratio)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shear_modulus_values() {
        assert!((derive_shear_modulus(3000.0, 0.49).unwrap() - 1006.7114).abs() < 1e-4);
        assert!((derive_shear_modulus(7500.0, 0.49).unwrap() - 2516.7785).abs() < 1e-4);
        assert_eq!(derive_shear_modulus(2.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn incompressible_limit_is_rejected() {
        assert_eq!(
            derive_shear_modulus(3000.0, 0.5).unwrap_err(),
            FemError::Incompressible(0.5)
        );
        assert!(derive_shear_modulus(-1.0, 0.3).is_err());
    }

    #[test]
    fn derived_moduli_are_consistent() {
        let m = Material::healthy_brain();
        let (mu, k, l) = (m.shear_modulus(), m.bulk_modulus(), m.lame_lambda());
        assert!((k - (l + 2.0 * mu / 3.0)).abs() < 1e-9 * k);
    }
}
