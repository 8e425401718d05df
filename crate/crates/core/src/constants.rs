//! Physical constants and the nuclear species table.
//!
//! All gyromagnetic ratios are γ/2π in Hz/T (signed). Frequencies are kept
//! in Hz (cycles) everywhere outside Hamiltonian assembly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Planck constant, J·s (SI exact).
pub const PLANCK_H: f64 = 6.62607015e-34;

/// μ₀/4π, T·m/A (SI exact since the 2019 redefinition to within 1e-10).
pub const MU0_OVER_4PI: f64 = 1e-7;

/// Diamond cubic lattice constant, meters.
pub const DIAMOND_LATTICE_CONSTANT: f64 = 3.567e-10;

/// Gyromagnetic ratio of ¹³C, Hz/T.
pub const GAMMA_C13: f64 = 10.7084e6;
/// Gyromagnetic ratio of ¹H, Hz/T.
pub const GAMMA_H1: f64 = 42.5775e6;
/// Gyromagnetic ratio of ¹⁵N, Hz/T (negative).
pub const GAMMA_N15: f64 = -4.3163e6;
/// Gyromagnetic ratio of the NV electron spin, Hz/T.
pub const GAMMA_ELECTRON: f64 = 28024.95e6;

/// A nuclear (or electron) spin species. Nuclei are spin-1/2 only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinSpecies {
    pub name: String,
    /// γ/2π in Hz/T, signed; must be nonzero.
    pub gyromagnetic_ratio: f64,
}

impl SpinSpecies {
    pub fn new(name: impl Into<String>, gyromagnetic_ratio: f64) -> Result<Self> {
        if gyromagnetic_ratio == 0.0 || !gyromagnetic_ratio.is_finite() {
            return Err(Error::InvalidInput(
                "gyromagnetic ratio must be finite and nonzero".into(),
            ));
        }
        Ok(Self { name: name.into(), gyromagnetic_ratio })
    }

    pub fn c13() -> Self {
        Self { name: "13C".into(), gyromagnetic_ratio: GAMMA_C13 }
    }

    pub fn h1() -> Self {
        Self { name: "1H".into(), gyromagnetic_ratio: GAMMA_H1 }
    }

    pub fn n15() -> Self {
        Self { name: "15N".into(), gyromagnetic_ratio: GAMMA_N15 }
    }

    pub fn electron() -> Self {
        Self { name: "e".into(), gyromagnetic_ratio: GAMMA_ELECTRON }
    }
}

/// Larmor frequency γ·B in Hz, signed.
pub fn larmor_frequency(species: &SpinSpecies, field_tesla: f64) -> Result<f64> {
    if field_tesla < 0.0 {
        return Err(Error::InvalidInput("field must be >= 0".into()));
    }
    Ok(species.gyromagnetic_ratio * field_tesla)
}

/// Species lookup table with canonical defaults, overridable from config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpeciesTable {
    pub species: Vec<SpinSpecies>,
}

impl Default for SpeciesTable {
    fn default() -> Self {
        Self {
            species: vec![
                SpinSpecies::c13(),
                SpinSpecies::h1(),
                SpinSpecies::n15(),
                SpinSpecies::electron(),
            ],
        }
    }
}

impl SpeciesTable {
    pub fn get(&self, name: &str) -> Result<SpinSpecies> {
        self.species
            .iter()
            .find(|s| s.name == name)
            .cloned()
            .ok_or_else(|| Error::InvalidInput(format!("unknown species '{name}'")))
    }

    /// Load overrides from TOML text; entries replace defaults by name.
    pub fn with_overrides(toml_text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            species: Vec<SpinSpecies>,
        }
        let raw: Raw =
            toml::from_str(toml_text).map_err(|e| Error::Format(e.to_string()))?;
        let mut table = Self::default();
        for s in raw.species {
            if s.gyromagnetic_ratio == 0.0 {
                return Err(Error::InvalidInput(format!(
                    "species '{}' has zero gyromagnetic ratio",
                    s.name
                )));
            }
            if let Some(existing) = table.species.iter_mut().find(|e| e.name == s.name) {
                *existing = s;
            } else {
                table.species.push(s);
            }
        }
        Ok(table)
    }
}
