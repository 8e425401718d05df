//! The electron-nuclear spin system: the single source of physical truth.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::constants::SpinSpecies;
use crate::error::{Error, Result};
use crate::tensor::{
    dipolar_tensor_from_positions, hyperfine_point_dipole, DipolarTensor, HyperfineTensor,
};

/// Hard cap on nuclei; the Hilbert space is 2^(n+1).
pub const MAX_NUCLEI: usize = 10;

/// Minimum NV-nucleus distance (no overlap with the NV site).
pub const MIN_NV_DISTANCE: f64 = 0.5e-10;

/// One nuclear spin: species, position in the NV frame (z along the NV axis),
/// and its hyperfine tensor (explicit, or derived from position).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NuclearSpin {
    pub species: SpinSpecies,
    /// Meters, NV frame.
    pub position: Vector3<f64>,
    pub hyperfine: HyperfineTensor,
    pub label: usize,
}

impl NuclearSpin {
    /// Hyperfine from the point-dipole model at `position`.
    pub fn from_position(species: SpinSpecies, position: Vector3<f64>, label: usize) -> Result<Self> {
        check_position(&position)?;
        let hyperfine = hyperfine_point_dipole(position, &species)?;
        Ok(Self { species, position, hyperfine, label })
    }

    /// Explicit hyperfine tensor; allowed inside the point-dipole floor.
    pub fn with_tensor(
        species: SpinSpecies,
        position: Vector3<f64>,
        hyperfine: HyperfineTensor,
        label: usize,
    ) -> Result<Self> {
        check_position(&position)?;
        Ok(Self { species, position, hyperfine, label })
    }
}

fn check_position(p: &Vector3<f64>) -> Result<()> {
    if p.norm() <= MIN_NV_DISTANCE {
        return Err(Error::InvalidInput(format!(
            "nucleus at |r| = {:.3} A overlaps the NV site",
            p.norm() * 1e10
        )));
    }
    Ok(())
}

/// Full system description. Immutable after construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpinSystem {
    /// Tesla.
    pub field_magnitude: f64,
    /// Radians between the external field and the NV axis; the field is
    /// tilted in the xz-plane of the NV frame.
    pub field_polar_angle: f64,
    /// Tesla/meter along the NV z axis (NV gradient field).
    pub gradient: f64,
    pub nuclei: Vec<NuclearSpin>,
    /// Upper-triangular pair couplings keyed by (i, j), i < j; exactly one
    /// entry per pair.
    pub pair_couplings: Vec<((usize, usize), DipolarTensor)>,
}

impl SpinSystem {
    /// Build with all pair couplings derived from positions.
    pub fn new(field_magnitude: f64, nuclei: Vec<NuclearSpin>) -> Result<Self> {
        let mut sys = Self {
            field_magnitude,
            field_polar_angle: 0.0,
            gradient: 0.0,
            nuclei,
            pair_couplings: Vec::new(),
        };
        sys.derive_missing_couplings()?;
        sys.validate()?;
        Ok(sys)
    }

    pub fn with_field_angle(mut self, theta: f64) -> Self {
        self.field_polar_angle = theta;
        self
    }

    pub fn with_gradient(mut self, gradient: f64) -> Self {
        self.gradient = gradient;
        self
    }

    /// Override the coupling of one pair.
    pub fn set_pair_coupling(&mut self, i: usize, j: usize, t: DipolarTensor) -> Result<()> {
        let key = ordered(i, j)?;
        match self.pair_couplings.iter_mut().find(|(k, _)| *k == key) {
            Some((_, existing)) => *existing = t,
            None => self.pair_couplings.push((key, t)),
        }
        Ok(())
    }

    fn derive_missing_couplings(&mut self) -> Result<()> {
        let n = self.nuclei.len();
        for i in 0..n {
            for j in (i + 1)..n {
                if !self.pair_couplings.iter().any(|(k, _)| *k == (i, j)) {
                    let t = dipolar_tensor_from_positions(
                        self.nuclei[i].position,
                        self.nuclei[j].position,
                        &self.nuclei[i].species,
                        &self.nuclei[j].species,
                    )?;
                    self.pair_couplings.push(((i, j), t));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.nuclei.len() > MAX_NUCLEI {
            return Err(Error::DimensionOverflow {
                nuclei: self.nuclei.len(),
                max: MAX_NUCLEI,
            });
        }
        if self.field_magnitude < 0.0 {
            return Err(Error::InvalidInput("field must be >= 0".into()));
        }
        let n = self.nuclei.len();
        let expected = n * n.saturating_sub(1) / 2;
        if self.pair_couplings.len() != expected {
            return Err(Error::InvalidInput(format!(
                "expected {expected} pair couplings, found {}",
                self.pair_couplings.len()
            )));
        }
        for (idx, spin) in self.nuclei.iter().enumerate() {
            check_position(&spin.position)?;
            if spin.label != idx {
                return Err(Error::InvalidInput(format!(
                    "nucleus {idx} carries label {}",
                    spin.label
                )));
            }
        }
        Ok(())
    }

    pub fn coupling(&self, i: usize, j: usize) -> Option<&DipolarTensor> {
        let key = ordered(i, j).ok()?;
        self.pair_couplings.iter().find(|(k, _)| *k == key).map(|(_, t)| t)
    }

    /// Hilbert-space dimension 2^(n+1).
    pub fn dim(&self) -> usize {
        1 << (self.nuclei.len() + 1)
    }

    /// Unit field direction in the NV frame.
    pub fn field_direction(&self) -> Vector3<f64> {
        Vector3::new(self.field_polar_angle.sin(), 0.0, self.field_polar_angle.cos())
    }

    /// Rotation taking NV-frame components into the field-aligned frame
    /// (field direction maps to z).
    pub fn frame_rotation(&self) -> Matrix3<f64> {
        let t = -self.field_polar_angle;
        Matrix3::new(
            t.cos(), 0.0, t.sin(),
            0.0, 1.0, 0.0,
            -t.sin(), 0.0, t.cos(),
        )
    }

    /// Tensor expressed in the field-aligned frame: R T Rᵀ.
    pub fn to_field_frame(&self, t: &Matrix3<f64>) -> Matrix3<f64> {
        let r = self.frame_rotation();
        r * t * r.transpose()
    }
}

fn ordered(i: usize, j: usize) -> Result<(usize, usize)> {
    if i == j {
        return Err(Error::InvalidInput("pair coupling requires i != j".into()));
    }
    Ok((i.min(j), i.max(j)))
}
