//! Exact density-matrix propagation through a pulse schedule.
//!
//! The Hamiltonian is time-independent between pulses, so it is
//! eigendecomposed once per system; free-evolution propagators
//! U(Δt) = V exp(−iΛΔt) V† are cached per distinct Δt and shared
//! (read-mostly) across parallel workers.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use nalgebra::Matrix2;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::hamiltonian::{build_hamiltonian, embed_many, pauli_x, pauli_y, CMat};
use crate::sequence::{Axis, Channel, PulseEvent, PulseSchedule, Rotation};
use crate::system::SpinSystem;

/// Density matrix on the 2^(n+1)-dimensional space.
#[derive(Debug, Clone)]
pub struct DensityState {
    pub matrix: CMat,
}

impl DensityState {
    pub fn new(matrix: CMat) -> Self {
        Self { matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Electron in |+⟩ = (|0⟩+|−1⟩)/√2, nuclei maximally mixed.
    pub fn electron_plus_mixed(n_nuclei: usize) -> Self {
        let plus = CMat::from_row_slice(
            2,
            2,
            &[
                C64::new(0.5, 0.0),
                C64::new(0.5, 0.0),
                C64::new(0.5, 0.0),
                C64::new(0.5, 0.0),
            ],
        );
        let nuc_dim = 1 << n_nuclei;
        let mixed = CMat::identity(nuc_dim, nuc_dim) * C64::new(1.0 / nuc_dim as f64, 0.0);
        Self { matrix: plus.kronecker(&mixed) }
    }

    /// Electron in |0⟩, nuclei maximally mixed.
    pub fn electron_zero_mixed(n_nuclei: usize) -> Self {
        let zero = CMat::from_fn(2, 2, |i, j| {
            if i == 0 && j == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }
        });
        let nuc_dim = 1 << n_nuclei;
        let mixed = CMat::identity(nuc_dim, nuc_dim) * C64::new(1.0 / nuc_dim as f64, 0.0);
        Self { matrix: zero.kronecker(&mixed) }
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    /// Re tr(ρ O).
    pub fn expect(&self, op: &CMat) -> f64 {
        (&self.matrix * op).trace().re
    }

    /// Zero the electron coherence blocks. Models projective storage: the
    /// sensor T2 is far shorter than the storage intervals, so off-diagonal
    /// electron terms are gone before the next free-evolution period. The
    /// secular Hamiltonian is electron-block-diagonal, so the state stays
    /// electron-diagonal until the next electron pulse.
    pub fn dephase_electron(&mut self) {
        let dim = self.matrix.nrows();
        let half = dim / 2;
        for a in 0..dim {
            for b in 0..dim {
                if (a < half) != (b < half) {
                    self.matrix[(a, b)] = C64::new(0.0, 0.0);
                }
            }
        }
    }

    /// Trace, Hermiticity and positivity invariants.
    pub fn validate(&self) -> Result<()> {
        if (self.trace() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("trace {} != 1", self.trace())));
        }
        let herm = crate::hamiltonian::hermiticity_defect(&self.matrix);
        if herm > 1e-10 {
            return Err(Error::InvalidInput(format!("hermiticity defect {herm}")));
        }
        let min_ev = self
            .matrix
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_ev < -1e-9 {
            return Err(Error::InvalidInput(format!("negative eigenvalue {min_ev}")));
        }
        Ok(())
    }
}

type PulseKey = (Channel, Rotation, Axis);

/// Cached exact propagator for one system.
pub struct Propagator {
    dim: usize,
    /// Eigenvectors of H (columns), unitary.
    vectors: CMat,
    /// Eigenvalues of H, rad/s.
    values: Vec<f64>,
    species_by_slot: Vec<String>,
    free_cache: RwLock<HashMap<u64, Arc<CMat>>>,
    pulse_cache: RwLock<HashMap<PulseKey, Arc<CMat>>>,
}

impl Propagator {
    pub fn new(system: &SpinSystem) -> Result<Self> {
        Self::with_sign(system, 1.0)
    }

    /// Propagator for sign·H; sign = −1 gives the time-reversal harness.
    pub fn with_sign(system: &SpinSystem, sign: f64) -> Result<Self> {
        let h = build_hamiltonian(system)? * C64::new(sign, 0.0);
        let eig = h.symmetric_eigen();
        Ok(Self {
            dim: system.dim(),
            vectors: eig.eigenvectors,
            values: eig.eigenvalues.iter().copied().collect(),
            species_by_slot: system.nuclei.iter().map(|n| n.species.name.clone()).collect(),
            free_cache: RwLock::new(HashMap::new()),
            pulse_cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// U(Δt) = V exp(−iΛΔt) V†.
    pub fn free_propagator(&self, dt: f64) -> Arc<CMat> {
        let key = dt.to_bits();
        if let Some(u) = self.free_cache.read().unwrap().get(&key) {
            return Arc::clone(u);
        }
        let phases = CMat::from_fn(self.dim, self.dim, |i, j| {
            if i == j {
                C64::from_polar(1.0, -self.values[i] * dt)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let u = Arc::new(&self.vectors * phases * self.vectors.adjoint());
        self.free_cache.write().unwrap().insert(key, Arc::clone(&u));
        u
    }

    fn rotation_matrix(rotation: Rotation, axis: Axis) -> Matrix2<C64> {
        let a = rotation.angle() / 2.0;
        let sigma = match axis {
            Axis::X => pauli_x(),
            Axis::Y => pauli_y(),
        };
        Matrix2::identity() * C64::new(a.cos(), 0.0) - sigma * C64::new(0.0, a.sin())
    }

    fn pulse_slots(&self, channel: &Channel) -> Result<Vec<usize>> {
        match channel {
            Channel::Electron => Ok(vec![0]),
            Channel::AllNuclear => Ok((1..=self.species_by_slot.len()).collect()),
            Channel::NuclearSpecies(name) => {
                let slots: Vec<usize> = self
                    .species_by_slot
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| *s == name)
                    .map(|(i, _)| i + 1)
                    .collect();
                if slots.is_empty() {
                    return Err(Error::InvalidInput(format!(
                        "no nucleus of species '{name}' in the system"
                    )));
                }
                Ok(slots)
            }
        }
    }

    pub fn pulse_propagator(&self, event: &PulseEvent) -> Result<Arc<CMat>> {
        let key = (event.channel.clone(), event.rotation, event.axis);
        if let Some(u) = self.pulse_cache.read().unwrap().get(&key) {
            return Ok(Arc::clone(u));
        }
        let rot = Self::rotation_matrix(event.rotation, event.axis);
        let slots = self.pulse_slots(&event.channel)?;
        let u = Arc::new(embed_many(&rot, &slots, self.species_by_slot.len() + 1));
        self.pulse_cache.write().unwrap().insert(key, Arc::clone(&u));
        Ok(u)
    }

    /// Alternate free evolution and ideal rotations; returns the final state.
    pub fn propagate(&self, schedule: &PulseSchedule, initial: &DensityState) -> Result<DensityState> {
        if initial.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: initial.dim() });
        }
        let mut rho = initial.matrix.clone();
        let mut cursor = 0.0;
        for event in &schedule.events {
            let dt = event.time - cursor;
            if dt > 0.0 {
                let u = self.free_propagator(dt);
                rho = &*u * rho * u.adjoint();
            }
            let p = self.pulse_propagator(event)?;
            rho = &*p * rho * p.adjoint();
            cursor = event.time;
        }
        let dt = schedule.total_time - cursor;
        if dt > 0.0 {
            let u = self.free_propagator(dt);
            rho = &*u * rho * u.adjoint();
        }
        Ok(DensityState::new(rho))
    }
}

/// One-shot propagation; prefer a shared [`Propagator`] for sweeps.
pub fn propagate(
    system: &SpinSystem,
    schedule: &PulseSchedule,
    initial: &DensityState,
) -> Result<DensityState> {
    Propagator::new(system)?.propagate(schedule, initial)
}
