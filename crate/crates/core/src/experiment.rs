//! The four experiments as signal generators: dynamical-decoupling
//! spectroscopy, correlation spectroscopy, homonuclear COSY 2D, and
//! heteronuclear 2D.
//!
//! All experiments prepare the electron sensor in |+⟩ with unpolarized
//! (maximally mixed) nuclei and read out electron ⟨σ_x⟩, so signal values
//! live in [−1, 1]. Grid points are independent tasks over a shared
//! read-only propagator; results are assembled by index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constants::larmor_frequency;
use crate::error::{Error, Result};
use crate::hamiltonian::electron_sigma_x;
use crate::par::map_indexed;
use crate::propagate::{DensityState, Propagator};
use crate::sequence::{
    compile_dd, compile_nonperiodic, Axis, Channel, PhasePattern, PulseSchedule, Rotation,
    ScheduleBuilder,
};
use crate::system::SpinSystem;

/// Uniform sweep: `n` samples from `start` to `stop` inclusive.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Sweep {
    pub start: f64,
    pub stop: f64,
    pub n: usize,
}

impl Sweep {
    pub fn new(start: f64, stop: f64, n: usize) -> Result<Self> {
        if n < 2 || stop <= start {
            return Err(Error::InvalidInput(format!(
                "sweep needs n >= 2 and stop > start (got {start}..{stop} x {n})"
            )));
        }
        Ok(Self { start, stop, n })
    }

    pub fn values(&self) -> Vec<f64> {
        let step = (self.stop - self.start) / (self.n - 1) as f64;
        (0..self.n).map(|k| self.start + k as f64 * step).collect()
    }

    pub fn step(&self) -> f64 {
        (self.stop - self.start) / (self.n - 1) as f64
    }
}

/// Parameters of a resonant DD block used for initialization and readout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DdBlockParams {
    pub n_pulses: usize,
    pub spacing: f64,
    pub pattern: PhasePattern,
}

/// Optional additive Gaussian measurement noise, counter-seeded per point so
/// the output is independent of execution order.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Noise {
    pub sigma: f64,
    pub seed: u64,
}

fn noise_at(noise: Option<&Noise>, index: u64) -> f64 {
    match noise {
        Some(n) if n.sigma > 0.0 => {
            let mut rng = ChaCha8Rng::seed_from_u64(n.seed ^ index.wrapping_mul(0x9E3779B97F4A7C15));
            // Box-Muller from two uniforms
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen();
            n.sigma * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        }
        _ => 0.0,
    }
}

/// Sensor-coherence trace over a swept 1D axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeSignal1D {
    /// Seconds; strictly increasing.
    pub axis: Vec<f64>,
    pub values: Vec<f64>,
}

impl TimeSignal1D {
    pub fn validate(&self) -> Result<()> {
        if self.axis.len() != self.values.len() {
            return Err(Error::InvalidInput("axis/value length mismatch".into()));
        }
        if self.axis.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("axis not strictly increasing".into()));
        }
        Ok(())
    }
}

/// Sensor-coherence values on a rectangular (t₁, t₂) grid; values\[i\]\[j\]
/// is row i (t₁ index), column j (t₂ index), stored row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeSignal2D {
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    pub values: Vec<f64>,
}

impl TimeSignal2D {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.axis2.len() + j]
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.axis1.len() * self.axis2.len() {
            return Err(Error::InvalidInput("grid size mismatch".into()));
        }
        for a in [&self.axis1, &self.axis2] {
            if a.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidInput("axis not strictly increasing".into()));
            }
        }
        Ok(())
    }
}

fn readout(prop: &Propagator, schedule: &PulseSchedule, initial: &DensityState, sx: &crate::hamiltonian::CMat) -> Result<f64> {
    let out = prop.propagate(schedule, initial)?;
    Ok(out.expect(sx))
}

/// DD spectroscopy: sweep the interpulse spacing, record sensor coherence.
/// Dips appear at spacings satisfying τ = 1/(2(ω_L − A∥/2)).
pub fn dd_scan(
    system: &SpinSystem,
    n_pulses: usize,
    pattern: PhasePattern,
    spacing_sweep: &Sweep,
    noise: Option<&Noise>,
) -> Result<TimeSignal1D> {
    let prop = Propagator::new(system)?;
    let n_nuc = system.nuclei.len();
    let initial = DensityState::electron_plus_mixed(n_nuc);
    let sx = electron_sigma_x(n_nuc);
    let axis = spacing_sweep.values();
    let values: Vec<Result<f64>> = map_indexed(axis.len(), |k| {
        let schedule = compile_dd(n_pulses, axis[k], pattern.clone())?;
        Ok(readout(&prop, &schedule, &initial, &sx)? + noise_at(noise, k as u64))
    });
    let values = values.into_iter().collect::<Result<Vec<_>>>()?;
    let sig = TimeSignal1D { axis, values };
    sig.validate()?;
    Ok(sig)
}

/// Propagate the init block and storage π/2, then drop electron coherence
/// (storage intervals are long against the sensor T2).
fn stored_state(
    prop: &Propagator,
    train: &PulseSchedule,
    initial: &DensityState,
) -> Result<DensityState> {
    let mut b = ScheduleBuilder::new("store");
    b.block(train).pulse(Channel::Electron, Rotation::HalfPi, Axis::X);
    let mut state = prop.propagate(&b.finish()?, initial)?;
    state.dephase_electron();
    Ok(state)
}

/// Correlation spectroscopy: DD block — storage — free evolution t_c —
/// DD block. The spectrum of the trace contains the conditional nuclear
/// lines ω₀ = ω_L and ω₋₁ = ω_L − A∥.
pub fn correlation_scan(
    system: &SpinSystem,
    dd: &DdBlockParams,
    tc_sweep: &Sweep,
    noise: Option<&Noise>,
) -> Result<TimeSignal1D> {
    let prop = Propagator::new(system)?;
    let n_nuc = system.nuclei.len();
    let initial = DensityState::electron_plus_mixed(n_nuc);
    let sx = electron_sigma_x(n_nuc);
    let train = compile_dd(dd.n_pulses, dd.spacing, dd.pattern.clone())?;
    let stored = stored_state(&prop, &train, &initial)?;
    let axis = tc_sweep.values();
    let values: Vec<Result<f64>> = map_indexed(axis.len(), |k| {
        let mut b = ScheduleBuilder::new(format!("correlation(tc={:.3e})", axis[k]));
        b.wait(axis[k])
            .pulse(Channel::Electron, Rotation::HalfPi, Axis::X)
            .block(&train);
        Ok(readout(&prop, &b.finish()?, &stored, &sx)? + noise_at(noise, k as u64))
    });
    let values = values.into_iter().collect::<Result<Vec<_>>>()?;
    let sig = TimeSignal1D { axis, values };
    sig.validate()?;
    Ok(sig)
}

/// Homonuclear COSY 2D: init DD block — storage — free t₁ — mixing DD block
/// (N pulses, a nuclear π/2) — free t₂ — readout DD block.
pub fn cosy_2d(
    system: &SpinSystem,
    dd: &DdBlockParams,
    mixing_pulses: usize,
    t1_sweep: &Sweep,
    t2_sweep: &Sweep,
    noise: Option<&Noise>,
) -> Result<TimeSignal2D> {
    if t1_sweep.n < 8 || t2_sweep.n < 8 {
        return Err(Error::InvalidInput("2D grid needs >= 8 samples per axis".into()));
    }
    let prop = Propagator::new(system)?;
    let n_nuc = system.nuclei.len();
    let initial = DensityState::electron_plus_mixed(n_nuc);
    let sx = electron_sigma_x(n_nuc);
    let train = compile_dd(dd.n_pulses, dd.spacing, dd.pattern.clone())?;
    let mixing = compile_dd(mixing_pulses, dd.spacing, dd.pattern.clone())?;
    let stored = stored_state(&prop, &train, &initial)?;
    // offset the mixing block by a quarter of the resonance period so its
    // conditional rotation axis is parallel to the stored coherence
    let mix_phase_shift = dd.spacing / 2.0;
    let axis1 = t1_sweep.values();
    let axis2 = t2_sweep.values();
    let n2 = axis2.len();
    let values: Vec<Result<f64>> = map_indexed(axis1.len() * n2, |k| {
        let (i, j) = (k / n2, k % n2);
        let (t1, t2) = (axis1[i], axis2[j]);
        // evolve t1, apply the mixing block, dephase the electron again
        // (the mixing pulses leave no usable sensor coherence), evolve t2
        let mut bm = ScheduleBuilder::new(format!("cosy-mix(t1={t1:.3e})"));
        bm.wait(t1 + mix_phase_shift).block(&mixing);
        let mut mixed = prop.propagate(&bm.finish()?, &stored)?;
        mixed.dephase_electron();
        let mut br = ScheduleBuilder::new(format!("cosy-read(t2={t2:.3e})"));
        br.wait(t2)
            .pulse(Channel::Electron, Rotation::HalfPi, Axis::X)
            .block(&train);
        Ok(readout(&prop, &br.finish()?, &mixed, &sx)? + noise_at(noise, k as u64))
    });
    let values = values.into_iter().collect::<Result<Vec<_>>>()?;
    let sig = TimeSignal2D { axis1, axis2, values };
    sig.validate()?;
    Ok(sig)
}

/// Parameters of the heteronuclear experiment: the two species observed at
/// once and the duration of the non-periodic init/readout trains.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeteroParams {
    pub species: (String, String),
    pub block_time: f64,
}

/// Heteronuclear 2D: non-periodic init/readout trains resonant with both
/// Larmor lines and a broadband all-nuclear π/2 as the mixing pulse.
pub fn hetero_2d(
    system: &SpinSystem,
    params: &HeteroParams,
    t1_sweep: &Sweep,
    t2_sweep: &Sweep,
    noise: Option<&Noise>,
) -> Result<TimeSignal2D> {
    if t1_sweep.n < 8 || t2_sweep.n < 8 {
        return Err(Error::InvalidInput("2D grid needs >= 8 samples per axis".into()));
    }
    for name in [&params.species.0, &params.species.1] {
        if !system.nuclei.iter().any(|n| &n.species.name == name) {
            return Err(Error::InvalidInput(format!(
                "system has no nucleus of species '{name}'"
            )));
        }
    }
    let mut freqs = Vec::new();
    for name in [&params.species.0, &params.species.1] {
        let sp = system
            .nuclei
            .iter()
            .find(|n| &n.species.name == name)
            .map(|n| n.species.clone())
            .unwrap();
        let f = larmor_frequency(&sp, system.field_magnitude)?.abs();
        if !freqs.contains(&f) {
            freqs.push(f);
        }
    }
    // One resonant segment per species. Merging both zero sets into a single
    // train makes the toggling function the product of two square waves,
    // which has filter weight only at the sum/difference frequencies and
    // entangles the sensor with neither species; consecutive single-frequency
    // segments keep first-order weight at each Larmor line.
    let seg_time = params.block_time / freqs.len() as f64;
    let mut tb = ScheduleBuilder::new("hetero-train");
    for f in &freqs {
        tb.block(&compile_nonperiodic(&[*f], seg_time)?);
    }
    let train = tb.finish()?;

    let prop = Propagator::new(system)?;
    let n_nuc = system.nuclei.len();
    let initial = DensityState::electron_plus_mixed(n_nuc);
    let sx = electron_sigma_x(n_nuc);
    let stored = stored_state(&prop, &train, &initial)?;
    let axis1 = t1_sweep.values();
    let axis2 = t2_sweep.values();
    let n2 = axis2.len();
    let values: Vec<Result<f64>> = map_indexed(axis1.len() * n2, |k| {
        let (i, j) = (k / n2, k % n2);
        let mut b = ScheduleBuilder::new("hetero2d");
        b.wait(axis1[i])
            .pulse(Channel::AllNuclear, Rotation::HalfPi, Axis::X)
            .wait(axis2[j])
            .pulse(Channel::Electron, Rotation::HalfPi, Axis::X)
            .block(&train);
        Ok(readout(&prop, &b.finish()?, &stored, &sx)? + noise_at(noise, k as u64))
    });
    let values = values.into_iter().collect::<Result<Vec<_>>>()?;
    let sig = TimeSignal2D { axis1, axis2, values };
    sig.validate()?;
    Ok(sig)
}
