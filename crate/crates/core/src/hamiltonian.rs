//! Spin operators and Hamiltonian assembly.
//!
//! Basis ordering: electron ⊗ nucleus 0 ⊗ nucleus 1 ⊗ ... The electron
//! sensor qubit is the {m_s = 0, m_s = −1} pair, with S_z = diag(0, −1).
//! Nuclear operators are σ/2. All couplings enter in Hz and are multiplied
//! by 2π on assembly; the returned matrix is in rad/s.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64 as C64;

use crate::constants::larmor_frequency;
use crate::error::Result;
use crate::system::SpinSystem;

pub type CMat = DMatrix<C64>;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

pub fn pauli_x() -> Matrix2<C64> {
    Matrix2::new(ZERO, ONE, ONE, ZERO)
}

pub fn pauli_y() -> Matrix2<C64> {
    Matrix2::new(ZERO, -C64::i(), C64::i(), ZERO)
}

pub fn pauli_z() -> Matrix2<C64> {
    Matrix2::new(ONE, ZERO, ZERO, -ONE)
}

/// Electron S_z on the {|0⟩, |−1⟩} sensor subspace.
pub fn electron_sz() -> Matrix2<C64> {
    Matrix2::new(ZERO, ZERO, ZERO, -ONE)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Embed a single-qubit operator at factor `slot` of `n_factors` two-level
/// factors (slot 0 is the electron).
pub fn embed(op: &Matrix2<C64>, slot: usize, n_factors: usize) -> CMat {
    let mut out = CMat::identity(1, 1);
    for k in 0..n_factors {
        let factor = if k == slot {
            CMat::from_fn(2, 2, |i, j| op[(i, j)])
        } else {
            CMat::identity(2, 2)
        };
        out = kron(&out, &factor);
    }
    out
}

/// Embed the same single-qubit operator on every listed slot at once
/// (tensor product of the rotations, identity elsewhere).
pub fn embed_many(op: &Matrix2<C64>, slots: &[usize], n_factors: usize) -> CMat {
    let mut out = CMat::identity(1, 1);
    for k in 0..n_factors {
        let factor = if slots.contains(&k) {
            CMat::from_fn(2, 2, |i, j| op[(i, j)])
        } else {
            CMat::identity(2, 2)
        };
        out = kron(&out, &factor);
    }
    out
}

/// Full system Hamiltonian in rad/s on the 2^(n+1)-dimensional space.
pub fn build_hamiltonian(system: &SpinSystem) -> Result<CMat> {
    system.validate()?;
    let n = system.nuclei.len();
    let n_factors = n + 1;
    let dim = system.dim();
    let mut h_hz = CMat::zeros(dim, dim);

    let half = C64::new(0.5, 0.0);
    let ix = |slot| embed(&pauli_x(), slot, n_factors) * half;
    let iy = |slot| embed(&pauli_y(), slot, n_factors) * half;
    let iz = |slot| embed(&pauli_z(), slot, n_factors) * half;
    let sz = embed(&electron_sz(), 0, n_factors);

    for (i, spin) in system.nuclei.iter().enumerate() {
        let slot = i + 1;
        // Nuclear Zeeman with per-nucleus gradient shift (z in the NV frame).
        let f = larmor_frequency(&spin.species, system.field_magnitude)?
            + spin.species.gyromagnetic_ratio * system.gradient * spin.position.z;
        h_hz += iz(slot) * C64::new(f, 0.0);

        // Electron-secular hyperfine, tensors rotated into the field frame.
        let a = system.to_field_frame(&spin.hyperfine.components);
        let coupling = ix(slot) * C64::new(a[(2, 0)], 0.0)
            + iy(slot) * C64::new(a[(2, 1)], 0.0)
            + iz(slot) * C64::new(a[(2, 2)], 0.0);
        h_hz += &sz * coupling;
    }

    for ((i, j), tensor) in &system.pair_couplings {
        let jt = system.to_field_frame(&tensor.components);
        let ops_i = [ix(i + 1), iy(i + 1), iz(i + 1)];
        let ops_j = [ix(j + 1), iy(j + 1), iz(j + 1)];
        for a in 0..3 {
            for b in 0..3 {
                if jt[(a, b)] != 0.0 {
                    h_hz += &ops_i[a] * &ops_j[b] * C64::new(jt[(a, b)], 0.0);
                }
            }
        }
    }

    Ok(h_hz * C64::new(std::f64::consts::TAU, 0.0))
}

/// ⟨σ_x⟩ of the electron sensor qubit.
pub fn electron_sigma_x(n_nuclei: usize) -> CMat {
    embed(&pauli_x(), 0, n_nuclei + 1)
}

pub fn hermiticity_defect(m: &CMat) -> f64 {
    let adj = m.adjoint();
    (m - adj).iter().map(|c| c.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::SpinSpecies;
    use crate::system::NuclearSpin;
    use crate::tensor::HyperfineTensor;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    fn eigvals(h: &CMat) -> Vec<f64> {
        let mut ev: Vec<f64> = h
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }

    fn single_c13(a_par: f64, a_perp: f64) -> SpinSystem {
        let spin = NuclearSpin::with_tensor(
            SpinSpecies::c13(),
            Vector3::new(0.0, 0.0, 1e-9),
            HyperfineTensor::from_secular(a_par, a_perp),
            0,
        )
        .unwrap();
        SpinSystem::new(0.18, vec![spin]).unwrap()
    }

    #[test]
    fn free_nucleus_eigenvalues() {
        // n=1, A=0: eigenvalues ±ω_L/2 (rad/s), each doubly degenerate.
        let sys = single_c13(0.0, 0.0);
        let h = build_hamiltonian(&sys).unwrap();
        let wl = 1.9275120e6 * std::f64::consts::TAU;
        let ev = eigvals(&h);
        assert_relative_eq!(ev[0], -wl / 2.0, max_relative = 1e-10);
        assert_relative_eq!(ev[1], -wl / 2.0, max_relative = 1e-10);
        assert_relative_eq!(ev[2], wl / 2.0, max_relative = 1e-10);
        assert_relative_eq!(ev[3], wl / 2.0, max_relative = 1e-10);
    }

    #[test]
    fn conditional_precession_frequencies() {
        // Exact nuclear transition frequency in each electron manifold:
        // m_s=0 gives ω_L, m_s=−1 gives √((ω_L−A∥)² + A⊥²) ≈ ω_L − A∥.
        let a_par = -60e3;
        let a_perp = 30e3;
        let wl = 1.9275120e6;
        let sys = single_c13(a_par, a_perp);
        let h = build_hamiltonian(&sys).unwrap();
        let ev = eigvals(&h);
        // block-diagonal in the electron label; collect all gaps and check
        // the two expected transitions appear
        let f_expected = ((wl - a_par).powi(2) + a_perp.powi(2)).sqrt();
        let gaps: Vec<f64> = (0..4)
            .flat_map(|i| ((i + 1)..4).map(move |j| (i, j)))
            .map(|(i, j)| (ev[j] - ev[i]) / std::f64::consts::TAU)
            .collect();
        let close = |target: f64| gaps.iter().any(|g| (g - target).abs() < 1e-3);
        assert!(close(wl), "missing ω_L transition: {gaps:?}");
        assert!(close(f_expected), "missing m_s=−1 transition: {gaps:?}");
        // second-order perturbation bound
        assert!((f_expected - (wl - a_par)).abs() <= a_perp.powi(2) / wl);
    }

    #[test]
    fn hermitian_construction() {
        let sys = single_c13(-60e3, 30e3);
        let h = build_hamiltonian(&sys).unwrap();
        let scale = h.iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(hermiticity_defect(&h) < 1e-12 * scale);
    }
}
