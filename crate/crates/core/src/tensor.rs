//! Coupling tensors: electron-nuclear hyperfine and nuclear-nuclear dipolar.
//!
//! Both are built in the point-dipole form
//!     T_ij = d (δ_ij − 3 e_i e_j),   d = (μ₀/4π) h γ₁ γ₂ / r³   [Hz]
//! with e the unit separation vector. Explicit tensors can be supplied
//! instead wherever the point-dipole model is not valid.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::constants::{SpinSpecies, MU0_OVER_4PI, PLANCK_H};
use crate::error::{Error, Result};

/// Minimum NV-nucleus distance for the point-dipole hyperfine model.
pub const POINT_DIPOLE_FLOOR: f64 = 3e-10;

/// Electron-nuclear hyperfine tensor in the NV frame, Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperfineTensor {
    pub components: Matrix3<f64>,
}

impl HyperfineTensor {
    pub fn new(components: Matrix3<f64>) -> Result<Self> {
        check_symmetric(&components, 1e-9)?;
        Ok(Self { components })
    }

    /// Secular (zz) component, A∥.
    pub fn a_parallel(&self) -> f64 {
        self.components[(2, 2)]
    }

    /// Magnitude of the transverse secular row, A⊥ = |(A_zx, A_zy)|.
    pub fn a_perp(&self) -> f64 {
        self.components[(2, 0)].hypot(self.components[(2, 1)])
    }

    /// Convenience constructor from secular components only: A_zz = a_par,
    /// A_zx = a_perp, all other entries zero except the symmetric images.
    pub fn from_secular(a_par: f64, a_perp: f64) -> Self {
        let mut m = Matrix3::zeros();
        m[(2, 2)] = a_par;
        m[(2, 0)] = a_perp;
        m[(0, 2)] = a_perp;
        Self { components: m }
    }
}

/// Nuclear-nuclear dipolar tensor, Hz. Symmetric and traceless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipolarTensor {
    pub components: Matrix3<f64>,
}

impl DipolarTensor {
    pub fn new(components: Matrix3<f64>) -> Result<Self> {
        check_symmetric(&components, 1e-9)?;
        let scale = components.amax().max(f64::MIN_POSITIVE);
        let trace = components.trace();
        if trace.abs() > 1e-6 * scale {
            return Err(Error::InvalidInput(format!(
                "dipolar tensor trace {trace:.3e} exceeds 1e-6 of max component"
            )));
        }
        Ok(Self { components })
    }

    pub fn zero() -> Self {
        Self { components: Matrix3::zeros() }
    }

    /// Secular component J_zz.
    pub fn j_zz(&self) -> f64 {
        self.components[(2, 2)]
    }
}

fn check_symmetric(m: &Matrix3<f64>, rel_tol: f64) -> Result<()> {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    for i in 0..3 {
        for j in (i + 1)..3 {
            if (m[(i, j)] - m[(j, i)]).abs() > rel_tol * scale {
                return Err(Error::InvalidInput(format!(
                    "tensor not symmetric at ({i},{j})"
                )));
            }
        }
    }
    Ok(())
}

/// Point-dipole coupling strength d = (μ₀/4π) h γ₁ γ₂ / r³, Hz (signed).
pub fn dipolar_strength(gamma1: f64, gamma2: f64, r: f64) -> f64 {
    MU0_OVER_4PI * PLANCK_H * gamma1 * gamma2 / (r * r * r)
}

fn point_dipole_matrix(d: f64, e: Vector3<f64>) -> Matrix3<f64> {
    let mut m = Matrix3::identity() * d;
    m -= 3.0 * d * e * e.transpose();
    m
}

/// Dipolar tensor between two nuclei from their positions (meters, NV frame).
pub fn dipolar_tensor_from_positions(
    p1: Vector3<f64>,
    p2: Vector3<f64>,
    s1: &SpinSpecies,
    s2: &SpinSpecies,
) -> Result<DipolarTensor> {
    let sep = p2 - p1;
    let r = sep.norm();
    if r < 1e-13 {
        return Err(Error::DegenerateGeometry(
            "coincident nuclear positions".into(),
        ));
    }
    let d = dipolar_strength(s1.gyromagnetic_ratio, s2.gyromagnetic_ratio, r);
    DipolarTensor::new(point_dipole_matrix(d, sep / r))
}

/// Electron-nuclear hyperfine tensor in the point-dipole model. The NV sits
/// at the origin; valid only for |r| ≥ 3 Å.
pub fn hyperfine_point_dipole(
    nuc_position: Vector3<f64>,
    species: &SpinSpecies,
) -> Result<HyperfineTensor> {
    let r = nuc_position.norm();
    if r < POINT_DIPOLE_FLOOR {
        return Err(Error::ModelValidity {
            r_angstrom: r * 1e10,
            floor_angstrom: POINT_DIPOLE_FLOOR * 1e10,
        });
    }
    let d = dipolar_strength(
        SpinSpecies::electron().gyromagnetic_ratio,
        species.gyromagnetic_ratio,
        r,
    );
    HyperfineTensor::new(point_dipole_matrix(d, nuc_position / r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Independent oracle: evaluate the dipole formula component-wise from
    /// raw constants, without going through point_dipole_matrix.
    fn dipole_oracle(gamma1: f64, gamma2: f64, p1: [f64; 3], p2: [f64; 3]) -> [[f64; 3]; 3] {
        let sep = [p2[0] - p1[0], p2[1] - p1[1], p2[2] - p1[2]];
        let r = (sep[0] * sep[0] + sep[1] * sep[1] + sep[2] * sep[2]).sqrt();
        let d = 1e-7 * 6.62607015e-34 * gamma1 * gamma2 / r.powi(3);
        let e = [sep[0] / r, sep[1] / r, sep[2] / r];
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let delta = if i == j { 1.0 } else { 0.0 };
                out[i][j] = d * (delta - 3.0 * e[i] * e[j]);
            }
        }
        out
    }

    #[test]
    fn c13_pair_along_z() {
        // d = (μ₀/4π) h γ² / r³ at r = 1.544 Å, frozen from the oracle.
        let c = SpinSpecies::c13();
        let t = dipolar_tensor_from_positions(
            Vector3::zeros(),
            Vector3::new(0.0, 0.0, 1.544e-10),
            &c,
            &c,
        )
        .unwrap();
        let d = 2064.2548431681635;
        assert_relative_eq!(t.j_zz(), -2.0 * d, max_relative = 1e-12);
        let oracle = dipole_oracle(c.gyromagnetic_ratio, c.gyromagnetic_ratio,
                                   [0.0; 3], [0.0, 0.0, 1.544e-10]);
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(t.components[(i, j)], oracle[i][j], epsilon = 1e-9 * d);
            }
        }
    }

    #[test]
    fn c13_pair_along_x() {
        let c = SpinSpecies::c13();
        let t = dipolar_tensor_from_positions(
            Vector3::zeros(),
            Vector3::new(1.544e-10, 0.0, 0.0),
            &c,
            &c,
        )
        .unwrap();
        assert_relative_eq!(t.j_zz(), 2064.2548431681635, max_relative = 1e-12);
    }

    #[test]
    fn magic_angle_kills_jzz() {
        let c = SpinSpecies::c13();
        let alpha = (1.0f64 / 3.0f64.sqrt()).acos();
        let p2 = Vector3::new(alpha.sin(), 0.0, alpha.cos()) * 2e-10;
        let t = dipolar_tensor_from_positions(Vector3::zeros(), p2, &c, &c).unwrap();
        let d = dipolar_strength(c.gyromagnetic_ratio, c.gyromagnetic_ratio, 2e-10);
        assert!(t.j_zz().abs() < 1e-9 * d.abs());
    }

    #[test]
    fn coincident_positions_rejected() {
        let c = SpinSpecies::c13();
        let p = Vector3::new(1e-10, 0.0, 0.0);
        assert!(dipolar_tensor_from_positions(p, p, &c, &c).is_err());
    }

    #[test]
    fn swap_symmetry() {
        let c = SpinSpecies::c13();
        let h = SpinSpecies::h1();
        let p1 = Vector3::new(1e-10, 2e-10, -3e-10);
        let p2 = Vector3::new(-2e-10, 1e-10, 4e-10);
        let a = dipolar_tensor_from_positions(p1, p2, &c, &h).unwrap();
        let b = dipolar_tensor_from_positions(p2, p1, &h, &c).unwrap();
        assert_relative_eq!(a.components, b.components, epsilon = 1e-20);
    }

    #[test]
    fn hyperfine_c13_at_1nm() {
        // |d_en| = (μ₀/4π) h γ_e γ_C / (1 nm)³ ≈ 19.885 kHz, frozen from the
        // oracle; along z the zz component is −2 d_en.
        let t = hyperfine_point_dipole(Vector3::new(0.0, 0.0, 1e-9), &SpinSpecies::c13())
            .unwrap();
        let d_en = 19884.993861486564;
        assert_relative_eq!(t.a_parallel(), -2.0 * d_en, max_relative = 1e-12);
        let oracle = dipole_oracle(28024.95e6, 10.7084e6, [0.0; 3], [0.0, 0.0, 1e-9]);
        assert_relative_eq!(t.a_parallel(), oracle[2][2], max_relative = 1e-12);
    }

    #[test]
    fn hyperfine_cube_scaling() {
        let t1 = hyperfine_point_dipole(Vector3::new(0.0, 0.0, 1e-9), &SpinSpecies::c13())
            .unwrap();
        let t2 = hyperfine_point_dipole(Vector3::new(0.0, 0.0, 2e-9), &SpinSpecies::c13())
            .unwrap();
        assert_relative_eq!(t2.a_parallel() * 8.0, t1.a_parallel(), max_relative = 1e-12);
    }

    #[test]
    fn hyperfine_magic_angle() {
        let alpha = (1.0f64 / 3.0f64.sqrt()).acos();
        let p = Vector3::new(alpha.sin(), 0.0, alpha.cos()) * 1e-9;
        let t = hyperfine_point_dipole(p, &SpinSpecies::c13()).unwrap();
        assert!(t.a_parallel().abs() < 1e-9 * 19885.0);
    }

    #[test]
    fn hyperfine_validity_floor() {
        let err = hyperfine_point_dipole(Vector3::new(0.0, 0.0, 2e-10), &SpinSpecies::c13());
        assert!(matches!(err, Err(Error::ModelValidity { .. })));
    }

    #[test]
    fn jzz_traceless_by_quadrature() {
        // ∫ (1 − 3cos²α) sinα dα dφ over the sphere vanishes.
        let c = SpinSpecies::c13();
        let d = dipolar_strength(c.gyromagnetic_ratio, c.gyromagnetic_ratio, 2e-10);
        let n = 2000;
        let mut integral = 0.0;
        for k in 0..n {
            let alpha = std::f64::consts::PI * (k as f64 + 0.5) / n as f64;
            let p = Vector3::new(alpha.sin(), 0.0, alpha.cos()) * 2e-10;
            let t = dipolar_tensor_from_positions(Vector3::zeros(), p, &c, &c).unwrap();
            integral += t.j_zz() * alpha.sin() * std::f64::consts::PI / n as f64;
        }
        assert!(integral.abs() < 1e-6 * d.abs(), "integral = {integral}");
    }
}
