//! Rigid superposition of point sets (Kabsch) and RMSD, with explicit
//! handling of the mirror ambiguity: distance data cannot distinguish a
//! structure from its reflection, so alignment optionally reports whether the
//! best fit required an improper rotation.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Result of superposing `moved` onto `target`.
#[derive(Debug, Clone)]
pub struct Alignment {
    pub rmsd: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    /// True when the optimal superposition is a reflection.
    pub reflected: bool,
}

fn centroid(pts: &[Vector3<f64>]) -> Vector3<f64> {
    pts.iter().sum::<Vector3<f64>>() / pts.len() as f64
}

fn kabsch_rotation(a: &[Vector3<f64>], b: &[Vector3<f64>], allow_reflection: bool) -> (Matrix3<f64>, bool) {
    // cross-covariance of centered sets: H = Σ aᵢ bᵢᵀ
    let mut h = Matrix3::zeros();
    for (p, q) in a.iter().zip(b) {
        h += p * q.transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let d = (vt.transpose() * u.transpose()).determinant();
    let mut s = Matrix3::identity();
    let mut reflected = false;
    if d < 0.0 {
        if allow_reflection {
            reflected = true;
        } else {
            s[(2, 2)] = -1.0;
        }
    }
    (vt.transpose() * s * u.transpose(), reflected)
}

/// Superpose `moved` onto `target` (same length, >= 1 point). When
/// `allow_reflection` is set the improper branch is taken if it fits better
/// and flagged in the result; otherwise the rotation is forced proper.
pub fn superpose(
    target: &[Vector3<f64>],
    moved: &[Vector3<f64>],
    allow_reflection: bool,
) -> Result<Alignment> {
    if target.len() != moved.len() {
        return Err(Error::DimensionMismatch { expected: target.len(), got: moved.len() });
    }
    if target.is_empty() {
        return Err(Error::InvalidInput("cannot superpose empty point sets".into()));
    }
    let ct = centroid(target);
    let cm = centroid(moved);
    let a: Vec<_> = moved.iter().map(|p| p - cm).collect();
    let b: Vec<_> = target.iter().map(|p| p - ct).collect();
    let (rot, reflected) = kabsch_rotation(&a, &b, allow_reflection);
    let mut ss = 0.0;
    for (p, q) in a.iter().zip(&b) {
        ss += (rot * p - q).norm_squared();
    }
    Ok(Alignment {
        rmsd: (ss / target.len() as f64).sqrt(),
        rotation: rot,
        translation: ct - rot * cm,
        reflected,
    })
}

/// RMSD after optimal superposition, minimized over both chirality branches.
pub fn aligned_rmsd(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Result<f64> {
    Ok(superpose(a, b, true)?.rmsd)
}
