//! Diamond-lattice site enumeration and χ² search for the nuclear pair that
//! reproduces measured couplings, with hypotheses grouped into C₃ᵥ symmetry
//! classes about the NV axis.
//!
//! Sites are enumerated in crystal coordinates (units of a/4, so every site
//! is an integer triple) and rotated into the NV frame with z ∥ [111]. The
//! C₃ᵥ group about [111] acts on crystal coordinates as the six coordinate
//! permutations, which map lattice sites to lattice sites exactly.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::constants::{SpinSpecies, DIAMOND_LATTICE_CONSTANT};
use crate::error::{Error, Result};
use crate::par::map_indexed;
use crate::tensor::{dipolar_strength, POINT_DIPOLE_FLOOR};

/// One lattice site: integer crystal coordinates in units of a/4, plus the
/// NV-frame position in meters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatticeSite {
    pub coords: [i32; 3],
    pub position: [f64; 3],
}

/// Rotation from crystal axes to the NV frame ([111] -> z).
pub fn crystal_to_nv() -> Matrix3<f64> {
    let x = Vector3::new(1.0, 1.0, -2.0) / 6.0f64.sqrt();
    let y = Vector3::new(-1.0, 1.0, 0.0) / 2.0f64.sqrt();
    let z = Vector3::new(1.0, 1.0, 1.0) / 3.0f64.sqrt();
    Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()])
}

/// All diamond sites with 0.5 Å < |r| <= radius (vacancy at the origin).
pub fn enumerate_sites(radius: f64) -> Result<Vec<LatticeSite>> {
    if radius > 3e-9 {
        return Err(Error::InvalidInput("lattice radius capped at 3 nm".into()));
    }
    let a = DIAMOND_LATTICE_CONSTANT;
    let quarter = a / 4.0;
    let rot = crystal_to_nv();
    // fcc offsets and the two-atom basis, in units of a/4
    let fcc = [[0, 0, 0], [0, 2, 2], [2, 0, 2], [2, 2, 0]];
    let basis = [[0, 0, 0], [1, 1, 1]];
    let n_cells = (radius / a).ceil() as i32 + 1;
    let mut sites = Vec::new();
    for i in -n_cells..=n_cells {
        for j in -n_cells..=n_cells {
            for k in -n_cells..=n_cells {
                for f in &fcc {
                    for b in &basis {
                        let c = [
                            4 * i + f[0] + b[0],
                            4 * j + f[1] + b[1],
                            4 * k + f[2] + b[2],
                        ];
                        let p_cryst = Vector3::new(
                            c[0] as f64 * quarter,
                            c[1] as f64 * quarter,
                            c[2] as f64 * quarter,
                        );
                        let r = p_cryst.norm();
                        if r > radius || r < 0.5e-10 {
                            continue;
                        }
                        let p = rot * p_cryst;
                        sites.push(LatticeSite { coords: c, position: [p.x, p.y, p.z] });
                    }
                }
            }
        }
    }
    sites.sort_by_key(|s| s.coords);
    Ok(sites)
}

/// The six C₃ᵥ operations about [111] as coordinate permutations.
const C3V_PERMS: [[usize; 3]; 6] = [
    [0, 1, 2], // identity
    [1, 2, 0], // rotation +120°
    [2, 0, 1], // rotation −120°
    [1, 0, 2], // mirror x<->y
    [0, 2, 1], // mirror y<->z
    [2, 1, 0], // mirror x<->z
];

fn apply_perm(p: &[usize; 3], c: &[i32; 3]) -> [i32; 3] {
    [c[p[0]], c[p[1]], c[p[2]]]
}

/// Canonical key of a site pair under the observational symmetry group:
/// the six C₃ᵥ operations about [111], optionally composed with inversion
/// through the vacancy. A∥ and J_zz are even in position, so an inverted
/// pair (when it exists on the lattice) predicts identical couplings and
/// must land in the same class. The key is the lexicographic minimum of the
/// sorted pair over the twelve operations.
pub fn symmetry_class_key(c1: &[i32; 3], c2: &[i32; 3]) -> ([i32; 3], [i32; 3]) {
    C3V_PERMS
        .iter()
        .flat_map(|p| {
            [1i32, -1].map(|s| {
                let pa = apply_perm(p, c1);
                let pb = apply_perm(p, c2);
                let a = [s * pa[0], s * pa[1], s * pa[2]];
                let b = [s * pb[0], s * pb[1], s * pb[2]];
                if a <= b { (a, b) } else { (b, a) }
            })
        })
        .min()
        .unwrap()
}

/// Measured inputs of the lattice search: two A∥ values and one J_zz, each
/// with a 1σ uncertainty (Hz).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasuredCouplings {
    pub a_parallel: [(f64, f64); 2],
    pub j_zz: (f64, f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatticeSearchParams {
    /// Enumeration radius, meters (<= 3 nm).
    pub radius: f64,
    /// Polar angle of the external field in the NV frame, radians.
    pub field_polar_angle: f64,
    /// χ² ceiling relative to the best class; classes above it are dropped.
    pub max_chi2_above_best: f64,
    /// Cap on returned classes.
    pub max_results: usize,
}

impl Default for LatticeSearchParams {
    fn default() -> Self {
        Self {
            radius: 1.5e-9,
            field_polar_angle: 0.0,
            max_chi2_above_best: 100.0,
            max_results: 64,
        }
    }
}

/// One candidate nuclear pair (or its symmetry class representative).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructureHypothesis {
    /// Crystal coordinates (units a/4) of the two sites.
    pub sites: [[i32; 3]; 2],
    /// NV-frame positions, meters.
    pub positions: [[f64; 3]; 2],
    /// Predicted (A₁∥, A₂∥, J_zz), Hz, in the best assignment order.
    pub predicted: [f64; 3],
    pub residual: f64,
    /// Canonical C₃ᵥ class key rendered as text.
    pub symmetry_class: String,
    /// Number of distinct pairs in the class orbit.
    pub class_size: usize,
}

fn angular_zz(e: Vector3<f64>, field: Vector3<f64>) -> f64 {
    1.0 - 3.0 * e.dot(&field).powi(2)
}

/// Exhaustive pair search over lattice sites within `params.radius`:
/// predicts A∥ (point-dipole) and J_zz (dipolar) for every candidate pair,
/// scores χ² against the measurements and returns symmetry classes sorted
/// by residual (ties broken by lexicographic site index).
pub fn lattice_search(
    measured: &MeasuredCouplings,
    species: &SpinSpecies,
    params: &LatticeSearchParams,
) -> Result<Vec<StructureHypothesis>> {
    let sites = enumerate_sites(params.radius)?;
    if sites.len() > 100_000 {
        return Err(Error::InvalidInput(format!(
            "site-count guard: {} sites exceed 100000",
            sites.len()
        )));
    }
    let gamma_e = SpinSpecies::electron().gyromagnetic_ratio;
    let field = Vector3::new(
        params.field_polar_angle.sin(),
        0.0,
        params.field_polar_angle.cos(),
    );
    // per-site hyperfine prediction; sites inside the point-dipole floor are
    // unusable and dropped
    let usable: Vec<(usize, f64)> = sites
        .iter()
        .enumerate()
        .filter_map(|(idx, s)| {
            let p = Vector3::new(s.position[0], s.position[1], s.position[2]);
            let r = p.norm();
            if r < POINT_DIPOLE_FLOOR {
                return None;
            }
            let d_en = dipolar_strength(gamma_e, species.gyromagnetic_ratio, r);
            Some((idx, d_en * angular_zz(p / r, field)))
        })
        .collect();

    let n = usable.len();
    let n_pairs = n * (n - 1) / 2;
    let (a1m, sa1) = measured.a_parallel[0];
    let (a2m, sa2) = measured.a_parallel[1];
    let (jm, sj) = measured.j_zz;

    // score all pairs in parallel, keyed by flat pair index
    let scored: Vec<(f64, usize, usize, [f64; 3])> = map_indexed(n_pairs, |flat| {
        // unrank the (u, v) pair, u < v
        let mut u = 0usize;
        let mut rem = flat;
        let mut row = n - 1;
        while rem >= row {
            rem -= row;
            u += 1;
            row -= 1;
        }
        let v = u + 1 + rem;
        let (i, a1p) = usable[u];
        let (j, a2p) = usable[v];
        let pi = Vector3::from_column_slice(&sites[i].position);
        let pj = Vector3::from_column_slice(&sites[j].position);
        let sep = pj - pi;
        let r = sep.norm();
        let jp = if r < 1e-13 {
            f64::INFINITY
        } else {
            dipolar_strength(species.gyromagnetic_ratio, species.gyromagnetic_ratio, r)
                * angular_zz(sep / r, field)
        };
        // line splittings measure |J_zz| only, so compare magnitudes
        let chi_j = ((jp.abs() - jm.abs()) / sj).powi(2);
        let fwd = ((a1p - a1m) / sa1).powi(2) + ((a2p - a2m) / sa2).powi(2);
        let rev = ((a2p - a1m) / sa1).powi(2) + ((a1p - a2m) / sa2).powi(2);
        if fwd <= rev {
            (fwd + chi_j, i, j, [a1p, a2p, jp])
        } else {
            (rev + chi_j, j, i, [a2p, a1p, jp])
        }
    });

    let best = scored
        .iter()
        .map(|s| s.0)
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Err(Error::EmptyLatticeResult { best_residual: best });
    }

    // aggregate into symmetry classes
    use std::collections::HashMap;
    // class key -> (chi2, site i, site j, predicted couplings, orbit size)
    type ClassEntry = (f64, usize, usize, [f64; 3], usize);
    let mut classes: HashMap<([i32; 3], [i32; 3]), ClassEntry> = HashMap::new();
    for (chi2, i, j, pred) in scored {
        if chi2 > best + params.max_chi2_above_best {
            continue;
        }
        let key = symmetry_class_key(&sites[i].coords, &sites[j].coords);
        let entry = classes.entry(key).or_insert((f64::INFINITY, i, j, pred, 0));
        entry.4 += 1;
        // deterministic representative: lowest residual, then lowest site key
        let cand_key = (sites[i].coords, sites[j].coords);
        let cur_key = (sites[entry.1].coords, sites[entry.2].coords);
        if chi2 < entry.0 - 1e-12 || ((chi2 - entry.0).abs() <= 1e-12 && cand_key < cur_key) {
            entry.0 = chi2;
            entry.1 = i;
            entry.2 = j;
            entry.3 = pred;
        }
    }

    let mut out: Vec<StructureHypothesis> = classes
        .into_iter()
        .map(|(key, (chi2, i, j, pred, size))| StructureHypothesis {
            sites: [sites[i].coords, sites[j].coords],
            positions: [sites[i].position, sites[j].position],
            predicted: pred,
            residual: chi2,
            symmetry_class: format!("{:?}|{:?}", key.0, key.1),
            class_size: size,
        })
        .collect();
    out.sort_by(|a, b| {
        a.residual
            .partial_cmp(&b.residual)
            .unwrap()
            .then(a.sites.cmp(&b.sites))
    });
    out.truncate(params.max_results);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn nearest_neighbor_distance() {
        let sites = enumerate_sites(0.5e-9).unwrap();
        let mut min = f64::INFINITY;
        let p0 = Vector3::new(0.0, 0.0, 0.0);
        for s in &sites {
            let d = (Vector3::from_column_slice(&s.position) - p0).norm();
            min = min.min(d);
        }
        // nearest neighbor at a·√3/4 = 1.5446 Å
        assert_relative_eq!(min, DIAMOND_LATTICE_CONSTANT * 3.0f64.sqrt() / 4.0, max_relative = 1e-12);
    }

    #[test]
    fn rotation_is_orthonormal_and_maps_111_to_z() {
        let r = crystal_to_nv();
        assert_relative_eq!((r * r.transpose()), Matrix3::identity(), epsilon = 1e-12);
        let z = r * Vector3::new(1.0, 1.0, 1.0).normalize();
        assert_relative_eq!(z, Vector3::z(), epsilon = 1e-12);
        assert_relative_eq!(r.determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn class_key_invariant_under_ops() {
        let c1 = [3, -1, 2];
        let c2 = [0, 4, -2];
        let base = symmetry_class_key(&c1, &c2);
        for p in &C3V_PERMS {
            let k = symmetry_class_key(&apply_perm(p, &c1), &apply_perm(p, &c2));
            assert_eq!(k, base);
        }
        // and under swapping the pair
        assert_eq!(symmetry_class_key(&c2, &c1), base);
    }

    #[test]
    fn c3v_ops_preserve_nv_frame_z_and_radius() {
        let rot = crystal_to_nv();
        let c = Vector3::new(3.0, -1.0, 2.0);
        let p = rot * c;
        for perm in &C3V_PERMS {
            let cp = Vector3::new(c[perm[0]], c[perm[1]], c[perm[2]]);
            let pp = rot * cp;
            assert_relative_eq!(pp.z, p.z, epsilon = 1e-12);
            assert_relative_eq!(pp.norm(), p.norm(), epsilon = 1e-12);
        }
    }

    #[test]
    fn radius_guard() {
        assert!(enumerate_sites(4e-9).is_err());
    }

    fn forward_measure(site1: &LatticeSite, site2: &LatticeSite, sigma: f64) -> MeasuredCouplings {
        let c13 = SpinSpecies::c13();
        let ge = SpinSpecies::electron().gyromagnetic_ratio;
        let z = Vector3::z();
        let a = |s: &LatticeSite| {
            let p = Vector3::from_column_slice(&s.position);
            dipolar_strength(ge, c13.gyromagnetic_ratio, p.norm()) * angular_zz(p / p.norm(), z)
        };
        let p1 = Vector3::from_column_slice(&site1.position);
        let p2 = Vector3::from_column_slice(&site2.position);
        let sep = p2 - p1;
        let j = dipolar_strength(c13.gyromagnetic_ratio, c13.gyromagnetic_ratio, sep.norm())
            * angular_zz(sep / sep.norm(), z);
        MeasuredCouplings {
            a_parallel: [(a(site1), sigma), (a(site2), sigma)],
            j_zz: (j, sigma.min(50.0)),
        }
    }

    #[test]
    fn generating_pair_ranks_first_noiseless() {
        let sites = enumerate_sites(1.2e-9).unwrap();
        // pick a nearest-neighbor pair ~0.9 nm out
        let i = sites
            .iter()
            .position(|s| {
                let r = Vector3::from_column_slice(&s.position).norm();
                (0.85e-9..0.95e-9).contains(&r)
            })
            .unwrap();
        let j = sites
            .iter()
            .position(|s| {
                let d = Vector3::from_column_slice(&s.position)
                    - Vector3::from_column_slice(&sites[i].position);
                (d.norm() - 1.5445e-10).abs() < 1e-12 && s.coords != sites[i].coords
            })
            .unwrap();
        let measured = forward_measure(&sites[i], &sites[j], 100.0);
        let hyps = lattice_search(
            &measured,
            &SpinSpecies::c13(),
            &LatticeSearchParams { radius: 1.2e-9, ..Default::default() },
        )
        .unwrap();
        assert!(!hyps.is_empty());
        let expect_key = symmetry_class_key(&sites[i].coords, &sites[j].coords);
        let got_key = symmetry_class_key(&hyps[0].sites[0], &hyps[0].sites[1]);
        assert_eq!(got_key, expect_key, "top class is not the generator");
        assert!(hyps[0].residual < 1e-12);
    }

    #[test]
    fn inflated_sigma_surfaces_degeneracy() {
        let sites = enumerate_sites(1.0e-9).unwrap();
        let i = sites
            .iter()
            .position(|s| Vector3::from_column_slice(&s.position).norm() > 0.8e-9)
            .unwrap();
        let j = (0..sites.len())
            .find(|&k| {
                k != i
                    && (Vector3::from_column_slice(&sites[k].position)
                        - Vector3::from_column_slice(&sites[i].position))
                    .norm()
                        < 2e-10
            })
            .unwrap();
        let mut measured = forward_measure(&sites[i], &sites[j], 100.0);
        for a in &mut measured.a_parallel {
            a.1 *= 100.0;
        }
        measured.j_zz.1 *= 100.0;
        let hyps = lattice_search(
            &measured,
            &SpinSpecies::c13(),
            &LatticeSearchParams { radius: 1.0e-9, ..Default::default() },
        )
        .unwrap();
        let ties = hyps.iter().filter(|h| h.residual < hyps[0].residual + 1.0).count();
        assert!(ties > 1, "expected surfaced degeneracy, got {ties} tie(s)");
    }
}
