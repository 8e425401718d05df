//! Distance-geometry reconstruction of small nuclear clusters: converts
//! measured dipolar couplings to distance constraints, finds a discretizable
//! vertex ordering, and enumerates consistent conformations by branch and
//! prune. Distance data fixes geometry only up to rigid motion and
//! reflection, so mirror pairs are collapsed and flagged.

pub mod align;

pub use align::{aligned_rmsd, superpose, Alignment};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::constants::SpinSpecies;
use crate::error::{Error, Result};
use crate::inversion::bond_length_from_dipolar;

/// Minimum constraint tolerance, meters (0.1 Å). Tighter windows than this
/// over-prune once numerical noise from the inversion chain is present.
pub const MIN_DISTANCE_TOLERANCE: f64 = 0.1e-10;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DistanceConstraint {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
    pub tolerance: f64,
}

/// A reconstructed set of positions, indexed like the input vertices.
#[derive(Debug, Clone)]
pub struct Conformation {
    pub positions: Vec<Vector3<f64>>,
    /// Set when the mirror image also satisfies the constraints and was
    /// merged into this representative.
    pub mirror_degenerate: bool,
}

/// Vertex pair with its measured dipolar strength and 1σ error, Hz.
pub type MeasuredCoupling = ((usize, usize), (f64, f64));

/// Convert dipolar strengths (Hz, with angular factors already removed) to
/// distance constraints via the r^-3 law. `species[v]` gives the species of
/// vertex v. Tolerances are the propagated 1σ distance errors, floored at
/// [`MIN_DISTANCE_TOLERANCE`].
pub fn couplings_to_distances(
    couplings: &[MeasuredCoupling],
    species: &[SpinSpecies],
) -> Result<Vec<DistanceConstraint>> {
    couplings
        .iter()
        .map(|&((i, j), (d, sigma))| {
            if i >= species.len() || j >= species.len() || i == j {
                return Err(Error::InvalidInput(format!("bad vertex pair ({i}, {j})")));
            }
            let (r, sigma_r) = bond_length_from_dipolar(d.abs(), sigma, &species[i], &species[j])?;
            Ok(DistanceConstraint {
                i,
                j,
                distance: r,
                tolerance: sigma_r.max(MIN_DISTANCE_TOLERANCE),
            })
        })
        .collect()
}

fn adjacency(n: usize, constraints: &[DistanceConstraint]) -> Result<Vec<Vec<usize>>> {
    let mut adj = vec![Vec::new(); n];
    for (k, c) in constraints.iter().enumerate() {
        if c.i >= n || c.j >= n || c.i == c.j {
            return Err(Error::InvalidInput(format!(
                "constraint {k} references vertices ({}, {}) outside 0..{n}",
                c.i, c.j
            )));
        }
        if c.distance <= 0.0 {
            return Err(Error::InvalidInput(format!("constraint {k} has non-positive distance")));
        }
        adj[c.i].push(c.j);
        adj[c.j].push(c.i);
    }
    Ok(adj)
}

/// Greedy discretizable ordering: pick a constrained triangle, then extend
/// with vertices holding >= 3 constraints to the placed set. Reports the
/// lowest-index unplaceable vertex on failure.
pub fn dmdgp_order(n: usize, constraints: &[DistanceConstraint]) -> Result<Vec<usize>> {
    if n < 3 {
        return Err(Error::InvalidInput(format!("need >= 3 vertices, got {n}")));
    }
    let adj = adjacency(n, constraints)?;
    let connected = |u: usize, v: usize| adj[u].contains(&v);

    // seed triangle: three mutually constrained vertices, lowest lex triple
    let mut seed = None;
    'outer: for a in 0..n {
        for &b in &adj[a] {
            if b <= a {
                continue;
            }
            for &c in &adj[b] {
                if c > b && connected(a, c) {
                    seed = Some([a, b, c]);
                    break 'outer;
                }
            }
        }
    }
    let Some(seed) = seed else {
        return Err(Error::InfeasibleOrdering { vertex: 0 });
    };

    let mut order: Vec<usize> = seed.to_vec();
    let mut placed = vec![false; n];
    for &v in &order {
        placed[v] = true;
    }
    while order.len() < n {
        let next = (0..n)
            .filter(|&v| !placed[v])
            .find(|&v| adj[v].iter().filter(|&&u| placed[u]).count() >= 3);
        match next {
            Some(v) => {
                placed[v] = true;
                order.push(v);
            }
            None => {
                let vertex = (0..n).find(|&v| !placed[v]).unwrap();
                return Err(Error::InfeasibleOrdering { vertex });
            }
        }
    }
    Ok(order)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchPruneParams {
    /// RMSD below which two conformations are the same solution, meters.
    pub dedup_rmsd: f64,
    /// Hard cap on enumerated leaves, guarding against loose tolerances.
    pub max_solutions: usize,
}

impl Default for BranchPruneParams {
    fn default() -> Self {
        Self { dedup_rmsd: 0.05e-10, max_solutions: 256 }
    }
}

struct Search<'a> {
    order: &'a [usize],
    // constraints indexed by the later-placed vertex
    incident: Vec<Vec<&'a DistanceConstraint>>,
    params: &'a BranchPruneParams,
}

fn constraint_between(
    cs: &[DistanceConstraint],
    u: usize,
    v: usize,
) -> Option<&DistanceConstraint> {
    cs.iter().find(|c| (c.i == u && c.j == v) || (c.i == v && c.j == u))
}

/// Intersection of three spheres centered at `base` with radii `r`. Returns
/// zero, one, or two points; `None` when the base triangle is too flat to
/// define a frame.
fn trilaterate(
    base: [Vector3<f64>; 3],
    r: [f64; 3],
    slack: f64,
) -> Option<Vec<Vector3<f64>>> {
    let ex_raw = base[1] - base[0];
    let d = ex_raw.norm();
    if d < 1e-15 {
        return None;
    }
    let ex = ex_raw / d;
    let to3 = base[2] - base[0];
    let i = ex.dot(&to3);
    let ey_raw = to3 - i * ex;
    let j = ey_raw.norm();
    // flatness guard: triangle height below a fraction of its extent means an
    // ill-conditioned frame
    if j < 1e-6 * d.max(to3.norm()) {
        return None;
    }
    let ey = ey_raw / j;
    let ez = ex.cross(&ey);
    let x = (r[0] * r[0] - r[1] * r[1] + d * d) / (2.0 * d);
    let y = (r[0] * r[0] - r[2] * r[2] + i * i + j * j - 2.0 * i * x) / (2.0 * j);
    let z2 = r[0] * r[0] - x * x - y * y;
    let lim = slack * (2.0 * r[0] + slack);
    if z2 < -lim {
        return Some(Vec::new());
    }
    let p0 = base[0] + x * ex + y * ey;
    // keep both out-of-plane branches even when z² is within the noise
    // band: collapsing to the plane would silently discard one of two
    // genuinely distinct embeddings
    let z = z2.max(0.0).sqrt();
    if z < 1e-14 {
        return Some(vec![p0]);
    }
    Some(vec![p0 + z * ez, p0 - z * ez])
}

/// Gauss-Newton polish of a trilaterated point against every placed
/// reference. Exact inputs are a fixed point; noisy inputs move to the
/// local least-squares position, which keeps pruning honest when distances
/// carry measurement error.
fn refine_position(start: Vector3<f64>, refs: &[(Vector3<f64>, f64, f64)]) -> Vector3<f64> {
    let mut p = start;
    for _ in 0..20 {
        let mut jtj = nalgebra::Matrix3::<f64>::zeros();
        let mut jtr = Vector3::zeros();
        for &(q, d, _) in refs {
            let diff = p - q;
            let n = diff.norm();
            if n < 1e-15 {
                continue;
            }
            let u = diff / n;
            let r = n - d;
            jtj += u * u.transpose();
            jtr += u * r;
        }
        // small Levenberg damping keeps near-coplanar reference sets stable
        jtj += nalgebra::Matrix3::identity() * 1e-9 * jtj.trace().max(1e-30);
        let Some(delta) = jtj.lu().solve(&jtr) else { break };
        p -= delta;
        if delta.norm() < 1e-14 {
            break;
        }
    }
    p
}

impl Search<'_> {
    /// All placed-vertex constraints hold at `pos` for the vertex at `step`.
    fn feasible(&self, positions: &[Option<Vector3<f64>>], step: usize, pos: Vector3<f64>) -> bool {
        let v = self.order[step];
        self.incident[v].iter().all(|c| {
            let other = if c.i == v { c.j } else { c.i };
            match positions[other] {
                Some(q) => ((pos - q).norm() - c.distance).abs() <= c.tolerance,
                None => true,
            }
        })
    }

    fn candidates(&self, positions: &[Option<Vector3<f64>>], step: usize) -> Vec<Vector3<f64>> {
        let v = self.order[step];
        let refs: Vec<(Vector3<f64>, f64, f64)> = self.incident[v]
            .iter()
            .filter_map(|c| {
                let other = if c.i == v { c.j } else { c.i };
                positions[other].map(|q| (q, c.distance, c.tolerance))
            })
            .collect();
        if refs.len() < 3 {
            return Vec::new();
        }
        // choose the reference triple spanning the largest triangle; fall
        // back through the ranking when the best is still too flat
        let mut triples: Vec<([usize; 3], f64)> = Vec::new();
        for a in 0..refs.len() {
            for b in a + 1..refs.len() {
                for c in b + 1..refs.len() {
                    let area =
                        (refs[b].0 - refs[a].0).cross(&(refs[c].0 - refs[a].0)).norm();
                    triples.push(([a, b, c], area));
                }
            }
        }
        triples.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap());
        for (idx, _) in triples {
            let base = [refs[idx[0]].0, refs[idx[1]].0, refs[idx[2]].0];
            let r = [refs[idx[0]].1, refs[idx[1]].1, refs[idx[2]].1];
            let slack = refs[idx[0]].2.max(refs[idx[1]].2).max(refs[idx[2]].2);
            if let Some(pts) = trilaterate(base, r, slack) {
                return pts
                    .into_iter()
                    .map(|p| refine_position(p, &refs))
                    .filter(|&p| self.feasible(positions, step, p))
                    .collect();
            }
        }
        Vec::new()
    }

    fn descend(
        &self,
        positions: Vec<Option<Vector3<f64>>>,
        step: usize,
        out: &mut Vec<Vec<Vector3<f64>>>,
    ) {
        if out.len() >= self.params.max_solutions {
            return;
        }
        if step == self.order.len() {
            out.push(positions.into_iter().map(|p| p.unwrap()).collect());
            return;
        }
        let cands = self.candidates(&positions, step);
        match cands.len() {
            0 => {}
            1 => {
                let mut next = positions;
                next[self.order[step]] = Some(cands[0]);
                self.descend(next, step + 1, out);
            }
            _ => {
                // two mirror branches; parallelize only the first split to
                // keep task granularity coarse
                let run = |pos: Vector3<f64>| {
                    let mut next = positions.clone();
                    next[self.order[step]] = Some(pos);
                    let mut local = Vec::new();
                    self.descend(next, step + 1, &mut local);
                    local
                };
                #[cfg(feature = "parallel")]
                let (a, b) = if step == 3 {
                    rayon::join(|| run(cands[0]), || run(cands[1]))
                } else {
                    (run(cands[0]), run(cands[1]))
                };
                #[cfg(not(feature = "parallel"))]
                let (a, b) = (run(cands[0]), run(cands[1]));
                out.extend(a);
                out.extend(b);
                out.truncate(self.params.max_solutions);
            }
        }
    }
}

/// Joint polish of a complete embedding: block-coordinate Gauss-Newton
/// sweeps against every constraint, then the gauge is re-canonicalized
/// (first ordered vertex at the origin, second on +x, third in the upper
/// xy half-plane). Embeddings that already satisfy the constraints exactly
/// are fixed points.
fn refine_embedding(
    pts: &mut [Vector3<f64>],
    constraints: &[DistanceConstraint],
    order: &[usize],
) {
    for _ in 0..40 {
        let mut shift = 0.0f64;
        for v in 0..pts.len() {
            let refs: Vec<(Vector3<f64>, f64, f64)> = constraints
                .iter()
                .filter_map(|c| {
                    if c.i == v {
                        Some((pts[c.j], c.distance, c.tolerance))
                    } else if c.j == v {
                        Some((pts[c.i], c.distance, c.tolerance))
                    } else {
                        None
                    }
                })
                .collect();
            if refs.len() < 3 {
                continue;
            }
            let updated = refine_position(pts[v], &refs);
            shift = shift.max((updated - pts[v]).norm());
            pts[v] = updated;
        }
        if shift < 1e-14 {
            break;
        }
    }
    // re-canonicalize the gauge
    let (v0, v1, v2) = (order[0], order[1], order[2]);
    let origin = pts[v0];
    let ex_raw = pts[v1] - origin;
    let ex = ex_raw / ex_raw.norm();
    let to2 = pts[v2] - origin;
    let ey_raw = to2 - to2.dot(&ex) * ex;
    if ey_raw.norm() < 1e-15 {
        return;
    }
    let ey = ey_raw / ey_raw.norm();
    let ez = ex.cross(&ey);
    for p in pts.iter_mut() {
        let d = *p - origin;
        *p = Vector3::new(d.dot(&ex), d.dot(&ey), d.dot(&ez));
    }
}

/// Enumerate conformations consistent with the constraints, up to rigid
/// motion. The first three ordered vertices are placed canonically (origin,
/// +x axis, xy half-plane). Mirror-image duplicates are merged and flagged.
pub fn branch_and_prune(
    n: usize,
    constraints: &[DistanceConstraint],
    params: &BranchPruneParams,
) -> Result<Vec<Conformation>> {
    let order = dmdgp_order(n, constraints)?;
    let (v0, v1, v2) = (order[0], order[1], order[2]);
    let d01 = constraint_between(constraints, v0, v1).unwrap().distance;
    let d02 = constraint_between(constraints, v0, v2).unwrap().distance;
    let d12 = constraint_between(constraints, v1, v2).unwrap().distance;
    // triangle inequality check before the canonical embedding
    if d01 + d02 <= d12 || d01 + d12 <= d02 || d02 + d12 <= d01 {
        return Err(Error::DegenerateGeometry(format!(
            "seed triangle violates the triangle inequality: {d01:.3e}, {d02:.3e}, {d12:.3e}"
        )));
    }
    let x2 = (d01 * d01 + d02 * d02 - d12 * d12) / (2.0 * d01);
    let y2sq = d02 * d02 - x2 * x2;
    if y2sq <= 0.0 {
        return Err(Error::DegenerateGeometry("collinear seed triangle".into()));
    }

    let mut incident: Vec<Vec<&DistanceConstraint>> = vec![Vec::new(); n];
    for c in constraints {
        incident[c.i].push(c);
        incident[c.j].push(c);
    }
    let search = Search { order: &order, incident, params };

    let mut positions: Vec<Option<Vector3<f64>>> = vec![None; n];
    positions[v0] = Some(Vector3::zeros());
    positions[v1] = Some(Vector3::new(d01, 0.0, 0.0));
    positions[v2] = Some(Vector3::new(x2, y2sq.sqrt(), 0.0));

    let mut raw = Vec::new();
    search.descend(positions, 3, &mut raw);
    if raw.is_empty() {
        return Err(Error::NoSolution);
    }
    for pts in &mut raw {
        refine_embedding(pts, constraints, &order);
    }

    // merge rigid duplicates; a match that needs a reflection marks the
    // representative as mirror-degenerate
    let mut merged: Vec<Conformation> = Vec::new();
    for pts in raw {
        let mut absorbed = false;
        for m in &mut merged {
            let al = superpose(&m.positions, &pts, true)?;
            if al.rmsd <= params.dedup_rmsd {
                m.mirror_degenerate |= al.reflected;
                absorbed = true;
                break;
            }
        }
        if !absorbed {
            merged.push(Conformation { positions: pts, mirror_degenerate: false });
        }
    }
    Ok(merged)
}
