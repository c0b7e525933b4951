//! Steerable-kernel bases.
//!
//! A convolution from field type `rho_in` to `rho_out` is equivariant iff its
//! kernel satisfies `k(g u) = rho_out(g) k(u) rho_in(g)^-1` for all group
//! elements. This module produces orthonormal bases of that solution space
//! per (in rep, out rep, kernel size):
//!
//! * continuous groups: analytic circular harmonics per radial ring of the
//!   disk-masked grid, capped at the group's max frequency, orthonormalized
//!   with an SVD;
//! * finite groups at 1x1: exact numerical null space of the constraint
//!   stacked over all group elements;
//! * [`constraint_null_space`] exposes the raw sampled-constraint solver,
//!   which the tests use as an independent oracle for basis dimensions.

use crate::group::{rep_matrix, GroupElement, GroupKind, GroupSpec, RepKind, Representation};
use nalgebra::DMatrix;
use ndarray::Array2;
use std::collections::BTreeMap;
use std::sync::Mutex;

/// Flat kernel index: ((a * d_i + b) * k + ky) * k + kx.
pub fn kernel_flat_index(d_i: usize, k: usize, a: usize, b: usize, ky: usize, kx: usize) -> usize {
    ((a * d_i + b) * k + ky) * k + kx
}

/// Grid coordinates of kernel tap (ky, kx) in math convention (x right,
/// y up), centered.
pub fn tap_coords(k: usize, ky: usize, kx: usize) -> (f64, f64) {
    let c = (k as f64 - 1.0) / 2.0;
    (kx as f64 - c, c - ky as f64)
}

/// Disk mask radius for continuous-group kernels: corners whose samples
/// would rotate off the grid are pinned to zero.
pub fn disk_radius(k: usize) -> f64 {
    (k as f64 - 1.0) / 2.0 + 0.2
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum RepDesc {
    /// 1-dimensional with reflection parity +1 or -1.
    OneDim { parity: f64 },
    /// 2-dimensional rotation by `freq * theta`.
    TwoDim { freq: usize },
}

fn describe(rep: &Representation) -> Option<RepDesc> {
    Some(match &rep.kind {
        RepKind::Trivial | RepKind::Irrep(0) => RepDesc::OneDim { parity: 1.0 },
        RepKind::O2Irrep(0) => RepDesc::OneDim { parity: -1.0 },
        RepKind::Standard => RepDesc::TwoDim { freq: 1 },
        RepKind::Irrep(m) => RepDesc::TwoDim { freq: *m },
        RepKind::O2Irrep(k) => RepDesc::TwoDim { freq: *k },
        RepKind::Regular | RepKind::DirectSum(_) => return None,
    })
}

/// One candidate angular solution: a (d_o x d_i)-matrix-valued function of
/// the polar angle.
struct Angular {
    /// |angular frequency| of the candidate, used to skip degenerate rings.
    freq: usize,
    f: Box<dyn Fn(f64) -> Vec<f64>>, // row-major d_o x d_i entries
}

fn angular_candidates(
    group: GroupSpec,
    rep_in: &Representation,
    rep_out: &Representation,
    max_freq: usize,
) -> Option<Vec<Angular>> {
    let din = describe(rep_in)?;
    let dout = describe(rep_out)?;
    let reflective = group.has_reflections();
    let mut out: Vec<Angular> = Vec::new();
    match (din, dout) {
        (RepDesc::OneDim { parity: pi }, RepDesc::OneDim { parity: po }) => {
            if pi * po > 0.0 {
                out.push(Angular { freq: 0, f: Box::new(|_| vec![1.0]) });
            }
        }
        (RepDesc::OneDim { parity: pi }, RepDesc::TwoDim { freq: m }) => {
            if m <= max_freq {
                let mf = m as f64;
                if !reflective || pi > 0.0 {
                    out.push(Angular {
                        freq: m,
                        f: Box::new(move |p| vec![(mf * p).cos(), (mf * p).sin()]),
                    });
                }
                if !reflective || pi < 0.0 {
                    out.push(Angular {
                        freq: m,
                        f: Box::new(move |p| vec![-(mf * p).sin(), (mf * p).cos()]),
                    });
                }
            }
        }
        (RepDesc::TwoDim { freq: n }, RepDesc::OneDim { parity: po }) => {
            if n <= max_freq {
                let nf = n as f64;
                if !reflective || po > 0.0 {
                    out.push(Angular {
                        freq: n,
                        f: Box::new(move |p| vec![(nf * p).cos(), (nf * p).sin()]),
                    });
                }
                if !reflective || po < 0.0 {
                    out.push(Angular {
                        freq: n,
                        f: Box::new(move |p| vec![-(nf * p).sin(), (nf * p).cos()]),
                    });
                }
            }
        }
        (RepDesc::TwoDim { freq: n }, RepDesc::TwoDim { freq: m }) => {
            // entries row-major for [[a, b], [c, d]]:
            // psi1 = cos(mu p) I + sin(mu p) J, psi2 its quadrature,
            // psi3 = cos(nu p) F1 + sin(nu p) F2, psi4 its quadrature,
            // with mu = m - n, nu = m + n.
            let mu = m as isize - n as isize;
            let nu = m + n;
            if mu.unsigned_abs() <= max_freq {
                let muf = mu as f64;
                out.push(Angular {
                    freq: mu.unsigned_abs(),
                    f: Box::new(move |p| {
                        let (s, c) = (muf * p).sin_cos();
                        vec![c, -s, s, c]
                    }),
                });
                if !reflective {
                    out.push(Angular {
                        freq: mu.unsigned_abs(),
                        f: Box::new(move |p| {
                            let (s, c) = (muf * p).sin_cos();
                            vec![-s, -c, c, -s]
                        }),
                    });
                }
            }
            if nu <= max_freq {
                let nuf = nu as f64;
                out.push(Angular {
                    freq: nu,
                    f: Box::new(move |p| {
                        let (s, c) = (nuf * p).sin_cos();
                        vec![c, s, s, -c]
                    }),
                });
                if !reflective {
                    out.push(Angular {
                        freq: nu,
                        f: Box::new(move |p| {
                            let (s, c) = (nuf * p).sin_cos();
                            vec![-s, c, c, s]
                        }),
                    });
                }
            }
        }
    }
    Some(out)
}

/// Analytic steerable basis for continuous groups on a k x k grid,
/// shape (n_b, d_o * d_i * k * k). Returns `None` when the pair involves
/// representations without an analytic description (regular, direct sums).
pub fn steerable_basis_analytic(
    group: GroupSpec,
    rep_in: &Representation,
    rep_out: &Representation,
    k: usize,
) -> Option<Array2<f64>> {
    let max_freq = group.max_frequency.max(1);
    let cands = angular_candidates(group, rep_in, rep_out, max_freq)?;
    let d_i = rep_in.dimension();
    let d_o = rep_out.dimension();
    let n = d_o * d_i * k * k;
    let r_max = disk_radius(k);

    // ring centers live inside the disk; the Gaussian profiles themselves
    // are evaluated on the whole square so rotated boundary samples still
    // interpolate correctly near the corners
    let mut radii: Vec<f64> = Vec::new();
    let mut pts: Vec<(usize, usize, f64, f64)> = Vec::new(); // ky, kx, r, phi
    for ky in 0..k {
        for kx in 0..k {
            let (x, y) = tap_coords(k, ky, kx);
            let r = (x * x + y * y).sqrt();
            pts.push((ky, kx, r, y.atan2(x)));
            if r <= r_max && !radii.iter().any(|&q| (q - r).abs() < 1e-6) {
                radii.push(r);
            }
        }
    }
    radii.sort_by(f64::total_cmp);
    let sigma: f64 = std::env::var("BASIS_SIGMA").ok().and_then(|v| v.parse().ok()).unwrap_or(0.45);

    let mut vectors: Vec<Vec<f64>> = Vec::new();
    for &r_j in &radii {
        // bandlimit each ring: frequencies above ~2 r alias on the grid
        let ring_cap = if r_j < 1e-9 { 0 } else { (2.0 * r_j + 1e-6).floor() as usize };
        for cand in &cands {
            if cand.freq > ring_cap {
                continue;
            }
            let mut v = vec![0.0; n];
            let mut norm = 0.0;
            for &(ky, kx, r, phi) in &pts {
                let w = (-(r - r_j) * (r - r_j) / (2.0 * sigma * sigma)).exp();
                if cand.freq > 0 && r < 1e-9 {
                    continue; // non-constant harmonics vanish at the origin
                }
                let vals = (cand.f)(phi);
                for a in 0..d_o {
                    for b in 0..d_i {
                        let e = w * vals[a * d_i + b];
                        v[kernel_flat_index(d_i, k, a, b, ky, kx)] = e;
                        norm += e * e;
                    }
                }
            }
            if norm > 1e-12 {
                vectors.push(v);
            }
        }
    }
    Some(orthonormalize(vectors, n))
}

/// Orthonormalize a set of vectors, dropping near-dependent directions
/// (relative SVD threshold 1e-6).
fn orthonormalize(vectors: Vec<Vec<f64>>, n: usize) -> Array2<f64> {
    if vectors.is_empty() {
        return Array2::zeros((0, n));
    }
    let rows = vectors.len();
    let a = DMatrix::from_fn(rows, n, |i, j| vectors[i][j]);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let vt = svd.v_t.as_ref().unwrap();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > 1e-6 * smax.max(1e-300))
        .count();
    let mut out = Array2::zeros((rank, n));
    for i in 0..rank {
        for j in 0..n {
            out[[i, j]] = vt[(i, j)];
        }
    }
    out
}

/// Exact null space of the equivariance constraint stacked over the given
/// group elements (or angle samples for continuous groups), with bilinear
/// interpolation for off-grid rotated taps. Shape (n_b, d_o * d_i * k * k).
///
/// `mask_disk` pins taps outside [`disk_radius`] to zero (continuous-group
/// convention); finite quarter-turn groups keep the full square support.
pub fn constraint_null_space(
    samples: &[GroupElement],
    rep_in: &Representation,
    rep_out: &Representation,
    k: usize,
    mask_disk: bool,
    svd_tol: f64,
) -> Array2<f64> {
    let d_i = rep_in.dimension();
    let d_o = rep_out.dimension();
    let n = d_o * d_i * k * k;
    let r_max = disk_radius(k);
    let mut rows: Vec<Vec<f64>> = Vec::new();

    for &g in samples {
        let ro = rep_matrix(rep_out, g).expect("rep_out matrix");
        let ri_inv = rep_matrix(rep_in, g.inverse()).expect("rep_in matrix");
        for ky in 0..k {
            for kx in 0..k {
                let (x, y) = tap_coords(k, ky, kx);
                if mask_disk && (x * x + y * y).sqrt() > r_max {
                    continue;
                }
                // g . u in math coords
                let gu = crate::group::rotate_vec2(g, [x, y]);
                let taps = bilinear_taps(k, gu[0], gu[1]);
                for a in 0..d_o {
                    for b in 0..d_i {
                        let mut row = vec![0.0; n];
                        for &(tky, tkx, w) in &taps {
                            row[kernel_flat_index(d_i, k, a, b, tky, tkx)] += w;
                        }
                        for ap in 0..d_o {
                            for bp in 0..d_i {
                                row[kernel_flat_index(d_i, k, ap, bp, ky, kx)] -=
                                    ro[[a, ap]] * ri_inv[[bp, b]];
                            }
                        }
                        rows.push(row);
                    }
                }
            }
        }
    }
    if mask_disk {
        for ky in 0..k {
            for kx in 0..k {
                let (x, y) = tap_coords(k, ky, kx);
                if (x * x + y * y).sqrt() <= r_max {
                    continue;
                }
                for a in 0..d_o {
                    for b in 0..d_i {
                        let mut row = vec![0.0; n];
                        row[kernel_flat_index(d_i, k, a, b, ky, kx)] = 1.0;
                        rows.push(row);
                    }
                }
            }
        }
    }

    // pad with zero rows so the SVD sees all right singular vectors
    while rows.len() < n {
        rows.push(vec![0.0; n]);
    }
    let m = rows.len();
    let a = DMatrix::from_fn(m, n, |i, j| rows[i][j]);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let vt = svd.v_t.as_ref().unwrap();
    let tol = svd_tol * smax.max(1e-300);
    let mut null_rows: Vec<usize> = Vec::new();
    for i in 0..n {
        let s = if i < svd.singular_values.len() { svd.singular_values[i] } else { 0.0 };
        if s <= tol {
            null_rows.push(i);
        }
    }
    let mut out = Array2::zeros((null_rows.len(), n));
    for (oi, &i) in null_rows.iter().enumerate() {
        for j in 0..n {
            out[[oi, j]] = vt[(i, j)];
        }
    }
    out
}

/// Worst relative residual `||A v|| / ||v||` of basis rows `v` under the
/// sampled equivariance constraint (rows built like
/// [`constraint_null_space`], disk-masked).
pub fn basis_constraint_residual(
    samples: &[GroupElement],
    rep_in: &Representation,
    rep_out: &Representation,
    k: usize,
    basis: &Array2<f64>,
) -> f64 {
    let d_i = rep_in.dimension();
    let d_o = rep_out.dimension();
    let r_max = disk_radius(k);
    let mut worst = 0.0f64;
    for bi in 0..basis.nrows() {
        let v = basis.row(bi);
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut acc = 0.0;
        for &g in samples {
            let ro = rep_matrix(rep_out, g).expect("rep_out");
            let ri_inv = rep_matrix(rep_in, g.inverse()).expect("rep_in");
            for ky in 0..k {
                for kx in 0..k {
                    let (x, y) = tap_coords(k, ky, kx);
                    if (x * x + y * y).sqrt() > r_max {
                        continue;
                    }
                    let gu = crate::group::rotate_vec2(g, [x, y]);
                    let taps = bilinear_taps(k, gu[0], gu[1]);
                    for a in 0..d_o {
                        for b in 0..d_i {
                            let mut lhs = 0.0;
                            for &(tky, tkx, w) in &taps {
                                lhs += w * v[kernel_flat_index(d_i, k, a, b, tky, tkx)];
                            }
                            let mut rhs = 0.0;
                            for ap in 0..d_o {
                                for bp in 0..d_i {
                                    rhs += ro[[a, ap]]
                                        * ri_inv[[bp, b]]
                                        * v[kernel_flat_index(d_i, k, ap, bp, ky, kx)];
                                }
                            }
                            acc += (lhs - rhs) * (lhs - rhs);
                        }
                    }
                }
            }
        }
        let rel = (acc / (samples.len() as f64)).sqrt() / vnorm.max(1e-300);
        worst = worst.max(rel);
    }
    worst
}

/// Bilinear taps of point (x, y) on the k x k grid. Taps outside the grid
/// are dropped (kernels are zero outside their support).
pub fn bilinear_taps(k: usize, x: f64, y: f64) -> Vec<(usize, usize, f64)> {
    let c = (k as f64 - 1.0) / 2.0;
    let col = x + c;
    let row = c - y;
    let r0 = row.floor();
    let c0 = col.floor();
    let dr = row - r0;
    let dc = col - c0;
    let mut taps = Vec::with_capacity(4);
    for (ri, wr) in [(r0, 1.0 - dr), (r0 + 1.0, dr)] {
        for (ci, wc) in [(c0, 1.0 - dc), (c0 + 1.0, dc)] {
            let w = wr * wc;
            if w.abs() < 1e-12 {
                continue;
            }
            if ri < -1e-9 || ci < -1e-9 || ri > k as f64 - 1.0 + 1e-9 || ci > k as f64 - 1.0 + 1e-9
            {
                continue;
            }
            taps.push((ri.round().max(0.0) as usize, ci.round().max(0.0) as usize, w));
        }
    }
    taps
}

/// Basis for one (in rep, out rep, kernel) triple, routed by group kind.
/// Finite groups use the exact element-stacked null space; continuous
/// groups use the analytic harmonic construction.
pub fn kernel_basis(
    group: GroupSpec,
    rep_in: &Representation,
    rep_out: &Representation,
    k: usize,
) -> Array2<f64> {
    match group.kind {
        GroupKind::So2 | GroupKind::O2 => {
            steerable_basis_analytic(group, rep_in, rep_out, k)
                .expect("analytic basis needs irrep-typed fields")
        }
        GroupKind::Cyclic | GroupKind::Dihedral => {
            let elems = group.elements().expect("finite");
            constraint_null_space(&elems, rep_in, rep_out, k, false, 1e-6)
        }
    }
}

/// Process-wide cache of kernel bases (read-only after construction).
pub struct BasisCache {
    map: Mutex<BTreeMap<String, std::sync::Arc<Array2<f64>>>>,
}

impl Default for BasisCache {
    fn default() -> Self {
        Self::new()
    }
}

impl BasisCache {
    pub fn new() -> Self {
        BasisCache { map: Mutex::new(BTreeMap::new()) }
    }

    pub fn get(
        &self,
        group: GroupSpec,
        rep_in: &Representation,
        rep_out: &Representation,
        k: usize,
    ) -> std::sync::Arc<Array2<f64>> {
        let key = format!("{}|{:?}|{:?}|{}", group.name(), rep_in.kind, rep_out.kind, k);
        let mut map = self.map.lock().unwrap();
        map.entry(key)
            .or_insert_with(|| std::sync::Arc::new(kernel_basis(group, rep_in, rep_out, k)))
            .clone()
    }
}

/// Shared global cache.
pub fn global_basis_cache() -> &'static BasisCache {
    static CACHE: std::sync::OnceLock<BasisCache> = std::sync::OnceLock::new();
    CACHE.get_or_init(BasisCache::new)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn so2_samples(n: usize) -> Vec<GroupElement> {
        (0..n).map(|i| GroupElement::rotation(TAU * i as f64 / n as f64)).collect()
    }

    #[test]
    fn trivial_pair_basis_is_radial() {
        let g = GroupSpec::so2(3);
        let triv = Representation::trivial(g);
        let b = steerable_basis_analytic(g, &triv, &triv, 3).unwrap();
        // rings at r = 0 and r = 1 (corners masked): 2 radial profiles
        assert_eq!(b.nrows(), 2);
    }

    #[test]
    fn finite_one_by_one_intertwiners_match_schur_multiplicities() {
        let d4 = GroupSpec::dihedral(4);
        let reg = Representation::regular(d4).unwrap();
        let triv = Representation::trivial(d4);
        let std_rep = Representation::standard(d4);
        let sign = Representation::reflection_sign(d4);
        // multiplicity of each irrep in the regular representation
        assert_eq!(kernel_basis(d4, &reg, &triv, 1).nrows(), 1);
        assert_eq!(kernel_basis(d4, &reg, &std_rep, 1).nrows(), 2);
        assert_eq!(kernel_basis(d4, &reg, &sign, 1).nrows(), 1);
        assert_eq!(kernel_basis(d4, &reg, &reg, 1).nrows(), 8);
        // no intertwiner between inequivalent irreps
        assert_eq!(kernel_basis(d4, &triv, &std_rep, 1).nrows(), 0);
        assert_eq!(kernel_basis(d4, &sign, &triv, 1).nrows(), 0);
    }

    #[test]
    fn d4_regular_regular_3x3_dimension_matches_brute_force_rank() {
        // brute-force rank computation of the constraint on a 3x3 grid
        let d4 = GroupSpec::dihedral(4);
        let reg = Representation::regular(d4).unwrap();
        let elems = d4.elements().unwrap();
        let ns = constraint_null_space(&elems, &reg, &reg, 3, false, 1e-6);
        assert_eq!(ns.nrows(), 8 * 9, "|G| copies of a 9-tap base filter");
    }

    #[test]
    fn trivial_to_regular_d4_3x3_has_nine_free_parameters() {
        let d4 = GroupSpec::dihedral(4);
        let triv = Representation::trivial(d4);
        let reg = Representation::regular(d4).unwrap();
        let elems = d4.elements().unwrap();
        let ns = constraint_null_space(&elems, &triv, &reg, 3, false, 1e-6);
        assert_eq!(ns.nrows(), 9);
    }

    #[test]
    fn so2_rho1_rho1_5x5_count_matches_numerical_oracle() {
        let g = GroupSpec::so2(3);
        let rho1 = Representation::standard(g);
        let analytic = steerable_basis_analytic(g, &rho1, &rho1, 5).unwrap();

        // independent oracle: null space of the constraint sampled at 72
        // angles; bilinear interpolation leaves a residual cliff well above
        // the numerical floor, so the threshold sits between the two.
        let oracle = constraint_null_space(&so2_samples(72), &rho1, &rho1, 5, true, 0.35);
        assert_eq!(analytic.nrows(), oracle.nrows(), "analytic vs sampled-constraint rank");
    }

    #[test]
    fn analytic_basis_solves_constraint_at_group_angles() {
        // at exact quarter turns the interpolation is a permutation, so the
        // analytic solutions satisfy the sampled constraint tightly
        let g = GroupSpec::so2(3);
        let rho1 = Representation::standard(g);
        let basis = steerable_basis_analytic(g, &rho1, &rho1, 5).unwrap();
        let quarter = vec![
            GroupElement::rotation(TAU / 4.0),
            GroupElement::rotation(TAU / 2.0),
            GroupElement::rotation(3.0 * TAU / 4.0),
        ];
        let d = 2;
        for bi in 0..basis.nrows() {
            for &q in &quarter {
                let ro = rep_matrix(&rho1, q).unwrap();
                let ri_inv = rep_matrix(&rho1, q.inverse()).unwrap();
                for ky in 0..5 {
                    for kx in 0..5 {
                        let (x, y) = tap_coords(5, ky, kx);
                        if (x * x + y * y).sqrt() > disk_radius(5) {
                            continue;
                        }
                        let gu = crate::group::rotate_vec2(q, [x, y]);
                        let taps = bilinear_taps(5, gu[0], gu[1]);
                        for a in 0..d {
                            for b in 0..d {
                                let mut lhs = 0.0;
                                for &(tky, tkx, w) in &taps {
                                    lhs += w * basis[[bi, kernel_flat_index(d, 5, a, b, tky, tkx)]];
                                }
                                let mut rhs = 0.0;
                                for ap in 0..d {
                                    for bp in 0..d {
                                        rhs += ro[[a, ap]]
                                            * ri_inv[[bp, b]]
                                            * basis[[bi, kernel_flat_index(d, 5, ap, bp, ky, kx)]];
                                    }
                                }
                                assert!(
                                    (lhs - rhs).abs() < 1e-9,
                                    "constraint violated: {lhs} vs {rhs}"
                                );
                            }
                        }
                    }
                }
            }
        }
    }
}
