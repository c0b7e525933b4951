//! Linear expansion from free parameters to the full convolution filter
//! bank.
//!
//! Finite groups with regular output fields store one base filter per output
//! field; the bank is its orbit under the group acting jointly on the kernel
//! grid and the input channels (G-convolution). Quarter-turn elements give a
//! pure index gather; 45-degree elements of C8/D8 resample the base filter
//! bilinearly. All other pairs expand through per-pair-type steerable bases.

use super::basis::{bilinear_taps, kernel_flat_index, tap_coords};
use super::NnError;
use crate::autodiff::{BackwardOp, Graph, NodeId, Scalar};
use crate::group::{rep_matrix, rotate_vec2, FieldType, RepKind};
use ndarray::{Array2, ArrayD, IxDyn};
use std::collections::BTreeMap;
use std::sync::Arc;

pub enum ExpandKind<T: Scalar> {
    /// dst i <- theta[src[i]]; u32::MAX yields zero.
    Perm { src: Vec<u32> },
    /// CSR rows over bank entries.
    Sparse { offsets: Vec<u32>, idx: Vec<u32>, w: Vec<T> },
    /// dense per-pair-type basis blocks
    Blocks { groups: Vec<BlockGroup<T>> },
}

pub struct BlockGroup<T: Scalar> {
    pub basis: Array2<T>, // (n_b, d_o * d_i * k * k)
    pub d_o: usize,
    pub d_i: usize,
    /// (out channel offset, in channel offset) per field pair
    pub pairs: Vec<(usize, usize)>,
    pub theta_offset: usize,
}

pub struct FilterExpansion<T: Scalar> {
    pub free_len: usize,
    /// (C_out, C_in, k, k)
    pub bank_shape: [usize; 4],
    pub kind: ExpandKind<T>,
}

impl<T: Scalar> FilterExpansion<T> {
    pub fn apply(&self, theta: &ArrayD<T>) -> ArrayD<T> {
        debug_assert_eq!(theta.len(), self.free_len);
        let th = theta.as_slice().expect("theta contiguous");
        let mut bank = ArrayD::zeros(IxDyn(&self.bank_shape));
        {
            let out = bank.as_slice_mut().unwrap();
            match &self.kind {
                ExpandKind::Perm { src } => {
                    for (o, &s) in out.iter_mut().zip(src.iter()) {
                        if s != u32::MAX {
                            *o = th[s as usize];
                        }
                    }
                }
                ExpandKind::Sparse { offsets, idx, w } => {
                    for i in 0..out.len() {
                        let (lo, hi) = (offsets[i] as usize, offsets[i + 1] as usize);
                        let mut acc = T::zero();
                        for j in lo..hi {
                            acc = acc + w[j] * th[idx[j] as usize];
                        }
                        out[i] = acc;
                    }
                }
                ExpandKind::Blocks { groups } => {
                    let [_, c_in, k, _] = self.bank_shape;
                    for grp in groups {
                        let n_b = grp.basis.nrows();
                        let blen = grp.d_o * grp.d_i * k * k;
                        for (pi, &(oc, ic)) in grp.pairs.iter().enumerate() {
                            let toff = grp.theta_offset + pi * n_b;
                            for a in 0..grp.d_o {
                                for b in 0..grp.d_i {
                                    for ky in 0..k {
                                        for kx in 0..k {
                                            let bi =
                                                kernel_flat_index(grp.d_i, k, a, b, ky, kx);
                                            let mut acc = T::zero();
                                            for nb in 0..n_b {
                                                acc = acc
                                                    + grp.basis[[nb, bi]] * th[toff + nb];
                                            }
                                            let dst = (((oc + a) * c_in + ic + b) * k + ky)
                                                * k
                                                + kx;
                                            out[dst] = acc;
                                        }
                                    }
                                }
                            }
                            let _ = blen;
                        }
                    }
                }
            }
        }
        bank
    }

    pub fn apply_transpose(&self, gbank: &ArrayD<T>) -> ArrayD<T> {
        let gb = gbank.as_slice().expect("bank grad contiguous");
        let mut gt = ArrayD::zeros(IxDyn(&[self.free_len]));
        {
            let gth = gt.as_slice_mut().unwrap();
            match &self.kind {
                ExpandKind::Perm { src } => {
                    for (i, &s) in src.iter().enumerate() {
                        if s != u32::MAX {
                            gth[s as usize] = gth[s as usize] + gb[i];
                        }
                    }
                }
                ExpandKind::Sparse { offsets, idx, w } => {
                    for i in 0..gb.len() {
                        let (lo, hi) = (offsets[i] as usize, offsets[i + 1] as usize);
                        for j in lo..hi {
                            let s = idx[j] as usize;
                            gth[s] = gth[s] + w[j] * gb[i];
                        }
                    }
                }
                ExpandKind::Blocks { groups } => {
                    let [_, c_in, k, _] = self.bank_shape;
                    for grp in groups {
                        let n_b = grp.basis.nrows();
                        for (pi, &(oc, ic)) in grp.pairs.iter().enumerate() {
                            let toff = grp.theta_offset + pi * n_b;
                            for a in 0..grp.d_o {
                                for b in 0..grp.d_i {
                                    for ky in 0..k {
                                        for kx in 0..k {
                                            let bi =
                                                kernel_flat_index(grp.d_i, k, a, b, ky, kx);
                                            let src = (((oc + a) * c_in + ic + b) * k + ky)
                                                * k
                                                + kx;
                                            let g = gb[src];
                                            for nb in 0..n_b {
                                                gth[toff + nb] = gth[toff + nb]
                                                    + grp.basis[[nb, bi]] * g;
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        gt
    }
}

struct ExpandOp<T: Scalar> {
    exp: Arc<FilterExpansion<T>>,
}

impl<T: Scalar> BackwardOp<T> for ExpandOp<T> {
    fn backward(
        &self,
        grad: &ArrayD<T>,
        _parents: &[&ArrayD<T>],
        _out: &ArrayD<T>,
    ) -> Vec<Option<ArrayD<T>>> {
        vec![Some(self.exp.apply_transpose(grad))]
    }
}

impl<T: Scalar> Graph<T> {
    /// Expand free parameters into the filter bank on the tape.
    pub fn expand_filters(&mut self, theta: NodeId, exp: &Arc<FilterExpansion<T>>) -> NodeId {
        let bank = exp.apply(self.value(theta));
        self.push(bank, vec![theta], Some(Box::new(ExpandOp { exp: exp.clone() })))
    }
}

/// Scatter a per-trivial-field bias vector into the full channel vector.
struct BiasScatterOp {
    channels: Vec<u32>,
    c_out: usize,
}

impl<T: Scalar> BackwardOp<T> for BiasScatterOp {
    fn backward(
        &self,
        grad: &ArrayD<T>,
        _parents: &[&ArrayD<T>],
        _out: &ArrayD<T>,
    ) -> Vec<Option<ArrayD<T>>> {
        let g = grad.as_slice().unwrap();
        let mut gb = ArrayD::zeros(IxDyn(&[self.channels.len()]));
        for (i, &c) in self.channels.iter().enumerate() {
            gb[[i]] = g[c as usize];
        }
        let _ = self.c_out;
        vec![Some(gb)]
    }
}

impl<T: Scalar> Graph<T> {
    pub fn scatter_bias(&mut self, bias: NodeId, channels: &[u32], c_out: usize) -> NodeId {
        let b = self.value(bias);
        let mut full = ArrayD::zeros(IxDyn(&[c_out]));
        for (i, &c) in channels.iter().enumerate() {
            full[[c as usize]] = b[[i]];
        }
        self.push(
            full,
            vec![bias],
            Some(Box::new(BiasScatterOp { channels: channels.to_vec(), c_out })),
        )
    }
}

/// True when the representation acts by (possibly signed) permutation
/// matrices, making gather-style expansion exact.
fn is_monomial(kind: &RepKind) -> bool {
    matches!(
        kind,
        RepKind::Trivial | RepKind::Irrep(0) | RepKind::O2Irrep(0) | RepKind::Regular
    )
}

/// Build the expansion for a conv layer from `in_type` to `out_type` with a
/// square k x k kernel.
pub fn build_expansion<T: Scalar>(
    in_type: &FieldType,
    out_type: &FieldType,
    k: usize,
) -> Result<FilterExpansion<T>, NnError> {
    let group = in_type.group;
    if out_type.group != group {
        return Err(NnError::GroupMismatch);
    }
    let c_in = in_type.total_dim();
    let c_out = out_type.total_dim();
    let bank_shape = [c_out, c_in, k, k];

    let gather_ok = group.is_finite()
        && out_type.fields.iter().all(|f| matches!(f.kind, RepKind::Regular))
        && in_type.fields.iter().all(|f| is_monomial(&f.kind));

    let exp = if gather_ok {
        build_orbit_gather::<T>(in_type, out_type, k, bank_shape)
    } else {
        build_blocks::<T>(in_type, out_type, k, bank_shape)?
    };
    if exp.free_len == 0 {
        return Err(NnError::UnsupportedPair);
    }
    Ok(exp)
}

fn build_orbit_gather<T: Scalar>(
    in_type: &FieldType,
    out_type: &FieldType,
    k: usize,
    bank_shape: [usize; 4],
) -> FilterExpansion<T> {
    let group = in_type.group;
    let elems = group.elements().expect("finite group");
    let gsize = elems.len();
    let c_in = in_type.total_dim();
    let n_out_fields = out_type.fields.len();
    let free_len = n_out_fields * c_in * k * k;
    let in_offsets = in_type.offsets();

    // per element: channel mixing rho_in(h)^-1 as (dst channel -> taps)
    // and the spatial resampling taps of h^-1 acting on the grid
    let bank_len: usize = bank_shape.iter().product();
    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); bank_len];
    for (h_idx, &h) in elems.iter().enumerate() {
        // channel mixing per in field
        let mut ch_taps: Vec<Vec<(usize, f64)>> = vec![Vec::new(); c_in];
        for (fi, rep) in in_type.fields.iter().enumerate() {
            let m = rep_matrix(rep, h.inverse()).expect("in rep");
            let d = rep.dimension();
            for cj in 0..d {
                for ci in 0..d {
                    let wv = m[[ci, cj]];
                    if wv.abs() > 1e-12 {
                        ch_taps[in_offsets[fi] + cj].push((in_offsets[fi] + ci, wv));
                    }
                }
            }
        }
        // spatial taps of h^-1
        let hinv = h.inverse();
        let mut sp_taps: Vec<Vec<(usize, usize, f64)>> = Vec::with_capacity(k * k);
        for ky in 0..k {
            for kx in 0..k {
                let (x, y) = tap_coords(k, ky, kx);
                let v = rotate_vec2(hinv, [x, y]);
                sp_taps.push(bilinear_taps(k, v[0], v[1]));
            }
        }
        for f in 0..n_out_fields {
            let co = f * gsize + h_idx;
            let theta_base = f * c_in * k * k;
            for cj in 0..c_in {
                for (pix, taps) in sp_taps.iter().enumerate() {
                    let dst = ((co * c_in) + cj) * k * k + pix;
                    for &(ci, wc) in &ch_taps[cj] {
                        for &(tky, tkx, ws) in taps {
                            let src = theta_base + (ci * k + tky) * k + tkx;
                            rows[dst].push((src as u32, wc * ws));
                        }
                    }
                }
            }
        }
    }

    // pure permutation if every row is a single unit tap
    let pure_perm = rows
        .iter()
        .all(|r| r.is_empty() || (r.len() == 1 && (r[0].1 - 1.0).abs() < 1e-12));
    let kind = if pure_perm {
        let src = rows
            .iter()
            .map(|r| if r.is_empty() { u32::MAX } else { r[0].0 })
            .collect();
        ExpandKind::Perm { src }
    } else {
        let mut offsets = Vec::with_capacity(bank_len + 1);
        let mut idx = Vec::new();
        let mut w = Vec::new();
        offsets.push(0u32);
        for r in &rows {
            for &(s, wv) in r {
                idx.push(s);
                w.push(T::from_f(wv));
            }
            offsets.push(idx.len() as u32);
        }
        ExpandKind::Sparse { offsets, idx, w }
    };
    FilterExpansion { free_len, bank_shape, kind }
}

fn build_blocks<T: Scalar>(
    in_type: &FieldType,
    out_type: &FieldType,
    k: usize,
    bank_shape: [usize; 4],
) -> Result<FilterExpansion<T>, NnError> {
    let group = in_type.group;
    let in_offsets = in_type.offsets();
    let out_offsets = out_type.offsets();

    // group field pairs by representation kind
    let mut by_pair: BTreeMap<String, (usize, usize, Vec<(usize, usize)>)> = BTreeMap::new();
    for (fo, rep_o) in out_type.fields.iter().enumerate() {
        for (fi, rep_i) in in_type.fields.iter().enumerate() {
            let key = format!("{:?}|{:?}", rep_o.kind, rep_i.kind);
            let entry = by_pair.entry(key).or_insert_with(|| (fo, fi, Vec::new()));
            entry.2.push((out_offsets[fo], in_offsets[fi]));
        }
    }

    let cache = super::basis::global_basis_cache();
    let mut groups = Vec::new();
    let mut theta_offset = 0;
    for (_, (fo, fi, pairs)) in by_pair {
        let rep_o = &out_type.fields[fo];
        let rep_i = &in_type.fields[fi];
        let basis64 = cache.get(group, rep_i, rep_o, k);
        let n_b = basis64.nrows();
        if n_b == 0 {
            continue; // no equivariant map between these representations
        }
        let basis = basis64.mapv(|v| T::from_f(v));
        groups.push(BlockGroup {
            basis,
            d_o: rep_o.dimension(),
            d_i: rep_i.dimension(),
            theta_offset,
            pairs: pairs.clone(),
        });
        theta_offset += n_b * pairs.len();
    }
    Ok(FilterExpansion { free_len: theta_offset, bank_shape, kind: ExpandKind::Blocks { groups } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{GroupSpec, Representation};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_theta(n: usize, seed: u64) -> ArrayD<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ArrayD::from_shape_simple_fn(IxDyn(&[n]), || rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn d4_trivial_to_regular_is_an_orbit_of_one_filter() {
        let d4 = GroupSpec::dihedral(4);
        let in_t = FieldType::trivial(d4, 1);
        let out_t = FieldType::regular(d4, 1);
        let exp = build_expansion::<f64>(&in_t, &out_t, 3).unwrap();
        assert_eq!(exp.free_len, 9, "one 9-parameter base filter");
        assert_eq!(exp.bank_shape, [8, 1, 3, 3]);
        let theta = rand_theta(9, 1);
        let bank = exp.apply(&theta);
        // each output channel is a transformed copy: same multiset of values
        let mut base: Vec<f64> = theta.iter().cloned().collect();
        base.sort_by(f64::total_cmp);
        for co in 0..8 {
            let mut vals: Vec<f64> = bank
                .slice_axis(ndarray::Axis(0), ndarray::Slice::from(co..co + 1))
                .iter()
                .cloned()
                .collect();
            vals.sort_by(f64::total_cmp);
            for (a, b) in base.iter().zip(vals.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn d4_regular_to_regular_has_72_free_parameters() {
        let d4 = GroupSpec::dihedral(4);
        let in_t = FieldType::regular(d4, 1);
        let out_t = FieldType::regular(d4, 1);
        let exp = build_expansion::<f64>(&in_t, &out_t, 3).unwrap();
        assert_eq!(exp.free_len, 72);
        assert_eq!(exp.bank_shape, [8, 8, 3, 3]);
        assert!(matches!(exp.kind, ExpandKind::Perm { .. }), "D4 orbit is a pure gather");
    }

    #[test]
    fn c8_uses_weighted_gather_for_45_degree_elements() {
        let c8 = GroupSpec::cyclic(8);
        let in_t = FieldType::trivial(c8, 1);
        let out_t = FieldType::regular(c8, 1);
        let exp = build_expansion::<f64>(&in_t, &out_t, 3).unwrap();
        assert_eq!(exp.free_len, 9);
        assert!(matches!(exp.kind, ExpandKind::Sparse { .. }));
    }

    #[test]
    fn transpose_is_adjoint_of_apply() {
        // <E theta, y> == <theta, E^T y> for random vectors
        let d4 = GroupSpec::dihedral(4);
        let in_t = FieldType::regular(d4, 2);
        let out_t = FieldType::regular(d4, 3);
        let exp = build_expansion::<f64>(&in_t, &out_t, 3).unwrap();
        let theta = rand_theta(exp.free_len, 2);
        let y = rand_theta(exp.bank_shape.iter().product(), 3);
        let etheta = exp.apply(&theta);
        let ety = exp.apply_transpose(&y);
        let lhs: f64 = ethetassum(&etheta, &y);
        let rhs: f64 = ethetassum(&theta, &ety);
        assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");

        let so2 = GroupSpec::so2(3);
        let st = Representation::standard(so2);
        let tr = Representation::trivial(so2);
        let in_t = FieldType::new(so2, vec![tr.clone(), st.clone()]);
        let out_t = FieldType::new(so2, vec![st, tr]);
        let exp = build_expansion::<f64>(&in_t, &out_t, 3).unwrap();
        let theta = rand_theta(exp.free_len, 4);
        let y = rand_theta(exp.bank_shape.iter().product(), 5);
        let lhs = ethetassum(&exp.apply(&theta), &y);
        let rhs = ethetassum(&theta, &exp.apply_transpose(&y));
        assert!((lhs - rhs).abs() < 1e-9);
    }

    fn ethetassum(a: &ArrayD<f64>, b: &ArrayD<f64>) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn group_mismatch_is_rejected() {
        let d4 = GroupSpec::dihedral(4);
        let c8 = GroupSpec::cyclic(8);
        let in_t = FieldType::trivial(d4, 1);
        let out_t = FieldType::regular(c8, 1);
        assert!(matches!(
            build_expansion::<f32>(&in_t, &out_t, 3),
            Err(NnError::GroupMismatch)
        ));
    }
}
