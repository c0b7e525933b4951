//! Spatial ops: 2-D convolution via im2col + GEMM, max pooling, and the
//! field-structured nonlinearities used by the equivariant layers.

use super::{BackwardOp, Graph, NodeId, Scalar};
use ndarray::{Array2, Array4, ArrayD, Ix4, IxDyn};

/// Geometry of one convolution: square kernel, symmetric zero padding,
/// unit stride (the network downsamples with pooling, not strides).
#[derive(Debug, Clone, Copy)]
pub struct ConvGeom {
    pub kernel: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_size(&self, input: usize) -> usize {
        input + 2 * self.pad + 1 - self.kernel
    }
}

fn im2col<T: Scalar>(x: &Array4<T>, geom: ConvGeom) -> Array2<T> {
    let (b, c, h, w) = x.dim();
    let k = geom.kernel;
    let p = geom.pad as isize;
    let (oh, ow) = (geom.out_size(h), geom.out_size(w));
    let ck = c * k * k;
    let mut col = Array2::<T>::zeros((b * oh * ow, ck));
    let xs = x.as_slice().unwrap();
    let cs = col.as_slice_mut().unwrap();
    for bi in 0..b {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = ((bi * oh + oy) * ow + ox) * ck;
                for ci in 0..c {
                    let xbase = ((bi * c + ci) * h) as isize;
                    for ky in 0..k {
                        let iy = oy as isize + ky as isize - p;
                        let dst = row + (ci * k + ky) * k;
                        if iy < 0 || iy >= h as isize {
                            continue; // zeros already present
                        }
                        let xrow = ((xbase + iy) * w as isize) as usize;
                        for kx in 0..k {
                            let ix = ox as isize + kx as isize - p;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            cs[dst + kx] = xs[xrow + ix as usize];
                        }
                    }
                }
            }
        }
    }
    col
}

fn col2im<T: Scalar>(
    gcol: &Array2<T>,
    (b, c, h, w): (usize, usize, usize, usize),
    geom: ConvGeom,
) -> Array4<T> {
    let k = geom.kernel;
    let p = geom.pad as isize;
    let (oh, ow) = (geom.out_size(h), geom.out_size(w));
    let ck = c * k * k;
    let mut gx = Array4::<T>::zeros((b, c, h, w));
    let gs = gcol.as_slice().unwrap();
    let xs = gx.as_slice_mut().unwrap();
    for bi in 0..b {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = ((bi * oh + oy) * ow + ox) * ck;
                for ci in 0..c {
                    let xbase = ((bi * c + ci) * h) as isize;
                    for ky in 0..k {
                        let iy = oy as isize + ky as isize - p;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src = row + (ci * k + ky) * k;
                        let xrow = ((xbase + iy) * w as isize) as usize;
                        for kx in 0..k {
                            let ix = ox as isize + kx as isize - p;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let xi = xrow + ix as usize;
                            xs[xi] = xs[xi] + gs[src + kx];
                        }
                    }
                }
            }
        }
    }
    gx
}

/// res (B*OH*OW, Cout) -> (B, Cout, OH, OW)
fn rows_to_nchw<T: Scalar>(res: &Array2<T>, b: usize, oh: usize, ow: usize) -> Array4<T> {
    let cout = res.ncols();
    let mut out = Array4::<T>::zeros((b, cout, oh, ow));
    let os = out.as_slice_mut().unwrap();
    let rs = res.as_slice().unwrap();
    let hw = oh * ow;
    for bi in 0..b {
        for pix in 0..hw {
            let row = (bi * hw + pix) * cout;
            for co in 0..cout {
                os[(bi * cout + co) * hw + pix] = rs[row + co];
            }
        }
    }
    out
}

/// (B, Cout, OH, OW) -> rows (B*OH*OW, Cout)
fn nchw_to_rows<T: Scalar>(g: &Array4<T>) -> Array2<T> {
    let (b, cout, oh, ow) = g.dim();
    let hw = oh * ow;
    let mut rows = Array2::<T>::zeros((b * hw, cout));
    let rs = rows.as_slice_mut().unwrap();
    let gs = g.as_slice().unwrap();
    for bi in 0..b {
        for pix in 0..hw {
            let row = (bi * hw + pix) * cout;
            for co in 0..cout {
                rs[row + co] = gs[(bi * cout + co) * hw + pix];
            }
        }
    }
    rows
}

struct Conv2d<T: Scalar> {
    geom: ConvGeom,
    col: Array2<T>,
    in_shape: (usize, usize, usize, usize),
}

impl<T: Scalar> BackwardOp<T> for Conv2d<T> {
    fn backward(
        &self,
        grad: &ArrayD<T>,
        parents: &[&ArrayD<T>],
        _out: &ArrayD<T>,
    ) -> Vec<Option<ArrayD<T>>> {
        let g4 = grad.view().into_dimensionality::<Ix4>().unwrap().to_owned();
        let grows = nchw_to_rows(&g4);
        let bank = parents[1];
        let cout = bank.shape()[0];
        let ck = bank.len() / cout;
        let bank2 = bank.view().into_shape_with_order((cout, ck)).unwrap();

        // dL/d(bank) = grows^T . col
        let gbank = grows.t().dot(&self.col);
        let gbank = gbank
            .into_shape_with_order(IxDyn(bank.shape()))
            .unwrap();

        // dL/d(x) = col2im(grows . bank2)
        let gcol = grows.dot(&bank2);
        let gx = col2im(&gcol, self.in_shape, self.geom).into_dyn();
        vec![Some(gx), Some(gbank)]
    }
}

struct MaxPool2d {
    argmax: Vec<u32>,
    in_shape: (usize, usize, usize, usize),
}

impl<T: Scalar> BackwardOp<T> for MaxPool2d {
    fn backward(
        &self,
        grad: &ArrayD<T>,
        _parents: &[&ArrayD<T>],
        _out: &ArrayD<T>,
    ) -> Vec<Option<ArrayD<T>>> {
        let mut gx = ArrayD::<T>::zeros(IxDyn(&[
            self.in_shape.0,
            self.in_shape.1,
            self.in_shape.2,
            self.in_shape.3,
        ]));
        let gs = gx.as_slice_mut().unwrap();
        for (i, &g) in grad.iter().enumerate() {
            let src = self.argmax[i] as usize;
            gs[src] = gs[src] + g;
        }
        vec![Some(gx)]
    }
}

/// Max over channel blocks of size `group`: (B, F*group, H, W) -> (B, F, H, W).
struct ChannelBlockMax {
    argmax: Vec<u32>,
    in_shape: (usize, usize, usize, usize),
}

impl<T: Scalar> BackwardOp<T> for ChannelBlockMax {
    fn backward(
        &self,
        grad: &ArrayD<T>,
        _parents: &[&ArrayD<T>],
        _out: &ArrayD<T>,
    ) -> Vec<Option<ArrayD<T>>> {
        let mut gx = ArrayD::<T>::zeros(IxDyn(&[
            self.in_shape.0,
            self.in_shape.1,
            self.in_shape.2,
            self.in_shape.3,
        ]));
        let gs = gx.as_slice_mut().unwrap();
        for (i, &g) in grad.iter().enumerate() {
            let src = self.argmax[i] as usize;
            gs[src] = gs[src] + g;
        }
        vec![Some(gx)]
    }
}

/// Non-overlapping average pooling (linear, so it commutes with any channel
/// mixing; the continuous-group trunks downsample with this).
struct AvgPool2d {
    window: usize,
    in_shape: (usize, usize, usize, usize),
}

impl<T: Scalar> BackwardOp<T> for AvgPool2d {
    fn backward(
        &self,
        grad: &ArrayD<T>,
        _parents: &[&ArrayD<T>],
        _out: &ArrayD<T>,
    ) -> Vec<Option<ArrayD<T>>> {
        let (b, c, h, w) = self.in_shape;
        let win = self.window;
        let inv = T::one() / T::from_f((win * win) as f64);
        let g4 = grad.view().into_dimensionality::<Ix4>().unwrap();
        let mut gx = Array4::<T>::zeros((b, c, h, w));
        for bi in 0..b {
            for ci in 0..c {
                for oy in 0..h / win {
                    for ox in 0..w / win {
                        let g = g4[[bi, ci, oy, ox]] * inv;
                        for ky in 0..win {
                            for kx in 0..win {
                                gx[[bi, ci, oy * win + ky, ox * win + kx]] = g;
                            }
                        }
                    }
                }
            }
        }
        vec![Some(gx.into_dyn())]
    }
}

/// Gated nonlinearity: each feature field (channel block) is scaled by the
/// sigmoid of its paired gate channel. Gates: (B, F, H, W); features laid
/// out as consecutive blocks whose widths are `dims`.
struct Gated<T: Scalar> {
    dims: Vec<usize>,
    sig: ArrayD<T>, // sigmoid(gates), cached from forward
}

impl<T: Scalar> BackwardOp<T> for Gated<T> {
    fn backward(
        &self,
        grad: &ArrayD<T>,
        parents: &[&ArrayD<T>],
        _out: &ArrayD<T>,
    ) -> Vec<Option<ArrayD<T>>> {
        let feats = parents[1].view().into_dimensionality::<Ix4>().unwrap();
        let g4 = grad.view().into_dimensionality::<Ix4>().unwrap();
        let sig = self.sig.view().into_dimensionality::<Ix4>().unwrap();
        let (b, _, h, w) = feats.dim();
        let mut ggate = Array4::<T>::zeros(sig.dim());
        let mut gfeat = Array4::<T>::zeros(feats.dim());
        for bi in 0..b {
            for y in 0..h {
                for x in 0..w {
                    let mut ch = 0;
                    for (f, &d) in self.dims.iter().enumerate() {
                        let s = sig[[bi, f, y, x]];
                        let ds = s * (T::one() - s);
                        let mut acc = T::zero();
                        for k in 0..d {
                            let go = g4[[bi, ch + k, y, x]];
                            gfeat[[bi, ch + k, y, x]] = go * s;
                            acc = acc + go * feats[[bi, ch + k, y, x]];
                        }
                        ggate[[bi, f, y, x]] = acc * ds;
                        ch += d;
                    }
                }
            }
        }
        vec![Some(ggate.into_dyn()), Some(gfeat.into_dyn())]
    }
}

/// Per-field L2 norm: channel blocks of widths `dims` map to one channel
/// each: (B, sum(dims), H, W) -> (B, F, H, W).
struct FieldNorm<T: Scalar> {
    dims: Vec<usize>,
    eps: T,
}

impl<T: Scalar> BackwardOp<T> for FieldNorm<T> {
    fn backward(
        &self,
        grad: &ArrayD<T>,
        parents: &[&ArrayD<T>],
        out: &ArrayD<T>,
    ) -> Vec<Option<ArrayD<T>>> {
        let x = parents[0].view().into_dimensionality::<Ix4>().unwrap();
        let g4 = grad.view().into_dimensionality::<Ix4>().unwrap();
        let o4 = out.view().into_dimensionality::<Ix4>().unwrap();
        let (b, _, h, w) = x.dim();
        let mut gx = Array4::<T>::zeros(x.dim());
        for bi in 0..b {
            for y in 0..h {
                for xx in 0..w {
                    let mut ch = 0;
                    for (f, &d) in self.dims.iter().enumerate() {
                        let n = o4[[bi, f, y, xx]]; // sqrt(sum + eps^2)
                        let go = g4[[bi, f, y, xx]];
                        for k in 0..d {
                            gx[[bi, ch + k, y, xx]] = go * x[[bi, ch + k, y, xx]] / n;
                        }
                        ch += d;
                    }
                }
            }
        }
        let _ = self.eps;
        vec![Some(gx.into_dyn())]
    }
}

impl<T: Scalar> Graph<T> {
    /// Cross-correlation of `x` (B, Cin, H, W) with `bank` (Cout, Cin, k, k),
    /// stride 1, symmetric zero padding.
    pub fn conv2d(&mut self, x: NodeId, bank: NodeId, geom: ConvGeom) -> NodeId {
        let x4 = self
            .value(x)
            .view()
            .into_dimensionality::<Ix4>()
            .expect("conv input must be 4-D")
            .to_owned();
        let bank_v = self.value(bank);
        let bshape = bank_v.shape().to_vec();
        assert_eq!(bshape.len(), 4, "filter bank must be 4-D");
        assert_eq!(bshape[1], x4.dim().1, "conv channel mismatch");
        assert_eq!(bshape[2], geom.kernel);
        let (b, c, h, w) = x4.dim();
        let (oh, ow) = (geom.out_size(h), geom.out_size(w));
        let cout = bshape[0];
        let ck = c * geom.kernel * geom.kernel;

        let col = im2col(&x4, geom);
        let bank2 = bank_v.view().into_shape_with_order((cout, ck)).unwrap();
        let res = col.dot(&bank2.t()); // (B*OH*OW, Cout)
        let out = rows_to_nchw(&res, b, oh, ow).into_dyn();
        self.push(
            out,
            vec![x, bank],
            Some(Box::new(Conv2d { geom, col, in_shape: (b, c, h, w) })),
        )
    }

    /// Non-overlapping max pooling with a square window (stride = window).
    pub fn max_pool2d(&mut self, x: NodeId, window: usize) -> NodeId {
        let x4 = self
            .value(x)
            .view()
            .into_dimensionality::<Ix4>()
            .expect("pool input must be 4-D");
        let (b, c, h, w) = x4.dim();
        assert_eq!(h % window, 0, "pool window must tile input");
        assert_eq!(w % window, 0);
        let (oh, ow) = (h / window, w / window);
        let mut out = Array4::<T>::zeros((b, c, oh, ow));
        let mut argmax = vec![0u32; b * c * oh * ow];
        let xs = x4.to_owned();
        let xs = xs.as_slice().unwrap();
        let os = out.as_slice_mut().unwrap();
        let mut oi = 0;
        for bi in 0..b {
            for ci in 0..c {
                let base = (bi * c + ci) * h * w;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = T::neg_infinity();
                        let mut besti = 0usize;
                        for ky in 0..window {
                            let row = base + (oy * window + ky) * w + ox * window;
                            for kx in 0..window {
                                let v = xs[row + kx];
                                if v > best {
                                    best = v;
                                    besti = row + kx;
                                }
                            }
                        }
                        os[oi] = best;
                        argmax[oi] = besti as u32;
                        oi += 1;
                    }
                }
            }
        }
        self.push(
            out.into_dyn(),
            vec![x],
            Some(Box::new(MaxPool2d { argmax, in_shape: (b, c, h, w) })),
        )
    }

    /// Non-overlapping average pooling with a square window (stride = window).
    pub fn avg_pool2d(&mut self, x: NodeId, window: usize) -> NodeId {
        let x4 = self
            .value(x)
            .view()
            .into_dimensionality::<Ix4>()
            .expect("pool input must be 4-D");
        let (b, c, h, w) = x4.dim();
        assert_eq!(h % window, 0, "pool window must tile input");
        assert_eq!(w % window, 0);
        let inv = T::one() / T::from_f((window * window) as f64);
        let mut out = Array4::<T>::zeros((b, c, h / window, w / window));
        for bi in 0..b {
            for ci in 0..c {
                for oy in 0..h / window {
                    for ox in 0..w / window {
                        let mut acc = T::zero();
                        for ky in 0..window {
                            for kx in 0..window {
                                acc = acc + x4[[bi, ci, oy * window + ky, ox * window + kx]];
                            }
                        }
                        out[[bi, ci, oy, ox]] = acc * inv;
                    }
                }
            }
        }
        self.push(
            out.into_dyn(),
            vec![x],
            Some(Box::new(AvgPool2d { window, in_shape: (b, c, h, w) })),
        )
    }

    /// Max over channel blocks of size `group`: (B, F*group, H, W) -> (B, F, H, W).
    pub fn channel_block_max(&mut self, x: NodeId, group: usize) -> NodeId {
        let x4 = self
            .value(x)
            .view()
            .into_dimensionality::<Ix4>()
            .expect("channel_block_max input must be 4-D");
        let (b, c, h, w) = x4.dim();
        assert_eq!(c % group, 0, "channels must split into blocks");
        let f = c / group;
        let hw = h * w;
        let mut out = Array4::<T>::zeros((b, f, h, w));
        let mut argmax = vec![0u32; b * f * hw];
        let xo = x4.to_owned();
        let xs = xo.as_slice().unwrap();
        let os = out.as_slice_mut().unwrap();
        let mut oi = 0;
        for bi in 0..b {
            for fi in 0..f {
                for pix in 0..hw {
                    let mut best = T::neg_infinity();
                    let mut besti = 0usize;
                    for e in 0..group {
                        let idx = ((bi * c + fi * group + e) * hw) + pix;
                        if xs[idx] > best {
                            best = xs[idx];
                            besti = idx;
                        }
                    }
                    os[oi] = best;
                    argmax[oi] = besti as u32;
                    oi += 1;
                }
            }
        }
        self.push(
            out.into_dyn(),
            vec![x],
            Some(Box::new(ChannelBlockMax { argmax, in_shape: (b, c, h, w) })),
        )
    }

    /// Gated nonlinearity; `dims[f]` is the channel width of feature field f,
    /// `gates` has one channel per field.
    pub fn gated(&mut self, gates: NodeId, feats: NodeId, dims: &[usize]) -> NodeId {
        let gv = self.value(gates).view().into_dimensionality::<Ix4>().unwrap();
        let fv = self.value(feats).view().into_dimensionality::<Ix4>().unwrap();
        let (b, nf, h, w) = gv.dim();
        assert_eq!(nf, dims.len(), "one gate per field");
        assert_eq!(fv.dim().1, dims.iter().sum::<usize>());
        let sig = gv.mapv(|v| T::one() / (T::one() + (-v).exp()));
        let mut out = Array4::<T>::zeros(fv.dim());
        for bi in 0..b {
            for y in 0..h {
                for x in 0..w {
                    let mut ch = 0;
                    for (f, &d) in dims.iter().enumerate() {
                        let s = sig[[bi, f, y, x]];
                        for k in 0..d {
                            out[[bi, ch + k, y, x]] = fv[[bi, ch + k, y, x]] * s;
                        }
                        ch += d;
                    }
                }
            }
        }
        let dims = dims.to_vec();
        self.push(
            out.into_dyn(),
            vec![gates, feats],
            Some(Box::new(Gated { dims, sig: sig.into_dyn() })),
        )
    }

    /// Smoothed per-field L2 norm (one channel per field).
    pub fn field_norm(&mut self, x: NodeId, dims: &[usize]) -> NodeId {
        let xv = self.value(x).view().into_dimensionality::<Ix4>().unwrap();
        let (b, c, h, w) = xv.dim();
        assert_eq!(c, dims.iter().sum::<usize>());
        let eps = T::from_f(1e-8);
        let mut out = Array4::<T>::zeros((b, dims.len(), h, w));
        for bi in 0..b {
            for y in 0..h {
                for xx in 0..w {
                    let mut ch = 0;
                    for (f, &d) in dims.iter().enumerate() {
                        let mut acc = eps * eps;
                        for k in 0..d {
                            let v = xv[[bi, ch + k, y, xx]];
                            acc = acc + v * v;
                        }
                        out[[bi, f, y, xx]] = acc.sqrt();
                        ch += d;
                    }
                }
            }
        }
        let dims = dims.to_vec();
        self.push(
            out.into_dyn(),
            vec![x],
            Some(Box::new(FieldNorm { dims, eps })),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::super::{fd_check_grad, Graph};
    use super::*;
    use ndarray::ArrayD;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fd_conv_like<F>(pshape: &[usize], build: F)
    where
        F: Fn(&mut Graph<f64>, NodeId) -> NodeId,
    {
        let worst = fd_check_grad(pshape, 7, build);
        assert!(worst < 1e-6, "worst relative grad error {worst}");
    }

    fn rand_input(shape: (usize, usize, usize, usize), seed: u64) -> ArrayD<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ArrayD::from_shape_simple_fn(
            IxDyn(&[shape.0, shape.1, shape.2, shape.3]),
            || rng.gen_range(-1.0..1.0),
        )
    }

    #[test]
    fn conv2d_bank_grad_matches_fd() {
        fd_conv_like(&[3, 2, 3, 3], |g, bank| {
            let x = g.input(rand_input((2, 2, 8, 8), 3));
            let y = g.conv2d(x, bank, ConvGeom { kernel: 3, pad: 1 });
            let r = g.tanh(y);
            g.mean_all(r)
        });
    }

    #[test]
    fn conv2d_input_grad_matches_fd() {
        fd_conv_like(&[1, 2, 6, 6], |g, xin| {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let bank = g.input(ArrayD::from_shape_simple_fn(
                IxDyn(&[3, 2, 3, 3]),
                || rng.gen_range(-0.5..0.5),
            ));
            let x4 = g.reshape(xin, &[1, 2, 6, 6]);
            let y = g.conv2d(x4, bank, ConvGeom { kernel: 3, pad: 1 });
            let s = g.square(y);
            g.mean_all(s)
        });
    }

    #[test]
    fn maxpool_grad_matches_fd() {
        fd_conv_like(&[1, 2, 8, 8], |g, xin| {
            let x4 = g.reshape(xin, &[1, 2, 8, 8]);
            let y = g.max_pool2d(x4, 2);
            let s = g.square(y);
            g.mean_all(s)
        });
    }

    #[test]
    fn channel_block_max_grad_matches_fd() {
        fd_conv_like(&[1, 8, 4, 4], |g, xin| {
            let x4 = g.reshape(xin, &[1, 8, 4, 4]);
            let y = g.channel_block_max(x4, 4);
            let s = g.square(y);
            g.mean_all(s)
        });
    }

    #[test]
    fn gated_grads_match_fd() {
        // gate path
        fd_conv_like(&[1, 2, 3, 3], |g, gates| {
            let g4 = g.reshape(gates, &[1, 2, 3, 3]);
            let feats = g.input(rand_input((1, 4, 3, 3), 5));
            let y = g.gated(g4, feats, &[2, 2]);
            let s = g.square(y);
            g.mean_all(s)
        });
        // feature path
        fd_conv_like(&[1, 4, 3, 3], |g, feats| {
            let f4 = g.reshape(feats, &[1, 4, 3, 3]);
            let gates = g.input(rand_input((1, 2, 3, 3), 6));
            let y = g.gated(gates, f4, &[2, 2]);
            let s = g.square(y);
            g.mean_all(s)
        });
    }

    #[test]
    fn field_norm_grad_matches_fd() {
        fd_conv_like(&[1, 5, 2, 2], |g, xin| {
            let x4 = g.reshape(xin, &[1, 5, 2, 2]);
            let y = g.field_norm(x4, &[2, 2, 1]);
            let s = g.square(y);
            g.mean_all(s)
        });
    }

    #[test]
    fn conv2d_matches_direct_computation() {
        // 1x1 input channel, identity-like kernel
        let mut g = Graph::<f64>::new();
        let x = g.input(ArrayD::from_shape_vec(
            IxDyn(&[1, 1, 2, 2]),
            vec![1.0, 2.0, 3.0, 4.0],
        )
        .unwrap());
        let mut k = ArrayD::zeros(IxDyn(&[1, 1, 3, 3]));
        k[[0, 0, 1, 1]] = 1.0; // center tap
        k[[0, 0, 1, 2]] = 0.5; // right neighbour
        let bank = g.input(k);
        let y = g.conv2d(x, bank, ConvGeom { kernel: 3, pad: 1 });
        let v = g.value(y);
        assert_eq!(v.shape(), &[1, 1, 2, 2]);
        assert!((v[[0, 0, 0, 0]] - (1.0 + 0.5 * 2.0)).abs() < 1e-12);
        assert!((v[[0, 0, 0, 1]] - 2.0).abs() < 1e-12);
        assert!((v[[0, 0, 1, 0]] - (3.0 + 0.5 * 4.0)).abs() < 1e-12);
        assert!((v[[0, 0, 1, 1]] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_input_conv_is_zero() {
        let mut g = Graph::<f32>::new();
        let x = g.input(ArrayD::zeros(IxDyn(&[2, 3, 4, 4])));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bank = g.input(ArrayD::from_shape_simple_fn(IxDyn(&[5, 3, 3, 3]), || {
            rng.gen_range(-1.0f32..1.0)
        }));
        let y = g.conv2d(x, bank, ConvGeom { kernel: 3, pad: 1 });
        assert!(g.value(y).iter().all(|&v| v == 0.0));
    }
}
