//! The equivariant convolution layer.

use super::expand::{build_expansion, FilterExpansion};
use super::NnError;
use crate::autodiff::conv::ConvGeom;
use crate::autodiff::{Graph, NodeId, ParamId, ParamStore, Scalar};
use crate::group::{FieldType, RepKind};
use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct EquivariantConvSpec {
    pub in_type: FieldType,
    pub out_type: FieldType,
    pub kernel: usize,
    pub pad: usize,
}

impl EquivariantConvSpec {
    pub fn same(in_type: FieldType, out_type: FieldType, kernel: usize) -> Self {
        let pad = (kernel - 1) / 2;
        EquivariantConvSpec { in_type, out_type, kernel, pad }
    }

    pub fn valid(in_type: FieldType, out_type: FieldType, kernel: usize) -> Self {
        EquivariantConvSpec { in_type, out_type, kernel, pad: 0 }
    }
}

/// One equivariant conv layer: free parameters expand through the layer's
/// [`FilterExpansion`] into the effective bank; biases exist on trivial
/// output fields only.
pub struct EquiConv<T: Scalar> {
    pub spec: EquivariantConvSpec,
    pub expansion: Arc<FilterExpansion<T>>,
    pub theta: ParamId,
    pub bias: Option<ParamId>,
    bias_channels: Vec<u32>,
}

impl<T: Scalar> EquiConv<T> {
    /// Builds the expansion, registers parameters and initializes them with
    /// fan-in-scaled uniform noise (rescaled so the expanded bank has the
    /// usual He magnitude).
    pub fn build<R: Rng>(
        name: &str,
        spec: EquivariantConvSpec,
        store: &mut ParamStore<T>,
        rng: &mut R,
        with_bias: bool,
    ) -> Result<Self, NnError> {
        let expansion: FilterExpansion<T> =
            build_expansion(&spec.in_type, &spec.out_type, spec.kernel)?;
        let expansion = Arc::new(expansion);

        let fan_in = spec.in_type.total_dim() * spec.kernel * spec.kernel;
        let bound = (6.0 / fan_in as f64).sqrt();
        let mut theta0 = ArrayD::from_shape_simple_fn(IxDyn(&[expansion.free_len]), || {
            T::from_f(rng.gen_range(-bound..bound))
        });
        // normalize via the realized bank statistics
        let bank = expansion.apply(&theta0);
        let n = bank.len() as f64;
        let var = bank.iter().map(|v| v.to_f() * v.to_f()).sum::<f64>() / n;
        if var > 0.0 {
            let target = (2.0 / fan_in as f64).sqrt();
            let scale = T::from_f(target / var.sqrt() * (1.0 / 3.0f64.sqrt())); // uniform std
            theta0.mapv_inplace(|v| v * scale);
        }
        let theta = store.insert(&format!("{name}.theta"), theta0);

        let mut bias_channels = Vec::new();
        if with_bias {
            let offs = spec.out_type.offsets();
            for (f, rep) in spec.out_type.fields.iter().enumerate() {
                if matches!(rep.kind, RepKind::Trivial | RepKind::Irrep(0)) {
                    bias_channels.push(offs[f] as u32);
                }
            }
        }
        let bias = if bias_channels.is_empty() {
            None
        } else {
            Some(store.insert(
                &format!("{name}.bias"),
                ArrayD::zeros(IxDyn(&[bias_channels.len()])),
            ))
        };
        Ok(EquiConv { spec, expansion, theta, bias, bias_channels })
    }

    pub fn geom(&self) -> ConvGeom {
        ConvGeom { kernel: self.spec.kernel, pad: self.spec.pad }
    }

    /// Forward pass with parameters on the tape (gradients flow).
    pub fn forward(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: NodeId) -> NodeId {
        let theta = g.param(store, self.theta);
        let bank = g.expand_filters(theta, &self.expansion);
        let mut y = g.conv2d(x, bank, self.geom());
        if let Some(bias) = self.bias {
            let b = g.param(store, bias);
            let full = g.scatter_bias(b, &self.bias_channels, self.spec.out_type.total_dim());
            y = g.add_bias(y, full);
        }
        y
    }

    /// Forward pass with frozen parameters (no gradient bookkeeping);
    /// used for target networks and greedy evaluation.
    pub fn forward_frozen(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: NodeId) -> NodeId {
        let bank = self.expansion.apply(store.value(self.theta));
        let bank = g.input(bank);
        let mut y = g.conv2d(x, bank, self.geom());
        if let Some(bias) = self.bias {
            let mut full = ArrayD::zeros(IxDyn(&[self.spec.out_type.total_dim()]));
            let bv = store.value(bias);
            for (i, &c) in self.bias_channels.iter().enumerate() {
                full[[c as usize]] = bv[[i]];
            }
            let full = g.input(full);
            y = g.add_bias(y, full);
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equinet::GeometricTensor;
    use crate::group::{GroupElement, GroupSpec};
    use ndarray::IxDyn;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_obs(b: usize, c: usize, n: usize, seed: u64) -> ArrayD<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ArrayD::from_shape_simple_fn(IxDyn(&[b, c, n, n]), || rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn d4_conv_is_exactly_equivariant() {
        let d4 = GroupSpec::dihedral(4);
        let in_t = FieldType::trivial(d4, 2);
        let out_t = FieldType::regular(d4, 3);
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let conv = EquiConv::build(
            "c",
            EquivariantConvSpec::same(in_t.clone(), out_t.clone(), 3),
            &mut store,
            &mut rng,
            true,
        )
        .unwrap();

        let x = rand_obs(2, 2, 8, 1);
        for g_el in d4.elements().unwrap() {
            let gx = GeometricTensor::new(x.clone(), in_t.clone()).transform(g_el).unwrap();

            let mut g = Graph::new();
            let xin = g.input(gx.data.clone());
            let y_of_gx = conv.forward(&mut g, &store, xin);
            let y_of_gx = g.value(y_of_gx).clone();

            let mut g2 = Graph::new();
            let xin = g2.input(x.clone());
            let y = conv.forward(&mut g2, &store, xin);
            let gy = GeometricTensor::new(g2.value(y).clone(), out_t.clone())
                .transform(g_el)
                .unwrap();

            let max_err = y_of_gx
                .iter()
                .zip(gy.data.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(max_err < 1e-12, "equivariance error {max_err} at {g_el:?}");
        }
    }

    #[test]
    fn so2_conv_is_approximately_equivariant_at_30_degrees() {
        let so2 = GroupSpec::so2(3);
        let triv = crate::group::Representation::trivial(so2);
        let std_rep = crate::group::Representation::standard(so2);
        let in_t = FieldType::new(so2, vec![triv.clone()]);
        let out_t = FieldType::new(so2, vec![triv.clone(), std_rep]);
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let conv = EquiConv::build(
            "c",
            EquivariantConvSpec::same(in_t.clone(), out_t.clone(), 5),
            &mut store,
            &mut rng,
            false,
        )
        .unwrap();

        // smooth blob input
        let n = 32;
        let mut x = ndarray::Array4::<f64>::zeros((1, 1, n, n));
        let half = (n as f64 - 1.0) / 2.0;
        for r in 0..n {
            for c in 0..n {
                let (dx, dy) = (c as f64 - half - 4.0, half - r as f64 + 3.0);
                x[[0, 0, r, c]] = (-(dx * dx + dy * dy) / 30.0).exp();
            }
        }
        let x = x.into_dyn();
        let g_el = GroupElement::rotation(30f64.to_radians());

        let gx = GeometricTensor::new(x.clone(), in_t.clone()).transform(g_el).unwrap();
        let mut g = Graph::new();
        let xin = g.input(gx.data);
        let a = conv.forward(&mut g, &store, xin);
        let a = g.value(a).clone();

        let mut g2 = Graph::new();
        let xin = g2.input(x.clone());
        let y = conv.forward(&mut g2, &store, xin);
        let gy = GeometricTensor::new(g2.value(y).clone(), out_t).transform(g_el).unwrap();

        let num: f64 = a.iter().zip(gy.data.iter()).map(|(p, q)| (p - q).powi(2)).sum();
        let den: f64 = gy.data.iter().map(|v| v * v).sum();
        let rel = (num / den).sqrt();
        assert!(rel < 0.05, "relative equivariance error {rel}");
    }

    #[test]
    fn conv_gradients_pass_finite_differences() {
        let d4 = GroupSpec::dihedral(4);
        let in_t = FieldType::trivial(d4, 1);
        let out_t = FieldType::regular(d4, 1);
        let spec = EquivariantConvSpec::same(in_t, out_t, 3);
        let exp: Arc<FilterExpansion<f64>> =
            Arc::new(build_expansion(&spec.in_type, &spec.out_type, 3).unwrap());
        let x = rand_obs(1, 1, 8, 9);
        let worst = crate::autodiff::fd_check_grad(&[9], 11, |g, theta| {
            let bank = g.expand_filters(theta, &exp);
            let xin = g.input(x.clone());
            let y = g.conv2d(xin, bank, ConvGeom { kernel: 3, pad: 1 });
            let t = g.tanh(y);
            g.mean_all(t)
        });
        assert!(worst < 1e-6, "worst fd error {worst}");
    }
}
