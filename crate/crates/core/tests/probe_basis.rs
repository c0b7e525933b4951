use equisac::autodiff::Graph;
use equisac::equinet::basis::*;
use equisac::equinet::{build_expansion, FilterExpansion, GeometricTensor};
use equisac::group::*;
use ndarray::{Array4, ArrayD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

#[test]
fn probe_counts_and_equivariance() {
    let so2 = GroupSpec::so2(3);
    let triv = Representation::trivial(so2);
    let rho1 = Representation::standard(so2);
    for (name, ri, ro, k) in [
        ("triv->triv 3", &triv, &triv, 3usize),
        ("triv->rho1 3", &triv, &rho1, 3),
        ("rho1->rho1 3", &rho1, &rho1, 3),
        ("rho1->rho1 5", &rho1, &rho1, 5),
        ("rho1->rho1 1", &rho1, &rho1, 1),
        ("triv->rho1 1", &triv, &rho1, 1),
    ] {
        let b = steerable_basis_analytic(so2, ri, ro, k).unwrap();
        println!("{name}: n_b = {}", b.nrows());
    }

    // equivariance probe
    let in_t = FieldType::new(so2, vec![triv.clone()]);
    let out_t = FieldType::new(so2, vec![triv.clone(), rho1.clone()]);
    let exp: Arc<FilterExpansion<f64>> = Arc::new(build_expansion(&in_t, &out_t, 5).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let theta = ArrayD::from_shape_simple_fn(ndarray::IxDyn(&[exp.free_len]), || rng.gen_range(-1.0..1.0));
    let bank = exp.apply(&theta);
    let n = 32;
    let mut x = Array4::<f64>::zeros((1, 1, n, n));
    let half = (n as f64 - 1.0) / 2.0;
    for r in 0..n {
        for c in 0..n {
            let (dx, dy) = (c as f64 - half - 4.0, half - r as f64 + 3.0);
            x[[0, 0, r, c]] = (-(dx * dx + dy * dy) / 30.0).exp();
        }
    }
    let x = x.into_dyn();
    for deg in [5.0f64, 15.0, 30.0, 45.0] {
        let g_el = GroupElement::rotation(deg.to_radians());
        let gx = GeometricTensor::new(x.clone(), in_t.clone()).transform(g_el).unwrap();
        let mut g = Graph::<f64>::new();
        let xin = g.input(gx.data);
        let bank_n = g.input(bank.clone());
        let y1 = g.conv2d(xin, bank_n, equisac::autodiff::conv::ConvGeom { kernel: 5, pad: 2 });
        let a = g.value(y1).clone();
        let mut g2 = Graph::<f64>::new();
        let xin = g2.input(x.clone());
        let bank_n = g2.input(bank.clone());
        let y = g2.conv2d(xin, bank_n, equisac::autodiff::conv::ConvGeom { kernel: 5, pad: 2 });
        let gy = GeometricTensor::new(g2.value(y).clone(), out_t.clone()).transform(g_el).unwrap();
        let num: f64 = a.iter().zip(gy.data.iter()).map(|(p, q)| (p - q).powi(2)).sum();
        let den: f64 = gy.data.iter().map(|v| v * v).sum();
        println!("deg {deg}: rel err {:.6}", (num / den).sqrt());
    }

    // residual of each basis vector under the 72-angle sampled constraint
    let samples: Vec<GroupElement> =
        (0..72).map(|i| GroupElement::rotation(std::f64::consts::TAU * i as f64 / 72.0)).collect();
    let b = steerable_basis_analytic(so2, &rho1, &rho1, 5).unwrap();
    let worst = basis_constraint_residual(&samples, &rho1, &rho1, 5, &b);
    println!("worst residual of analytic basis: {worst:.4}");
}
