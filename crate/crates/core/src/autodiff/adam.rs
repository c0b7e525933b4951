//! Adam optimizer over a [`ParamStore`].

use super::{ParamStore, Scalar};
use ndarray::ArrayD;

pub struct Adam<T: Scalar> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    m: Vec<ArrayD<T>>,
    v: Vec<ArrayD<T>>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(store: &ParamStore<T>, lr: T) -> Self {
        let m = store.iter().map(|(_, e)| ArrayD::zeros(e.value.raw_dim())).collect();
        let v = store.iter().map(|(_, e)| ArrayD::zeros(e.value.raw_dim())).collect();
        Adam {
            lr,
            beta1: T::from_f(0.9),
            beta2: T::from_f(0.999),
            eps: T::from_f(1e-8),
            m,
            v,
            t: 0,
        }
    }

    /// One update from the gradients currently held in `store`; clears them.
    pub fn step(&mut self, store: &mut ParamStore<T>) {
        self.t += 1;
        let b1 = self.beta1;
        let b2 = self.beta2;
        let bc1 = T::one() - b1.powi(self.t);
        let bc2 = T::one() - b2.powi(self.t);
        let lr_t = self.lr * bc2.sqrt() / bc1;
        for (i, e) in store.entries.iter_mut().enumerate() {
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let ms = m.as_slice_mut().unwrap();
            let vs = v.as_slice_mut().unwrap();
            let ws = e.value.as_slice_mut().unwrap();
            let gs = e.grad.as_slice_mut().unwrap();
            for j in 0..ws.len() {
                let g = gs[j];
                ms[j] = b1 * ms[j] + (T::one() - b1) * g;
                vs[j] = b2 * vs[j] + (T::one() - b2) * g * g;
                ws[j] = ws[j] - lr_t * ms[j] / (vs[j].sqrt() + self.eps);
                gs[j] = T::zero();
            }
        }
        store.version += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Graph;
    use ndarray::IxDyn;

    #[test]
    fn adam_minimizes_quadratic() {
        let mut store = ParamStore::<f64>::new();
        let pid = store.insert("x", ArrayD::from_elem(IxDyn(&[3]), 5.0));
        let mut opt = Adam::new(&store, 0.1);
        for _ in 0..500 {
            let mut g = Graph::new();
            let p = g.param(&store, pid);
            let sq = g.square(p);
            let loss = g.sum_all(sq);
            g.backward(loss, &mut store);
            opt.step(&mut store);
        }
        assert!(store.value(pid).iter().all(|v| v.abs() < 1e-3));
    }
}
