//! Reverse-mode automatic differentiation over dense `ndarray` tensors.
//!
//! A [`Graph`] is a Wengert list built during the forward pass; calling
//! [`Graph::backward`] walks it in reverse and accumulates gradients into a
//! [`ParamStore`]. Graphs are cheap, single-use objects: build one per
//! training step and drop it afterwards.
//!
//! Everything is generic over [`Scalar`] so the same layer code runs in f32
//! for training and in f64 for finite-difference gradient checks.

use ndarray::{ArrayD, IxDyn};
use std::collections::BTreeMap;

pub mod adam;
pub mod conv;
pub mod ops;

pub use adam::Adam;

/// Element type of all tensors: f32 for training, f64 for numeric checks.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
    fn from_f(v: f64) -> Self;
    fn to_f(self) -> f64;
}

impl Scalar for f32 {
    fn from_f(v: f64) -> Self {
        v as f32
    }
    fn to_f(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f(v: f64) -> Self {
        v
    }
    fn to_f(self) -> f64 {
        self
    }
}

/// Index of a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

/// Index of a parameter in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// Backward rule of one op. `grad_out` is dL/d(output); the implementation
/// returns dL/d(parent) for each parent, `None` for parents that need none.
pub trait BackwardOp<T: Scalar>: Send {
    fn backward(
        &self,
        grad_out: &ArrayD<T>,
        parents: &[&ArrayD<T>],
        output: &ArrayD<T>,
    ) -> Vec<Option<ArrayD<T>>>;
}

pub(crate) struct Node<T: Scalar> {
    pub value: ArrayD<T>,
    pub parents: Vec<NodeId>,
    pub op: Option<Box<dyn BackwardOp<T>>>,
    pub needs_grad: bool,
    pub param: Option<ParamId>,
}

/// Named trainable tensors plus their gradient accumulators.
///
/// Entries keep insertion order so that optimizer sweeps and checkpoint
/// layouts are deterministic.
pub struct ParamStore<T: Scalar> {
    entries: Vec<ParamEntry<T>>,
    by_name: BTreeMap<String, ParamId>,
    /// Bumped on every optimizer step; lets layers cache derived tensors.
    pub version: u64,
}

pub struct ParamEntry<T: Scalar> {
    pub name: String,
    pub value: ArrayD<T>,
    pub grad: ArrayD<T>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { entries: Vec::new(), by_name: BTreeMap::new(), version: 0 }
    }

    pub fn insert(&mut self, name: &str, value: ArrayD<T>) -> ParamId {
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter name {name}"
        );
        let id = ParamId(self.entries.len());
        let grad = ArrayD::zeros(value.raw_dim());
        self.entries.push(ParamEntry { name: name.to_string(), value, grad });
        self.by_name.insert(name.to_string(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn value(&self, id: ParamId) -> &ArrayD<T> {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut ArrayD<T> {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &ArrayD<T> {
        &self.entries[id.0].grad
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &ParamEntry<T>)> {
        self.entries.iter().enumerate().map(|(i, e)| (ParamId(i), e))
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.fill(T::zero());
        }
    }

    /// Copies values from `src` entry-by-entry (same layout required).
    pub fn copy_values_from(&mut self, src: &ParamStore<T>) {
        assert_eq!(self.entries.len(), src.entries.len());
        for (dst, s) in self.entries.iter_mut().zip(&src.entries) {
            dst.value.assign(&s.value);
        }
        self.version += 1;
    }

    /// In-place soft update: `self = tau * src + (1 - tau) * self`.
    pub fn soft_update_from(&mut self, src: &ParamStore<T>, tau: T) {
        assert_eq!(self.entries.len(), src.entries.len());
        let keep = T::one() - tau;
        for (dst, s) in self.entries.iter_mut().zip(&src.entries) {
            dst.value.zip_mut_with(&s.value, |d, &s| *d = *d * keep + s * tau);
        }
        self.version += 1;
    }
}

/// Single-use computation tape.
pub struct Graph<T: Scalar> {
    pub(crate) nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub(crate) fn push(
        &mut self,
        value: ArrayD<T>,
        parents: Vec<NodeId>,
        op: Option<Box<dyn BackwardOp<T>>>,
    ) -> NodeId {
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { value, parents, op, needs_grad, param: None });
        id
    }

    /// Leaf with no gradient (observations, constants, targets).
    pub fn input(&mut self, value: ArrayD<T>) -> NodeId {
        self.push(value, Vec::new(), None)
    }

    /// Leaf bound to a parameter; its gradient is accumulated by `backward`.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> NodeId {
        let node = NodeId(self.nodes.len());
        self.nodes.push(Node {
            value: store.value(id).clone(),
            parents: Vec::new(),
            op: None,
            needs_grad: true,
            param: Some(id),
        });
        node
    }

    /// Leaf carrying a precomputed value that still routes gradients to a
    /// parameter set elsewhere (used by cached filter-bank expansions).
    pub fn leaf_with_backptr(
        &mut self,
        value: ArrayD<T>,
        parents: Vec<NodeId>,
        op: Box<dyn BackwardOp<T>>,
    ) -> NodeId {
        self.push(value, parents, Some(op))
    }

    pub fn value(&self, id: NodeId) -> &ArrayD<T> {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> T {
        let v = &self.nodes[id.0].value;
        debug_assert_eq!(v.len(), 1);
        *v.iter().next().unwrap()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Runs reverse-mode accumulation from `loss` (must be a single scalar)
    /// and adds parameter gradients into `store`.
    pub fn backward(&mut self, loss: NodeId, store: &mut ParamStore<T>) {
        assert_eq!(self.nodes[loss.0].value.len(), 1, "loss must be scalar");
        let mut grads: Vec<Option<ArrayD<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(ArrayD::from_elem(self.nodes[loss.0].value.raw_dim(), T::one()));

        for i in (0..=loss.0).rev() {
            let Some(grad_out) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            if let Some(pid) = self.nodes[i].param {
                store.entries[pid.0].grad.zip_mut_with(&grad_out, |g, &d| *g = *g + d);
            }
            if self.nodes[i].op.is_none() {
                continue;
            }
            let parent_ids = self.nodes[i].parents.clone();
            let parent_vals: Vec<&ArrayD<T>> =
                parent_ids.iter().map(|p| &self.nodes[p.0].value).collect();
            let op = self.nodes[i].op.as_ref().unwrap();
            let pgrads = op.backward(&grad_out, &parent_vals, &self.nodes[i].value);
            debug_assert_eq!(pgrads.len(), parent_ids.len());
            for (pid, pg) in parent_ids.iter().zip(pgrads) {
                let Some(pg) = pg else { continue };
                if !self.nodes[pid.0].needs_grad {
                    continue;
                }
                match &mut grads[pid.0] {
                    Some(acc) => acc.zip_mut_with(&pg, |a, &b| *a = *a + b),
                    slot => *slot = Some(pg),
                }
            }
        }
    }
}

/// Convenience: dynamic-dim array from a shape and a fill closure.
pub fn arr_from_fn<T: Scalar>(shape: &[usize], mut f: impl FnMut() -> T) -> ArrayD<T> {
    ArrayD::from_shape_simple_fn(IxDyn(shape), &mut f)
}

/// Central finite-difference gradient checking, shared by the op tests and
/// the per-layer acceptance checks. `build` maps (graph, param node) to a
/// scalar loss node; the check compares `backward`'s gradient for every
/// entry of the parameter against (L(p+h) - L(p-h)) / 2h in f64.
pub fn fd_check_grad<F>(shape: &[usize], seed: u64, build: F) -> f64
where
    F: Fn(&mut Graph<f64>, NodeId) -> NodeId,
{
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::<f64>::new();
    let init = ArrayD::from_shape_simple_fn(IxDyn(shape), || rng.gen_range(-1.0..1.0));
    let pid = store.insert("p", init);

    let mut g = Graph::new();
    let p = g.param(&store, pid);
    let loss = build(&mut g, p);
    store.zero_grads();
    g.backward(loss, &mut store);
    let analytic = store.grad(pid).clone();

    let eps = 1e-6;
    let mut worst = 0.0f64;
    for i in 0..store.value(pid).len() {
        let orig = store.value(pid).as_slice().unwrap()[i];
        let eval = |store: &ParamStore<f64>| {
            let mut g = Graph::new();
            let p = g.param(store, pid);
            let loss = build(&mut g, p);
            g.scalar(loss)
        };
        store.value_mut(pid).as_slice_mut().unwrap()[i] = orig + eps;
        let lp = eval(&store);
        store.value_mut(pid).as_slice_mut().unwrap()[i] = orig - eps;
        let lm = eval(&store);
        store.value_mut(pid).as_slice_mut().unwrap()[i] = orig;
        let num = (lp - lm) / (2.0 * eps);
        let ana = analytic.as_slice().unwrap()[i];
        let denom = num.abs().max(ana.abs()).max(1e-8);
        worst = worst.max((num - ana).abs() / denom);
    }
    worst
}
