//! Actor / critic network builders.
//!
//! The actor maps the 2-channel observation to a mixed-representation 1x1
//! head: one standard field for the (x, y) action mean plus eight trivial
//! fields for the remaining means and all five log-stds. The critic encodes
//! the observation to a 64-channel invariant-capable feature at 1x1,
//! concatenates the embedded action and produces two invariant Q scalars.

use super::conv::{EquiConv, EquivariantConvSpec};
use super::NnError;
use crate::action::{ActionBounds, ActionVector};
use crate::autodiff::{Graph, NodeId, ParamStore, Scalar};
use crate::group::{FieldType, GroupKind, GroupSpec, RepKind, Representation};
use ndarray::{Array2, ArrayD, IxDyn};
use rand::Rng;

/// Width of each trunk stage, counted in regular fields for finite groups
/// and in per-frequency multiplicities for the continuous groups.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChannelSchedule {
    pub stages: [usize; 5],
    /// fields of the 4x4 -> 1x1 reduction
    pub dense_fields: usize,
    /// fields of the following 1x1 mixing layer
    pub head_fields: usize,
}

impl Default for ChannelSchedule {
    fn default() -> Self {
        // tuned so the default D4 actor lands on the ~1.1M parameter budget
        ChannelSchedule { stages: [1, 2, 4, 8, 16], dense_fields: 384, head_fields: 64 }
    }
}

impl ChannelSchedule {
    /// A deliberately small schedule for unit tests and smoke runs.
    pub fn tiny() -> Self {
        ChannelSchedule { stages: [1, 1, 1, 1, 1], dense_fields: 4, head_fields: 4 }
    }

    /// Critic encoder widths: trunk stages are shared; the bottleneck is
    /// fixed at 64 channels by construction.
    pub fn critic_q_fields(&self) -> usize {
        64
    }
}

/// Observation field type: depth + in-hand indicator, both trivial.
pub fn obs_type(group: GroupSpec) -> FieldType {
    FieldType::trivial(group, 2)
}

/// Action embedding: (x, y) as the standard field, z and lambda trivial,
/// theta through the reflection-sign representation so the critic stays
/// invariant when reflections negate the yaw displacement.
pub fn action_embed_type(group: GroupSpec) -> FieldType {
    FieldType::new(
        group,
        vec![
            Representation::standard(group),
            Representation::trivial(group),
            Representation::reflection_sign(group),
            Representation::trivial(group),
        ],
    )
}

/// Actor head: 1 standard field (xy mean) + 8 trivial fields
/// (z/theta/lambda means + 5 log-stds).
pub fn actor_head_type(group: GroupSpec) -> FieldType {
    let mut fields = vec![Representation::standard(group)];
    fields.extend(vec![Representation::trivial(group); 8]);
    FieldType::new(group, fields)
}

/// Hidden type of one trunk stage.
fn stage_type(group: GroupSpec, mult: usize) -> FieldType {
    match group.kind {
        GroupKind::Cyclic | GroupKind::Dihedral => FieldType::regular(group, mult),
        GroupKind::So2 => {
            let mut fields = vec![Representation::trivial(group); mult];
            for m in 1..=group.max_frequency.max(1) {
                fields.extend(vec![Representation::irrep(group, m); mult]);
            }
            FieldType::new(group, fields)
        }
        GroupKind::O2 => {
            let mut fields = vec![Representation::trivial(group); mult];
            fields.extend(vec![Representation::o2_irrep(group, 0); mult]);
            for m in 1..=group.max_frequency.max(1) {
                fields.extend(vec![Representation::o2_irrep(group, m); mult]);
            }
            FieldType::new(group, fields)
        }
    }
}

/// Conv output type for a gated stage: features plus one trivial gate per
/// non-trivial field.
fn with_gates(features: &FieldType) -> (FieldType, usize, Vec<usize>) {
    let n_triv = features
        .fields
        .iter()
        .filter(|f| matches!(f.kind, RepKind::Trivial | RepKind::Irrep(0)))
        .count();
    let nontriv: Vec<&Representation> = features
        .fields
        .iter()
        .filter(|f| !matches!(f.kind, RepKind::Trivial | RepKind::Irrep(0)))
        .collect();
    let irrep_dims: Vec<usize> = nontriv.iter().map(|f| f.dimension()).collect();
    let mut fields: Vec<Representation> =
        vec![Representation::trivial(features.group); n_triv];
    fields.extend(nontriv.iter().map(|f| (*f).clone()));
    fields.extend(vec![Representation::trivial(features.group); irrep_dims.len()]);
    (FieldType::new(features.group, fields), n_triv, irrep_dims)
}

enum StageOp<T: Scalar> {
    Conv(EquiConv<T>),
    Relu,
    Gated { n_triv: usize, irrep_dims: Vec<usize> },
    MaxPool(usize),
    AvgPool(usize),
    /// field norms of the non-trivial fields concatenated after the
    /// trivial features: output is all-trivial
    NormCat { n_triv: usize, irrep_dims: Vec<usize> },
}

pub(crate) struct StageSeq<T: Scalar> {
    ops: Vec<StageOp<T>>,
}

impl<T: Scalar> StageSeq<T> {
    fn forward(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: NodeId, frozen: bool) -> NodeId {
        let mut cur = x;
        for op in &self.ops {
            cur = match op {
                StageOp::Conv(conv) => {
                    if frozen {
                        conv.forward_frozen(g, store, cur)
                    } else {
                        conv.forward(g, store, cur)
                    }
                }
                StageOp::Relu => g.relu(cur),
                StageOp::Gated { n_triv, irrep_dims } => {
                    let irr: usize = irrep_dims.iter().sum();
                    let n_gates = irrep_dims.len();
                    let t = g.slice_ax1(cur, 0, *n_triv);
                    let t = g.relu(t);
                    let f = g.slice_ax1(cur, *n_triv, irr);
                    let gates = g.slice_ax1(cur, *n_triv + irr, n_gates);
                    let gated = g.gated(gates, f, irrep_dims);
                    g.concat_ax1(&[t, gated])
                }
                StageOp::MaxPool(w) => g.max_pool2d(cur, *w),
                StageOp::AvgPool(w) => g.avg_pool2d(cur, *w),
                StageOp::NormCat { n_triv, irrep_dims } => {
                    let irr: usize = irrep_dims.iter().sum();
                    let t = g.slice_ax1(cur, 0, *n_triv);
                    let f = g.slice_ax1(cur, *n_triv, irr);
                    let n = g.field_norm(f, irrep_dims);
                    g.concat_ax1(&[t, n])
                }
            };
        }
        cur
    }
}

struct TrunkBuilder<'a, T: Scalar, R: Rng> {
    group: GroupSpec,
    store: &'a mut ParamStore<T>,
    rng: &'a mut R,
    prefix: String,
    ops: Vec<StageOp<T>>,
    cur_type: FieldType,
    layer_idx: usize,
}

impl<'a, T: Scalar, R: Rng> TrunkBuilder<'a, T, R> {
    fn new(
        group: GroupSpec,
        store: &'a mut ParamStore<T>,
        rng: &'a mut R,
        prefix: &str,
        in_type: FieldType,
    ) -> Self {
        TrunkBuilder {
            group,
            store,
            rng,
            prefix: prefix.to_string(),
            ops: Vec::new(),
            cur_type: in_type,
            layer_idx: 0,
        }
    }

    /// conv + activation appropriate for the group's hidden type
    fn stage(&mut self, out: FieldType, kernel: usize, valid: bool) -> Result<(), NnError> {
        let name = format!("{}.conv{}", self.prefix, self.layer_idx);
        self.layer_idx += 1;
        if self.group.is_finite() {
            let spec = if valid {
                EquivariantConvSpec::valid(self.cur_type.clone(), out.clone(), kernel)
            } else {
                EquivariantConvSpec::same(self.cur_type.clone(), out.clone(), kernel)
            };
            let conv = EquiConv::build(&name, spec, self.store, self.rng, true)?;
            self.ops.push(StageOp::Conv(conv));
            self.ops.push(StageOp::Relu);
            self.cur_type = out;
        } else {
            let (conv_out, n_triv, irrep_dims) = with_gates(&out);
            let spec = if valid {
                EquivariantConvSpec::valid(self.cur_type.clone(), conv_out.clone(), kernel)
            } else {
                EquivariantConvSpec::same(self.cur_type.clone(), conv_out.clone(), kernel)
            };
            let conv = EquiConv::build(&name, spec, self.store, self.rng, true)?;
            self.ops.push(StageOp::Conv(conv));
            self.ops.push(StageOp::Gated { n_triv, irrep_dims });
            self.cur_type = out;
        }
        Ok(())
    }

    fn pool(&mut self, window: usize) {
        if self.group.is_finite() {
            self.ops.push(StageOp::MaxPool(window));
        } else {
            self.ops.push(StageOp::AvgPool(window));
        }
    }

    /// plain conv with no activation (heads)
    fn linear(&mut self, out: FieldType, kernel: usize) -> Result<(), NnError> {
        let name = format!("{}.conv{}", self.prefix, self.layer_idx);
        self.layer_idx += 1;
        let spec = EquivariantConvSpec::valid(self.cur_type.clone(), out.clone(), kernel);
        let conv = EquiConv::build(&name, spec, self.store, self.rng, true)?;
        self.ops.push(StageOp::Conv(conv));
        self.cur_type = out;
        Ok(())
    }

    fn norm_cat(&mut self) {
        let n_triv = self
            .cur_type
            .fields
            .iter()
            .filter(|f| matches!(f.kind, RepKind::Trivial | RepKind::Irrep(0)))
            .count();
        let irrep_dims: Vec<usize> = self
            .cur_type
            .fields
            .iter()
            .filter(|f| !matches!(f.kind, RepKind::Trivial | RepKind::Irrep(0)))
            .map(|f| f.dimension())
            .collect();
        let total = n_triv + irrep_dims.len();
        self.ops.push(StageOp::NormCat { n_triv, irrep_dims });
        self.cur_type = FieldType::trivial(self.group, total);
    }

    fn finish(self) -> (StageSeq<T>, FieldType) {
        (StageSeq { ops: self.ops }, self.cur_type)
    }
}

/// Builds the five pooled conv stages shared by actor and critic encoders:
/// 128 -> 32 -> 16 -> 8 -> 4 spatial, widths from the schedule.
fn build_trunk<'a, T: Scalar, R: Rng>(
    b: &mut TrunkBuilder<'a, T, R>,
    schedule: &ChannelSchedule,
) -> Result<(), NnError> {
    let g = b.group;
    b.stage(stage_type(g, schedule.stages[0]), 3, false)?;
    b.pool(4);
    b.stage(stage_type(g, schedule.stages[1]), 3, false)?;
    b.pool(2);
    b.stage(stage_type(g, schedule.stages[2]), 3, false)?;
    b.pool(2);
    b.stage(stage_type(g, schedule.stages[3]), 3, false)?;
    b.pool(2);
    b.stage(stage_type(g, schedule.stages[4]), 3, false)?;
    Ok(())
}

/// Samples drawn by [`Actor::sample_on_graph`].
pub struct PolicySample {
    /// bounded action, shape (B, 5)
    pub action: NodeId,
    /// log-probability with the tanh/rescale change of variables, (B, 1)
    pub log_prob: NodeId,
}

pub struct PolicyHead {
    /// (B, 5): xy mean from the standard field, then z, theta, lambda
    pub mean: NodeId,
    /// (B, 5), clamped to [-20, 2]
    pub log_std: NodeId,
}

pub struct Actor<T: Scalar> {
    pub group: GroupSpec,
    pub schedule: ChannelSchedule,
    pub bounds: ActionBounds,
    pub store: ParamStore<T>,
    trunk: StageSeq<T>,
}

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

pub fn build_actor<T: Scalar, R: Rng>(
    group: GroupSpec,
    schedule: &ChannelSchedule,
    bounds: ActionBounds,
    rng: &mut R,
) -> Result<Actor<T>, NnError> {
    let mut store = ParamStore::new();
    let mut b = TrunkBuilder::new(group, &mut store, rng, "actor", obs_type(group));
    build_trunk(&mut b, schedule)?;
    let dense = stage_type(group, schedule.dense_fields / stage_width_divisor(group));
    b.stage(dense, 4, true)?;
    let mix = stage_type(group, schedule.head_fields / stage_width_divisor(group));
    b.stage(mix, 1, true)?;
    b.linear(actor_head_type(group), 1)?;
    let (trunk, out_type) = b.finish();
    debug_assert_eq!(out_type.total_dim(), 10);
    Ok(Actor { group, schedule: schedule.clone(), bounds, store, trunk })
}

/// The schedule counts regular fields; for finite groups a "field" is one
/// regular field, for continuous groups we match the per-frequency
/// multiplicity so channel counts stay comparable.
fn stage_width_divisor(group: GroupSpec) -> usize {
    match group.kind {
        GroupKind::Cyclic | GroupKind::Dihedral => 1,
        GroupKind::So2 | GroupKind::O2 => 4,
    }
}

impl<T: Scalar> Actor<T> {
    /// Trunk + head: observation batch node (B, 2, H, W) to policy head.
    pub fn forward_head(&self, g: &mut Graph<T>, obs: NodeId, frozen: bool) -> PolicyHead {
        let y = self.trunk.forward(g, &self.store, obs, frozen);
        let b = g.value(y).shape()[0];
        let flat = g.reshape(y, &[b, 10]);
        let mean = g.slice_ax1(flat, 0, 5);
        let raw_std = g.slice_ax1(flat, 5, 5);
        let log_std = g.clamp(raw_std, T::from_f(LOG_STD_MIN), T::from_f(LOG_STD_MAX));
        PolicyHead { mean, log_std }
    }

    /// Center and half-width of each bounded action dimension.
    pub fn squash_consts(&self) -> ([f64; 5], [f64; 5]) {
        let lows = self.bounds.lows();
        let highs = self.bounds.highs();
        let mut c = [0.0; 5];
        let mut s = [0.0; 5];
        for i in 0..5 {
            c[i] = 0.5 * (highs[i] + lows[i]);
            s[i] = 0.5 * (highs[i] - lows[i]);
        }
        (c, s)
    }

    /// Reparameterized sample with tanh squashing and per-dimension affine
    /// rescale to the action bounds. `eps` is standard normal, (B, 5).
    pub fn sample_on_graph(
        &self,
        g: &mut Graph<T>,
        head: &PolicyHead,
        eps: &Array2<T>,
    ) -> PolicySample {
        let b = eps.nrows();
        let (c, s) = self.squash_consts();
        let eps_node = g.input(eps.clone().into_dyn());
        let std = g.exp(head.log_std);
        let noise = g.mul(std, eps_node);
        let u = g.add(head.mean, noise);
        let t = g.tanh(u);

        let tile = |vals: [f64; 5]| {
            Array2::from_shape_fn((b, 5), |(_, j)| T::from_f(vals[j])).into_dyn()
        };
        let c_node = g.input(tile(c));
        let s_node = g.input(tile(s));
        let scaled = g.mul(t, s_node);
        let action = g.add(scaled, c_node);

        // log N(u; mean, std) = -0.5 eps^2 - log_std - 0.5 log(2 pi)
        let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        let base = eps.mapv(|e| {
            let ef = e.to_f();
            T::from_f(-0.5 * ef * ef - half_log_2pi)
        });
        let base = g.input(base.into_dyn());
        let neg_log_std = g.neg(head.log_std);
        let gauss = g.add(base, neg_log_std);

        // log |d tanh/du| = log(1 - tanh^2 u) = 2 (ln 2 - u - softplus(-2u))
        let m2u = g.scale(u, T::from_f(-2.0));
        let sp = g.softplus(m2u);
        let usum = g.add(u, sp);
        let ln2 = std::f64::consts::LN_2;
        let neg_u = g.neg(usum);
        let jac = g.add_scalar(neg_u, T::from_f(ln2));
        let jac = g.scale(jac, T::from_f(2.0));

        // log |d a/d t| = log s_d
        let log_s = {
            let mut v = [0.0; 5];
            for i in 0..5 {
                v[i] = s[i].ln();
            }
            g.input(tile(v))
        };

        let per_dim = g.sub(gauss, jac);
        let per_dim = g.sub(per_dim, log_s);
        let log_prob = g.sum_cols(per_dim);
        PolicySample { action, log_prob }
    }

    /// Frozen single-observation action for environment interaction.
    /// `eps` of `None` gives the deterministic (tanh of mean) action.
    pub fn act(&self, obs: &ArrayD<T>, eps: Option<[f64; 5]>) -> ActionVector {
        let mut g = Graph::new();
        let x = g.input(obs.clone());
        let head = self.forward_head(&mut g, x, true);
        let mean = g.value(head.mean).clone();
        let log_std = g.value(head.log_std).clone();
        let (c, s) = self.squash_consts();
        let mut a = [0.0; 5];
        for i in 0..5 {
            let mu = mean[[0, i]].to_f();
            let u = match eps {
                Some(e) => mu + log_std[[0, i]].to_f().exp() * e[i],
                None => mu,
            };
            a[i] = c[i] + s[i] * u.tanh();
        }
        ActionVector::from_array(a)
    }

    pub fn param_count(&self) -> usize {
        self.store.num_scalars()
    }
}

pub struct Critic<T: Scalar> {
    pub group: GroupSpec,
    pub schedule: ChannelSchedule,
    pub store: ParamStore<T>,
    encoder: StageSeq<T>,
    q1: StageSeq<T>,
    q2: StageSeq<T>,
    embed_type: FieldType,
}

pub fn build_critic<T: Scalar, R: Rng>(
    group: GroupSpec,
    schedule: &ChannelSchedule,
    rng: &mut R,
) -> Result<Critic<T>, NnError> {
    let mut store = ParamStore::new();

    // encoder: trunk stages then a 4x4 valid reduction to 64 channels
    let mut b = TrunkBuilder::new(group, &mut store, rng, "critic.enc", obs_type(group));
    build_trunk(&mut b, schedule)?;
    let bottleneck = critic_bottleneck_type(group);
    b.stage(bottleneck.clone(), 4, true)?;
    let (encoder, enc_type) = b.finish();

    let embed_type = action_embed_type(group);
    let cat_type = enc_type.concat(&embed_type);

    let q1 = build_q_block(group, schedule, &mut store, rng, "critic.q1", cat_type.clone())?;
    let q2 = build_q_block(group, schedule, &mut store, rng, "critic.q2", cat_type)?;
    Ok(Critic { group, schedule: schedule.clone(), store, encoder, q1, q2, embed_type })
}

/// 64-channel state feature at 1x1: regular fields for finite groups, a
/// 16x(rho0 + rho1 + rho2 + rho3) stack for the continuous ones.
fn critic_bottleneck_type(group: GroupSpec) -> FieldType {
    match group.kind {
        GroupKind::Cyclic | GroupKind::Dihedral => {
            let fields = 64 / group.size().expect("finite");
            FieldType::regular(group, fields.max(1))
        }
        GroupKind::So2 => {
            let mut fields = vec![Representation::trivial(group); 16];
            for m in 1..=3 {
                fields.extend(vec![Representation::irrep(group, m); 8]);
            }
            FieldType::new(group, fields)
        }
        GroupKind::O2 => {
            let mut fields = vec![Representation::trivial(group); 8];
            fields.extend(vec![Representation::o2_irrep(group, 0); 8]);
            for m in 1..=3 {
                fields.extend(vec![Representation::o2_irrep(group, m); 8]);
            }
            FieldType::new(group, fields)
        }
    }
}

fn build_q_block<T: Scalar, R: Rng>(
    group: GroupSpec,
    schedule: &ChannelSchedule,
    store: &mut ParamStore<T>,
    rng: &mut R,
    prefix: &str,
    in_type: FieldType,
) -> Result<StageSeq<T>, NnError> {
    let mut b = TrunkBuilder::new(group, store, rng, prefix, in_type);
    if group.is_finite() {
        let gsize = group.size().expect("finite group");
        let hidden = FieldType::regular(group, schedule.critic_q_fields() * 8 / gsize);
        b.stage(hidden.clone(), 1, true)?;
        b.stage(hidden, 1, true)?;
        b.linear(FieldType::trivial(group, 1), 1)?;
    } else {
        let mut fields = vec![Representation::trivial(group); 64];
        for m in 1..=3 {
            fields.extend(vec![Representation::irrep_like(group, m); 16]);
        }
        let hidden = FieldType::new(group, fields);
        b.stage(hidden, 1, true)?;
        b.norm_cat();
        b.stage(FieldType::trivial(group, 128), 1, true)?;
        b.linear(FieldType::trivial(group, 1), 1)?;
    }
    let (seq, out) = b.finish();
    debug_assert_eq!(out.total_dim(), 1);
    Ok(seq)
}

impl<T: Scalar> Critic<T> {
    /// Embed a (B, 5) action node as 1x1 channels in the order
    /// (x, y, z, theta, lambda), matching [`action_embed_type`].
    fn embed_action(&self, g: &mut Graph<T>, action: NodeId) -> NodeId {
        let b = g.value(action).shape()[0];
        g.reshape(action, &[b, 5, 1, 1])
    }

    /// Q values for an observation/action batch: returns (q1, q2), each (B, 1).
    pub fn forward(
        &self,
        g: &mut Graph<T>,
        obs: NodeId,
        action: NodeId,
        frozen: bool,
    ) -> (NodeId, NodeId) {
        let enc = self.encoder.forward(g, &self.store, obs, frozen);
        let a = self.embed_action(g, action);
        let cat = g.concat_ax1(&[enc, a]);
        let q1 = self.q1.forward(g, &self.store, cat, frozen);
        let q2 = self.q2.forward(g, &self.store, cat, frozen);
        let b = g.value(q1).shape()[0];
        let q1 = g.reshape(q1, &[b, 1]);
        let q2 = g.reshape(q2, &[b, 1]);
        (q1, q2)
    }

    pub fn param_count(&self) -> usize {
        self.store.num_scalars()
    }

    pub fn embed_field_type(&self) -> &FieldType {
        &self.embed_type
    }
}

impl Representation {
    /// Frequency-m 2-dim irrep in the flavor matching the group kind.
    fn irrep_like(group: GroupSpec, m: usize) -> Representation {
        match group.kind {
            GroupKind::O2 => Representation::o2_irrep(group, m),
            _ => Representation::irrep(group, m),
        }
    }
}

/// regular_relu: ReLU restricted to trivial/regular field types.
pub fn regular_relu<T: Scalar>(
    g: &mut Graph<T>,
    x: NodeId,
    field_type: &FieldType,
) -> Result<NodeId, NnError> {
    let ok = field_type
        .fields
        .iter()
        .all(|f| matches!(f.kind, RepKind::Trivial | RepKind::Irrep(0) | RepKind::Regular));
    if !ok {
        return Err(NnError::FieldType);
    }
    Ok(g.relu(x))
}

/// group_max_pool: each regular field maps to one trivial field via a max
/// over the group dimension.
pub fn group_max_pool<T: Scalar>(
    g: &mut Graph<T>,
    x: NodeId,
    field_type: &FieldType,
) -> Result<(NodeId, FieldType), NnError> {
    if !field_type.fields.iter().all(|f| matches!(f.kind, RepKind::Regular)) {
        return Err(NnError::FieldType);
    }
    let gsize = field_type.group.size().map_err(|_| NnError::FieldType)?;
    let out = g.channel_block_max(x, gsize);
    let out_type = FieldType::trivial(field_type.group, field_type.fields.len());
    Ok((out, out_type))
}

/// Convenience: batched observation array from a single observation.
pub fn obs_batch<T: Scalar>(obs: &[ArrayD<T>]) -> ArrayD<T> {
    let shape = obs[0].shape();
    let mut out = ArrayD::<T>::zeros(IxDyn(&[obs.len(), shape[0], shape[1], shape[2]]));
    for (i, o) in obs.iter().enumerate() {
        out.index_axis_mut(ndarray::Axis(0), i).assign(o);
    }
    out
}
