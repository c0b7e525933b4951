//! Equivariant convolutional layers over annotated feature fields and the
//! actor / critic network builders.

pub mod basis;
mod checkpoint;
mod conv;
mod expand;
mod models;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use conv::{EquiConv, EquivariantConvSpec};
pub use expand::{build_expansion, FilterExpansion};
pub use models::{
    actor_head_type, action_embed_type, build_actor, build_critic, group_max_pool, obs_batch,
    obs_type, regular_relu, Actor, ChannelSchedule, Critic, PolicyHead, PolicySample,
    LOG_STD_MAX, LOG_STD_MIN,
};

use crate::autodiff::Scalar;
use crate::group::{act_on_image, FieldType, GroupElement, Interpolation};
use ndarray::{ArrayD, Ix4};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("input and output field types live on different groups")]
    GroupMismatch,
    #[error("no equivariant kernel space exists for this field-type pair")]
    UnsupportedPair,
    #[error("geometric tensor type does not match the layer's input type")]
    TypeMismatch,
    #[error("nonlinearity applied to an incompatible field type")]
    FieldType,
    #[error("checkpoint io: {0}")]
    Checkpoint(String),
}

/// A dense feature tensor annotated with the field type that defines how
/// group elements transform it. Shape (B, total_dim, H, W).
#[derive(Debug, Clone)]
pub struct GeometricTensor<T: Scalar> {
    pub data: ArrayD<T>,
    pub field_type: FieldType,
}

impl<T: Scalar> GeometricTensor<T> {
    pub fn new(data: ArrayD<T>, field_type: FieldType) -> Self {
        assert_eq!(data.ndim(), 4, "geometric tensors are (B, C, H, W)");
        assert_eq!(data.shape()[1], field_type.total_dim(), "channel/type mismatch");
        GeometricTensor { data, field_type }
    }

    /// Apply a group element: spatial warp about the image center followed
    /// by the block-diagonal channel mixing of the field representations.
    pub fn transform(&self, g: GroupElement) -> Result<GeometricTensor<T>, crate::group::GroupError> {
        let x = self.data.view().into_dimensionality::<Ix4>().unwrap();
        let (b, c, h, w) = x.dim();
        let rho = self.field_type.rep_matrix(g)?;
        let mut out = ndarray::Array4::<T>::zeros((b, c, h, w));
        for bi in 0..b {
            let img = x.index_axis(ndarray::Axis(0), bi);
            let warped = act_on_image(g, img, Interpolation::Bilinear)?;
            // channel mixing: out[c'] = sum_c rho[c', c] warped[c]
            for cp in 0..c {
                for ci in 0..c {
                    let wgt = rho[[cp, ci]];
                    if wgt == 0.0 {
                        continue;
                    }
                    let wgt = T::from_f(wgt);
                    let src = warped.index_axis(ndarray::Axis(0), ci);
                    let mut dst = out.index_axis_mut(ndarray::Axis(0), bi);
                    let mut dst = dst.index_axis_mut(ndarray::Axis(0), cp);
                    dst.zip_mut_with(&src, |d, &s| *d = *d + s * wgt);
                }
            }
        }
        Ok(GeometricTensor::new(out.into_dyn(), self.field_type.clone()))
    }
}
