//! A small CPU tensor engine covering exactly the layers a residual-stack
//! detector needs: grouped / depthwise / pointwise convolution, batch
//! normalization, ReLU, average pooling, global average pooling, a fully
//! connected classifier, softmax cross-entropy, and Adam.
//!
//! Every kernel is generic over [`Scalar`] so that the same code path runs in
//! `f32` for training and in `f64` when gradients are checked against finite
//! differences.

pub mod adam;
pub mod checkpoint;
pub mod conv;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod norm;
pub mod ops;
pub mod params;
pub mod tensor;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub use adam::{adam_step, AdamConfig};
pub use conv::{conv2d_backward, conv2d_forward, ConvGeometry, ConvGrads};
pub use layers::{
    depthwise_separable, AvgPool, BatchNorm, Conv2d, GlobalAvgPool, Layer, LayerSpec, Linear, Mode, Relu, Residual,
    Sequential, TwoPath,
};
pub use loss::{bce_loss, softmax_cross_entropy};
pub use params::{Param, ParamBreakdown, ParamStore};
pub use tensor::Tensor;

#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("missing gradient for parameter `{0}`")]
    MissingGrad(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Floating point element type of a tensor.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + Debug
    + Send
    + Sync
    + 'static
{
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal fits the scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `y[i] += a * x[i]`
#[inline]
pub(crate) fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Dot product with eight independent accumulators so the loop vectorizes.
#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let chunks = n / 8;
    for c in 0..chunks {
        let (ca, cb) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            acc[l] += ca[l] * cb[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..n {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}
