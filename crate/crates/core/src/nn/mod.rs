//! Minimal CNN training stack: layers with explicit forward/backward passes,
//! softmax cross-entropy, Adadelta, and the two MNIST architectures.

mod layers;
mod loss;
mod model;
mod optim;

pub use layers::{
    avgpool2x2_backward, avgpool2x2_forward, dropout_mask, maxpool2x2_backward, maxpool2x2_forward,
    relu_backward_in_place, relu_in_place, Conv2d, Conv2dGrads, Dense, DenseGrads,
};
pub use loss::softmax_cross_entropy;
pub use model::{Architecture, ForwardCache, Mode, Model, ModelSpec, ParamMut, ParamRef, Pooling};
pub use optim::{Adadelta, AdadeltaConfig};

use rand::Rng;

use crate::scalar::fsqrt;
use crate::Real;

/// `U(-bound, bound)` with `bound = 1/sqrt(fan_in)`.
pub(crate) fn fan_in_uniform<T: Real, R: Rng + ?Sized>(
    fan_in: usize,
    len: usize,
    rng: &mut R,
) -> alloc::vec::Vec<T> {
    let bound = 1.0 / fsqrt(fan_in as f64);
    (0..len)
        .map(|_| T::lit(bound * (2.0 * rng.random::<f64>() - 1.0)))
        .collect()
}
