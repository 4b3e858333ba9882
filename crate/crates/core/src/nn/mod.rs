//! Minimal fixed-architecture neural-network substrate.
//!
//! Layers keep their own gradient buffers; `backward` calls accumulate into
//! them and return the gradient with respect to the layer input. Training and
//! gradient checks run in `f64`, deployed inference in `f32`.

mod adam;
mod block;
mod gradcheck;
mod layers;

pub use adam::{AdamConfig, AdamState};
pub use block::{dense_params_mut, BlockCache, LinearBlock};
pub use gradcheck::{grad_check, Evaluation, GradCheckOptions, GradCheckReport};
pub use layers::{
    log_softmax, maxpool_points, maxpool_points_backward, relu, relu_backward, softmax,
    softmax_xent, softmax_xent_batch, BatchNorm, BnCache, Dense,
};

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};

/// Floating point element type for network tensors.
pub trait Real:
    Float
    + LinalgScalar
    + ScalarOperand
    + FromPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Default
    + Send
    + Sync
    + 'static
{
    fn from_f64c(v: f64) -> Self {
        Self::from_f64(v).expect("finite constant")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Mutable view of one parameter block and its gradient accumulator.
pub struct ParamMut<'a, T> {
    pub value: &'a mut [T],
    pub grad: &'a mut [T],
}

pub trait HasParams<T> {
    /// Parameter blocks in a fixed, documented order.
    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>>;

    fn zero_grad(&mut self)
    where
        T: Real,
    {
        for p in self.params_mut() {
            p.grad.fill(T::zero());
        }
    }

    fn flat_grad(&mut self) -> Vec<T>
    where
        T: Copy,
    {
        self.params_mut()
            .into_iter()
            .flat_map(|p| p.grad.to_vec())
            .collect()
    }
}

/// FNV-1a accumulator used to fingerprint activation patterns (ReLU masks and
/// max-pool winners). Finite-difference probes that change the fingerprint
/// straddle a kink and are not comparable with the analytic derivative.
#[derive(Clone, Copy, Debug)]
pub struct PatternHash(u64);

impl Default for PatternHash {
    fn default() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }
}

impl PatternHash {
    pub fn push(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    pub fn push_mask<T: Real>(&mut self, values: impl Iterator<Item = T>) {
        let mut word = 0u64;
        let mut bits = 0;
        for v in values {
            word = (word << 1) | (v > T::zero()) as u64;
            bits += 1;
            if bits == 64 {
                self.push(word);
                word = 0;
                bits = 0;
            }
        }
        self.push(word);
    }

    pub fn finish(self) -> u64 {
        self.0
    }
}

/// Debug-build finiteness guard.
#[inline]
pub(crate) fn debug_assert_finite<T: Real>(values: impl IntoIterator<Item = T>, what: &str) {
    if cfg!(debug_assertions) {
        for v in values {
            assert!(v.is_finite(), "non-finite value in {what}");
        }
    }
}
