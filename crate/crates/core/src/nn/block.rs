use ndarray::Array2;
use rand::Rng;

use super::{relu, relu_backward, BatchNorm, BnCache, Dense, PatternHash, ParamMut, Real};
use crate::error::Result;

/// Dense (or kernel-1 convolution) → batch norm → ReLU.
#[derive(Clone, Debug)]
pub struct LinearBlock<T> {
    pub linear: Dense<T>,
    pub norm: BatchNorm<T>,
}

#[derive(Clone, Debug)]
pub struct BlockCache<T> {
    input: Array2<T>,
    norm: BnCache<T>,
    output: Array2<T>,
}

impl<T> BlockCache<T> {
    pub fn output(&self) -> &Array2<T> {
        &self.output
    }
}

impl<T: Real> LinearBlock<T> {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            linear: Dense::glorot(inputs, outputs, rng),
            norm: BatchNorm::new(outputs),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.linear.parameter_count() + self.norm.parameter_count()
    }

    pub fn forward_train(&mut self, x: Array2<T>, pattern: &mut PatternHash) -> Result<BlockCache<T>> {
        let z = self.linear.forward(&x)?;
        let (y, norm) = self.norm.forward_train(&z)?;
        let output = relu(y);
        pattern.push_mask(output.iter().copied());
        Ok(BlockCache { input: x, norm, output })
    }

    pub fn forward_infer(&self, x: &Array2<T>) -> Result<Array2<T>> {
        let z = self.linear.forward(x)?;
        Ok(relu(self.norm.forward_infer(&z)?))
    }

    pub fn backward(&mut self, cache: &BlockCache<T>, grad_y: Array2<T>, need_input: bool) -> Option<Array2<T>> {
        let g = relu_backward(&cache.output, grad_y);
        let g = self.norm.backward(&cache.norm, &g);
        self.linear.backward(&cache.input, &g, need_input)
    }

    pub fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        let l = &mut self.linear;
        let n = &mut self.norm;
        vec![
            ParamMut { value: l.weight.as_slice_mut().unwrap(), grad: l.grad_weight.as_slice_mut().unwrap() },
            ParamMut { value: l.bias.as_slice_mut().unwrap(), grad: l.grad_bias.as_slice_mut().unwrap() },
            ParamMut { value: n.gamma.as_slice_mut().unwrap(), grad: n.grad_gamma.as_slice_mut().unwrap() },
            ParamMut { value: n.beta.as_slice_mut().unwrap(), grad: n.grad_beta.as_slice_mut().unwrap() },
        ]
    }

    pub fn cast<U: Real>(&self) -> LinearBlock<U> {
        LinearBlock {
            linear: self.linear.cast(),
            norm: self.norm.cast(),
        }
    }
}

pub fn dense_params_mut<T: Real>(d: &mut Dense<T>) -> Vec<ParamMut<'_, T>> {
    vec![
        ParamMut { value: d.weight.as_slice_mut().unwrap(), grad: d.grad_weight.as_slice_mut().unwrap() },
        ParamMut { value: d.bias.as_slice_mut().unwrap(), grad: d.grad_bias.as_slice_mut().unwrap() },
    ]
}
