use rand::Rng;

use super::linear::{Linear, LinearCache};
use super::params::{Gradients, ParamStore};
use super::tensor::Tensor2D;
use crate::error::Result;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// GELU, tanh approximation.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Position-wise `Linear → GELU → Linear`.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

#[derive(Clone, Debug)]
pub struct FeedForwardCache {
    up_cache: LinearCache,
    down_cache: LinearCache,
    pre_activation: Tensor2D,
}

impl FeedForward {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            up: Linear::new(store, &format!("{name}.up"), dim, hidden, rng),
            down: Linear::new(store, &format!("{name}.down"), hidden, dim, rng),
        }
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        x: &Tensor2D,
    ) -> Result<(Tensor2D, FeedForwardCache)> {
        let (pre, up_cache) = self.up.forward(store, x)?;
        let act = pre.map(gelu);
        let (out, down_cache) = self.down.forward(store, &act)?;
        Ok((
            out,
            FeedForwardCache {
                up_cache,
                down_cache,
                pre_activation: pre,
            },
        ))
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &FeedForwardCache,
        dy: &Tensor2D,
        grads: &mut Gradients,
    ) -> Result<Tensor2D> {
        let mut dact = self.down.backward(store, &cache.down_cache, dy, grads)?;
        for (d, &x) in dact
            .data_mut()
            .iter_mut()
            .zip(cache.pre_activation.data())
        {
            *d *= gelu_grad(x);
        }
        self.up.backward(store, &cache.up_cache, &dact, grads)
    }
}
