use rand::Rng;

use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::{debug_check_finite, Tensor2D};
use crate::error::Result;

/// `y = x·W + b` with `W: in × out` and `b: 1 × out`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

#[derive(Clone, Debug)]
pub struct LinearCache {
    input: Tensor2D,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = store.add_uniform(format!("{name}.w"), in_dim, out_dim, in_dim, rng);
        let bias = store.add(format!("{name}.b"), Tensor2D::zeros(1, out_dim));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor2D) -> Result<(Tensor2D, LinearCache)> {
        let y = self.apply(store, x)?;
        Ok((y, LinearCache { input: x.clone() }))
    }

    /// Forward without keeping a cache.
    pub fn apply(&self, store: &ParamStore, x: &Tensor2D) -> Result<Tensor2D> {
        x.ensure_shape((x.rows(), self.in_dim), "linear forward")?;
        let mut y = x.matmul(store.get(self.weight))?;
        let b = store.get(self.bias).row(0);
        for r in 0..y.rows() {
            for (v, bb) in y.row_mut(r).iter_mut().zip(b) {
                *v += bb;
            }
        }
        debug_check_finite(&y, "linear forward");
        Ok(y)
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &LinearCache,
        dy: &Tensor2D,
        grads: &mut Gradients,
    ) -> Result<Tensor2D> {
        dy.ensure_shape((cache.input.rows(), self.out_dim), "linear backward")?;
        grads.accumulate(self.weight, &cache.input.t_matmul(dy)?);
        grads.accumulate(self.bias, &dy.sum_rows());
        let dx = dy.matmul_t(store.get(self.weight))?;
        debug_check_finite(&dx, "linear backward");
        Ok(dx)
    }
}
