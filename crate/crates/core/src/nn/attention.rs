use rand::Rng;

use super::linear::{Linear, LinearCache};
use super::params::{Gradients, ParamStore};
use super::softmax::{softmax_bwd, softmax_rows};
use super::tensor::{debug_check_finite, Tensor2D};
use crate::error::{Error, Result};

/// Multi-head scaled dot-product self-attention over the frame axis. No
/// masking and no dropout.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub dim: usize,
    pub num_heads: usize,
}

#[derive(Clone, Debug)]
pub struct AttentionCache {
    q_cache: LinearCache,
    k_cache: LinearCache,
    v_cache: LinearCache,
    o_cache: LinearCache,
    q: Tensor2D,
    k: Tensor2D,
    v: Tensor2D,
    /// One `F × F` row-stochastic matrix per head.
    weights: Vec<Tensor2D>,
}

impl AttentionCache {
    pub fn weights(&self) -> &[Tensor2D] {
        &self.weights
    }
}

impl MultiHeadAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        num_heads: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if num_heads == 0 || dim % num_heads != 0 {
            return Err(Error::invalid(format!(
                "model_dim {dim} not divisible by num_heads {num_heads}"
            )));
        }
        Ok(Self {
            query: Linear::new(store, &format!("{name}.q"), dim, dim, rng),
            key: Linear::new(store, &format!("{name}.k"), dim, dim, rng),
            value: Linear::new(store, &format!("{name}.v"), dim, dim, rng),
            output: Linear::new(store, &format!("{name}.o"), dim, dim, rng),
            dim,
            num_heads,
        })
    }

    fn head_dim(&self) -> usize {
        self.dim / self.num_heads
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        x: &Tensor2D,
    ) -> Result<(Tensor2D, AttentionCache)> {
        x.ensure_shape((x.rows(), self.dim), "attention forward")?;
        let (q, q_cache) = self.query.forward(store, x)?;
        let (k, k_cache) = self.key.forward(store, x)?;
        let (v, v_cache) = self.value.forward(store, x)?;
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut context = Tensor2D::zeros(x.rows(), self.dim);
        let mut weights = Vec::with_capacity(self.num_heads);
        for h in 0..self.num_heads {
            let qh = q.column_block(h * dh, dh);
            let kh = k.column_block(h * dh, dh);
            let vh = v.column_block(h * dh, dh);
            let scores = qh.matmul_t(&kh)?.scaled(scale);
            let a = softmax_rows(&scores);
            context.set_column_block(h * dh, &a.matmul(&vh)?);
            weights.push(a);
        }
        let (out, o_cache) = self.output.forward(store, &context)?;
        debug_check_finite(&out, "attention forward");
        Ok((
            out,
            AttentionCache {
                q_cache,
                k_cache,
                v_cache,
                o_cache,
                q,
                k,
                v,
                weights,
            },
        ))
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &AttentionCache,
        dy: &Tensor2D,
        grads: &mut Gradients,
    ) -> Result<Tensor2D> {
        dy.ensure_shape(cache.q.shape(), "attention backward")?;
        let dcontext = self.output.backward(store, &cache.o_cache, dy, grads)?;
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let frames = dy.rows();
        let mut dq = Tensor2D::zeros(frames, self.dim);
        let mut dk = Tensor2D::zeros(frames, self.dim);
        let mut dv = Tensor2D::zeros(frames, self.dim);
        for h in 0..self.num_heads {
            let a = &cache.weights[h];
            let qh = cache.q.column_block(h * dh, dh);
            let kh = cache.k.column_block(h * dh, dh);
            let vh = cache.v.column_block(h * dh, dh);
            let dctx = dcontext.column_block(h * dh, dh);
            let da = dctx.matmul_t(&vh)?;
            dv.set_column_block(h * dh, &a.t_matmul(&dctx)?);
            let mut ds = softmax_bwd(a, &da)?;
            ds.scale(scale);
            dq.set_column_block(h * dh, &ds.matmul(&kh)?);
            dk.set_column_block(h * dh, &ds.t_matmul(&qh)?);
        }
        let mut dx = self.query.backward(store, &cache.q_cache, &dq, grads)?;
        dx.add_assign(&self.key.backward(store, &cache.k_cache, &dk, grads)?)?;
        dx.add_assign(&self.value.backward(store, &cache.v_cache, &dv, grads)?)?;
        debug_check_finite(&dx, "attention backward");
        Ok(dx)
    }
}
