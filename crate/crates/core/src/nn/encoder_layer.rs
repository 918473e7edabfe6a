use rand::Rng;

use super::attention::{AttentionCache, MultiHeadAttention};
use super::ffn::{FeedForward, FeedForwardCache};
use super::layernorm::{LayerNorm, LayerNormCache};
use super::params::{Gradients, ParamStore};
use super::tensor::Tensor2D;
use crate::error::Result;

/// Pre-norm transformer encoder block:
/// `h = x + attn(ln1(x))`, `y = h + ffn(ln2(h))`.
#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub ln1: LayerNorm,
    pub attention: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub ffn: FeedForward,
}

#[derive(Clone, Debug)]
pub struct EncoderLayerCache {
    ln1: LayerNormCache,
    attention: AttentionCache,
    ln2: LayerNormCache,
    ffn: FeedForwardCache,
}

impl EncoderLayerCache {
    pub fn attention(&self) -> &AttentionCache {
        &self.attention
    }
}

impl EncoderLayer {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        num_heads: usize,
        ffn_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Self {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), dim),
            attention: MultiHeadAttention::new(store, &format!("{name}.attn"), dim, num_heads, rng)?,
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), dim),
            ffn: FeedForward::new(store, &format!("{name}.ffn"), dim, ffn_dim, rng),
        })
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        x: &Tensor2D,
    ) -> Result<(Tensor2D, EncoderLayerCache)> {
        let (n1, ln1) = self.ln1.forward(store, x)?;
        let (a, attention) = self.attention.forward(store, &n1)?;
        let h = x.add(&a)?;
        let (n2, ln2) = self.ln2.forward(store, &h)?;
        let (f, ffn) = self.ffn.forward(store, &n2)?;
        let y = h.add(&f)?;
        Ok((
            y,
            EncoderLayerCache {
                ln1,
                attention,
                ln2,
                ffn,
            },
        ))
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &EncoderLayerCache,
        dy: &Tensor2D,
        grads: &mut Gradients,
    ) -> Result<Tensor2D> {
        let dn2 = self.ffn.backward(store, &cache.ffn, dy, grads)?;
        let mut dh = self.ln2.backward(store, &cache.ln2, &dn2, grads)?;
        dh.add_assign(dy)?;
        let dn1 = self.attention.backward(store, &cache.attention, &dh, grads)?;
        let mut dx = self.ln1.backward(store, &cache.ln1, &dn1, grads)?;
        dx.add_assign(&dh)?;
        Ok(dx)
    }

    /// Zero the residual-branch output projections so the block computes the
    /// identity map.
    pub fn make_identity(&self, store: &mut ParamStore) {
        for id in [
            self.attention.output.weight,
            self.attention.output.bias,
            self.ffn.down.weight,
            self.ffn.down.bias,
        ] {
            store.get_mut(id).data_mut().fill(0.0);
        }
    }
}
