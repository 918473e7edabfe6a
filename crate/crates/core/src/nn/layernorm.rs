use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::{debug_check_finite, Tensor2D};
use crate::error::Result;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Row-wise layer normalization with learned gain and bias.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub dim: usize,
}

#[derive(Clone, Debug)]
pub struct LayerNormCache {
    normalized: Tensor2D,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        let gain = store.add(format!("{name}.g"), Tensor2D::filled(1, dim, 1.0));
        let bias = store.add(format!("{name}.b"), Tensor2D::zeros(1, dim));
        Self { gain, bias, dim }
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        x: &Tensor2D,
    ) -> Result<(Tensor2D, LayerNormCache)> {
        x.ensure_shape((x.rows(), self.dim), "layernorm forward")?;
        let n = self.dim as f64;
        let g = store.get(self.gain).row(0);
        let b = store.get(self.bias).row(0);
        let mut normalized = Tensor2D::zeros(x.rows(), self.dim);
        let mut out = Tensor2D::zeros(x.rows(), self.dim);
        let mut inv_std = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let istd = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(istd);
            let nrow = normalized.row_mut(r);
            for (o, v) in nrow.iter_mut().zip(row) {
                *o = (v - mean) * istd;
            }
            let orow = out.row_mut(r);
            for i in 0..self.dim {
                orow[i] = normalized.get(r, i) * g[i] + b[i];
            }
        }
        debug_check_finite(&out, "layernorm forward");
        Ok((
            out,
            LayerNormCache {
                normalized,
                inv_std,
            },
        ))
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &LayerNormCache,
        dy: &Tensor2D,
        grads: &mut Gradients,
    ) -> Result<Tensor2D> {
        dy.ensure_shape(cache.normalized.shape(), "layernorm backward")?;
        let n = self.dim as f64;
        let g = store.get(self.gain).row(0);
        let mut dgain = Tensor2D::zeros(1, self.dim);
        let dbias = dy.sum_rows();
        let mut dx = Tensor2D::zeros(dy.rows(), self.dim);
        let mut dxhat = vec![0.0; self.dim];
        for r in 0..dy.rows() {
            let dyr = dy.row(r);
            let xh = cache.normalized.row(r);
            for i in 0..self.dim {
                dgain.data_mut()[i] += dyr[i] * xh[i];
                dxhat[i] = dyr[i] * g[i];
            }
            let mean_d = dxhat.iter().sum::<f64>() / n;
            let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / n;
            let istd = cache.inv_std[r];
            let dxr = dx.row_mut(r);
            for i in 0..self.dim {
                dxr[i] = istd * (dxhat[i] - mean_d - xh[i] * mean_dx);
            }
        }
        grads.accumulate(self.gain, &dgain);
        grads.accumulate(self.bias, &dbias);
        debug_check_finite(&dx, "layernorm backward");
        Ok(dx)
    }
}
