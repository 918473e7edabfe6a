//! Row-wise softmax and log-softmax with their vector-Jacobian products.

use super::tensor::Tensor2D;
use crate::error::Result;

pub fn softmax_rows(x: &Tensor2D) -> Tensor2D {
    let mut out = x.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub fn log_softmax_fwd(x: &Tensor2D) -> Tensor2D {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|v| *v -= lse);
    }
    out
}

/// Given `y = log_softmax(x)` and `dy`, returns `dx = dy − softmax(x)·Σ dy`.
pub fn log_softmax_bwd(y: &Tensor2D, dy: &Tensor2D) -> Result<Tensor2D> {
    dy.ensure_shape(y.shape(), "log_softmax backward")?;
    let mut dx = dy.clone();
    for r in 0..y.rows() {
        let s: f64 = dy.row(r).iter().sum();
        for (d, &ly) in dx.row_mut(r).iter_mut().zip(y.row(r)) {
            *d -= ly.exp() * s;
        }
    }
    Ok(dx)
}

/// Given `p = softmax(x)` and `dp`, returns `dx = p ⊙ (dp − ⟨p, dp⟩)`.
pub fn softmax_bwd(p: &Tensor2D, dp: &Tensor2D) -> Result<Tensor2D> {
    dp.ensure_shape(p.shape(), "softmax backward")?;
    let mut dx = Tensor2D::zeros(p.rows(), p.cols());
    for r in 0..p.rows() {
        let pr = p.row(r);
        let dr = dp.row(r);
        let inner: f64 = pr.iter().zip(dr).map(|(a, b)| a * b).sum();
        for ((o, &pi), &di) in dx.row_mut(r).iter_mut().zip(pr).zip(dr) {
            *o = pi * (di - inner);
        }
    }
    Ok(dx)
}
