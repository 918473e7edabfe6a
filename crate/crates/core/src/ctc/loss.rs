//! Log-space forward–backward recursion over the blank-interleaved label
//! sequence.

use super::types::{AugmentedLabelSeq, LabelSeq, PosteriorGrid, Vocab};
use crate::error::{Error, Result};
use crate::nn::tensor::{logaddexp, Tensor2D};

const NEG_INF: f64 = f64::NEG_INFINITY;

fn check_inputs(grid: &PosteriorGrid, labels: &LabelSeq, vocab: &Vocab) -> Result<()> {
    grid.check_vocab(vocab)?;
    let min_frames = labels.min_frames();
    if grid.frames() < min_frames.max(1) {
        return Err(Error::InfeasibleAlignment {
            frames: grid.frames(),
            labels: labels.len(),
            min_frames: min_frames.max(1),
        });
    }
    Ok(())
}

/// `alpha[f][s]`: log-probability of frames `0..=f` ending in state `s`,
/// emissions included.
fn forward_table(grid: &PosteriorGrid, aug: &AugmentedLabelSeq, blank: usize) -> Vec<Vec<f64>> {
    let frames = grid.frames();
    let states = aug.len();
    let mut alpha = vec![vec![NEG_INF; states]; frames];
    alpha[0][0] = grid.log_prob(0, aug.ids()[0]);
    if states > 1 {
        alpha[0][1] = grid.log_prob(0, aug.ids()[1]);
    }
    for f in 1..frames {
        // states beyond 2(f+1) are unreachable
        let hi = states.min(2 * (f + 1));
        for s in 0..hi {
            let mut acc = alpha[f - 1][s];
            if s >= 1 {
                acc = logaddexp(acc, alpha[f - 1][s - 1]);
            }
            if aug.can_skip(s, blank) {
                acc = logaddexp(acc, alpha[f - 1][s - 2]);
            }
            if acc != NEG_INF {
                alpha[f][s] = acc + grid.log_prob(f, aug.ids()[s]);
            }
        }
    }
    alpha
}

/// `beta[f][s]`: log-probability of frames `f+1..F` given state `s` at
/// frame `f`, emission at `f` excluded.
fn backward_table(grid: &PosteriorGrid, aug: &AugmentedLabelSeq, blank: usize) -> Vec<Vec<f64>> {
    let frames = grid.frames();
    let states = aug.len();
    let mut beta = vec![vec![NEG_INF; states]; frames];
    beta[frames - 1][states - 1] = 0.0;
    if states > 1 {
        beta[frames - 1][states - 2] = 0.0;
    }
    for f in (0..frames - 1).rev() {
        let emit = |s: usize| grid.log_prob(f + 1, aug.ids()[s]);
        for s in 0..states {
            let mut acc = beta[f + 1][s] + emit(s);
            if s + 1 < states {
                acc = logaddexp(acc, beta[f + 1][s + 1] + emit(s + 1));
            }
            if s + 2 < states && aug.can_skip(s + 2, blank) {
                acc = logaddexp(acc, beta[f + 1][s + 2] + emit(s + 2));
            }
            beta[f][s] = acc;
        }
    }
    beta
}

fn log_likelihood(alpha: &[Vec<f64>]) -> f64 {
    let last = alpha.last().expect("at least one frame");
    let s = last.len();
    if s > 1 {
        logaddexp(last[s - 1], last[s - 2])
    } else {
        last[0]
    }
}

/// Negative log-likelihood of `labels` summed over all CTC alignments, in nats.
pub fn ctc_loss(grid: &PosteriorGrid, labels: &LabelSeq, vocab: &Vocab) -> Result<f64> {
    check_inputs(grid, labels, vocab)?;
    let aug = AugmentedLabelSeq::new(labels, vocab.blank_id());
    let alpha = forward_table(grid, &aug, vocab.blank_id());
    Ok(-log_likelihood(&alpha))
}

/// Per-frame state-occupancy marginals γ over the class axis.
pub fn occupancy(grid: &PosteriorGrid, labels: &LabelSeq, vocab: &Vocab) -> Result<(f64, Tensor2D)> {
    check_inputs(grid, labels, vocab)?;
    let blank = vocab.blank_id();
    let aug = AugmentedLabelSeq::new(labels, blank);
    let alpha = forward_table(grid, &aug, blank);
    let beta = backward_table(grid, &aug, blank);
    let log_z = log_likelihood(&alpha);
    let mut gamma = Tensor2D::zeros(grid.frames(), grid.num_classes());
    for f in 0..grid.frames() {
        for (s, &class) in aug.ids().iter().enumerate() {
            let lp = alpha[f][s] + beta[f][s];
            if lp != NEG_INF {
                let row = gamma.row_mut(f);
                row[class] += (lp - log_z).exp();
            }
        }
    }
    Ok((-log_z, gamma))
}

/// Loss together with its gradient with respect to the pre-softmax logits
/// that produced `grid`: `softmax(logits) − γ` per frame.
pub fn ctc_loss_and_grad(
    grid: &PosteriorGrid,
    labels: &LabelSeq,
    vocab: &Vocab,
) -> Result<(f64, Tensor2D)> {
    let (loss, gamma) = occupancy(grid, labels, vocab)?;
    let mut grad = grid.probs();
    for (g, o) in grad.data_mut().iter_mut().zip(gamma.data()) {
        *g -= o;
    }
    Ok((loss, grad))
}

pub fn ctc_grad(grid: &PosteriorGrid, labels: &LabelSeq, vocab: &Vocab) -> Result<Tensor2D> {
    ctc_loss_and_grad(grid, labels, vocab).map(|(_, g)| g)
}
