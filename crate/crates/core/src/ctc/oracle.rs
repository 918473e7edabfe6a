//! Exhaustive alignment enumeration, usable only at toy scale.

use super::decode::collapse;
use super::types::{LabelSeq, PosteriorGrid, Vocab};
use crate::error::{Error, Result};

pub const MAX_ORACLE_FRAMES: usize = 10;
pub const MAX_ORACLE_CLASSES: usize = 5;

/// Every length-`frames` path over 𝒴′ that collapses to `labels`, in
/// lexicographic order.
pub fn enumerate_alignments(
    frames: usize,
    labels: &LabelSeq,
    vocab: &Vocab,
) -> Result<Vec<Vec<usize>>> {
    let classes = vocab.num_classes();
    if frames > MAX_ORACLE_FRAMES || classes > MAX_ORACLE_CLASSES {
        return Err(Error::OracleScaleExceeded {
            frames,
            classes,
            max_frames: MAX_ORACLE_FRAMES,
            max_classes: MAX_ORACLE_CLASSES,
        });
    }
    let blank = vocab.blank_id();
    let mut out = Vec::new();
    let mut path = vec![0usize; frames];
    loop {
        if collapse(&path, blank) == *labels {
            out.push(path.clone());
        }
        // odometer increment, last position fastest
        let mut i = frames;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            path[i] += 1;
            if path[i] < classes {
                break;
            }
            path[i] = 0;
        }
    }
}

/// Σ over enumerated alignments of Π_f p(a_f | f), in probability space.
pub fn summed_path_probability(
    grid: &PosteriorGrid,
    labels: &LabelSeq,
    vocab: &Vocab,
) -> Result<f64> {
    let paths = enumerate_alignments(grid.frames(), labels, vocab)?;
    Ok(paths
        .iter()
        .map(|p| {
            p.iter()
                .enumerate()
                .map(|(f, &a)| grid.log_prob(f, a).exp())
                .product::<f64>()
        })
        .sum())
}
