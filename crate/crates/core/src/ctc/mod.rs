//! Connectionist temporal classification: alignment semantics, loss and
//! gradient, best-path decoding, and a brute-force enumeration oracle.
//!
//! All probability arithmetic outside the oracle stays in natural-log space.

mod decode;
mod loss;
mod oracle;
mod types;

pub use decode::{collapse, greedy_decode};
pub use loss::{ctc_grad, ctc_loss, ctc_loss_and_grad, occupancy};
pub use oracle::{
    enumerate_alignments, summed_path_probability, MAX_ORACLE_CLASSES, MAX_ORACLE_FRAMES,
};
pub use types::{
    AugmentedLabelSeq, LabelSeq, PosteriorGrid, Vocab, NORMALIZATION_TOL, WORD_SEPARATOR,
};
