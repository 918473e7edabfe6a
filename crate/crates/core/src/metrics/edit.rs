use serde::{Deserialize, Serialize};

use crate::ctc::{LabelSeq, Vocab};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditCounts {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

impl EditCounts {
    pub fn total(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }
}

/// Minimal Levenshtein edits turning `reference` into `hyp`.
///
/// Among minimal alignments the one with the most substitutions is chosen,
/// which pins `(S, I, D)` uniquely: swapping the arguments keeps `S` and
/// swaps `I` with `D`.
pub fn edit_distance<T: PartialEq>(hyp: &[T], reference: &[T]) -> EditCounts {
    // (cost, -subs) ordered lexicographically; the pair is additive along a path
    type Cell = (usize, usize, usize); // (total, subs, ins)
    let better = |a: Cell, b: Cell| (a.0, usize::MAX - a.1) < (b.0, usize::MAX - b.1);
    let n = reference.len();
    let mut prev: Vec<Cell> = (0..=n).map(|j| (j, 0, 0)).collect();
    let mut cur = vec![(0, 0, 0); n + 1];
    for h in hyp {
        cur[0] = (prev[0].0 + 1, 0, prev[0].2 + 1);
        for j in 1..=n {
            let diag = prev[j - 1];
            let mut best = if *h == reference[j - 1] {
                diag
            } else {
                (diag.0 + 1, diag.1 + 1, diag.2)
            };
            let ins = (prev[j].0 + 1, prev[j].1, prev[j].2 + 1);
            if better(ins, best) {
                best = ins;
            }
            let del = (cur[j - 1].0 + 1, cur[j - 1].1, cur[j - 1].2);
            if better(del, best) {
                best = del;
            }
            cur[j] = best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (total, substitutions, insertions) = prev[n];
    EditCounts {
        substitutions,
        insertions,
        deletions: total - substitutions - insertions,
    }
}

/// Edits accumulated over a corpus together with the reference length.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorTally {
    pub edits: EditCounts,
    pub reference_len: usize,
}

impl ErrorTally {
    pub fn add<T: PartialEq>(&mut self, hyp: &[T], reference: &[T]) {
        let e = edit_distance(hyp, reference);
        self.edits.substitutions += e.substitutions;
        self.edits.insertions += e.insertions;
        self.edits.deletions += e.deletions;
        self.reference_len += reference.len();
    }

    pub fn merge(&mut self, other: &ErrorTally) {
        self.edits.substitutions += other.edits.substitutions;
        self.edits.insertions += other.edits.insertions;
        self.edits.deletions += other.edits.deletions;
        self.reference_len += other.reference_len;
    }

    /// `(S + I + D) / |ref|`.
    pub fn rate(&self) -> Result<f64> {
        if self.reference_len == 0 {
            return Err(Error::EmptyReference);
        }
        Ok(self.edits.total() as f64 / self.reference_len as f64)
    }
}

/// Splits a token sequence into words on the separator, dropping empties.
pub fn words(labels: &LabelSeq, vocab: &Vocab) -> Vec<Vec<usize>> {
    let sep = vocab.separator_id();
    labels
        .ids()
        .split(|&t| Some(t) == sep)
        .filter(|w| !w.is_empty())
        .map(<[usize]>::to_vec)
        .collect()
}

pub fn cer(hyp: &LabelSeq, reference: &LabelSeq) -> Result<f64> {
    let mut t = ErrorTally::default();
    t.add(hyp.ids(), reference.ids());
    t.rate()
}

pub fn wer(hyp: &LabelSeq, reference: &LabelSeq, vocab: &Vocab) -> Result<f64> {
    let mut t = ErrorTally::default();
    t.add(&words(hyp, vocab), &words(reference, vocab));
    t.rate()
}
