use super::types::{LabelSeq, PosteriorGrid};

/// β: merge consecutive duplicates, then drop blanks.
pub fn collapse(alignment: &[usize], blank: usize) -> LabelSeq {
    let mut out = Vec::new();
    let mut prev = None;
    for &a in alignment {
        if Some(a) != prev && a != blank {
            out.push(a);
        }
        prev = Some(a);
    }
    LabelSeq::from_ids_unchecked(out)
}

/// Best-path decoding: per-frame argmax (lowest index on ties), then collapse.
pub fn greedy_decode(grid: &PosteriorGrid, blank: usize) -> LabelSeq {
    collapse(&grid.argmax_path(), blank)
}
