use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::softmax::log_softmax_fwd;
use crate::nn::tensor::{argmax, logsumexp, Tensor2D};

/// Non-blank token inventory. The blank occupies the index right after the
/// last token.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
}

/// Token used to split transcripts into words.
pub const WORD_SEPARATOR: &str = " ";

impl Vocab {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        for (i, t) in tokens.iter().enumerate() {
            if tokens[..i].contains(t) {
                return Err(Error::invalid(format!("duplicate vocab token {t:?}")));
            }
        }
        Ok(Self { tokens })
    }

    /// Word separator followed by the first `letters` lowercase letters.
    pub fn characters(letters: usize) -> Result<Self> {
        if letters == 0 || letters > 26 {
            return Err(Error::invalid(format!("letter count {letters} outside 1..=26")));
        }
        let mut tokens = vec![WORD_SEPARATOR.to_string()];
        tokens.extend((b'a'..b'a' + letters as u8).map(|c| (c as char).to_string()));
        Self::new(tokens)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// |𝒴|, the number of non-blank tokens.
    pub fn num_tokens(&self) -> usize {
        self.tokens.len()
    }

    pub fn blank_id(&self) -> usize {
        self.tokens.len()
    }

    /// |𝒴′| = |𝒴| + 1.
    pub fn num_classes(&self) -> usize {
        self.tokens.len() + 1
    }

    pub fn separator_id(&self) -> Option<usize> {
        self.tokens.iter().position(|t| t == WORD_SEPARATOR)
    }

    pub fn render(&self, labels: &LabelSeq) -> String {
        labels
            .ids()
            .iter()
            .map(|&i| self.tokens.get(i).map_or("?", String::as_str))
            .collect()
    }
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Self::new(tokens)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

/// Target token sequence; never contains the blank.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelSeq(Vec<usize>);

impl LabelSeq {
    pub fn new(ids: Vec<usize>, vocab: &Vocab) -> Result<Self> {
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab.num_tokens()) {
            return Err(Error::DimensionMismatch {
                context: "label id",
                expected: format!("< {}", vocab.num_tokens()),
                actual: bad.to_string(),
            });
        }
        Ok(Self(ids))
    }

    /// Skips the vocabulary range check.
    pub fn from_ids_unchecked(ids: Vec<usize>) -> Self {
        Self(ids)
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_ids(self) -> Vec<usize> {
        self.0
    }

    /// Number of adjacent equal pairs; each one forces an extra blank frame.
    pub fn adjacent_repeats(&self) -> usize {
        self.0.windows(2).filter(|w| w[0] == w[1]).count()
    }

    /// Fewest frames admitting at least one alignment.
    pub fn min_frames(&self) -> usize {
        self.len() + self.adjacent_repeats()
    }
}

/// `[φ, y₁, φ, y₂, …, y_N, φ]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AugmentedLabelSeq {
    ids: Vec<usize>,
}

impl AugmentedLabelSeq {
    pub fn new(labels: &LabelSeq, blank: usize) -> Self {
        let mut ids = Vec::with_capacity(2 * labels.len() + 1);
        ids.push(blank);
        for &y in labels.ids() {
            ids.push(y);
            ids.push(blank);
        }
        Self { ids }
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Whether state `s` may be entered directly from `s − 2`: true for
    /// labels that differ from the previous label.
    pub fn can_skip(&self, s: usize, blank: usize) -> bool {
        s >= 2 && self.ids[s] != blank && self.ids[s] != self.ids[s - 2]
    }
}

/// Per-frame log-probabilities over the blank-augmented label set.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorGrid {
    log_probs: Tensor2D,
}

pub const NORMALIZATION_TOL: f64 = 1e-6;

impl PosteriorGrid {
    /// Row-wise log-softmax of `logits`.
    pub fn from_logits(logits: &Tensor2D) -> Self {
        Self {
            log_probs: log_softmax_fwd(logits),
        }
    }

    /// Wraps log-probabilities after checking every row normalizes.
    pub fn from_log_probs(log_probs: Tensor2D) -> Result<Self> {
        for (f, row) in log_probs.iter_rows().enumerate() {
            let lse = logsumexp(row);
            if (lse.abs() > NORMALIZATION_TOL) || row.iter().any(|&v| v > 1e-9 || v.is_nan()) {
                return Err(Error::DimensionMismatch {
                    context: "posterior row normalization",
                    expected: "logsumexp = 0".into(),
                    actual: format!("frame {f}: {lse}"),
                });
            }
        }
        Ok(Self { log_probs })
    }

    /// Takes `ln` of each entry; rows must sum to one.
    pub fn from_probs(probs: &Tensor2D) -> Result<Self> {
        Self::from_log_probs(probs.map(f64::ln))
    }

    pub fn uniform(frames: usize, classes: usize) -> Self {
        Self {
            log_probs: Tensor2D::filled(frames, classes, -(classes as f64).ln()),
        }
    }

    pub fn log_probs(&self) -> &Tensor2D {
        &self.log_probs
    }

    pub fn into_log_probs(self) -> Tensor2D {
        self.log_probs
    }

    pub fn probs(&self) -> Tensor2D {
        self.log_probs.map(f64::exp)
    }

    pub fn frames(&self) -> usize {
        self.log_probs.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.log_probs.cols()
    }

    #[inline]
    pub fn log_prob(&self, f: usize, a: usize) -> f64 {
        self.log_probs.get(f, a)
    }

    /// Per-frame argmax, ties to the lowest class index.
    pub fn argmax_path(&self) -> Vec<usize> {
        self.log_probs.iter_rows().map(argmax).collect()
    }

    /// First `frames` rows.
    pub fn truncate(&self, frames: usize) -> Self {
        Self {
            log_probs: self.log_probs.head_rows(frames),
        }
    }

    pub fn check_vocab(&self, vocab: &Vocab) -> Result<()> {
        if self.num_classes() != vocab.num_classes() {
            return Err(Error::DimensionMismatch {
                context: "posterior class axis",
                expected: vocab.num_classes().to_string(),
                actual: self.num_classes().to_string(),
            });
        }
        Ok(())
    }

    pub fn check_same_shape(&self, other: &PosteriorGrid, context: &'static str) -> Result<()> {
        if self.log_probs.shape() != other.log_probs.shape() {
            return Err(Error::DimensionMismatch {
                context,
                expected: format!("{:?}", self.log_probs.shape()),
                actual: format!("{:?}", other.log_probs.shape()),
            });
        }
        Ok(())
    }
}
