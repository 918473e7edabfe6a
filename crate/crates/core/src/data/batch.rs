use super::gen::Utterance;
use crate::ctc::LabelSeq;
use crate::nn::Tensor2D;

/// Zero-padded `B × F_max × D` feature block with the true frame count of
/// each row; consumers slice rows back to their own length so padding never
/// reaches a loss.
#[derive(Clone, Debug, PartialEq)]
pub struct PaddedBatch {
    pub ids: Vec<String>,
    pub max_frames: usize,
    pub feature_dim: usize,
    pub block: Vec<f64>,
    pub frame_counts: Vec<usize>,
    pub labels: Vec<LabelSeq>,
}

impl PaddedBatch {
    pub fn len(&self) -> usize {
        self.frame_counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_counts.is_empty()
    }

    /// Unpadded `F_i × D` features of batch row `i`.
    pub fn features(&self, i: usize) -> Tensor2D {
        let stride = self.max_frames * self.feature_dim;
        let start = i * stride;
        let end = start + self.frame_counts[i] * self.feature_dim;
        Tensor2D::from_vec(self.frame_counts[i], self.feature_dim, self.block[start..end].to_vec())
            .expect("sized")
    }

    pub fn total_frames(&self) -> usize {
        self.frame_counts.iter().sum()
    }
}

pub fn pad_batch(utterances: &[&Utterance], feature_dim: usize) -> PaddedBatch {
    let max_frames = utterances.iter().map(|u| u.frames()).max().unwrap_or(0);
    let stride = max_frames * feature_dim;
    let mut block = vec![0.0; utterances.len() * stride];
    for (i, u) in utterances.iter().enumerate() {
        block[i * stride..i * stride + u.features.len()].copy_from_slice(u.features.data());
    }
    PaddedBatch {
        ids: utterances.iter().map(|u| u.id.clone()).collect(),
        max_frames,
        feature_dim,
        block,
        frame_counts: utterances.iter().map(|u| u.frames()).collect(),
        labels: utterances.iter().map(|u| u.transcript.clone()).collect(),
    }
}

/// Splits `order` (indices into `utterances`) into consecutive padded
/// batches of at most `batch_size`.
pub fn batch(
    utterances: &[Utterance],
    order: &[usize],
    batch_size: usize,
    feature_dim: usize,
) -> Vec<PaddedBatch> {
    order
        .chunks(batch_size.max(1))
        .map(|chunk| {
            let refs: Vec<&Utterance> = chunk.iter().map(|&i| &utterances[i]).collect();
            pad_batch(&refs, feature_dim)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctc::{ctc_loss, PosteriorGrid, Vocab};
    use crate::data::gen::{generate, GenSpec};

    fn utt(frames: usize, dim: usize, fill: f64) -> Utterance {
        Utterance {
            id: format!("u{frames}"),
            features: Tensor2D::filled(frames, dim, fill),
            transcript: LabelSeq::from_ids_unchecked(vec![0]),
            true_alignment: vec![0; frames],
        }
    }

    #[test]
    fn single_utterance_has_no_padding() {
        let u = utt(4, 3, 1.0);
        let b = pad_batch(&[&u], 3);
        assert_eq!(b.max_frames, 4);
        assert_eq!(b.block.len(), 12);
        assert_eq!(b.features(0), u.features);
    }

    #[test]
    fn two_utterances_pad_to_longest() {
        let (a, c) = (utt(3, 2, 1.0), utt(5, 2, 2.0));
        let b = pad_batch(&[&a, &c], 2);
        assert_eq!(b.max_frames, 5);
        assert_eq!(b.frame_counts, vec![3, 5]);
        assert_eq!(&b.block[6..10], &[0.0; 4]);
        assert_eq!(b.features(0), a.features);
        assert_eq!(b.features(1), c.features);
    }

    #[test]
    fn padded_batch_loss_equals_per_utterance_sum() {
        let spec = GenSpec::default();
        let ds = generate(&spec, 7).unwrap();
        let vocab: Vocab = ds.vocab.clone();
        // deterministic "model": posteriors from a fixed projection of the features
        let proj = Tensor2D::from_vec(
            spec.feature_dim,
            vocab.num_classes(),
            (0..spec.feature_dim * vocab.num_classes())
                .map(|i| ((i * 37 % 11) as f64 - 5.0) / 5.0)
                .collect(),
        )
        .unwrap();
        let loss_of = |x: &Tensor2D, y: &LabelSeq| {
            ctc_loss(&PosteriorGrid::from_logits(&x.matmul(&proj).unwrap()), y, &vocab).unwrap()
        };
        let direct: f64 = ds.utterances.iter().map(|u| loss_of(&u.features, &u.transcript)).sum();
        let order: Vec<usize> = (0..ds.len()).collect();
        let batched: f64 = batch(&ds.utterances, &order, 3, spec.feature_dim)
            .iter()
            .flat_map(|b| (0..b.len()).map(move |i| (b, i)))
            .map(|(b, i)| loss_of(&b.features(i), &b.labels[i]))
            .sum();
        assert!((direct - batched).abs() < 1e-10);
    }
}
