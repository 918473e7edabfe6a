use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ctc::{collapse, LabelSeq, Vocab};
use crate::error::{Error, Result};
use crate::nn::Tensor2D;

/// Parameters of the synthetic speech-like corpus.
///
/// Each token is rendered as its codebook prototype repeated for a sampled
/// duration; optional silence runs (their own prototype) sit before, between
/// and after tokens; every frame gets i.i.d. Gaussian noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSpec {
    /// Non-blank tokens including the word separator.
    pub vocab_size: usize,
    pub feature_dim: usize,
    pub duration_min: usize,
    pub duration_max: usize,
    pub silence_prob: f64,
    pub silence_min: usize,
    pub silence_max: usize,
    pub noise_std: f64,
    /// Standard deviation of the codebook entries.
    pub prototype_scale: f64,
    pub tokens_min: usize,
    pub tokens_max: usize,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            vocab_size: 8,
            feature_dim: 16,
            duration_min: 2,
            duration_max: 5,
            silence_prob: 0.3,
            silence_min: 1,
            silence_max: 3,
            noise_std: 0.1,
            prototype_scale: 1.0,
            tokens_min: 3,
            tokens_max: 8,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    fn stream_base(self) -> u64 {
        (match self {
            Split::Train => 1u64,
            Split::Dev => 2,
            Split::Test => 3,
        }) << 40
    }
}

const CODEBOOK_STREAM: u64 = u64::MAX;

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        if !(3..=27).contains(&self.vocab_size) {
            return Err(Error::invalid("vocab_size must be in 3..=27 (separator plus letters)"));
        }
        if self.duration_min < 1 || self.duration_max < self.duration_min {
            return Err(Error::invalid("need 1 <= duration_min <= duration_max"));
        }
        if self.silence_max < self.silence_min || self.silence_min < 1 {
            return Err(Error::invalid("need 1 <= silence_min <= silence_max"));
        }
        if !(0.0..=1.0).contains(&self.silence_prob) {
            return Err(Error::invalid("silence_prob must be in [0, 1]"));
        }
        if !(self.noise_std >= 0.0) || !(self.prototype_scale > 0.0) {
            return Err(Error::invalid("noise_std must be >= 0 and prototype_scale > 0"));
        }
        if self.tokens_min < 1 || self.tokens_max < self.tokens_min {
            return Err(Error::invalid("need 1 <= tokens_min <= tokens_max"));
        }
        if self.feature_dim == 0 {
            return Err(Error::invalid("feature_dim must be positive"));
        }
        Ok(())
    }

    pub fn vocab(&self) -> Result<Vocab> {
        Vocab::characters(self.vocab_size - 1)
    }

    /// Expected frames per utterance under the sampling scheme.
    pub fn expected_frames(&self) -> f64 {
        let n = (self.tokens_min + self.tokens_max) as f64 / 2.0;
        let d = (self.duration_min + self.duration_max) as f64 / 2.0;
        let s = (self.silence_min + self.silence_max) as f64 / 2.0;
        n * d + (n + 1.0) * self.silence_prob * s
    }

    /// Prototype rows for every token followed by the silence prototype.
    pub fn codebook(&self) -> Tensor2D {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(CODEBOOK_STREAM);
        let rows = self.vocab_size + 1;
        let data = (0..rows * self.feature_dim)
            .map(|_| self.prototype_scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Tensor2D::from_vec(rows, self.feature_dim, data).expect("sized")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: String,
    /// `F × D`.
    pub features: Tensor2D,
    pub transcript: LabelSeq,
    /// Per-frame generator truth over 𝒴′: the emitting token, or the blank
    /// for silence frames.
    pub true_alignment: Vec<usize>,
}

impl Utterance {
    pub fn frames(&self) -> usize {
        self.features.rows()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub spec: GenSpec,
    pub vocab: Vocab,
    pub split: Split,
    pub utterances: Vec<Utterance>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn total_frames(&self) -> usize {
        self.utterances.iter().map(Utterance::frames).sum()
    }
}

fn sample_transcript(spec: &GenSpec, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let separator = 0;
    let n = rng.random_range(spec.tokens_min..=spec.tokens_max);
    let mut ids = Vec::with_capacity(n);
    for i in 0..n {
        let edge = i == 0 || i + 1 == n;
        let prev = ids.last().copied();
        let candidates: Vec<usize> = (0..spec.vocab_size)
            .filter(|&t| Some(t) != prev && !(edge && t == separator))
            .collect();
        ids.push(candidates[rng.random_range(0..candidates.len())]);
    }
    ids
}

fn generate_one(spec: &GenSpec, codebook: &Tensor2D, split: Split, index: usize) -> Utterance {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(split.stream_base() + index as u64);
    let blank = spec.vocab_size;
    let transcript = sample_transcript(spec, &mut rng);
    let mut alignment = Vec::new();
    let silence = |rng: &mut ChaCha8Rng, alignment: &mut Vec<usize>| {
        if rng.random_bool(spec.silence_prob) {
            let d = rng.random_range(spec.silence_min..=spec.silence_max);
            alignment.extend(std::iter::repeat_n(blank, d));
        }
    };
    for &tok in &transcript {
        silence(&mut rng, &mut alignment);
        let d = rng.random_range(spec.duration_min..=spec.duration_max);
        alignment.extend(std::iter::repeat_n(tok, d));
    }
    silence(&mut rng, &mut alignment);

    let mut features = Tensor2D::zeros(alignment.len(), spec.feature_dim);
    for (f, &tag) in alignment.iter().enumerate() {
        let proto = codebook.row(tag);
        for (x, &p) in features.row_mut(f).iter_mut().zip(proto) {
            let noise = if spec.noise_std > 0.0 {
                spec.noise_std * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            *x = p + noise;
        }
    }
    debug_assert_eq!(collapse(&alignment, blank).ids(), transcript.as_slice());
    Utterance {
        id: format!("{}-{index:06}", split.name()),
        features,
        transcript: LabelSeq::from_ids_unchecked(transcript),
        true_alignment: alignment,
    }
}

/// `count` utterances of the training split.
pub fn generate(spec: &GenSpec, count: usize) -> Result<Dataset> {
    generate_split(spec, Split::Train, count)
}

/// Utterance `i` of a split depends only on `(spec, split, i)`; splits draw
/// from disjoint RNG streams and share the codebook.
pub fn generate_split(spec: &GenSpec, split: Split, count: usize) -> Result<Dataset> {
    spec.validate()?;
    let codebook = spec.codebook();
    let utterances = (0..count)
        .map(|i| generate_one(spec, &codebook, split, i))
        .collect();
    Ok(Dataset {
        spec: spec.clone(),
        vocab: spec.vocab()?,
        split,
        utterances,
    })
}
