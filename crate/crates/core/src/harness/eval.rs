use std::path::Path;

use serde::{Deserialize, Serialize};

use super::par_map;
use crate::ctc::{greedy_decode, PosteriorGrid, Vocab};
use crate::data::{Dataset, Utterance};
use crate::error::{Error, Result};
use crate::metrics::{agreement, alignment_shift, spike_profile, words, AgreementReport, ErrorTally};
use crate::model::{EncoderConfig, EncoderModel};
use crate::nn::checkpoint::{sha256_hex, Container};

/// Corpus-level greedy-decoding metrics for one output head.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PathMetrics {
    pub cer: f64,
    pub wer: f64,
    pub blank_ratio: f64,
    pub chars: ErrorTally,
    pub words: ErrorTally,
    pub blank_frames: usize,
}

#[derive(Clone, Debug, Default)]
struct PathTally {
    chars: ErrorTally,
    words: ErrorTally,
    blank_frames: usize,
    frames: usize,
}

impl PathTally {
    fn of(grid: &PosteriorGrid, u: &Utterance, vocab: &Vocab) -> Self {
        let blank = vocab.blank_id();
        let hyp = greedy_decode(grid, blank);
        let mut t = PathTally {
            frames: grid.frames(),
            blank_frames: grid.argmax_path().iter().filter(|&&a| a == blank).count(),
            ..Default::default()
        };
        t.chars.add(hyp.ids(), u.transcript.ids());
        t.words.add(&words(&hyp, vocab), &words(&u.transcript, vocab));
        t
    }

    fn merge(&mut self, o: &PathTally) {
        self.chars.merge(&o.chars);
        self.words.merge(&o.words);
        self.blank_frames += o.blank_frames;
        self.frames += o.frames;
    }

    fn finish(&self) -> Result<PathMetrics> {
        Ok(PathMetrics {
            cer: self.chars.rate()?,
            wer: self.words.rate()?,
            blank_ratio: self.blank_frames as f64 / self.frames.max(1) as f64,
            chars: self.chars,
            words: self.words,
            blank_frames: self.blank_frames,
        })
    }
}

/// Mean onset offset over utterances whose teacher and student decodes agree.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ShiftSummary {
    pub mean: Option<f64>,
    pub matched: usize,
    pub utterances: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub utterances: usize,
    pub frames: usize,
    pub final_path: PathMetrics,
    /// Intermediate head; the student path of a shared-teacher model.
    pub inter_path: Option<PathMetrics>,
    /// External teacher's own metrics when one was supplied.
    pub external_teacher: Option<PathMetrics>,
    /// Teacher vs student framewise argmax agreement.
    pub agreement: Option<AgreementReport>,
    pub alignment_shift: Option<ShiftSummary>,
}

impl EvalReport {
    /// Intermediate head if present, else the final head.
    pub fn student(&self) -> &PathMetrics {
        self.inter_path.as_ref().unwrap_or(&self.final_path)
    }

    /// External teacher if supplied, else the final head of a two-head model.
    pub fn teacher(&self) -> Option<&PathMetrics> {
        self.external_teacher
            .as_ref()
            .or(self.inter_path.as_ref().map(|_| &self.final_path))
    }
}

/// Per-utterance teacher and student grids as used for agreement analytics.
pub struct UtteranceGrids {
    pub final_grid: PosteriorGrid,
    pub inter_grid: Option<PosteriorGrid>,
    pub teacher_grid: Option<PosteriorGrid>,
}

impl UtteranceGrids {
    pub fn student(&self) -> &PosteriorGrid {
        self.inter_grid.as_ref().unwrap_or(&self.final_grid)
    }

    pub fn teacher(&self) -> Option<&PosteriorGrid> {
        self.teacher_grid
            .as_ref()
            .or(self.inter_grid.as_ref().map(|_| &self.final_grid))
    }
}

pub fn utterance_grids(model: &EncoderModel, teacher: Option<&EncoderModel>, u: &Utterance) -> Result<UtteranceGrids> {
    let out = model.infer(&u.features)?;
    let teacher_grid = teacher.map(|t| t.infer(&u.features).map(|o| o.final_grid)).transpose()?;
    Ok(UtteranceGrids {
        final_grid: out.final_grid,
        inter_grid: out.inter_grid,
        teacher_grid,
    })
}

struct UttEval {
    frames: usize,
    final_path: PathTally,
    inter_path: Option<PathTally>,
    teacher: Option<PathTally>,
    agreement: Option<AgreementReport>,
    shift: Option<Option<f64>>,
}

fn eval_one(model: &EncoderModel, teacher: Option<&EncoderModel>, u: &Utterance, vocab: &Vocab) -> Result<UttEval> {
    let g = utterance_grids(model, teacher, u)?;
    let (agree, shift) = match g.teacher() {
        Some(t) => {
            let s = g.student();
            let a = agreement(t, s, vocab)?;
            let shift = match alignment_shift(&spike_profile(t, vocab)?, &spike_profile(s, vocab)?) {
                Ok(v) => Some(v),
                Err(Error::TranscriptMismatch { .. }) => None,
                Err(e) => return Err(e),
            };
            (Some(a), Some(shift))
        }
        None => (None, None),
    };
    Ok(UttEval {
        frames: u.frames(),
        final_path: PathTally::of(&g.final_grid, u, vocab),
        inter_path: g.inter_grid.as_ref().map(|gr| PathTally::of(gr, u, vocab)),
        teacher: g.teacher_grid.as_ref().map(|gr| PathTally::of(gr, u, vocab)),
        agreement: agree,
        shift,
    })
}

/// Greedy-decoding evaluation of every head of `model` (and of `teacher`,
/// when given) over `data`. Utterances are processed in parallel and reduced
/// in dataset order.
pub fn evaluate(model: &EncoderModel, teacher: Option<&EncoderModel>, data: &Dataset) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let per_utt: Vec<UttEval> = par_map(&data.utterances, |u| {
        eval_one(model, teacher, u, &data.vocab).map_err(|e| e.in_utterance(&u.id))
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let mut final_path = PathTally::default();
    let mut inter_path: Option<PathTally> = None;
    let mut ext: Option<PathTally> = None;
    let mut agree: Option<AgreementReport> = None;
    let mut shift = ShiftSummary::default();
    let mut shift_sum = 0.0;
    let mut frames = 0;
    for r in &per_utt {
        frames += r.frames;
        final_path.merge(&r.final_path);
        let fold = |acc: &mut Option<PathTally>, x: &Option<PathTally>| {
            if let Some(x) = x {
                acc.get_or_insert_with(PathTally::default).merge(x);
            }
        };
        fold(&mut inter_path, &r.inter_path);
        fold(&mut ext, &r.teacher);
        if let Some(a) = &r.agreement {
            agree = Some(agree.map_or(*a, |acc| acc.merge(a)));
        }
        if let Some(s) = r.shift {
            shift.utterances += 1;
            if let Some(v) = s {
                shift.matched += 1;
                shift_sum += v;
            }
        }
    }
    shift.mean = (shift.matched > 0).then(|| shift_sum / shift.matched as f64);
    Ok(EvalReport {
        utterances: data.len(),
        frames,
        final_path: final_path.finish()?,
        inter_path: inter_path.map(|t| t.finish()).transpose()?,
        external_teacher: ext.map(|t| t.finish()).transpose()?,
        agreement: agree,
        alignment_shift: agree.map(|_| shift),
    })
}

/// Report of a checkpoint evaluation: the full report plus the path chosen
/// as the headline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEval {
    pub checkpoint_digest: String,
    pub student_path: bool,
    pub cer: f64,
    pub wer: f64,
    pub report: EvalReport,
}

/// Loads `checkpoint` (optionally insisting on an architecture) and
/// evaluates it; `use_student_path` picks which head supplies the headline
/// numbers.
pub fn cmd_evaluate(
    checkpoint: &Path,
    data: &Dataset,
    expected: Option<&EncoderConfig>,
    teacher: Option<&EncoderModel>,
    use_student_path: bool,
) -> Result<CheckpointEval> {
    let bytes = std::fs::read(checkpoint)?;
    let c = Container::from_bytes(&bytes)?;
    let model = match expected {
        Some(cfg) => EncoderModel::from_container_expecting(&c, cfg)?,
        None => EncoderModel::from_container(&c)?,
    };
    let report = evaluate(&model, teacher, data)?;
    let headline = if use_student_path { report.student() } else { &report.final_path };
    Ok(CheckpointEval {
        checkpoint_digest: sha256_hex(&bytes),
        student_path: use_student_path,
        cer: headline.cer,
        wer: headline.wer,
        report,
    })
}
