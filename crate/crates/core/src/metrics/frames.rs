use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::ctc::{LabelSeq, PosteriorGrid, Vocab};
use crate::error::{Error, Result};

/// Framewise teacher/student argmax agreement, over all frames and over the
/// teacher's non-blank ("active") frames.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub total_acc: f64,
    /// `None` when the teacher never leaves blank.
    pub active_acc: Option<f64>,
    pub total_frames: usize,
    pub active_frames: usize,
    pub total_agree: usize,
    pub active_agree: usize,
}

impl AgreementReport {
    pub fn from_counts(total_agree: usize, total_frames: usize, active_agree: usize, active_frames: usize) -> Self {
        let ratio = |a: usize, n: usize| (n > 0).then(|| a as f64 / n as f64);
        Self {
            total_acc: ratio(total_agree, total_frames).unwrap_or(0.0),
            active_acc: ratio(active_agree, active_frames),
            total_frames,
            active_frames,
            total_agree,
            active_agree,
        }
    }

    pub fn merge(&self, other: &AgreementReport) -> Self {
        Self::from_counts(
            self.total_agree + other.total_agree,
            self.total_frames + other.total_frames,
            self.active_agree + other.active_agree,
            self.active_frames + other.active_frames,
        )
    }
}

pub fn agreement(teacher: &PosteriorGrid, student: &PosteriorGrid, vocab: &Vocab) -> Result<AgreementReport> {
    teacher.check_same_shape(student, "agreement")?;
    teacher.check_vocab(vocab)?;
    let blank = vocab.blank_id();
    let (mut total, mut active, mut active_frames) = (0, 0, 0);
    for (t, s) in teacher.argmax_path().into_iter().zip(student.argmax_path()) {
        let same = usize::from(t == s);
        total += same;
        if t != blank {
            active_frames += 1;
            active += same;
        }
    }
    Ok(AgreementReport::from_counts(total, teacher.frames(), active, active_frames))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    pub frame: usize,
    pub token: usize,
    pub posterior: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikeProfile {
    pub frames: usize,
    pub spikes: Vec<Spike>,
    pub blank_ratio: f64,
}

impl SpikeProfile {
    /// Runs of consecutive spikes on the same token, as `(onset frame, token)`.
    pub fn onsets(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::new();
        let mut prev: Option<&Spike> = None;
        for s in &self.spikes {
            let continues = prev.is_some_and(|p| p.frame + 1 == s.frame && p.token == s.token);
            if !continues {
                out.push((s.frame, s.token));
            }
            prev = Some(s);
        }
        out
    }

    /// Same as greedy decoding of the grid the profile came from.
    pub fn decoded(&self) -> LabelSeq {
        LabelSeq::from_ids_unchecked(self.onsets().into_iter().map(|(_, t)| t).collect())
    }
}

pub fn spike_profile(grid: &PosteriorGrid, vocab: &Vocab) -> Result<SpikeProfile> {
    grid.check_vocab(vocab)?;
    let blank = vocab.blank_id();
    let spikes: Vec<Spike> = grid
        .argmax_path()
        .into_iter()
        .enumerate()
        .filter(|&(_, a)| a != blank)
        .map(|(f, a)| Spike {
            frame: f,
            token: a,
            posterior: grid.log_prob(f, a).exp(),
        })
        .collect();
    let frames = grid.frames();
    let blank_ratio = if frames == 0 {
        1.0
    } else {
        1.0 - spikes.len() as f64 / frames as f64
    };
    Ok(SpikeProfile { frames, spikes, blank_ratio })
}

/// Mean absolute onset offset between the i-th emitted tokens of two
/// profiles that decode to the same transcript.
pub fn alignment_shift(a: &SpikeProfile, b: &SpikeProfile) -> Result<f64> {
    let (oa, ob) = (a.onsets(), b.onsets());
    let (ta, tb) = (a.decoded(), b.decoded());
    if ta != tb {
        return Err(Error::TranscriptMismatch {
            left: ta.into_ids(),
            right: tb.into_ids(),
        });
    }
    if oa.is_empty() {
        return Ok(0.0);
    }
    let sum: usize = oa.iter().zip(&ob).map(|(x, y)| x.0.abs_diff(y.0)).sum();
    Ok(sum as f64 / oa.len() as f64)
}

/// `utterance,frame,token,symbol,posterior` rows.
pub fn write_spikes_csv<W: Write>(
    out: &mut W,
    profiles: &[(String, SpikeProfile)],
    vocab: &Vocab,
) -> Result<()> {
    writeln!(out, "utterance,frame,token,symbol,posterior")?;
    for (id, p) in profiles {
        for s in &p.spikes {
            let sym = vocab.tokens()[s.token].replace(' ', "<sp>");
            writeln!(out, "{id},{},{},{sym},{:.17e}", s.frame, s.token, s.posterior)?;
        }
    }
    Ok(())
}
