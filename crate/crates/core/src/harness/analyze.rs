use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::eval::{utterance_grids, UtteranceGrids};
use super::par_map;
use super::train::{CONFIG_FILE, MODEL_FILE};
use crate::ctc::PosteriorGrid;
use crate::data::Split;
use crate::error::{Error, Result};
use crate::metrics::{agreement, spike_profile, write_spikes_csv, AgreementReport};
use crate::model::EncoderModel;
use crate::nn::{Container, Tensor2D};

pub const GRIDS_FILE: &str = "grids.jsonl";
pub const ANALYSIS_FILE: &str = "analysis.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub split: Split,
    pub utterances: usize,
    pub agreement: Option<AgreementReport>,
    pub student_blank_ratio: f64,
    pub teacher_blank_ratio: Option<f64>,
}

/// One line of `grids.jsonl`: log-posteriors of the student and, when
/// present, teacher paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DumpedGrids {
    pub id: String,
    pub student: Vec<Vec<f64>>,
    pub teacher: Option<Vec<Vec<f64>>>,
}

impl DumpedGrids {
    pub fn student_grid(&self) -> Result<PosteriorGrid> {
        PosteriorGrid::from_log_probs(Tensor2D::from_rows(&self.student)?)
    }

    pub fn teacher_grid(&self) -> Result<Option<PosteriorGrid>> {
        self.teacher
            .as_ref()
            .map(|t| PosteriorGrid::from_log_probs(Tensor2D::from_rows(t)?))
            .transpose()
    }
}

fn rows(g: &PosteriorGrid) -> Vec<Vec<f64>> {
    g.log_probs().iter_rows().map(<[f64]>::to_vec).collect()
}

pub fn read_grids(path: &Path) -> Result<Vec<DumpedGrids>> {
    fs::read_to_string(path)?
        .lines()
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Recomputes agreement and blank ratios for `split` of a finished run and
/// dumps grids and spike tables under `out`.
pub fn cmd_analyze(run_dir: &Path, split: Split, out: &Path) -> Result<AnalysisReport> {
    let cfg = RunConfig::load(&run_dir.join(CONFIG_FILE))?;
    let model = EncoderModel::from_container_expecting(&Container::load(&run_dir.join(MODEL_FILE))?, &cfg.model_config())?;
    let teacher = match (&cfg.teacher_checkpoint, cfg.distill.method.uses_external_teacher()) {
        (Some(p), true) => Some(EncoderModel::load(p)?),
        (None, true) => {
            return Err(Error::MissingTeacherCheckpoint {
                method: cfg.distill.method.to_string(),
            })
        }
        _ => None,
    };
    let data = cfg.data.load(split)?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let grids: Vec<UtteranceGrids> = par_map(&data.utterances, |u| utterance_grids(&model, teacher.as_ref(), u))
        .into_iter()
        .collect::<Result<_>>()?;

    fs::create_dir_all(out)?;
    let mut dump = BufWriter::new(fs::File::create(out.join(GRIDS_FILE))?);
    let mut student_spikes = Vec::new();
    let mut teacher_spikes = Vec::new();
    let mut agree: Option<AgreementReport> = None;
    for (u, g) in data.utterances.iter().zip(&grids) {
        let line = DumpedGrids {
            id: u.id.clone(),
            student: rows(g.student()),
            teacher: g.teacher().map(rows),
        };
        writeln!(dump, "{}", serde_json::to_string(&line)?)?;
        student_spikes.push((u.id.clone(), spike_profile(g.student(), &data.vocab)?));
        if let Some(t) = g.teacher() {
            teacher_spikes.push((u.id.clone(), spike_profile(t, &data.vocab)?));
            let a = agreement(t, g.student(), &data.vocab)?;
            agree = Some(agree.map_or(a, |acc| acc.merge(&a)));
        }
    }
    dump.flush()?;
    let ratio = |profiles: &[(String, crate::metrics::SpikeProfile)]| {
        let frames: usize = profiles.iter().map(|(_, p)| p.frames).sum();
        let spikes: usize = profiles.iter().map(|(_, p)| p.spikes.len()).sum();
        (frames - spikes) as f64 / frames.max(1) as f64
    };
    let mut csv = BufWriter::new(fs::File::create(out.join("spikes_student.csv"))?);
    write_spikes_csv(&mut csv, &student_spikes, &data.vocab)?;
    csv.flush()?;
    if !teacher_spikes.is_empty() {
        let mut csv = BufWriter::new(fs::File::create(out.join("spikes_teacher.csv"))?);
        write_spikes_csv(&mut csv, &teacher_spikes, &data.vocab)?;
        csv.flush()?;
    }
    let report = AnalysisReport {
        split,
        utterances: data.len(),
        agreement: agree,
        student_blank_ratio: ratio(&student_spikes),
        teacher_blank_ratio: (!teacher_spikes.is_empty()).then(|| ratio(&teacher_spikes)),
    };
    fs::write(out.join(ANALYSIS_FILE), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}
