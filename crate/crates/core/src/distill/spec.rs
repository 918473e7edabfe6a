use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Plain CTC on the final head.
    None,
    /// Soft cross-entropy against an external teacher's frame posteriors.
    FrameKd,
    /// Squared error between teacher and student frame posteriors.
    SoftmaxKd,
    /// Hard targets from the teacher's non-blank frame argmax.
    GuideCtc,
    /// Intermediate CTC plus frame-level distillation from the model's own
    /// final head.
    Skd,
    /// Intermediate CTC only; deploy the first `l` layers.
    LayerPrune,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::None,
        Method::FrameKd,
        Method::SoftmaxKd,
        Method::GuideCtc,
        Method::Skd,
        Method::LayerPrune,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::FrameKd => "frame_kd",
            Method::SoftmaxKd => "softmax_kd",
            Method::GuideCtc => "guide_ctc",
            Method::Skd => "skd",
            Method::LayerPrune => "layer_prune",
        }
    }

    /// Methods that distill from a separately trained, frozen teacher.
    pub fn uses_external_teacher(self) -> bool {
        matches!(self, Method::FrameKd | Method::SoftmaxKd | Method::GuideCtc)
    }

    /// Methods that attach a CTC loss to the intermediate head.
    pub fn uses_intermediate_ctc(self) -> bool {
        matches!(self, Method::Skd | Method::LayerPrune)
    }

    pub fn has_kd_term(self) -> bool {
        matches!(
            self,
            Method::FrameKd | Method::SoftmaxKd | Method::GuideCtc | Method::Skd
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant { alpha: f64 },
    ClippedLinear { t: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherSource {
    SharedSubmodel,
    ExternalCheckpoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillSpec {
    pub method: Method,
    #[serde(default)]
    pub masking: bool,
    pub schedule: Schedule,
    /// Depth of the student path: the tap layer for shared methods, the
    /// student model's depth for external-teacher methods.
    pub student_layer: usize,
    pub teacher_source: TeacherSource,
}

pub const DEFAULT_CLIP: f64 = 0.3;

impl DistillSpec {
    pub fn skd(student_layer: usize) -> Self {
        Self {
            method: Method::Skd,
            masking: false,
            schedule: Schedule::ClippedLinear { t: DEFAULT_CLIP },
            student_layer,
            teacher_source: TeacherSource::SharedSubmodel,
        }
    }

    pub fn baseline() -> Self {
        Self {
            method: Method::None,
            masking: false,
            schedule: Schedule::Constant { alpha: 0.0 },
            student_layer: 1,
            teacher_source: TeacherSource::SharedSubmodel,
        }
    }

    /// `teacher_layers` is L, the depth of the model providing the teacher
    /// head.
    pub fn validate(&self, teacher_layers: usize) -> Result<()> {
        match self.schedule {
            Schedule::Constant { alpha } if !(0.0..=1.0).contains(&alpha) => {
                return Err(Error::invalid(format!("constant alpha {alpha} outside [0, 1]")));
            }
            Schedule::ClippedLinear { t } if !(t > 0.0 && t <= 0.5) => {
                return Err(Error::invalid(format!("clip t {t} outside (0, 0.5]")));
            }
            _ => {}
        }
        let wants_external = self.method.uses_external_teacher();
        let is_external = self.teacher_source == TeacherSource::ExternalCheckpoint;
        if wants_external != is_external {
            return Err(Error::invalid(format!(
                "method {} requires teacher_source {}",
                self.method,
                if wants_external { "external_checkpoint" } else { "shared_submodel" }
            )));
        }
        if self.method != Method::None
            && !(self.student_layer >= 1 && self.student_layer < teacher_layers)
        {
            return Err(Error::invalid(format!(
                "student_layer {} must satisfy 1 <= l < L = {teacher_layers}",
                self.student_layer
            )));
        }
        Ok(())
    }
}
