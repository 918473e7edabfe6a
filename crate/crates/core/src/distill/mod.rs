//! Distillation objectives, the α scheduler and the combined training loss.

mod losses;
mod objective;
mod schedule;
mod spec;

pub use losses::{
    blank_mask, frame_kd_loss, frame_kd_term, guide_ctc_loss, guide_ctc_term, skd_loss, skd_term,
    softmax_kd_loss, softmax_kd_term, BlankMask, KdTerm,
};
pub use objective::{objective, HeadGrads, HeadOutputs, ObjectiveTerms};
pub use schedule::{schedule_alpha, total_loss};
pub use spec::{DistillSpec, Method, Schedule, TeacherSource, DEFAULT_CLIP};
