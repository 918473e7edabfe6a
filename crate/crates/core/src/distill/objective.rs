//! Per-utterance assembly of the full training objective and the gradients
//! it sends into each CTC head.

use super::losses::{frame_kd_term, guide_ctc_term, skd_term, softmax_kd_term, KdTerm};
use super::schedule::total_loss;
use super::spec::{DistillSpec, Method};
use crate::ctc::{ctc_loss_and_grad, LabelSeq, PosteriorGrid, Vocab};
use crate::error::{Error, Result};
use crate::nn::Tensor2D;

/// Head outputs of the model being trained.
#[derive(Clone, Copy, Debug)]
pub struct HeadOutputs<'a> {
    pub final_grid: &'a PosteriorGrid,
    pub inter_grid: Option<&'a PosteriorGrid>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveTerms {
    pub alpha: f64,
    pub ctc_final: f64,
    pub ctc_inter: Option<f64>,
    pub kd: Option<f64>,
    pub total: f64,
}

/// Gradients of the weighted objective with respect to each head's logits.
#[derive(Clone, Debug)]
pub struct HeadGrads {
    /// Everything that always flows through the final head.
    pub final_head: Tensor2D,
    /// Distillation gradient reaching the final head because it acts as the
    /// teacher; dropped under stop-gradient.
    pub final_teacher_kd: Option<Tensor2D>,
    pub inter_head: Option<Tensor2D>,
}

impl HeadGrads {
    pub fn scale(&mut self, s: f64) {
        self.final_head.scale(s);
        if let Some(g) = &mut self.final_teacher_kd {
            g.scale(s);
        }
        if let Some(g) = &mut self.inter_head {
            g.scale(s);
        }
    }
}

fn kd_for(method: Method, masking: bool, teacher: &PosteriorGrid, student: &PosteriorGrid) -> Result<KdTerm> {
    let blank = teacher.num_classes() - 1;
    match method {
        Method::FrameKd => frame_kd_term(teacher, student),
        Method::SoftmaxKd => softmax_kd_term(teacher, student),
        Method::GuideCtc => guide_ctc_term(teacher, student, blank, masking),
        Method::Skd => skd_term(teacher, student, masking),
        Method::None | Method::LayerPrune => unreachable!("no distillation term"),
    }
}

/// Evaluates `(1−α)·L_CTC + α·(L_iCTC + L_KD)` for one utterance.
///
/// For external-teacher methods the student path is the intermediate head
/// when the model has one and the final head otherwise, and `L_iCTC` is
/// absent. For `none`, α is forced to 0.
pub fn objective(
    spec: &DistillSpec,
    alpha: f64,
    labels: &LabelSeq,
    vocab: &Vocab,
    heads: HeadOutputs<'_>,
    external_teacher: Option<&PosteriorGrid>,
) -> Result<(ObjectiveTerms, HeadGrads)> {
    let method = spec.method;
    let alpha = if method == Method::None { 0.0 } else { alpha };
    let (ctc_final, g_final) = ctc_loss_and_grad(heads.final_grid, labels, vocab)?;
    let mut grads = HeadGrads {
        final_head: g_final.scaled(1.0 - alpha),
        final_teacher_kd: None,
        inter_head: None,
    };
    let mut ctc_inter = None;
    let mut kd = None;

    if method.uses_intermediate_ctc() {
        let inter = heads
            .inter_grid
            .ok_or_else(|| Error::invalid(format!("method {method} needs an intermediate head")))?;
        let (loss, g) = ctc_loss_and_grad(inter, labels, vocab)?;
        ctc_inter = Some(loss);
        grads.inter_head = Some(g.scaled(alpha));
    }

    if method == Method::Skd {
        let inter = heads.inter_grid.expect("checked above");
        let term = kd_for(method, spec.masking, heads.final_grid, inter)?;
        kd = Some(term.loss);
        let inter_grad = grads.inter_head.as_mut().expect("set above");
        inter_grad.add_assign(&term.student_grad.scaled(alpha))?;
        grads.final_teacher_kd = term.teacher_grad.map(|g| g.scaled(alpha));
    } else if method.uses_external_teacher() {
        let teacher = external_teacher.ok_or_else(|| Error::MissingTeacherCheckpoint {
            method: method.to_string(),
        })?;
        let student = heads.inter_grid.unwrap_or(heads.final_grid);
        let term = kd_for(method, spec.masking, teacher, student)?;
        kd = Some(term.loss);
        let g = term.student_grad.scaled(alpha);
        if heads.inter_grid.is_some() {
            grads.inter_head = Some(g);
        } else {
            grads.final_head.add_assign(&g)?;
        }
    }

    let total = total_loss(ctc_final, ctc_inter.unwrap_or(0.0), kd.unwrap_or(0.0), alpha);
    Ok((
        ObjectiveTerms {
            alpha,
            ctc_final,
            ctc_inter,
            kd,
            total,
        },
        grads,
    ))
}
