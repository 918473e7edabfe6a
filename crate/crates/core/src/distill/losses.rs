//! Frame-level distillation objectives. All gradients are with respect to
//! the pre-softmax logits of the corresponding head.

use crate::ctc::{PosteriorGrid, Vocab};
use crate::error::Result;
use crate::nn::softmax::softmax_bwd;
use crate::nn::tensor::{argmax, Tensor2D};

/// A distillation term with its gradients.
#[derive(Clone, Debug)]
pub struct KdTerm {
    pub loss: f64,
    pub student_grad: Tensor2D,
    /// Gradient through the teacher head; `None` where the loss is piecewise
    /// constant in the teacher (hard argmax targets).
    pub teacher_grad: Option<Tensor2D>,
}

/// Indicator grid `M[f][a] = 1(argmax_ā p_T(ā|f) = a ≠ φ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlankMask {
    mask: Tensor2D,
}

impl BlankMask {
    pub fn grid(&self) -> &Tensor2D {
        &self.mask
    }

    /// Target class for frame `f`, if the frame is active.
    pub fn target(&self, f: usize) -> Option<usize> {
        self.mask.row(f).iter().position(|&v| v != 0.0)
    }

    pub fn active_frames(&self) -> usize {
        (0..self.mask.rows()).filter(|&f| self.target(f).is_some()).count()
    }
}

pub fn blank_mask(teacher: &PosteriorGrid, vocab: &Vocab) -> BlankMask {
    blank_mask_with(teacher, vocab.blank_id())
}

fn blank_mask_with(teacher: &PosteriorGrid, blank: usize) -> BlankMask {
    let mut mask = Tensor2D::zeros(teacher.frames(), teacher.num_classes());
    for (f, a) in teacher.argmax_path().into_iter().enumerate() {
        if a != blank {
            mask.set(f, a, 1.0);
        }
    }
    BlankMask { mask }
}

/// `−Σ_f Σ_a p_T(a|f) log p_S(a|f)`.
pub fn frame_kd_loss(teacher: &PosteriorGrid, student: &PosteriorGrid) -> Result<f64> {
    Ok(frame_kd_term(teacher, student)?.loss)
}

pub fn frame_kd_term(teacher: &PosteriorGrid, student: &PosteriorGrid) -> Result<KdTerm> {
    teacher.check_same_shape(student, "frame_kd")?;
    let pt = teacher.probs();
    let ps = student.probs();
    let loss = -pt.dot(student.log_probs());
    // softmax cross-entropy: p_S − p_T, since Σ p_T = 1
    let mut student_grad = ps;
    for (g, t) in student_grad.data_mut().iter_mut().zip(pt.data()) {
        *g -= t;
    }
    let neg_log_ps = student.log_probs().scaled(-1.0);
    let teacher_grad = softmax_bwd(&pt, &neg_log_ps)?;
    Ok(KdTerm {
        loss,
        student_grad,
        teacher_grad: Some(teacher_grad),
    })
}

/// `Σ_f Σ_a (p_T(a|f) − p_S(a|f))²`.
pub fn softmax_kd_loss(teacher: &PosteriorGrid, student: &PosteriorGrid) -> Result<f64> {
    Ok(softmax_kd_term(teacher, student)?.loss)
}

pub fn softmax_kd_term(teacher: &PosteriorGrid, student: &PosteriorGrid) -> Result<KdTerm> {
    teacher.check_same_shape(student, "softmax_kd")?;
    let pt = teacher.probs();
    let ps = student.probs();
    let mut diff = pt.clone();
    for (d, s) in diff.data_mut().iter_mut().zip(ps.data()) {
        *d -= s;
    }
    let loss = diff.dot(&diff);
    let student_grad = softmax_bwd(&ps, &diff.scaled(-2.0))?;
    let teacher_grad = softmax_bwd(&pt, &diff.scaled(2.0))?;
    Ok(KdTerm {
        loss,
        student_grad,
        teacher_grad: Some(teacher_grad),
    })
}

/// Hard-target distillation from the teacher's frame argmax. With
/// `masking`, frames whose teacher argmax is blank contribute nothing;
/// without it every frame (blank frames included) is a one-hot target.
pub fn guide_ctc_loss(
    teacher: &PosteriorGrid,
    student: &PosteriorGrid,
    vocab: &Vocab,
    masking: bool,
) -> Result<f64> {
    teacher.check_vocab(vocab)?;
    Ok(guide_ctc_term(teacher, student, vocab.blank_id(), masking)?.loss)
}

pub fn guide_ctc_term(
    teacher: &PosteriorGrid,
    student: &PosteriorGrid,
    blank: usize,
    masking: bool,
) -> Result<KdTerm> {
    teacher.check_same_shape(student, "guide_ctc")?;
    let mut loss = 0.0;
    let mut student_grad = Tensor2D::zeros(student.frames(), student.num_classes());
    for f in 0..teacher.frames() {
        let target = argmax(teacher.log_probs().row(f));
        if masking && target == blank {
            continue;
        }
        loss -= student.log_prob(f, target);
        let row = student_grad.row_mut(f);
        for (g, &lp) in row.iter_mut().zip(student.log_probs().row(f)) {
            *g = lp.exp();
        }
        row[target] -= 1.0;
    }
    Ok(KdTerm {
        loss,
        student_grad,
        teacher_grad: None,
    })
}

/// Self-distillation from the final head (teacher) to the intermediate
/// head (student). Without masking this is [`frame_kd_loss`]; with masking
/// it is the masked hard-target loss. The blank is the last class.
pub fn skd_loss(teacher: &PosteriorGrid, student: &PosteriorGrid, masking: bool) -> Result<f64> {
    Ok(skd_term(teacher, student, masking)?.loss)
}

pub fn skd_term(teacher: &PosteriorGrid, student: &PosteriorGrid, masking: bool) -> Result<KdTerm> {
    if masking {
        guide_ctc_term(teacher, student, teacher.num_classes() - 1, true)
    } else {
        frame_kd_term(teacher, student)
    }
}
