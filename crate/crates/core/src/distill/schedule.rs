use super::spec::{DistillSpec, Method, Schedule};
use crate::error::{Error, Result};

/// α for 1-based epoch `epoch` of `total`.
///
/// Clipped linear: `min(max((e−1)/(E−1), t), 1−t)`. The upper half of the
/// epoch range is evaluated as the mirror image `1 − τ(E+1−e)` so that
/// `τ(e) + τ(E+1−e) == 1` holds after rounding, which keeps the mean at 0.5.
pub fn schedule_alpha(epoch: usize, total: usize, spec: &DistillSpec) -> Result<f64> {
    if epoch < 1 || epoch > total {
        return Err(Error::EpochOutOfRange { epoch, total });
    }
    if spec.method == Method::None {
        return Ok(0.0);
    }
    match spec.schedule {
        Schedule::Constant { alpha } => Ok(alpha),
        Schedule::ClippedLinear { t } => {
            if total < 2 {
                return Err(Error::invalid("clipped_linear schedule needs at least 2 epochs"));
            }
            let span = total - 1;
            let k = epoch - 1;
            let lower = |k: usize| (k as f64 / span as f64).max(t);
            if 2 * k > span {
                Ok(1.0 - lower(span - k))
            } else {
                Ok(lower(k))
            }
        }
    }
}

/// `(1−α)·ctc_final + α·(ctc_inter + kd)`.
pub fn total_loss(ctc_final: f64, ctc_inter: f64, kd: f64, alpha: f64) -> f64 {
    (1.0 - alpha) * ctc_final + alpha * (ctc_inter + kd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distill::spec::TeacherSource;

    fn spec(schedule: Schedule) -> DistillSpec {
        DistillSpec {
            method: Method::Skd,
            masking: false,
            schedule,
            student_layer: 2,
            teacher_source: TeacherSource::SharedSubmodel,
        }
    }

    #[test]
    fn first_and_last_epochs_are_clipped() {
        let s = spec(Schedule::ClippedLinear { t: 0.3 });
        assert_eq!(schedule_alpha(1, 200, &s).unwrap(), 0.3);
        assert_eq!(schedule_alpha(200, 200, &s).unwrap(), 1.0 - 0.3);
        assert!((schedule_alpha(100, 199, &s).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn monotone_and_bounded() {
        let s = spec(Schedule::ClippedLinear { t: 0.3 });
        for total in [2, 3, 7, 10, 60, 200] {
            let vals: Vec<f64> = (1..=total).map(|e| schedule_alpha(e, total, &s).unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[0] <= w[1]));
            assert!(vals.iter().all(|&a| (0.3..=0.7).contains(&a)));
        }
    }

    #[test]
    fn constant_and_none() {
        let s = spec(Schedule::Constant { alpha: 0.42 });
        assert_eq!(schedule_alpha(3, 5, &s).unwrap(), 0.42);
        let none = DistillSpec::baseline();
        assert_eq!(schedule_alpha(1, 5, &none).unwrap(), 0.0);
    }

    #[test]
    fn out_of_range_epochs() {
        let s = spec(Schedule::ClippedLinear { t: 0.3 });
        assert!(matches!(schedule_alpha(0, 5, &s), Err(Error::EpochOutOfRange { .. })));
        assert!(matches!(schedule_alpha(6, 5, &s), Err(Error::EpochOutOfRange { .. })));
        assert!(schedule_alpha(1, 1, &s).is_err());
    }

    #[test]
    fn total_loss_arithmetic() {
        assert_eq!(total_loss(2.0, 3.0, 1.0, 0.0), 2.0);
        assert_eq!(total_loss(2.0, 3.0, 1.0, 1.0), 4.0);
        assert!((total_loss(2.0, 3.0, 1.0, 0.3) - 2.6).abs() < 1e-15);
    }
}
