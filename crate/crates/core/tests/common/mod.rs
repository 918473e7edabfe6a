#![allow(dead_code)]

use std::path::Path;

use ctclab::data::GenSpec;
use ctclab::distill::{DistillSpec, Method, Schedule, TeacherSource};
use ctclab::harness::{DataSource, RunConfig};
use ctclab::model::EncoderConfig;

pub fn tiny_spec(seed: u64) -> GenSpec {
    GenSpec {
        vocab_size: 4,
        feature_dim: 6,
        duration_min: 1,
        duration_max: 3,
        silence_prob: 0.3,
        silence_min: 1,
        silence_max: 2,
        noise_std: 0.3,
        prototype_scale: 1.0,
        tokens_min: 2,
        tokens_max: 4,
        seed,
    }
}

pub fn tiny_encoder(layers: usize, tap: Option<usize>) -> EncoderConfig {
    EncoderConfig {
        input_dim: 6,
        num_layers: layers,
        tap_layer: tap,
        model_dim: 8,
        num_heads: 2,
        ffn_dim: 16,
        num_classes: 5,
        seed: 0,
    }
}

pub fn distill(method: Method, masking: bool, student_layer: usize) -> DistillSpec {
    DistillSpec {
        method,
        masking,
        schedule: if method == Method::None {
            Schedule::Constant { alpha: 0.0 }
        } else {
            Schedule::ClippedLinear { t: 0.3 }
        },
        student_layer,
        teacher_source: if method.uses_external_teacher() {
            TeacherSource::ExternalCheckpoint
        } else {
            TeacherSource::SharedSubmodel
        },
    }
}

/// A 3-layer run with the tap at layer 2 (or a plain model for `none`).
pub fn tiny_run(method: Method, out: &Path) -> RunConfig {
    let (encoder, student_layer) = match method {
        Method::None => (tiny_encoder(3, None), 1),
        m if m.uses_external_teacher() => (tiny_encoder(2, None), 2),
        _ => (tiny_encoder(3, Some(2)), 2),
    };
    RunConfig {
        encoder,
        distill: distill(method, false, student_layer),
        data: DataSource::Generate {
            spec: tiny_spec(3),
            train: 24,
            dev: 6,
            test: 8,
        },
        epochs: 3,
        batch_size: 8,
        seed: 7,
        out_dir: out.to_path_buf(),
        ..RunConfig::default()
    }
}
