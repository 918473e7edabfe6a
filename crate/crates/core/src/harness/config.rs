use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{generate_split, load_dataset, Dataset, GenSpec, Split};
use crate::distill::{DistillSpec, Method, TeacherSource};
use crate::error::{Error, Result};
use crate::model::EncoderConfig;
use crate::nn::OptimConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Generate all three splits in memory.
    Generate {
        spec: GenSpec,
        train: usize,
        dev: usize,
        test: usize,
    },
    /// A directory holding `train/`, `dev/` and `test/` datasets written by
    /// `gen-data`.
    Path(PathBuf),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Generate {
            spec: GenSpec::default(),
            train: 400,
            dev: 100,
            test: 200,
        }
    }
}

impl DataSource {
    pub fn load(&self, split: Split) -> Result<Dataset> {
        match self {
            DataSource::Generate { spec, train, dev, test } => {
                let n = match split {
                    Split::Train => *train,
                    Split::Dev => *dev,
                    Split::Test => *test,
                };
                generate_split(spec, split, n)
            }
            DataSource::Path(dir) => load_dataset(&dir.join(split.name())),
        }
    }

    /// Generator parameters, reading only the manifest for on-disk data.
    pub fn spec(&self) -> Result<GenSpec> {
        match self {
            DataSource::Generate { spec, .. } => Ok(spec.clone()),
            DataSource::Path(dir) => Ok(load_dataset(&dir.join(Split::Dev.name()))?.spec),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub encoder: EncoderConfig,
    pub distill: DistillSpec,
    pub data: DataSource,
    pub optim: OptimConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// Leading fraction of optimizer steps during which only the CTC heads
    /// are updated.
    pub freeze_fraction: f64,
    /// Seeds weight initialization (overriding `encoder.seed`) and the
    /// per-epoch data order.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub teacher_checkpoint: Option<PathBuf>,
    /// Evaluate on the dev split after every epoch.
    pub dev_eval: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            distill: DistillSpec::skd(2),
            data: DataSource::default(),
            optim: OptimConfig::default(),
            epochs: 60,
            batch_size: 16,
            freeze_fraction: 0.125,
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            teacher_checkpoint: None,
            dev_eval: true,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Encoder config actually instantiated: `seed` replaces `encoder.seed`.
    pub fn model_config(&self) -> EncoderConfig {
        EncoderConfig {
            seed: self.seed,
            ..self.encoder.clone()
        }
    }

    /// Switches method, keeping teacher source and tap consistent with it.
    pub fn set_method(&mut self, method: Method) {
        self.distill.method = method;
        self.distill.teacher_source = if method.uses_external_teacher() {
            TeacherSource::ExternalCheckpoint
        } else {
            TeacherSource::SharedSubmodel
        };
        if method.uses_external_teacher() {
            self.distill.student_layer = self.encoder.num_layers;
        }
        if method.uses_intermediate_ctc() {
            match self.encoder.tap_layer {
                Some(l) => self.distill.student_layer = l,
                None => self.encoder.tap_layer = Some(self.distill.student_layer),
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.optim.validate()?;
        let method = self.distill.method;
        if method.uses_external_teacher() {
            // the teacher's depth is only known once its checkpoint is loaded
            self.distill.validate(usize::MAX)?;
            if self.distill.student_layer != self.encoder.num_layers {
                return Err(Error::invalid(
                    "external-teacher methods need distill.student_layer == encoder.num_layers",
                ));
            }
        } else {
            self.distill.validate(self.encoder.num_layers)?;
        }
        if self.epochs < 1 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.freeze_fraction) {
            return Err(Error::invalid("freeze_fraction must be in [0, 1)"));
        }
        if method.uses_intermediate_ctc() && self.encoder.tap_layer != Some(self.distill.student_layer) {
            return Err(Error::invalid(format!(
                "method {method} needs encoder.tap_layer == distill.student_layer ({})",
                self.distill.student_layer
            )));
        }
        if let DataSource::Generate { spec, train, .. } = &self.data {
            spec.validate()?;
            if *train == 0 {
                return Err(Error::EmptyDataset);
            }
            if spec.feature_dim != self.encoder.input_dim {
                return Err(Error::invalid("encoder.input_dim must equal the data feature_dim"));
            }
            if spec.vocab_size + 1 != self.encoder.num_classes {
                return Err(Error::invalid("encoder.num_classes must be vocab_size + 1"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let back: RunConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_json_uses_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"epochs": 3, "seed": 9}"#).unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.batch_size, 16);
        assert_eq!(c.model_config().seed, 9);
        assert!(serde_json::from_str::<RunConfig>(r#"{"epoch": 3}"#).is_err());
    }

    #[test]
    fn rejects_bad_fields() {
        let mut c = RunConfig { epochs: 0, ..RunConfig::default() };
        assert!(c.validate().is_err());
        c.epochs = 1;
        c.freeze_fraction = 1.0;
        assert!(c.validate().is_err());
        c.freeze_fraction = 0.0;
        c.encoder.tap_layer = Some(3);
        assert!(c.validate().is_err());
    }

    #[test]
    fn set_method_adjusts_teacher_source() {
        let mut c = RunConfig::default();
        c.set_method(Method::GuideCtc);
        assert_eq!(c.distill.teacher_source, TeacherSource::ExternalCheckpoint);
        c.set_method(Method::LayerPrune);
        assert_eq!(c.distill.teacher_source, TeacherSource::SharedSubmodel);
        c.validate().unwrap();
    }
}
