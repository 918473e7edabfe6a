use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::eval::{evaluate, EvalReport};
use super::par_map;
use crate::ctc::{PosteriorGrid, Vocab};
use crate::data::{Dataset, Split, Utterance};
use crate::distill::{objective, schedule_alpha, DistillSpec, HeadOutputs, ObjectiveTerms};
use crate::error::{Error, Result};
use crate::model::EncoderModel;
use crate::nn::checkpoint::{sha256_hex, Container};
use crate::nn::{optim_step, Gradients, OptimConfig, OptimState, Tensor2D};

pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const MODEL_FILE: &str = "model.ckpt";
pub const STUDENT_FILE: &str = "student.ckpt";
pub const STATE_FILE: &str = "state.bin";
pub const FINAL_FILE: &str = "final.json";

/// Frame-normalized training losses for one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLosses {
    pub ctc: f64,
    pub ictc: Option<f64>,
    pub kd: Option<f64>,
    pub total: f64,
    pub frames: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub epoch: usize,
    pub alpha: f64,
    pub lr: f64,
    pub steps: u64,
    pub train: TrainLosses,
    pub dev: Option<EvalReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalReport {
    pub method: String,
    pub masking: bool,
    pub epochs: usize,
    pub steps: u64,
    /// SHA-256 of `model.ckpt`.
    pub checkpoint_digest: String,
    pub config_digest: String,
    pub num_parameters: usize,
    pub test: EvalReport,
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Continue from `state.bin` in the run directory if present.
    pub resume: bool,
    /// Stop after this epoch without writing `final.json`.
    pub stop_after: Option<usize>,
    pub quiet: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub run_dir: PathBuf,
    pub records: Vec<RunRecord>,
    pub final_report: Option<FinalReport>,
}

#[derive(Serialize, Deserialize)]
struct ResumeState {
    epochs_done: usize,
    step: u64,
    total_steps: u64,
    param_steps: Vec<u64>,
    optim: OptimConfig,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn save_state(path: &Path, state: &OptimState, epochs_done: usize, model: &EncoderModel) -> Result<()> {
    let meta = ResumeState {
        epochs_done,
        step: state.step,
        total_steps: state.total_steps,
        param_steps: state.param_steps.clone(),
        optim: state.config.clone(),
    };
    let names = model.params().names();
    let mut tensors = Vec::with_capacity(2 * names.len());
    for (n, m) in names.iter().zip(&state.first_moment) {
        tensors.push((format!("m.{n}"), m.clone()));
    }
    for (n, v) in names.iter().zip(&state.second_moment) {
        tensors.push((format!("v.{n}"), v.clone()));
    }
    let c = Container::new(serde_json::to_string(&meta)?, tensors);
    write_atomic(path, &c.to_bytes())
}

fn load_state(path: &Path, model: &EncoderModel) -> Result<(OptimState, usize)> {
    let c = Container::load(path)?;
    let meta: ResumeState = serde_json::from_str(&c.config_json)?;
    let n = model.params().len();
    if c.tensors.len() != 2 * n || meta.param_steps.len() != n {
        return Err(Error::Checkpoint("optimizer state does not fit the model".into()));
    }
    let moments = |range: std::ops::Range<usize>| -> Vec<Tensor2D> { c.tensors[range].iter().map(|(_, t)| t.clone()).collect() };
    let state = OptimState {
        config: meta.optim,
        total_steps: meta.total_steps,
        step: meta.step,
        param_steps: meta.param_steps,
        first_moment: moments(0..n),
        second_moment: moments(n..2 * n),
    };
    Ok((state, meta.epochs_done))
}

fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Loss terms and parameter gradients of one utterance (unnormalized).
pub fn utterance_gradients(
    model: &EncoderModel,
    spec: &DistillSpec,
    alpha: f64,
    vocab: &Vocab,
    u: &Utterance,
    teacher_grid: Option<&PosteriorGrid>,
) -> Result<(ObjectiveTerms, Gradients)> {
    let (out, cache) = model.forward(&u.features)?;
    let heads = HeadOutputs {
        final_grid: &out.final_grid,
        inter_grid: out.inter_grid.as_ref(),
    };
    let (terms, head_grads) = objective(spec, alpha, &u.transcript, vocab, heads, teacher_grid)?;
    let grads = model.backward(&cache, &head_grads, true)?;
    Ok((terms, grads))
}

#[derive(Default)]
struct LossSums {
    ctc: f64,
    ictc: Option<f64>,
    kd: Option<f64>,
    total: f64,
    frames: usize,
}

impl LossSums {
    fn add(&mut self, t: &ObjectiveTerms, frames: usize) {
        self.ctc += t.ctc_final;
        if let Some(v) = t.ctc_inter {
            *self.ictc.get_or_insert(0.0) += v;
        }
        if let Some(v) = t.kd {
            *self.kd.get_or_insert(0.0) += v;
        }
        self.total += t.total;
        self.frames += frames;
    }

    fn finish(&self) -> TrainLosses {
        let n = self.frames.max(1) as f64;
        TrainLosses {
            ctc: self.ctc / n,
            ictc: self.ictc.map(|v| v / n),
            kd: self.kd.map(|v| v / n),
            total: self.total / n,
            frames: self.frames,
        }
    }
}

/// Everything a run needs besides its configuration.
pub struct RunInputs {
    pub train: Dataset,
    pub dev: Dataset,
    pub test: Dataset,
    pub teacher: Option<EncoderModel>,
}

impl RunInputs {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let teacher = if cfg.distill.method.uses_external_teacher() {
            let path = cfg.teacher_checkpoint.as_ref().ok_or_else(|| Error::MissingTeacherCheckpoint {
                method: cfg.distill.method.to_string(),
            })?;
            Some(EncoderModel::load(path)?)
        } else {
            None
        };
        Ok(Self {
            train: cfg.data.load(Split::Train)?,
            dev: cfg.data.load(Split::Dev)?,
            test: cfg.data.load(Split::Test)?,
            teacher,
        })
    }
}

fn check_teacher(cfg: &RunConfig, teacher: &EncoderModel) -> Result<()> {
    let (t, s) = (teacher.config(), &cfg.encoder);
    if t.input_dim != s.input_dim || t.num_classes != s.num_classes {
        return Err(Error::invalid("teacher checkpoint has a different input or class dimension"));
    }
    cfg.distill.validate(t.num_layers)
}

/// Trains according to `cfg`, writing the run directory `cfg.out_dir`.
pub fn cmd_train(cfg: &RunConfig, opts: &TrainOptions) -> Result<TrainOutcome> {
    cfg.validate()?;
    let inputs = RunInputs::load(cfg)?;
    train_with(cfg, &inputs, opts)
}

/// [`cmd_train`] with datasets and teacher already in memory.
pub fn train_with(cfg: &RunConfig, inputs: &RunInputs, opts: &TrainOptions) -> Result<TrainOutcome> {
    cfg.validate()?;
    if inputs.train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(t) = &inputs.teacher {
        check_teacher(cfg, t)?;
    }
    let dir = cfg.out_dir.clone();
    fs::create_dir_all(&dir)?;
    let config_json = cfg.to_json();
    let model_cfg = cfg.model_config();
    let steps_per_epoch = inputs.train.len().div_ceil(cfg.batch_size) as u64;
    let total_steps = steps_per_epoch * cfg.epochs as u64;
    let freeze_steps = (cfg.freeze_fraction * total_steps as f64).floor() as u64;

    let state_path = dir.join(STATE_FILE);
    let metrics_path = dir.join(METRICS_FILE);
    let (mut model, mut state, mut records) = if opts.resume && state_path.exists() {
        let prior = fs::read_to_string(dir.join(CONFIG_FILE))?;
        if prior != config_json {
            return Err(Error::invalid("run directory was created with a different config"));
        }
        let model = EncoderModel::from_container_expecting(&Container::load(&dir.join(MODEL_FILE))?, &model_cfg)?;
        let (state, done) = load_state(&state_path, &model)?;
        let records: Vec<RunRecord> = fs::read_to_string(&metrics_path)?
            .lines()
            .take(done)
            .map(serde_json::from_str)
            .collect::<std::result::Result<_, _>>()?;
        if records.len() != done {
            return Err(Error::IncompleteRun(dir.clone()));
        }
        (model, state, records)
    } else {
        let model = EncoderModel::new(model_cfg.clone())?;
        let state = OptimState::new(cfg.optim.clone(), model.params(), total_steps);
        (model, state, Vec::new())
    };
    write_atomic(&dir.join(CONFIG_FILE), config_json.as_bytes())?;
    let _ = fs::remove_file(dir.join(FINAL_FILE));
    let mut log = fs::File::create(&metrics_path)?;
    for r in &records {
        writeln!(log, "{}", serde_json::to_string(r)?)?;
    }
    log.flush()?;

    let teacher_grids: Option<Vec<PosteriorGrid>> = inputs
        .teacher
        .as_ref()
        .map(|t| {
            par_map(&inputs.train.utterances, |u| t.infer(&u.features).map(|o| o.final_grid))
                .into_iter()
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;
    let vocab = &inputs.train.vocab;
    let all_trainable = vec![true; model.params().len()];
    let heads_only = model.head_mask();

    for epoch in records.len() + 1..=cfg.epochs {
        let alpha = schedule_alpha(epoch, cfg.epochs, &cfg.distill)?;
        let order = epoch_order(inputs.train.len(), cfg.seed, epoch);
        let mut sums = LossSums::default();
        for chunk in order.chunks(cfg.batch_size) {
            let results = par_map(chunk, |&i| {
                let u = &inputs.train.utterances[i];
                let tg = teacher_grids.as_ref().map(|g| &g[i]);
                utterance_gradients(&model, &cfg.distill, alpha, vocab, u, tg).map_err(|e| e.in_utterance(&u.id))
            });
            let mut batch_grads: Option<Gradients> = None;
            let mut frames = 0;
            for (r, &i) in results.into_iter().zip(chunk) {
                let (terms, g) = r?;
                let f = inputs.train.utterances[i].frames();
                frames += f;
                sums.add(&terms, f);
                match &mut batch_grads {
                    None => batch_grads = Some(g),
                    Some(acc) => acc.add_assign(&g),
                }
            }
            let mut grads = batch_grads.expect("non-empty chunk");
            grads.scale(1.0 / frames as f64);
            let mask = if state.step < freeze_steps { &heads_only } else { &all_trainable };
            optim_step(model.params_mut(), &grads, &mut state, mask)?;
        }
        let dev = if cfg.dev_eval && !inputs.dev.is_empty() {
            Some(evaluate(&model, inputs.teacher.as_ref(), &inputs.dev)?)
        } else {
            None
        };
        let record = RunRecord {
            epoch,
            alpha,
            lr: state.current_lr(),
            steps: state.step,
            train: sums.finish(),
            dev,
        };
        if !opts.quiet {
            eprintln!("{}", progress_line(&record));
        }
        write_atomic(&dir.join(MODEL_FILE), &model.to_container().to_bytes())?;
        save_state(&state_path, &state, epoch, &model)?;
        writeln!(log, "{}", serde_json::to_string(&record)?)?;
        log.flush()?;
        records.push(record);
        if opts.stop_after == Some(epoch) && epoch < cfg.epochs {
            return Ok(TrainOutcome {
                run_dir: dir,
                records,
                final_report: None,
            });
        }
    }

    if model.inter_head().is_some() {
        model.extract_submodel()?.save(&dir.join(STUDENT_FILE))?;
    }
    let ckpt = fs::read(dir.join(MODEL_FILE))?;
    let report = FinalReport {
        method: cfg.distill.method.to_string(),
        masking: cfg.distill.masking,
        epochs: cfg.epochs,
        steps: state.step,
        checkpoint_digest: sha256_hex(&ckpt),
        config_digest: model_cfg.digest(),
        num_parameters: model.num_parameters(),
        test: evaluate(&model, inputs.teacher.as_ref(), &inputs.test)?,
    };
    write_atomic(&dir.join(FINAL_FILE), serde_json::to_string_pretty(&report)?.as_bytes())?;
    Ok(TrainOutcome {
        run_dir: dir,
        records,
        final_report: Some(report),
    })
}

fn progress_line(r: &RunRecord) -> String {
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    let mut line = format!(
        "epoch {:>3} alpha {:.3} lr {:.2e} ctc {:.4} ictc {} kd {} total {:.4}",
        r.epoch,
        r.alpha,
        r.lr,
        r.train.ctc,
        opt(r.train.ictc),
        opt(r.train.kd),
        r.train.total
    );
    if let Some(d) = &r.dev {
        line.push_str(&format!(" | dev cer final {:.4}", d.final_path.cer));
        if let Some(i) = &d.inter_path {
            line.push_str(&format!(" inter {:.4}", i.cer));
        }
        if let Some(a) = &d.agreement {
            line.push_str(&format!(" agree {:.4}", a.total_acc));
        }
    }
    line
}

pub fn read_records(run_dir: &Path) -> Result<Vec<RunRecord>> {
    fs::read_to_string(run_dir.join(METRICS_FILE))?
        .lines()
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

pub fn read_final(run_dir: &Path) -> Result<FinalReport> {
    let path = run_dir.join(FINAL_FILE);
    if !path.exists() {
        return Err(Error::IncompleteRun(run_dir.to_path_buf()));
    }
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
