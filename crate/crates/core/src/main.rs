use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ctclab::data::{load_dataset, Split};
use ctclab::distill::Method;
use ctclab::harness::{cmd_analyze, cmd_compare, cmd_evaluate, cmd_gen_data, cmd_train, RunConfig, TrainOptions};
use ctclab::model::EncoderModel;
use ctclab::Result;

#[derive(Parser)]
#[command(name = "ctclab", version, about = "CTC training and self-distillation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Dev,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Dev => Split::Dev,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// JSON run config; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model init and shuffle seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Teacher for frame_kd, softmax_kd and guide_ctc.
    #[arg(long)]
    teacher_checkpoint: Option<PathBuf>,
    /// none, frame_kd, softmax_kd, guide_ctc, skd or layer_prune.
    #[arg(long)]
    method: Option<Method>,
    /// Skip frames where the teacher predicts blank.
    #[arg(long, value_enum)]
    mask: Option<Toggle>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(t) = &self.teacher_checkpoint {
            cfg.teacher_checkpoint = Some(t.clone());
        }
        if let Some(m) = self.method {
            cfg.set_method(m);
        }
        if let Some(m) = self.mask {
            cfg.distill.masking = matches!(m, Toggle::On);
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes config.json, metrics.jsonl, checkpoints and final.json.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Print the resolved config and exit.
        #[arg(long)]
        print_config: bool,
        /// Continue an interrupted run in the output directory.
        #[arg(long)]
        resume: bool,
        /// Stop after this many epochs.
        #[arg(long)]
        stop_after: Option<usize>,
        /// No per-epoch progress on stderr.
        #[arg(long)]
        quiet: bool,
    },
    /// Greedy-decode a dataset with a checkpoint and report CER/WER.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Directory written by gen-data for a single split.
        #[arg(long)]
        data: PathBuf,
        /// Run config whose encoder the checkpoint must match.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        teacher_checkpoint: Option<PathBuf>,
        /// Headline numbers from the intermediate head.
        #[arg(long)]
        student_path: bool,
    },
    /// Compare completed runs side by side.
    Compare {
        #[arg(required = true, num_args = 2..)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Write train/dev/test datasets described by a run config.
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Recompute agreement for a run and dump grids and spike tables.
    Analyze {
        run: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            cfg,
            print_config,
            resume,
            stop_after,
            quiet,
        } => {
            let cfg = cfg.resolve()?;
            if print_config {
                println!("{}", cfg.to_json());
                return Ok(());
            }
            let outcome = cmd_train(&cfg, &TrainOptions { resume, stop_after, quiet })?;
            if let Some(f) = outcome.final_report {
                println!("{}", serde_json::to_string_pretty(&f)?);
            }
        }
        Command::Eval {
            checkpoint,
            data,
            config,
            teacher_checkpoint,
            student_path,
        } => {
            let expected = config.map(|p| RunConfig::load(&p)).transpose()?.map(|c| c.model_config());
            let teacher = teacher_checkpoint.map(|p| EncoderModel::load(&p)).transpose()?;
            let ds = load_dataset(&data)?;
            let r = cmd_evaluate(&checkpoint, &ds, expected.as_ref(), teacher.as_ref(), student_path)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
        Command::Compare { runs, json } => {
            let c = cmd_compare(&runs)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&c)?);
            } else {
                print!("{}", c.to_text());
            }
        }
        Command::GenData { cfg } => {
            let cfg = cfg.resolve()?;
            cmd_gen_data(&cfg.data, &cfg.out_dir)?;
        }
        Command::Analyze { run, split, out } => {
            let out = out.unwrap_or_else(|| run.join("analysis"));
            let r = cmd_analyze(&run, split.into(), &out)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
