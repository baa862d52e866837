//! The `jumps` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{build_dataset, Dataset, DatasetSpec};
use crate::error::{Error, Result};
use crate::infer::{upsample, InferConfig, Model};
use crate::io::write_atomic;
use crate::metrics::{eval_hpe, eval_upsampling, EvalOptions, Report};
use crate::plot::{pckh_svg, skeleton_svg};
use crate::sequence::PoseFile;
use crate::topology::SkeletonTopology;
use crate::train::{fit, FitOptions, TrainConfig};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "jumps", version, about = "Joint upsampling and inpainting of 2D pose sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Seed for every random choice of the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a synthetic 2D pose dataset from generated motion.
    SynthData {
        /// Dataset specification (TOML); defaults are used when absent.
        #[arg(long, alias = "spec")]
        config: Option<PathBuf>,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// Number of generated sequences.
        #[arg(long)]
        sequences: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Train encoder, generator and critic.
    Train {
        /// Training configuration (TOML); the desk preset when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for metrics, config echo and the model.
        #[arg(long)]
        out: PathBuf,
        /// Dataset directory, overriding the configuration.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Cap on the number of training steps.
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        epochs: Option<u64>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Continue from the state saved under `--out`.
        #[arg(long)]
        resume: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Upsample or inpaint a pose file with a trained model.
    Infer {
        /// Model directory written by `train`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        infer: InferFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Score joint upsampling on a dataset of full-topology poses.
    EvalUpsampling {
        #[arg(long)]
        model: PathBuf,
        /// Dataset directory of ground-truth sequences.
        #[arg(long)]
        data: PathBuf,
        /// Output directory for `report.json` and `errors.csv`.
        #[arg(long)]
        out: PathBuf,
        /// Reduced topology: a built-in name or a topology file.
        #[arg(long, default_value = "coarse_12")]
        reduced: String,
        /// Evaluate only the first N sequences.
        #[arg(long)]
        limit: Option<usize>,
        /// Multiplier of the head segment used as the PCKh unit.
        #[arg(long, default_value_t = 1.0)]
        head_factor: f64,
        #[command(flatten)]
        infer: InferFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Post-process external reduced-topology estimates and score them.
    EvalHpe {
        #[arg(long)]
        model: PathBuf,
        /// Estimates, one pose record per line.
        #[arg(long)]
        pred: PathBuf,
        /// Ground truth, one pose record per line, paired by position.
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        head_factor: f64,
        #[command(flatten)]
        infer: InferFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Render PCKh curves of a report and skeleton overlays of pose files.
    Plot {
        /// Report written by an evaluation command.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Pose files to overlay; they must share a topology.
        #[arg(long = "poses", num_args = 1..)]
        poses: Vec<PathBuf>,
        /// Frames to draw.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        frames: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct InferFlags {
    /// Inference settings to start from: `desk` or `published`.
    #[arg(long, default_value = "desk")]
    preset: String,
    /// Process windows back to back instead of half-overlapping.
    #[arg(long)]
    no_overlap: bool,
    /// Skip the per-step similarity alignment.
    #[arg(long)]
    no_procrustes: bool,
    /// Draw every start from the prior instead of starting at `E(x)`.
    #[arg(long)]
    no_encoder_init: bool,
    #[arg(long)]
    starts: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
}

impl InferFlags {
    fn config(&self, seed: Option<u64>) -> Result<InferConfig> {
        let d = match self.preset.as_str() {
            "desk" => InferConfig::desk(),
            "published" => InferConfig::default(),
            other => return Err(Error::Config(format!("unknown inference preset {other:?}"))),
        };
        Ok(InferConfig {
            overlap: !self.no_overlap,
            procrustes: !self.no_procrustes,
            encoder_init: !self.no_encoder_init,
            starts: self.starts.unwrap_or(d.starts),
            iterations: self.iters.unwrap_or(d.iterations),
            seed: seed.unwrap_or(d.seed),
            ..d
        })
    }
}

fn topology_arg(spec: &str) -> Result<SkeletonTopology> {
    match SkeletonTopology::builtin(spec) {
        Some(t) => Ok(t),
        None => SkeletonTopology::load(Path::new(spec)),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::SynthData {
            config,
            out,
            sequences,
            common,
        } => {
            let mut spec = match config {
                Some(path) => DatasetSpec::load(&path)?,
                None => DatasetSpec::default(),
            };
            if let Some(n) = sequences {
                spec.synthetic_sequences = n;
            }
            if let Some(s) = common.seed {
                spec.random_seed = s;
            }
            spec.validate()?;
            let data = build_dataset(&spec, common.workers)?;
            let manifest = data.write(&out, &spec)?;
            log::info!("wrote {} sequences to {}", manifest.sequence_count, out.display());
        }
        Command::Train {
            config,
            out,
            dataset,
            steps,
            epochs,
            batch_size,
            resume,
            common,
        } => {
            let mut cfg = match config {
                Some(path) => TrainConfig::load(&path)?,
                None => TrainConfig::desk(),
            };
            if let Some(d) = dataset {
                cfg.dataset = d;
            }
            if cfg.dataset.as_os_str().is_empty() {
                return Err(Error::Config("no dataset given (use --dataset or the config file)".into()));
            }
            if steps.is_some() {
                cfg.max_steps = steps;
            }
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            if let Some(b) = batch_size {
                cfg.batch_size = b;
            }
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            let report = crate::rng::with_workers(common.workers, || {
                fit(&cfg, &out, &FitOptions { resume, stop_after: None })
            })?;
            log::info!("trained {} steps, model in {}", report.steps, report.model_dir.display());
        }
        Command::Infer {
            model,
            input,
            out,
            infer,
            common,
        } => {
            let file = PoseFile::read(&input)?;
            let model = Model::load(&model)?;
            let cfg = infer.config(common.seed)?;
            let result = upsample(&model, &file.sequence, &file.topology, &cfg, common.workers)?;
            if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                ensure_dir(dir)?;
            }
            PoseFile::new(model.topology.clone(), result.output)?.write(&out)?;
            log::info!("masked MPJPE against the input: {:.5}", result.masked_mpjpe);
        }
        Command::EvalUpsampling {
            model,
            data,
            out,
            reduced,
            limit,
            head_factor,
            infer,
            common,
        } => {
            let model = Model::load(&model)?;
            let (dataset, _) = Dataset::load(&data)?;
            if dataset.topology != model.topology {
                return Err(Error::Config("dataset and model topologies differ".into()));
            }
            let mut seqs = dataset.sequences;
            if let Some(n) = limit {
                seqs.truncate(n);
            }
            let opts = EvalOptions {
                infer: infer.config(common.seed)?,
                head_factor,
                workers: common.workers,
            };
            let (report, errors) = eval_upsampling(&seqs, &model, &topology_arg(&reduced)?, &opts)?;
            report.write(&out, &errors)?;
        }
        Command::EvalHpe {
            model,
            pred,
            gt,
            out,
            head_factor,
            infer,
            common,
        } => {
            let model = Model::load(&model)?;
            let preds = PoseFile::read_all(&pred)?;
            let gts = PoseFile::read_all(&gt)?;
            let reduced = preds[0].topology.clone();
            if preds.iter().any(|p| p.topology != reduced) {
                return Err(Error::format(&pred, "estimates use more than one topology"));
            }
            if gts.iter().any(|g| g.topology != model.topology) {
                return Err(Error::format(&gt, "ground truth is not on the model topology"));
            }
            let opts = EvalOptions {
                infer: infer.config(common.seed)?,
                head_factor,
                workers: common.workers,
            };
            let p: Vec<_> = preds.into_iter().map(|f| f.sequence).collect();
            let g: Vec<_> = gts.into_iter().map(|f| f.sequence).collect();
            let (report, errors) = eval_hpe(&p, &g, &model, &reduced, &opts)?;
            report.write(&out, &errors)?;
        }
        Command::Plot {
            report,
            poses,
            frames,
            out,
            common: _,
        } => {
            if report.is_none() && poses.is_empty() {
                return Err(Error::Config("nothing to plot: give --report and/or --poses".into()));
            }
            ensure_dir(&out)?;
            if let Some(path) = report {
                let r = Report::read(&path)?;
                let svg = pckh_svg(&r).map_err(|e| Error::format(&path, e))?;
                write_atomic(&out.join("pckh.svg"), svg.as_bytes())?;
            }
            if !poses.is_empty() {
                let files = poses.iter().map(|p| PoseFile::read(p)).collect::<Result<Vec<_>>>()?;
                let topo = &files[0].topology;
                if files.iter().any(|f| &f.topology != topo) {
                    return Err(Error::Config("pose files use different topologies".into()));
                }
                let names: Vec<String> = poses
                    .iter()
                    .map(|p| p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned()))
                    .collect();
                let layers: Vec<(&str, &_)> = names.iter().map(String::as_str).zip(files.iter().map(|f| &f.sequence)).collect();
                let svg = skeleton_svg(topo, &layers, &frames)?;
                write_atomic(&out.join("skeleton.svg"), svg.as_bytes())?;
            }
        }
    }
    Ok(())
}

/// Exit code for a failed command.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_data_error() {
        EXIT_DATA
    } else {
        EXIT_NUMERIC
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn help_and_usage_codes() {
        assert_eq!(run(["jumps", "--help"]), 0);
        assert_eq!(run(["jumps", "train", "--help"]), 0);
        assert_eq!(run(["jumps", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["jumps", "infer", "--bogus"]), EXIT_USAGE);
    }

    #[test]
    fn missing_input_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("missing.json");
        let code = run([
            "jumps",
            "infer",
            "--model",
            dir.path().to_str().unwrap(),
            "--in",
            missing.to_str().unwrap(),
            "--out",
            dir.path().join("o.json").to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_DATA);
    }

    #[test]
    fn numeric_failures_map_to_three() {
        assert_eq!(exit_code(&Error::NonFinite("x".into())), EXIT_NUMERIC);
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_DATA);
    }
}
