use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use jumps_autograd::Tensor;
use rand::seq::SliceRandom;

use super::adam::AdamState;
use super::config::TrainConfig;
use super::step::{pose_mpjpe, reconstruct, StepMetrics, TrainState, Trainer};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::grid::{pose_batch, GridCodec};
use crate::io::write_atomic;
use crate::net::checkpoint::{decode_archive, encode_archive, split_subnet, Precision};
use crate::net::{save_checkpoint, Architecture, ParameterSet, Subnet};
use crate::rng::stream;
use crate::sequence::PoseSequence;
use crate::topology::SkeletonTopology;

pub const METRICS_HEADER: &str = "step,epoch,L_D,L_G,L_Rec,L_Rec_backward,L_Mix,heldout_mpjpe";
const STATE_FILE: &str = "train_state.bin";

/// Serializes a training state at full precision.
pub fn encode_state(state: &TrainState) -> Vec<u8> {
    let mut entries: Vec<(String, Tensor)> = vec![
        ("step".into(), Tensor::scalar(state.step as f64)),
        ("epoch".into(), Tensor::scalar(state.epoch as f64)),
    ];
    for (k, s) in Subnet::ALL.into_iter().enumerate() {
        let sp = state.params.subnet(s);
        let adam = &state.adam[k];
        let prefix = s.name();
        for (name, t) in sp.params.iter().chain(sp.buffers.iter()) {
            entries.push((format!("{prefix}/{name}"), t.clone()));
        }
        entries.push((format!("{prefix}/adam.t"), Tensor::scalar(adam.t as f64)));
        for (i, (m, v)) in adam.m.iter().zip(&adam.v).enumerate() {
            entries.push((format!("{prefix}/adam.m{i}"), m.clone()));
            entries.push((format!("{prefix}/adam.v{i}"), v.clone()));
        }
    }
    encode_archive(entries.iter().map(|(n, t)| (n.as_str(), t)), Precision::F64)
}

pub fn decode_state(arch: &Architecture, bytes: &[u8], origin: &Path) -> Result<TrainState> {
    let entries = decode_archive(bytes, origin)?;
    let mut by_prefix: BTreeMap<String, Vec<(String, Tensor)>> = BTreeMap::new();
    let mut scalars = BTreeMap::new();
    for (name, t) in entries {
        match name.split_once('/') {
            Some((p, rest)) => by_prefix.entry(p.to_string()).or_default().push((rest.to_string(), t)),
            None => {
                scalars.insert(name, t.item() as u64);
            }
        }
    }
    let bad = |m: &str| Error::format(origin, m);
    let mut subnets = Vec::new();
    let mut adam = Vec::new();
    for s in Subnet::ALL {
        let mut list = by_prefix.remove(s.name()).ok_or_else(|| bad("missing subnet"))?;
        let split = list.iter().position(|(n, _)| n == "adam.t").ok_or_else(|| bad("missing optimizer state"))?;
        let moments = list.split_off(split);
        subnets.push(split_subnet(arch, s, list));
        let t = moments[0].1.item() as u64;
        let (mut m, mut v) = (Vec::new(), Vec::new());
        for pair in moments[1..].chunks(2) {
            match pair {
                [(_, a), (_, b)] => {
                    m.push(a.clone());
                    v.push(b.clone());
                }
                _ => return Err(bad("unpaired optimizer moments")),
            }
        }
        adam.push(AdamState { t, m, v });
    }
    let mut it = subnets.into_iter();
    let params = ParameterSet {
        encoder: it.next().expect("three subnets"),
        generator: it.next().expect("three subnets"),
        critic: it.next().expect("three subnets"),
    };
    arch.check(&params).map_err(|e| Error::format(origin, e))?;
    let adam: [AdamState; 3] = adam.try_into().expect("three subnets");
    for (k, s) in Subnet::ALL.into_iter().enumerate() {
        let shapes: Vec<&[usize]> = params.subnet(s).params.tensors.iter().map(Tensor::shape).collect();
        let ms: Vec<&[usize]> = adam[k].m.iter().map(Tensor::shape).collect();
        if shapes != ms {
            return Err(bad("optimizer moments do not match parameters"));
        }
    }
    Ok(TrainState {
        step: *scalars.get("step").ok_or_else(|| bad("missing step"))?,
        epoch: *scalars.get("epoch").ok_or_else(|| bad("missing epoch"))?,
        params,
        adam,
        last: None,
    })
}

#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    /// Continue from `<out>/model/train_state.bin` when present.
    pub resume: bool,
    /// Stop after this many steps in this call (the run can be resumed).
    pub stop_after: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub model_dir: PathBuf,
    pub steps: u64,
    pub last: Option<StepMetrics>,
    pub heldout_mpjpe: Option<f64>,
}

/// Dataset split into training and held-out sequences.
pub struct Split {
    pub topology: SkeletonTopology,
    pub train: Vec<PoseSequence>,
    pub heldout: Vec<PoseSequence>,
}

pub fn split_dataset(data: Dataset, heldout: usize) -> Result<Split> {
    let mut train = data.sequences;
    if train.iter().any(|s| !s.is_full()) {
        return Err(Error::Config("training sequences must have full masks".into()));
    }
    let keep = train.len().saturating_sub(heldout);
    if keep < 2 {
        return Err(Error::Config(format!(
            "dataset has {} sequences, {heldout} held out leaves fewer than 2 for training",
            train.len()
        )));
    }
    let heldout = train.split_off(keep);
    Ok(Split {
        topology: data.topology,
        train,
        heldout,
    })
}

/// Batch layout: fixed batch size and the number of full batches per epoch.
pub fn schedule(config: &TrainConfig, n_train: usize) -> (usize, u64) {
    let b = config.batch_size.min(n_train);
    (b, (n_train / b) as u64)
}

/// Sequence indices of the batch used at `step`.
pub fn batch_indices(config: &TrainConfig, n_train: usize, step: u64) -> Vec<usize> {
    let (b, per_epoch) = schedule(config, n_train);
    let epoch = step / per_epoch;
    let k = (step % per_epoch) as usize;
    let mut order: Vec<usize> = (0..n_train).collect();
    order.shuffle(&mut stream(config.seed, &[2, epoch]));
    order[k * b..(k + 1) * b].to_vec()
}

fn heldout_error(trainer: &Trainer, params: &ParameterSet, heldout: &[PoseSequence]) -> Result<Option<f64>> {
    if heldout.is_empty() {
        return Ok(None);
    }
    let x = pose_batch(&heldout.iter().collect::<Vec<_>>());
    let y = reconstruct(&trainer.arch, &trainer.codec, params, &x)?;
    Ok(Some(pose_mpjpe(&x, &y)))
}

fn csv_row(step: u64, epoch: u64, m: &StepMetrics, heldout: Option<f64>) -> String {
    let mut s = format!(
        "{step},{epoch},{},{},{},{},{},",
        m.l_d, m.l_g, m.l_rec, m.l_rec_backward, m.l_mix
    );
    if let Some(h) = heldout {
        write!(s, "{h}").expect("write to string");
    }
    s.push('\n');
    s
}

/// Keeps the header and rows up to `step`, so a resumed run appends
/// exactly where the restored state left off.
fn prepare_metrics(path: &Path, resume_step: Option<u64>) -> Result<()> {
    let mut text = format!("{METRICS_HEADER}\n");
    if let (Some(step), Ok(old)) = (resume_step, std::fs::read_to_string(path)) {
        for line in old.lines().skip(1) {
            let row_step: Option<u64> = line.split(',').next().and_then(|v| v.parse().ok());
            if row_step.is_some_and(|s| s <= step) {
                text.push_str(line);
                text.push('\n');
            }
        }
    }
    write_atomic(path, text.as_bytes())
}

fn save(
    trainer: &Trainer,
    topology: &SkeletonTopology,
    state: &TrainState,
    dir: &Path,
    heldout: Option<f64>,
) -> Result<()> {
    let mut metrics = BTreeMap::new();
    if let Some(m) = state.last {
        metrics.insert("L_D".into(), m.l_d);
        metrics.insert("L_G".into(), m.l_g);
        metrics.insert("L_Rec".into(), m.l_rec);
        metrics.insert("L_Rec_backward".into(), m.l_rec_backward);
        metrics.insert("L_Mix".into(), m.l_mix);
        metrics.insert("wasserstein".into(), m.wasserstein);
    }
    if let Some(h) = heldout {
        metrics.insert("heldout_mpjpe".into(), h);
    }
    write_atomic(&dir.join(STATE_FILE), &encode_state(state))?;
    save_checkpoint(dir, topology, &trainer.arch, &state.params, state.step, state.epoch, metrics)?;
    Ok(())
}

/// Trains on the configured dataset, writing `<out>/metrics.csv`,
/// `<out>/config.toml` and the checkpoint directory `<out>/model`.
pub fn fit(config: &TrainConfig, out: &Path, options: &FitOptions) -> Result<FitReport> {
    config.validate()?;
    let (data, _) = Dataset::load(&config.dataset)?;
    let split = split_dataset(data, config.heldout)?;
    fit_split(config, split, out, options)
}

pub fn fit_split(config: &TrainConfig, split: Split, out: &Path, options: &FitOptions) -> Result<FitReport> {
    let arch = Architecture::new(config.network.resolve()?)?;
    let codec = GridCodec::new(&split.topology, split.train[0].frames())?;
    let trainer = Trainer::new(arch, codec, config.clone())?;
    let model_dir = out.join("model");
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let state_path = model_dir.join(STATE_FILE);
    let mut state = if options.resume && state_path.exists() {
        let bytes = std::fs::read(&state_path).map_err(|e| Error::io(&state_path, e))?;
        decode_state(&trainer.arch, &bytes, &state_path)?
    } else {
        trainer.init_state()
    };
    let metrics_path = out.join("metrics.csv");
    prepare_metrics(&metrics_path, options.resume.then_some(state.step))?;
    write_atomic(&out.join("config.toml"), config.to_toml().as_bytes())?;

    let n_train = split.train.len();
    let (_, per_epoch) = schedule(config, n_train);
    let mut total = config.epochs * per_epoch;
    if let Some(cap) = config.max_steps {
        total = total.min(cap);
    }
    let stop = options.stop_after.map_or(total, |n| total.min(state.step + n));

    let mut log = std::fs::OpenOptions::new()
        .append(true)
        .open(&metrics_path)
        .map_err(|e| Error::io(&metrics_path, e))?;
    let mut heldout = None;
    while state.step < stop {
        let epoch = state.step / per_epoch;
        state.epoch = epoch;
        let idx = batch_indices(config, n_train, state.step);
        let batch = pose_batch(&idx.iter().map(|&i| &split.train[i]).collect::<Vec<_>>());
        let m = match trainer.step(&mut state, &batch) {
            Ok(m) => m,
            Err(e @ Error::NonFinite(_)) => {
                let diag = serde_json::json!({
                    "step": state.step,
                    "epoch": epoch,
                    "error": e.to_string(),
                    "previous": state.last.map(|m| [m.l_d, m.l_g, m.l_rec, m.l_rec_backward, m.l_mix]),
                });
                write_atomic(&out.join("diagnostic.json"), diag.to_string().as_bytes())?;
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        let done = state.step == total;
        let eval_now = done || (config.eval_every > 0 && state.step % config.eval_every == 0);
        heldout = if eval_now {
            heldout_error(&trainer, &state.params, &split.heldout)?
        } else {
            None
        };
        log.write_all(csv_row(state.step, epoch, &m, heldout).as_bytes())
            .map_err(|e| Error::io(&metrics_path, e))?;
        let pause = state.step == stop;
        if done || pause || (config.checkpoint_every > 0 && state.step % config.checkpoint_every == 0) {
            log.flush().map_err(|e| Error::io(&metrics_path, e))?;
            save(&trainer, &split.topology, &state, &model_dir, heldout)?;
        }
        if state.step % 50 == 0 || done {
            log::info!(
                "step {}/{total} L_D {:.4} L_G {:.4} L_Rec {:.4} L_back {:.4}",
                state.step,
                m.l_d,
                m.l_g,
                m.l_rec,
                m.l_rec_backward
            );
        }
    }
    if !model_dir.join("manifest.json").exists() {
        save(&trainer, &split.topology, &state, &model_dir, heldout)?;
    }
    Ok(FitReport {
        model_dir,
        steps: state.step,
        last: state.last,
        heldout_mpjpe: heldout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_dataset, DatasetSpec};
    use crate::net::NetworkConfig;
    use crate::train::{AdamConfig, NetworkChoice, Optimizers};

    fn tiny_split() -> Split {
        let spec = DatasetSpec {
            chunk_length: 8,
            stride: 8,
            synthetic_sequences: 3,
            ..DatasetSpec::default()
        };
        split_dataset(build_dataset(&spec, Some(1)).unwrap(), 2).unwrap()
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            batch_size: 3,
            heldout: 2,
            epochs: 2,
            eval_every: 2,
            checkpoint_every: 3,
            network: NetworkChoice::Custom(NetworkConfig::for_grid(18, 8, 2, 4)),
            ..TrainConfig::default()
        }
    }

    fn trainer(cfg: &TrainConfig, split: &Split) -> Trainer {
        let arch = Architecture::new(cfg.network.resolve().unwrap()).unwrap();
        Trainer::new(arch, GridCodec::new(&split.topology, 8).unwrap(), cfg.clone()).unwrap()
    }

    fn batch(split: &Split, cfg: &TrainConfig, step: u64) -> Tensor {
        let idx = batch_indices(cfg, split.train.len(), step);
        pose_batch(&idx.iter().map(|&i| &split.train[i]).collect::<Vec<_>>())
    }

    #[test]
    fn steps_are_deterministic() {
        let (split, cfg) = (tiny_split(), tiny_config());
        let t = trainer(&cfg, &split);
        let (mut a, mut b) = (t.init_state(), t.init_state());
        for step in 0..2 {
            t.step(&mut a, &batch(&split, &cfg, step)).unwrap();
            t.step(&mut b, &batch(&split, &cfg, step)).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn zero_learning_rates_keep_parameters() {
        let split = tiny_split();
        let frozen = AdamConfig { lr: 0.0, ..AdamConfig::default() };
        let cfg = TrainConfig {
            optimizer: Optimizers { encoder: frozen, generator: frozen, critic: frozen },
            ..tiny_config()
        };
        let t = trainer(&cfg, &split);
        let mut s = t.init_state();
        let before = s.params.clone();
        t.step(&mut s, &batch(&split, &cfg, 0)).unwrap();
        for sub in Subnet::ALL {
            assert_eq!(before.subnet(sub).params, s.params.subnet(sub).params);
        }
    }

    #[test]
    fn updates_touch_only_their_subnets() {
        let split = tiny_split();
        let frozen = AdamConfig { lr: 0.0, ..AdamConfig::default() };
        let live = AdamConfig::default();
        let t = trainer(
            &TrainConfig {
                optimizer: Optimizers { encoder: frozen, generator: frozen, critic: live },
                ..tiny_config()
            },
            &split,
        );
        let mut s = t.init_state();
        let before = s.params.clone();
        t.step(&mut s, &batch(&split, &t.config, 0)).unwrap();
        assert_ne!(before.critic.params, s.params.critic.params);
        assert_eq!(before.encoder.params, s.params.encoder.params);
        assert_eq!(before.generator.params, s.params.generator.params);

        let t = trainer(
            &TrainConfig {
                optimizer: Optimizers { encoder: live, generator: live, critic: frozen },
                ..tiny_config()
            },
            &split,
        );
        let mut s = t.init_state();
        let before = s.params.clone();
        t.step(&mut s, &batch(&split, &t.config, 0)).unwrap();
        assert_eq!(before.critic.params, s.params.critic.params);
        assert_ne!(before.encoder.params, s.params.encoder.params);
        assert_ne!(before.generator.params, s.params.generator.params);
    }

    #[test]
    fn state_archive_round_trips() {
        let (split, cfg) = (tiny_split(), tiny_config());
        let t = trainer(&cfg, &split);
        let mut s = t.init_state();
        t.step(&mut s, &batch(&split, &cfg, 0)).unwrap();
        let mut back = decode_state(&t.arch, &encode_state(&s), Path::new("state")).unwrap();
        back.last = s.last;
        assert_eq!(back, s);
        assert!(decode_state(&t.arch, &encode_state(&s)[..40], Path::new("state")).is_err());
    }

    #[test]
    fn resumed_run_matches_uninterrupted_run() {
        let cfg = tiny_config();
        let full = tempfile::tempdir().unwrap();
        let split_run = tempfile::tempdir().unwrap();
        let a = fit_split(&cfg, tiny_split(), full.path(), &FitOptions::default()).unwrap();
        let first = FitOptions { resume: false, stop_after: Some(3) };
        fit_split(&cfg, tiny_split(), split_run.path(), &first).unwrap();
        let rest = FitOptions { resume: true, stop_after: None };
        let b = fit_split(&cfg, tiny_split(), split_run.path(), &rest).unwrap();
        assert_eq!(a.steps, 2 * 2);
        assert_eq!(a.steps, b.steps);
        for f in ["metrics.csv", "model/train_state.bin", "model/generator.params", "model/manifest.json"] {
            let x = std::fs::read(full.path().join(f)).unwrap();
            let y = std::fs::read(split_run.path().join(f)).unwrap();
            assert!(x == y, "{f} differs after resume");
        }
        let csv = std::fs::read_to_string(full.path().join("metrics.csv")).unwrap();
        assert!(csv.starts_with(METRICS_HEADER));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn schedule_uses_whole_batches() {
        let cfg = TrainConfig { batch_size: 4, ..tiny_config() };
        assert_eq!(schedule(&cfg, 10), (4, 2));
        assert_eq!(schedule(&cfg, 3), (3, 1));
        let idx = batch_indices(&cfg, 10, 1);
        assert_eq!(idx.len(), 4);
        let mut epoch: Vec<usize> = (0..2).flat_map(|s| batch_indices(&cfg, 10, s)).collect();
        epoch.sort_unstable();
        epoch.dedup();
        assert_eq!(epoch.len(), 8);
    }

    #[test]
    fn too_small_datasets_are_rejected() {
        let spec = DatasetSpec { chunk_length: 8, stride: 8, synthetic_sequences: 1, ..DatasetSpec::default() };
        let data = build_dataset(&spec, Some(1)).unwrap();
        assert!(split_dataset(data, 2).is_err());
    }
}
