use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_to_string, sha256_hex, write_atomic};
use crate::sequence::{normalize, PoseFile, PoseSequence};
use crate::topology::SkeletonTopology;

use super::camera::{project, sample_camera, CameraRanges};
use super::chunk::chunk;
use super::synth::{synth_motion, MotionParams, RIG_TOPOLOGY};
use super::{read_pose3d, Pose3DSequence};

const MAX_CAMERA_ATTEMPTS: u64 = 32;
pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub chunk_length: usize,
    pub stride: usize,
    pub cameras_per_sequence: usize,
    pub random_seed: u64,
    /// Generated source motions, appended after `sources`.
    pub synthetic_sequences: usize,
    /// 3D source files in the bundled 28-joint topology.
    pub sources: Vec<PathBuf>,
    pub shard_size: usize,
    pub motion: MotionParams,
    pub camera: CameraRanges,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            chunk_length: 24,
            stride: 24,
            cameras_per_sequence: 1,
            random_seed: 0,
            synthetic_sequences: 4096,
            sources: Vec::new(),
            shard_size: 1024,
            motion: MotionParams::default(),
            camera: CameraRanges::default(),
        }
    }
}

impl DatasetSpec {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::format(origin, e))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read_to_string(path)?, path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.chunk_length < 2 {
            return Err(Error::Config("chunk_length must be at least 2".into()));
        }
        if self.stride == 0 || self.stride > self.chunk_length {
            return Err(Error::Config("stride must be in 1..=chunk_length".into()));
        }
        if self.cameras_per_sequence == 0 || self.shard_size == 0 {
            return Err(Error::Config("cameras_per_sequence and shard_size must be positive".into()));
        }
        if self.synthetic_sequences > 0 && self.motion.frames < self.chunk_length {
            return Err(Error::Config("motion.frames is shorter than chunk_length".into()));
        }
        if self.sources.is_empty() && self.synthetic_sequences == 0 {
            return Err(Error::Config("dataset has no sources".into()));
        }
        self.motion.validate()?;
        self.camera.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardInfo {
    pub file: String,
    pub records: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub topology: String,
    pub spec: DatasetSpec,
    pub seed: u64,
    pub source_count: usize,
    pub sequence_count: usize,
    pub shards: Vec<ShardInfo>,
    /// SHA-256 over the shard hashes in order.
    pub content_hash: String,
}

/// Normalized fixed-length 2D sequences in the bundled 28-joint topology.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub topology: SkeletonTopology,
    pub sequences: Vec<PoseSequence>,
}

fn source_views(spec: &DatasetSpec, index: usize, seq3d: &Pose3DSequence) -> Result<Vec<PoseSequence>> {
    let target = seq3d.centroid();
    let mut out = Vec::new();
    for cam_index in 0..spec.cameras_per_sequence {
        let mut projected = None;
        for attempt in 0..MAX_CAMERA_ATTEMPTS {
            let seed = crate::rng::derive_seed(spec.random_seed, &[1, index as u64, cam_index as u64, attempt]);
            let (cam, _) = sample_camera(seed, &spec.camera, target)?;
            match project(seq3d, &cam) {
                Ok(p) => {
                    projected = Some(p);
                    break;
                }
                Err(Error::BehindCamera { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
        let projected = projected.ok_or_else(|| {
            Error::Degenerate(format!("source {index}: no camera placement keeps every joint in view"))
        })?;
        for window in chunk(&projected, spec.chunk_length, spec.stride)? {
            out.push(normalize(&window)?);
        }
    }
    Ok(out)
}

/// Builds every sequence of the dataset in source order. Each source uses
/// its own random stream, so the result does not depend on `workers`.
pub fn build_dataset(spec: &DatasetSpec, workers: Option<usize>) -> Result<Dataset> {
    spec.validate()?;
    let topology = SkeletonTopology::builtin(RIG_TOPOLOGY).expect("bundled topology");
    let loaded: Vec<Pose3DSequence> = spec
        .sources
        .iter()
        .map(|path| {
            let (topo, seq) = read_pose3d(path)?;
            if topo != topology {
                return Err(Error::format(path, format!("expected topology {RIG_TOPOLOGY}")));
            }
            Ok(seq)
        })
        .collect::<Result<_>>()?;
    let total = loaded.len() + spec.synthetic_sequences;
    let per_source: Vec<Vec<PoseSequence>> = crate::rng::with_workers(workers, || {
        (0..total)
            .into_par_iter()
            .map(|i| {
                let generated;
                let seq3d = match loaded.get(i) {
                    Some(s) => s,
                    None => {
                        generated = synth_motion(&spec.motion, crate::rng::derive_seed(spec.random_seed, &[0, i as u64]))?;
                        &generated
                    }
                };
                source_views(spec, i, seq3d)
            })
            .collect::<Result<_>>()
    })?;
    Ok(Dataset {
        topology,
        sequences: per_source.into_iter().flatten().collect(),
    })
}

impl Dataset {
    /// Writes shards and the manifest into `dir` (created if missing).
    pub fn write(&self, dir: &Path, spec: &DatasetSpec) -> Result<DatasetManifest> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut shards = Vec::new();
        for (k, part) in self.sequences.chunks(spec.shard_size).enumerate() {
            let mut bytes = Vec::new();
            for seq in part {
                PoseFile::new(self.topology.clone(), seq.clone())?.write_line(&mut bytes)?;
            }
            let file = format!("shard-{k:05}.jsonl");
            write_atomic(&dir.join(&file), &bytes)?;
            shards.push(ShardInfo {
                file,
                records: part.len(),
                sha256: sha256_hex(&bytes),
            });
        }
        let joined: String = shards.iter().map(|s| s.sha256.as_str()).collect();
        let manifest = DatasetManifest {
            format_version: DATASET_FORMAT_VERSION,
            topology: self.topology.name().to_string(),
            spec: spec.clone(),
            seed: spec.random_seed,
            source_count: spec.sources.len() + spec.synthetic_sequences,
            sequence_count: self.sequences.len(),
            shards,
            content_hash: sha256_hex(joined.as_bytes()),
        };
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::format(&path, e))?;
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
        Ok(manifest)
    }

    /// Loads a dataset directory, verifying every shard hash.
    pub fn load(dir: &Path) -> Result<(Self, DatasetManifest)> {
        let path = dir.join("manifest.json");
        let manifest: DatasetManifest =
            serde_json::from_str(&read_to_string(&path)?).map_err(|e| Error::format(&path, e))?;
        if manifest.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::format(&path, format!("unsupported version {}", manifest.format_version)));
        }
        let topology = SkeletonTopology::builtin(&manifest.topology)
            .ok_or_else(|| Error::format(&path, format!("unknown topology {:?}", manifest.topology)))?;
        let mut sequences = Vec::with_capacity(manifest.sequence_count);
        for shard in &manifest.shards {
            let shard_path = dir.join(&shard.file);
            let bytes = std::fs::read(&shard_path).map_err(|e| Error::io(&shard_path, e))?;
            if sha256_hex(&bytes) != shard.sha256 {
                return Err(Error::format(&shard_path, "content hash mismatch"));
            }
            let text = String::from_utf8(bytes).map_err(|e| Error::format(&shard_path, e))?;
            let before = sequences.len();
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                let file = PoseFile::from_json(line, &shard_path)?;
                if file.topology != topology {
                    return Err(Error::format(&shard_path, "record topology differs from manifest"));
                }
                sequences.push(file.sequence);
            }
            if sequences.len() - before != shard.records {
                return Err(Error::format(&shard_path, "record count differs from manifest"));
            }
        }
        Ok((Self { topology, sequences }, manifest))
    }
}
