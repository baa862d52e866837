//! Checkpoint directories: a JSON manifest plus one binary tensor archive
//! per subnet.
//!
//! Archive layout (little endian): magic `JMPSARC1`, value width in bytes
//! (`u8`, 4 or 8), tensor count (`u32`), then per tensor the name length
//! (`u32`), UTF-8 name, rank (`u32`), dimensions (`u64` each) and values.

use std::collections::BTreeMap;
use std::path::Path;

use jumps_autograd::Tensor;
use serde::{Deserialize, Serialize};

use super::config::NetworkConfig;
use super::model::{count_parameters, Architecture, NamedTensors, ParameterSet, Subnet, SubnetParams};
use crate::error::{Error, Result};
use crate::io::{read_to_string, write_atomic};
use crate::topology::SkeletonTopology;

const MAGIC: &[u8; 8] = b"JMPSARC1";
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

pub(crate) fn encode_archive<'a>(entries: impl IntoIterator<Item = (&'a str, &'a Tensor)>, precision: Precision) -> Vec<u8> {
    let entries: Vec<_> = entries.into_iter().collect();
    let mut out = MAGIC.to_vec();
    out.push(match precision {
        Precision::F32 => 4,
        Precision::F64 => 8,
    });
    out.extend((entries.len() as u32).to_le_bytes());
    for (name, t) in entries {
        out.extend((name.len() as u32).to_le_bytes());
        out.extend(name.as_bytes());
        out.extend((t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend((d as u64).to_le_bytes());
        }
        for &v in t.data() {
            match precision {
                Precision::F32 => out.extend((v as f32).to_le_bytes()),
                Precision::F64 => out.extend(v.to_le_bytes()),
            }
        }
    }
    out
}

pub(crate) fn decode_archive(bytes: &[u8], origin: &Path) -> Result<Vec<(String, Tensor)>> {
    let bad = |m: &str| Error::format(origin, m);
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated archive"))?;
        pos += n;
        Ok(s)
    };
    if take(8)? != MAGIC {
        return Err(bad("not a tensor archive"));
    }
    let width = take(1)?[0] as usize;
    if width != 4 && width != 8 {
        return Err(bad("unknown value width"));
    }
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().expect("4 bytes")) as usize;
    let count = u32_at(take(4)?);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = u32_at(take(4)?);
        let name = std::str::from_utf8(take(len)?).map_err(|_| bad("tensor name is not UTF-8"))?.to_string();
        let rank = u32_at(take(4)?);
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize);
        }
        let n: usize = shape.iter().product();
        let raw = take(n.checked_mul(width).ok_or_else(|| bad("tensor too large"))?)?;
        let data: Vec<f64> = if width == 4 {
            raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64).collect()
        } else {
            raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect()
        };
        out.push((name, Tensor::new(shape, data)));
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes after archive"));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterCounts {
    pub encoder: usize,
    pub generator: usize,
    pub critic: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub topology: String,
    pub network: NetworkConfig,
    pub parameter_counts: ParameterCounts,
    pub step: u64,
    pub epoch: u64,
    pub metrics: BTreeMap<String, f64>,
}

/// A loaded model: architecture, weights and the topology it was trained on.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub topology: SkeletonTopology,
    pub arch: Architecture,
    pub params: ParameterSet,
}

fn archive_name(s: Subnet) -> String {
    format!("{}.params", s.name())
}

/// Writes the manifest and per-subnet archives (32-bit values) into `dir`.
pub fn save_checkpoint(
    dir: &Path,
    topology: &SkeletonTopology,
    arch: &Architecture,
    params: &ParameterSet,
    step: u64,
    epoch: u64,
    metrics: BTreeMap<String, f64>,
) -> Result<CheckpointManifest> {
    arch.check(params)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for s in Subnet::ALL {
        let sp = params.subnet(s);
        let bytes = encode_archive(sp.params.iter().chain(sp.buffers.iter()), Precision::F32);
        write_atomic(&dir.join(archive_name(s)), &bytes)?;
    }
    let (encoder, generator, critic) = count_parameters(params);
    let manifest = CheckpointManifest {
        format_version: CHECKPOINT_FORMAT_VERSION,
        topology: topology.name().to_string(),
        network: arch.config().clone(),
        parameter_counts: ParameterCounts {
            encoder,
            generator,
            critic,
        },
        step,
        epoch,
        metrics,
    };
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::format(&path, e))?;
    text.push('\n');
    // The manifest goes last so a directory with a manifest is complete.
    write_atomic(&path, text.as_bytes())?;
    Ok(manifest)
}

pub(crate) fn split_subnet(arch: &Architecture, s: Subnet, entries: Vec<(String, Tensor)>) -> SubnetParams {
    let n_params = arch.shapes(s).0.len();
    let mut sp = SubnetParams::default();
    for (i, (name, t)) in entries.into_iter().enumerate() {
        let target: &mut NamedTensors = if i < n_params { &mut sp.params } else { &mut sp.buffers };
        target.names.push(name);
        target.tensors.push(t);
    }
    sp
}

/// Loads a checkpoint directory, validating every tensor name and shape
/// against the recorded network configuration.
pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let path = dir.join("manifest.json");
    let manifest: CheckpointManifest =
        serde_json::from_str(&read_to_string(&path)?).map_err(|e| Error::format(&path, e))?;
    if manifest.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::format(&path, format!("unsupported version {}", manifest.format_version)));
    }
    let topology = SkeletonTopology::builtin(&manifest.topology)
        .ok_or_else(|| Error::format(&path, format!("unknown topology {:?}", manifest.topology)))?;
    let arch = Architecture::new(manifest.network.clone()).map_err(|e| Error::format(&path, e))?;
    if arch.config().height != topology.grid_height() {
        return Err(Error::format(&path, "network height does not match the topology"));
    }
    let mut subnets = Vec::new();
    for s in Subnet::ALL {
        let p = dir.join(archive_name(s));
        let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
        subnets.push(split_subnet(&arch, s, decode_archive(&bytes, &p)?));
    }
    let mut it = subnets.into_iter();
    let params = ParameterSet {
        encoder: it.next().expect("three subnets"),
        generator: it.next().expect("three subnets"),
        critic: it.next().expect("three subnets"),
    };
    arch.check(&params).map_err(|e| Error::format(dir, e))?;
    Ok(Checkpoint {
        manifest,
        topology,
        arch,
        params,
    })
}
