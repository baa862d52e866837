//! Dataset construction: 3D motion sources, camera projection, chunking and
//! sharded dataset archives.

mod camera;
mod chunk;
mod dataset;
mod synth;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::SkeletonTopology;

pub use camera::{project, sample_camera, CameraModel, CameraRanges};
pub use chunk::{chunk, window_starts};
pub use dataset::{build_dataset, Dataset, DatasetManifest, DatasetSpec, ShardInfo};
pub use synth::{angle_tracks, synth_motion, MotionParams, RIG_TOPOLOGY};

/// F×J 3D joint positions in world units (y up).
#[derive(Debug, Clone, PartialEq)]
pub struct Pose3DSequence {
    pub frames: usize,
    pub joints: usize,
    /// Frame-major, `frame * joints + joint`.
    pub positions: Vec<[f64; 3]>,
    pub fps: Option<f64>,
}

impl Pose3DSequence {
    pub fn new(frames: usize, joints: usize, positions: Vec<[f64; 3]>) -> Result<Self> {
        if frames == 0 || joints == 0 || positions.len() != frames * joints {
            return Err(Error::Shape(format!(
                "{frames}×{joints} 3D sequence given {} positions",
                positions.len()
            )));
        }
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("3D joint position".into()));
        }
        Ok(Self {
            frames,
            joints,
            positions,
            fps: None,
        })
    }

    pub fn position(&self, frame: usize, joint: usize) -> [f64; 3] {
        self.positions[frame * self.joints + joint]
    }

    pub fn centroid(&self) -> [f64; 3] {
        let n = self.positions.len() as f64;
        let s = self
            .positions
            .iter()
            .fold([0.0; 3], |a, p| [a[0] + p[0], a[1] + p[1], a[2] + p[2]]);
        [s[0] / n, s[1] / n, s[2] / n]
    }
}

#[derive(Serialize, Deserialize)]
struct Pose3DRecord {
    version: u32,
    topology: String,
    fps: Option<f64>,
    frames: Vec<Vec<[f64; 3]>>,
}

/// Reads a 3D source file: `{version, topology, fps, frames: [[[x,y,z], ...], ...]}`
/// where `topology` names a bundled topology.
pub fn read_pose3d(path: &Path) -> Result<(SkeletonTopology, Pose3DSequence)> {
    let text = crate::io::read_to_string(path)?;
    let record: Pose3DRecord = serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
    if record.version != crate::sequence::POSE_FORMAT_VERSION {
        return Err(Error::format(path, format!("unsupported version {}", record.version)));
    }
    let topo = SkeletonTopology::builtin(&record.topology)
        .ok_or_else(|| Error::format(path, format!("unknown topology {:?}", record.topology)))?;
    let joints = topo.joint_count();
    if let Some(f) = record.frames.iter().position(|row| row.len() != joints) {
        return Err(Error::format(path, format!("frame {f} does not have {joints} joints")));
    }
    let frames = record.frames.len();
    let mut seq = Pose3DSequence::new(frames, joints, record.frames.into_iter().flatten().collect())
        .map_err(|e| Error::format(path, e))?;
    seq.fps = record.fps;
    Ok((topo, seq))
}

pub fn write_pose3d(path: &Path, topo: &SkeletonTopology, seq: &Pose3DSequence) -> Result<()> {
    let record = Pose3DRecord {
        version: crate::sequence::POSE_FORMAT_VERSION,
        topology: topo.name().to_string(),
        fps: seq.fps,
        frames: seq.positions.chunks(seq.joints).map(<[_]>::to_vec).collect(),
    };
    let text = serde_json::to_string(&record).map_err(|e| Error::format(path, e))?;
    crate::io::write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pose3d_round_trip() {
        let topo = SkeletonTopology::mpi_inf_3dhp_28();
        let positions = (0..2 * 28).map(|i| [i as f64, 0.5 * i as f64, 1.0 / (1.0 + i as f64)]).collect();
        let mut seq = Pose3DSequence::new(2, 28, positions).unwrap();
        seq.fps = Some(25.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        write_pose3d(&path, &topo, &seq).unwrap();
        let (t, back) = read_pose3d(&path).unwrap();
        assert_eq!(t, topo);
        assert_eq!(back, seq);
    }

    #[test]
    fn ragged_frames_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        let text = r#"{"version":1,"topology":"mpi_inf_3dhp_28","fps":null,"frames":[[[0,0,0]]]}"#;
        std::fs::write(&path, text).unwrap();
        assert!(read_pose3d(&path).is_err());
    }
}
