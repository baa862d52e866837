//! The paired-joint grid: each row holds the 2D coordinates of two joints
//! (a symmetric pair, or an axial joint duplicated), giving a 4×H×F array
//! that ordinary 2D convolutions can process.

use std::sync::Arc;

use jumps_autograd::{SparseMap, Tensor};

use crate::error::{Error, Result};
use crate::sequence::{check_joints, PoseSequence};
use crate::topology::{GridEntry, SkeletonTopology};

/// Channel-major `C×H×F` array; `C` is 4 (positions) or 8 (positions then
/// velocities).
#[derive(Debug, Clone, PartialEq)]
pub struct GridTensor {
    channels: usize,
    height: usize,
    frames: usize,
    data: Vec<f64>,
}

impl GridTensor {
    pub fn new(channels: usize, height: usize, frames: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 4 && channels != 8 {
            return Err(Error::Shape(format!("grid must have 4 or 8 channels, got {channels}")));
        }
        if data.len() != channels * height * frames {
            return Err(Error::Shape(format!(
                "{channels}×{height}×{frames} grid given {} values",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            frames,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, channel: usize, row: usize, frame: usize) -> f64 {
        self.data[(channel * self.height + row) * self.frames + frame]
    }

    fn set(&mut self, channel: usize, row: usize, frame: usize, v: f64) {
        self.data[(channel * self.height + row) * self.frames + frame] = v;
    }

    pub fn into_tensor(self) -> Tensor {
        Tensor::new([self.channels, self.height, self.frames], self.data)
    }
}

/// Lays out `seq` on the grid. With `with_velocities`, channels 4..8 hold
/// the difference to the previous frame (zero at frame 0).
pub fn encode_grid(seq: &PoseSequence, topo: &SkeletonTopology, with_velocities: bool) -> Result<GridTensor> {
    check_joints(seq, topo)?;
    let channels = if with_velocities { 8 } else { 4 };
    let (h, f) = (topo.grid_height(), seq.frames());
    let mut grid = GridTensor::new(channels, h, f, vec![0.0; channels * h * f])?;
    for (row, entry) in topo.grid_order().iter().enumerate() {
        let (a, b) = entry.halves();
        for fr in 0..f {
            let (pa, pb) = (seq.position(fr, a), seq.position(fr, b));
            for (c, v) in [pa[0], pa[1], pb[0], pb[1]].into_iter().enumerate() {
                grid.set(c, row, fr, v);
                if with_velocities && fr > 0 {
                    let prev = grid.get(c, row, fr - 1);
                    grid.set(c + 4, row, fr, v - prev);
                }
            }
        }
    }
    Ok(grid)
}

/// Reads joints back off a 4-channel grid. Axial joints take the mean of
/// their two halves. The result has a full mask.
pub fn decode_grid(grid: &GridTensor, topo: &SkeletonTopology) -> Result<PoseSequence> {
    if grid.channels() != 4 {
        return Err(Error::Shape(format!(
            "decode_grid needs a 4-channel grid, got {}",
            grid.channels()
        )));
    }
    if grid.height() != topo.grid_height() {
        return Err(Error::Shape(format!(
            "grid has {} rows, topology {:?} has {}",
            grid.height(),
            topo.name(),
            topo.grid_height()
        )));
    }
    let (j, f) = (topo.joint_count(), grid.frames());
    let mut positions = vec![[0.0, 0.0]; f * j];
    for (row, entry) in topo.grid_order().iter().enumerate() {
        for fr in 0..f {
            let first = [grid.get(0, row, fr), grid.get(1, row, fr)];
            let second = [grid.get(2, row, fr), grid.get(3, row, fr)];
            match *entry {
                GridEntry::Pair { left, right } => {
                    positions[fr * j + left] = first;
                    positions[fr * j + right] = second;
                }
                GridEntry::Axial(a) => {
                    positions[fr * j + a] = [0.5 * (first[0] + second[0]), 0.5 * (first[1] + second[1])];
                }
            }
        }
    }
    PoseSequence::full(f, j, positions)
}

/// Sparse linear maps between batched pose tensors `[N, F, J, 2]` and grid
/// tensors, used on the differentiable path.
#[derive(Debug, Clone)]
pub struct GridCodec {
    frames: usize,
    joints: usize,
    height: usize,
    /// pose → 4-channel grid (axial joints duplicated).
    pub encode: Arc<SparseMap>,
    /// 4-channel grid → pose (axial halves averaged).
    pub decode: Arc<SparseMap>,
    /// pose → 8-channel critic input (positions stacked with velocities).
    pub critic_input: Arc<SparseMap>,
    /// pose `[F, J, 2]` → per-joint velocities `[F-1, J, 2]`.
    pub velocity: Arc<SparseMap>,
}

impl GridCodec {
    pub fn new(topo: &SkeletonTopology, frames: usize) -> Result<Self> {
        if frames < 2 {
            return Err(Error::Shape("grid codec needs at least 2 frames".into()));
        }
        let (j, h, f) = (topo.joint_count(), topo.grid_height(), frames);
        let pose_idx = |fr: usize, joint: usize, c: usize| (fr * j + joint) * 2 + c;
        let grid_idx = |c: usize, row: usize, fr: usize| (c * h + row) * f + fr;

        let mut enc = Vec::new();
        let mut dec = Vec::new();
        let mut critic = Vec::new();
        for (row, entry) in topo.grid_order().iter().enumerate() {
            let (a, b) = entry.halves();
            let w = if a == b { 0.5 } else { 1.0 };
            for fr in 0..f {
                for c in 0..4 {
                    let joint = if c < 2 { a } else { b };
                    let src = pose_idx(fr, joint, c % 2);
                    enc.push((grid_idx(c, row, fr), src, 1.0));
                    dec.push((src, grid_idx(c, row, fr), w));
                    critic.push((grid_idx(c, row, fr), src, 1.0));
                    if fr > 0 {
                        critic.push((grid_idx(c + 4, row, fr), src, 1.0));
                        critic.push((grid_idx(c + 4, row, fr), pose_idx(fr - 1, joint, c % 2), -1.0));
                    }
                }
            }
        }
        let mut vel = Vec::new();
        for fr in 1..f {
            for joint in 0..j {
                for c in 0..2 {
                    let out = ((fr - 1) * j + joint) * 2 + c;
                    vel.push((out, pose_idx(fr, joint, c), 1.0));
                    vel.push((out, pose_idx(fr - 1, joint, c), -1.0));
                }
            }
        }
        let pose_shape = [f, j, 2];
        Ok(Self {
            frames: f,
            joints: j,
            height: h,
            encode: Arc::new(SparseMap::from_triplets(pose_shape, [4, h, f], enc)),
            decode: Arc::new(SparseMap::from_triplets([4, h, f], pose_shape, dec)),
            critic_input: Arc::new(SparseMap::from_triplets(pose_shape, [8, h, f], critic)),
            velocity: Arc::new(SparseMap::from_triplets(pose_shape, [f - 1, j, 2], vel)),
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn height(&self) -> usize {
        self.height
    }
}

/// Stacks sequences into a `[N, F, J, 2]` tensor of stored positions.
pub fn pose_batch(seqs: &[&PoseSequence]) -> Tensor {
    let (f, j) = (seqs[0].frames(), seqs[0].joints());
    let mut data = Vec::with_capacity(seqs.len() * f * j * 2);
    for s in seqs {
        assert_eq!((s.frames(), s.joints()), (f, j), "ragged pose batch");
        for p in s.positions() {
            data.extend_from_slice(p);
        }
    }
    Tensor::new([seqs.len(), f, j, 2], data)
}

/// `[N, F, J]` availability weights (1.0 / 0.0).
pub fn mask_batch(seqs: &[&PoseSequence]) -> Tensor {
    let (f, j) = (seqs[0].frames(), seqs[0].joints());
    let data = seqs
        .iter()
        .flat_map(|s| s.mask().iter().map(|&m| if m { 1.0 } else { 0.0 }))
        .collect();
    Tensor::new([seqs.len(), f, j], data)
}

/// Splits a `[N, F, J, 2]` tensor back into full-mask sequences.
pub fn unbatch_poses(t: &Tensor) -> Result<Vec<PoseSequence>> {
    let [n, f, j, two] = *t.shape() else {
        return Err(Error::Shape(format!("expected [N, F, J, 2], got {:?}", t.shape())));
    };
    if two != 2 {
        return Err(Error::Shape(format!("expected [N, F, J, 2], got {:?}", t.shape())));
    }
    t.data()
        .chunks(f * j * 2)
        .take(n)
        .map(|c| PoseSequence::full(f, j, c.chunks(2).map(|p| [p[0], p[1]]).collect()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::TopologyFile;

    fn toy_topology() -> SkeletonTopology {
        SkeletonTopology::from_file(TopologyFile {
            name: Some("toy".into()),
            joints: ["la", "ra", "lb", "rb", "mid"].map(String::from).to_vec(),
            pairs: vec![["la".into(), "ra".into()], ["lb".into(), "rb".into()]],
            axial: vec!["mid".into()],
            grid_order: vec!["la".into(), "mid".into(), "lb".into()],
            head_pair: Some(["mid".into(), "la".into()]),
            downsample_map: None,
        })
        .unwrap()
    }

    fn toy_sequence(frames: usize) -> PoseSequence {
        PoseSequence::from_fn(frames, 5, |f, j| [10.0 * j as f64 + f as f64, -(j as f64) + 0.5 * f as f64]).unwrap()
    }

    #[test]
    fn toy_layout_matches_hand_construction() {
        let topo = toy_topology();
        let seq = toy_sequence(2);
        let g = encode_grid(&seq, &topo, false).unwrap();
        // rows: (la, ra), (mid, mid), (lb, rb)
        let rows = [(0, 1), (4, 4), (2, 3)];
        let mut want = vec![0.0; 4 * 3 * 2];
        for (r, &(a, b)) in rows.iter().enumerate() {
            for f in 0..2 {
                let (pa, pb) = (seq.position(f, a), seq.position(f, b));
                for (c, v) in [pa[0], pa[1], pb[0], pb[1]].into_iter().enumerate() {
                    want[(c * 3 + r) * 2 + f] = v;
                }
            }
        }
        assert_eq!(g.data(), &want[..]);
        assert_eq!(g.get(0, 1, 1), g.get(2, 1, 1));
    }

    #[test]
    fn decode_averages_axial_halves() {
        let topo = toy_topology();
        let mut data = vec![0.0; 4 * 3];
        // row 1 (axial), frame 0: halves (1,1) and (3,3)
        data[3 + 1] = 1.0;
        data[2 * 3 + 1] = 3.0;
        data[3 * 3 + 1] = 3.0;
        data[1] = 1.0;
        let grid = GridTensor::new(4, 3, 1, data).unwrap();
        let seq = decode_grid(&grid, &topo).unwrap();
        assert_eq!(seq.position(0, 4), [2.0, 2.0]);
    }

    #[test]
    fn decode_rejects_eight_channels() {
        let topo = toy_topology();
        let g = encode_grid(&toy_sequence(3), &topo, true).unwrap();
        assert!(matches!(decode_grid(&g, &topo), Err(Error::Shape(_))));
    }

    #[test]
    fn frozen_pose_has_zero_velocity_channels() {
        let topo = SkeletonTopology::mpi_inf_3dhp_28();
        let seq = PoseSequence::from_fn(6, 28, |_, j| [j as f64, 2.0 * j as f64]).unwrap();
        let g = encode_grid(&seq, &topo, true).unwrap();
        assert!(g.data()[4 * 18 * 6..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sparse_codec_agrees_with_direct_codec() {
        let topo = SkeletonTopology::mpi_inf_3dhp_28();
        let seq = PoseSequence::from_fn(5, 28, |f, j| [(j * 7 + f) as f64 * 0.01, (j as f64).sin() + f as f64]).unwrap();
        let codec = GridCodec::new(&topo, 5).unwrap();
        let batch = pose_batch(&[&seq]);
        let enc = codec.encode.apply(&batch, false);
        assert_eq!(enc.data(), encode_grid(&seq, &topo, false).unwrap().data());
        let crit = codec.critic_input.apply(&batch, false);
        let direct = encode_grid(&seq, &topo, true).unwrap();
        for (a, b) in crit.data().iter().zip(direct.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        let dec = codec.decode.apply(&enc, false);
        for (a, b) in dec.data().iter().zip(batch.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_joint_count_is_rejected() {
        let seq = toy_sequence(2);
        let err = encode_grid(&seq, &SkeletonTopology::mpi_inf_3dhp_28(), false);
        assert!(matches!(err, Err(Error::Shape(_))));
    }
}
