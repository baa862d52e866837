//! Pose sequences, normalization, joint-subset operations and the pose file
//! format.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{SkeletonTopology, TopologyFile};
use crate::transform::{AffineTransform2D, Point};

/// F×J 2D joint positions with a per-entry availability mask.
///
/// Positions of unavailable joints carry no meaning; they are stored as
/// zeros. `norm` maps the stored coordinates back to the frame they were
/// normalized from (identity for raw data).
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    frames: usize,
    joints: usize,
    positions: Vec<Point>,
    mask: Vec<bool>,
    pub norm: AffineTransform2D,
    pub fps: Option<f64>,
}

impl PoseSequence {
    pub fn new(frames: usize, joints: usize, positions: Vec<Point>, mask: Vec<bool>) -> Result<Self> {
        if frames == 0 || joints == 0 {
            return Err(Error::Shape(format!("empty sequence ({frames}×{joints})")));
        }
        if positions.len() != frames * joints || mask.len() != frames * joints {
            return Err(Error::Shape(format!(
                "{frames}×{joints} sequence given {} positions and {} mask entries",
                positions.len(),
                mask.len()
            )));
        }
        let mut positions = positions;
        for (p, &m) in positions.iter_mut().zip(&mask) {
            if !m {
                *p = [0.0, 0.0];
            } else if !(p[0].is_finite() && p[1].is_finite()) {
                return Err(Error::NonFinite("available joint position".into()));
            }
        }
        Ok(Self {
            frames,
            joints,
            positions,
            mask,
            norm: AffineTransform2D::identity(),
            fps: None,
        })
    }

    /// A sequence with every joint available.
    pub fn full(frames: usize, joints: usize, positions: Vec<Point>) -> Result<Self> {
        Self::new(frames, joints, positions, vec![true; frames * joints])
    }

    pub fn from_fn(frames: usize, joints: usize, mut f: impl FnMut(usize, usize) -> Point) -> Result<Self> {
        let mut positions = Vec::with_capacity(frames * joints);
        for fr in 0..frames {
            for j in 0..joints {
                positions.push(f(fr, j));
            }
        }
        Self::full(frames, joints, positions)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn position(&self, frame: usize, joint: usize) -> Point {
        self.positions[frame * self.joints + joint]
    }

    pub fn is_available(&self, frame: usize, joint: usize) -> bool {
        self.mask[frame * self.joints + joint]
    }

    /// Frame-major positions (`frame * J + joint`).
    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn available_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_full(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    /// Copy with a different mask; newly unavailable positions are zeroed.
    pub fn with_mask(&self, mask: Vec<bool>) -> Result<Self> {
        let mut out = Self::new(self.frames, self.joints, self.positions.clone(), mask)?;
        out.norm = self.norm;
        out.fps = self.fps;
        Ok(out)
    }

    /// Frames `[start, start + len)`.
    pub fn slice_frames(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.frames {
            return Err(Error::Shape(format!(
                "frames [{start}, {}) outside a {}-frame sequence",
                start + len,
                self.frames
            )));
        }
        let range = start * self.joints..(start + len) * self.joints;
        Ok(Self {
            frames: len,
            joints: self.joints,
            positions: self.positions[range.clone()].to_vec(),
            mask: self.mask[range].to_vec(),
            norm: self.norm,
            fps: self.fps,
        })
    }

    /// Applies `t` to every available position; `norm` is updated so that it
    /// still maps back to the original frame.
    pub fn transformed(&self, t: &AffineTransform2D) -> Self {
        let mut out = self.clone();
        for (p, &m) in out.positions.iter_mut().zip(&self.mask) {
            if m {
                *p = t.apply(*p);
            }
        }
        out.norm = self.norm.compose(&t.inverse());
        out
    }

    /// Positions mapped through `norm`, with an identity `norm`.
    pub fn denormalized(&self) -> Self {
        let mut out = self.transformed(&self.norm);
        out.norm = AffineTransform2D::identity();
        out
    }

    /// Bounding box `(min, max)` of available joints over all frames.
    pub fn bounding_box(&self) -> Option<(Point, Point)> {
        let mut it = self
            .positions
            .iter()
            .zip(&self.mask)
            .filter_map(|(p, &m)| m.then_some(*p));
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), p| {
            ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])])
        }))
    }

    /// Mean of available joint positions.
    pub fn centroid(&self) -> Option<Point> {
        let mut acc = [0.0, 0.0];
        let mut n = 0usize;
        for (p, &m) in self.positions.iter().zip(&self.mask) {
            if m {
                acc[0] += p[0];
                acc[1] += p[1];
                n += 1;
            }
        }
        (n > 0).then(|| [acc[0] / n as f64, acc[1] / n as f64])
    }
}

/// Centers the available joints' sequence-wide bounding box at the origin
/// and scales its larger half-side to 1. The returned sequence's `norm`
/// maps back to the input's source frame.
pub fn normalize(seq: &PoseSequence) -> Result<PoseSequence> {
    let (lo, hi) = seq
        .bounding_box()
        .ok_or(Error::EmptyMask("normalize needs at least one available joint"))?;
    let half = 0.5 * (hi[0] - lo[0]).max(hi[1] - lo[1]);
    if half <= 0.0 || !half.is_finite() {
        return Err(Error::Degenerate("bounding box has zero extent".into()));
    }
    let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
    let forward = AffineTransform2D::scale_translate(1.0 / half, [-center[0] / half, -center[1] / half])?;
    Ok(seq.transformed(&forward))
}

/// Keeps the joints of `full` that `reduced` maps to and marks every other
/// joint unavailable. The result stays in the full topology.
pub fn downsample(
    seq: &PoseSequence,
    full: &SkeletonTopology,
    reduced: &SkeletonTopology,
) -> Result<PoseSequence> {
    check_joints(seq, full)?;
    let kept = reduced.embedding_into(full)?;
    let mut keep = vec![false; full.joint_count()];
    for id in kept {
        keep[id] = true;
    }
    let mask = seq
        .mask()
        .iter()
        .enumerate()
        .map(|(i, &m)| m && keep[i % seq.joints()])
        .collect();
    seq.with_mask(mask)
}

/// Places a reduced-topology sequence into the full topology; joints absent
/// from `reduced` are unavailable.
pub fn embed(
    seq: &PoseSequence,
    reduced: &SkeletonTopology,
    full: &SkeletonTopology,
) -> Result<PoseSequence> {
    check_joints(seq, reduced)?;
    let ids = reduced.embedding_into(full)?;
    let jf = full.joint_count();
    let mut positions = vec![[0.0, 0.0]; seq.frames() * jf];
    let mut mask = vec![false; seq.frames() * jf];
    for f in 0..seq.frames() {
        for (r, &id) in ids.iter().enumerate() {
            positions[f * jf + id] = seq.position(f, r);
            mask[f * jf + id] = seq.is_available(f, r);
        }
    }
    let mut out = PoseSequence::new(seq.frames(), jf, positions, mask)?;
    out.norm = seq.norm;
    out.fps = seq.fps;
    Ok(out)
}

/// The reduced-topology view of a full-topology sequence.
pub fn restrict(
    seq: &PoseSequence,
    full: &SkeletonTopology,
    reduced: &SkeletonTopology,
) -> Result<PoseSequence> {
    check_joints(seq, full)?;
    let ids = reduced.embedding_into(full)?;
    let jr = ids.len();
    let mut positions = Vec::with_capacity(seq.frames() * jr);
    let mut mask = Vec::with_capacity(seq.frames() * jr);
    for f in 0..seq.frames() {
        for &id in &ids {
            positions.push(seq.position(f, id));
            mask.push(seq.is_available(f, id));
        }
    }
    let mut out = PoseSequence::new(seq.frames(), jr, positions, mask)?;
    out.norm = seq.norm;
    out.fps = seq.fps;
    Ok(out)
}

pub(crate) fn check_joints(seq: &PoseSequence, topo: &SkeletonTopology) -> Result<()> {
    if seq.joints() != topo.joint_count() {
        return Err(Error::Shape(format!(
            "sequence has {} joints, topology {:?} has {}",
            seq.joints(),
            topo.name(),
            topo.joint_count()
        )));
    }
    Ok(())
}

/// A sequence together with the topology it is expressed in.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseFile {
    pub topology: SkeletonTopology,
    pub sequence: PoseSequence,
}

pub const POSE_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TopologyRef {
    Name(String),
    Inline(TopologyFile),
}

#[derive(Serialize, Deserialize)]
struct PoseRecord {
    version: u32,
    topology: TopologyRef,
    fps: Option<f64>,
    frames: Vec<Vec<Option<[f64; 2]>>>,
}

impl PoseFile {
    pub fn new(topology: SkeletonTopology, sequence: PoseSequence) -> Result<Self> {
        check_joints(&sequence, &topology)?;
        Ok(Self { topology, sequence })
    }

    /// Serializes positions as stored (not denormalized).
    pub fn to_json(&self) -> Result<String> {
        let seq = &self.sequence;
        let frames = (0..seq.frames())
            .map(|f| {
                (0..seq.joints())
                    .map(|j| seq.is_available(f, j).then(|| seq.position(f, j)))
                    .collect()
            })
            .collect();
        let topology = match SkeletonTopology::builtin(self.topology.name()) {
            Some(b) if b == self.topology => TopologyRef::Name(self.topology.name().to_string()),
            _ => TopologyRef::Inline(self.topology.to_file()),
        };
        if seq.fps.is_some_and(|f| !f.is_finite()) {
            return Err(Error::NonFinite("fps".into()));
        }
        let record = PoseRecord {
            version: POSE_FORMAT_VERSION,
            topology,
            fps: seq.fps,
            frames,
        };
        serde_json::to_string(&record).map_err(|e| Error::Format {
            path: "<memory>".into(),
            reason: e.to_string(),
        })
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let record: PoseRecord = serde_json::from_str(text).map_err(|e| Error::format(origin, e))?;
        if record.version != POSE_FORMAT_VERSION {
            return Err(Error::format(origin, format!("unsupported version {}", record.version)));
        }
        let topology = match record.topology {
            TopologyRef::Name(name) => SkeletonTopology::builtin(&name)
                .ok_or_else(|| Error::format(origin, format!("unknown topology {name:?}")))?,
            TopologyRef::Inline(file) => SkeletonTopology::from_file(file)?,
        };
        let frames = record.frames.len();
        let joints = topology.joint_count();
        let mut positions = Vec::with_capacity(frames * joints);
        let mut mask = Vec::with_capacity(frames * joints);
        for (f, row) in record.frames.iter().enumerate() {
            if row.len() != joints {
                return Err(Error::format(
                    origin,
                    format!("frame {f} has {} joints, expected {joints}", row.len()),
                ));
            }
            for p in row {
                positions.push(p.unwrap_or([0.0, 0.0]));
                mask.push(p.is_some());
            }
        }
        let mut sequence = PoseSequence::new(frames, joints, positions, mask)
            .map_err(|e| Error::format(origin, e))?;
        sequence.fps = record.fps;
        Ok(Self { topology, sequence })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        crate::io::write_atomic(path, text.as_bytes())
    }

    pub fn write_line(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "{}", self.to_json()?).map_err(|e| Error::io("<stream>", e))
    }

    /// Reads a single record or one record per non-empty line.
    pub fn read_all(path: &Path) -> Result<Vec<Self>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if let Ok(single) = Self::from_json(&text, path) {
            return Ok(vec![single]);
        }
        let records: Vec<Self> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| Self::from_json(l, path))
            .collect::<Result<_>>()?;
        if records.is_empty() {
            return Err(Error::format(path, "no pose records"));
        }
        Ok(records)
    }

    /// Writes one record per line.
    pub fn write_all(path: &Path, records: &[Self]) -> Result<()> {
        let mut buf = Vec::new();
        for r in records {
            r.write_line(&mut buf)?;
        }
        crate::io::write_atomic(path, &buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn skeleton(frames: usize) -> PoseSequence {
        PoseSequence::from_fn(frames, 28, |f, j| {
            let t = f as f64 * 0.1;
            [j as f64 * 3.0 + t.sin() * 10.0, (j * j % 17) as f64 * 5.0 - t]
        })
        .unwrap()
    }

    #[test]
    fn normalize_leaves_unit_box_unchanged() {
        let seq = PoseSequence::full(1, 2, vec![[-1.0, -0.5], [1.0, 0.5]]).unwrap();
        let n = normalize(&seq).unwrap();
        assert_eq!(n.positions(), seq.positions());
        assert_eq!(n.norm, AffineTransform2D::identity());
    }

    #[test]
    fn normalize_is_translation_invariant_and_invertible() {
        let seq = skeleton(5);
        let moved = seq.transformed(&AffineTransform2D::scale_translate(1.0, [100.0, 50.0]).unwrap());
        let a = normalize(&seq).unwrap();
        let b = normalize(&moved.denormalized()).unwrap();
        for (p, q) in a.positions().iter().zip(b.positions()) {
            assert!((p[0] - q[0]).abs() < 1e-9 && (p[1] - q[1]).abs() < 1e-9);
        }
        let back = a.denormalized();
        for (p, q) in back.positions().iter().zip(seq.positions()) {
            assert!((p[0] - q[0]).abs() < 1e-6 && (p[1] - q[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn normalize_is_idempotent() {
        let a = normalize(&skeleton(4)).unwrap();
        let b = normalize(&a).unwrap();
        for (p, q) in a.positions().iter().zip(b.positions()) {
            assert!((p[0] - q[0]).abs() < 1e-9 && (p[1] - q[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn normalize_errors() {
        let seq = PoseSequence::new(1, 2, vec![[0.0; 2]; 2], vec![false, false]).unwrap();
        assert!(matches!(normalize(&seq), Err(Error::EmptyMask(_))));
        let seq = PoseSequence::full(2, 1, vec![[3.0, 3.0]; 2]).unwrap();
        assert!(matches!(normalize(&seq), Err(Error::Degenerate(_))));
    }

    #[test]
    fn downsample_keeps_twelve_joints() {
        let full = SkeletonTopology::mpi_inf_3dhp_28();
        let coarse = SkeletonTopology::coarse_12();
        let d = downsample(&skeleton(3), &full, &coarse).unwrap();
        for f in 0..3 {
            assert_eq!((0..28).filter(|&j| d.is_available(f, j)).count(), 12);
        }
        let mut mask = vec![true; 3 * 28];
        let lw = full.joint_id("left_wrist").unwrap();
        mask[28 + lw] = false;
        let partial = skeleton(3).with_mask(mask).unwrap();
        let d = downsample(&partial, &full, &coarse).unwrap();
        assert!(!d.is_available(1, lw));
    }

    #[test]
    fn embed_then_restrict_roundtrips() {
        let full = SkeletonTopology::mpi_inf_3dhp_28();
        let coarse = SkeletonTopology::coarse_12();
        let small = restrict(&skeleton(2), &full, &coarse).unwrap();
        let big = embed(&small, &coarse, &full).unwrap();
        assert_eq!(big.available_count(), 24);
        assert_eq!(restrict(&big, &full, &coarse).unwrap(), small);
    }

    #[test]
    fn pose_file_roundtrip_with_missing_joints() {
        let full = SkeletonTopology::mpi_inf_3dhp_28();
        let mut mask = vec![true; 2 * 28];
        mask[5] = false;
        let mut seq = skeleton(2).with_mask(mask).unwrap();
        seq.fps = Some(25.0);
        let file = PoseFile::new(full, seq).unwrap();
        let text = file.to_json().unwrap();
        assert!(text.contains("\"topology\":\"mpi_inf_3dhp_28\""));
        assert!(text.contains("null"));
        let back = PoseFile::from_json(&text, Path::new("x")).unwrap();
        assert_eq!(back, file);
    }

    #[test]
    fn pose_file_rejects_wrong_joint_count() {
        let text = r#"{"version":1,"topology":"coarse_12","fps":null,"frames":[[[0,0]]]}"#;
        assert!(matches!(
            PoseFile::from_json(text, Path::new("x")),
            Err(Error::Format { .. })
        ));
    }
}
