//! Forward-kinematics motion generator.
//!
//! Every rotational degree of freedom and every root channel follows
//! `mean + Σ_k a_k sin(2π ν_k t + φ_k)` with at most four terms and
//! `ν_k ≤ fps / 8`. Bones are rigid, so segment lengths never change.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::SkeletonTopology;

use super::Pose3DSequence;

/// Name of the topology the generator's rig produces.
pub const RIG_TOPOLOGY: &str = "mpi_inf_3dhp_28";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionParams {
    pub fps: f64,
    pub frames: usize,
    /// Sinusoids per channel, at most 4.
    pub components: usize,
    pub min_frequency: f64,
    /// Must not exceed `fps / 8`.
    pub max_frequency: f64,
    /// Multiplies every joint-angle mean and amplitude; 0 gives a T-pose.
    pub amplitude_scale: f64,
    /// Amplitude bound of horizontal root motion (world units).
    pub root_travel: f64,
    pub root_bob: f64,
    /// Amplitude bound of the root heading oscillation (radians).
    pub heading: f64,
    /// Relative per-bone length variation drawn once per sequence.
    pub bone_jitter: f64,
    pub body_scale: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        Self {
            fps: 25.0,
            frames: 24,
            components: 3,
            min_frequency: 0.2,
            max_frequency: 1.5,
            amplitude_scale: 1.0,
            root_travel: 0.3,
            root_bob: 0.03,
            heading: 0.6,
            bone_jitter: 0.08,
            body_scale: 1.0,
        }
    }
}

impl MotionParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("motion parameters: {m}")));
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad("fps must be positive");
        }
        if self.frames == 0 {
            return bad("frames must be at least 1");
        }
        if self.components == 0 || self.components > 4 {
            return bad("components must be in 1..=4");
        }
        if !(0.0 <= self.min_frequency && self.min_frequency <= self.max_frequency) {
            return bad("need 0 ≤ min_frequency ≤ max_frequency");
        }
        if self.max_frequency > self.fps / 8.0 {
            return bad("max_frequency exceeds fps / 8");
        }
        let nonneg = [self.amplitude_scale, self.root_travel, self.root_bob, self.heading];
        if nonneg.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return bad("amplitudes must be finite and non-negative");
        }
        if !(0.0..0.5).contains(&self.bone_jitter) {
            return bad("bone_jitter must be in [0, 0.5)");
        }
        if !(self.body_scale > 0.0 && self.body_scale.is_finite()) {
            return bad("body_scale must be positive");
        }
        Ok(())
    }
}

struct RigJoint {
    name: &'static str,
    parent: Option<usize>,
    offset: [f64; 3],
    /// (mean, range) of the rotation about the local x, y and z axes.
    dofs: [(f64, f64); 3],
}

const ROOT_HEIGHT: f64 = 0.93;

/// Left and axial joints in parent-first order; right limbs are mirrored.
const HALF_RIG: &[(&str, &str, [f64; 3], [(f64, f64); 3])] = &[
    ("pelvis", "", [0.0, 0.0, 0.0], [(0.0, 0.1), (0.0, 0.4), (0.0, 0.08)]),
    ("spine", "pelvis", [0.0, 0.1, 0.0], [(0.0, 0.08), (0.0, 0.1), (0.0, 0.05)]),
    ("spine2", "spine", [0.0, 0.1, 0.0], [(0.0, 0.08), (0.0, 0.1), (0.0, 0.05)]),
    ("spine3", "spine2", [0.0, 0.1, 0.0], [(0.0, 0.08), (0.0, 0.1), (0.0, 0.05)]),
    ("spine4", "spine3", [0.0, 0.1, 0.0], [(0.0, 0.08), (0.0, 0.1), (0.0, 0.05)]),
    ("neck", "spine4", [0.0, 0.12, 0.0], [(0.0, 0.15), (0.0, 0.2), (0.0, 0.08)]),
    ("head", "neck", [0.0, 0.1, 0.03], [(0.0, 0.2), (0.0, 0.4), (0.0, 0.1)]),
    ("head_top", "head", [0.0, 0.12, 0.0], [(0.0, 0.0); 3]),
    ("left_clavicle", "spine4", [0.03, 0.08, 0.0], [(0.0, 0.0), (0.0, 0.1), (0.0, 0.12)]),
    ("left_shoulder", "left_clavicle", [0.15, 0.0, 0.0], [(0.0, 0.6), (0.0, 0.5), (-1.25, 0.45)]),
    ("left_elbow", "left_shoulder", [0.28, 0.0, 0.0], [(0.0, 0.3), (0.7, 0.6), (0.0, 0.0)]),
    ("left_wrist", "left_elbow", [0.25, 0.0, 0.0], [(0.0, 0.3), (0.0, 0.2), (0.0, 0.3)]),
    ("left_hand", "left_wrist", [0.08, 0.0, 0.0], [(0.0, 0.0); 3]),
    ("left_hip", "pelvis", [0.1, -0.03, 0.0], [(0.0, 0.5), (0.0, 0.2), (0.05, 0.12)]),
    ("left_knee", "left_hip", [0.0, -0.42, 0.0], [(0.45, 0.4), (0.0, 0.0), (0.0, 0.0)]),
    ("left_ankle", "left_knee", [0.0, -0.4, 0.0], [(0.0, 0.25), (0.0, 0.1), (0.0, 0.1)]),
    ("left_foot", "left_ankle", [0.0, -0.06, 0.08], [(0.0, 0.1), (0.0, 0.0), (0.0, 0.0)]),
    ("left_toe", "left_foot", [0.0, -0.01, 0.08], [(0.0, 0.0); 3]),
];

fn rig() -> Vec<RigJoint> {
    let mut joints: Vec<RigJoint> = Vec::new();
    let find = |joints: &[RigJoint], name: &str| joints.iter().position(|j| j.name == name);
    for &(name, parent, offset, dofs) in HALF_RIG {
        let parent = (!parent.is_empty()).then(|| find(&joints, parent).expect("rig parent listed first"));
        joints.push(RigJoint {
            name,
            parent,
            offset,
            dofs,
        });
    }
    for &(name, parent, offset, dofs) in HALF_RIG {
        let Some(side) = name.strip_prefix("left_") else {
            continue;
        };
        let mirror = |n: &str| match n.strip_prefix("left_") {
            Some(s) => format!("right_{s}"),
            None => n.to_string(),
        };
        let parent = find(&joints, &mirror(parent)).expect("rig parent listed first");
        let name: &'static str = match side {
            "clavicle" => "right_clavicle",
            "shoulder" => "right_shoulder",
            "elbow" => "right_elbow",
            "wrist" => "right_wrist",
            "hand" => "right_hand",
            "hip" => "right_hip",
            "knee" => "right_knee",
            "ankle" => "right_ankle",
            "foot" => "right_foot",
            "toe" => "right_toe",
            _ => unreachable!("unmirrored rig joint {name}"),
        };
        // Mirroring across x = 0 keeps x rotations and flips y and z.
        joints.push(RigJoint {
            name,
            parent: Some(parent),
            offset: [-offset[0], offset[1], offset[2]],
            dofs: [dofs[0], (-dofs[1].0, dofs[1].1), (-dofs[2].0, dofs[2].1)],
        });
    }
    joints
}

fn draw_track(rng: &mut impl Rng, p: &MotionParams, mean: f64, range: f64) -> Vec<f64> {
    let terms: Vec<(f64, f64, f64)> = (0..p.components)
        .map(|_| {
            let a = rng.random::<f64>() * range / p.components as f64;
            let nu = p.min_frequency + rng.random::<f64>() * (p.max_frequency - p.min_frequency);
            let phi = rng.random::<f64>() * 2.0 * PI;
            (a, nu, phi)
        })
        .collect();
    (0..p.frames)
        .map(|f| {
            let t = f as f64 / p.fps;
            mean + terms
                .iter()
                .map(|&(a, nu, phi)| a * (2.0 * PI * nu * t + phi).sin())
                .sum::<f64>()
        })
        .collect()
}

/// Every scalar driving channel of one generated sequence, each `frames`
/// long: three rotation angles per rig joint in rig order, then root x, y,
/// z offsets and heading.
pub fn angle_tracks(params: &MotionParams, seed: u64) -> Result<Vec<Vec<f64>>> {
    params.validate()?;
    let mut rng = crate::rng::stream(seed, &[0x6d6f_7469_6f6e]);
    let s = params.amplitude_scale;
    let mut tracks = Vec::new();
    for joint in rig() {
        for (mean, range) in joint.dofs {
            tracks.push(draw_track(&mut rng, params, s * mean, s * range));
        }
    }
    for range in [params.root_travel, params.root_bob, params.root_travel, params.heading] {
        tracks.push(draw_track(&mut rng, params, 0.0, range));
    }
    Ok(tracks)
}

type Mat3 = [[f64; 3]; 3];

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn mat_vec(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}

/// `Rz(c) · Ry(b) · Rx(a)`.
fn euler(a: f64, b: f64, c: f64) -> Mat3 {
    let (sa, ca) = a.sin_cos();
    let (sb, cb) = b.sin_cos();
    let (sc, cc) = c.sin_cos();
    let rx = [[1.0, 0.0, 0.0], [0.0, ca, -sa], [0.0, sa, ca]];
    let ry = [[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]];
    let rz = [[cc, -sc, 0.0], [sc, cc, 0.0], [0.0, 0.0, 1.0]];
    mat_mul(&rz, &mat_mul(&ry, &rx))
}

/// A random rigid-skeleton motion in the bundled 28-joint topology.
pub fn synth_motion(params: &MotionParams, seed: u64) -> Result<Pose3DSequence> {
    let tracks = angle_tracks(params, seed)?;
    let rig = rig();
    let topo = SkeletonTopology::mpi_inf_3dhp_28();
    let slot: Vec<usize> = rig
        .iter()
        .map(|j| topo.joint_id(j.name).expect("rig joints exist in the bundled topology"))
        .collect();

    let mut rng = crate::rng::stream(seed, &[0x626f_6e65]);
    let mut bone_scale = vec![params.body_scale; rig.len()];
    for (i, joint) in rig.iter().enumerate() {
        // Mirrored bones share their left counterpart's length.
        let left = joint.name.replace("right_", "left_");
        bone_scale[i] = match rig.iter().position(|j| j.name == left) {
            Some(k) if k < i => bone_scale[k],
            _ => params.body_scale * (1.0 + params.bone_jitter * (2.0 * rng.random::<f64>() - 1.0)),
        };
    }

    let root_base = 3 * rig.len();
    let mut positions = vec![[0.0; 3]; params.frames * topo.joint_count()];
    let mut global: Vec<Mat3> = vec![[[0.0; 3]; 3]; rig.len()];
    let mut world: Vec<[f64; 3]> = vec![[0.0; 3]; rig.len()];
    for f in 0..params.frames {
        let root = [
            tracks[root_base][f],
            ROOT_HEIGHT * params.body_scale + tracks[root_base + 1][f],
            tracks[root_base + 2][f],
        ];
        let heading = euler(0.0, tracks[root_base + 3][f], 0.0);
        for (i, joint) in rig.iter().enumerate() {
            let local = euler(tracks[3 * i][f], tracks[3 * i + 1][f], tracks[3 * i + 2][f]);
            match joint.parent {
                None => {
                    global[i] = mat_mul(&heading, &local);
                    world[i] = root;
                }
                Some(p) => {
                    let o = joint.offset.map(|v| v * bone_scale[i]);
                    let d = mat_vec(&global[p], o);
                    world[i] = [world[p][0] + d[0], world[p][1] + d[1], world[p][2] + d[2]];
                    global[i] = mat_mul(&global[p], &local);
                }
            }
        }
        for (i, &s) in slot.iter().enumerate() {
            positions[f * topo.joint_count() + s] = world[i];
        }
    }
    let mut seq = Pose3DSequence::new(params.frames, topo.joint_count(), positions)?;
    seq.fps = Some(params.fps);
    Ok(seq)
}
