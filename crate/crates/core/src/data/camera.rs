use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequence::PoseSequence;

use super::Pose3DSequence;

pub type Mat3 = [[f64; 3]; 3];

/// Pinhole camera. `rotation` maps world directions into the camera frame
/// (x right, y up, z forward); `position` is the optical center in world
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub focal_length: f64,
    pub center: [f64; 2],
    pub rotation: Mat3,
    pub position: [f64; 3],
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn unit(a: [f64; 3]) -> [f64; 3] {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

fn mat_vec(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

impl CameraModel {
    /// Camera at `position` looking at `target` with world +y as up, then
    /// rolled by `roll` radians about its optical axis.
    pub fn look_at(position: [f64; 3], target: [f64; 3], roll: f64, focal_length: f64) -> Result<Self> {
        let forward = sub(target, position);
        let horizontal = forward[0].hypot(forward[2]);
        if horizontal < 1e-9 * (1.0 + forward[1].abs()) {
            return Err(Error::Degenerate("camera looks straight up or down".into()));
        }
        let z = unit(forward);
        let x = unit(cross([0.0, 1.0, 0.0], z));
        let y = cross(z, x);
        let (s, c) = roll.sin_cos();
        let xr = [c * x[0] + s * y[0], c * x[1] + s * y[1], c * x[2] + s * y[2]];
        let yr = [-s * x[0] + c * y[0], -s * x[1] + c * y[1], -s * x[2] + c * y[2]];
        let cam = Self {
            focal_length,
            center: [0.0, 0.0],
            rotation: [xr, yr, z],
            position,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal_length > 0.0) {
            return Err(Error::Config(format!("focal length {} must be positive", self.focal_length)));
        }
        let r = &self.rotation;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[i][k] * r[j][k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > 1e-9 {
                    return Err(Error::Config("camera rotation is not orthonormal".into()));
                }
            }
        }
        Ok(())
    }

    /// Camera-frame coordinates of a world point.
    pub fn to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        mat_vec(&self.rotation, sub(p, self.position))
    }
}

/// Perspective projection of every joint; fails if any joint is not in
/// front of the camera.
pub fn project(seq: &Pose3DSequence, cam: &CameraModel) -> Result<PoseSequence> {
    let mut out = Vec::with_capacity(seq.positions.len());
    for (i, &p) in seq.positions.iter().enumerate() {
        let [x, y, z] = cam.to_camera(p);
        if !(z > 0.0) {
            return Err(Error::BehindCamera {
                frame: i / seq.joints,
                joint: i % seq.joints,
                depth: z,
            });
        }
        out.push([
            cam.focal_length * x / z + cam.center[0],
            cam.focal_length * y / z + cam.center[1],
        ]);
    }
    let mut projected = PoseSequence::full(seq.frames, seq.joints, out)?;
    projected.fps = seq.fps;
    Ok(projected)
}

/// Sampling bands for random viewpoints. Angles in degrees, distance in
/// world units from the subject centroid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraRanges {
    pub azimuth: [f64; 2],
    pub elevation: [f64; 2],
    pub distance: [f64; 2],
    pub roll: [f64; 2],
    pub focal_length: f64,
}

impl Default for CameraRanges {
    fn default() -> Self {
        Self {
            azimuth: [0.0, 360.0],
            elevation: [-15.0, 30.0],
            distance: [4.0, 7.0],
            roll: [0.0, 0.0],
            focal_length: 1.0,
        }
    }
}

impl CameraRanges {
    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [
            ("azimuth", self.azimuth),
            ("elevation", self.elevation),
            ("distance", self.distance),
            ("roll", self.roll),
        ] {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Config(format!("empty {name} range [{lo}, {hi}]")));
            }
        }
        if self.elevation[0] <= -90.0 || self.elevation[1] >= 90.0 {
            return Err(Error::Config("elevation must lie strictly within (-90, 90)".into()));
        }
        if !(self.distance[0] > 0.0) || !(self.focal_length > 0.0) {
            return Err(Error::Config("distance and focal length must be positive".into()));
        }
        Ok(())
    }
}

fn uniform(rng: &mut impl Rng, [lo, hi]: [f64; 2], half_open: bool) -> f64 {
    if lo == hi {
        lo
    } else if half_open {
        rng.random_range(lo..hi)
    } else {
        rng.random_range(lo..=hi)
    }
}

/// A camera aimed at `target`, drawn deterministically from `seed`.
///
/// Returns the camera together with its (azimuth, elevation) in degrees.
pub fn sample_camera(seed: u64, ranges: &CameraRanges, target: [f64; 3]) -> Result<(CameraModel, [f64; 2])> {
    ranges.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let azimuth = uniform(&mut rng, ranges.azimuth, true);
    let elevation = uniform(&mut rng, ranges.elevation, false);
    let distance = uniform(&mut rng, ranges.distance, false);
    let roll = uniform(&mut rng, ranges.roll, false);
    let (az, el) = (azimuth.to_radians(), elevation.to_radians());
    let position = [
        target[0] + distance * el.cos() * az.sin(),
        target[1] + distance * el.sin(),
        target[2] + distance * el.cos() * az.cos(),
    ];
    let cam = CameraModel::look_at(position, target, roll.to_radians(), ranges.focal_length)?;
    Ok((cam, [azimuth, elevation]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_point(p: [f64; 3]) -> Pose3DSequence {
        Pose3DSequence {
            frames: 1,
            joints: 1,
            positions: vec![p],
            fps: None,
        }
    }

    #[test]
    fn optical_axis_projects_to_center() {
        let mut cam = CameraModel::look_at([0.0, 0.0, -5.0], [0.0, 0.0, 0.0], 0.3, 2.0).unwrap();
        cam.center = [0.25, -0.5];
        for depth in [0.5, 5.0, 50.0] {
            let s = project(&single_point([0.0, 0.0, depth - 5.0]), &cam).unwrap();
            let p = s.position(0, 0);
            assert!((p[0] - 0.25).abs() < 1e-12 && (p[1] + 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn focal_length_scales_offsets() {
        let a = CameraModel::look_at([1.0, 2.0, -5.0], [0.0, 1.0, 0.0], 0.0, 1.0).unwrap();
        let b = CameraModel { focal_length: 2.0, ..a };
        let seq = single_point([0.3, 1.4, 0.2]);
        let (pa, pb) = (project(&seq, &a).unwrap(), project(&seq, &b).unwrap());
        for c in 0..2 {
            assert!((pb.position(0, 0)[c] - 2.0 * pa.position(0, 0)[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn behind_camera_is_rejected() {
        let cam = CameraModel::look_at([0.0, 0.0, -5.0], [0.0, 0.0, 0.0], 0.0, 1.0).unwrap();
        let err = project(&single_point([0.0, 0.0, -6.0]), &cam).unwrap_err();
        assert!(matches!(err, Error::BehindCamera { .. }));
    }

    #[test]
    fn sampling_is_deterministic() {
        let r = CameraRanges::default();
        assert_eq!(
            sample_camera(7, &r, [0.0, 1.0, 0.0]).unwrap(),
            sample_camera(7, &r, [0.0, 1.0, 0.0]).unwrap()
        );
    }

    #[test]
    fn zero_elevation_band() {
        let r = CameraRanges {
            elevation: [0.0, 0.0],
            ..Default::default()
        };
        for seed in 0..20 {
            let (cam, [_, el]) = sample_camera(seed, &r, [0.0, 1.0, 0.0]).unwrap();
            assert_eq!(el, 0.0);
            assert!((cam.position[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_range_is_rejected() {
        let r = CameraRanges {
            distance: [5.0, 4.0],
            ..Default::default()
        };
        assert!(matches!(sample_camera(0, &r, [0.0; 3]), Err(Error::Config(_))));
    }
}
