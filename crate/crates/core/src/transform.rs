use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// `p ↦ linear · p + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform2D {
    pub linear: [[f64; 2]; 2],
    pub offset: [f64; 2],
}

impl Default for AffineTransform2D {
    fn default() -> Self {
        Self::identity()
    }
}

impl AffineTransform2D {
    pub fn identity() -> Self {
        Self {
            linear: [[1.0, 0.0], [0.0, 1.0]],
            offset: [0.0, 0.0],
        }
    }

    pub fn new(linear: [[f64; 2]; 2], offset: [f64; 2]) -> Result<Self> {
        let t = Self { linear, offset };
        if t.det().abs() <= 1e-12 || !t.det().is_finite() {
            return Err(Error::Degenerate(format!("affine transform is singular: {linear:?}")));
        }
        Ok(t)
    }

    /// Uniform scale about the origin followed by a translation.
    pub fn scale_translate(scale: f64, offset: [f64; 2]) -> Result<Self> {
        Self::new([[scale, 0.0], [0.0, scale]], offset)
    }

    pub fn det(&self) -> f64 {
        self.linear[0][0] * self.linear[1][1] - self.linear[0][1] * self.linear[1][0]
    }

    pub fn apply(&self, p: Point) -> Point {
        let l = &self.linear;
        [
            l[0][0] * p[0] + l[0][1] * p[1] + self.offset[0],
            l[1][0] * p[0] + l[1][1] * p[1] + self.offset[1],
        ]
    }

    /// `self ∘ inner`: applies `inner` first.
    pub fn compose(&self, inner: &AffineTransform2D) -> AffineTransform2D {
        let a = &self.linear;
        let b = &inner.linear;
        let mut linear = [[0.0; 2]; 2];
        for (i, row) in linear.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        AffineTransform2D {
            linear,
            offset: self.apply(inner.offset),
        }
    }

    pub fn inverse(&self) -> AffineTransform2D {
        let d = self.det();
        let l = &self.linear;
        let inv = [[l[1][1] / d, -l[0][1] / d], [-l[1][0] / d, l[0][0] / d]];
        let o = self.offset;
        AffineTransform2D {
            linear: inv,
            offset: [
                -(inv[0][0] * o[0] + inv[0][1] * o[1]),
                -(inv[1][0] * o[0] + inv[1][1] * o[1]),
            ],
        }
    }
}

/// Scale, proper rotation and translation: `p ↦ scale · R · p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform2D {
    pub scale: f64,
    pub rotation: [[f64; 2]; 2],
    pub translation: [f64; 2],
}

impl Default for SimilarityTransform2D {
    fn default() -> Self {
        Self::identity()
    }
}

impl SimilarityTransform2D {
    pub fn identity() -> Self {
        Self::from_angle(1.0, 0.0, [0.0, 0.0])
    }

    pub fn from_angle(scale: f64, radians: f64, translation: [f64; 2]) -> Self {
        let (s, c) = radians.sin_cos();
        Self {
            scale,
            rotation: [[c, -s], [s, c]],
            translation,
        }
    }

    pub fn angle(&self) -> f64 {
        self.rotation[1][0].atan2(self.rotation[0][0])
    }

    pub fn apply(&self, p: Point) -> Point {
        let r = &self.rotation;
        [
            self.scale * (r[0][0] * p[0] + r[0][1] * p[1]) + self.translation[0],
            self.scale * (r[1][0] * p[0] + r[1][1] * p[1]) + self.translation[1],
        ]
    }

    /// The linear part `scale · R`.
    pub fn linear(&self) -> [[f64; 2]; 2] {
        let r = &self.rotation;
        [
            [self.scale * r[0][0], self.scale * r[0][1]],
            [self.scale * r[1][0], self.scale * r[1][1]],
        ]
    }

    pub fn to_affine(&self) -> AffineTransform2D {
        AffineTransform2D {
            linear: self.linear(),
            offset: self.translation,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_undoes_transform() {
        let t = AffineTransform2D::new([[2.0, 0.5], [-0.3, 1.5]], [3.0, -4.0]).unwrap();
        let p = [0.7, -1.2];
        let q = t.inverse().apply(t.apply(p));
        assert!((q[0] - p[0]).abs() < 1e-12 && (q[1] - p[1]).abs() < 1e-12);
    }

    #[test]
    fn compose_applies_inner_first() {
        let a = AffineTransform2D::scale_translate(2.0, [1.0, 0.0]).unwrap();
        let b = AffineTransform2D::scale_translate(1.0, [0.0, 3.0]).unwrap();
        assert_eq!(a.compose(&b).apply([1.0, 1.0]), a.apply(b.apply([1.0, 1.0])));
    }

    #[test]
    fn singular_affine_rejected() {
        assert!(AffineTransform2D::new([[1.0, 2.0], [2.0, 4.0]], [0.0, 0.0]).is_err());
    }

    #[test]
    fn rotation_is_orthonormal() {
        let t = SimilarityTransform2D::from_angle(1.3, 2.1, [0.0, 0.0]);
        let r = t.rotation;
        let rtr00 = r[0][0] * r[0][0] + r[1][0] * r[1][0];
        let rtr01 = r[0][0] * r[0][1] + r[1][0] * r[1][1];
        assert!((rtr00 - 1.0).abs() < 1e-12 && rtr01.abs() < 1e-12);
        assert!((t.angle() - 2.1).abs() < 1e-12);
    }
}
