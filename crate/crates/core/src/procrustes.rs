//! Ordinary Procrustes alignment of 2D point sets.
//!
//! In 2D the optimal rotation has a closed form: after removing centroids,
//! the angle is `atan2(Σ a×b, Σ a·b)` and the least-squares scale is
//! `√((Σ a·b)² + (Σ a×b)²) / Σ|a|²`. The rotation is proper by
//! construction, so mirror images are never produced.

use crate::error::{Error, Result};
use crate::sequence::PoseSequence;
use crate::transform::{Point, SimilarityTransform2D};

/// Similarity transform minimizing `Σ |s·R·src_i + t − dst_i|²` over the
/// given correspondences.
pub fn align_points(src: &[Point], dst: &[Point]) -> Result<SimilarityTransform2D> {
    assert_eq!(src.len(), dst.len(), "correspondence lists differ in length");
    if src.len() < 2 {
        return Err(Error::Degenerate(format!(
            "procrustes needs at least 2 correspondences, got {}",
            src.len()
        )));
    }
    let n = src.len() as f64;
    let mean = |pts: &[Point]| {
        let s = pts.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0], a[1] + p[1]]);
        [s[0] / n, s[1] / n]
    };
    let (ms, md) = (mean(src), mean(dst));
    let (mut dot, mut cross, mut norm_src) = (0.0, 0.0, 0.0);
    for (a, b) in src.iter().zip(dst) {
        let a = [a[0] - ms[0], a[1] - ms[1]];
        let b = [b[0] - md[0], b[1] - md[1]];
        dot += a[0] * b[0] + a[1] * b[1];
        cross += a[0] * b[1] - a[1] * b[0];
        norm_src += a[0] * a[0] + a[1] * a[1];
    }
    if norm_src <= f64::EPSILON * f64::EPSILON * n || !norm_src.is_finite() {
        return Err(Error::Degenerate("source points are coincident".into()));
    }
    let scale = dot.hypot(cross) / norm_src;
    if scale <= 0.0 || !scale.is_finite() {
        return Err(Error::Degenerate("target points are coincident".into()));
    }
    let angle = cross.atan2(dot);
    let mut t = SimilarityTransform2D::from_angle(scale, angle, [0.0, 0.0]);
    let moved = t.apply(ms);
    t.translation = [md[0] - moved[0], md[1] - moved[1]];
    Ok(t)
}

/// Aligns `source` onto `target`, pooling every frame's entries where `mask`
/// is true into one correspondence set.
pub fn procrustes_align(
    source: &PoseSequence,
    target: &PoseSequence,
    mask: &[bool],
) -> Result<SimilarityTransform2D> {
    if source.frames() != target.frames() || source.joints() != target.joints() {
        return Err(Error::Shape(format!(
            "procrustes between {}×{} and {}×{} sequences",
            source.frames(),
            source.joints(),
            target.frames(),
            target.joints()
        )));
    }
    if mask.len() != source.positions().len() {
        return Err(Error::Shape("procrustes mask length mismatch".into()));
    }
    let (src, dst): (Vec<Point>, Vec<Point>) = source
        .positions()
        .iter()
        .zip(target.positions())
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((a, b), _)| (*a, *b))
        .unzip();
    align_points(&src, &dst)
}

/// Masked sum of squared distances between `t(source)` and `target`.
pub fn masked_sse(t: &SimilarityTransform2D, source: &[Point], target: &[Point], mask: &[bool]) -> f64 {
    source
        .iter()
        .zip(target)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((a, b), _)| {
            let p = t.apply(*a);
            (p[0] - b[0]).powi(2) + (p[1] - b[1]).powi(2)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud() -> Vec<Point> {
        (0..13)
            .map(|i| {
                let t = i as f64;
                [(t * 1.3).sin() * 2.0 + t * 0.1, (t * 0.7).cos() - 0.3 * t]
            })
            .collect()
    }

    #[test]
    fn identity_for_equal_sets() {
        let pts = cloud();
        let t = align_points(&pts, &pts).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-9);
        assert!(t.angle().abs() < 1e-9);
        assert!(t.translation[0].abs() < 1e-9 && t.translation[1].abs() < 1e-9);
    }

    #[test]
    fn recovers_known_similarity() {
        let src = cloud();
        let truth = SimilarityTransform2D::from_angle(2.5, 30f64.to_radians(), [3.0, -1.0]);
        let dst: Vec<Point> = src.iter().map(|p| truth.apply(*p)).collect();
        let t = align_points(&src, &dst).unwrap();
        assert!((t.scale - 2.5).abs() < 1e-6);
        assert!((t.angle() - 30f64.to_radians()).abs() < 1e-6);
        assert!((t.translation[0] - 3.0).abs() < 1e-6);
        assert!((t.translation[1] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn never_reflects() {
        let src = cloud();
        let mirrored: Vec<Point> = src.iter().map(|p| [-p[0], p[1]]).collect();
        let t = align_points(&src, &mirrored).unwrap();
        let r = t.rotation;
        let det = r[0][0] * r[1][1] - r[0][1] * r[1][0];
        assert!((det - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(align_points(&[[0.0, 0.0]], &[[1.0, 1.0]]).is_err());
        assert!(align_points(&[[1.0, 1.0]; 4], &cloud()[..4]).is_err());
        assert!(align_points(&cloud()[..4], &[[2.0, 2.0]; 4]).is_err());
    }

    #[test]
    fn masked_entries_are_ignored() {
        let src = PoseSequence::full(2, 3, cloud()[..6].to_vec()).unwrap();
        let truth = SimilarityTransform2D::from_angle(0.5, -1.0, [0.2, 0.1]);
        let mut dst_pts: Vec<Point> = src.positions().iter().map(|p| truth.apply(*p)).collect();
        dst_pts[4] = [100.0, -100.0];
        let dst = PoseSequence::full(2, 3, dst_pts).unwrap();
        let mask = vec![true, true, true, true, false, true];
        let t = procrustes_align(&src, &dst, &mask).unwrap();
        assert!((t.scale - 0.5).abs() < 1e-9 && (t.angle() + 1.0).abs() < 1e-9);
    }
}
