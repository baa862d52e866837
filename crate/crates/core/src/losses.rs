//! Training and inference objectives.
//!
//! Pose tensors are `[N, F, J, 2]`, masks `[N, F, J]` with 1.0 for an
//! available joint. Per-sample variants return `[N]`; each sample is
//! averaged over its own available entries.

use std::rc::Rc;
use std::sync::Arc;

use jumps_autograd::{grad, SparseMap, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequence::PoseSequence;
use crate::transform::Point;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_gp: f64,
    pub lambda_p: f64,
    pub lambda_s: f64,
    pub lambda_z: f64,
    pub lambda_m: f64,
    pub gamma_p: f64,
    pub gamma_s: f64,
    pub gamma_d: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_gp: 10.0,
            lambda_p: 200.0,
            lambda_s: 100.0,
            lambda_z: 2.0,
            lambda_m: 1.0,
            gamma_p: 10.0,
            gamma_s: 5.0,
            gamma_d: 15.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda_gp,
            self.lambda_p,
            self.lambda_s,
            self.lambda_z,
            self.lambda_m,
            self.gamma_p,
            self.gamma_s,
            self.gamma_d,
        ];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn check_pair(x: &PoseSequence, y: &PoseSequence, mask: &[bool]) -> Result<()> {
    if x.frames() != y.frames() || x.joints() != y.joints() || mask.len() != x.positions().len() {
        return Err(Error::Shape("sequences and mask differ in shape".into()));
    }
    Ok(())
}

/// Mean Euclidean distance over masked (frame, joint) entries.
pub fn mpjpe(x: &PoseSequence, y: &PoseSequence, mask: &[bool]) -> Result<f64> {
    check_pair(x, y, mask)?;
    let (sum, n) = x
        .positions()
        .iter()
        .zip(y.positions())
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, n), ((a, b), _)| (s + dist(*a, *b), n + 1));
    if n == 0 {
        return Err(Error::EmptyMask("mpjpe needs at least one masked entry"));
    }
    Ok(sum / n as f64)
}

/// Mean Euclidean distance between velocities. The velocity of joint `j`
/// at frame `f ≥ 1` counts only when `j` is masked at both `f` and `f − 1`.
pub fn mpjve(x: &PoseSequence, y: &PoseSequence, mask: &[bool]) -> Result<f64> {
    check_pair(x, y, mask)?;
    if x.frames() < 2 {
        return Err(Error::Shape("mpjve needs at least 2 frames".into()));
    }
    let j = x.joints();
    let (mut sum, mut n) = (0.0, 0usize);
    for f in 1..x.frames() {
        for k in 0..j {
            let (cur, prev) = (f * j + k, (f - 1) * j + k);
            if mask[cur] && mask[prev] {
                let (xp, xc) = (x.positions()[prev], x.positions()[cur]);
                let (yp, yc) = (y.positions()[prev], y.positions()[cur]);
                sum += dist([xc[0] - xp[0], xc[1] - xp[1]], [yc[0] - yp[0], yc[1] - yp[1]]);
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask("mpjve needs a joint masked at two consecutive frames"));
    }
    Ok(sum / n as f64)
}

fn per_sample_mean(values: &Var, weights: &Tensor) -> Result<Var> {
    let n = weights.shape()[0];
    let per = weights.len() / n;
    let mut inv = Vec::with_capacity(n);
    for c in weights.data().chunks(per) {
        let count: f64 = c.iter().sum();
        if count == 0.0 {
            return Err(Error::EmptyMask("a sample has no masked entries"));
        }
        inv.push(1.0 / count);
    }
    Ok(values
        .mul_const(Rc::new(weights.clone()))
        .sum_last(per)
        .mul_const(Rc::new(Tensor::new([n], inv))))
}

/// Per-sample masked MPJPE of `x_hat` against the constant `x`.
pub fn mpjpe_per_sample(x_hat: &Var, x: &Tensor, mask: &Tensor) -> Result<Var> {
    let err = x_hat.add_const(&x.map(|v| -v)).norm_last(2);
    per_sample_mean(&err, mask)
}

/// `[N, F, J]` mask of velocity pairs: joint available at `f` and `f − 1`.
pub fn velocity_mask(mask: &Tensor) -> Tensor {
    let [n, f, j] = *mask.shape() else {
        panic!("mask must be [N, F, J]");
    };
    let m = mask.data();
    Tensor::from_fn([n, f - 1, j], |i| {
        let (s, r) = (i / ((f - 1) * j), i % ((f - 1) * j));
        let (fr, k) = (r / j + 1, r % j);
        m[(s * f + fr) * j + k] * m[(s * f + fr - 1) * j + k]
    })
}

/// Per-sample masked MPJVE; `velocity` maps `[F, J, 2]` poses to
/// `[F − 1, J, 2]` differences.
pub fn mpjve_per_sample(x_hat: &Var, x: &Tensor, mask: &Tensor, velocity: &Arc<SparseMap>) -> Result<Var> {
    let vx = velocity.apply(x, false);
    let err = x_hat.sparse(velocity).add_const(&vx.map(|v| -v)).norm_last(2);
    per_sample_mean(&err, &velocity_mask(mask))
}

/// `λ_p · MPJPE + λ_s · MPJVE` over full-mask batches, averaged over samples.
pub fn reconstruction_loss(x: &Tensor, x_hat: &Var, velocity: &Arc<SparseMap>, w: &LossWeights) -> Result<Var> {
    let s = x.shape();
    let mask = Tensor::ones(&s[..3]);
    let p = mpjpe_per_sample(x_hat, x, &mask)?.mean();
    let v = mpjve_per_sample(x_hat, x, &mask, velocity)?.mean();
    Ok(p.scale(w.lambda_p).add(&v.scale(w.lambda_s)))
}

/// `λ_z` times the mean squared difference between `z` and `z_hat`.
pub fn backward_reconstruction_loss(z: &Tensor, z_hat: &Var, lambda_z: f64) -> Result<Var> {
    if z.shape() != z_hat.shape() {
        return Err(Error::Shape(format!("latent shapes {:?} and {:?}", z.shape(), z_hat.shape())));
    }
    Ok(z_hat.add_const(&z.map(|v| -v)).square().mean().scale(lambda_z))
}

/// `−λ_m · mean D(x̂)` given the critic scores of reconstructions.
pub fn mixed_loss(scores: &Var, lambda_m: f64) -> Var {
    scores.mean().scale(-lambda_m)
}

/// `−mean D(G(z))`.
pub fn generator_loss(fake_scores: &Var) -> Var {
    fake_scores.mean().neg()
}

/// `x̃ = u·real + (1 − u)·fake` with one `u` per sample.
pub fn interpolate(real: &Tensor, fake: &Tensor, u: &[f64]) -> Tensor {
    let per = real.len() / u.len();
    Tensor::from_fn(real.shape().to_vec(), |i| {
        let t = u[i / per];
        t * real.data()[i] + (1.0 - t) * fake.data()[i]
    })
}

/// `mean (‖∇_x̃ D(x̃)‖₂ − 1)²`, differentiable with respect to the critic's
/// parameters.
pub fn gradient_penalty(critic: &dyn Fn(&Var) -> Result<Var>, interpolated: &Tensor) -> Result<Var> {
    let x = Var::param(interpolated.clone());
    let scores = critic(&x)?;
    let g = grad(&scores.sum(), &[&x], true).remove(0);
    let n = interpolated.shape()[0];
    let per = interpolated.len() / n;
    Ok(g.reshape(&[n, per]).norm_last(per).add_scalar(-1.0).square().mean())
}

/// `(L_G, L_D)` of the gradient-penalized Wasserstein objective.
///
/// `real` and `fake` are critic inputs (positions with velocities); `fake`
/// may carry a graph back to the generator. The penalty is evaluated at
/// `interpolate(real, fake, u)`.
pub fn adversarial_losses(
    critic: &dyn Fn(&Var) -> Result<Var>,
    real: &Tensor,
    fake: &Var,
    u: &[f64],
    lambda_gp: f64,
) -> Result<(Var, Var)> {
    if real.shape() != fake.shape() || u.len() != real.shape()[0] {
        return Err(Error::Shape("real, fake and u disagree on the batch".into()));
    }
    let d_real = critic(&Var::constant(real.clone()))?;
    let d_fake = critic(fake)?;
    let gp = gradient_penalty(critic, &interpolate(real, fake.value(), u))?;
    let l_g = generator_loss(&d_fake);
    let l_d = d_fake.mean().sub(&d_real.mean()).add(&gp.scale(lambda_gp));
    Ok((l_g, l_d))
}

/// Per-candidate `γ_p·MPJPE + γ_s·MPJVE − γ_d·D(x̂)` on masked joints.
pub fn inpainting_loss(
    x: &Tensor,
    mask: &Tensor,
    x_hat: &Var,
    scores: &Var,
    velocity: &Arc<SparseMap>,
    w: &LossWeights,
) -> Result<Var> {
    let contextual = contextual_loss(x, mask, x_hat, velocity, w)?;
    Ok(contextual.sub(&scores.scale(w.gamma_d)))
}

/// Per-candidate `γ_p·MPJPE + γ_s·MPJVE` on masked joints. The velocity term
/// is dropped when no joint is masked at two consecutive frames.
pub fn contextual_loss(
    x: &Tensor,
    mask: &Tensor,
    x_hat: &Var,
    velocity: &Arc<SparseMap>,
    w: &LossWeights,
) -> Result<Var> {
    let p = mpjpe_per_sample(x_hat, x, mask)?.scale(w.gamma_p);
    match mpjve_per_sample(x_hat, x, mask, velocity) {
        Ok(v) if w.gamma_s != 0.0 => Ok(p.add(&v.scale(w.gamma_s))),
        Ok(_) | Err(Error::EmptyMask(_)) => Ok(p),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_seq(rng: &mut impl Rng, f: usize, j: usize) -> PoseSequence {
        PoseSequence::from_fn(f, j, |_, _| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).unwrap()
    }

    #[test]
    fn three_four_five() {
        let x = PoseSequence::full(1, 1, vec![[0.0, 0.0]]).unwrap();
        let y = PoseSequence::full(1, 1, vec![[3.0, 4.0]]).unwrap();
        assert_eq!(mpjpe(&x, &y, &[true]).unwrap(), 5.0);
        assert!(matches!(mpjpe(&x, &y, &[false]), Err(Error::EmptyMask(_))));
    }

    #[test]
    fn constant_offset_has_zero_velocity_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = random_seq(&mut rng, 6, 3);
        let y = PoseSequence::from_fn(6, 3, |f, j| {
            let p = x.position(f, j);
            [p[0] + j as f64, p[1] - 2.0]
        })
        .unwrap();
        assert!(mpjve(&x, &y, &vec![true; 18]).unwrap().abs() < 1e-15);
        assert_eq!(mpjve(&x, &x, &vec![true; 18]).unwrap(), 0.0);
    }

    #[test]
    fn weights_reject_negative() {
        let w = LossWeights {
            lambda_m: -1.0,
            ..Default::default()
        };
        assert!(w.validate().is_err());
    }

    #[test]
    fn velocity_mask_requires_both_frames() {
        let m = Tensor::new([1, 3, 2], vec![1.0, 1.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(velocity_mask(&m).data(), &[0.0, 1.0, 0.0, 1.0]);
    }
}
