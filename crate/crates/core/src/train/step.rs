use jumps_autograd::{grad, no_grad, Tensor, Var};
use rand::Rng;

use super::adam::AdamState;
use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::grid::GridCodec;
use crate::losses::{
    backward_reconstruction_loss, generator_loss, gradient_penalty, interpolate, mixed_loss,
    reconstruction_loss,
};
use crate::net::{sample_latent, Architecture, NormCtx, ParameterSet, Subnet};
use crate::rng::stream;

/// Loss values of one training step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepMetrics {
    pub l_d: f64,
    pub l_g: f64,
    pub l_rec: f64,
    pub l_rec_backward: f64,
    pub l_mix: f64,
    /// `mean D(real) − mean D(fake)` of the last critic update.
    pub wasserstein: f64,
}

/// Everything needed to continue training bit-identically.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub step: u64,
    pub epoch: u64,
    pub params: ParameterSet,
    /// Moments for encoder, generator and critic, in that order.
    pub adam: [AdamState; 3],
    pub last: Option<StepMetrics>,
}

const STEP_STREAM: u64 = 1;

fn adam_index(s: Subnet) -> usize {
    match s {
        Subnet::Encoder => 0,
        Subnet::Generator => 1,
        Subnet::Critic => 2,
    }
}

fn finite(name: &str, v: &Var, step: u64) -> Result<f64> {
    let x = v.item();
    if !x.is_finite() {
        return Err(Error::NonFinite(format!("{name} = {x} at step {step}")));
    }
    Ok(x)
}

/// Model, codec and configuration shared by every training step.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub arch: Architecture,
    pub codec: GridCodec,
    pub config: TrainConfig,
}

impl Trainer {
    pub fn new(arch: Architecture, codec: GridCodec, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let c = arch.config();
        if c.height != codec.height() || c.frames != codec.frames() {
            return Err(Error::Config(format!(
                "network expects {}×{} grids, data gives {}×{}",
                c.height,
                c.frames,
                codec.height(),
                codec.frames()
            )));
        }
        Ok(Self { arch, codec, config })
    }

    /// Fresh parameters and optimizer moments from the configured seed.
    pub fn init_state(&self) -> TrainState {
        let params = self.arch.init(&mut stream(self.config.seed, &[0]));
        let adam = Subnet::ALL.map(|s| AdamState::new(self.arch.shapes(s).0.into_iter().map(|(_, shape)| shape)));
        TrainState {
            step: 0,
            epoch: 0,
            params,
            adam,
            last: None,
        }
    }

    fn update(&self, state: &mut TrainState, s: Subnet, grads: &[Var]) {
        let cfg = match s {
            Subnet::Encoder => &self.config.optimizer.encoder,
            Subnet::Generator => &self.config.optimizer.generator,
            Subnet::Critic => &self.config.optimizer.critic,
        };
        let grads: Vec<Tensor> = grads.iter().map(|g| g.value().clone()).collect();
        let params = &mut state.params.subnet_mut(s).params.tensors;
        state.adam[adam_index(s)].step(cfg, params, &grads);
    }

    /// One critic update followed by one joint encoder/generator update on
    /// a batch of full-mask poses `[B, F, J, 2]`.
    pub fn step(&self, state: &mut TrainState, real: &Tensor) -> Result<StepMetrics> {
        let (arch, codec, w) = (&self.arch, &self.codec, &self.config.weights);
        let b = real.shape()[0];
        let zdim = arch.config().latent_dim;
        let mut rng = stream(self.config.seed, &[STEP_STREAM, state.step]);
        let real8 = codec.critic_input.apply(real, false);
        let mut m = StepMetrics::default();

        for _ in 0..self.config.n_critic {
            let z = sample_latent(&mut rng, b, zdim);
            let u: Vec<f64> = (0..b).map(|_| rng.random()).collect();
            let gv = state.params.generator.vars(false);
            let fake8 = no_grad(|| -> Result<Tensor> {
                let g = arch.generate(&gv, &Var::constant(z), &mut NormCtx::train(false))?;
                Ok(g.sparse(&codec.decode).sparse(&codec.critic_input).value().clone())
            })?;
            let dv = state.params.critic.vars(true);
            let critic = |x: &Var| arch.critic(&dv, x, &mut NormCtx::train(false));
            let d_real = critic(&Var::constant(real8.clone()))?.mean();
            let d_fake = critic(&Var::constant(fake8.clone()))?.mean();
            let gp = gradient_penalty(&critic, &interpolate(&real8, &fake8, &u))?;
            let l_d = d_fake.sub(&d_real).add(&gp.scale(w.lambda_gp));
            m.l_d = finite("L_D", &l_d, state.step)?;
            m.wasserstein = d_real.item() - d_fake.item();
            let wrt: Vec<&Var> = dv.params.iter().collect();
            let grads = grad(&l_d, &wrt, false);
            self.update(state, Subnet::Critic, &grads);
        }

        let z2 = sample_latent(&mut rng, b, zdim);
        let z3 = sample_latent(&mut rng, b, zdim);
        let ev = state.params.encoder.vars(true);
        let gv = state.params.generator.vars(true);
        let dv = state.params.critic.vars(false);
        let mut enc_ctx = NormCtx::train(true);
        let mut rec_ctx = NormCtx::train(true);
        let mut prior_ctx = NormCtx::train(true);
        let mut scratch = NormCtx::train(false);

        let x_grid = Var::constant(codec.encode.apply(real, false));
        let z_hat = arch.encode(&ev, &x_grid, &mut enc_ctx)?;
        let x_hat = arch.generate(&gv, &z_hat, &mut rec_ctx)?.sparse(&codec.decode);
        let l_rec = reconstruction_loss(real, &x_hat, &codec.velocity, w)?;
        let l_mix = mixed_loss(&arch.critic(&dv, &x_hat.sparse(&codec.critic_input), &mut scratch)?, w.lambda_m);

        let fake = arch.generate(&gv, &Var::constant(z2), &mut prior_ctx)?.sparse(&codec.decode);
        let l_g = generator_loss(&arch.critic(&dv, &fake.sparse(&codec.critic_input), &mut scratch)?);

        // The encoder always sees symmetrized grids, as produced from poses.
        let cycled = arch.generate(&gv, &Var::constant(z3.clone()), &mut scratch)?;
        let z3_hat = arch.encode(&ev, &cycled.sparse(&codec.decode).sparse(&codec.encode), &mut scratch)?;
        let l_back = backward_reconstruction_loss(&z3, &z3_hat, w.lambda_z)?;

        m.l_rec = finite("L_Rec", &l_rec, state.step)?;
        m.l_mix = finite("L_Mix", &l_mix, state.step)?;
        m.l_g = finite("L_G", &l_g, state.step)?;
        m.l_rec_backward = finite("L_Rec_backward", &l_back, state.step)?;

        let total = l_g.add(&l_rec).add(&l_back).add(&l_mix);
        let wrt: Vec<&Var> = ev.params.iter().chain(&gv.params).collect();
        let mut grads = grad(&total, &wrt, false);
        let g_grads = grads.split_off(ev.params.len());
        self.update(state, Subnet::Encoder, &grads);
        self.update(state, Subnet::Generator, &g_grads);

        let momentum = arch.config().bn_momentum;
        state.params.encoder.update_running(&enc_ctx.stats, momentum);
        state.params.generator.update_running(&rec_ctx.stats, momentum);
        state.params.generator.update_running(&prior_ctx.stats, momentum);

        state.step += 1;
        state.last = Some(m);
        Ok(m)
    }
}

/// Eval-mode reconstruction `G(E(x))` of full-mask poses `[N, F, J, 2]`.
pub fn reconstruct(arch: &Architecture, codec: &GridCodec, params: &ParameterSet, poses: &Tensor) -> Result<Tensor> {
    no_grad(|| {
        let x = Var::constant(codec.encode.apply(poses, false));
        let z = arch.encode(&params.encoder.vars(false), &x, &mut NormCtx::eval())?;
        let g = arch.generate(&params.generator.vars(false), &z, &mut NormCtx::eval())?;
        Ok(g.sparse(&codec.decode).value().clone())
    })
}

/// Mean joint distance between two pose tensors of equal shape.
pub fn pose_mpjpe(a: &Tensor, b: &Tensor) -> f64 {
    let d: f64 = a
        .data()
        .chunks(2)
        .zip(b.data().chunks(2))
        .map(|(p, q)| (p[0] - q[0]).hypot(p[1] - q[1]))
        .sum();
    d / (a.len() / 2) as f64
}

/// Mean squared error between `z` and `E(G(z))` over `n` prior samples, in
/// eval mode.
pub fn latent_cycle_error(arch: &Architecture, codec: &GridCodec, params: &ParameterSet, n: usize, seed: u64) -> Result<f64> {
    let z = sample_latent(&mut stream(seed, &[9]), n, arch.config().latent_dim);
    no_grad(|| {
        let g = arch.generate(&params.generator.vars(false), &Var::constant(z.clone()), &mut NormCtx::eval())?;
        let grid = g.sparse(&codec.decode).sparse(&codec.encode);
        let z_hat = arch.encode(&params.encoder.vars(false), &grid, &mut NormCtx::eval())?;
        Ok(z_hat.value().zip_map(&z, |a, b| (a - b) * (a - b)).sum() / z.len() as f64)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetworkConfig;
    use crate::topology::SkeletonTopology;

    fn setup() -> (Architecture, GridCodec, ParameterSet) {
        let topo = SkeletonTopology::mpi_inf_3dhp_28();
        let arch = Architecture::new(NetworkConfig::for_grid(topo.grid_height(), 4, 2, 3)).unwrap();
        let params = arch.init(&mut stream(1, &[]));
        (arch, GridCodec::new(&topo, 4).unwrap(), params)
    }

    #[test]
    fn reconstruction_keeps_shape_and_range() {
        let (arch, codec, params) = setup();
        let poses = Tensor::from_fn([2, 4, 28, 2], |i| ((i as f64) * 0.37).sin());
        let out = reconstruct(&arch, &codec, &params, &poses).unwrap();
        assert_eq!(out.shape(), poses.shape());
        assert!(out.data().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn pose_mpjpe_is_mean_distance() {
        let a = Tensor::new([1, 1, 2, 2], vec![0.0, 0.0, 1.0, 1.0]);
        let b = Tensor::new([1, 1, 2, 2], vec![3.0, 4.0, 1.0, 1.0]);
        assert_eq!(pose_mpjpe(&a, &b), 2.5);
        assert_eq!(pose_mpjpe(&a, &a), 0.0);
    }

    #[test]
    fn latent_cycle_error_is_seeded() {
        let (arch, codec, params) = setup();
        let a = latent_cycle_error(&arch, &codec, &params, 3, 5).unwrap();
        assert!(a.is_finite() && a >= 0.0);
        assert_eq!(a, latent_cycle_error(&arch, &codec, &params, 3, 5).unwrap());
    }
}
