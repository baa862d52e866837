use std::rc::Rc;

use jumps_autograd::{conv2d, conv_transpose2d, ConvGeometry, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::{ConvLayer, NetworkConfig, Norm, CRITIC_CHANNELS, GRID_CHANNELS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subnet {
    Encoder,
    Generator,
    Critic,
}

impl Subnet {
    pub const ALL: [Subnet; 3] = [Subnet::Encoder, Subnet::Generator, Subnet::Critic];

    pub fn name(self) -> &'static str {
        match self {
            Subnet::Encoder => "encoder",
            Subnet::Generator => "generator",
            Subnet::Critic => "critic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    Normal,
    Zero,
    One,
}

#[derive(Debug, Clone, PartialEq)]
struct Slot {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

/// Ordered named tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NamedTensors {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
}

impl NamedTensors {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }
}

/// Learnable tensors plus normalization running statistics of one subnet.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SubnetParams {
    pub params: NamedTensors,
    /// Running mean and variance per batch-norm layer, in forward order.
    pub buffers: NamedTensors,
}

impl SubnetParams {
    /// Leaves for a forward pass; `trainable` decides whether gradients can
    /// be taken with respect to them.
    pub fn vars(&self, trainable: bool) -> SubnetVars {
        let make = if trainable { Var::param } else { Var::constant };
        SubnetVars {
            params: self.params.tensors.iter().cloned().map(make).collect(),
            buffers: self.buffers.tensors.clone(),
        }
    }

    /// Exponential moving average of recorded batch statistics.
    pub fn update_running(&mut self, stats: &[Tensor], momentum: f64) {
        assert_eq!(stats.len(), self.buffers.tensors.len(), "one statistic per buffer");
        for (buf, s) in self.buffers.tensors.iter_mut().zip(stats) {
            *buf = buf.zip_map(s, |r, b| (1.0 - momentum) * r + momentum * b);
        }
    }
}

#[derive(Debug, Clone)]
pub struct SubnetVars {
    pub params: Vec<Var>,
    pub buffers: Vec<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    pub encoder: SubnetParams,
    pub generator: SubnetParams,
    pub critic: SubnetParams,
}

impl ParameterSet {
    pub fn subnet(&self, s: Subnet) -> &SubnetParams {
        match s {
            Subnet::Encoder => &self.encoder,
            Subnet::Generator => &self.generator,
            Subnet::Critic => &self.critic,
        }
    }

    pub fn subnet_mut(&mut self, s: Subnet) -> &mut SubnetParams {
        match s {
            Subnet::Encoder => &mut self.encoder,
            Subnet::Generator => &mut self.generator,
            Subnet::Critic => &mut self.critic,
        }
    }
}

/// Learnable scalar counts `(encoder, generator, critic)`.
pub fn count_parameters(params: &ParameterSet) -> (usize, usize, usize) {
    (
        params.encoder.params.scalar_count(),
        params.generator.params.scalar_count(),
        params.critic.params.scalar_count(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Normalization uses the batch's own statistics.
    Train,
    /// Normalization uses running statistics; samples are independent.
    Eval,
}

/// Normalization behaviour of one forward pass. In training mode with
/// `record` set, batch mean and unbiased variance of every batch-norm layer
/// are appended to `stats` in buffer order.
#[derive(Debug)]
pub struct NormCtx {
    pub mode: Mode,
    pub record: bool,
    pub stats: Vec<Tensor>,
}

impl NormCtx {
    pub fn eval() -> Self {
        Self {
            mode: Mode::Eval,
            record: false,
            stats: Vec::new(),
        }
    }

    pub fn train(record: bool) -> Self {
        Self {
            mode: Mode::Train,
            record,
            stats: Vec::new(),
        }
    }
}

/// Validated configuration with its convolution geometries precomputed.
#[derive(Debug, Clone)]
pub struct Architecture {
    config: NetworkConfig,
    encoder_geo: Vec<ConvGeometry>,
    critic_geo: Vec<ConvGeometry>,
    generator_geo: Vec<ConvGeometry>,
    layouts: [(Vec<Slot>, Vec<Slot>); 3],
}

fn push(slots: &mut Vec<Slot>, name: String, shape: Vec<usize>, init: Init) {
    slots.push(Slot { name, shape, init });
}

fn push_norm(params: &mut Vec<Slot>, buffers: &mut Vec<Slot>, norm: Norm, prefix: &str, ch: usize) {
    if norm == Norm::None {
        return;
    }
    push(params, format!("{prefix}.gamma"), vec![ch], Init::One);
    push(params, format!("{prefix}.beta"), vec![ch], Init::Zero);
    if norm == Norm::Batch {
        push(buffers, format!("{prefix}.running_mean"), vec![ch], Init::Zero);
        push(buffers, format!("{prefix}.running_var"), vec![ch], Init::One);
    }
}

fn trunk_layout(
    layers: &[ConvLayer],
    geo: &[ConvGeometry],
    norm: Norm,
    out_dim: usize,
) -> (Vec<Slot>, Vec<Slot>) {
    let (mut p, mut b) = (Vec::new(), Vec::new());
    for (i, (l, g)) in layers.iter().zip(geo).enumerate() {
        push(&mut p, format!("conv{i}.weight"), vec![l.channels, g.patch_len()], Init::Normal);
        push(&mut p, format!("conv{i}.bias"), vec![l.channels], Init::Zero);
        if i > 0 {
            push_norm(&mut p, &mut b, norm, &format!("norm{i}"), l.channels);
        }
    }
    let last = geo.last().expect("non-empty trunk");
    let feat = layers.last().expect("non-empty trunk").channels * last.out_size[0] * last.out_size[1];
    push(&mut p, "dense.weight".into(), vec![feat, out_dim], Init::Normal);
    push(&mut p, "dense.bias".into(), vec![out_dim], Init::Zero);
    (p, b)
}

fn generator_layout(cfg: &NetworkConfig, geo: &[ConvGeometry]) -> (Vec<Slot>, Vec<Slot>) {
    let (mut p, mut b) = (Vec::new(), Vec::new());
    let layers = &cfg.generator;
    let last = geo.last().expect("non-empty trunk");
    let deep = layers.last().expect("non-empty trunk").channels;
    let feat = deep * last.out_size[0] * last.out_size[1];
    push(&mut p, "dense.weight".into(), vec![cfg.latent_dim, feat], Init::Normal);
    push(&mut p, "dense.bias".into(), vec![feat], Init::Zero);
    push_norm(&mut p, &mut b, cfg.generator_norm, "norm_in", deep);
    for k in (0..layers.len()).rev() {
        let g = &geo[k];
        let kk = g.kernel[0] * g.kernel[1];
        push(&mut p, format!("deconv{k}.weight"), vec![layers[k].channels, g.channels * kk], Init::Normal);
        push(&mut p, format!("deconv{k}.bias"), vec![g.channels], Init::Zero);
        if k > 0 {
            push_norm(&mut p, &mut b, cfg.generator_norm, &format!("norm{k}"), g.channels);
        }
    }
    (p, b)
}

fn bcast_channels(v: &Var, n: usize, p: usize) -> Var {
    v.bcast_last(&[p]).bcast_first(&[n])
}

fn const_channels(v: &[f64], n: usize, p: usize) -> Rc<Tensor> {
    let c = v.len();
    Rc::new(Tensor::from_fn([n, c, p], |i| v[(i / p) % c]))
}

struct Cursor<'a> {
    params: std::slice::Iter<'a, Var>,
    buffers: std::slice::Iter<'a, Tensor>,
}

impl<'a> Cursor<'a> {
    fn new(vars: &'a SubnetVars) -> Self {
        Self {
            params: vars.params.iter(),
            buffers: vars.buffers.iter(),
        }
    }

    fn param(&mut self) -> &'a Var {
        self.params.next().expect("parameter layout matches the architecture")
    }

    fn buffer(&mut self) -> &'a Tensor {
        self.buffers.next().expect("buffer layout matches the architecture")
    }
}

impl Architecture {
    pub fn new(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let encoder_geo = config.trunk_geometry(&config.encoder, GRID_CHANNELS)?;
        let critic_geo = config.trunk_geometry(&config.critic, CRITIC_CHANNELS)?;
        let generator_geo = config.trunk_geometry(&config.generator, GRID_CHANNELS)?;
        let layouts = [
            trunk_layout(&config.encoder, &encoder_geo, config.encoder_norm, config.latent_dim),
            generator_layout(&config, &generator_geo),
            trunk_layout(&config.critic, &critic_geo, config.critic_norm, 1),
        ];
        Ok(Self {
            config,
            encoder_geo,
            critic_geo,
            generator_geo,
            layouts,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    fn layout(&self, s: Subnet) -> &(Vec<Slot>, Vec<Slot>) {
        match s {
            Subnet::Encoder => &self.layouts[0],
            Subnet::Generator => &self.layouts[1],
            Subnet::Critic => &self.layouts[2],
        }
    }

    /// `(name, shape)` of every learnable tensor, then of every buffer.
    pub fn shapes(&self, s: Subnet) -> (Vec<(String, Vec<usize>)>, Vec<(String, Vec<usize>)>) {
        let (p, b) = self.layout(s);
        let f = |v: &Vec<Slot>| v.iter().map(|s| (s.name.clone(), s.shape.clone())).collect();
        (f(p), f(b))
    }

    /// DCGAN initialization: weights from N(0, 0.02²), biases 0, norm scales 1.
    pub fn init(&self, rng: &mut impl Rng) -> ParameterSet {
        let normal = Normal::new(0.0, 0.02).expect("valid normal");
        let mut make = |s: Subnet| {
            let (p, b) = self.layout(s);
            let mut build = |slots: &[Slot]| NamedTensors {
                names: slots.iter().map(|s| s.name.clone()).collect(),
                tensors: slots
                    .iter()
                    .map(|s| match s.init {
                        Init::Normal => Tensor::from_fn(s.shape.clone(), |_| normal.sample(&mut *rng)),
                        Init::Zero => Tensor::zeros(s.shape.clone()),
                        Init::One => Tensor::ones(s.shape.clone()),
                    })
                    .collect(),
            };
            SubnetParams {
                params: build(p),
                buffers: build(b),
            }
        };
        ParameterSet {
            encoder: make(Subnet::Encoder),
            generator: make(Subnet::Generator),
            critic: make(Subnet::Critic),
        }
    }

    /// Checks every name and shape of `params` against this architecture.
    pub fn check(&self, params: &ParameterSet) -> Result<()> {
        for s in Subnet::ALL {
            let (p, b) = self.layout(s);
            let sp = params.subnet(s);
            for (kind, slots, have) in [("parameter", p, &sp.params), ("buffer", b, &sp.buffers)] {
                if slots.len() != have.names.len() {
                    return Err(Error::Shape(format!(
                        "{}: expected {} {kind} tensors, found {}",
                        s.name(),
                        slots.len(),
                        have.names.len()
                    )));
                }
                for (slot, (name, t)) in slots.iter().zip(have.iter()) {
                    if slot.name != name || slot.shape != t.shape() {
                        return Err(Error::Shape(format!(
                            "{}: expected {} {:?}, found {name} {:?}",
                            s.name(),
                            slot.name,
                            slot.shape,
                            t.shape()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &Var, channels: usize, what: &str) -> Result<usize> {
        let c = &self.config;
        match *x.shape() {
            [n, ch, h, f] if n > 0 && ch == channels && h == c.height && f == c.frames => Ok(n),
            _ => Err(Error::Shape(format!(
                "{what} expects [N, {channels}, {}, {}], got {:?}",
                c.height,
                c.frames,
                x.shape()
            ))),
        }
    }

    fn normalize(&self, x: &Var, norm: Norm, cur: &mut Cursor, ctx: &mut NormCtx) -> Var {
        let eps = self.config.norm_eps;
        let (n, c) = (x.shape()[0], x.shape()[1]);
        let p: usize = x.shape()[2..].iter().product();
        let x3 = x.reshape(&[n, c, p]);
        let y = match norm {
            Norm::None => return x.clone(),
            Norm::Layer => {
                let m = (c * p) as f64;
                let flat = x3.reshape(&[n, c * p]);
                let mean = flat.sum_last(c * p).reshape(&[n]).scale(1.0 / m);
                let cent = flat.sub(&mean.bcast_last(&[c * p]));
                let var = cent.square().sum_last(c * p).reshape(&[n]).scale(1.0 / m);
                let inv = var.add_scalar(eps).powf(-0.5);
                cent.mul(&inv.bcast_last(&[c * p])).reshape(&[n, c, p])
            }
            Norm::Batch => {
                let (rm, rv) = (cur.buffer(), cur.buffer());
                match ctx.mode {
                    Mode::Train => {
                        let m = (n * p) as f64;
                        let mean = x3.sum_first(n).sum_last(p).reshape(&[c]).scale(1.0 / m);
                        let cent = x3.sub(&bcast_channels(&mean, n, p));
                        let var = cent.square().sum_first(n).sum_last(p).reshape(&[c]).scale(1.0 / m);
                        if ctx.record {
                            let unbias = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
                            ctx.stats.push(mean.value().clone());
                            ctx.stats.push(var.value().map(|v| v * unbias));
                        }
                        let inv = var.add_scalar(eps).powf(-0.5);
                        cent.mul(&bcast_channels(&inv, n, p))
                    }
                    Mode::Eval => {
                        let inv: Vec<f64> = rv.data().iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
                        let shift: Vec<f64> = rm.data().iter().zip(&inv).map(|(m, s)| -m * s).collect();
                        x3.mul_const(const_channels(&inv, n, p))
                            .add_const(&const_channels(&shift, n, p))
                    }
                }
            }
        };
        let (gamma, beta) = (cur.param(), cur.param());
        y.mul(&bcast_channels(gamma, n, p))
            .add(&bcast_channels(beta, n, p))
            .reshape(x.shape())
    }

    fn trunk(
        &self,
        layers: &[ConvLayer],
        geo: &[ConvGeometry],
        norm: Norm,
        vars: &SubnetVars,
        x: &Var,
        ctx: &mut NormCtx,
    ) -> Var {
        let mut cur = Cursor::new(vars);
        let mut h = x.clone();
        for (i, g) in geo.iter().enumerate() {
            let (w, b) = (cur.param(), cur.param());
            h = conv2d(&h, w, b, g);
            if i > 0 {
                h = self.normalize(&h, norm, &mut cur, ctx);
            }
            h = h.leaky_relu(self.config.leaky_slope);
        }
        let n = x.shape()[0];
        let feat = layers.last().expect("non-empty trunk").channels * geo.last().expect("non-empty").positions();
        let (w, b) = (cur.param(), cur.param());
        h.reshape(&[n, feat]).matmul(w).add(&b.bcast_first(&[n]))
    }

    /// `x: [N, 4, H, F]` → latent codes `[N, Z]`.
    pub fn encode(&self, vars: &SubnetVars, x: &Var, ctx: &mut NormCtx) -> Result<Var> {
        self.check_input(x, GRID_CHANNELS, "encoder")?;
        let c = &self.config;
        Ok(self.trunk(&c.encoder, &self.encoder_geo, c.encoder_norm, vars, x, ctx))
    }

    /// `x: [N, 8, H, F]` → unbounded scores `[N]`.
    pub fn critic(&self, vars: &SubnetVars, x: &Var, ctx: &mut NormCtx) -> Result<Var> {
        let n = self.check_input(x, CRITIC_CHANNELS, "critic")?;
        let c = &self.config;
        Ok(self.trunk(&c.critic, &self.critic_geo, c.critic_norm, vars, x, ctx).reshape(&[n]))
    }

    /// `z: [N, Z]` → grids `[N, 4, H, F]` with entries in (−1, 1).
    pub fn generate(&self, vars: &SubnetVars, z: &Var, ctx: &mut NormCtx) -> Result<Var> {
        let c = &self.config;
        let n = match *z.shape() {
            [n, d] if n > 0 && d == c.latent_dim => n,
            _ => {
                return Err(Error::Shape(format!(
                    "generator expects [N, {}], got {:?}",
                    c.latent_dim,
                    z.shape()
                )))
            }
        };
        let mut cur = Cursor::new(vars);
        let last = self.generator_geo.last().expect("non-empty trunk");
        let deep = c.generator.last().expect("non-empty trunk").channels;
        let [lh, lw] = last.out_size;
        let (w, b) = (cur.param(), cur.param());
        let mut h = z.matmul(w).add(&b.bcast_first(&[n])).reshape(&[n, deep, lh, lw]);
        h = self.normalize(&h, c.generator_norm, &mut cur, ctx).relu();
        for k in (0..self.generator_geo.len()).rev() {
            let (w, b) = (cur.param(), cur.param());
            h = conv_transpose2d(&h, w, b, &self.generator_geo[k]);
            if k > 0 {
                h = self.normalize(&h, c.generator_norm, &mut cur, ctx).relu();
            } else {
                h = h.tanh();
            }
        }
        Ok(h)
    }
}

/// A standard-normal latent batch `[n, z]`.
pub fn sample_latent(rng: &mut impl Rng, n: usize, z: usize) -> Tensor {
    Tensor::from_fn([n, z], |_| rand_distr::StandardNormal.sample(&mut *rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use jumps_autograd::{grad, no_grad};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> Architecture {
        Architecture::new(NetworkConfig::for_grid(3, 6, 2, 3)).unwrap()
    }

    fn input(n: usize, c: usize, arch: &Architecture, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = arch.config();
        Tensor::from_fn([n, c, cfg.height, cfg.frames], |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn default_counts_are_near_published() {
        let arch = Architecture::new(NetworkConfig::default()).unwrap();
        let params = arch.init(&mut ChaCha8Rng::seed_from_u64(0));
        let (e, g, d) = count_parameters(&params);
        for (got, want) in [(e, 1_148_096.0), (g, 1_148_480.0), (d, 1_115_393.0)] {
            assert!((got as f64 / want - 1.0).abs() <= 0.15, "{got} vs {want}");
        }
    }

    #[test]
    fn output_shapes_and_bounds() {
        let arch = tiny();
        let p = arch.init(&mut ChaCha8Rng::seed_from_u64(1));
        let z = Var::constant(sample_latent(&mut ChaCha8Rng::seed_from_u64(2), 5, 3));
        let g = arch.generate(&p.generator.vars(false), &z, &mut NormCtx::train(false)).unwrap();
        assert_eq!(g.shape(), &[5, 4, 3, 6]);
        assert!(g.value().data().iter().all(|v| v.abs() < 1.0));
        let e = arch.encode(&p.encoder.vars(false), &g, &mut NormCtx::eval()).unwrap();
        assert_eq!(e.shape(), &[5, 3]);
        let x = Var::constant(input(5, 8, &arch, 3));
        let d = arch.critic(&p.critic.vars(false), &x, &mut NormCtx::eval()).unwrap();
        assert_eq!(d.shape(), &[5]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let arch = tiny();
        let p = arch.init(&mut ChaCha8Rng::seed_from_u64(1));
        let x = Var::constant(input(2, 4, &arch, 3));
        assert!(arch.critic(&p.critic.vars(false), &x, &mut NormCtx::eval()).is_err());
        let z = Var::constant(Tensor::zeros([2, 4]));
        assert!(arch.generate(&p.generator.vars(false), &z, &mut NormCtx::eval()).is_err());
    }

    #[test]
    fn zero_final_layer_gives_zero_latent() {
        let arch = tiny();
        let mut p = arch.init(&mut ChaCha8Rng::seed_from_u64(1));
        for (name, t) in p.encoder.params.names.iter().zip(p.encoder.params.tensors.iter_mut()) {
            if name.starts_with("dense") {
                *t = Tensor::zeros(t.shape().to_vec());
            }
        }
        let x = Var::constant(Tensor::zeros([2, 4, 3, 6]));
        let z = arch.encode(&p.encoder.vars(false), &x, &mut NormCtx::eval()).unwrap();
        assert!(z.value().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eval_mode_is_batch_independent_and_repeatable() {
        let arch = tiny();
        let p = arch.init(&mut ChaCha8Rng::seed_from_u64(4));
        let one = input(1, 8, &arch, 5);
        let two = Tensor::new([2, 8, 3, 6], [one.data(), input(1, 8, &arch, 6).data()].concat());
        let v = p.critic.vars(false);
        let a = arch.critic(&v, &Var::constant(one.clone()), &mut NormCtx::eval()).unwrap();
        let b = arch.critic(&v, &Var::constant(two), &mut NormCtx::eval()).unwrap();
        assert_eq!(a.value().data()[0], b.value().data()[0]);

        let enc = p.encoder.vars(false);
        let g = Var::constant(input(3, 4, &arch, 7));
        let r1 = arch.encode(&enc, &g, &mut NormCtx::eval()).unwrap();
        let r2 = arch.encode(&enc, &g, &mut NormCtx::eval()).unwrap();
        assert_eq!(r1.value(), r2.value());
    }

    #[test]
    fn batch_norm_records_statistics() {
        let arch = tiny();
        let mut p = arch.init(&mut ChaCha8Rng::seed_from_u64(4));
        let x = Var::constant(input(4, 4, &arch, 8));
        let mut ctx = NormCtx::train(true);
        no_grad(|| arch.encode(&p.encoder.vars(false), &x, &mut ctx)).unwrap();
        assert_eq!(ctx.stats.len(), p.encoder.buffers.tensors.len());
        let before = p.encoder.buffers.clone();
        p.encoder.update_running(&ctx.stats, 0.1);
        assert_ne!(before, p.encoder.buffers);
    }

    #[test]
    fn generator_gradient_matches_finite_differences() {
        let arch = tiny();
        let p = arch.init(&mut ChaCha8Rng::seed_from_u64(9));
        let vars = p.generator.vars(false);
        let z0 = sample_latent(&mut ChaCha8Rng::seed_from_u64(10), 2, 3);
        let pick = 17;
        let f = |z: &Tensor| {
            let out = arch.generate(&vars, &Var::constant(z.clone()), &mut NormCtx::train(false)).unwrap();
            out.value().data()[pick]
        };
        let z = Var::param(z0.clone());
        let out = arch.generate(&vars, &z, &mut NormCtx::train(false)).unwrap();
        let mask = Rc::new(Tensor::from_fn(out.shape().to_vec(), |i| (i == pick) as u8 as f64));
        let g = grad(&out.mul_const(mask).sum(), &[&z], false).remove(0);
        let h = 1e-6;
        for i in 0..z0.len() {
            let (mut up, mut dn) = (z0.clone(), z0.clone());
            up.data_mut()[i] += h;
            dn.data_mut()[i] -= h;
            let fd = (f(&up) - f(&dn)) / (2.0 * h);
            let an = g.value().data()[i];
            assert!((fd - an).abs() <= 1e-3 * fd.abs().max(1e-6) + 1e-9, "{i}: {fd} vs {an}");
        }
    }

    #[test]
    fn check_rejects_wrong_shapes() {
        let arch = tiny();
        let mut p = arch.init(&mut ChaCha8Rng::seed_from_u64(1));
        arch.check(&p).unwrap();
        p.critic.params.tensors[0] = Tensor::zeros([1, 1]);
        assert!(arch.check(&p).is_err());
    }
}
