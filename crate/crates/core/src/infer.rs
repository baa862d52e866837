//! Latent-code optimization for joint upsampling and inpainting.
//!
//! A chunk is inverted by searching the generator's latent space for a
//! sequence whose available joints match the input. Several starts run as
//! one batch; each start is an independent problem because every layer in
//! eval mode acts per sample. Long inputs are split into half-overlapping
//! windows whose outputs are merged frame by frame.

use std::path::Path;

use jumps_autograd::{grad, Tensor, Var};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::window_starts;
use crate::error::{Error, Result};
use crate::grid::{encode_grid, mask_batch, pose_batch, GridCodec, GridTensor};
use crate::losses::{contextual_loss, LossWeights};
use crate::net::{load_checkpoint, sample_latent, Architecture, Checkpoint, NormCtx, ParameterSet};
use crate::procrustes::align_points;
use crate::rng::{derive_seed, stream};
use crate::sequence::{embed, normalize, PoseSequence};
use crate::topology::SkeletonTopology;
use crate::train::{AdamConfig, AdamState};
use crate::transform::{Point, SimilarityTransform2D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferConfig {
    pub iterations: usize,
    pub optimizer: AdamConfig,
    pub gamma_p: f64,
    pub gamma_s: f64,
    pub gamma_d: f64,
    /// Parallel starts per chunk.
    pub starts: usize,
    /// Start 0 is `E(x)` when set; otherwise every start is a prior sample.
    pub encoder_init: bool,
    /// Re-encodings of `E(x)` with missing joints filled from its own
    /// reconstruction.
    pub refinements: usize,
    /// Windows advance by half their length when set, else by their length.
    pub overlap: bool,
    pub procrustes: bool,
    pub seed: u64,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            optimizer: AdamConfig {
                lr: 1.0,
                beta1: 0.8,
                beta2: 0.999,
                eps: 1e-8,
            },
            gamma_p: 10.0,
            gamma_s: 5.0,
            gamma_d: 15.0,
            starts: 8,
            encoder_init: true,
            refinements: 0,
            overlap: true,
            procrustes: true,
            seed: 0,
        }
    }
}

impl InferConfig {
    /// Settings for small models: a smaller step, no prior term, fewer
    /// starts and iterations, and a refined encoder start. The prior term
    /// of a critic trained on few sequences pulls the code off the data.
    pub fn desk() -> Self {
        Self {
            iterations: 100,
            optimizer: AdamConfig {
                lr: 0.1,
                ..Self::default().optimizer
            },
            gamma_d: 0.0,
            starts: 4,
            refinements: 3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.starts == 0 {
            return Err(Error::Config("starts must be at least 1".into()));
        }
        self.optimizer.validate()?;
        self.weights().validate()
    }

    fn weights(&self) -> LossWeights {
        LossWeights {
            gamma_p: self.gamma_p,
            gamma_s: self.gamma_s,
            gamma_d: self.gamma_d,
            ..LossWeights::default()
        }
    }
}

/// A trained model ready for inference.
#[derive(Debug, Clone)]
pub struct Model {
    pub topology: SkeletonTopology,
    pub arch: Architecture,
    pub params: ParameterSet,
    pub codec: GridCodec,
}

impl Model {
    pub fn new(topology: SkeletonTopology, arch: Architecture, params: ParameterSet) -> Result<Self> {
        arch.check(&params)?;
        let codec = GridCodec::new(&topology, arch.config().frames)?;
        if codec.height() != arch.config().height {
            return Err(Error::Config(format!(
                "topology {:?} gives grid height {}, network expects {}",
                topology.name(),
                codec.height(),
                arch.config().height
            )));
        }
        Ok(Self {
            topology,
            arch,
            params,
            codec,
        })
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        Self::new(c.topology, c.arch, c.params)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Self::from_checkpoint(load_checkpoint(dir)?)
    }

    /// Window length in frames.
    pub fn frames(&self) -> usize {
        self.codec.frames()
    }
}

/// Replaces unavailable joints by the centroid of the available ones and
/// returns the 4-channel grid the encoder expects.
pub fn zero_fill(x: &PoseSequence, topo: &SkeletonTopology) -> Result<GridTensor> {
    encode_grid(&centroid_filled(x)?, topo, false)
}

fn centroid_filled(x: &PoseSequence) -> Result<PoseSequence> {
    let c = x
        .centroid()
        .ok_or(Error::EmptyMask("zero_fill needs at least one available joint"))?;
    let positions = x
        .positions()
        .iter()
        .zip(x.mask())
        .map(|(p, &m)| if m { *p } else { c })
        .collect();
    let mut out = PoseSequence::full(x.frames(), x.joints(), positions)?;
    out.norm = x.norm;
    Ok(out)
}

/// Outcome of inverting one window.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkInversion {
    /// Latent code of the selected start.
    pub z: Vec<f64>,
    /// Aligned generator output, full mask, in the input's coordinates.
    pub output: PoseSequence,
    /// Final inpainting loss of the selected start.
    pub loss: f64,
    /// Final contextual part of `loss`.
    pub contextual: f64,
    pub start: usize,
    pub transform: SimilarityTransform2D,
    /// Final inpainting loss of every start.
    pub start_losses: Vec<f64>,
    /// Masked MPJPE against the input of every start's final output.
    pub start_mpjpe: Vec<f64>,
    /// Smallest contextual loss over starts before each update, followed by
    /// the final value; `iterations + 1` entries.
    pub history: Vec<f64>,
}

struct Evaluation {
    aligned: Var,
    loss: Var,
    contextual: Vec<f64>,
    transforms: Vec<SimilarityTransform2D>,
}

fn evaluate(model: &Model, cfg: &InferConfig, x: &PoseSequence, z: &Var, xs: &Tensor, mask: &Tensor) -> Result<Evaluation> {
    let (arch, codec) = (&model.arch, &model.codec);
    let s = z.shape()[0];
    let gv = model.params.generator.vars(false);
    let dv = model.params.critic.vars(false);
    let x_hat = arch.generate(&gv, z, &mut NormCtx::eval())?.sparse(&codec.decode);
    let (f, j) = (x.frames(), x.joints());
    let mut transforms = Vec::with_capacity(s);
    let (mut linear, mut offset) = (Vec::with_capacity(s * 4), Vec::with_capacity(s * f * j * 2));
    for cand in x_hat.value().data().chunks(f * j * 2) {
        let t = if cfg.procrustes {
            let (src, dst): (Vec<Point>, Vec<Point>) = cand
                .chunks(2)
                .zip(x.positions())
                .zip(x.mask())
                .filter(|(_, &m)| m)
                .map(|((p, q), _)| ([p[0], p[1]], *q))
                .unzip();
            align_points(&src, &dst).unwrap_or_default()
        } else {
            SimilarityTransform2D::identity()
        };
        let l = t.linear();
        linear.extend([l[0][0], l[0][1], l[1][0], l[1][1]]);
        for _ in 0..f * j {
            offset.extend(t.translation);
        }
        transforms.push(t);
    }
    // The alignment is a constant of this step: gradients flow through x̂ only.
    let points = x_hat.reshape(&[s, f * j, 2]);
    let linear = Var::constant(Tensor::new([s, 2, 2], linear));
    let aligned = Var::bmm(&points, &linear, false, true, Some(s))
        .add_const(&Tensor::new([s, f * j, 2], offset))
        .reshape(&[s, f, j, 2]);
    let w = cfg.weights();
    let contextual = contextual_loss(xs, mask, &aligned, &codec.velocity, &w)?;
    let mut loss = contextual.clone();
    if cfg.gamma_d != 0.0 {
        let scores = arch.critic(&dv, &aligned.sparse(&codec.critic_input), &mut NormCtx::eval())?;
        loss = loss.sub(&scores.scale(cfg.gamma_d));
    }
    Ok(Evaluation {
        aligned,
        loss,
        contextual: contextual.value().data().to_vec(),
        transforms,
    })
}

fn check_chunk(model: &Model, x: &PoseSequence) -> Result<()> {
    if x.frames() != model.frames() || x.joints() != model.topology.joint_count() {
        return Err(Error::Shape(format!(
            "chunk is {}×{}, model expects {}×{}",
            x.frames(),
            x.joints(),
            model.frames(),
            model.topology.joint_count()
        )));
    }
    if x.available_count() == 0 {
        return Err(Error::EmptyMask("chunk has no available joints"));
    }
    Ok(())
}

/// Initial latent codes `[starts, Z]`.
fn initial_latents(model: &Model, x: &PoseSequence, cfg: &InferConfig, seed: u64) -> Result<Tensor> {
    let zdim = model.arch.config().latent_dim;
    let mut z = sample_latent(&mut stream(seed, &[]), cfg.starts, zdim);
    if cfg.encoder_init {
        let e = encode_partial(model, x, cfg.refinements)?;
        z.data_mut()[..zdim].copy_from_slice(e.data());
    }
    Ok(z)
}

/// `E(x)` for a partially observed window: missing joints start at the
/// centroid, then are replaced `refinements` times by the aligned
/// reconstruction of the current code.
pub fn encode_partial(model: &Model, x: &PoseSequence, refinements: usize) -> Result<Tensor> {
    // The encoder was trained on normalized windows.
    let local = normalize(x).unwrap_or_else(|_| x.clone());
    let (arch, codec) = (&model.arch, &model.codec);
    let ev = model.params.encoder.vars(false);
    let gv = model.params.generator.vars(false);
    let encode = |filled: &PoseSequence| -> Result<Tensor> {
        let grid = codec.encode.apply(&pose_batch(&[filled]), false);
        Ok(arch.encode(&ev, &Var::constant(grid), &mut NormCtx::eval())?.value().clone())
    };
    let mut z = encode(&centroid_filled(&local)?)?;
    for _ in 0..refinements {
        let g = arch.generate(&gv, &Var::constant(z), &mut NormCtx::eval())?.sparse(&codec.decode);
        let guess: Vec<Point> = g.value().data().chunks(2).map(|p| [p[0], p[1]]).collect();
        let (src, dst): (Vec<Point>, Vec<Point>) = guess
            .iter()
            .zip(local.positions())
            .zip(local.mask())
            .filter(|(_, &m)| m)
            .map(|((p, q), _)| (*p, *q))
            .unzip();
        let t = align_points(&src, &dst).unwrap_or_default();
        let positions = guess
            .iter()
            .zip(local.positions())
            .zip(local.mask())
            .map(|((p, q), &m)| if m { *q } else { t.apply(*p) })
            .collect();
        z = encode(&PoseSequence::full(local.frames(), local.joints(), positions)?)?;
    }
    Ok(z)
}

/// Optimizes the latent code of every start for one window of exactly the
/// model's frame count and returns the start with the lowest final loss.
///
/// `seed` fixes the prior-sampled starts.
pub fn invert_chunk(model: &Model, x: &PoseSequence, cfg: &InferConfig, seed: u64) -> Result<ChunkInversion> {
    cfg.validate()?;
    check_chunk(model, x)?;
    let xs = pose_batch(&vec![x; cfg.starts]);
    let mask = mask_batch(&vec![x; cfg.starts]);
    let mut z = initial_latents(model, x, cfg, seed)?;
    let mut adam = AdamState::new([z.shape().to_vec()]);
    let mut history = Vec::with_capacity(cfg.iterations + 1);
    for _ in 0..cfg.iterations {
        let zv = Var::param(z.clone());
        let ev = evaluate(model, cfg, x, &zv, &xs, &mask)?;
        history.push(ev.contextual.iter().copied().fold(f64::INFINITY, f64::min));
        let g = grad(&ev.loss.sum(), &[&zv], false).remove(0);
        adam.step(&cfg.optimizer, std::slice::from_mut(&mut z), &[g.value().clone()]);
    }
    let ev = evaluate(model, cfg, x, &Var::constant(z.clone()), &xs, &mask)?;
    history.push(ev.contextual.iter().copied().fold(f64::INFINITY, f64::min));
    let losses = ev.loss.value().data().to_vec();
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite(format!("inpainting loss {losses:?}")));
    }
    let best = losses
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("at least one start");
    let (f, j) = (x.frames(), x.joints());
    let per = f * j * 2;
    let candidates: Vec<PoseSequence> = ev
        .aligned
        .value()
        .data()
        .chunks(per)
        .map(|c| {
            let mut s = PoseSequence::full(f, j, c.chunks(2).map(|p| [p[0], p[1]]).collect())?;
            s.norm = x.norm;
            Ok(s)
        })
        .collect::<Result<_>>()?;
    let start_mpjpe = candidates
        .iter()
        .map(|c| masked_mpjpe(c, x))
        .collect();
    let zdim = z.shape()[1];
    Ok(ChunkInversion {
        z: z.data()[best * zdim..(best + 1) * zdim].to_vec(),
        output: candidates[best].clone(),
        loss: losses[best],
        contextual: ev.contextual[best],
        start: best,
        transform: ev.transforms[best],
        start_losses: losses,
        start_mpjpe,
        history,
    })
}

/// Mean distance over the entries available in `reference`.
pub fn masked_mpjpe(output: &PoseSequence, reference: &PoseSequence) -> f64 {
    let (sum, n) = output
        .positions()
        .iter()
        .zip(reference.positions())
        .zip(reference.mask())
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, n), ((p, q), _)| (s + (p[0] - q[0]).hypot(p[1] - q[1]), n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Result of inpainting a sequence of any length.
#[derive(Debug, Clone, PartialEq)]
pub struct InpaintResult {
    /// Full mask, same frame count as the input, input coordinates.
    pub output: PoseSequence,
    /// First frame of every window, in processing order.
    pub chunk_starts: Vec<usize>,
    pub chunk_losses: Vec<f64>,
    pub selected_starts: Vec<usize>,
    /// Maps each window's generator output onto its normalized input.
    pub transforms: Vec<SimilarityTransform2D>,
    /// Index into the windows of the candidate used at every frame.
    pub frame_source: Vec<usize>,
    /// The input was shorter than one window and was padded by repeating
    /// its last frame.
    pub padded: bool,
    /// MPJPE of the output against the input's available joints.
    pub masked_mpjpe: f64,
}

fn pad_to(x: &PoseSequence, frames: usize) -> Result<PoseSequence> {
    let j = x.joints();
    let mut positions = x.positions().to_vec();
    let mut mask = x.mask().to_vec();
    let last = x.frames() - 1;
    for _ in x.frames()..frames {
        positions.extend_from_slice(&x.positions()[last * j..]);
        mask.extend_from_slice(&x.mask()[last * j..]);
    }
    let mut out = PoseSequence::new(frames, j, positions, mask)?;
    out.norm = x.norm;
    out.fps = x.fps;
    Ok(out)
}

/// `γ_p · MPJPE + γ_s · MPJVE` of one output frame over the joints available
/// in `x` at that frame. The velocity is taken into the frame, from `prev`.
fn frame_cost(cfg: &InferConfig, x: &PoseSequence, f: usize, cur: &[Point], prev: Option<&[Point]>) -> f64 {
    let j = x.joints();
    let (mut pos, mut np, mut vel, mut nv) = (0.0, 0usize, 0.0, 0usize);
    for k in 0..j {
        if !x.is_available(f, k) {
            continue;
        }
        let (c, t) = (cur[k], x.position(f, k));
        pos += (c[0] - t[0]).hypot(c[1] - t[1]);
        np += 1;
        if let Some(prev) = prev.filter(|_| f > 0 && x.is_available(f - 1, k)) {
            let tp = x.position(f - 1, k);
            let dv = [(c[0] - prev[k][0]) - (t[0] - tp[0]), (c[1] - prev[k][1]) - (t[1] - tp[1])];
            vel += dv[0].hypot(dv[1]);
            nv += 1;
        }
    }
    let mut cost = 0.0;
    if np > 0 {
        cost += cfg.gamma_p * pos / np as f64;
    }
    if nv > 0 {
        cost += cfg.gamma_s * vel / nv as f64;
    }
    cost
}

/// Inverts `x` window by window and merges the windows. Frames covered by
/// several windows take the candidate with the smallest frame cost against
/// the input. Windows are solved in the coordinates of `x`; only the
/// encoder sees each window normalized.
pub fn stitch(model: &Model, x: &PoseSequence, cfg: &InferConfig, workers: Option<usize>) -> Result<InpaintResult> {
    cfg.validate()?;
    let fw = model.frames();
    if x.joints() != model.topology.joint_count() {
        return Err(Error::Shape(format!(
            "sequence has {} joints, model topology has {}",
            x.joints(),
            model.topology.joint_count()
        )));
    }
    if x.available_count() == 0 {
        return Err(Error::EmptyMask("sequence has no available joints"));
    }
    let padded = x.frames() < fw;
    let work = if padded { pad_to(x, fw)? } else { x.clone() };
    let stride = if cfg.overlap { (fw / 2).max(1) } else { fw };
    let starts = window_starts(work.frames(), fw, stride)?;

    let invert = |(i, &s): (usize, &usize)| -> Result<ChunkInversion> {
        let chunk = work.slice_frames(s, fw)?;
        if chunk.available_count() == 0 {
            return Err(Error::EmptyMask("a window has no available joints"));
        }
        invert_chunk(model, &chunk, cfg, derive_seed(cfg.seed, &[i as u64]))
    };
    let solved: Vec<ChunkInversion> = crate::rng::with_workers(workers, || {
        starts.iter().enumerate().collect::<Vec<_>>().into_par_iter().map(invert).collect::<Result<Vec<_>>>()
    })?;

    let j = x.joints();
    let outputs: Vec<&[Point]> = solved.iter().map(|inv| inv.output.positions()).collect();
    let mut merged: Vec<Point> = Vec::with_capacity(work.frames() * j);
    let mut frame_source = Vec::with_capacity(work.frames());
    for f in 0..work.frames() {
        let mut best: Option<(f64, usize)> = None;
        for (c, &s) in starts.iter().enumerate() {
            if f < s || f >= s + fw {
                continue;
            }
            let cur = &outputs[c][(f - s) * j..(f - s + 1) * j];
            let prev = if f == 0 {
                None
            } else if f > s {
                Some(&outputs[c][(f - s - 1) * j..(f - s) * j])
            } else {
                Some(&merged[(f - 1) * j..f * j])
            };
            let cost = frame_cost(cfg, &work, f, cur, prev);
            if best.is_none_or(|(b, _)| cost < b) {
                best = Some((cost, c));
            }
        }
        let (_, c) = best.expect("windows cover every frame");
        let s = starts[c];
        merged.extend_from_slice(&outputs[c][(f - s) * j..(f - s + 1) * j]);
        frame_source.push(c);
    }
    merged.truncate(x.frames() * j);
    frame_source.truncate(x.frames());
    let mut output = PoseSequence::full(x.frames(), j, merged)?;
    output.norm = x.norm;
    output.fps = x.fps;
    if output.positions().iter().any(|p| !(p[0].is_finite() && p[1].is_finite())) {
        return Err(Error::NonFinite("stitched output".into()));
    }
    let masked = masked_mpjpe(&output, x);
    let inv = solved;
    Ok(InpaintResult {
        output,
        chunk_starts: starts,
        chunk_losses: inv.iter().map(|c| c.loss).collect(),
        selected_starts: inv.iter().map(|c| c.start).collect(),
        transforms: inv.iter().map(|c| c.transform).collect(),
        frame_source,
        padded,
        masked_mpjpe: masked,
    })
}

/// Upsamples a sequence on a reduced topology to the model's full topology.
/// The whole input is normalized once; the output is expressed in the
/// input's source coordinates.
pub fn upsample(
    model: &Model,
    x: &PoseSequence,
    reduced: &SkeletonTopology,
    cfg: &InferConfig,
    workers: Option<usize>,
) -> Result<InpaintResult> {
    let full = normalize(&embed(x, reduced, &model.topology)?)?;
    let mut result = stitch(model, &full, cfg, workers)?;
    result.output = result.output.denormalized();
    result.masked_mpjpe = masked_mpjpe(&result.output, &full.denormalized());
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetworkConfig;

    fn tiny_model() -> Model {
        let topo = SkeletonTopology::mpi_inf_3dhp_28();
        let cfg = NetworkConfig::for_grid(topo.grid_height(), 8, 2, 4);
        let arch = Architecture::new(cfg).unwrap();
        let params = arch.init(&mut stream(3, &[]));
        Model::new(topo, arch, params).unwrap()
    }

    fn wave(frames: usize, joints: usize) -> PoseSequence {
        PoseSequence::from_fn(frames, joints, |f, j| {
            let t = f as f64 * 0.2 + j as f64;
            [0.5 * t.sin(), 0.4 * (1.3 * t).cos()]
        })
        .unwrap()
    }

    fn quick() -> InferConfig {
        InferConfig {
            iterations: 5,
            starts: 3,
            ..InferConfig::default()
        }
    }

    #[test]
    fn zero_fill_full_mask_matches_encode() {
        let topo = SkeletonTopology::mpi_inf_3dhp_28();
        let x = wave(4, 28);
        assert_eq!(zero_fill(&x, &topo).unwrap(), encode_grid(&x, &topo, false).unwrap());
    }

    #[test]
    fn zero_fill_uses_centroid() {
        let topo = SkeletonTopology::mpi_inf_3dhp_28();
        let x = wave(4, 28);
        let mut mask = vec![true; x.mask().len()];
        mask[5] = false;
        let x = x.with_mask(mask).unwrap();
        let filled = centroid_filled(&x).unwrap();
        assert_eq!(filled.position(0, 5), x.centroid().unwrap());
        assert!(zero_fill(&x.with_mask(vec![false; 4 * 28]).unwrap(), &topo).is_err());
    }

    #[test]
    fn selected_start_has_minimum_loss() {
        let model = tiny_model();
        let x = wave(8, 28);
        let r = invert_chunk(&model, &x, &quick(), 1).unwrap();
        assert_eq!(r.start_losses.len(), 3);
        assert!(r.start_losses.iter().all(|&l| r.loss <= l));
        assert_eq!(r.history.len(), 6);
        assert_eq!(r.output.frames(), 8);
    }

    #[test]
    fn chunk_inversion_is_deterministic() {
        let model = tiny_model();
        let x = wave(8, 28);
        let a = invert_chunk(&model, &x, &quick(), 7).unwrap();
        let b = invert_chunk(&model, &x, &quick(), 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stitch_covers_every_frame() {
        let model = tiny_model();
        let x = wave(13, 28);
        let r = stitch(&model, &x, &quick(), Some(1)).unwrap();
        assert_eq!(r.output.frames(), 13);
        assert_eq!(r.chunk_starts, vec![0, 4, 5]);
        assert!(!r.padded);
        let short = stitch(&model, &wave(5, 28), &quick(), Some(1)).unwrap();
        assert!(short.padded);
        assert_eq!(short.output.frames(), 5);
    }

    #[test]
    fn stitch_is_independent_of_workers() {
        let model = tiny_model();
        let x = wave(16, 28);
        let a = stitch(&model, &x, &quick(), Some(1)).unwrap();
        let b = stitch(&model, &x, &quick(), Some(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_inputs_rejected() {
        let model = tiny_model();
        let x = wave(8, 28);
        assert!(invert_chunk(&model, &wave(6, 28), &quick(), 0).is_err());
        let empty = x.with_mask(vec![false; 8 * 28]).unwrap();
        assert!(invert_chunk(&model, &empty, &quick(), 0).is_err());
        let bad = InferConfig { starts: 0, ..quick() };
        assert!(invert_chunk(&model, &x, &bad, 0).is_err());
    }
}
