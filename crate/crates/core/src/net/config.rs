use std::path::Path;

use jumps_autograd::ConvGeometry;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid channels: two joints per entry, two coordinates each.
pub const GRID_CHANNELS: usize = 4;
/// Critic input channels: positions stacked with velocities.
pub const CRITIC_CHANNELS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    None,
    /// Cross-sample statistics during training, running statistics in eval.
    Batch,
    /// Per-sample statistics over channels and positions, per-channel affine.
    Layer,
}

/// One strided convolution of the encoder/critic trunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub channels: usize,
    pub kernel: [usize; 2],
    pub stride: [usize; 2],
    pub padding: [usize; 2],
}

impl ConvLayer {
    /// Weights plus biases of this layer fed with `in_channels`.
    pub fn parameter_count(&self, in_channels: usize) -> usize {
        in_channels * self.channels * self.kernel[0] * self.kernel[1] + self.channels
    }
}

/// Architecture of the three subnetworks over an `H × F` grid.
///
/// `encoder` and `critic` list their convolutions from the grid inwards.
/// `generator` is given in the same forward form: the generator applies the
/// transposes of these convolutions in reverse order, so each stage exactly
/// restores the size the matching forward stage consumed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub latent_dim: usize,
    pub base_channels: usize,
    pub height: usize,
    pub frames: usize,
    pub leaky_slope: f64,
    pub norm_eps: f64,
    pub bn_momentum: f64,
    pub encoder_norm: Norm,
    pub critic_norm: Norm,
    pub generator_norm: Norm,
    pub encoder: Vec<ConvLayer>,
    pub critic: Vec<ConvLayer>,
    pub generator: Vec<ConvLayer>,
}

const DEFAULT_TOML: &str = include_str!("../../assets/network_default.toml");
const DESK_TOML: &str = include_str!("../../assets/network_desk.toml");

fn axis(n: usize, last: bool) -> (usize, usize, usize) {
    match n {
        n if n >= 4 && !last => (4, 2, 1),
        n if n >= 2 => (3, 2, 1),
        _ => (1, 1, 0),
    }
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self::from_toml(DEFAULT_TOML, Path::new("network_default.toml")).expect("bundled network config")
    }
}

impl NetworkConfig {
    /// Small preset for single-core training runs.
    pub fn desk() -> Self {
        Self::from_toml(DESK_TOML, Path::new("network_desk.toml")).expect("bundled network config")
    }

    /// Four-stage schedule for an `height × frames` grid: the first stage
    /// halves only the frame axis, later stages halve both axes while they
    /// are long enough. Channels double per stage from `base`.
    pub fn for_grid(height: usize, frames: usize, base: usize, latent_dim: usize) -> Self {
        let mut layers = Vec::new();
        let [mut h, mut f] = [height, frames];
        for i in 0..4 {
            let ((kh, sh, ph), (kf, sf, pf)) = if i == 0 {
                ((3, 1, 1), if f >= 4 { (4, 2, 1) } else { (3, 1, 1) })
            } else {
                (axis(h, i == 3), axis(f, i == 3))
            };
            layers.push(ConvLayer {
                channels: base << i,
                kernel: [kh, kf],
                stride: [sh, sf],
                padding: [ph, pf],
            });
            h = (h + 2 * ph - kh) / sh + 1;
            f = (f + 2 * pf - kf) / sf + 1;
        }
        Self {
            latent_dim,
            base_channels: base,
            height,
            frames,
            leaky_slope: 0.2,
            norm_eps: 1e-5,
            bn_momentum: 0.1,
            encoder_norm: Norm::Batch,
            critic_norm: Norm::Layer,
            generator_norm: Norm::Batch,
            encoder: layers.clone(),
            critic: layers.clone(),
            generator: layers,
        }
    }

    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::format(origin, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("network config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&crate::io::read_to_string(path)?, path)
    }

    /// Forward geometries of a trunk fed with `in_channels`.
    pub(crate) fn trunk_geometry(&self, layers: &[ConvLayer], in_channels: usize) -> Result<Vec<ConvGeometry>> {
        let mut size = [self.height, self.frames];
        let mut channels = in_channels;
        let mut out = Vec::with_capacity(layers.len());
        for (i, l) in layers.iter().enumerate() {
            let g = ConvGeometry::new(channels, size, l.kernel, l.stride, l.padding).ok_or_else(|| {
                Error::Config(format!("layer {i}: kernel {:?} does not fit input {size:?}", l.kernel))
            })?;
            size = g.out_size;
            channels = l.channels;
            out.push(g);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.height == 0 || self.frames < 2 {
            return Err(Error::Config("latent_dim and height must be positive, frames at least 2".into()));
        }
        if !(self.leaky_slope >= 0.0 && self.norm_eps > 0.0 && (0.0..=1.0).contains(&self.bn_momentum)) {
            return Err(Error::Config("invalid leaky_slope, norm_eps or bn_momentum".into()));
        }
        for (name, layers) in [("encoder", &self.encoder), ("critic", &self.critic), ("generator", &self.generator)] {
            if layers.is_empty() || layers.iter().any(|l| l.channels == 0) {
                return Err(Error::Config(format!("{name} needs at least one layer with positive channels")));
            }
            self.trunk_geometry(layers, GRID_CHANNELS)
                .map_err(|e| Error::Config(format!("{name}: {e}")))?;
        }
        if self.critic_norm == Norm::Batch {
            // A per-sample gradient penalty is ill-posed under cross-sample statistics.
            return Err(Error::Config("critic_norm must be none or layer".into()));
        }
        Ok(())
    }
}
