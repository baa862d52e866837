//! Joint upsampling and inpainting of 2D human pose sequences.
//!
//! A sequence of 2D poses is laid out as a grid whose rows pair left and
//! right joints and whose columns are frames. An encoder, a generator and a
//! Wasserstein critic are trained on such grids. At inference, missing
//! joints are filled in by searching the generator's latent space for the
//! output that agrees with the observed joints, aligning each candidate to
//! the input with a similarity transform. Long inputs are processed in
//! half-overlapping windows and stitched frame by frame.
//!
//! ```
//! use jumps::{decode_grid, encode_grid, normalize, PoseSequence, SkeletonTopology};
//!
//! let topo = SkeletonTopology::mpi_inf_3dhp_28();
//! let seq = PoseSequence::from_fn(24, 28, |f, j| [j as f64, (f + j) as f64 * 0.5])?;
//! let seq = normalize(&seq)?;
//! let grid = encode_grid(&seq, &topo, false)?;
//! assert_eq!((grid.channels(), grid.height(), grid.frames()), (4, topo.grid_height(), 24));
//! assert_eq!(decode_grid(&grid, &topo)?.positions(), seq.positions());
//! # Ok::<(), jumps::Error>(())
//! ```

pub mod cli;
pub mod data;
pub mod error;
pub mod grid;
pub mod infer;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod net;
pub mod plot;
pub mod procrustes;
pub mod rng;
pub mod sequence;
pub mod topology;
pub mod train;
pub mod transform;

pub use error::{Error, Result};
pub use grid::{decode_grid, encode_grid, GridCodec, GridTensor};
pub use procrustes::procrustes_align;
pub use sequence::{downsample, normalize, PoseFile, PoseSequence};
pub use topology::SkeletonTopology;
pub use transform::{AffineTransform2D, SimilarityTransform2D};
