//! Unsupervised point cloud denoising.
//!
//! A small Monte Carlo convolution encoder-decoder is trained to regress every
//! noisy point onto a sample drawn from a spatial/appearance prior around it,
//! using an annealed L0 objective so the prediction converges to the closest
//! mode of the noisy point density. The crate also ships the surrounding
//! pipeline: surface sampling, noise simulation, classical filters, geometry
//! I/O and Chamfer evaluation.

pub mod cloud;
pub mod error;
pub mod eval;
pub mod filters;
pub mod linalg;
pub mod meshio;
pub mod net;
pub mod noise;
pub mod prior;
pub mod toy;
pub mod train;

pub use cloud::{NeighborIndex, Point, PointCloud, Rgb, TriangleMesh, Vec3};
pub use error::{Error, Result};
