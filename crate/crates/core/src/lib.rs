//! Symmetric-triplane scalar fields with reflection-symmetry priors.
//!
//! A 3D field is stored as three axis-aligned feature planes (XY, XZ, YZ).
//! A point's feature is the sum of its three bilinear plane samples; small
//! MLP decoders turn features into SDF + deformation (geometry) or RGB
//! (texture). On top of that this crate provides:
//!
//! - view-wise spatial attention over each geometry plane ([`vsa`]),
//! - reflection-symmetry losses on planes and attention maps
//!   ([`regularizers`]), with analytic gradients throughout,
//! - marching-tetrahedra mesh extraction from a deformable tet grid
//!   ([`dmtet`]),
//! - Chamfer / coverage / MMD point-cloud metrics ([`metrics`]),
//! - a fitting harness ([`harness`]) that optimizes planes, attention
//!   kernels, and decoders against analytic target shapes under partial
//!   azimuth visibility.
//!
//! All numerics are 64-bit. Every operation is a pure function of its
//! inputs; parameters are only mutated by the optimizer between steps, so
//! batch evaluation is safe to parallelize externally.

pub mod check;
pub mod dmtet;
pub mod field;
pub mod harness;
pub mod metrics;
pub mod objective;
pub mod planes;
pub mod regularizers;
pub mod triplane;
pub mod vsa;

mod io;

pub use planes::{Axis, FeaturePlane, SampleGrad, SimilarityMatrix};
pub use triplane::{GeometryTriplane, Point3, TextureTriplane};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument violated a precondition (non-finite coordinate, empty
    /// input list, zero resolution, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Two operands had incompatible resolutions or channel counts.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    /// An operation required a specific axis labelling the plane lacks.
    #[error("axis mismatch: {0}")]
    AxisMismatch(String),
    /// A serialized blob had a bad magic, version, or length.
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
