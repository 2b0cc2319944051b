//! Desk-scale experiment harness: analytic target shapes, visibility
//! filtering, the fitting loop, diagnostics, and rendering.
//!
//! The CLI drives these pieces; everything here is also usable as a
//! library and stays deterministic for a given config and seed.

pub mod analyze;
pub mod config;
pub mod fit;
pub mod image;
pub mod model;
pub mod render;
pub mod shapes;
pub mod visibility;

pub use config::RunConfig;
pub use fit::{run_fit, FitOutcome, FitReport};
pub use model::Model;
pub use shapes::TargetShape;
pub use visibility::VisibilitySpec;
