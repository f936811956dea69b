//! Omnidirectional referring multi-object tracking.
//!
//! The pipeline runs language-conditioned detection (behind [`ingest::DetectionSource`]),
//! two-stage crop embedding (behind [`features::EmbeddingProvider`]), cosine-cost
//! Hungarian association and a miss-counting track lifecycle. Evaluation uses the
//! HOTA family with seam-aware IoU for equirectangular frames.

pub mod association;
pub mod error;
pub mod features;
pub mod geometry;
pub mod ingest;
pub mod keyframes;
pub mod metrics;
pub mod synth;
pub mod tracker;

mod http;

pub use error::{Error, ErrorClass, Result};
pub use geometry::{BoundingBox, FrameDims, WrapRegion};
pub use http::ServiceConfig;
