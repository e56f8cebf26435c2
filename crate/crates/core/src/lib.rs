//! Discovery, tracking and physical validation of 3D cuboid objects in
//! videos.
//!
//! The crate decomposes each frame into masks (recursively or with a
//! classical color-clustering baseline), stitches overlapping sub-patch
//! segments into global objects, lifts masks to cuboids through a pinhole
//! camera, scores observed object states against first-order motion
//! predictions, and turns those scores into surprise curves for judging
//! physical plausibility. A deterministic synthetic-scene generator and the
//! full evaluation suite (2D/3D IoU, detection, recall, correlation,
//! relative accuracy) round out the toolkit.

pub mod camera;
pub mod cuboid;
pub mod dynamics;
pub mod error;
pub mod frame;
pub mod genmodel;
pub mod geometry;
pub mod mask;
pub mod metrics;
pub mod patchwork;
pub mod pipeline;
pub mod plot;
pub mod segment;
pub mod surprise;
pub mod synth;
pub mod track;

pub use camera::Camera;
pub use cuboid::Cuboid;
pub use error::{Error, Result};
pub use frame::Frame;
pub use mask::Mask;
pub use track::ObjectTrack;
