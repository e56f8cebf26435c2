//! Pipeline orchestration: configuration, the discovery loop, the paired
//! plausibility experiment, and loss reporting.

pub mod config;
pub mod discover;
pub mod evalloss;
pub mod pairs;

pub use config::{PipelineConfig, SegmenterKind};
pub use discover::{
    discover_scene, objects_by_frame, run_discover, DiscoverReport, DiscoverResult,
};
pub use evalloss::{eval_loss, LossReport};
pub use pairs::{find_pairs, run_pair_experiment, scene_surprise, PairReport, TrackSource};
