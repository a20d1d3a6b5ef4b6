//! Key-frame extraction and evaluation for tool-tracking video datasets.
//!
//! The crate turns per-frame tool detections into compact training sets:
//! parse detection streams into role-resolved centroid tracks
//! ([`detections`]), derive speeds and accelerations ([`kinematics`]),
//! pick key frames with anchored accumulation sweeps driven by
//! displacement, velocity variation, uniform strides, or pixel MSE
//! ([`selection`]), rebalance and window the surviving frames
//! ([`pipeline`]), and score predicted phase sequences against ground
//! truth ([`eval`]). Deterministic fixtures live in [`synth`]; [`pgm`]
//! holds the grayscale frame codec.

pub mod detections;
pub mod eval;
pub mod kinematics;
pub mod pgm;
pub mod pipeline;
pub mod selection;
pub mod synth;
