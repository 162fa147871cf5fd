//! Multi-camera bird's-eye-view detection and tracking: camera geometry,
//! image-to-BEV feature lifting, heatmap heads, an online tracker, CLEAR-MOT
//! and identity metrics, and a synthetic multi-camera simulator.

// Validation writes `!(x > 0.0)` on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod bev;
pub mod geometry;
pub mod heads;
pub mod lifting;
pub mod metrics;
pub mod pipeline;
pub mod sim;
pub mod tracker;
