//! Imaging-sonar fish monitoring: simulate, detect, track, count and measure
//! fish in polar sonar frames, evaluate against ground truth, and manage an
//! expert review queue for low-confidence outputs.

pub mod analytics;
pub mod appearance;
pub mod assign;
pub mod detector;
pub mod echogram;
pub mod error;
pub mod frame;
pub mod geometry;
pub mod kalman;
pub mod mask;
pub mod metrics;
pub mod mot;
pub mod pgm;
pub mod pipeline;
pub mod review;
pub mod rng;
pub mod simulator;
pub mod sraw;
pub mod tracker;

pub use error::{Error, Result};
pub use frame::{iou, GridBox, SonarFrame};
pub use geometry::SonarGeometry;
