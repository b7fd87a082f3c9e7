//! Gap filling for sub-hourly precipitation records.
//!
//! A two-step learner first decides whether a half-hour interval was wet and
//! then estimates the amount for intervals judged wet. A multiquadric surface
//! fit over nearby gauges serves as the reference method.

pub mod dataset;
pub mod error;
pub mod hurdle;
pub mod imputer;
pub mod learners;
pub mod matrix;
pub mod metrics;
pub mod preprocess;
pub mod report;
pub mod surface;
pub mod synth;
pub mod tuning;

pub use error::{Error, ErrorKind, Result};
pub use matrix::Matrix;
