//! Image clustering through two-dimensional functional principal components,
//! randomized leverage-score feature selection and k-means.

// `!(x > 0.0)` style checks deliberately reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod clustering;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod fpca;
pub mod image_io;
pub mod linalg;
pub mod par;
pub mod pipeline;
pub mod rng;
pub mod sketch_select;
pub mod synthetic;
pub mod tables;

pub use error::{Error, ErrorClass, Result};
pub use features::FeatureMatrix;
pub use par::Execution;
