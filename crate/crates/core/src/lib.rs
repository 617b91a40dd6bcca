// Range checks are written `!(x > 0.0)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod cli;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod explainer;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod trainer;

pub use error::{Error, Result};
