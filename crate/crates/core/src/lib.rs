// `!(x >= 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamformer;
pub mod covstream;
pub mod eig3;
pub mod error;
pub mod formats;
pub mod linalg;
pub mod millerinv;
pub mod pipeline;
pub mod report;
pub mod simkit;

pub use error::{Error, Result};
