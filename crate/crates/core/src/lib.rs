//! Partial least squares regression and its generalized linear extension,
//! for complete and incomplete predictor matrices, with cross-validated
//! model selection and bootstrap inference on the predictor coefficients.

pub mod boot;
pub mod cli;
pub mod data;
pub mod error;
pub mod family;
pub mod glm;
pub mod linalg;
mod par;
pub mod pls;
pub mod plsglr;
pub mod rng;
pub mod selection;
pub mod svg;

pub use data::{MaskedMatrix, Response, ScalingRecord};
pub use error::{PlsError, Result};
pub use family::Family;
