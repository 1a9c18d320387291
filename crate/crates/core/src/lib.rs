#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod io;
pub mod likelihood;
pub mod model;
pub mod simulate;
pub mod summation;

pub use error::{Error, Result};
pub use geometry::{Point, Polygon};
pub use likelihood::{fit, Evaluator, FitResult, LikelihoodParts};
pub use model::{Event, Model, ModelSpec, ParameterVector, SpaceTimeGrid};
