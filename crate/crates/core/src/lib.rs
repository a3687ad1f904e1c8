// `!(x > 0.0)` style checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod compare;
pub mod dsp;
pub mod error;
pub mod estimate;
pub mod features;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod sim;
pub mod stream;
pub mod svm;
pub mod training;

pub use error::{Error, Result};
pub use stream::{GroundTruth, SampleStream};
