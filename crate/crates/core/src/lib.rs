#![allow(clippy::needless_range_loop)]

pub mod clickstream;
pub mod error;
pub mod estimator;
pub mod evaluation;
pub mod io;
pub mod poset;
pub mod sequence;
