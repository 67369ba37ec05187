// negated float comparisons reject NaN on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bases;
pub mod cli;
pub mod design;
pub mod diffops;
pub mod error;
pub mod gds;
pub mod lpcore;
pub mod metrics;
pub mod simgen;
pub mod theory;
pub mod tuning;

pub use error::{GdsError, Result};
