// Negated comparisons are deliberate: they reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod diagnostics;
pub mod fields;
pub mod internal;
pub mod kernels;
pub mod kinetic;
pub mod particles;
pub mod run;
pub mod special;
