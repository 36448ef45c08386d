// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptation;
pub mod controller;
pub mod manipulator;
pub mod rcm;
pub mod scenario;
pub mod sim;
pub mod spatial;
pub mod wrenches;
