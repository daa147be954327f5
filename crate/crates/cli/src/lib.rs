//! Library side of the command-line front end: the tabular experiment harness
//! and the continuous-control experiment runner.

pub mod harness;
pub mod reirl_exp;
