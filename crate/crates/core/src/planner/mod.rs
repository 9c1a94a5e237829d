//! Mixed-integer avoidance planning.

pub mod miqp;
pub mod problem;
pub mod qp;
pub mod receding;
