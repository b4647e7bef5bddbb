//! Feature construction for each data domain.

pub mod exogenous;
pub mod options;
pub mod technical;
