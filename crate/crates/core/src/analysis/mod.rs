//! Error measurement and the statistics built on Monte Carlo batches of
//! sup-norm errors.

pub mod band;
pub mod batch;
pub mod reference;
pub mod stats;
pub mod sup;
