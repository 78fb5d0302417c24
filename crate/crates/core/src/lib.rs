//! A cheap bag-of-words sentiment classifier, an expensive bi-LSTM, and
//! policies that decide per sentence whether the cheap answer is good
//! enough. Includes the training pipeline and a speed-accuracy benchmark.

pub mod cascade;
pub mod data;
pub mod eval;
pub mod models;
pub mod nn;
