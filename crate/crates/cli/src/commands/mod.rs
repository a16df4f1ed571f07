pub mod convert;
pub mod cost;
pub mod eval;
pub mod grid;
pub mod report;
pub mod synth;
pub mod tokenize;
pub mod train;
