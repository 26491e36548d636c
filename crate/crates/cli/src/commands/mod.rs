pub mod analyze;
pub mod eval;
pub mod inspect;
pub mod synth;
pub mod train;
