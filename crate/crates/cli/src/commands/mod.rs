pub mod backtest;
pub mod compare;
pub mod estimate;
pub mod synth;
pub mod verify;
