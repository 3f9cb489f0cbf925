//! Distillation loop: batching, joint objective, optimizer, EMA,
//! checkpointing.

mod adam;
mod distill;
mod ema;
pub mod metrics_log;

pub use adam::Adam;
pub use distill::{distill, DistillOutcome, TrainState};
pub use ema::Ema;
