//! Comparison schedulers.

mod midrr;
mod sfq;

pub use midrr::MiDrr;
pub use sfq::{SingleServerSfq, VirtualClock};
