//! Interference, outage, mean-delay and MRC analysis for a receiver at the
//! origin of a 1D field of interferers with hardcore headways.

pub mod delay;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod mc;
pub mod model;
pub mod moments;
pub mod outage;
pub mod process;
pub mod specfun;

pub use error::{Error, Result};
pub use model::{LinkConfig, SirThreshold, TrafficModel};

/// Library version recorded in CSV headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/traffic.md")]
    mod traffic {}
    #[doc = include_str!("../../../book/src/moments.md")]
    mod moments {}
    #[doc = include_str!("../../../book/src/outage.md")]
    mod outage {}
    #[doc = include_str!("../../../book/src/delay.md")]
    mod delay {}
    #[doc = include_str!("../../../book/src/mrc.md")]
    mod mrc {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/reproduce.md")]
    mod reproduce {}
}
