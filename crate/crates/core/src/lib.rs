//! QPSK MIMO-radar waveform design with null-space projection toward
//! cellular base stations. See `book/` for a walk-through.

pub mod array_model;
pub mod covariance_synthesis;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod nullspace;
pub mod seed;
pub mod sharing;
pub mod waveform_gen;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/beampattern.md")]
    mod beampattern {}
    #[doc = include_str!("../../../book/src/covariance.md")]
    mod covariance {}
    #[doc = include_str!("../../../book/src/waveforms.md")]
    mod waveforms {}
    #[doc = include_str!("../../../book/src/nullspace.md")]
    mod nullspace {}
    #[doc = include_str!("../../../book/src/sharing.md")]
    mod sharing {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
