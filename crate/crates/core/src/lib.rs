//! Energy-aware cell switching for vertical heterogeneous networks.

pub mod config;
mod error;
pub mod estimators;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod numfmt;
pub mod renewable;
pub mod switching;
pub mod traffic;

pub use error::{Error, Result};

// Runs the guide's and the README's snippets as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/network-model.md")]
    mod network_model {}
    #[doc = include_str!("../../../book/src/traffic.md")]
    mod traffic {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    mod estimators {}
    #[doc = include_str!("../../../book/src/renewable.md")]
    mod renewable {}
    #[doc = include_str!("../../../book/src/switching.md")]
    mod switching {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
