//! The guide under `book/` is plain mdbook, which cannot compile listings
//! against workspace crates. Each chapter is included here as module docs so
//! `cargo test --doc` runs every listing.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/covariance.md")]
pub mod covariance {}

#[doc = include_str!("../../../book/src/decay.md")]
pub mod decay {}

#[doc = include_str!("../../../book/src/fermi.md")]
pub mod fermi {}

#[doc = include_str!("../../../book/src/fibration.md")]
pub mod fibration {}

#[doc = include_str!("../../../book/src/spectral.md")]
pub mod spectral {}

#[doc = include_str!("../../../book/src/chaos.md")]
pub mod chaos {}

#[doc = include_str!("../../../book/src/toy.md")]
pub mod toy {}

#[doc = include_str!("../../../book/src/mourre.md")]
pub mod mourre {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
