//! The user guide, included chapter by chapter from `book/src/`.
//!
//! Rendering `book/` with mdbook gives the browsable guide; including the
//! same markdown here means every fenced code example in the book is
//! compiled and executed by `cargo test --doc`, so the guide can never
//! drift from the API.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/designs.md")]
pub mod designs {}

#[doc = include_str!("../../../book/src/likelihood.md")]
pub mod likelihood {}

#[doc = include_str!("../../../book/src/prior.md")]
pub mod prior {}

#[doc = include_str!("../../../book/src/geometry.md")]
pub mod geometry {}

#[doc = include_str!("../../../book/src/posterior.md")]
pub mod posterior {}

#[doc = include_str!("../../../book/src/verification.md")]
pub mod verification {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
