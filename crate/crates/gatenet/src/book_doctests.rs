//! Runs every Rust code block in the guide under `book/` as a doc-test.
//!
//! mdBook renders the guide but cannot compile its examples against this
//! crate, so each chapter is attached as documentation to an empty module
//! here and picked up by `cargo test --doc`. One module per chapter keeps a
//! failing block traceable to the file it came from. The module only exists
//! under `cfg(doctest)`; it is invisible to normal builds and to rustdoc's
//! rendered output.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/gated-networks.md")]
pub mod gated_networks {}

#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}

#[doc = include_str!("../../../book/src/variants.md")]
pub mod variants {}

#[doc = include_str!("../../../book/src/sequences.md")]
pub mod sequences {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

#[doc = include_str!("../../../README.md")]
pub mod readme {}
