//! Isogeometric Reissner-Mindlin plates in mixed form, with static
//! condensation of the shear forces through approximate dual test
//! functions.
//!
//! The guide in `book/` walks through the modules in order; its Rust
//! snippets run as doc-tests of this crate.

pub mod quadrature;
pub mod spline;
pub mod linalg;
pub mod dual;
pub mod plate;
pub mod multipatch;
pub mod condensation;
pub mod bench;

// Every chapter of the guide is a module here so `cargo test --doc` runs
// its snippets and failures point at the chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/splines.md")]
    mod splines {}
    #[doc = include_str!("../../../book/src/dual-bases.md")]
    mod dual_bases {}
    #[doc = include_str!("../../../book/src/mixed-plate.md")]
    mod mixed_plate {}
    #[doc = include_str!("../../../book/src/condensation.md")]
    mod condensation {}
    #[doc = include_str!("../../../book/src/multipatch.md")]
    mod multipatch {}
    #[doc = include_str!("../../../book/src/benchmark.md")]
    mod benchmark {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
