pub mod bench;
pub mod certify;
pub mod encode;
pub mod geometry;
pub mod io;
pub mod model;
pub mod post;
pub mod render;
mod sexp;
pub mod solver;
pub mod synth;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/problems.md")]
    mod problems {}
    #[doc = include_str!("../../../book/src/successors.md")]
    mod successors {}
    #[doc = include_str!("../../../book/src/encodings.md")]
    mod encodings {}
    #[doc = include_str!("../../../book/src/refinement.md")]
    mod refinement {}
    #[doc = include_str!("../../../book/src/certificates.md")]
    mod certificates {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    mod benchmarks {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
