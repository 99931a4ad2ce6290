//! Robust multi-structure geometric model fitting.
//!
//! Hypotheses drawn from guided minimal subsets are refined into weighted
//! hyperedges, and spectral clustering of the resulting hypergraph separates
//! the structures. See the guide under `book/` for a walkthrough.
//!
//! ```
//! use homf::eval::{self, SyntheticSpec};
//! use homf::geometry::ModelKind;
//! use homf::pipeline::{self, HomfConfig};
//!
//! let set = eval::gen_two_lines(&SyntheticSpec::new(600, 200, 200, 1.0, 1)).unwrap();
//! let fit = pipeline::fit(&set.data, &HomfConfig::new(ModelKind::Line2D, 2)).unwrap();
//! assert_eq!(fit.models.len(), 2);
//! ```

pub mod geometry;
pub mod kde;
pub mod sampling;
pub mod hypergraph;
pub mod clustering;
pub mod pipeline;
pub mod eval;

// Each guide chapter is compiled as a doctest module so its snippets stay
// in sync with the API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/inliers.md")]
    mod inliers {}
    #[doc = include_str!("../../../book/src/hyperedges.md")]
    mod hyperedges {}
    #[doc = include_str!("../../../book/src/clustering.md")]
    mod clustering {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
