pub mod baselines;
pub mod defense;
pub mod error;
pub mod eval;
pub mod gcn;
pub mod graph;
pub mod ppr;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/ppr.md")]
    mod ppr {}
    #[doc = include_str!("../../../book/src/gcn.md")]
    mod gcn {}
    #[doc = include_str!("../../../book/src/defense.md")]
    mod defense {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
