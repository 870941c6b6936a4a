//! A numerical laboratory for a cascade of spreading opinions.
//!
//! A population holds opinions of increasing complexity `0, 1, 2, ...`;
//! opinion `n + 1` can only be adopted by individuals already at level `n`,
//! and adopters diffuse and transmit while excited. Each level invades the
//! plateau left behind by the previous one as a Fisher-KPP front, and the
//! cascade stops at the first level whose reproduction number drops to 1.
//!
//! The crate has three layers:
//!
//! * [`sequences`] computes the closed-form side: plateau densities,
//!   spreading speeds, settled fractions, the maximal complexity, and its
//!   almost-exponential growth with the initial density.
//! * [`solver`] integrates the reaction-diffusion hierarchy on a 1-D grid
//!   and logs conservation and consistency diagnostics.
//! * [`fronts`] turns snapshots into measured front positions, speeds and
//!   plateau readings that can be compared against the analytic values.
//!
//! The mdbook under `book/` walks through the concepts; its code snippets
//! compile against this crate and run as doctests.
//!
//! ```
//! use opinion_cascade::model::{ModelParams, OpinionParams};
//! use opinion_cascade::sequences::build_sequences;
//!
//! let params = ModelParams::constant(2.0, OpinionParams::new(1.0, 1.0, 1.0), 10);
//! let ladder = build_sequences(&params, 1e-12).unwrap();
//! assert_eq!(ladder.n_star.to_string(), "3");
//! ```

pub mod csvio;
pub mod fronts;
pub mod model;
pub mod quad;
pub mod sequences;
pub mod solver;

pub use fronts::{PlateauReading, SpeedEstimate};
pub use model::{
    FieldState, FrontTrace, Grid1D, Lambda, MaxComplexity, ModelParams, OpinionParams,
    PropagationSequences,
};
pub use sequences::SweepTable;
pub use solver::{BumpSpec, InvariantLog, RunOptions, Scheme, SolverConfig};

// The book's code snippets double as tests so the guide can never drift from
// the library.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/ladder.md")]
    mod ladder {}
    #[doc = include_str!("../../../book/src/growth.md")]
    mod growth {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/fronts.md")]
    mod fronts {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
