//! Smart-meter privacy with a rechargeable battery.
//!
//! A user's demand `X_t` is served partly from the grid (`Y_t`, observed by
//! the utility) and partly from a battery with state `S_t`. The battery obeys
//! `S_{t+1} = S_t + Y_t - X_t`. This crate synthesizes randomized charging
//! policies that minimize the leakage rate `(1/T) I(X^T, S_1; Y^T)` and
//! evaluates the leakage of arbitrary policies.
//!
//! Module map:
//!
//! * [`model`]: alphabets, distributions, battery dynamics, system specs.
//! * [`policy`]: the policy taxonomy and the structured/equiprobable policies.
//! * [`belief`]: the joint filter over `X x S` and the difference filter over `W = S - X`.
//! * [`leakage`]: exact and Monte Carlo evaluation of `L_T`.
//! * [`dp`]: grid value iteration on the belief simplex.
//! * [`iidopt`]: the single-letter problem `min_theta I(S - X; X)` for i.i.d. demand.
//! * [`convergence`]: strong-achievability checks for structured policies.
//! * [`bounds`]: closed-form bounds for uniform continuous demand.

pub mod belief;
pub mod bounds;
pub mod convergence;
pub mod dp;
pub mod error;
pub mod format;
pub mod iidopt;
pub mod info;
pub mod leakage;
pub mod model;
pub mod policy;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
pub use info::Units;
pub use model::{Alphabet, DemandLaw, Geometry, Pmf, SystemSpec, TransitionMatrix};
