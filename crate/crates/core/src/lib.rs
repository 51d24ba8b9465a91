//! Verification, breakpoint search, interpretation and reward shaping for
//! small feedforward policies described by DRLP property scripts.
//!
//! The crate is organised bottom-up:
//!
//! - [`lp`]: dense two-phase simplex used for every feasibility check.
//! - [`network`]: feedforward models, interval propagation and k-unrolling.
//! - [`formula`]: affine atoms and Boolean structure over unrolled variables.
//! - [`drlp`]: the property language (parser, printer, lowering, classification).
//! - [`verify`]: constraint queries, ReLU branch-and-bound, BMC and k-induction.
//! - [`breakpoint`]: batch verification over templates.
//! - [`interpret`]: interpretability questions answered through breakpoints.
//! - [`shaping`]: property metric and reward shaping.
//! - [`mdp`]: finite-MDP dynamic programming used as a shaping oracle.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod breakpoint;
pub mod drlp;
pub mod formula;
pub mod interpret;
pub mod lp;
pub mod mdp;
pub mod network;
pub mod shaping;
pub mod verify;
