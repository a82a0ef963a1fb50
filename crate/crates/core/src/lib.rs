//! Reward statistics for finite-state Markov jump processes with
//! time-varying rates.
//!
//! The library computes the mean and variance of a cumulative reward
//! `R(t)` — time-integrated state rewards plus lump sums collected at
//! jump times, at scheduled deterministic times, and at the events of a
//! state-modulated Poisson process — by integrating backward ODE
//! systems, and approximates the distribution of `R(t)` by a normal law.
//! It also covers the periodic special case (long-run reward rate and
//! asymptotic variance per unit time), models that are reset at integer
//! times, and exact-in-law Monte Carlo simulation for cross-checking.
//!
//! Entry points:
//! - [`model::ModelSpec`] describes the chain, the reward structure, and
//!   the simulation bounds; [`modelfile`] loads it from JSON.
//! - [`moments::solve_moments`] produces `E R(t)` and `Var R(t)`.
//! - [`sim::monte_carlo`] estimates the same quantities by simulation.
//! - [`periodic::solve_periodic`] computes the period-1 constants.
//! - [`cltapprox`] holds the normal approximation and coverage studies.

pub mod cltapprox;
pub mod error;
pub mod expr;
pub mod model;
pub mod moments;
pub mod modelfile;
pub mod models;
pub mod ode;
pub mod periodic;
pub mod quad;
pub mod resetting;
pub mod sim;
pub mod transition;

pub use error::{Error, Result};
