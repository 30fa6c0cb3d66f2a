//! Critical catalytic branching random walk (CBRW) on the integer lattice Z^d.
//!
//! A particle performs a continuous-time symmetric random walk with a finite
//! jump kernel a(·).  A single catalyst sits at the origin: while there, the
//! particle waits an Exp(1) time and then either dies leaving a random number
//! of offspring (probability α, offspring generating function f), or jumps
//! away like the free walk (probability 1−α).  Away from the origin the walk
//! is free.  Under the criticality relation
//!
//!   α f′(1) + (1−α)(1−h_d) = 1,
//!
//! where h_d is the probability the walk never returns to the origin, the
//! local particle numbers μ(t;y) neither explode nor die out exponentially,
//! and their means, survival probabilities and conditional limit laws have
//! dimension-dependent polynomial/logarithmic asymptotics.
//!
//! The crate verifies those asymptotics at desk scale by three independent
//! routes that must agree:
//!
//! * exact event-driven Monte Carlo of the particle system ([`simulate`]),
//! * numerical solution of the convolution (Volterra) equations satisfied by
//!   m(t;x,y) = E_x μ(t;y) and q(t;x,y) = P_x(μ(t;y) > 0) ([`volterra`]),
//! * closed-form asymptotic evaluators ([`asymptotics`]).
//!
//! Supporting machinery: Fourier/torus quadrature for the free walk
//! ([`transition`]), first-passage times with taboo ([`taboo`]), and the
//! auxiliary six-type age-dependent branching process whose algebra encodes
//! criticality ([`bellman`]).

pub mod asymptotics;
pub mod bellman;
pub mod error;
pub mod grid;
pub mod lattice;
pub mod model;
pub mod reference;
pub mod rng;
pub mod simulate;
pub mod taboo;
pub mod transition;
pub mod validate;
pub mod volterra;

pub use error::{CbrwError, Result};
