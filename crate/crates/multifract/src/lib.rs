//! Coin-tossing measures on the dyadic tree and their multifractal analysis.
//!
//! A weight sequence `(p_n)` with every `p_n ∈ (0,1)` determines a Borel
//! probability measure on `[0,1)` (equivalently on infinite binary strings):
//! the mass of the dyadic cylinder `I = [ε_1 … ε_n]` is
//!
//! ```text
//! μ(I) = ∏_{j=1}^n  p_j^{1-ε_j} (1-p_j)^{ε_j},
//! ```
//!
//! i.e. digit `0` at level `j` carries weight `p_j` and digit `1` carries
//! `1-p_j`. When the sequence is constant this is the classical Bernoulli
//! (binomial) measure; letting the weights vary with depth produces measures
//! whose scaling exponents genuinely oscillate, which is the regime this
//! crate is built to explore numerically.
//!
//! The crate is organised around four layers:
//!
//! * [`measure`] — weight sequences, cylinders, measure evaluation, lazy
//!   block/quota scheduling, and seeded path sampling;
//! * [`spectrum`] — the moment-scaling curves `τ_n(q)`, their limit
//!   estimates, analytic branch curves with first/second derivatives,
//!   Legendre transforms, and entropy dimensions;
//! * [`gibbs`] — the reweighting `p ↦ p^q / (p^q + (1-p)^q)` that tilts a
//!   measure by a moment exponent, together with its consistency checks;
//! * [`transitions`] — machinery that synthesizes measures whose scaling
//!   curve is a supremum of finitely many analytic branches, with kinks
//!   (phase transitions) at prescribed abscissas.
//!
//! All logarithms are base 2 throughout. Everything is deterministic: the
//! only randomness enters through explicitly seeded generators.

pub mod error;
pub mod gibbs;
pub mod measure;
pub mod spectrum;
pub mod transitions;

pub use error::Error;
pub use measure::{CylinderPath, Weight, WeightSequence};
pub use spectrum::TauCurve;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
