//! Timely MMSE estimation of an Ornstein-Uhlenbeck process over a noisy
//! binary symmetric channel with receiver processing time.
//!
//! The crate covers the whole pipeline: exact OU simulation ([`ou`]),
//! quantization ([`quantizer`]), incremental-redundancy (IIR) and
//! fixed-redundancy (FR) channel models ([`channel`]), age-penalty
//! functionals ([`penalty`]), optimal sampling policies ([`policy`]), an
//! event-driven Monte Carlo simulator ([`sim`]) that checks every closed form,
//! and the parameter studies behind the command-line driver
//! ([`experiments`], [`validation`]).
//!
//! Random streams come from [`rng::stream`], a seeded ChaCha20 generator, so
//! every simulation is bit-reproducible given its seed.

// negated float comparisons are used on purpose: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod experiments;
pub mod ou;
pub mod penalty;
pub mod policy;
pub mod quantizer;
pub mod rng;
pub mod sim;
pub mod validation;

pub use error::{Error, Result};
