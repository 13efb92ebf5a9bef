//! Core algorithms for oracle-guided actor-critic reinforcement learning.
//!
//! This crate is `no_std` + `alloc` and holds everything that does not touch
//! the filesystem or clock: the dense-network kernel ([`nn`]), desk-scale
//! environments ([`envs`]), oracle policies ([`oracle`]), replay buffers
//! ([`replay`]), the SAC agent ([`sac`]), epistemic-uncertainty estimators
//! ([`uncertainty`]), the critic-confidence guidance controller ([`ccge`]),
//! the DQN uncertainty study agent ([`dqn`]), and evaluation statistics
//! ([`stats`]).
//!
//! IO, configuration, CSV metrics, and the CLI live in the companion
//! `ccge-harness` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod ccge;
pub mod dqn;
pub mod envs;
pub mod error;
pub mod math;
pub mod nn;
pub mod oracle;
pub mod replay;
pub mod rng;
pub mod sac;
pub mod stats;
pub mod uncertainty;

pub use error::CoreError;
