//! Slotted CSMA/CA simulation and passive misbehavior detection.
//!
//! The crate models a small wireless network in discrete slots, where each
//! node may probabilistically ignore carrier sense (its degree of
//! selfishness), and then recovers that behavior purely from overheard
//! traffic: lossy sniffer traces are merged, reduced to per-pair activity
//! symbols, fit with a six-state hidden Markov model, and scored for
//! asymmetric deferral. [`pipeline`] wires the stages together behind the
//! `cswitness` binary.

pub mod detector;
pub mod hmm;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod sim;
pub mod sniffer;

pub use sim::NodeId;
