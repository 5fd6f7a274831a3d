//! Multi-expert discussion engine for zero-shot navigation on discrete graph worlds.
//!
//! A navigation agent that, before every movement, runs an ordered discussion
//! with a roster of domain experts — instruction analysis, vision perception,
//! completion estimation and decision testing — served by pluggable completion
//! backends. The crate ships the graph environment and its metrics, the expert
//! roster (prompt templates and reply parsers), four backend implementations
//! (scripted, replay, oracle, remote HTTP), the per-step discussion engine,
//! and a suite harness with ablations, fixtures and record/replay.

pub mod backends;
pub mod engine;
pub mod env;
pub mod harness;
pub mod roster;
