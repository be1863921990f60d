//! Online classifiers built on fixed random projections: a closed-form ELM,
//! its recursive least-squares variant, and SPLR-ELM, whose binary hidden
//! layer and add/subtract-only update map onto multiplier-free hardware.
//!
//! The numeric building blocks ([`linalg`], [`fxp`], [`prng`]) are usable on
//! their own; [`experiment`] wires them into reproducible runs.

pub mod checkpoint;
pub mod config;
pub mod counter;
pub mod cyclemodel;
pub mod datasets;
pub mod experiment;
pub mod fxp;
pub mod linalg;
pub mod models;
pub mod prng;
