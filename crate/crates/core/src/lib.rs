//! Core of the interventional data generator.
//!
//! Everything here is allocation-only and `no_std`: pose algebra, the
//! kinematic task simulator, the cloned policy and scripted expert, and the
//! generation pipeline that turns a handful of corrective interventions into
//! a large synthetic dataset.

#![no_std]

extern crate alloc;

pub mod geom;
pub mod rng;
pub mod world;
pub mod policy;
pub mod datagen;
pub mod eval;
