pub mod cli;
pub mod data;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod rng;
pub mod synth;
