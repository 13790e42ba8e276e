pub mod calibration;
pub mod cli;
pub mod cluster;
pub mod embedder;
pub mod event_store;
pub mod metrics;
pub mod rng;
pub mod synth;
pub mod topic_quality;
