//! Indoor RSS localization toolkit: camera-derived label uncertainty,
//! synthetic data generation, preprocessing, fingerprint and CNN models,
//! and experiment runners.

pub mod bench;
pub mod cli;
pub mod dataio;
pub mod geometry;
pub mod models;
pub mod preprocess;
pub mod seed;
pub mod synth;
pub mod uncertainty;
