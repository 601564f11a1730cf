pub mod config;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod joiner;
pub mod model;
pub mod motility;
pub mod mot;
pub mod sot;
pub mod synth;
