pub mod checkpoint;
pub mod cli;
pub mod compression;
pub mod datapipe;
pub mod error;
pub mod fractional;
pub mod linalg;
pub mod lowrank;
pub mod metrics;
pub mod network;
pub mod pipeline;
pub mod tchebichef;
pub mod train;
