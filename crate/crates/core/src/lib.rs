//! Four-step memory-processing pipeline for LLM inference, reference kernels,
//! and an analytic GPU/FPGA/CPU cost model with a placement scheduler.

pub mod cli;
pub mod config;
pub mod device;
pub mod error;
pub mod kernels;
pub mod memory;
pub mod method;
pub mod pipeline;
pub mod report;
pub mod scheduler;
pub mod trend;
pub mod workloads;

pub use error::{Error, Result};
