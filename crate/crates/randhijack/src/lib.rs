//! File formats, statistics and the command-line front end for
//! [`randhijack_core`].

pub mod cli;
pub mod config;
pub mod rand_stats;
pub mod trace_io;
pub mod vectors;

pub use randhijack_core as core;
