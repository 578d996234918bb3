//! Closed-loop symbolic equation discovery.

pub mod data;
pub mod expr;
pub mod fit;
pub mod scoring;
pub mod memory;
pub mod hints;
pub mod agents;
pub mod bench;
pub mod discovery;
