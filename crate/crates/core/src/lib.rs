//! Exact analysis of rational agents running fault-free consensus protocols.

pub mod engine;
pub mod epistemics;
pub mod game;
pub mod net;
pub mod parallel;
pub mod protocols;
pub mod ratio;
