//! Reinforcement-learning stack for continuous intraday electricity trading.

pub mod agents;
pub mod bound;
pub mod config;
pub mod env;
pub mod io;
pub mod market_data;
pub mod metrics;
pub mod nn;
pub mod pbt;
pub mod ppo;
pub mod rng;
pub mod synthetic;
