//! Unit-commitment optimization lab.

pub mod baseline;
pub mod config;
pub mod dive;
pub mod gcnn;
pub mod graph;
pub mod kv;
pub mod lp_format;
pub mod metrics;
pub mod milp;
pub mod pipeline;
pub mod solve;
pub mod uc;
