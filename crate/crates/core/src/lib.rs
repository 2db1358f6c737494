pub mod channelbounds;
pub mod cli;
pub mod error;
pub mod freefermion;
pub mod lrbounds;
pub mod models;
pub mod mpu;
pub mod numerics;
pub mod rng;
pub mod spectrum;
pub mod tensornet;

pub use error::{Error, Result};
