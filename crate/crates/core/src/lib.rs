//! Training simulator for neural networks mapped onto resistive cross-point
//! arrays, with the coupled-matrix Tiki-Taka optimizer.

pub mod calibration;
pub mod data;
pub mod device;
pub mod error;
pub mod harness;
pub mod matrix;
pub mod nn;
pub mod periphery;
pub mod rng;
mod scalar;
pub mod tiki_taka;
pub mod tile;

pub use error::{Result, SimError};
pub use scalar::Scalar;

/// Double-precision aliases used by the harness and CLI.
pub type Tile = tile::AnalogTile<f64>;
pub type Tile32 = tile::AnalogTile<f32>;
pub type TikiTaka = tiki_taka::TikiTakaLayer<f64>;
pub type Net = nn::Network<f64>;
pub type Net32 = nn::Network<f32>;
pub type Device = device::DeviceParams<f64>;
