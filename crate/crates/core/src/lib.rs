//! Reconciling building energy simulations with measured data.
//!
//! The crate simulates an audit building with a linear RC network, splits
//! its delivered load into macro heat flows (outdoor conduction, indoor
//! temperature history, solar, internal gains), estimates physically
//! meaningful scale and transfer-function parameters against measured
//! loads, learns the remaining residuals with a small network and then
//! calibrates HVAC plant parameters on the reconciled load.

pub mod decomposition;
pub mod engine;
pub mod error;
pub mod estimation;
pub mod hvac;
pub mod residual_net;
pub mod timeseries;

pub use error::{Error, ErrorKind, Result};
pub use timeseries::{Interval, MeasuredDataset, TimeSeries, Unit, WeatherSeries};
