pub mod baselines;
pub mod blender;
pub mod config;
pub mod forecast;
pub mod grid_store;
pub mod losses;
pub mod metrics;
pub mod net;
pub mod pipeline;
pub mod synthetic;
pub mod trainer;

pub use forecast::ForecastBundle;
