//! Density estimates and error metrics.

mod kde;
mod l2;
mod mse;

pub use kde::{
    density_product_pdf, kde, DensityEstimate, DensityProduct, GridSpec, Kde,
    PRODUCT_COMPONENT_BUDGET,
};
pub use l2::{evaluation_bandwidths, l2_distance, GRID_POINTS};
pub use mse::{log_log_slope, mse_rate_harness, AnalyticDensity, MseRow, Normal1d};
