//! Metrics, comparison grids and novel-view evaluation.

pub mod grid;
pub mod metrics;
pub mod report;

pub use grid::{render_grid, GridLabels, GridLayout};
pub use metrics::{mse, psnr, ssim, MockPerceptual, PerceptualAdapter, PSNR_CAP_DB};
pub use report::{evaluate_nvs, generate, EvalOptions, MetricsReport, ViewMetrics};
