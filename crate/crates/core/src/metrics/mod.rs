//! Image quality metrics, multiply-accumulate accounting and report tables.

pub mod macs;
pub mod quality;
pub mod report;

pub use macs::{count_macs, MacBreakdown};
pub use quality::{gmsd, gmsd_with, psnr, ssim, ssim_with, GmsdConfig, Psnr, SsimConfig};
pub use report::{evaluate_pairs, render_report, ImageMetrics, MetricsReport, ReportRow};
