//! Evaluation: quantitative metrics, yaw alignment, interpolation and
//! diversity probes, PLY interop.

mod metrics;
mod ply;

pub use metrics::{mse, psnr, ssim, PSNR_CAP_DB};
pub use ply::{export_ply, import_ply, SH_C0};
