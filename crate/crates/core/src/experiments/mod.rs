//! Reproducible experiment drivers.

pub mod narx;
pub mod report;
pub mod silverbox;
pub mod summary;
pub mod synthetic;

pub use narx::{build_narx, build_narx_dataset, free_run_simulate, FreeRun, NarxLags, NarxModel, NarxModelJson};
pub use silverbox::{run_silverbox, NarxConfig, SilverboxConfig, SilverboxData, SilverboxReport, Tuning};
pub use summary::{FiveNumber, KernelSummary};
pub use synthetic::{run_synthetic, run_synthetic_with, ExperimentConfig, ExperimentReport, RunRecord};
