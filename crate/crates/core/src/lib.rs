//! RGPNet: an asymmetric encoder–decoder segmentation network whose adaptor
//! fuses neighboring resolution levels, plus the training and evaluation
//! tooling around it.

pub mod arch;
pub mod bench;
pub mod config;
pub mod data;
pub mod error;
pub mod graph;
pub mod kernels;
pub mod label;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use graph::{Graph, Var};
pub use label::{ClassSet, LabelMap, IGNORE};
pub use tensor::Tensor;

/// Size the global kernel thread pool from `RGP_THREADS` (default: one per
/// core). Returns the pool size in effect.
pub fn init_threads_from_env() -> Result<usize> {
    if let Ok(v) = std::env::var("RGP_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config {
                field: "RGP_THREADS".into(),
                msg: format!("expected a positive integer, got {v:?}"),
            })?;
        // Fails only if the pool was already built, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(rayon::current_num_threads())
}
