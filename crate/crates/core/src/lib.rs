//! Squared neural family (SNEFY) densities: `p(x) ∝ ‖V σ(W t(x) + b)‖²` against a base
//! measure, with closed-form normalizing constants via neural network kernels.

pub mod error;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod sampling;
pub mod special;
pub mod training;
pub mod types;
pub mod verify;

pub use error::{Result, SnefyError};
pub use kernels::{Kernel, KernelFamily, KernelGrad};
pub use model::{DensityEvaluation, KernelMatrix, ReportingConvention, SnefyModel, Split};
pub use types::{Activation, BaseMeasure, Gaussian, MixtureComponent, ParamRow, SnefyParams, SufficientStatistic};

/// Caps the global rayon pool at `SNEFY_THREADS` when that variable is set. Reductions are
/// chunked in a fixed order, so results do not depend on the thread count.
pub fn init_thread_pool() -> Result<()> {
    let Ok(v) = std::env::var("SNEFY_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| SnefyError::InvalidArgument(format!("SNEFY_THREADS must be a positive integer, got {v:?}")))?;
    // a pool that is already initialised keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}
