//! Robust CANDECOMP/PARAFAC tensor factorization.
//!
//! A CP model writes a tensor as a sum of R rank-1 outer products, one
//! factor matrix per mode. The classical fit minimizes the Frobenius
//! residual ([`cpals_fit`]), which is the right loss under dense Gaussian
//! noise but degrades badly under sparse, high-magnitude "artifact"
//! perturbations. This crate also fits the model under a smoothed,
//! ridge-regularized l1 loss ([`cpal1_fit`]): each factor update separates
//! into independent per-row l1 regressions solved by a
//! majorization-minimization scheme (iteratively reweighted ridge
//! least squares), which keeps the objective monotone and is insensitive
//! to gross outliers.
//!
//! The crate also ships the supporting pieces: dense tensors with mode-n
//! matricization and Khatri-Rao products ([`tensor`], [`kruskal`]), the
//! factor match score for comparing recovered factors to ground truth
//! ([`evaluate`]), a seeded noise-corruption simulation harness
//! ([`simulate`]), and plain-text file formats ([`io`]).
//!
//! ```
//! use cptensor::{cpal1_fit, CpOptions, DenseTensor};
//!
//! // a tiny rank-1 tensor: outer product of (1,2), (1,1), (1,3)
//! let mut values = Vec::new();
//! for k in [1.0, 3.0] {
//!     for j in [1.0, 1.0] {
//!         for i in [1.0, 2.0] {
//!             values.push(i * j * k);
//!         }
//!     }
//! }
//! let t = DenseTensor::from_values(vec![2, 2, 2], values)?;
//! let fit = cpal1_fit(&t, &CpOptions::new(1))?;
//! assert!(fit.converged);
//! let residual: f64 = t
//!     .values()
//!     .iter()
//!     .zip(fit.model.reconstruct().values())
//!     .map(|(a, b)| (a - b).abs())
//!     .sum();
//! assert!(residual < 1e-6);
//! # Ok::<(), cptensor::Error>(())
//! ```

pub mod decompose;
pub mod error;
pub mod evaluate;
pub mod io;
pub mod kruskal;
pub mod linalg;
pub mod regression;
pub mod simulate;
pub mod tensor;

pub use decompose::{cpal1_fit, cpals_fit, nvecs_init, update_factor_l1, CpOptions, FitResult, Init};
pub use error::{Error, Result};
pub use evaluate::{factor_match_score, normalize_columns, FmsReport};
pub use kruskal::{smoothed_l1_objective, KruskalModel};
pub use linalg::{khatri_rao, Matrix, Vector};
pub use regression::{L1Problem, SolveTrace, SolverOptions};
pub use simulate::{
    check_artifact_scale, corrupt, generate_artifact_tensor, generate_gaussian_tensor,
    generate_true_model, replicate_seed, run_experiment, ExperimentRecord, Method, SimConfig,
};
pub use tensor::{fold, DenseTensor};
