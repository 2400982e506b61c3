//! Synthetic-data generation and the replicated fitting experiment.
//!
//! Each replicate builds a nonnegative ground-truth model, reconstructs the
//! clean tensor `X`, then corrupts it with two independent noise tensors:
//! a sparse artifact tensor `P` (a random fraction `eta` of entries drawn
//! from Gamma(shape 50, scale 1/50), zero elsewhere) and a dense standard
//! Gaussian tensor `Q`, mixed as
//!
//! ```text
//! X' = X + gamma * (||X||_F / ||P||_F) * P + level * (||X||_F / ||Q||_F) * Q
//! ```
//!
//! so `gamma` and `level` set the noise norms relative to the data norm.
//! Both fitters run on `X'` from the singular-vector initialization and are
//! scored against the truth. Replicates draw from independent generators
//! seeded by a splitmix64 counter over the base seed, so they can run in
//! parallel with output identical to sequential execution.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;

use crate::decompose::{cpal1_fit, cpals_fit, CpOptions, FitResult, Init};
use crate::error::{Error, Result};
use crate::evaluate::factor_match_score;
use crate::kruskal::KruskalModel;
use crate::linalg::Matrix;
use crate::tensor::DenseTensor;

/// Gamma distribution of the artifact values. Mean shape*scale = 1 puts
/// artifacts on the scale of the data values.
const ARTIFACT_GAMMA_SHAPE: f64 = 50.0;
const ARTIFACT_GAMMA_SCALE: f64 = 1.0 / 50.0;

/// Configuration of one experiment cell.
#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Tensor shape.
    pub dims: Vec<usize>,
    /// CP rank of the ground truth and of both fits.
    pub rank: usize,
    /// Fraction of entries carrying an artifact, in (0, 1).
    pub eta: f64,
    /// Artifact strength: the artifact term has Frobenius norm
    /// `gamma * ||X||_F`.
    pub gamma: f64,
    /// Dense-noise coefficient (the Gaussian term analogue of `gamma`).
    pub gaussian_level: f64,
    /// Number of replicates.
    pub replicates: usize,
    /// Base seed; per-replicate seeds are derived from it.
    pub seed: u64,
    /// Smoothing constant of the l1 fit.
    pub eps: f64,
    /// Ridge constant of the l1 fit.
    pub mu: f64,
    /// Sweep-level stopping threshold of the l1 fit.
    pub outer_tol: f64,
    /// Fit-change stopping threshold of the least-squares baseline. The
    /// default matches the stock ALS tolerance (1e-4 on the fit), which is
    /// what the l1 method is benchmarked against.
    pub als_tol: f64,
    /// Sweep cap for both fitters.
    pub max_outer: usize,
}

impl SimConfig {
    pub fn new(dims: Vec<usize>, rank: usize, eta: f64, gamma: f64) -> Self {
        SimConfig {
            dims,
            rank,
            eta,
            gamma,
            gaussian_level: 0.1,
            replicates: 100,
            seed: 0,
            eps: 1e-10,
            mu: 1e-8,
            outer_tol: 1e-8,
            als_tol: 1e-4,
            max_outer: 500,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.len() < 2 {
            return Err(Error::invalid("tensor order must be at least 2"));
        }
        if self.rank == 0 {
            return Err(Error::invalid("rank must be at least 1"));
        }
        if self.dims.iter().any(|&d| d < self.rank) {
            return Err(Error::invalid(format!(
                "every dimension of {:?} must be at least the rank {} for the singular-vector initialization",
                self.dims, self.rank
            )));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::invalid("eta must lie strictly between 0 and 1"));
        }
        if self.gamma < 0.0 {
            return Err(Error::invalid("gamma must be nonnegative"));
        }
        if self.gaussian_level < 0.0 {
            return Err(Error::invalid("gaussian_level must be nonnegative"));
        }
        if self.replicates == 0 {
            return Err(Error::invalid("replicates must be at least 1"));
        }
        Ok(())
    }

    fn cpal1_options(&self) -> CpOptions {
        let mut opts = CpOptions::new(self.rank);
        opts.eps = self.eps;
        opts.mu = self.mu;
        opts.outer_tol = self.outer_tol;
        opts.max_outer = self.max_outer;
        opts.init = Init::Nvecs;
        opts
    }

    fn cpals_options(&self) -> CpOptions {
        let mut opts = CpOptions::new(self.rank);
        opts.outer_tol = self.als_tol;
        opts.max_outer = self.max_outer;
        opts.init = Init::Nvecs;
        opts
    }
}

/// Which fitter produced a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Cpal1,
    Cpals,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Cpal1 => "cpal1",
            Method::Cpals => "cpals",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cpal1" => Ok(Method::Cpal1),
            "cpals" => Ok(Method::Cpals),
            other => Err(Error::invalid(format!(
                "unknown method '{}', expected 'cpal1' or 'cpals'",
                other
            ))),
        }
    }
}

/// One fit of one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub replicate: usize,
    pub eta: f64,
    pub gamma: f64,
    pub method: Method,
    /// Factor match score against the truth, in [0, 1]; 0 when the fit
    /// failed outright.
    pub fms: f64,
    /// Fit wall time in seconds.
    pub seconds: f64,
    pub sweeps: usize,
    pub converged: bool,
}

/// splitmix64 step; the standard 64-bit mix used to derive independent
/// per-replicate seeds from a base seed and a counter.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replicate `index` under base `seed`.
pub fn replicate_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(1)))
}

/// Ground-truth factors: every entry is the absolute value of a standard
/// Gaussian draw, so all entries are nonnegative with mean sqrt(2/pi).
pub fn generate_true_model<R: Rng>(dims: &[usize], rank: usize, rng: &mut R) -> KruskalModel {
    let factors = dims
        .iter()
        .map(|&d| {
            let values: Vec<f64> = (0..d * rank)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    z.abs()
                })
                .collect();
            Matrix::from_column_slice(d, rank, &values)
        })
        .collect();
    KruskalModel::new(factors).expect("generated factors are well-formed")
}

/// Sparse artifact tensor: exactly `round(eta * total)` distinct positions,
/// chosen uniformly without replacement, carry i.i.d. Gamma(50, 1/50) draws;
/// every other entry is zero.
pub fn generate_artifact_tensor<R: Rng>(
    dims: &[usize],
    eta: f64,
    rng: &mut R,
) -> Result<DenseTensor> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::invalid("eta must lie strictly between 0 and 1"));
    }
    let total: usize = dims.iter().product();
    let count = (eta * total as f64).round() as usize;
    let gamma = Gamma::new(ARTIFACT_GAMMA_SHAPE, ARTIFACT_GAMMA_SCALE)
        .expect("fixed gamma parameters are valid");
    let mut values = vec![0.0; total];
    for position in rand::seq::index::sample(rng, total, count) {
        values[position] = gamma.sample(rng);
    }
    DenseTensor::from_values(dims.to_vec(), values)
}

/// Dense noise tensor with i.i.d. standard Gaussian entries.
pub fn generate_gaussian_tensor<R: Rng>(dims: &[usize], rng: &mut R) -> Result<DenseTensor> {
    let total: usize = dims.iter().product();
    let values = (0..total).map(|_| StandardNormal.sample(rng)).collect();
    DenseTensor::from_values(dims.to_vec(), values)
}

/// Mix the clean tensor with scaled artifact and Gaussian tensors:
/// `x + gamma (||x||/||p||) p + level (||x||/||q||) q`.
pub fn corrupt(
    x: &DenseTensor,
    p: &DenseTensor,
    q: &DenseTensor,
    gamma: f64,
    gaussian_level: f64,
) -> Result<DenseTensor> {
    let x_norm = x.frobenius_norm();
    let p_norm = p.frobenius_norm();
    let q_norm = q.frobenius_norm();
    if p_norm == 0.0 || q_norm == 0.0 {
        return Err(Error::invalid("noise tensors must have nonzero norm"));
    }
    let a = gamma * x_norm / p_norm;
    let b = gaussian_level * x_norm / q_norm;
    let with_artifacts = x.zip_with(p, |xv, pv| xv + a * pv)?;
    with_artifacts.zip_with(q, |v, qv| v + b * qv)
}

/// Diagnostic: true iff the largest absolute scaled Gaussian entry stays
/// below the largest entry of `x`. Logged per replicate, never enforced.
pub fn check_artifact_scale(
    x: &DenseTensor,
    _p: &DenseTensor,
    q: &DenseTensor,
    _gamma: f64,
    gaussian_level: f64,
) -> bool {
    let scale = gaussian_level * x.frobenius_norm() / q.frobenius_norm();
    scale * q.max_abs() < x.max_value()
}

/// The same diagnostic for the scaled artifact term.
pub fn check_artifact_term_scale(x: &DenseTensor, p: &DenseTensor, gamma: f64) -> bool {
    let scale = gamma * x.frobenius_norm() / p.frobenius_norm();
    scale * p.max_abs() < x.max_value()
}

fn record_fit(
    config: &SimConfig,
    replicate: usize,
    method: Method,
    truth: &KruskalModel,
    corrupted: &DenseTensor,
) -> ExperimentRecord {
    let start = Instant::now();
    let outcome: Result<FitResult> = match method {
        Method::Cpal1 => cpal1_fit(corrupted, &config.cpal1_options()),
        Method::Cpals => cpals_fit(corrupted, &config.cpals_options()),
    };
    let seconds = start.elapsed().as_secs_f64();
    match outcome.and_then(|fit| {
        let fms = factor_match_score(&fit.model, truth)?.score;
        Ok((fit, fms))
    }) {
        Ok((fit, fms)) => ExperimentRecord {
            replicate,
            eta: config.eta,
            gamma: config.gamma,
            method,
            fms,
            seconds,
            sweeps: fit.sweeps,
            converged: fit.converged,
        },
        Err(err) => {
            log::warn!("replicate {replicate} {method} fit failed: {err}");
            ExperimentRecord {
                replicate,
                eta: config.eta,
                gamma: config.gamma,
                method,
                fms: 0.0,
                seconds,
                sweeps: 0,
                converged: false,
            }
        }
    }
}

fn run_replicate(config: &SimConfig, replicate: usize) -> Result<Vec<ExperimentRecord>> {
    let mut rng = ChaCha12Rng::seed_from_u64(replicate_seed(config.seed, replicate as u64));
    let truth = generate_true_model(&config.dims, config.rank, &mut rng);
    let clean = truth.reconstruct();
    let artifacts = generate_artifact_tensor(&config.dims, config.eta, &mut rng)?;
    let noise = generate_gaussian_tensor(&config.dims, &mut rng)?;
    let corrupted = corrupt(&clean, &artifacts, &noise, config.gamma, config.gaussian_level)?;
    log::debug!(
        "replicate {replicate}: scaled Gaussian below max(X): {}, scaled artifacts below max(X): {}",
        check_artifact_scale(&clean, &artifacts, &noise, config.gamma, config.gaussian_level),
        check_artifact_term_scale(&clean, &artifacts, config.gamma),
    );
    Ok(vec![
        record_fit(config, replicate, Method::Cpal1, &truth, &corrupted),
        record_fit(config, replicate, Method::Cpals, &truth, &corrupted),
    ])
}

/// Run every replicate of the configured cell and score both methods.
/// Replicates execute in parallel; the output is a pure function of the
/// configuration (two records per replicate, ordered by replicate, l1 fit
/// first) except for the recorded wall times.
pub fn run_experiment(config: &SimConfig) -> Result<Vec<ExperimentRecord>> {
    config.validate()?;
    let per_replicate: Vec<Vec<ExperimentRecord>> = (0..config.replicates)
        .into_par_iter()
        .map(|replicate| run_replicate(config, replicate))
        .collect::<Result<_>>()?;
    Ok(per_replicate.into_iter().flatten().collect())
}
