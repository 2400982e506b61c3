//! Rank-R CP model fitting.
//!
//! Two fitters share the same alternating structure and initialization:
//!
//! * [`cpal1_fit`] minimizes the smoothed, ridge-regularized l1 objective.
//!   Each sweep updates one factor matrix at a time; the subproblem for a
//!   factor separates into one smoothed l1 regression per row (shared design
//!   `Z_n`, one observation vector per row of the unfolding), solved by the
//!   MM solver in [`crate::regression`] warm-started at the current row.
//!   Because every row solve only descends its own objective, the full
//!   objective is non-increasing across sweeps.
//! * [`cpals_fit`] is the classical alternating least squares baseline under
//!   the Frobenius loss: `A_n <- X_(n) Z_n pinv(G_n)` with `G_n` the Hadamard
//!   product of the other factors' Gram matrices.
//!
//! Row subproblems inside one factor update are independent and run in
//! parallel; results are bit-identical to sequential execution because no
//! row reads another row's output.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kruskal::{smoothed_l1_objective, KruskalModel};
use crate::linalg::{pinv_sym, symmetric_eigen_desc, Matrix, Vector};
use crate::regression::{L1Problem, SolverOptions};
use crate::tensor::DenseTensor;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Eigenvalues of the ALS normal matrix below this fraction of the largest
/// are treated as zero when inverting.
const ALS_PINV_RTOL: f64 = 1e-12;

/// Factor initialization strategy.
#[derive(Debug, Clone)]
pub enum Init {
    /// Leading left singular vectors of each mode unfolding.
    Nvecs,
    /// I.i.d. uniform(0,1) entries from a seeded generator.
    Random { seed: u64 },
    /// Start from a caller-supplied model.
    Provided(KruskalModel),
}

/// Options shared by both fitters. `eps` and `mu` only affect the l1 fit.
#[derive(Debug, Clone)]
pub struct CpOptions {
    pub rank: usize,
    /// Smoothing constant of the l1 objective.
    pub eps: f64,
    /// Ridge constant of the l1 objective.
    pub mu: f64,
    /// Relative objective-change threshold across one full sweep.
    pub outer_tol: f64,
    /// Cap on the number of sweeps.
    pub max_outer: usize,
    /// Stopping controls for the per-row MM solves.
    pub inner: SolverOptions,
    pub init: Init,
}

impl CpOptions {
    pub fn new(rank: usize) -> Self {
        CpOptions {
            rank,
            eps: 1e-10,
            mu: 1e-8,
            outer_tol: 1e-8,
            max_outer: 500,
            inner: SolverOptions {
                tol: 1e-9,
                max_iter: 50,
                initial: None,
            },
            init: Init::Nvecs,
        }
    }
}

/// A fitted model plus its per-sweep objective history.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: KruskalModel,
    /// Objective at initialization followed by the value after each sweep.
    /// For the l1 fit this is the smoothed l1 objective; for ALS it is the
    /// Frobenius residual norm.
    pub objective_history: Vec<f64>,
    /// Completed sweeps.
    pub sweeps: usize,
    /// Whether the relative-change criterion was met before `max_outer`.
    pub converged: bool,
}

/// Leading `r` left singular vectors of the mode-n unfolding, as an
/// `I_n x r` matrix with orthonormal columns, computed from the eigenvectors
/// of the small Gram matrix `X_(n) X_(n)^T`.
pub fn nvecs_init(t: &DenseTensor, mode: usize, r: usize) -> Result<Matrix> {
    let unfolding = t.matricize(mode)?;
    let dim = unfolding.nrows();
    if r > dim {
        return Err(Error::invalid(format!(
            "rank {} exceeds mode-{} dimension {}: singular-vector initialization requires rank <= every tensor dimension",
            r, mode, dim
        )));
    }
    let gram = &unfolding * unfolding.transpose();
    let (values, vectors) = symmetric_eigen_desc(&gram);
    if !(values[0] > 0.0) {
        return Err(Error::numerical(format!(
            "mode-{} unfolding has no signal (zero tensor?)",
            mode
        )));
    }
    Ok(vectors.columns(0, r).into_owned())
}

fn init_factors(t: &DenseTensor, opts: &CpOptions) -> Result<Vec<Matrix>> {
    match &opts.init {
        Init::Nvecs => (0..t.order())
            .map(|mode| nvecs_init(t, mode, opts.rank))
            .collect(),
        Init::Random { seed } => {
            let mut rng = ChaCha12Rng::seed_from_u64(*seed);
            Ok(t.shape()
                .iter()
                .map(|&dim| {
                    let values: Vec<f64> =
                        (0..dim * opts.rank).map(|_| rng.random::<f64>()).collect();
                    Matrix::from_column_slice(dim, opts.rank, &values)
                })
                .collect())
        }
        Init::Provided(model) => {
            model.check_compatible(t)?;
            if model.rank() != opts.rank {
                return Err(Error::invalid(format!(
                    "provided init has rank {}, options ask for {}",
                    model.rank(),
                    opts.rank
                )));
            }
            Ok(model.factors().to_vec())
        }
    }
}

fn validate(t: &DenseTensor, opts: &CpOptions) -> Result<()> {
    if opts.rank == 0 {
        return Err(Error::invalid("rank must be at least 1"));
    }
    if t.order() < 2 {
        return Err(Error::invalid("tensor order must be at least 2"));
    }
    if opts.max_outer == 0 {
        return Err(Error::invalid("max_outer must be at least 1"));
    }
    if !(opts.outer_tol > 0.0) {
        return Err(Error::invalid("outer_tol must be positive"));
    }
    Ok(())
}

/// Recompute factor `mode` of `k` against `t` by solving the per-row
/// smoothed l1 regressions, warm-started at the current rows. Rows are
/// independent; they are solved in parallel with results identical to
/// sequential execution.
pub fn update_factor_l1(
    t: &DenseTensor,
    k: &KruskalModel,
    mode: usize,
    opts: &CpOptions,
) -> Result<Matrix> {
    k.check_compatible(t)?;
    let design = k.khatri_rao_all_but(mode)?;
    let unfolding = t.matricize(mode)?;
    debug_assert_eq!(unfolding.nrows(), t.shape()[mode]);
    debug_assert_eq!(design.ncols(), k.rank());
    let current = k.factor(mode);
    let rows: Vec<Vector> = (0..unfolding.nrows())
        .into_par_iter()
        .map(|i| {
            let y = unfolding.row(i).transpose();
            let problem = L1Problem::new(y, &design, opts.eps, opts.mu)?;
            let warm = current.row(i).transpose();
            let (u, _) = problem.solve(&opts.inner.with_initial(warm))?;
            Ok(u)
        })
        .collect::<Result<_>>()?;
    let mut factor = Matrix::zeros(unfolding.nrows(), k.rank());
    for (i, row) in rows.iter().enumerate() {
        factor.row_mut(i).copy_from(&row.transpose());
    }
    Ok(factor)
}

/// Fit a rank-R model under the smoothed l1 objective by round-robin factor
/// updates. The objective history is non-increasing.
pub fn cpal1_fit(t: &DenseTensor, opts: &CpOptions) -> Result<FitResult> {
    validate(t, opts)?;
    if !(opts.eps > 0.0) || !(opts.mu > 0.0) {
        return Err(Error::invalid("the l1 fit requires eps > 0 and mu > 0"));
    }
    let mut model = KruskalModel::new(init_factors(t, opts)?)?;
    let mut history = vec![smoothed_l1_objective(t, &model, opts.eps, opts.mu)?];
    let mut converged = false;
    let mut sweeps = 0;
    for _ in 0..opts.max_outer {
        for mode in 0..t.order() {
            let factor = update_factor_l1(t, &model, mode, opts)?;
            model.set_factor(mode, factor)?;
        }
        let objective = smoothed_l1_objective(t, &model, opts.eps, opts.mu)?;
        let prev = *history.last().expect("history starts non-empty");
        history.push(objective);
        sweeps += 1;
        if (prev - objective).abs() / (1.0 + prev.abs()) < opts.outer_tol {
            converged = true;
            break;
        }
    }
    Ok(FitResult {
        model,
        objective_history: history,
        sweeps,
        converged,
    })
}

/// Classical CP by alternating least squares under the Frobenius loss.
/// The per-sweep objective is the Frobenius residual `||t - reconstruct||`;
/// sweeps stop once the residual change relative to `||t||` (the change in
/// the fit `1 - residual/||t||`, the criterion classical ALS
/// implementations use) drops below `outer_tol`.
pub fn cpals_fit(t: &DenseTensor, opts: &CpOptions) -> Result<FitResult> {
    validate(t, opts)?;
    let mut model = KruskalModel::new(init_factors(t, opts)?)?;
    let residual = |m: &KruskalModel| -> f64 {
        t.zip_with(&m.reconstruct(), |a, b| a - b)
            .expect("shapes checked at init")
            .frobenius_norm()
    };
    let norm_t = t.frobenius_norm().max(f64::MIN_POSITIVE);
    let mut history = vec![residual(&model)];
    let mut converged = false;
    let mut sweeps = 0;
    for _ in 0..opts.max_outer {
        for mode in 0..t.order() {
            let z = model.khatri_rao_all_but(mode)?;
            let mttkrp = t.matricize(mode)? * &z;
            let rank = model.rank();
            let mut gram = Matrix::from_element(rank, rank, 1.0);
            for (m, factor) in model.factors().iter().enumerate() {
                if m == mode {
                    continue;
                }
                let g = factor.transpose() * factor;
                gram.component_mul_assign(&g);
            }
            let factor = mttkrp * pinv_sym(&gram, ALS_PINV_RTOL);
            model.set_factor(mode, factor)?;
        }
        let objective = residual(&model);
        let prev = *history.last().expect("history starts non-empty");
        history.push(objective);
        sweeps += 1;
        if (prev - objective).abs() / norm_t < opts.outer_tol {
            converged = true;
            break;
        }
    }
    Ok(FitResult {
        model,
        objective_history: history,
        sweeps,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::factor_match_score;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn nonneg_model(shape: &[usize], rank: usize, seed: u64) -> KruskalModel {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let factors = shape
            .iter()
            .map(|&d| {
                Matrix::from_fn(d, rank, |_, _| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z.abs()
                })
            })
            .collect();
        KruskalModel::new(factors).unwrap()
    }

    #[test]
    fn nvecs_recovers_rank_one_direction() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let a = Vector::from_fn(5, |_, _| rng.random::<f64>() + 0.1);
        let b = Vector::from_fn(4, |_, _| rng.random::<f64>() + 0.1);
        let c = Vector::from_fn(3, |_, _| rng.random::<f64>() + 0.1);
        let k = KruskalModel::new(vec![
            Matrix::from_column_slice(5, 1, a.as_slice()),
            Matrix::from_column_slice(4, 1, b.as_slice()),
            Matrix::from_column_slice(3, 1, c.as_slice()),
        ])
        .unwrap();
        let t = k.reconstruct();
        let v = nvecs_init(&t, 0, 1).unwrap();
        let unit = &a / a.norm();
        let cos = v.column(0).dot(&unit).abs();
        assert_relative_eq!(cos, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn nvecs_orthonormal_and_matches_svd_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let values: Vec<f64> = (0..120).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let t = DenseTensor::from_values(vec![6, 5, 4], values).unwrap();
        let v = nvecs_init(&t, 1, 2).unwrap();
        let gram = v.transpose() * &v;
        assert!((gram - Matrix::identity(2, 2)).norm() < 1e-10);
        // eigenvalues of the unfolding Gram are squared singular values
        let unfolding = t.matricize(1).unwrap();
        let svd = unfolding.clone().svd(false, false);
        let (eigs, _) = symmetric_eigen_desc(&(&unfolding * unfolding.transpose()));
        for (i, &lambda) in eigs.iter().take(2).enumerate() {
            assert_relative_eq!(
                lambda.max(0.0).sqrt(),
                svd.singular_values[i],
                max_relative = 1e-8
            );
        }
    }

    #[test]
    fn nvecs_rejects_zero_tensor_and_oversized_rank() {
        let z = DenseTensor::zeros(vec![3, 3, 3]).unwrap();
        assert!(nvecs_init(&z, 0, 1).is_err());
        let t = DenseTensor::from_values(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(nvecs_init(&t, 0, 3).is_err());
    }

    #[test]
    fn update_factor_l1_noise_free_is_near_fixed_point() {
        let truth = nonneg_model(&[4, 3, 3], 2, 3);
        let t = truth.reconstruct();
        let opts = CpOptions::new(2);
        for mode in 0..3 {
            let updated = update_factor_l1(&t, &truth, mode, &opts).unwrap();
            let diff = (&updated - truth.factor(mode)).abs().max();
            assert!(diff < 1e-6, "mode {mode} moved by {diff}");
        }
    }

    #[test]
    fn update_factor_l1_single_row_mode_matches_direct_solve() {
        let truth = nonneg_model(&[1, 4, 3], 2, 5);
        let mut t = truth.reconstruct();
        // perturb so the solve has something to do
        t = t.map(|v| v + 0.01);
        let opts = CpOptions::new(2);
        let updated = update_factor_l1(&t, &truth, 0, &opts).unwrap();

        let design = truth.khatri_rao_all_but(0).unwrap();
        let y = t.matricize(0).unwrap().row(0).transpose();
        let problem = L1Problem::new(y, &design, opts.eps, opts.mu).unwrap();
        let warm = truth.factor(0).row(0).transpose();
        let (u, _) = problem.solve(&opts.inner.with_initial(warm)).unwrap();
        assert_eq!(updated.row(0).transpose(), u);
    }

    #[test]
    fn update_factor_l1_rows_match_row_by_row_oracle() {
        let truth = nonneg_model(&[4, 3, 2], 2, 7);
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let noisy = truth
            .reconstruct()
            .map(|v| v + 0.05 * (rng.random::<f64>() - 0.5));
        let opts = CpOptions::new(2);
        let updated = update_factor_l1(&noisy, &truth, 0, &opts).unwrap();

        let design = truth.khatri_rao_all_but(0).unwrap();
        let unfolding = noisy.matricize(0).unwrap();
        for i in 0..4 {
            let y = unfolding.row(i).transpose();
            let problem = L1Problem::new(y, &design, opts.eps, opts.mu).unwrap();
            let warm = truth.factor(0).row(i).transpose();
            let (u, _) = problem.solve(&opts.inner.with_initial(warm)).unwrap();
            // bit agreement with the parallel path
            assert_eq!(updated.row(i).transpose(), u);
        }
    }

    #[test]
    fn cpal1_noise_free_recovery() {
        let truth = nonneg_model(&[8, 8, 8], 3, 11);
        let t = truth.reconstruct();
        let fit = cpal1_fit(&t, &CpOptions::new(3)).unwrap();
        let report = factor_match_score(&fit.model, &truth).unwrap();
        assert!(report.score >= 0.99, "FMS {}", report.score);
    }

    #[test]
    fn cpal1_rank_one_recovery() {
        let truth = nonneg_model(&[5, 4, 3], 1, 13);
        let t = truth.reconstruct();
        let fit = cpal1_fit(&t, &CpOptions::new(1)).unwrap();
        let report = factor_match_score(&fit.model, &truth).unwrap();
        assert!(report.score >= 0.999, "FMS {}", report.score);
    }

    #[test]
    fn cpal1_sweep_objective_non_increasing() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let values: Vec<f64> = (0..64).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let t = DenseTensor::from_values(vec![4, 4, 4], values).unwrap();
        let mut opts = CpOptions::new(2);
        opts.init = Init::Random { seed: 99 };
        opts.max_outer = 40;
        let fit = cpal1_fit(&t, &opts).unwrap();
        for w in fit.objective_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-10 * w[0].abs(), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn cpal1_is_deterministic() {
        let truth = nonneg_model(&[5, 4, 3], 2, 19);
        let t = truth.reconstruct();
        let mut opts = CpOptions::new(2);
        opts.init = Init::Random { seed: 7 };
        opts.max_outer = 20;
        let a = cpal1_fit(&t, &opts).unwrap();
        let b = cpal1_fit(&t, &opts).unwrap();
        assert_eq!(a.model.factors(), b.model.factors());
        assert_eq!(a.objective_history, b.objective_history);
        assert_eq!(a.sweeps, b.sweeps);
    }

    #[test]
    fn cpals_noise_free_recovery() {
        let truth = nonneg_model(&[8, 8, 8], 3, 23);
        let t = truth.reconstruct();
        let mut opts = CpOptions::new(3);
        opts.outer_tol = 1e-12;
        opts.max_outer = 2000;
        let fit = cpals_fit(&t, &opts).unwrap();
        let rel = fit.objective_history.last().unwrap() / t.frobenius_norm();
        assert!(rel < 1e-8, "relative residual {rel}");
        let report = factor_match_score(&fit.model, &truth).unwrap();
        assert!(report.score >= 0.99, "FMS {}", report.score);
    }

    #[test]
    fn cpals_noise_free_residual_monotone() {
        let truth = nonneg_model(&[6, 5, 4], 2, 29);
        let t = truth.reconstruct();
        let fit = cpals_fit(&t, &CpOptions::new(2)).unwrap();
        for w in fit.objective_history.windows(2) {
            let slack = 1e-12 * (1.0 + w[0].abs());
            if w[1] > w[0] && w[1] - w[0] <= slack {
                eprintln!("non-monotone ALS step within rounding: {} -> {}", w[0], w[1]);
            } else {
                assert!(w[1] <= w[0], "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn cpals_survives_zero_init() {
        let truth = nonneg_model(&[4, 3, 3], 2, 31);
        let t = truth.reconstruct();
        let zeros = KruskalModel::new(vec![
            Matrix::zeros(4, 2),
            Matrix::zeros(3, 2),
            Matrix::zeros(3, 2),
        ])
        .unwrap();
        let mut opts = CpOptions::new(2);
        opts.init = Init::Provided(zeros);
        opts.max_outer = 5;
        // a singular normal matrix must not panic; the pseudo-inverse
        // collapses the update to zero
        let fit = cpals_fit(&t, &opts).unwrap();
        assert!(fit.objective_history.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn provided_init_shape_checked() {
        let truth = nonneg_model(&[4, 3, 3], 2, 37);
        let t = truth.reconstruct();
        let wrong = nonneg_model(&[4, 3, 2], 2, 38);
        let mut opts = CpOptions::new(2);
        opts.init = Init::Provided(wrong);
        assert!(cpal1_fit(&t, &opts).is_err());
    }
}
