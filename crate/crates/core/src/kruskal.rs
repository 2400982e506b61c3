//! Kruskal-form CP models: a list of factor matrices sharing a column count.
//!
//! A rank-R model over an `I_1 x ... x I_N` tensor holds factor matrices
//! `A_n` of size `I_n x R`; the modeled entry is
//!
//! ```text
//! x_hat(i_1, ..., i_N) = sum_r  A_1[i_1, r] * A_2[i_2, r] * ... * A_N[i_N, r]
//! ```
//!
//! The mode-n matricization of the reconstruction factors as
//! `A_n * Z_n^T` where `Z_n` is the Khatri-Rao product of the remaining
//! factors combined in decreasing mode order (for three modes and n = 0,
//! `Z_0 = A_3 (.) A_2`). That ordering is forced by the first-index-fastest
//! linearization of [`DenseTensor`] and is pinned by tests rather than
//! assumed.

use crate::error::{Error, Result};
use crate::linalg::{khatri_rao, Matrix, Vector};
use crate::tensor::DenseTensor;

/// CP model in Kruskal form: one factor matrix per mode, common rank.
#[derive(Debug, Clone, PartialEq)]
pub struct KruskalModel {
    factors: Vec<Matrix>,
}

impl KruskalModel {
    /// Build a model from factor matrices, checking that every factor has
    /// the same (positive) column count.
    pub fn new(factors: Vec<Matrix>) -> Result<Self> {
        if factors.len() < 2 {
            return Err(Error::invalid(format!(
                "a Kruskal model needs at least 2 factors, got {}",
                factors.len()
            )));
        }
        let rank = factors[0].ncols();
        if rank == 0 {
            return Err(Error::invalid("rank must be at least 1"));
        }
        for (n, f) in factors.iter().enumerate() {
            if f.ncols() != rank {
                return Err(Error::shape(format!(
                    "factor {} has {} columns, expected rank {}",
                    n,
                    f.ncols(),
                    rank
                )));
            }
            if f.nrows() == 0 {
                return Err(Error::invalid(format!("factor {} has no rows", n)));
            }
        }
        Ok(KruskalModel { factors })
    }

    pub fn rank(&self) -> usize {
        self.factors[0].ncols()
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    /// Row counts of the factors, i.e. the shape of the modeled tensor.
    pub fn shape(&self) -> Vec<usize> {
        self.factors.iter().map(Matrix::nrows).collect()
    }

    pub fn factors(&self) -> &[Matrix] {
        &self.factors
    }

    pub fn factor(&self, mode: usize) -> &Matrix {
        &self.factors[mode]
    }

    /// Replace one factor; the new matrix must keep the mode's row count
    /// and the model rank.
    pub fn set_factor(&mut self, mode: usize, factor: Matrix) -> Result<()> {
        if mode >= self.order() {
            return Err(Error::ModeOutOfRange {
                mode,
                order: self.order(),
            });
        }
        if factor.nrows() != self.factors[mode].nrows() || factor.ncols() != self.rank() {
            return Err(Error::shape(format!(
                "factor {} must be {}x{}, got {}x{}",
                mode,
                self.factors[mode].nrows(),
                self.rank(),
                factor.nrows(),
                factor.ncols()
            )));
        }
        self.factors[mode] = factor;
        Ok(())
    }

    /// Check that the model matches a tensor's shape.
    pub fn check_compatible(&self, t: &DenseTensor) -> Result<()> {
        if self.shape() != t.shape() {
            return Err(Error::shape(format!(
                "model of shape {:?} against tensor of shape {:?}",
                self.shape(),
                t.shape()
            )));
        }
        Ok(())
    }

    /// Khatri-Rao product of every factor except `skip`, combined in
    /// decreasing mode order.
    pub fn khatri_rao_all_but(&self, skip: usize) -> Result<Matrix> {
        if skip >= self.order() {
            return Err(Error::ModeOutOfRange {
                mode: skip,
                order: self.order(),
            });
        }
        let mut acc: Option<Matrix> = None;
        for n in (0..self.order()).rev() {
            if n == skip {
                continue;
            }
            acc = Some(match acc {
                None => self.factors[n].clone(),
                Some(m) => khatri_rao(&m, &self.factors[n])?,
            });
        }
        // order >= 2, so at least one factor remains
        Ok(acc.expect("model has at least two factors"))
    }

    /// Dense reconstruction by direct summation over components.
    pub fn reconstruct(&self) -> DenseTensor {
        let shape = self.shape();
        let total: usize = shape.iter().product();
        let rank = self.rank();
        let order = self.order();
        let mut values = vec![0.0; total];
        let mut index = vec![0usize; order];
        for v in values.iter_mut() {
            let mut sum = 0.0;
            for r in 0..rank {
                let mut prod = 1.0;
                for (n, &i) in index.iter().enumerate() {
                    prod *= self.factors[n][(i, r)];
                }
                sum += prod;
            }
            *v = sum;
            // advance the multi-index, first mode fastest
            for (n, dim) in shape.iter().enumerate() {
                index[n] += 1;
                if index[n] < *dim {
                    break;
                }
                index[n] = 0;
            }
        }
        DenseTensor::from_values(shape, values).expect("factor shapes define a valid tensor")
    }

    /// Scale the columns of the first factor by `weights`, returning a new
    /// model. Reapplying the weights returned by column normalization
    /// restores the original reconstruction.
    pub fn scale_first_factor(&self, weights: &Vector) -> Result<KruskalModel> {
        if weights.len() != self.rank() {
            return Err(Error::invalid(format!(
                "{} weights for rank-{} model",
                weights.len(),
                self.rank()
            )));
        }
        let mut factors = self.factors.clone();
        for r in 0..self.rank() {
            let scaled = factors[0].column(r) * weights[r];
            factors[0].set_column(r, &scaled);
        }
        KruskalModel::new(factors)
    }

    /// Sum of squared Frobenius norms of all factors.
    pub fn factor_norm_squared(&self) -> f64 {
        self.factors.iter().map(|f| f.norm_squared()).sum()
    }
}

/// Smoothed, ridge-regularized l1 objective of a model against a tensor:
///
/// ```text
/// sum_elements sqrt((x - x_hat)^2 + eps) + (mu/2) * sum_n ||A_n||_F^2
/// ```
///
/// `eps > 0` smooths the absolute value; `mu >= 0` penalizes factor scale.
pub fn smoothed_l1_objective(
    t: &DenseTensor,
    k: &KruskalModel,
    eps: f64,
    mu: f64,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::invalid("eps must be positive"));
    }
    if mu < 0.0 {
        return Err(Error::invalid("mu must be nonnegative"));
    }
    k.check_compatible(t)?;
    let approx = k.reconstruct();
    let data_term: f64 = t
        .values()
        .iter()
        .zip(approx.values())
        .map(|(&x, &xh)| {
            let r = x - xh;
            (r * r + eps).sqrt()
        })
        .sum();
    Ok(data_term + 0.5 * mu * k.factor_norm_squared())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_model(shape: &[usize], rank: usize, seed: u64) -> KruskalModel {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let factors = shape
            .iter()
            .map(|&d| Matrix::from_fn(d, rank, |_, _| rng.random::<f64>() * 2.0 - 1.0))
            .collect();
        KruskalModel::new(factors).unwrap()
    }

    fn random_tensor(shape: &[usize], seed: u64) -> DenseTensor {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let total = shape.iter().product();
        let values = (0..total).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        DenseTensor::from_values(shape.to_vec(), values).unwrap()
    }

    #[test]
    fn new_rejects_mismatched_ranks() {
        let a = Matrix::zeros(2, 2);
        let b = Matrix::zeros(3, 3);
        assert!(KruskalModel::new(vec![a, b]).is_err());
    }

    #[test]
    fn rank_one_ones_reconstructs_ones() {
        let ones = |d| Matrix::from_element(d, 1, 1.0);
        let k = KruskalModel::new(vec![ones(2), ones(2), ones(2)]).unwrap();
        let t = k.reconstruct();
        assert!(t.values().iter().all(|&v| v == 1.0));
        assert_eq!(t.shape(), &[2, 2, 2]);
    }

    #[test]
    fn zero_component_does_not_contribute() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let shape = [3, 2, 2];
        let rank1: Vec<Matrix> = shape
            .iter()
            .map(|&d| Matrix::from_fn(d, 1, |_, _| rng.random::<f64>()))
            .collect();
        let padded: Vec<Matrix> = rank1
            .iter()
            .map(|f| {
                let mut m = Matrix::zeros(f.nrows(), 2);
                m.set_column(0, &f.column(0));
                m
            })
            .collect();
        let k1 = KruskalModel::new(rank1).unwrap();
        let k2 = KruskalModel::new(padded).unwrap();
        assert_eq!(k1.reconstruct(), k2.reconstruct());
    }

    #[test]
    fn reconstruct_matches_triple_loop_oracle() {
        let k = random_model(&[4, 3, 2], 3, 11);
        let t = k.reconstruct();
        for i in 0..4 {
            for j in 0..3 {
                for l in 0..2 {
                    let mut expected = 0.0;
                    for r in 0..3 {
                        expected += k.factor(0)[(i, r)] * k.factor(1)[(j, r)] * k.factor(2)[(l, r)];
                    }
                    assert_relative_eq!(t.get(&[i, j, l]).unwrap(), expected, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn khatri_rao_all_but_three_way_skip_first() {
        let k = random_model(&[2, 3, 4], 2, 5);
        let expected = khatri_rao(k.factor(2), k.factor(1)).unwrap();
        assert_eq!(k.khatri_rao_all_but(0).unwrap(), expected);
    }

    #[test]
    fn khatri_rao_all_but_two_way_is_other_factor() {
        let k = random_model(&[3, 4], 2, 9);
        assert_eq!(k.khatri_rao_all_but(0).unwrap(), *k.factor(1));
        assert_eq!(k.khatri_rao_all_but(1).unwrap(), *k.factor(0));
    }

    #[test]
    fn matricization_identity_all_modes_and_orders() {
        // matricize(reconstruct(k), n) = A_n * Z_n^T for every mode,
        // across orders 2 to 4
        for (seed, shape) in [(1u64, vec![3, 4]), (2, vec![2, 3, 4]), (3, vec![2, 2, 3, 2])] {
            let k = random_model(&shape, 3, seed);
            let t = k.reconstruct();
            for mode in 0..shape.len() {
                let lhs = t.matricize(mode).unwrap();
                let rhs = k.factor(mode) * k.khatri_rao_all_but(mode).unwrap().transpose();
                let denom = rhs.norm().max(1e-300);
                assert!(
                    (&lhs - &rhs).norm() / denom < 1e-10,
                    "identity failed for shape {:?} mode {}",
                    shape,
                    mode
                );
            }
        }
    }

    #[test]
    fn mode_two_identity_against_reconstruction() {
        let k = random_model(&[3, 2, 4], 2, 21);
        let z = k.khatri_rao_all_but(1).unwrap();
        let expected = khatri_rao(k.factor(2), k.factor(0)).unwrap();
        assert_eq!(z, expected);
        let lhs = k.reconstruct().matricize(1).unwrap();
        let rhs = k.factor(1) * z.transpose();
        assert!((&lhs - &rhs).norm() / rhs.norm() < 1e-12);
    }

    #[test]
    fn objective_zero_residuals_counts_sqrt_eps() {
        let k = random_model(&[3, 3, 3], 2, 13);
        let t = k.reconstruct();
        let eps = 1e-10;
        let got = smoothed_l1_objective(&t, &k, eps, 0.0).unwrap();
        assert_relative_eq!(got, 27.0 * eps.sqrt(), max_relative = 1e-9);
    }

    #[test]
    fn objective_zero_model_zero_tensor() {
        let zeros = |d| Matrix::zeros(d, 2);
        let k = KruskalModel::new(vec![zeros(2), zeros(3)]).unwrap();
        let t = DenseTensor::zeros(vec![2, 3]).unwrap();
        let eps = 1e-4;
        let got = smoothed_l1_objective(&t, &k, eps, 0.5).unwrap();
        assert_relative_eq!(got, 6.0 * eps.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn objective_matches_elementwise_oracle() {
        let k = random_model(&[3, 4, 2], 2, 17);
        let t = random_tensor(&[3, 4, 2], 18);
        let (eps, mu) = (1e-6, 1e-3);
        let approx = k.reconstruct();
        let mut oracle = 0.0;
        for (x, xh) in t.values().iter().zip(approx.values()) {
            oracle += ((x - xh).powi(2) + eps).sqrt();
        }
        for f in k.factors() {
            oracle += 0.5 * mu * f.iter().map(|v| v * v).sum::<f64>();
        }
        let got = smoothed_l1_objective(&t, &k, eps, mu).unwrap();
        assert_relative_eq!(got, oracle, max_relative = 1e-12);
    }

    #[test]
    fn objective_brackets_plain_l1() {
        // with mu = 0: l1 <= objective <= l1 + count * sqrt(eps)
        for seed in 0..20u64 {
            let k = random_model(&[3, 3, 2], 2, seed);
            let t = random_tensor(&[3, 3, 2], seed + 1000);
            let eps = 1e-8;
            let obj = smoothed_l1_objective(&t, &k, eps, 0.0).unwrap();
            let approx = k.reconstruct();
            let l1: f64 = t
                .values()
                .iter()
                .zip(approx.values())
                .map(|(x, xh)| (x - xh).abs())
                .sum();
            assert!(obj >= l1);
            assert!(obj <= l1 + 18.0 * eps.sqrt() + 1e-12);
        }
    }

    #[test]
    fn scale_first_factor_round_trips_reconstruction() {
        let k = random_model(&[3, 2, 2], 2, 23);
        let w = Vector::from_vec(vec![2.0, 0.5]);
        let scaled = k.scale_first_factor(&w).unwrap();
        let unscaled = scaled
            .scale_first_factor(&Vector::from_vec(vec![0.5, 2.0]))
            .unwrap();
        let a = k.reconstruct();
        let b = unscaled.reconstruct();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_relative_eq!(x, y, epsilon = 1e-12);
        }
    }
}
