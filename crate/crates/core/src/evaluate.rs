//! Factor match scoring of a recovered model against ground truth.
//!
//! Both models are column-normalized, then every estimated/true component
//! pair gets the product over modes of absolute column cosines. Components
//! are matched by an optimal assignment on that score matrix and the final
//! score is the mean of the matched component scores, so it lies in [0, 1],
//! equals 1 exactly on perfect recovery, and is invariant to the CP
//! indeterminacies: component order, per-column positive rescaling, and
//! sign flips that cancel across modes.

use crate::error::{Error, Result};
use crate::kruskal::KruskalModel;
use crate::linalg::{Matrix, Vector};

/// Factor match score with the matched permutation and per-component
/// subscores.
#[derive(Debug, Clone)]
pub struct FmsReport {
    /// Mean of `component_scores`, in [0, 1].
    pub score: f64,
    /// `permutation[p]` is the truth component matched to estimated
    /// component `p`; a bijection on `0..R`.
    pub permutation: Vec<usize>,
    /// Per-component products of absolute column cosines, in [0, 1].
    pub component_scores: Vec<f64>,
}

/// Rescale every factor column to unit Euclidean norm. `weights[r]` is the
/// product of the original column-r norms across modes, so scaling the first
/// factor's columns back by the weights restores the original
/// reconstruction. A zero column gets weight 0 and an arbitrary unit
/// direction (the first basis vector).
pub fn normalize_columns(k: &KruskalModel) -> (KruskalModel, Vector) {
    let rank = k.rank();
    let mut weights = Vector::from_element(rank, 1.0);
    let mut factors: Vec<Matrix> = k.factors().to_vec();
    for factor in factors.iter_mut() {
        for r in 0..rank {
            let norm = factor.column(r).norm();
            if norm > 0.0 {
                weights[r] *= norm;
                let scaled = factor.column(r) / norm;
                factor.set_column(r, &scaled);
            } else {
                log::warn!("zero factor column {} normalized to an arbitrary direction", r);
                weights[r] = 0.0;
                let mut unit = Vector::zeros(factor.nrows());
                unit[0] = 1.0;
                factor.set_column(r, &unit);
            }
        }
    }
    let normalized = KruskalModel::new(factors).expect("normalization preserves shapes");
    (normalized, weights)
}

/// Optimal assignment maximizing the sum of `score[p][q]` over bijections
/// p -> q. Hungarian algorithm with potentials, O(R^3).
fn best_assignment(score: &[Vec<f64>]) -> Vec<usize> {
    let n = score.len();
    // minimize the negated scores; 1-based arrays with column 0 as scratch
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut matched = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = -score[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[matched[j] - 1] = j - 1;
    }
    assignment
}

/// Factor match score between two models of equal rank and shape.
pub fn factor_match_score(estimated: &KruskalModel, truth: &KruskalModel) -> Result<FmsReport> {
    if estimated.rank() != truth.rank() {
        return Err(Error::shape(format!(
            "rank {} against rank {}",
            estimated.rank(),
            truth.rank()
        )));
    }
    if estimated.shape() != truth.shape() {
        return Err(Error::shape(format!(
            "model shapes {:?} and {:?} differ",
            estimated.shape(),
            truth.shape()
        )));
    }
    let rank = estimated.rank();
    let (est, _) = normalize_columns(estimated);
    let (tru, _) = normalize_columns(truth);
    let mut score = vec![vec![1.0f64; rank]; rank];
    for n in 0..est.order() {
        let (ef, tf) = (est.factor(n), tru.factor(n));
        for (p, row) in score.iter_mut().enumerate() {
            for (q, s) in row.iter_mut().enumerate() {
                // columns are unit norm; clamp rounding above 1
                *s *= ef.column(p).dot(&tf.column(q)).abs().min(1.0);
            }
        }
    }
    let permutation = best_assignment(&score);
    let component_scores: Vec<f64> = permutation
        .iter()
        .enumerate()
        .map(|(p, &q)| score[p][q])
        .collect();
    let total: f64 = component_scores.iter().sum();
    Ok(FmsReport {
        score: total / rank as f64,
        permutation,
        component_scores,
    })
}
