//! Smoothed l1 regression by majorization-minimization.
//!
//! For observations `y` and a design matrix `M`, the loss is
//!
//! ```text
//! L(u) = sum_i sqrt(r_i(u)^2 + eps) + (mu/2) * ||u||^2,    r_i(u) = y_i - m_i . u
//! ```
//!
//! with `eps, mu > 0`, which makes `L` smooth, strictly convex and coercive,
//! so it has a unique minimizer. At an anchor point `v` the loss is majorized
//! by replacing each square root with its tangent quadratic
//!
//! ```text
//! h(u | v) = sum_i { sqrt(r_i(v)^2 + eps) + (r_i(u)^2 - r_i(v)^2) / (2 sqrt(r_i(v)^2 + eps)) }
//!            + (mu/2) * ||u||^2
//! ```
//!
//! which touches `L` at `u = v` and dominates it elsewhere. Minimizing the
//! majorizer is a ridge-regularized weighted least-squares solve with
//! weights `w_i = (r_i(v)^2 + eps)^(-1/2)`:
//!
//! ```text
//! (M^T W M + mu I) u = M^T W y
//! ```
//!
//! Iterating this step never increases `L` and converges to its global
//! minimum; that is the whole solver.

use crate::error::{Error, Result};
use crate::linalg::{solve_spd, Matrix, Vector};

/// One smoothed l1 regression instance. The design matrix is borrowed so
/// many row problems can share it.
#[derive(Debug, Clone)]
pub struct L1Problem<'a> {
    y: Vector,
    design: &'a Matrix,
    eps: f64,
    mu: f64,
}

/// Stopping controls for [`L1Problem::solve`].
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Relative objective-change threshold: stop once
    /// `|L_k - L_{k+1}| / (1 + |L_k|) < tol`.
    pub tol: f64,
    /// Iteration cap; hitting it flags non-convergence, it is not an error.
    pub max_iter: usize,
    /// Optional warm start; the zero vector otherwise.
    pub initial: Option<Vector>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-9,
            max_iter: 100,
            initial: None,
        }
    }
}

impl SolverOptions {
    pub fn with_initial(&self, initial: Vector) -> Self {
        SolverOptions {
            initial: Some(initial),
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tol must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        Ok(())
    }
}

/// Per-iteration objective history of one solve.
#[derive(Debug, Clone)]
pub struct SolveTrace {
    /// Objective values, starting at the initial point; non-increasing by
    /// the descent property of the majorization step.
    pub objectives: Vec<f64>,
    /// Number of MM steps taken.
    pub iterations: usize,
    /// Whether the relative-change criterion was met before `max_iter`.
    pub converged: bool,
}

impl<'a> L1Problem<'a> {
    pub fn new(y: Vector, design: &'a Matrix, eps: f64, mu: f64) -> Result<Self> {
        if y.len() != design.nrows() {
            return Err(Error::shape(format!(
                "observation length {} against {} design rows",
                y.len(),
                design.nrows()
            )));
        }
        if !(eps > 0.0) {
            return Err(Error::invalid("eps must be positive"));
        }
        if !(mu > 0.0) {
            return Err(Error::invalid("mu must be positive"));
        }
        Ok(L1Problem { y, design, eps, mu })
    }

    pub fn observations(&self) -> &Vector {
        &self.y
    }

    pub fn design(&self) -> &Matrix {
        self.design
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    fn num_observations(&self) -> usize {
        self.y.len()
    }

    fn num_coefficients(&self) -> usize {
        self.design.ncols()
    }

    fn check_len(&self, u: &Vector) -> Result<()> {
        if u.len() != self.num_coefficients() {
            return Err(Error::shape(format!(
                "coefficient vector of length {}, design has {} columns",
                u.len(),
                self.num_coefficients()
            )));
        }
        Ok(())
    }

    /// Residual vector `y - M u`.
    pub fn residuals(&self, u: &Vector) -> Result<Vector> {
        self.check_len(u)?;
        Ok(&self.y - self.design * u)
    }

    /// Smoothed loss `sum_i sqrt(r_i^2 + eps) + (mu/2) ||u||^2`.
    pub fn smoothed_loss(&self, u: &Vector) -> Result<f64> {
        let r = self.residuals(u)?;
        let data: f64 = r.iter().map(|ri| (ri * ri + self.eps).sqrt()).sum();
        Ok(data + 0.5 * self.mu * u.norm_squared())
    }

    /// Tangent-quadratic majorizer of the loss, anchored at `anchor`.
    /// Equals the loss at `u = anchor` and dominates it everywhere else.
    pub fn majorizer(&self, u: &Vector, anchor: &Vector) -> Result<f64> {
        let r_anchor = self.residuals(anchor)?;
        let r = self.residuals(u)?;
        let mut total = 0.0;
        for i in 0..self.num_observations() {
            let s = (r_anchor[i] * r_anchor[i] + self.eps).sqrt();
            total += s + (r[i] * r[i] - r_anchor[i] * r_anchor[i]) / (2.0 * s);
        }
        Ok(total + 0.5 * self.mu * u.norm_squared())
    }

    /// Analytic gradient of the smoothed loss:
    /// `sum_i -m_i r_i / sqrt(r_i^2 + eps) + mu u`.
    pub fn gradient(&self, u: &Vector) -> Result<Vector> {
        let r = self.residuals(u)?;
        let j = self.num_coefficients();
        let mut g = Vector::zeros(j);
        for i in 0..self.num_observations() {
            let scale = r[i] / (r[i] * r[i] + self.eps).sqrt();
            for a in 0..j {
                g[a] -= self.design[(i, a)] * scale;
            }
        }
        g += self.mu * u;
        Ok(g)
    }

    /// Weighted normal equations of the majorizer at residuals `r`:
    /// `gram = M^T W M + mu I`, `rhs = M^T W y`, accumulated column against
    /// column so the passes run over contiguous memory.
    fn weighted_normal_equations(&self, r: &Vector) -> (Matrix, Vector) {
        let (i_dim, j_dim) = (self.num_observations(), self.num_coefficients());
        let mut weights = Vec::with_capacity(i_dim);
        for i in 0..i_dim {
            weights.push(1.0 / (r[i] * r[i] + self.eps).sqrt());
        }
        let mut gram = Matrix::zeros(j_dim, j_dim);
        let mut rhs = Vector::zeros(j_dim);
        let design = self.design.as_slice();
        let y = self.y.as_slice();
        for a in 0..j_dim {
            let col_a = &design[a * i_dim..(a + 1) * i_dim];
            let mut dot_y = 0.0;
            for i in 0..i_dim {
                dot_y += weights[i] * col_a[i] * y[i];
            }
            rhs[a] = dot_y;
            for b in a..j_dim {
                let col_b = &design[b * i_dim..(b + 1) * i_dim];
                let mut dot = 0.0;
                for i in 0..i_dim {
                    dot += weights[i] * col_a[i] * col_b[i];
                }
                gram[(a, b)] = dot;
                gram[(b, a)] = dot;
            }
            gram[(a, a)] += self.mu;
        }
        (gram, rhs)
    }

    fn loss_from_residuals(&self, r: &Vector, u: &Vector) -> f64 {
        let data: f64 = r.iter().map(|ri| (ri * ri + self.eps).sqrt()).sum();
        data + 0.5 * self.mu * u.norm_squared()
    }

    /// One majorization-minimization step: minimize the majorizer anchored
    /// at `u` by solving `(M^T W M + mu I) u' = M^T W y` with weights
    /// `w_i = (r_i(u)^2 + eps)^(-1/2)`. The weights are applied row-wise;
    /// no I x I matrix is formed.
    pub fn mm_step(&self, u: &Vector) -> Result<Vector> {
        let r = self.residuals(u)?;
        let (gram, rhs) = self.weighted_normal_equations(&r);
        solve_spd(gram, &rhs)
    }

    /// Run MM steps from the warm start (or zero) until the relative
    /// objective change drops below `opts.tol` or `opts.max_iter` is hit.
    /// Each iterate is exactly one [`L1Problem::mm_step`]; the residual
    /// vector is shared between the step and the objective evaluation.
    pub fn solve(&self, opts: &SolverOptions) -> Result<(Vector, SolveTrace)> {
        opts.validate()?;
        let mut u = match &opts.initial {
            Some(start) => {
                self.check_len(start)?;
                start.clone()
            }
            None => Vector::zeros(self.num_coefficients()),
        };
        let mut r = self.residuals(&u)?;
        let mut objectives = vec![self.loss_from_residuals(&r, &u)];
        let mut converged = false;
        let mut iterations = 0;
        for _ in 0..opts.max_iter {
            let (gram, rhs) = self.weighted_normal_equations(&r);
            u = solve_spd(gram, &rhs)?;
            r = self.residuals(&u)?;
            let obj = self.loss_from_residuals(&r, &u);
            let prev = *objectives.last().expect("trace starts non-empty");
            objectives.push(obj);
            iterations += 1;
            if (prev - obj).abs() / (1.0 + prev.abs()) < opts.tol {
                converged = true;
                break;
            }
        }
        Ok((
            u,
            SolveTrace {
                objectives,
                iterations,
                converged,
            },
        ))
    }
}
