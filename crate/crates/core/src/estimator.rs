//! Regularized least-squares calibration of the radiator parameters.
//!
//! The energy balance over `M` integration periods and `K` radiators reads
//! `Q = A θ + δQ`, with `A[i][j]` the integral of radiator `j`'s normalized
//! excess temperature over period `i` and `Q[i]` the total energy of that
//! period. The estimate minimizes `‖Q − Aθ‖² + λ‖θ − θ₀‖²`:
//!
//! ```text
//! θ̂ = (AᵀA + λI)⁻¹ (AᵀQ + λθ₀),    C = (AᵀA + λI)⁻¹
//! ```
//!
//! Everything here works in the native units of the matrix: with `A` in
//! hours and `Q` in kWh, `θ` is in kW and `λ` in h².

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::domain::{validate_dataset, Dataset, Method};
use crate::linalg::{self, Cholesky, Matrix};
use crate::thermal::integral_column;
use crate::Error;

/// Default L-curve grid: 20 points from 1e-6 to 1e2.
pub const DEFAULT_GRID: (f64, f64, usize) = (1e-6, 1e2, 20);

/// The assembled linear system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingMatrix {
    /// M × K, hours.
    pub a: Matrix,
    /// M, kWh.
    pub q: Vec<f64>,
    pub period_index: Vec<usize>,
    pub radiator_ids: Vec<String>,
}

impl SamplingMatrix {
    pub fn new(
        a: Matrix,
        q: Vec<f64>,
        period_index: Vec<usize>,
        radiator_ids: Vec<String>,
    ) -> Result<Self, Error> {
        if q.len() != a.rows() {
            return Err(Error::DimensionMismatch {
                expected: a.rows(),
                found: q.len(),
            });
        }
        if period_index.len() != a.rows() {
            return Err(Error::DimensionMismatch {
                expected: a.rows(),
                found: period_index.len(),
            });
        }
        if radiator_ids.len() != a.cols() {
            return Err(Error::DimensionMismatch {
                expected: a.cols(),
                found: radiator_ids.len(),
            });
        }
        if !a.is_finite() || q.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            a,
            q,
            period_index,
            radiator_ids,
        })
    }

    /// Unlabelled system, for tests and synthetic problems.
    pub fn unlabelled(a: Matrix, q: Vec<f64>) -> Result<Self, Error> {
        let ids = (0..a.cols()).map(|j| alloc::format!("{j}")).collect();
        let rows = (0..a.rows()).collect();
        Self::new(a, q, rows, ids)
    }

    pub fn n_samplings(&self) -> usize {
        self.a.rows()
    }

    pub fn n_radiators(&self) -> usize {
        self.a.cols()
    }

    /// Same system with `Q` multiplied by `factor`.
    pub fn with_scaled_total(&self, factor: f64) -> Self {
        Self {
            q: self.q.iter().map(|x| x * factor).collect(),
            ..self.clone()
        }
    }

    /// Column sums of `A`: each radiator's season integral.
    pub fn column_totals(&self) -> Vec<f64> {
        (0..self.a.cols()).map(|j| self.a.column(j).sum()).collect()
    }
}

/// Builds `A` and `Q` from a validated dataset.
pub fn assemble(dataset: &Dataset, method: Method) -> Result<SamplingMatrix, Error> {
    let violations = validate_dataset(dataset, Some(method));
    if !violations.is_empty() {
        return Err(Error::InvalidDataset(violations));
    }
    let m = dataset.periods.len();
    let k = dataset.radiators.len();
    let mut a = Matrix::zeros(m, k);
    for (i, p) in dataset.periods.iter().enumerate() {
        for (j, r) in dataset.radiators.iter().enumerate() {
            a[(i, j)] = integral_column(dataset, method, &r.id, p)?.value;
        }
    }
    SamplingMatrix::new(
        a,
        dataset.total_energy_per_period.clone(),
        dataset.periods.iter().map(|p| p.index).collect(),
        dataset.radiators.iter().map(|r| r.id.clone()).collect(),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub radiator_ids: Vec<String>,
    /// Native units of the sampling matrix (kW for kWh over hours).
    pub theta_hat: Vec<f64>,
    pub covariance: Matrix,
    pub lambda: f64,
    /// `‖Q − Aθ̂‖₂`, kWh.
    pub residual_norm: f64,
    /// `‖θ̂ − θ₀‖₂`, native units.
    pub prior_deviation_norm: f64,
    pub n_samplings: usize,
}

impl EstimationResult {
    pub fn theta_hat_watts(&self) -> Vec<f64> {
        self.theta_hat.iter().map(|t| t * 1000.0).collect()
    }

    /// Indices of physically impossible negative estimates.
    pub fn negative_components(&self) -> Vec<usize> {
        self.theta_hat
            .iter()
            .enumerate()
            .filter(|(_, t)| **t < 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    /// Relative parameter uncertainty per radiator: `√C_jj / (√M θ̂_j)`.
    pub fn relative_parameter_uncertainty(&self) -> Vec<f64> {
        let sqrt_m = libm::sqrt(self.n_samplings.max(1) as f64);
        self.covariance
            .diagonal()
            .iter()
            .zip(&self.theta_hat)
            .map(|(c, t)| libm::sqrt(c.max(0.0)) / (sqrt_m * t.abs()))
            .collect()
    }

    /// Residual variance `‖r‖² / (M − K)`, a diagnostic scale for the
    /// covariance. `None` when the system has no redundancy.
    pub fn residual_variance(&self) -> Option<f64> {
        let k = self.theta_hat.len();
        (self.n_samplings > k)
            .then(|| self.residual_norm * self.residual_norm / (self.n_samplings - k) as f64)
    }
}

/// Normal equations with `AᵀA` and `AᵀQ` computed once, for repeated solves.
#[derive(Clone, Debug)]
pub struct NormalEquations<'a> {
    sm: &'a SamplingMatrix,
    gram: Matrix,
    atq: Vec<f64>,
}

impl<'a> NormalEquations<'a> {
    pub fn new(sm: &'a SamplingMatrix) -> Self {
        Self {
            sm,
            gram: sm.a.gram(),
            atq: sm.a.tr_mul_vec(&sm.q),
        }
    }

    fn check(&self, theta0: &[f64], lambda: f64) -> Result<(), Error> {
        if theta0.len() != self.sm.n_radiators() {
            return Err(Error::DimensionMismatch {
                expected: self.sm.n_radiators(),
                found: theta0.len(),
            });
        }
        if !lambda.is_finite() || theta0.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        if lambda < 0.0 {
            return Err(Error::InvalidArgument("regularization parameter must be non-negative"));
        }
        Ok(())
    }

    fn factor(&self, lambda: f64) -> Result<Cholesky, Error> {
        let mut s = self.gram.clone();
        for j in 0..s.rows() {
            s[(j, j)] += lambda;
        }
        Cholesky::new(&s)
    }

    fn rhs(&self, theta0: &[f64], lambda: f64) -> Vec<f64> {
        self.atq
            .iter()
            .zip(theta0)
            .map(|(a, t)| a + lambda * t)
            .collect()
    }

    /// Estimate without the covariance.
    pub fn theta(&self, theta0: &[f64], lambda: f64) -> Result<Vec<f64>, Error> {
        self.check(theta0, lambda)?;
        if self.sm.n_samplings() == 0 && lambda > 0.0 {
            return Ok(theta0.to_vec());
        }
        Ok(self.factor(lambda)?.solve(&self.rhs(theta0, lambda)))
    }

    pub fn solve(&self, theta0: &[f64], lambda: f64) -> Result<EstimationResult, Error> {
        self.check(theta0, lambda)?;
        let k = self.sm.n_radiators();
        let (theta_hat, covariance) = if self.sm.n_samplings() == 0 && lambda > 0.0 {
            let mut c = Matrix::identity(k);
            for j in 0..k {
                c[(j, j)] = 1.0 / lambda;
            }
            (theta0.to_vec(), c)
        } else {
            let chol = self.factor(lambda)?;
            (chol.solve(&self.rhs(theta0, lambda)), chol.inverse())
        };
        let (residual_norm, prior_deviation_norm) = self.norms(&theta_hat, theta0);
        Ok(EstimationResult {
            radiator_ids: self.sm.radiator_ids.clone(),
            theta_hat,
            covariance,
            lambda,
            residual_norm,
            prior_deviation_norm,
            n_samplings: self.sm.n_samplings(),
        })
    }

    /// `(‖Q − Aθ‖₂, ‖θ − θ₀‖₂)`
    pub fn norms(&self, theta: &[f64], theta0: &[f64]) -> (f64, f64) {
        let fitted = self.sm.a.mul_vec(theta);
        let r: Vec<f64> = self.sm.q.iter().zip(&fitted).map(|(q, f)| q - f).collect();
        let d: Vec<f64> = theta.iter().zip(theta0).map(|(t, t0)| t - t0).collect();
        (linalg::norm2(&r), linalg::norm2(&d))
    }

    /// Infinity-norm residual of the regularized normal equations, relative
    /// to the right-hand side.
    pub fn relative_residual(&self, theta: &[f64], theta0: &[f64], lambda: f64) -> f64 {
        let rhs = self.rhs(theta0, lambda);
        let lhs: Vec<f64> = self
            .gram
            .mul_vec(theta)
            .iter()
            .zip(theta)
            .map(|(g, t)| g + lambda * t)
            .collect();
        let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
        linalg::norm_inf(&diff) / linalg::norm_inf(&rhs).max(f64::MIN_POSITIVE)
    }
}

/// Closed-form regularized solve with covariance.
pub fn solve_rls(sm: &SamplingMatrix, theta0: &[f64], lambda: f64) -> Result<EstimationResult, Error> {
    NormalEquations::new(sm).solve(theta0, lambda)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LCurvePoint {
    pub lambda: f64,
    pub residual_norm: f64,
    pub prior_deviation_norm: f64,
    /// Signed curvature of `(ln ρ, ln η)` parametrized by `ln λ`. `None` at
    /// the two ends of the grid.
    pub curvature: Option<f64>,
}

/// `n` logarithmically spaced values from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (libm::log10(lo), libm::log10(hi));
            (0..n)
                .map(|i| libm::pow(10.0, a + (b - a) * i as f64 / (n - 1) as f64))
                .collect()
        }
    }
}

pub fn default_grid() -> Vec<f64> {
    log_grid(DEFAULT_GRID.0, DEFAULT_GRID.1, DEFAULT_GRID.2)
}

fn check_grid(grid: &[f64]) -> Result<(), Error> {
    if grid.len() < 5 {
        return Err(Error::InvalidArgument("L-curve grid needs at least 5 points"));
    }
    if grid.iter().any(|l| !(*l > 0.0) || !l.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("L-curve grid must be positive and ascending"));
    }
    if libm::log10(grid[grid.len() - 1] / grid[0]) < 4.0 - 1e-9 {
        return Err(Error::InvalidArgument("L-curve grid must span at least 4 decades"));
    }
    Ok(())
}

/// Traces the L-curve over `grid`.
pub fn lcurve(sm: &SamplingMatrix, theta0: &[f64], grid: &[f64]) -> Result<Vec<LCurvePoint>, Error> {
    let ne = NormalEquations::new(sm);
    let mut points = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let theta = ne.theta(theta0, lambda)?;
        let (residual_norm, prior_deviation_norm) = ne.norms(&theta, theta0);
        points.push(LCurvePoint {
            lambda,
            residual_norm,
            prior_deviation_norm,
            curvature: None,
        });
    }
    let ln = |v: f64| libm::log(v.max(1e-300));
    let s: Vec<f64> = points.iter().map(|p| ln(p.lambda)).collect();
    let x: Vec<f64> = points.iter().map(|p| ln(p.residual_norm)).collect();
    let y: Vec<f64> = points.iter().map(|p| ln(p.prior_deviation_norm)).collect();
    for i in 1..points.len().saturating_sub(1) {
        points[i].curvature = Some(three_point_curvature(
            [s[i - 1], s[i], s[i + 1]],
            [x[i - 1], x[i], x[i + 1]],
            [y[i - 1], y[i], y[i + 1]],
        ));
    }
    Ok(points)
}

/// Curvature at the middle of three points of a parametric curve, from
/// second-order finite differences on a possibly uneven parameter grid.
fn three_point_curvature(s: [f64; 3], x: [f64; 3], y: [f64; 3]) -> f64 {
    let h1 = s[1] - s[0];
    let h2 = s[2] - s[1];
    let d1 = |f: [f64; 3]| {
        -h2 / (h1 * (h1 + h2)) * f[0] + (h2 - h1) / (h1 * h2) * f[1] + h1 / (h2 * (h1 + h2)) * f[2]
    };
    let d2 = |f: [f64; 3]| {
        2.0 * (f[0] / (h1 * (h1 + h2)) - f[1] / (h1 * h2) + f[2] / (h2 * (h1 + h2)))
    };
    let (dx, dy) = (d1(x), d1(y));
    let (ddx, ddy) = (d2(x), d2(y));
    let speed = dx * dx + dy * dy;
    if speed == 0.0 {
        return 0.0;
    }
    (dx * ddy - ddx * dy) / libm::pow(speed, 1.5)
}

/// Grid value of maximum L-curve curvature, ties going to the larger λ.
///
/// A curve whose residual does not vary, or that never bends toward the
/// origin, has no corner and is reported as [`Error::DegenerateLCurve`].
pub fn lcurve_select(
    sm: &SamplingMatrix,
    theta0: &[f64],
    grid: &[f64],
) -> Result<(f64, Vec<LCurvePoint>), Error> {
    check_grid(grid)?;
    let points = lcurve(sm, theta0, grid)?;
    let (lo, hi) = points.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), p| {
        (lo.min(p.residual_norm), hi.max(p.residual_norm))
    });
    if hi - lo <= 1e-12 * hi.max(1e-300) {
        return Err(Error::DegenerateLCurve);
    }
    let mut best: Option<(f64, f64)> = None;
    for p in &points {
        if let Some(k) = p.curvature {
            if k.is_finite() && best.is_none_or(|(bk, _)| k >= bk) {
                best = Some((k, p.lambda));
            }
        }
    }
    match best {
        Some((k, lambda)) if k > 0.0 => Ok((lambda, points)),
        _ => Err(Error::DegenerateLCurve),
    }
}

/// Re-estimates with the previous estimate as the prior.
pub fn recalibrate(
    previous: &EstimationResult,
    new_data: &SamplingMatrix,
    lambda: f64,
) -> Result<EstimationResult, Error> {
    if previous.theta_hat.len() != new_data.n_radiators() {
        return Err(Error::DimensionMismatch {
            expected: new_data.n_radiators(),
            found: previous.theta_hat.len(),
        });
    }
    solve_rls(new_data, &previous.theta_hat, lambda)
}
