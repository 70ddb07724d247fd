//! Iterative angle-grid estimators.
//!
//! Both estimators share one outer loop. Each iteration builds the
//! covariance `R = A diag(|x|^2) A^H + delta I` from the current iterate,
//! inverts it once, and then updates every cell independently (Jacobi
//! order) from per-cell weighted statistics. The leave-one-out covariance
//! `Q_i = R - |x_i|^2 a_i a_i^H` is never formed: its inverse is a rank-one
//! downdate of `R^{-1}`.
//!
//! The TIGRE update adds a ridge on each cell whose weight shrinks when the
//! two diagonal cells sharing its row or column carry power:
//!
//! ```text
//! D = |X_gg|^2 + |X_qq|^2 + eps0
//! X_gq <- D beta / (D gamma + lambda_gq)
//! ```
//!
//! With every `lambda = 0` this collapses to the plain MP-IAA weighted least
//! squares update `beta / gamma`.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{cell_coords, AngleSpectrum, ArrayModel, Measurement};
use crate::Complex64;

/// Downdate denominators at or below this trigger a direct inversion of `Q_i`.
pub const DOWNDATE_TOL: f64 = 1e-10;

/// Singular values of the initializer's design matrix below
/// `PINV_RCOND * s_max` are treated as zero.
pub const PINV_RCOND: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "tigre")]
    Tigre,
    #[serde(rename = "mp-iaa")]
    MpIaa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Init {
    #[serde(rename = "diagonal-ls")]
    DiagonalLs,
    #[serde(rename = "matched-filter")]
    MatchedFilter,
    #[serde(rename = "random")]
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    /// Ridge weight on DOA = DOD cells.
    pub lambda_diag: f64,
    /// Ridge weight on DOA != DOD cells.
    pub lambda_offdiag: f64,
    pub eps0: f64,
    /// Stop once `||x^{n+1} - x^n||_2` drops below this.
    pub eps_x: f64,
    pub max_iters: usize,
    /// Relative diagonal loading; the absolute load is this times the mean
    /// diagonal of `A diag(|x|^2) A^H` (or this value itself when that is zero).
    pub diag_loading: f64,
    /// Fraction of each sweep's update that is applied; 1 takes the raw
    /// update, smaller values damp the period-two flip that coherent
    /// neighbouring cells can fall into.
    pub relaxation: f64,
    pub method: Method,
    pub init: Init,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self::tigre()
    }
}

impl SolverParams {
    pub fn tigre() -> Self {
        Self {
            lambda_diag: 1.0,
            lambda_offdiag: 10.0,
            eps0: 1e-6,
            eps_x: 1e-2,
            max_iters: 100,
            diag_loading: 1e-8,
            relaxation: 0.5,
            method: Method::Tigre,
            init: Init::DiagonalLs,
        }
    }

    /// TIGRE started from a random grid instead of the diagonal fit.
    pub fn tigre_random_init() -> Self {
        Self {
            init: Init::Random,
            ..Self::tigre()
        }
    }

    pub fn mp_iaa() -> Self {
        Self {
            method: Method::MpIaa,
            init: Init::MatchedFilter,
            ..Self::tigre()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.lambda_diag >= 0.0 && self.lambda_offdiag >= 0.0) {
            return bad(format!(
                "lambdas must be nonnegative (diag {}, offdiag {})",
                self.lambda_diag, self.lambda_offdiag
            ));
        }
        if !(self.eps0 > 0.0 && self.eps0.is_finite()) {
            return bad(format!("eps0 must be positive, got {}", self.eps0));
        }
        // eps_x may be +inf, which forces a single iteration.
        if !(self.eps_x > 0.0) {
            return bad(format!("eps_x must be positive, got {}", self.eps_x));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if !(self.diag_loading >= 0.0 && self.diag_loading.is_finite()) {
            return bad(format!("diag_loading must be nonnegative, got {}", self.diag_loading));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return bad(format!("relaxation must be in (0, 1], got {}", self.relaxation));
        }
        Ok(())
    }

    /// Ridge weight for cell `(g, q)`.
    pub fn lambda(&self, g: usize, q: usize) -> f64 {
        if g == q {
            self.lambda_diag
        } else {
            self.lambda_offdiag
        }
    }
}

/// `R` and its inverse for one iterate.
#[derive(Debug, Clone)]
pub struct CovarianceState {
    r: DMatrix<Complex64>,
    r_inv: DMatrix<Complex64>,
    loading: f64,
}

impl CovarianceState {
    pub fn r(&self) -> &DMatrix<Complex64> {
        &self.r
    }

    pub fn r_inv(&self) -> &DMatrix<Complex64> {
        &self.r_inv
    }

    pub fn loading(&self) -> f64 {
        self.loading
    }
}

/// Builds `R = A diag(|x|^2) A^H + loading * I` and inverts it.
pub fn build_covariance(
    x: &DVector<Complex64>,
    model: &ArrayModel,
    loading: f64,
) -> Result<CovarianceState> {
    let r = signal_covariance(x, model)?;
    covariance_with_loading(r, loading)
}

fn signal_covariance(x: &DVector<Complex64>, model: &ArrayModel) -> Result<DMatrix<Complex64>> {
    if x.len() != model.n_cells() {
        return Err(Error::DimensionMismatch {
            expected: model.n_cells(),
            actual: x.len(),
        });
    }
    check_finite(x, model.size(), "iterate")?;
    let size = model.size();
    let powers = DMatrix::from_fn(size, size, |g, q| x[g + q * size].norm_sqr());
    Ok(model.signal_covariance(&powers))
}

fn covariance_with_loading(mut r: DMatrix<Complex64>, loading: f64) -> Result<CovarianceState> {
    for k in 0..r.nrows() {
        r[(k, k)] += Complex64::new(loading, 0.0);
    }
    hermitize(&mut r);
    let r_inv = match Cholesky::new(r.clone()) {
        Some(chol) => chol.inverse(),
        None => r
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular(format!("covariance with loading {loading:e}")))?,
    };
    let mut r_inv = r_inv;
    hermitize(&mut r_inv);
    Ok(CovarianceState { r, r_inv, loading })
}

/// Covariance for an iterate: the measurement noise variance plus a
/// relative load of `diag_loading` times the mean diagonal of the signal part.
pub fn covariance_for_iterate(
    x: &DVector<Complex64>,
    model: &ArrayModel,
    diag_loading: f64,
    noise_variance: f64,
) -> Result<CovarianceState> {
    let r = signal_covariance(x, model)?;
    let mean_diag = r.diagonal().iter().map(|v| v.re).sum::<f64>() / r.nrows() as f64;
    let relative = if mean_diag > 0.0 {
        diag_loading * mean_diag
    } else {
        diag_loading
    };
    covariance_with_loading(r, noise_variance + relative)
}

fn hermitize(m: &mut DMatrix<Complex64>) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)].im = 0.0;
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

fn check_finite(x: &DVector<Complex64>, size: usize, what: &'static str) -> Result<()> {
    match x.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
        Some(i) => {
            let (g, q) = cell_coords(i, size);
            Err(Error::NonFinite { what, g, q })
        }
        None => Ok(()),
    }
}

/// Weighted statistics of one cell under its leave-one-out covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellStatistics {
    /// `a_i^H Q_i^{-1} y`
    pub beta: Complex64,
    /// `a_i^H Q_i^{-1} a_i`
    pub gamma: f64,
    /// `y^H Q_i^{-1} y`
    pub y_weight: f64,
    /// Whether `Q_i` had to be inverted directly.
    pub fallback: bool,
}

/// Evaluates `beta_i`, `gamma_i` from `R^{-1}` via the rank-one downdate
///
/// `Q_i^{-1} = R^{-1} + c R^{-1} a a^H R^{-1} / (1 - c a^H R^{-1} a)`, `c = |x_i|^2`.
pub fn per_cell_statistics(
    cov: &CovarianceState,
    x_i: Complex64,
    a_i: &DVector<Complex64>,
    y: &DVector<Complex64>,
) -> Result<CellStatistics> {
    if a_i.len() != cov.r_inv.nrows() || y.len() != cov.r_inv.nrows() {
        return Err(Error::DimensionMismatch {
            expected: cov.r_inv.nrows(),
            actual: a_i.len().min(y.len()),
        });
    }
    let w = &cov.r_inv * a_i;
    let u = w.dotc(y);
    let v = w.dotc(a_i).re;
    let ry = &cov.r_inv * y;
    let s = y.dotc(&ry).re;
    downdated(cov, x_i.norm_sqr(), u, v, s, || Ok(a_i.clone()), y)
}

/// Turns the `R^{-1}` forms `u = a^H R^{-1} y`, `v = a^H R^{-1} a`,
/// `s = y^H R^{-1} y` into their `Q_i^{-1}` counterparts.
fn downdated(
    cov: &CovarianceState,
    power: f64,
    u: Complex64,
    v: f64,
    s: f64,
    a_i: impl FnOnce() -> Result<DVector<Complex64>>,
    y: &DVector<Complex64>,
) -> Result<CellStatistics> {
    let denom = 1.0 - power * v;
    if denom > DOWNDATE_TOL {
        Ok(CellStatistics {
            beta: u / denom,
            gamma: v / denom,
            y_weight: s + power * u.norm_sqr() / denom,
            fallback: false,
        })
    } else {
        direct_statistics(cov, power, &a_i()?, y)
    }
}

fn direct_statistics(
    cov: &CovarianceState,
    power: f64,
    a_i: &DVector<Complex64>,
    y: &DVector<Complex64>,
) -> Result<CellStatistics> {
    let q = &cov.r - a_i * a_i.adjoint() * Complex64::new(power, 0.0);
    let lu = q.lu();
    let qa = lu
        .solve(a_i)
        .ok_or_else(|| Error::Singular("leave-one-out covariance".into()))?;
    let qy = lu
        .solve(y)
        .ok_or_else(|| Error::Singular("leave-one-out covariance".into()))?;
    Ok(CellStatistics {
        beta: a_i.dotc(&qy),
        gamma: a_i.dotc(&qa).re,
        y_weight: y.dotc(&qy).re,
        fallback: true,
    })
}

/// Statistics for every cell of the grid under one covariance.
#[derive(Debug, Clone)]
pub struct CellTable {
    size: usize,
    cells: Vec<CellStatistics>,
}

impl CellTable {
    pub fn compute(
        cov: &CovarianceState,
        x: &AngleSpectrum,
        y: &DVector<Complex64>,
        model: &ArrayModel,
    ) -> Result<Self> {
        let size = model.size();
        if x.size() != size {
            return Err(Error::DimensionMismatch {
                expected: size,
                actual: x.size(),
            });
        }
        if y.len() != model.n_channels() {
            return Err(Error::DimensionMismatch {
                expected: model.n_channels(),
                actual: y.len(),
            });
        }
        let ry = &cov.r_inv * y;
        let s = y.dotc(&ry).re;
        let u = model.adjoint_apply(&ry);
        let v = model.quadratic_forms(&cov.r_inv);
        let mut cells = Vec::with_capacity(size * size);
        for q in 0..size {
            for g in 0..size {
                let stats = downdated(
                    cov,
                    x.get(g, q).norm_sqr(),
                    u[(g, q)],
                    v[(g, q)],
                    s,
                    || model.dictionary_column(g, q),
                    y,
                )?;
                if !(stats.beta.re.is_finite() && stats.beta.im.is_finite() && stats.gamma.is_finite()) {
                    return Err(Error::NonFinite {
                        what: "cell statistics",
                        g,
                        q,
                    });
                }
                cells.push(stats);
            }
        }
        Ok(Self { size, cells })
    }

    pub fn get(&self, g: usize, q: usize) -> &CellStatistics {
        &self.cells[g + q * self.size]
    }

    pub fn fallbacks(&self) -> usize {
        self.cells.iter().filter(|c| c.fallback).count()
    }
}

/// `|X_gg|^2 + |X_qq|^2 + eps0`.
fn support(x_n: &AngleSpectrum, g: usize, q: usize, eps0: f64) -> f64 {
    x_n.get(g, g).norm_sqr() + x_n.get(q, q).norm_sqr() + eps0
}

/// Minimizer of `f(X) + lambda |X|^2 / D` given the cell statistics.
pub fn regularized_update(beta: Complex64, gamma: f64, support: f64, lambda: f64) -> Complex64 {
    beta * support / (support * gamma + lambda)
}

fn update_cells(
    x_n: &AngleSpectrum,
    table: &CellTable,
    params: &SolverParams,
    order: impl Iterator<Item = usize>,
) -> Result<AngleSpectrum> {
    let size = x_n.size();
    let mut next = AngleSpectrum::zeros(size);
    for i in order {
        let (g, q) = cell_coords(i, size);
        let stats = table.get(g, q);
        let value = match params.method {
            Method::MpIaa => stats.beta / stats.gamma,
            Method::Tigre => regularized_update(
                stats.beta,
                stats.gamma,
                support(x_n, g, q, params.eps0),
                params.lambda(g, q),
            ),
        };
        if !(value.re.is_finite() && value.im.is_finite()) {
            return Err(Error::NonFinite {
                what: "update",
                g,
                q,
            });
        }
        next.set(g, q, value);
    }
    Ok(next)
}

fn step_with_table(x_n: &AngleSpectrum, table: &CellTable, params: &SolverParams) -> Result<AngleSpectrum> {
    update_cells(x_n, table, params, 0..x_n.size() * x_n.size())
}

/// One regularized Jacobi sweep over all cells.
pub fn tigre_step(
    x_n: &AngleSpectrum,
    y: &DVector<Complex64>,
    cov: &CovarianceState,
    model: &ArrayModel,
    params: &SolverParams,
) -> Result<AngleSpectrum> {
    let table = CellTable::compute(cov, x_n, y, model)?;
    let params = SolverParams {
        method: Method::Tigre,
        ..*params
    };
    step_with_table(x_n, &table, &params)
}

/// One unregularized sweep: `X_gq <- beta / gamma`.
pub fn mpiaa_step(
    x_n: &AngleSpectrum,
    y: &DVector<Complex64>,
    cov: &CovarianceState,
    model: &ArrayModel,
) -> Result<AngleSpectrum> {
    let table = CellTable::compute(cov, x_n, y, model)?;
    let params = SolverParams {
        method: Method::MpIaa,
        ..SolverParams::default()
    };
    step_with_table(x_n, &table, &params)
}

fn loss_with_table(x: &AngleSpectrum, x_n: &AngleSpectrum, table: &CellTable, params: &SolverParams) -> f64 {
    let size = x.size();
    let mut total = 0.0;
    for q in 0..size {
        for g in 0..size {
            let stats = table.get(g, q);
            let v = x.get(g, q);
            let fit = stats.y_weight - 2.0 * (v.conj() * stats.beta).re + v.norm_sqr() * stats.gamma;
            let reg = params.lambda(g, q) * v.norm_sqr() / support(x_n, g, q, params.eps0);
            total += fit + reg;
        }
    }
    total
}

/// Sum over cells of the weighted residual plus the support-scaled ridge,
/// with weights and supports frozen at `x_n`.
pub fn loss_value(
    x: &AngleSpectrum,
    x_n: &AngleSpectrum,
    y: &DVector<Complex64>,
    cov: &CovarianceState,
    model: &ArrayModel,
    params: &SolverParams,
) -> Result<f64> {
    if x.size() != x_n.size() {
        return Err(Error::DimensionMismatch {
            expected: x_n.size(),
            actual: x.size(),
        });
    }
    let table = CellTable::compute(cov, x_n, y, model)?;
    Ok(loss_with_table(x, x_n, &table, params))
}

/// `sum_g |z_next_g|^2 / (2 |z_n_g|^2 + eps0)`: about half the number of
/// nonzero entries once the diagonal has settled.
pub fn diag_regularizer_value(
    z_next: &DVector<Complex64>,
    z_n: &DVector<Complex64>,
    eps0: f64,
) -> Result<f64> {
    if z_next.len() != z_n.len() {
        return Err(Error::DimensionMismatch {
            expected: z_n.len(),
            actual: z_next.len(),
        });
    }
    Ok(z_next
        .iter()
        .zip(z_n.iter())
        .map(|(a, b)| a.norm_sqr() / (2.0 * b.norm_sqr() + eps0))
        .sum())
}

/// Best diagonal-only grid: least-squares fit of `y` by the DOA = DOD
/// columns. Rank-deficient designs get the minimum-norm solution.
pub fn init_diagonal(y: &Measurement, model: &ArrayModel) -> Result<AngleSpectrum> {
    let size = model.size();
    if y.y.len() != model.n_channels() {
        return Err(Error::DimensionMismatch {
            expected: model.n_channels(),
            actual: y.y.len(),
        });
    }
    let mut c = DMatrix::zeros(model.n_channels(), size);
    for g in 0..size {
        c.set_column(g, &model.dictionary_column(g, g)?);
    }
    let z = diagonal_least_squares(&c, &y.y)?;
    let mut x = AngleSpectrum::zeros(size);
    for g in 0..size {
        x.set(g, g, z[g]);
    }
    Ok(x)
}

fn diagonal_least_squares(c: &DMatrix<Complex64>, y: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    let svd = c.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    let condition = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
    let full_rank = c.ncols() <= c.nrows() && s_min > s_max * 1e-8;
    let z = if full_rank {
        // Normal equations (C^H C) z = C^H y.
        let gram = c.ad_mul(c);
        let rhs = c.ad_mul(y);
        Cholesky::new(gram).map(|chol| chol.solve(&rhs))
    } else {
        None
    };
    let z = match z {
        Some(z) => z,
        None => svd
            .solve(y, PINV_RCOND * s_max)
            .map_err(|e| Error::Singular(format!("{e}; condition estimate {condition:e}")))?,
    };
    if z.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::Singular(format!(
            "diagonal initializer; condition estimate {condition:e}"
        )));
    }
    Ok(z)
}

/// Per-cell matched filter `a_i^H y / a_i^H a_i`.
pub fn init_matched_filter(y: &Measurement, model: &ArrayModel) -> Result<AngleSpectrum> {
    if y.y.len() != model.n_channels() {
        return Err(Error::DimensionMismatch {
            expected: model.n_channels(),
            actual: y.y.len(),
        });
    }
    let n = model.n_channels() as f64;
    let x = model.adjoint_apply(&y.y).map(|v| v / n);
    AngleSpectrum::from_matrix(x)
}

/// I.i.d. unit-variance circular complex Gaussian entries.
pub fn init_random<R: Rng + ?Sized>(model: &ArrayModel, rng: &mut R) -> AngleSpectrum {
    let size = model.size();
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let m = DMatrix::from_fn(size, size, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * scale, im * scale)
    });
    AngleSpectrum::from_matrix(m).expect("square by construction")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub change_norm: f64,
    pub loss: f64,
    pub diag_reg_value: f64,
    /// Cells whose downdate fell back to a direct solve.
    pub fallbacks: usize,
}

#[derive(Debug, Clone)]
pub struct SolverReport {
    pub spectrum: AngleSpectrum,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<IterationRecord>,
    pub wall_time_seconds: f64,
}

/// Runs the configured estimator to convergence or `max_iters`. `rng` is
/// only drawn from by the random initializer.
pub fn run<R: Rng + ?Sized>(
    y: &Measurement,
    model: &ArrayModel,
    params: &SolverParams,
    rng: &mut R,
) -> Result<SolverReport> {
    params.validate()?;
    let start = Instant::now();
    let mut x = match params.init {
        Init::DiagonalLs => init_diagonal(y, model)?,
        Init::MatchedFilter => init_matched_filter(y, model)?,
        Init::Random => init_random(model, rng),
    };
    let mut trace = Vec::new();
    let mut converged = false;
    let omega = Complex64::new(params.relaxation, 0.0);
    for _ in 0..params.max_iters {
        let xv = x.to_vec();
        let cov = covariance_for_iterate(&xv, model, params.diag_loading, y.noise_sigma.powi(2))?;
        let table = CellTable::compute(&cov, &x, &y.y, model)?;
        let update = step_with_table(&x, &table, params)?;
        let next = if params.relaxation == 1.0 {
            update
        } else {
            AngleSpectrum::from_matrix(x.matrix() + (update.matrix() - x.matrix()) * omega)?
        };
        let change_norm = (next.to_vec() - xv).norm();
        trace.push(IterationRecord {
            change_norm,
            loss: loss_with_table(&next, &x, &table, params),
            diag_reg_value: diag_regularizer_value(&next.diagonal(), &x.diagonal(), params.eps0)?,
            fallbacks: table.fallbacks(),
        });
        x = next;
        if change_norm < params.eps_x {
            converged = true;
            break;
        }
    }
    Ok(SolverReport {
        spectrum: x,
        iterations: trace.len(),
        converged,
        trace,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    })
}
