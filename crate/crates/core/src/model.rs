//! Signal model for a co-located MIMO radar observing a DOA/DOD angle grid.
//!
//! The received vector is `y = vec(A_r X A_t^T) + e` with column-stacking
//! `vec`. Every dictionary column is built so that `A vec(X)` reproduces the
//! same vector, which puts transmit before receive in the Kronecker product:
//! `a_i = a_t(theta_q) (x) a_r(theta_g)` for cell index `i = g + q * G`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Complex64;

/// Tolerance in degrees when matching an emitter angle to a grid point.
pub const GRID_MATCH_TOL_DEG: f64 = 1e-9;

/// Uniform linear transmit and receive arrays. Spacings are in wavelengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub tx_spacing: f64,
    pub rx_spacing: f64,
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self {
            n_tx: 8,
            n_rx: 8,
            tx_spacing: 0.5,
            rx_spacing: 0.5,
        }
    }
}

impl RadarConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_tx == 0 || self.n_rx == 0 {
            return Err(Error::InvalidConfig(format!(
                "element counts must be positive (n_tx = {}, n_rx = {})",
                self.n_tx, self.n_rx
            )));
        }
        for (name, s) in [("tx_spacing", self.tx_spacing), ("rx_spacing", self.rx_spacing)] {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {s}")));
            }
        }
        Ok(())
    }

    /// Length of the measurement vector, `N_t * N_r`.
    pub fn n_channels(&self) -> usize {
        self.n_tx * self.n_rx
    }
}

/// Shared DOA/DOD angle axis in degrees. DOA and DOD use the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleGrid {
    angles_deg: Vec<f64>,
}

impl AngleGrid {
    pub fn new(angles_deg: Vec<f64>) -> Result<Self> {
        if angles_deg.is_empty() {
            return Err(Error::InvalidGrid("grid is empty".into()));
        }
        for &a in &angles_deg {
            if !(-90.0..=90.0).contains(&a) {
                return Err(Error::InvalidGrid(format!("angle {a} outside [-90, 90]")));
            }
        }
        if angles_deg.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("angles must be strictly increasing".into()));
        }
        Ok(Self { angles_deg })
    }

    /// `min, min + step, ...` up to and including `max` (within 1e-9 of a step).
    pub fn uniform(min_deg: f64, max_deg: f64, step_deg: f64) -> Result<Self> {
        if !(step_deg.is_finite() && step_deg > 0.0) {
            return Err(Error::InvalidGrid(format!("step must be positive, got {step_deg}")));
        }
        if !(min_deg.is_finite() && max_deg.is_finite()) || max_deg < min_deg {
            return Err(Error::InvalidGrid(format!("bad range [{min_deg}, {max_deg}]")));
        }
        let count = ((max_deg - min_deg) / step_deg + 1e-9).floor() as usize + 1;
        // Multiply rather than accumulate so each point is a single rounding away.
        let angles = (0..count)
            .map(|k| min_deg + k as f64 * step_deg)
            .map(|a| if a.abs() < 1e-12 { 0.0 } else { a })
            .collect();
        Self::new(angles)
    }

    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    pub fn len(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles_deg.is_empty()
    }

    pub fn index_of(&self, angle_deg: f64) -> Option<usize> {
        self.angles_deg
            .iter()
            .position(|&a| (a - angle_deg).abs() <= GRID_MATCH_TOL_DEG)
    }
}

impl Default for AngleGrid {
    /// 37 points from -90 to 90 degrees in 5 degree steps.
    fn default() -> Self {
        Self::uniform(-90.0, 90.0, 5.0).expect("default grid is valid")
    }
}

/// Maps a (DOA row, DOD column) cell to its position in `vec(X)`.
pub fn cell_index(g: usize, q: usize, size: usize) -> usize {
    g + q * size
}

/// Inverse of [`cell_index`].
pub fn cell_coords(i: usize, size: usize) -> (usize, usize) {
    (i % size, i / size)
}

/// The complex angle grid `X`: rows index DOA, columns index DOD.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleSpectrum {
    entries: DMatrix<Complex64>,
}

impl AngleSpectrum {
    pub fn zeros(size: usize) -> Self {
        Self {
            entries: DMatrix::zeros(size, size),
        }
    }

    pub fn from_matrix(entries: DMatrix<Complex64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                actual: entries.ncols(),
            });
        }
        Ok(Self { entries })
    }

    /// Rebuilds `X` from its column-stacked vectorization.
    pub fn from_vec(size: usize, x: &DVector<Complex64>) -> Result<Self> {
        if x.len() != size * size {
            return Err(Error::DimensionMismatch {
                expected: size * size,
                actual: x.len(),
            });
        }
        Ok(Self {
            entries: DMatrix::from_column_slice(size, size, x.as_slice()),
        })
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.entries
    }

    pub fn get(&self, g: usize, q: usize) -> Complex64 {
        self.entries[(g, q)]
    }

    pub fn set(&mut self, g: usize, q: usize, value: Complex64) {
        self.entries[(g, q)] = value;
    }

    /// Column-stacked vectorization `[X_11, X_21, ..., X_G1, X_12, ...]`.
    pub fn to_vec(&self) -> DVector<Complex64> {
        // nalgebra storage is column-major, which is exactly the stacking order.
        DVector::from_column_slice(self.entries.as_slice())
    }

    /// The DOA = DOD entries `z_g = X_gg`.
    pub fn diagonal(&self) -> DVector<Complex64> {
        self.entries.diagonal()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Actual,
    Ghost,
}

impl TargetKind {
    pub fn classify(doa: usize, dod: usize) -> Self {
        if doa == dod {
            TargetKind::Actual
        } else {
            TargetKind::Ghost
        }
    }
}

/// A point scatterer on the grid. Actual targets have equal DOA and DOD;
/// anything else is a multipath ghost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Emitter {
    pub magnitude: f64,
    #[serde(default)]
    pub phase_deg: f64,
    pub doa_deg: f64,
    pub dod_deg: f64,
}

impl Emitter {
    pub fn new(magnitude: f64, doa_deg: f64, dod_deg: f64) -> Self {
        Self {
            magnitude,
            phase_deg: 0.0,
            doa_deg,
            dod_deg,
        }
    }

    pub fn amplitude(&self) -> Complex64 {
        Complex64::from_polar(self.magnitude, self.phase_deg.to_radians())
    }

    pub fn kind(&self) -> TargetKind {
        if self.doa_deg == self.dod_deg {
            TargetKind::Actual
        } else {
            TargetKind::Ghost
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scene {
    pub emitters: Vec<Emitter>,
}

impl Scene {
    pub fn new(emitters: Vec<Emitter>) -> Self {
        Self { emitters }
    }

    /// Grid cells `(g, q)` of each emitter, or the first emitter that misses the grid.
    pub fn cells(&self, grid: &AngleGrid) -> Result<Vec<(usize, usize)>> {
        self.emitters
            .iter()
            .enumerate()
            .map(|(index, e)| match (grid.index_of(e.doa_deg), grid.index_of(e.dod_deg)) {
                (Some(g), Some(q)) => Ok((g, q)),
                _ => Err(Error::OffGridEmitter {
                    index,
                    doa_deg: e.doa_deg,
                    dod_deg: e.dod_deg,
                }),
            })
            .collect()
    }
}

/// A received snapshot together with the noise level it was generated with.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub y: DVector<Complex64>,
    pub noise_sigma: f64,
    pub snr_db: f64,
}

impl Measurement {
    pub fn noiseless(y: DVector<Complex64>) -> Self {
        Self {
            y,
            noise_sigma: 0.0,
            snr_db: f64::INFINITY,
        }
    }
}

/// `[1, e^{j 2 pi d sin(theta)}, ..., e^{j 2 pi d (n-1) sin(theta)}]`.
pub fn steering_vector(theta_deg: f64, n: usize, spacing_wl: f64) -> Result<DVector<Complex64>> {
    if !(-90.0..=90.0).contains(&theta_deg) {
        return Err(Error::AngleOutOfRange(theta_deg));
    }
    let phase_step = 2.0 * PI * spacing_wl * theta_deg.to_radians().sin();
    Ok(DVector::from_fn(n, |k, _| {
        Complex64::from_polar(1.0, phase_step * k as f64)
    }))
}

/// Stacks [`steering_vector`] for every grid angle as columns.
pub fn steering_matrix(grid: &AngleGrid, n: usize, spacing_wl: f64) -> Result<DMatrix<Complex64>> {
    let mut m = DMatrix::zeros(n, grid.len());
    for (g, &theta) in grid.angles_deg().iter().enumerate() {
        m.set_column(g, &steering_vector(theta, n, spacing_wl)?);
    }
    Ok(m)
}

/// Radar geometry plus angle grid, with the steering matrices and the full
/// `N_t N_r x G^2` dictionary precomputed.
#[derive(Debug, Clone)]
pub struct ArrayModel {
    radar: RadarConfig,
    grid: AngleGrid,
    tx_steering: DMatrix<Complex64>,
    rx_steering: DMatrix<Complex64>,
    dictionary: DMatrix<Complex64>,
    // Phase of each grid angle at every element lag -(n-1)..=(n-1).
    tx_lags: DMatrix<Complex64>,
    rx_lags: DMatrix<Complex64>,
}

impl ArrayModel {
    pub fn new(radar: RadarConfig, grid: AngleGrid) -> Result<Self> {
        radar.validate()?;
        let tx_steering = steering_matrix(&grid, radar.n_tx, radar.tx_spacing)?;
        let rx_steering = steering_matrix(&grid, radar.n_rx, radar.rx_spacing)?;
        let size = grid.len();
        let mut dictionary = DMatrix::zeros(radar.n_channels(), size * size);
        for q in 0..size {
            for g in 0..size {
                let col = kron(&tx_steering.column(q).into(), &rx_steering.column(g).into());
                dictionary.set_column(cell_index(g, q, size), &col);
            }
        }
        let tx_lags = lag_phases(&grid, radar.n_tx, radar.tx_spacing);
        let rx_lags = lag_phases(&grid, radar.n_rx, radar.rx_spacing);
        Ok(Self {
            radar,
            grid,
            tx_steering,
            rx_steering,
            dictionary,
            tx_lags,
            rx_lags,
        })
    }

    pub fn radar(&self) -> &RadarConfig {
        &self.radar
    }

    pub fn grid(&self) -> &AngleGrid {
        &self.grid
    }

    /// Grid size `G` (= `Q`).
    pub fn size(&self) -> usize {
        self.grid.len()
    }

    pub fn n_cells(&self) -> usize {
        self.size() * self.size()
    }

    pub fn n_channels(&self) -> usize {
        self.radar.n_channels()
    }

    pub fn tx_steering(&self) -> &DMatrix<Complex64> {
        &self.tx_steering
    }

    pub fn rx_steering(&self) -> &DMatrix<Complex64> {
        &self.rx_steering
    }

    pub fn dictionary(&self) -> &DMatrix<Complex64> {
        &self.dictionary
    }

    /// Dictionary column for DOA index `g` and DOD index `q` (both zero-based).
    pub fn dictionary_column(&self, g: usize, q: usize) -> Result<DVector<Complex64>> {
        let size = self.size();
        if g >= size || q >= size {
            return Err(Error::CellOutOfRange { g, q, size });
        }
        Ok(self.dictionary.column(cell_index(g, q, size)).into_owned())
    }

    /// Places each emitter's amplitude at its (DOA, DOD) cell; coincident
    /// emitters add.
    pub fn spectrum_from_scene(&self, scene: &Scene) -> Result<AngleSpectrum> {
        let mut x = AngleSpectrum::zeros(self.size());
        for ((g, q), e) in scene.cells(&self.grid)?.into_iter().zip(&scene.emitters) {
            let v = x.get(g, q) + e.amplitude();
            x.set(g, q, v);
        }
        Ok(x)
    }

    /// Noise-free response `vec(A_r X A_t^T)`.
    pub fn forward(&self, x: &AngleSpectrum) -> Result<DVector<Complex64>> {
        if x.size() != self.size() {
            return Err(Error::DimensionMismatch {
                expected: self.size(),
                actual: x.size(),
            });
        }
        let prod = &self.rx_steering * x.matrix() * self.tx_steering.transpose();
        Ok(DVector::from_column_slice(prod.as_slice()))
    }
}

impl ArrayModel {
    /// `A diag(p) A^H` for a `G x G` grid of powers.
    ///
    /// Both arrays are uniform, so the result only depends on the element
    /// lags `(r - r', k - k')` and is assembled from a
    /// `(2 N_r - 1) x (2 N_t - 1)` lag table instead of the full dictionary.
    pub fn signal_covariance(&self, powers: &DMatrix<f64>) -> DMatrix<Complex64> {
        let (n_tx, n_rx) = (self.radar.n_tx, self.radar.n_rx);
        let p = powers.map(|v| Complex64::new(v, 0.0));
        let lags = &self.rx_lags * p * self.tx_lags.transpose();
        let n = self.n_channels();
        DMatrix::from_fn(n, n, |m, m2| {
            let (r, k) = (m % n_rx, m / n_rx);
            let (r2, k2) = (m2 % n_rx, m2 / n_rx);
            lags[(r + n_rx - 1 - r2, k + n_tx - 1 - k2)]
        })
    }

    /// `A^H z` arranged as a `G x G` grid (entry `(g, q)` is `a_i^H z`).
    pub fn adjoint_apply(&self, z: &DVector<Complex64>) -> DMatrix<Complex64> {
        let zm = DMatrix::from_column_slice(self.radar.n_rx, self.radar.n_tx, z.as_slice());
        self.rx_steering.adjoint() * zm * self.tx_steering.map(|v| v.conj())
    }

    /// Real parts of `a_i^H M a_i` for every cell, as a `G x G` grid.
    pub fn quadratic_forms(&self, m: &DMatrix<Complex64>) -> DMatrix<f64> {
        let (n_tx, n_rx) = (self.radar.n_tx, self.radar.n_rx);
        let mut lag_sums = DMatrix::<Complex64>::zeros(2 * n_rx - 1, 2 * n_tx - 1);
        for m2 in 0..m.ncols() {
            let (r2, k2) = (m2 % n_rx, m2 / n_rx);
            for m1 in 0..m.nrows() {
                let (r, k) = (m1 % n_rx, m1 / n_rx);
                lag_sums[(r + n_rx - 1 - r2, k + n_tx - 1 - k2)] += m[(m1, m2)];
            }
        }
        (self.rx_lags.adjoint() * lag_sums * self.tx_lags.map(|v| v.conj())).map(|v| v.re)
    }
}

fn lag_phases(grid: &AngleGrid, n: usize, spacing_wl: f64) -> DMatrix<Complex64> {
    DMatrix::from_fn(2 * n - 1, grid.len(), |row, g| {
        let lag = row as f64 - (n as f64 - 1.0);
        let phase = 2.0 * PI * spacing_wl * grid.angles_deg()[g].to_radians().sin();
        Complex64::from_polar(1.0, phase * lag)
    })
}

/// Kronecker product of two column vectors, `u (x) v`.
pub(crate) fn kron(u: &DVector<Complex64>, v: &DVector<Complex64>) -> DVector<Complex64> {
    let n = v.len();
    DVector::from_fn(u.len() * n, |k, _| u[k / n] * v[k % n])
}

/// Adds circularly-symmetric complex Gaussian noise at the requested
/// per-channel SNR. An infinite SNR returns the clean signal unchanged.
pub fn add_noise<R: Rng + ?Sized>(
    y_clean: &DVector<Complex64>,
    snr_db: f64,
    rng: &mut R,
) -> Result<Measurement> {
    if snr_db == f64::INFINITY {
        return Ok(Measurement::noiseless(y_clean.clone()));
    }
    if snr_db.is_nan() {
        return Err(Error::InvalidParams("SNR is NaN".into()));
    }
    let power = y_clean.norm_squared();
    if power == 0.0 {
        return Err(Error::ZeroSignal);
    }
    let variance = power / (y_clean.len() as f64 * 10f64.powf(snr_db / 10.0));
    let sigma = variance.sqrt();
    let scale = (variance / 2.0).sqrt();
    let y = y_clean.map(|v| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        v + Complex64::new(re * scale, im * scale)
    });
    Ok(Measurement {
        y,
        noise_sigma: sigma,
        snr_db,
    })
}
