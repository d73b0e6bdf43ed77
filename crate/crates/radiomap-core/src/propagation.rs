//! Deterministic ground-truth signal-strength simulator.
//!
//! The received power at an outdoor cell decomposes into free-space path
//! loss, knife-edge diffraction loss over the building map (a Deygout-style
//! sum of the three strongest edges), spatially correlated log-normal
//! shadowing with exponentially decaying correlation, and optional i.i.d.
//! fading. Everything is a pure function of the inputs and a seed.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{outdoor_mask, Grid, HeightMap, Point3, SignalField, ABSENT};
use crate::seeds::derive_seed;

/// Propagation constant used throughout the free-space formula.
pub const SPEED_OF_LIGHT: f64 = 2.998e8;

/// Distances below this are clamped before the free-space formula.
pub const MIN_DISTANCE_M: f64 = 1.0;

/// Upper bound on the summed knife-edge loss.
pub const KNIFE_LOSS_CAP_DB: f64 = 60.0;

/// Grids up to this many cells use an exact dense factorization of the
/// shadowing covariance; larger grids switch to the spectral sampler.
pub const EXACT_SHADOWING_CELL_LIMIT: usize = 4096;

/// Channel and noise parameters for the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationParams {
    pub freq_hz: f64,
    pub tx_power_dbm: f64,
    pub h_uav: f64,
    pub shadow_sigma_db: f64,
    pub shadow_decorr_m: f64,
    pub fading_sigma_db: f64,
    pub seed: u64,
}

impl Default for PropagationParams {
    fn default() -> Self {
        Self {
            freq_hz: 8.0e8,
            tx_power_dbm: 20.0,
            h_uav: 60.0,
            shadow_sigma_db: 6.0,
            shadow_decorr_m: 50.0,
            fading_sigma_db: 0.0,
            seed: 0,
        }
    }
}

impl PropagationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.freq_hz > 0.0) {
            return Err(Error::InvalidParameter("frequency must be positive".into()));
        }
        if self.shadow_sigma_db < 0.0 || self.fading_sigma_db < 0.0 {
            return Err(Error::InvalidParameter("noise sigmas must be >= 0".into()));
        }
        if !(self.shadow_decorr_m > 0.0) {
            return Err(Error::InvalidParameter("decorrelation distance must be positive".into()));
        }
        if !(self.h_uav > 0.0) {
            return Err(Error::InvalidParameter("flight altitude must be positive".into()));
        }
        Ok(())
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.freq_hz
    }
}

/// Free-space path loss in dB at the given distance and frequency. The
/// distance is clamped at [`MIN_DISTANCE_M`] to avoid the singularity at 0.
pub fn fspl_db(dist_m: f64, freq_hz: f64) -> f64 {
    let d = dist_m.max(MIN_DISTANCE_M);
    20.0 * d.log10() + 20.0 * freq_hz.log10() + 20.0 * (4.0 * std::f64::consts::PI / SPEED_OF_LIGHT).log10()
}

/// Single knife-edge diffraction loss for Fresnel parameter `nu`;
/// zero at and below the clearance threshold nu = -0.78.
pub fn knife_loss_for_nu(nu: f64) -> f64 {
    if nu <= -0.78 {
        return 0.0;
    }
    let t = nu - 0.1;
    (6.9 + 20.0 * ((t * t + 1.0).sqrt() + t).log10()).max(0.0)
}

/// Strongest obstruction along the straight segment from `a` to `b`:
/// Fresnel parameter, fractional position, and the obstacle top.
fn max_obstruction(a: &Point3, b: &Point3, heights: &HeightMap, lambda: f64) -> Option<(f64, Point3)> {
    let grid = heights.grid();
    let d = grid.spacing_m();
    let n = grid.cells_per_side() as isize;
    let total = a.horizontal_distance(b);
    let step_target = d / 2.0;
    if total <= step_target {
        return None;
    }
    // Equal subdivision keeps the sample set symmetric under endpoint
    // exchange, which keeps the loss reciprocal.
    let num = (total / step_target).ceil() as usize;
    let step = total / num as f64;
    let mut best: Option<(f64, Point3)> = None;
    for k in 1..num {
        let s = k as f64 * step;
        let t = s / total;
        let x = a.x + (b.x - a.x) * t;
        let y = a.y + (b.y - a.y) * t;
        let r = (x / d).round() as isize;
        let c = (y / d).round() as isize;
        if r < 0 || r >= n || c < 0 || c >= n {
            continue;
        }
        let height = heights.get(r as usize, c as usize);
        if height <= 0.0 {
            continue;
        }
        let line_h = a.h + (b.h - a.h) * t;
        let h_obs = height - line_h;
        let d1 = s;
        let d2 = total - s;
        let nu = h_obs * (2.0 * (d1 + d2) / (lambda * d1 * d2)).sqrt();
        if best.as_ref().map_or(true, |(bn, _)| nu > *bn) {
            best = Some((nu, Point3::new(x, y, height)));
        }
    }
    best
}

/// Knife-edge diffraction loss along the straight path from `tx` to `rx`
/// over the building map. The main edge is the obstruction with maximal
/// Fresnel parameter; one secondary edge is evaluated on each sub-path
/// (Deygout construction limited to three edges), and the sum is capped.
pub fn knife_edge_loss_db(tx: &Point3, rx: &Point3, heights: &HeightMap, freq_hz: f64) -> f64 {
    let lambda = SPEED_OF_LIGHT / freq_hz;
    let Some((nu_main, edge)) = max_obstruction(tx, rx, heights, lambda) else {
        return 0.0;
    };
    let main_loss = knife_loss_for_nu(nu_main);
    if main_loss == 0.0 {
        return 0.0;
    }
    let mut total = main_loss;
    if let Some((nu, _)) = max_obstruction(tx, &edge, heights, lambda) {
        total += knife_loss_for_nu(nu);
    }
    if let Some((nu, _)) = max_obstruction(&edge, rx, heights, lambda) {
        total += knife_loss_for_nu(nu);
    }
    total.min(KNIFE_LOSS_CAP_DB)
}

enum ShadowingBackend {
    Zero,
    /// Exact factorization of the full-grid covariance.
    Cholesky { factor: DMatrix<f64> },
    /// Circulant-embedding spectral sampler on an enlarged torus; negative
    /// embedding eigenvalues are clamped to zero (the embedding is padded
    /// to at least twice the grid, so the clamped mass is negligible for
    /// decorrelation distances well below the domain size).
    Spectral { m: usize, scaled_sqrt_eig: Vec<f64> },
}

/// Seeded sampler for zero-mean Gaussian shadowing with covariance
/// `sigma^2 * exp(-dist / decorr)`. Construction factorizes the covariance
/// once; draws are cheap and deterministic per seed.
pub struct ShadowingSampler {
    grid: Grid,
    backend: ShadowingBackend,
}

impl ShadowingSampler {
    pub fn new(grid: Grid, sigma_db: f64, decorr_m: f64) -> Result<Self> {
        if sigma_db < 0.0 {
            return Err(Error::InvalidParameter("shadowing sigma must be >= 0".into()));
        }
        if !(decorr_m > 0.0) {
            return Err(Error::InvalidParameter("decorrelation distance must be positive".into()));
        }
        if sigma_db == 0.0 {
            return Ok(Self { grid, backend: ShadowingBackend::Zero });
        }
        let cells = grid.cell_count();
        if cells <= EXACT_SHADOWING_CELL_LIMIT {
            let factor = Self::cholesky_factor(&grid, sigma_db, decorr_m)?;
            Ok(Self { grid, backend: ShadowingBackend::Cholesky { factor } })
        } else {
            let (m, scaled_sqrt_eig) = Self::spectral_table(&grid, sigma_db, decorr_m);
            Ok(Self { grid, backend: ShadowingBackend::Spectral { m, scaled_sqrt_eig } })
        }
    }

    fn cholesky_factor(grid: &Grid, sigma_db: f64, decorr_m: f64) -> Result<DMatrix<f64>> {
        let n = grid.cells_per_side();
        let cells = n * n;
        let d = grid.spacing_m();
        let var = sigma_db * sigma_db;
        let mut cov = DMatrix::<f64>::zeros(cells, cells);
        for i in 0..cells {
            let (ri, ci) = ((i / n) as f64, (i % n) as f64);
            for j in i..cells {
                let (rj, cj) = ((j / n) as f64, (j % n) as f64);
                let dist = ((ri - rj).powi(2) + (ci - cj).powi(2)).sqrt() * d;
                let v = var * (-dist / decorr_m).exp();
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        match cov.clone().cholesky() {
            Some(ch) => Ok(ch.unpack()),
            None => {
                log::warn!(
                    "shadowing covariance not positive definite; retrying with 1e-8*sigma^2 jitter"
                );
                let jitter = 1e-8 * var;
                for i in 0..cells {
                    cov[(i, i)] += jitter;
                }
                cov.cholesky()
                    .map(|ch| ch.unpack())
                    .ok_or_else(|| Error::Numerical("shadowing covariance factorization failed even with jitter".into()))
            }
        }
    }

    fn spectral_table(grid: &Grid, sigma_db: f64, decorr_m: f64) -> (usize, Vec<f64>) {
        let n = grid.cells_per_side();
        let d = grid.spacing_m();
        let var = sigma_db * sigma_db;
        let m = (2 * n).next_power_of_two();
        let mut kernel: Vec<Complex<f64>> = Vec::with_capacity(m * m);
        for i in 0..m {
            let di = i.min(m - i) as f64 * d;
            for j in 0..m {
                let dj = j.min(m - j) as f64 * d;
                let dist = (di * di + dj * dj).sqrt();
                kernel.push(Complex::new(var * (-dist / decorr_m).exp(), 0.0));
            }
        }
        fft2_in_place(&mut kernel, m);
        let mut clipped = 0usize;
        let scaled_sqrt_eig: Vec<f64> = kernel
            .iter()
            .map(|e| {
                if e.re < 0.0 {
                    clipped += 1;
                    0.0
                } else {
                    e.re.sqrt() / m as f64
                }
            })
            .collect();
        if clipped > 0 {
            log::debug!("spectral shadowing clamped {clipped} negative embedding eigenvalues");
        }
        (m, scaled_sqrt_eig)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// One zero-mean correlated field, row-major over the grid.
    pub fn draw(&self, seed: u64) -> Vec<f64> {
        match &self.backend {
            ShadowingBackend::Zero => vec![0.0; self.grid.cell_count()],
            ShadowingBackend::Cholesky { factor } => {
                let cells = self.grid.cell_count();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let z = DVector::<f64>::from_fn(cells, |_, _| StandardNormal.sample(&mut rng));
                let field = factor * z;
                field.as_slice().to_vec()
            }
            ShadowingBackend::Spectral { m, scaled_sqrt_eig } => {
                let m = *m;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut buf: Vec<Complex<f64>> = scaled_sqrt_eig
                    .iter()
                    .map(|s| {
                        let a: f64 = StandardNormal.sample(&mut rng);
                        let b: f64 = StandardNormal.sample(&mut rng);
                        Complex::new(a * s, b * s)
                    })
                    .collect();
                fft2_in_place(&mut buf, m);
                let n = self.grid.cells_per_side();
                let mut out = Vec::with_capacity(n * n);
                for r in 0..n {
                    for c in 0..n {
                        out.push(buf[r * m + c].re);
                    }
                }
                out
            }
        }
    }
}

/// Unnormalized forward 2D FFT of a square buffer.
fn fft2_in_place(buf: &mut [Complex<f64>], m: usize) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(m);
    for row in buf.chunks_exact_mut(m) {
        fft.process(row);
    }
    // columns via transpose, row FFTs, transpose back
    transpose_square(buf, m);
    for row in buf.chunks_exact_mut(m) {
        fft.process(row);
    }
    transpose_square(buf, m);
}

fn transpose_square(buf: &mut [Complex<f64>], m: usize) {
    for i in 0..m {
        for j in i + 1..m {
            buf.swap(i * m + j, j * m + i);
        }
    }
}

/// Zero-mean correlated shadowing field for the grid; convenience wrapper
/// that builds a sampler and draws once with the params seed.
pub fn shadowing_field(grid: &Grid, params: &PropagationParams) -> Result<Vec<f64>> {
    params.validate()?;
    Ok(ShadowingSampler::new(*grid, params.shadow_sigma_db, params.shadow_decorr_m)?.draw(params.seed))
}

/// Ground-truth simulator with a cached shadowing factorization; reuse one
/// instance across all transmitters that share a grid and parameters.
pub struct Simulator {
    params: PropagationParams,
    sampler: ShadowingSampler,
}

impl Simulator {
    pub fn new(grid: Grid, params: PropagationParams) -> Result<Self> {
        params.validate()?;
        let sampler = ShadowingSampler::new(grid, params.shadow_sigma_db, params.shadow_decorr_m)?;
        Ok(Self { params, sampler })
    }

    pub fn params(&self) -> &PropagationParams {
        &self.params
    }

    /// Simulate the field for one transmitter; `seed` controls the shadowing
    /// and fading draws for this (environment, transmitter) pair.
    pub fn simulate(&self, heights: &HeightMap, tx: &Point3, seed: u64) -> Result<SignalField> {
        let grid = *heights.grid();
        if grid != *self.sampler.grid() {
            return Err(Error::ShapeMismatch("height map grid differs from simulator grid".into()));
        }
        if tx.x < 0.0 || tx.y < 0.0 || tx.x > grid.size_m() || tx.y > grid.size_m() {
            return Err(Error::Contract(format!("transmitter ({}, {}) outside the map", tx.x, tx.y)));
        }
        let (tr, tc) = grid.coords_to_cell(tx.x, tx.y);
        if heights.get(tr, tc) != 0.0 {
            return Err(Error::Contract(format!(
                "transmitter at cell ({tr}, {tc}) is not on open ground"
            )));
        }

        let p = &self.params;
        let mask = outdoor_mask(heights, p.h_uav)?;
        let shadow = self.sampler.draw(derive_seed(seed, "shadow", &[]));
        let fading: Option<Vec<f64>> = if p.fading_sigma_db > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "fading", &[]));
            Some(
                (0..grid.cell_count())
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z * p.fading_sigma_db
                    })
                    .collect(),
            )
        } else {
            None
        };

        let n = grid.cells_per_side();
        let d = grid.spacing_m();
        let mut values = vec![ABSENT; grid.cell_count()];
        for r in 0..n {
            for c in 0..n {
                let idx = grid.index(r, c);
                if !mask.is_outdoor(r, c) {
                    continue;
                }
                let rx = Point3::new(r as f64 * d, c as f64 * d, p.h_uav);
                let dist = tx.distance(&rx);
                let mut v = p.tx_power_dbm - fspl_db(dist, p.freq_hz)
                    - knife_edge_loss_db(tx, &rx, heights, p.freq_hz)
                    + shadow[idx];
                if let Some(f) = &fading {
                    v += f[idx];
                }
                values[idx] = v;
            }
        }
        SignalField::new(grid, values)
    }
}

/// Simulate the full field for one transmitter. Builds a fresh simulator;
/// prefer [`Simulator`] when sweeping many transmitters on one grid.
pub fn simulate_field(heights: &HeightMap, tx: &Point3, params: &PropagationParams) -> Result<SignalField> {
    let sim = Simulator::new(*heights.grid(), params.clone())?;
    sim.simulate(heights, tx, params.seed)
}
