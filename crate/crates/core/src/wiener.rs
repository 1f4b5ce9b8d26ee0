//! Scale functions, geometric multiresolution grids and seeded Wiener paths.
//!
//! A [`GeometricGrid`] covers `[0, c^N]` with a fixed number of cells per
//! window `[c^{i-1}, c^i]`, so the process rescaled to `[0, 1]` at any scale
//! `u = c^i` is resolved with the same relative step. Paths are generated
//! window by window from a single ChaCha stream: increasing `N` appends
//! windows and never changes the earlier ones.

use alloc::vec::Vec;
use core::f64::consts::E;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// `log log u`, defined for `u > e`.
pub fn loglog(u: f64) -> Result<f64> {
    if !(u > E) || !u.is_finite() {
        return Err(Error::ScaleOutOfDomain { u });
    }
    Ok(u.ln().ln())
}

/// `φ(u) = sqrt(u log log u)`, defined for `u > e`.
pub fn phi(u: f64) -> Result<f64> {
    Ok((u * loglog(u)?).sqrt())
}

/// Time grid on `[0, c^N]`: window 0 is `[0, 1]`, window `i ≥ 1` is `[c^{i-1}, c^i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricGrid {
    ratio: f64,
    windows: usize,
    resolution: f64,
    cells_first: usize,
    cells_per_window: usize,
    times: Vec<f64>,
}

impl GeometricGrid {
    pub fn new(ratio: f64, windows: usize, resolution: f64) -> Result<Self> {
        if !(ratio > 1.0) || !ratio.is_finite() {
            return Err(Error::invalid("c", "ratio must be a finite number > 1"));
        }
        if windows == 0 {
            return Err(Error::invalid("N", "window count must be at least 1"));
        }
        if !(resolution > 0.0 && resolution < 1.0) {
            return Err(Error::invalid("delta", "resolution must lie in (0, 1)"));
        }
        if !ratio.powi(windows as i32).is_finite() {
            return Err(Error::invalid("N", "horizon c^N overflows"));
        }
        let cells_first = (1.0 / resolution).ceil() as usize;
        let cells_per_window = ((ratio - 1.0) / resolution).ceil() as usize;

        let mut times = Vec::with_capacity(1 + cells_first + windows * cells_per_window);
        times.push(0.0);
        push_window(&mut times, 0.0, 1.0, cells_first);
        for i in 1..=windows {
            let a = ratio.powi(i as i32 - 1);
            let b = ratio.powi(i as i32);
            push_window(&mut times, a, b, cells_per_window);
        }
        Ok(Self {
            ratio,
            windows,
            resolution,
            cells_first,
            cells_per_window,
            times,
        })
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn windows(&self) -> usize {
        self.windows
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    /// Cells in window `i` (window 0 is `[0, 1]`).
    pub fn cells_in_window(&self, i: usize) -> usize {
        if i == 0 {
            self.cells_first
        } else {
            self.cells_per_window
        }
    }

    pub fn cell_count(&self) -> usize {
        self.times.len() - 1
    }

    /// All grid points, starting at 0 and ending at `c^N`.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("grid has at least one cell")
    }

    /// `[start, end]` of window `i`.
    pub fn window_bounds(&self, i: usize) -> (f64, f64) {
        if i == 0 {
            (0.0, 1.0)
        } else {
            (self.ratio.powi(i as i32 - 1), self.ratio.powi(i as i32))
        }
    }

    /// Index of the first grid point of window `i`.
    pub fn window_start_index(&self, i: usize) -> usize {
        if i == 0 {
            0
        } else {
            self.cells_first + (i - 1) * self.cells_per_window
        }
    }

    /// Window that contains grid cell `cell` (cell `n` spans `times[n]..times[n+1]`).
    pub fn window_of_cell(&self, cell: usize) -> usize {
        if cell < self.cells_first {
            0
        } else {
            1 + (cell - self.cells_first) / self.cells_per_window
        }
    }

    /// Index of the cell containing `t`, clamped to the grid.
    pub fn locate(&self, t: f64) -> usize {
        let n = self.times.partition_point(|&s| s <= t);
        n.saturating_sub(1).min(self.cell_count() - 1)
    }
}

fn push_window(times: &mut Vec<f64>, a: f64, b: f64, cells: usize) {
    for j in 1..cells {
        times.push(a + (b - a) * (j as f64) / (cells as f64));
    }
    times.push(b);
}

/// One seeded realization of a `k`-dimensional Wiener process on a [`GeometricGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    noise_dim: usize,
    seed: u64,
    grid: GeometricGrid,
    /// Per-cell increments, `cell * k + j`.
    increments: Vec<f64>,
    /// Prefix sums at grid points, `point * k + j`.
    values: Vec<f64>,
}

impl WienerPath {
    /// Samples i.i.d. `N(0, width)` increments cell by cell, coordinate by coordinate.
    pub fn sample(grid: &GeometricGrid, noise_dim: usize, seed: u64) -> Result<Self> {
        if noise_dim == 0 {
            return Err(Error::invalid("k", "noise dimension must be positive"));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let cells = grid.cell_count();
        let times = grid.times();
        let mut increments = Vec::with_capacity(cells * noise_dim);
        let mut values = Vec::with_capacity((cells + 1) * noise_dim);
        values.extend(core::iter::repeat_n(0.0, noise_dim));
        for n in 0..cells {
            let sd = (times[n + 1] - times[n]).sqrt();
            for j in 0..noise_dim {
                let z: f64 = StandardNormal.sample(&mut rng);
                let dw = sd * z;
                increments.push(dw);
                let prev = values[n * noise_dim + j];
                values.push(prev + dw);
            }
        }
        Ok(Self {
            noise_dim,
            seed,
            grid: grid.clone(),
            increments,
            values,
        })
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn grid(&self) -> &GeometricGrid {
        &self.grid
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Increment of cell `n`.
    pub fn increment(&self, n: usize) -> &[f64] {
        &self.increments[n * self.noise_dim..(n + 1) * self.noise_dim]
    }

    /// Path value at grid point `n`.
    pub fn value_at_point(&self, n: usize) -> &[f64] {
        &self.values[n * self.noise_dim..(n + 1) * self.noise_dim]
    }

    /// `W_t` by linear interpolation between grid points.
    pub fn value_at(&self, t: f64, out: &mut [f64]) -> Result<()> {
        if t < 0.0 || t > self.horizon() * (1.0 + 1e-12) {
            return Err(Error::ScaleExceedsHorizon {
                u: t,
                horizon: self.horizon(),
            });
        }
        let times = self.grid.times();
        let n = self.grid.locate(t);
        let (a, b) = (times[n], times[n + 1]);
        let w = ((t - a) / (b - a)).clamp(0.0, 1.0);
        let lo = self.value_at_point(n);
        let hi = self.value_at_point(n + 1);
        for j in 0..self.noise_dim {
            out[j] = lo[j] + w * (hi[j] - lo[j]);
        }
        Ok(())
    }

    /// The Brownian rescaling `s ↦ W_{us} / sqrt(u)` on `[0, 1]`, built from the
    /// grid points in `[0, u]` (plus an interpolated endpoint when `u` is not a grid point).
    pub fn rescaled(&self, u: f64) -> Result<RescaledWiener> {
        if !(u > 0.0) {
            return Err(Error::invalid("u", "rescaling factor must be positive"));
        }
        if u > self.horizon() * (1.0 + 1e-12) {
            return Err(Error::ScaleExceedsHorizon {
                u,
                horizon: self.horizon(),
            });
        }
        let k = self.noise_dim;
        let sqrt_u = u.sqrt();
        let times = self.grid.times();
        let last = times.partition_point(|&s| s <= u);
        let mut out_times = Vec::with_capacity(last + 1);
        let mut out_values = Vec::with_capacity((last + 1) * k);
        for n in 0..last {
            out_times.push(times[n] / u);
            out_values.extend(self.value_at_point(n).iter().map(|w| w / sqrt_u));
        }
        if times[last - 1] < u {
            let mut w = alloc::vec![0.0; k];
            self.value_at(u.min(self.horizon()), &mut w)?;
            out_times.push(1.0);
            out_values.extend(w.iter().map(|w| w / sqrt_u));
        }
        let end = out_times.len() - 1;
        out_times[end] = 1.0;
        Ok(RescaledWiener {
            noise_dim: k,
            times: out_times,
            values: out_values,
        })
    }
}

/// A Wiener path reindexed to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledWiener {
    noise_dim: usize,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl RescaledWiener {
    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn value_at_point(&self, n: usize) -> &[f64] {
        &self.values[n * self.noise_dim..(n + 1) * self.noise_dim]
    }

    /// Linear interpolation at `s ∈ [0, 1]`.
    pub fn value_at(&self, s: f64, out: &mut [f64]) {
        let cells = self.times.len() - 1;
        let n = self.times.partition_point(|&t| t <= s).saturating_sub(1).min(cells - 1);
        let (a, b) = (self.times[n], self.times[n + 1]);
        let w = ((s - a) / (b - a)).clamp(0.0, 1.0);
        let lo = self.value_at_point(n);
        let hi = self.value_at_point(n + 1);
        for j in 0..self.noise_dim {
            out[j] = lo[j] + w * (hi[j] - lo[j]);
        }
    }
}
