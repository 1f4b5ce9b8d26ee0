//! Geometric-scale statistics of the rescaled solutions `ξ^u`.
//!
//! For every seed one Wiener path is sampled on `[0, c^N]` and the anticipating
//! flow is solved once; all scales `u ≤ c^N` are then read off that single
//! realization. Per window index `i` the harness records the distance of
//! `ξ^{c^i}` to the limit set `Θ`, the endpoint norm, the interpolation
//! statistic `Γ_i` and the distances to recurrence targets.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::E;

use crate::coefficients::{CoefficientSystem, FieldSystem, LimitSystem};
use crate::error::{Error, Result};
use crate::flow::{
    norm, rescale_flow, solve_anticipating, FlowPath, InitialCondition, SamplePath, DEFAULT_OUTPUT_CELLS,
};
use crate::rate::{dist_to_theta, DistOptions};
use crate::skeleton::{integrate_skeleton, Control};
use crate::wiener::{phi, GeometricGrid, WienerPath};
#[allow(unused_imports)]
use num_traits::Float;

/// Which per-index statistics to compute. Target distances are always computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Statistics {
    pub theta: bool,
    pub gamma: bool,
}

impl Default for Statistics {
    fn default() -> Self {
        Self {
            theta: true,
            gamma: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LilConfig {
    pub system: CoefficientSystem,
    /// Fields of the skeleton that defines `Θ` and the targets.
    pub limit: LimitSystem,
    pub initial: InitialCondition,
    pub ratio: f64,
    pub windows: usize,
    pub resolution: f64,
    /// Output cells of each `ξ^u`.
    pub cells: usize,
    pub burn_in: usize,
    pub seeds: Vec<u64>,
    pub rho: f64,
    /// Controls whose skeletons from the origin are the recurrence targets.
    pub targets: Vec<Control>,
    /// Size of the geometric `u`-subgrid of each window; 1 means `{c^i}` only.
    pub gamma_points: usize,
    /// Control cells used by the distance-to-`Θ` optimizer.
    pub control_cells: usize,
    pub dist: DistOptions,
    pub statistics: Statistics,
}

impl LilConfig {
    /// Defaults: `c = 2`, `N = 40`, `δ = 10⁻³`, `m = 256`, seed 0, `ρ = 0.5`.
    /// The limit system is the declared one, or the system itself.
    pub fn new(system: CoefficientSystem, initial: InitialCondition) -> Self {
        let limit = system.limit().cloned().unwrap_or_else(|| system.as_limit());
        Self {
            system,
            limit,
            initial,
            ratio: 2.0,
            windows: 40,
            resolution: 1e-3,
            cells: DEFAULT_OUTPUT_CELLS,
            burn_in: default_burn_in(2.0),
            seeds: vec![0],
            rho: 0.5,
            targets: Vec::new(),
            gamma_points: 8,
            control_cells: 64,
            dist: DistOptions::default(),
            statistics: Statistics::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        GeometricGrid::new(self.ratio, self.windows, self.resolution)?;
        if self.burn_in == 0 || !(self.ratio.powi(self.burn_in as i32 - 1) > E) {
            return Err(Error::invalid(
                "burn_in",
                "need c^(i0 - 1) > e so every scale satisfies u > e",
            ));
        }
        if self.burn_in > self.windows {
            return Err(Error::invalid("burn_in", "burn-in index exceeds the window count N"));
        }
        if self.cells == 0 || self.control_cells == 0 {
            return Err(Error::invalid(
                "cells",
                "output and control grids need at least one cell",
            ));
        }
        if self.gamma_points == 0 {
            return Err(Error::invalid("gamma_points", "the u-subgrid needs at least one point"));
        }
        if !(self.rho > 0.0) {
            return Err(Error::invalid("rho", "closeness radius must be positive"));
        }
        let (d, k) = (self.system.dim(), self.system.noise_dim());
        if self.limit.dim() != d || self.limit.noise_dim() != k {
            return Err(Error::DimensionMismatch {
                what: "limit system",
                expected: d,
                found: self.limit.dim(),
            });
        }
        for (index, target) in self.targets.iter().enumerate() {
            if target.noise_dim() != k {
                return Err(Error::DimensionMismatch {
                    what: "recurrence target control",
                    expected: k,
                    found: target.noise_dim(),
                });
            }
            let energy = target.energy();
            if !(energy < 1.0) {
                return Err(Error::TargetEnergy { index, energy });
            }
        }
        Ok(())
    }

    fn grid(&self) -> Result<GeometricGrid> {
        GeometricGrid::new(self.ratio, self.windows, self.resolution)
    }

    fn target_paths(&self) -> Result<Vec<SamplePath>> {
        let origin = vec![0.0; self.limit.dim()];
        self.targets
            .iter()
            .map(|f| integrate_skeleton(&self.limit, f, &origin, self.dist.substeps))
            .collect()
    }
}

/// Smallest `i ≥ 1` with `c^{i-1} > e^e`, i.e. `L(c^{i-1}) > 1`.
pub fn default_burn_in(ratio: f64) -> usize {
    let threshold = E.powf(E);
    let mut i = 1;
    while ratio.powi(i as i32 - 1) <= threshold && i < 10_000 {
        i += 1;
    }
    i
}

/// The geometric subdivision `c^{i-1} · c^{q/(n-1)}`, `q = 0 … n-1`; `{c^i}` when `n = 1`.
pub fn window_scales(ratio: f64, i: usize, n: usize) -> Vec<f64> {
    let top = ratio.powi(i as i32);
    if n <= 1 {
        return vec![top];
    }
    let bottom = ratio.powi(i as i32 - 1);
    let mut us: Vec<f64> = (0..n - 1)
        .map(|q| bottom * ratio.powf(q as f64 / (n - 1) as f64))
        .collect();
    us.push(top);
    us
}

/// One row of the per-(seed, i) table.
#[derive(Debug, Clone, PartialEq)]
pub struct LilRecord {
    pub seed: u64,
    pub i: usize,
    pub u: f64,
    pub dist_theta: Option<f64>,
    pub endpoint_norm: f64,
    pub gamma: Option<f64>,
    /// `d(ξ^{c^i}, g̃)` for each target, in config order.
    pub target_distances: Vec<f64>,
}

/// `sup_t |X_{ut} − X_{c^i t}| / φ(u)` maximized over `us`, where `top = c^i`.
///
/// This is `sup_u d(ξ^u, (φ(c^i)/φ(u)) ξ^{c^i})` written without the ratio,
/// so the `u = c^i` term is exactly zero.
pub fn gamma_statistic(flow: &FlowPath, top: f64, us: &[f64], cells: usize) -> Result<f64> {
    let base = raw_samples(flow, top, cells)?;
    let mut gamma = 0.0f64;
    for &u in us {
        gamma = gamma.max(scaled_gap(flow, &base, u, cells)?);
    }
    Ok(gamma)
}

fn raw_samples(flow: &FlowPath, u: f64, cells: usize) -> Result<Vec<f64>> {
    phi(u)?;
    if u > flow.end_time() * (1.0 + 1e-12) {
        return Err(Error::ScaleExceedsHorizon {
            u,
            horizon: flow.end_time(),
        });
    }
    let d = flow.dim();
    let mut out = vec![0.0; (cells + 1) * d];
    for j in 0..=cells {
        flow.value_at(u * (j as f64 / cells as f64), &mut out[j * d..(j + 1) * d]);
    }
    Ok(out)
}

fn scaled_gap(flow: &FlowPath, base: &[f64], u: f64, cells: usize) -> Result<f64> {
    let x = raw_samples(flow, u, cells)?;
    let d = flow.dim();
    let sup = x
        .chunks(d)
        .zip(base.chunks(d))
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    Ok(sup / phi(u)?)
}

struct SeedRun {
    flow: FlowPath,
}

impl SeedRun {
    fn new(cfg: &LilConfig, grid: &GeometricGrid, seed: u64) -> Result<Self> {
        let path = WienerPath::sample(grid, cfg.system.noise_dim(), seed)?;
        let flow = solve_anticipating(&cfg.system, &path, &cfg.initial, grid.horizon())?;
        Ok(Self { flow })
    }

    fn xi(&self, cfg: &LilConfig, u: f64) -> Result<SamplePath> {
        rescale_flow(&self.flow, u, cfg.cells)
    }

    fn dist(&self, cfg: &LilConfig, xi: &SamplePath) -> Result<f64> {
        Ok(dist_to_theta(&cfg.limit, xi, cfg.control_cells, &cfg.dist)?.distance)
    }
}

/// All records of one seed, ordered by `i`.
pub fn run_seed(cfg: &LilConfig, seed: u64) -> Result<Vec<LilRecord>> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let targets = cfg.target_paths()?;
    let run = SeedRun::new(cfg, &grid, seed).map_err(|e| e.in_seed(seed, None))?;
    let mut records = Vec::with_capacity(cfg.windows + 1 - cfg.burn_in);
    for i in cfg.burn_in..=cfg.windows {
        let tag = |e: Error| e.in_seed(seed, Some(i));
        let u = cfg.ratio.powi(i as i32);
        let xi = run.xi(cfg, u).map_err(tag)?;
        let dist_theta = if cfg.statistics.theta {
            Some(run.dist(cfg, &xi).map_err(tag)?)
        } else {
            None
        };
        let gamma = if cfg.statistics.gamma {
            let us = window_scales(cfg.ratio, i, cfg.gamma_points);
            Some(gamma_statistic(&run.flow, u, &us, cfg.cells).map_err(tag)?)
        } else {
            None
        };
        let target_distances = targets
            .iter()
            .map(|g| xi.sup_distance_interpolated(g))
            .collect::<Result<Vec<_>>>()
            .map_err(tag)?;
        records.push(LilRecord {
            seed,
            i,
            u,
            dist_theta,
            endpoint_norm: norm(xi.end()),
            gamma,
            target_distances,
        });
    }
    Ok(records)
}

/// Runs every seed of `cfg` in order.
pub fn run_convergence(cfg: &LilConfig) -> Result<LilReport> {
    cfg.validate()?;
    let mut records = Vec::new();
    for &seed in &cfg.seeds {
        records.extend(run_seed(cfg, seed)?);
    }
    Ok(LilReport::new(records, cfg.rho))
}

/// The per-(seed, target) recurrence summary of a full run.
pub fn run_recurrence(cfg: &LilConfig) -> Result<Vec<RecurrenceSummary>> {
    Ok(run_convergence(cfg)?.recurrence())
}

/// `Γ_i` for every `i ≥ i₀` of one seed.
pub fn gamma_stat(cfg: &LilConfig, seed: u64) -> Result<Vec<(usize, f64)>> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let run = SeedRun::new(cfg, &grid, seed).map_err(|e| e.in_seed(seed, None))?;
    (cfg.burn_in..=cfg.windows)
        .map(|i| {
            let us = window_scales(cfg.ratio, i, cfg.gamma_points);
            gamma_statistic(&run.flow, cfg.ratio.powi(i as i32), &us, cfg.cells)
                .map(|g| (i, g))
                .map_err(|e| e.in_seed(seed, Some(i)))
        })
        .collect()
}

/// The continuous-scale triangle decomposition at one scanned `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRecord {
    pub u: f64,
    /// Window with `c^{i-1} < u ≤ c^i`.
    pub i: usize,
    pub distance: f64,
    /// `d(ξ^u, r ξ^{c^i})` with `r = φ(c^i)/φ(u)`.
    pub beta1: f64,
    /// `(r − 1) · sup|ξ^{c^i}|`.
    pub beta2: f64,
    /// `d(ξ^{c^i}, Θ)`.
    pub beta3: f64,
    pub phi_ratio: f64,
    /// `φ(c^i)/φ(c^{i-1})`, the upper end of the admissible ratio; `None` when `c^{i-1} ≤ e`.
    pub window_ratio: Option<f64>,
}

impl ScanRecord {
    /// Whether `distance ≤ β₁ + β₂ + β₃ + slack`.
    pub fn triangle_holds(&self, slack: f64) -> bool {
        self.distance <= self.beta1 + self.beta2 + self.beta3 + slack
    }

    /// Whether `1 ≤ r ≤ φ(c^i)/φ(c^{i-1})`.
    pub fn ratio_in_window(&self) -> bool {
        self.phi_ratio >= 1.0 && self.window_ratio.is_none_or(|w| self.phi_ratio <= w * (1.0 + 1e-12))
    }
}

/// `d(ξ^u, Θ)` at arbitrary scales of one seed's path, with the three terms of
/// the triangle bound through the enclosing `c^i`.
pub fn triangle_scan(cfg: &LilConfig, seed: u64, u_scan: &[f64]) -> Result<Vec<ScanRecord>> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    for &u in u_scan {
        phi(u)?;
        if u > grid.horizon() * (1.0 + 1e-12) {
            return Err(Error::ScaleExceedsHorizon {
                u,
                horizon: grid.horizon(),
            });
        }
    }
    let run = SeedRun::new(cfg, &grid, seed).map_err(|e| e.in_seed(seed, None))?;
    let mut windows: BTreeMap<usize, (SamplePath, f64)> = BTreeMap::new();
    let mut out = Vec::with_capacity(u_scan.len());
    for &u in u_scan {
        let i = enclosing_window(cfg.ratio, u);
        let tag = |e: Error| e.in_seed(seed, Some(i));
        let top = cfg.ratio.powi(i as i32);
        if let alloc::collections::btree_map::Entry::Vacant(e) = windows.entry(i) {
            let xi_top = run.xi(cfg, top).map_err(tag)?;
            let d = run.dist(cfg, &xi_top).map_err(tag)?;
            e.insert((xi_top, d));
        }
        let (xi_top, beta3) = &windows[&i];
        let xi = run.xi(cfg, u).map_err(tag)?;
        let distance = if u == top {
            *beta3
        } else {
            run.dist(cfg, &xi).map_err(tag)?
        };
        let ratio = phi(top)? / phi(u)?;
        let base = raw_samples(&run.flow, top, cfg.cells)?;
        let beta1 = scaled_gap(&run.flow, &base, u, cfg.cells)?;
        let bottom = cfg.ratio.powi(i as i32 - 1);
        out.push(ScanRecord {
            u,
            i,
            distance,
            beta1,
            beta2: (ratio - 1.0).abs() * xi_top.sup_norm(),
            beta3: *beta3,
            phi_ratio: ratio,
            window_ratio: phi(bottom).ok().map(|p| phi(top).unwrap_or(f64::NAN) / p),
        });
    }
    Ok(out)
}

fn enclosing_window(ratio: f64, u: f64) -> usize {
    let mut i = (u.ln() / ratio.ln()).ceil().max(1.0) as usize;
    while ratio.powi(i as i32) < u {
        i += 1;
    }
    while i > 1 && ratio.powi(i as i32 - 1) >= u {
        i -= 1;
    }
    i
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceSummary {
    pub seed: u64,
    pub target: usize,
    pub min_distance: f64,
    /// Indices `i` with `d(ξ^{c^i}, g̃) < ρ`.
    pub hits: usize,
}

/// The per-(seed, i) table with the aggregates derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct LilReport {
    pub rho: f64,
    /// Sorted by `(seed, i)`.
    pub records: Vec<LilRecord>,
}

impl LilReport {
    /// Sorts the records, so any merge order of per-seed runs gives the same report.
    pub fn new(mut records: Vec<LilRecord>, rho: f64) -> Self {
        records.sort_by_key(|a| (a.seed, a.i));
        Self { rho, records }
    }

    pub fn seeds(&self) -> Vec<u64> {
        let mut s: Vec<u64> = self.records.iter().map(|r| r.seed).collect();
        s.dedup();
        s
    }

    /// Median of `d(ξ^{c^i}, Θ)` across seeds, per index.
    pub fn median_by_index(&self) -> Vec<(usize, f64)> {
        let mut by_i: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for r in &self.records {
            if let Some(d) = r.dist_theta {
                by_i.entry(r.i).or_default().push(d);
            }
        }
        by_i.into_iter().map(|(i, mut v)| (i, median(&mut v))).collect()
    }

    /// Median of all `d(ξ^{c^i}, Θ)` with `lo ≤ i ≤ hi`, pooled across seeds.
    pub fn pooled_median(&self, lo: usize, hi: usize) -> Option<f64> {
        let mut v: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.i >= lo && r.i <= hi)
            .filter_map(|r| r.dist_theta)
            .collect();
        (!v.is_empty()).then(|| median(&mut v))
    }

    /// Number of seeds with `d(ξ^{c^i}, Θ) > ρ`, per index.
    pub fn exceedances_by_index(&self) -> Vec<(usize, usize)> {
        let mut by_i: BTreeMap<usize, usize> = BTreeMap::new();
        for r in &self.records {
            if let Some(d) = r.dist_theta {
                *by_i.entry(r.i).or_default() += usize::from(d > self.rho);
            }
        }
        by_i.into_iter().collect()
    }

    /// `min_{i' ≤ i} d(ξ^{c^{i'}}, Θ)` for every record, as `(seed, i, value)`.
    pub fn running_minima(&self) -> Vec<(u64, usize, f64)> {
        let mut out = Vec::new();
        let mut current: Option<(u64, f64)> = None;
        for r in &self.records {
            let Some(d) = r.dist_theta else { continue };
            let m = match current {
                Some((s, m)) if s == r.seed => m.min(d),
                _ => d,
            };
            current = Some((r.seed, m));
            out.push((r.seed, r.i, m));
        }
        out
    }

    /// `max_{lo ≤ i ≤ hi} |ξ^{c^i}_1|` per seed.
    pub fn max_endpoint_norm(&self, lo: usize, hi: usize) -> Vec<(u64, f64)> {
        let mut by_seed: BTreeMap<u64, f64> = BTreeMap::new();
        for r in self.records.iter().filter(|r| r.i >= lo && r.i <= hi) {
            let e = by_seed.entry(r.seed).or_insert(0.0);
            *e = e.max(r.endpoint_norm);
        }
        by_seed.into_iter().collect()
    }

    pub fn recurrence(&self) -> Vec<RecurrenceSummary> {
        let mut by_key: BTreeMap<(u64, usize), (f64, usize)> = BTreeMap::new();
        for r in &self.records {
            for (target, &d) in r.target_distances.iter().enumerate() {
                let e = by_key.entry((r.seed, target)).or_insert((f64::INFINITY, 0));
                e.0 = e.0.min(d);
                e.1 += usize::from(d < self.rho);
            }
        }
        by_key
            .into_iter()
            .map(|((seed, target), (min_distance, hits))| RecurrenceSummary {
                seed,
                target,
                min_distance,
                hits,
            })
            .collect()
    }
}

/// Median with the mean of the two middle values for even lengths.
pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
