//! Pathwise solution of the Stratonovich flow, the anticipating solution
//! obtained by composing the flow with a path-dependent initial point, and
//! the rescaled process `ξ^u_t = φ(u)^{-1} X_{ut}`.
//!
//! The primary scheme is stochastic Heun on the Stratonovich form. The Itô
//! route runs Euler–Maruyama with the corrected drift `B` and exists to
//! cross-check the correction term.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal};

use crate::coefficients::{ito_drift, rescale, CoefficientSystem, FieldSystem, VectorField};
use crate::error::{Error, Result};
use crate::wiener::{phi, RescaledWiener, WienerPath};
#[allow(unused_imports)]
use num_traits::Float;

/// States whose Euclidean norm exceeds this are treated as a blow-up.
pub const BLOW_UP_GUARD: f64 = 1e12;

/// Default number of cells of the `[0, 1]` output grid.
pub const DEFAULT_OUTPUT_CELLS: usize = 256;

/// A continuous path on `[0, 1]`, stored at the `m + 1` points `t_j = j / m`
/// and linear in between.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    dim: usize,
    values: Vec<f64>,
}

impl SamplePath {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || !values.len().is_multiple_of(dim) || values.len() / dim < 2 {
            return Err(Error::invalid(
                "path",
                "need at least two points of a positive dimension",
            ));
        }
        Ok(Self { dim, values })
    }

    /// Samples `f(t)` at `t_j = j / cells`.
    pub fn from_fn(dim: usize, cells: usize, mut f: impl FnMut(f64, &mut [f64])) -> Self {
        let mut values = vec![0.0; (cells + 1) * dim];
        for j in 0..=cells {
            f(j as f64 / cells as f64, &mut values[j * dim..(j + 1) * dim]);
        }
        Self { dim, values }
    }

    pub fn zeros(dim: usize, cells: usize) -> Self {
        Self {
            dim,
            values: vec![0.0; (cells + 1) * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of uniform cells `m`.
    pub fn cells(&self) -> usize {
        self.values.len() / self.dim - 1
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 / self.cells() as f64
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn start(&self) -> &[f64] {
        self.point(0)
    }

    pub fn end(&self) -> &[f64] {
        self.point(self.cells())
    }

    pub fn value_at(&self, t: f64, out: &mut [f64]) {
        let m = self.cells();
        let x = (t.clamp(0.0, 1.0)) * m as f64;
        let j = (x.floor() as usize).min(m - 1);
        let w = x - j as f64;
        let (a, b) = (self.point(j), self.point(j + 1));
        for l in 0..self.dim {
            out[l] = a[l] + w * (b[l] - a[l]);
        }
    }

    /// The same path sampled on `cells` uniform cells.
    pub fn resample(&self, cells: usize) -> Self {
        if cells == self.cells() {
            return self.clone();
        }
        Self::from_fn(self.dim, cells, |t, out| self.value_at(t, out))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// `max_j |x(t_j)|`.
    pub fn sup_norm(&self) -> f64 {
        (0..=self.cells()).map(|j| norm(self.point(j))).fold(0.0, f64::max)
    }

    /// `max_j |x(t_j) − y(t_j)|` on a shared grid.
    pub fn sup_distance(&self, other: &SamplePath) -> Result<f64> {
        if self.dim != other.dim || self.cells() != other.cells() {
            return Err(Error::DimensionMismatch {
                what: "sample path grid",
                expected: self.cells(),
                found: other.cells(),
            });
        }
        Ok(self
            .values
            .chunks(self.dim)
            .zip(other.values.chunks(self.dim))
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
            .fold(0.0, f64::max))
    }

    /// Exact sup distance between the two piecewise-linear paths, on any grids.
    pub fn sup_distance_interpolated(&self, other: &SamplePath) -> Result<f64> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                what: "sample path dimension",
                expected: self.dim,
                found: other.dim,
            });
        }
        let mut a = vec![0.0; self.dim];
        let mut b = vec![0.0; self.dim];
        let mut sup = 0.0f64;
        for p in merged_grid(self.cells(), other.cells()) {
            self.interpolate(p.a, &mut a);
            other.interpolate(p.b, &mut b);
            let dist = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            sup = sup.max(dist);
        }
        Ok(sup)
    }

    /// Value at a `(cell, weight)` location from [`merged_grid`].
    pub(crate) fn interpolate(&self, (cell, w): (usize, f64), out: &mut [f64]) {
        let (a, b) = (self.point(cell), self.point(cell + 1));
        for l in 0..self.dim {
            out[l] = (1.0 - w) * a[l] + w * b[l];
        }
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// A point of the union of two uniform grids, located in each as `(cell, weight)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct GridPoint {
    pub a: (usize, f64),
    pub b: (usize, f64),
}

fn locate(num: u64, den: u64, cells: u64) -> (usize, f64) {
    let scaled = num * cells;
    let (q, r) = (scaled / den, scaled % den);
    if q >= cells {
        (cells as usize - 1, 1.0)
    } else {
        (q as usize, r as f64 / den as f64)
    }
}

/// The sorted, duplicate-free union of the grids `{i/a}` and `{j/b}`.
///
/// Two piecewise-linear paths on these grids differ by a function that is
/// linear between consecutive union points, so its sup is attained there.
pub(crate) fn merged_grid(a: usize, b: usize) -> Vec<GridPoint> {
    let (a, b) = (a as u64, b as u64);
    let mut out = Vec::with_capacity((a + b + 1) as usize);
    let (mut i, mut j) = (0u64, 0u64);
    while i <= a || j <= b {
        let order = if i > a {
            core::cmp::Ordering::Greater
        } else if j > b {
            core::cmp::Ordering::Less
        } else {
            (i * b).cmp(&(j * a))
        };
        match order {
            core::cmp::Ordering::Equal => {
                out.push(GridPoint {
                    a: locate(i, a, a),
                    b: locate(j, b, b),
                });
                i += 1;
                j += 1;
            }
            core::cmp::Ordering::Less => {
                out.push(GridPoint {
                    a: locate(i, a, a),
                    b: locate(i, a, b),
                });
                i += 1;
            }
            core::cmp::Ordering::Greater => {
                out.push(GridPoint {
                    a: locate(j, b, a),
                    b: locate(j, b, b),
                });
                j += 1;
            }
        }
    }
    out
}

/// Path functionals that produce the (possibly anticipating) initial point.
///
/// Functionals read the realized Wiener path and, for the independent
/// variants, an auxiliary stream keyed by `(seed, path seed)`. They never
/// read the solution.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Point(Vec<f64>),
    /// `X_0^l = W_1^{l mod k}`.
    Endpoint,
    /// Every coordinate equals `max_{s ≤ 1} W_s^{coord}`.
    RunningMax {
        coord: usize,
    },
    /// `scale · Z` with `Z` standard Gaussian in `R^d`, independent of `W`.
    Gaussian {
        seed: u64,
        scale: f64,
    },
    /// `scale · C` with i.i.d. standard Cauchy coordinates, independent of `W`.
    Cauchy {
        seed: u64,
        scale: f64,
    },
    /// `bound · tanh(inner / bound)` componentwise.
    Bounded {
        inner: Box<InitialCondition>,
        bound: f64,
    },
}

impl InitialCondition {
    pub fn realize(&self, path: &WienerPath, dim: usize) -> Result<Vec<f64>> {
        let k = path.noise_dim();
        match self {
            InitialCondition::Point(x) => {
                if x.len() != dim {
                    return Err(Error::DimensionMismatch {
                        what: "initial point",
                        expected: dim,
                        found: x.len(),
                    });
                }
                Ok(x.clone())
            }
            InitialCondition::Endpoint => {
                let mut w = vec![0.0; k];
                path.value_at(1.0, &mut w)?;
                Ok((0..dim).map(|l| w[l % k]).collect())
            }
            InitialCondition::RunningMax { coord } => {
                if *coord >= k {
                    return Err(Error::invalid(
                        "coord",
                        "running-max coordinate exceeds the noise dimension",
                    ));
                }
                let last = path.grid().cells_in_window(0);
                let m = (0..=last)
                    .map(|n| path.value_at_point(n)[*coord])
                    .fold(f64::NEG_INFINITY, f64::max);
                Ok(vec![m; dim])
            }
            InitialCondition::Gaussian { seed, scale } => {
                let mut rng = aux_rng(*seed, path.seed());
                Ok((0..dim)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        scale * z
                    })
                    .collect())
            }
            InitialCondition::Cauchy { seed, scale } => {
                let mut rng = aux_rng(*seed, path.seed());
                let c = Cauchy::new(0.0, 1.0).expect("unit Cauchy");
                Ok((0..dim).map(|_| scale * c.sample(&mut rng)).collect())
            }
            InitialCondition::Bounded { inner, bound } => {
                if !(*bound > 0.0) {
                    return Err(Error::invalid("bound", "bounded transform needs a positive bound"));
                }
                Ok(inner
                    .realize(path, dim)?
                    .into_iter()
                    .map(|x| bound * (x / bound).tanh())
                    .collect())
            }
        }
    }
}

fn aux_rng(seed: u64, path_seed: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(path_seed);
    rng
}

/// Numerical scheme for the flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Predictor–corrector on the Stratonovich form.
    StratonovichHeun,
    /// Euler–Maruyama on the Itô form with drift `B`.
    ItoEuler,
}

/// Solution values at the driving grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowPath {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
}

impl FlowPath {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn state(&self, n: usize) -> &[f64] {
        &self.states[n * self.dim..(n + 1) * self.dim]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("non-empty flow")
    }

    pub fn end_state(&self) -> &[f64] {
        self.state(self.times.len() - 1)
    }

    /// Linear interpolation at time `t` inside the solved range.
    pub fn value_at(&self, t: f64, out: &mut [f64]) {
        let n = self
            .times
            .partition_point(|&s| s <= t)
            .saturating_sub(1)
            .min(self.times.len() - 2);
        let (a, b) = (self.times[n], self.times[n + 1]);
        let w = ((t - a) / (b - a)).clamp(0.0, 1.0);
        let (x, y) = (self.state(n), self.state(n + 1));
        for l in 0..self.dim {
            out[l] = x[l] + w * (y[l] - x[l]);
        }
    }
}

/// Time points and Wiener increments of a sequence of steps.
struct Steps {
    times: Vec<f64>,
    dw: Vec<f64>,
}

fn path_steps(path: &WienerPath, t0: f64, t1: f64) -> Result<Steps> {
    let horizon = path.horizon();
    if t1 > horizon * (1.0 + 1e-12) {
        return Err(Error::ScaleExceedsHorizon { u: t1, horizon });
    }
    if !(t0 >= 0.0 && t1 > t0) {
        return Err(Error::invalid("horizon", "need 0 <= start < end"));
    }
    let t1 = t1.min(horizon);
    let k = path.noise_dim();
    let grid = path.grid().times();
    let first = grid.partition_point(|&s| s <= t0);
    let mut times = vec![t0];
    let mut dw = Vec::new();
    let mut prev = vec![0.0; k];
    path.value_at(t0, &mut prev)?;
    let mut next = vec![0.0; k];
    let mut n = first;
    loop {
        let (t, exact) = if n < grid.len() && grid[n] < t1 {
            (grid[n], Some(n))
        } else if n < grid.len() && grid[n] == t1 {
            (t1, Some(n))
        } else {
            (t1, None)
        };
        match exact {
            Some(idx) => next.copy_from_slice(path.value_at_point(idx)),
            None => path.value_at(t, &mut next)?,
        }
        dw.extend(next.iter().zip(&prev).map(|(a, b)| a - b));
        times.push(t);
        core::mem::swap(&mut prev, &mut next);
        if t >= t1 {
            break;
        }
        n += 1;
    }
    Ok(Steps { times, dw })
}

fn uniform_steps(noise: &RescaledWiener, cells: usize) -> Steps {
    let k = noise.noise_dim();
    let mut times = Vec::with_capacity(cells + 1);
    let mut dw = Vec::with_capacity(cells * k);
    let mut prev = vec![0.0; k];
    noise.value_at(0.0, &mut prev);
    let mut next = vec![0.0; k];
    times.push(0.0);
    for j in 1..=cells {
        let s = j as f64 / cells as f64;
        noise.value_at(s, &mut next);
        dw.extend(next.iter().zip(&prev).map(|(a, b)| a - b));
        times.push(s);
        core::mem::swap(&mut prev, &mut next);
    }
    Steps { times, dw }
}

fn integrate<S: FieldSystem + ?Sized>(
    sys: &S,
    drift: &dyn VectorField,
    noise_intensity: f64,
    scheme: Scheme,
    x0: &[f64],
    steps: &Steps,
    scale_tag: Option<f64>,
) -> Result<FlowPath> {
    let (d, k) = (sys.dim(), sys.noise_dim());
    if x0.len() != d {
        return Err(Error::DimensionMismatch {
            what: "initial point",
            expected: d,
            found: x0.len(),
        });
    }
    let n = steps.times.len() - 1;
    let mut states = Vec::with_capacity((n + 1) * d);
    states.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let mut pred = vec![0.0; d];
    let mut a0 = vec![0.0; d];
    let mut a0p = vec![0.0; d];
    let mut aj = vec![0.0; d];
    let mut ajp = vec![0.0; d];
    let mut inc = vec![0.0; d];

    for s in 0..n {
        let h = steps.times[s + 1] - steps.times[s];
        let dw = &steps.dw[s * k..(s + 1) * k];
        drift.eval(&x, &mut a0);
        match scheme {
            Scheme::ItoEuler => {
                for l in 0..d {
                    inc[l] = a0[l] * h;
                }
                for j in 0..k {
                    sys.diffusion(j).eval(&x, &mut aj);
                    let w = noise_intensity * dw[j];
                    for l in 0..d {
                        inc[l] += aj[l] * w;
                    }
                }
            }
            Scheme::StratonovichHeun => {
                for l in 0..d {
                    pred[l] = x[l] + a0[l] * h;
                    inc[l] = 0.5 * a0[l] * h;
                }
                for j in 0..k {
                    sys.diffusion(j).eval(&x, &mut aj);
                    let w = noise_intensity * dw[j];
                    for l in 0..d {
                        pred[l] += aj[l] * w;
                        inc[l] += 0.5 * aj[l] * w;
                    }
                }
                drift.eval(&pred, &mut a0p);
                for l in 0..d {
                    inc[l] += 0.5 * a0p[l] * h;
                }
                for j in 0..k {
                    sys.diffusion(j).eval(&pred, &mut ajp);
                    let w = noise_intensity * dw[j];
                    for l in 0..d {
                        inc[l] += 0.5 * ajp[l] * w;
                    }
                }
            }
        }
        for l in 0..d {
            x[l] += inc[l];
        }
        if !x.iter().all(|v| v.is_finite()) || norm(&x) > BLOW_UP_GUARD {
            return Err(Error::BlowUp {
                time: steps.times[s + 1],
                scale: scale_tag,
            });
        }
        states.extend_from_slice(&x);
    }
    Ok(FlowPath {
        dim: d,
        times: steps.times.clone(),
        states,
    })
}

/// Stratonovich flow from `x0` over `[0, horizon]` by stochastic Heun.
pub fn solve_flow<S: FieldSystem + ?Sized>(sys: &S, path: &WienerPath, x0: &[f64], horizon: f64) -> Result<FlowPath> {
    solve_flow_between(sys, path, x0, 0.0, horizon, Scheme::StratonovichHeun)
}

/// The same flow by Euler–Maruyama on the Itô form with drift `B`.
pub fn solve_flow_ito(sys: &CoefficientSystem, path: &WienerPath, x0: &[f64], horizon: f64) -> Result<FlowPath> {
    let steps = path_steps(path, 0.0, horizon)?;
    integrate(sys, &ito_drift(sys), 1.0, Scheme::ItoEuler, x0, &steps, None)
}

/// Heun (or Euler with the system's own drift) over `[start, end]`, started at `x` at time `start`.
pub fn solve_flow_between<S: FieldSystem + ?Sized>(
    sys: &S,
    path: &WienerPath,
    x: &[f64],
    start: f64,
    end: f64,
    scheme: Scheme,
) -> Result<FlowPath> {
    if path.noise_dim() != sys.noise_dim() {
        return Err(Error::DimensionMismatch {
            what: "noise dimension",
            expected: sys.noise_dim(),
            found: path.noise_dim(),
        });
    }
    let steps = path_steps(path, start, end)?;
    integrate(sys, sys.drift(), 1.0, scheme, x, &steps, None)
}

/// The anticipating solution `X_t = φ_t(X_0)` with `X_0` read off the realized path.
pub fn solve_anticipating<S: FieldSystem + ?Sized>(
    sys: &S,
    path: &WienerPath,
    init: &InitialCondition,
    horizon: f64,
) -> Result<FlowPath> {
    let x0 = init.realize(path, sys.dim())?;
    solve_flow(sys, path, &x0, horizon)
}

/// `ξ^u_t = X_{ut} / φ(u)` on `cells` uniform cells, read from an existing flow.
pub fn rescale_flow(flow: &FlowPath, u: f64, cells: usize) -> Result<SamplePath> {
    let p = phi(u)?;
    if u > flow.end_time() * (1.0 + 1e-12) {
        return Err(Error::ScaleExceedsHorizon {
            u,
            horizon: flow.end_time(),
        });
    }
    let inv = 1.0 / p;
    Ok(SamplePath::from_fn(flow.dim(), cells, |t, out| {
        flow.value_at(u * t, out);
        out.iter_mut().for_each(|v| *v *= inv);
    }))
}

/// `ξ^u` through the flow-rescaling identity: one solve to real time `u`.
pub fn rescaled_solution<S: FieldSystem + ?Sized>(
    sys: &S,
    path: &WienerPath,
    init: &InitialCondition,
    u: f64,
    cells: usize,
) -> Result<SamplePath> {
    phi(u)?;
    let flow = solve_anticipating(sys, path, init, u).map_err(|e| tag_scale(e, u))?;
    rescale_flow(&flow, u, cells)
}

/// `ξ^u` by direct Heun integration of the rescaled equation on `steps`
/// uniform cells of `[0, 1]`, driven by `s ↦ W_{us}/sqrt(u)`.
pub fn rescaled_solution_direct(
    sys: &CoefficientSystem,
    path: &WienerPath,
    init: &InitialCondition,
    u: f64,
    cells: usize,
    steps: usize,
) -> Result<SamplePath> {
    let r = rescale(sys, u)?;
    let x0: Vec<f64> = init.realize(path, sys.dim())?.iter().map(|x| x / r.phi()).collect();
    let noise = path.rescaled(u)?;
    let s = uniform_steps(&noise, steps);
    let flow = integrate(
        &r,
        r.drift(),
        r.noise_intensity(),
        Scheme::StratonovichHeun,
        &x0,
        &s,
        Some(u),
    )?;
    Ok(SamplePath::from_fn(sys.dim(), cells, |t, out| flow.value_at(t, out)))
}

fn tag_scale(e: Error, u: f64) -> Error {
    match e {
        Error::BlowUp { time, .. } => Error::BlowUp { time, scale: Some(u) },
        other => other,
    }
}
