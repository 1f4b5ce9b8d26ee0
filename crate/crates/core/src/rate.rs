//! The rate function `Ĩ`, distances to the level set `Θ = {Ĩ ≤ 1}` and
//! a sup-norm radius containing `Θ`.
//!
//! Both variational problems are posed over piecewise-constant controls and
//! solved by spectral projected gradient on a log-sum-exp smoothing of the sup
//! norm, annealed over increasing inverse temperatures, with gradients from
//! the discrete adjoint of the RK4 skeleton.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::coefficients::FieldSystem;
use crate::error::{Error, Result};
use crate::flow::{merged_grid, SamplePath};
use crate::optim::{log_sum_exp, project_ball, spg, SpgOptions};
use crate::skeleton::{energy, integrate_skeleton, Control, SkeletonWorkspace, DEFAULT_SUBSTEPS};
#[allow(unused_imports)]
use num_traits::Float;

/// Singular values at or below this make the exact route refuse.
pub const RANK_THRESHOLD: f64 = 1e-8;
/// Tikhonov term in `Ãᵀ(ÃÃᵀ + εI)⁻¹`.
pub const PSEUDO_INVERSE_REGULARIZATION: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateMethod {
    ExactPseudoInverse,
    Variational,
}

impl RateMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            RateMethod::ExactPseudoInverse => "exact-pseudo-inverse",
            RateMethod::Variational => "variational",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateResult {
    /// `Ĩ(g)`, or `+∞` when no start matched the path.
    pub value: f64,
    pub control: Control,
    /// Sup-norm mismatch between the path and the skeleton of `control`.
    pub residual: f64,
    pub method: RateMethod,
    pub iterations: usize,
    pub start_index: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaQuery {
    pub target: SamplePath,
    pub energy_cap: f64,
    pub distance: f64,
    /// Skeleton path of the minimizing control.
    pub path: SamplePath,
    pub control: Control,
    pub iterations: usize,
    pub start_index: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateOptions {
    pub substeps: usize,
    /// Weight `λ` of the smoothed sup mismatch.
    pub penalty: f64,
    /// Inverse temperatures, in order.
    pub betas: Vec<f64>,
    /// Residual tolerance; `+∞` is reported beyond ten times this.
    pub tolerance: f64,
    pub starts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Relative improvement over 50 iterations below which a stage stops.
    pub stall_tol: f64,
    /// Initial point of the skeleton; `None` uses the start of the path.
    pub start: Option<Vec<f64>>,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self {
            substeps: DEFAULT_SUBSTEPS,
            penalty: 1e3,
            betas: vec![1e1, 1e2, 1e3],
            tolerance: 1e-3,
            starts: 5,
            seed: 0,
            max_iter: 2000,
            stall_tol: 1e-10,
            start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistOptions {
    pub substeps: usize,
    pub betas: Vec<f64>,
    pub energy_cap: f64,
    pub starts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Relative improvement over 50 iterations below which a stage stops.
    pub stall_tol: f64,
    /// Initial point of the skeleton; `None` means the origin.
    pub start: Option<Vec<f64>>,
}

impl Default for DistOptions {
    fn default() -> Self {
        Self {
            substeps: DEFAULT_SUBSTEPS,
            betas: vec![1e1, 1e2, 1e3],
            energy_cap: 1.0,
            starts: 5,
            seed: 0,
            max_iter: 1000,
            stall_tol: 1e-7,
            start: None,
        }
    }
}

/// Smoothed sup mismatch between a target path and the skeleton of a control,
/// optionally plus the control energy, with its adjoint gradient.
///
/// With `penalty = None` the value is `LSE_β(n_p)`, where `n_p` is a smoothed
/// `|ξ(t_p) − g(t_p)|` over the union of the target and skeleton grids; with
/// `Some(λ)` it is `I(f) + λ · LSE_β(n_p)`.
#[derive(Debug)]
pub struct PathObjective<'a, S: FieldSystem + ?Sized> {
    fields: &'a S,
    cells: usize,
    start: Vec<f64>,
    penalty: Option<f64>,
    beta: f64,
    ws: SkeletonWorkspace,
    /// Fine-grid `(cell, weight)` and target value per comparison point.
    points: Vec<((usize, f64), Vec<f64>)>,
    norms: Vec<f64>,
    weights: Vec<f64>,
    dj: Vec<f64>,
}

impl<'a, S: FieldSystem + ?Sized> PathObjective<'a, S> {
    pub fn new(
        fields: &'a S,
        target: &SamplePath,
        cells: usize,
        substeps: usize,
        start: &[f64],
        penalty: Option<f64>,
    ) -> Result<Self> {
        let d = fields.dim();
        if target.dim() != d || start.len() != d {
            return Err(Error::DimensionMismatch {
                what: "target path",
                expected: d,
                found: if target.dim() != d { target.dim() } else { start.len() },
            });
        }
        if target.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("target", "path values must be finite"));
        }
        let ws = SkeletonWorkspace::new(d, fields.noise_dim(), cells, substeps)?;
        let fine = ws.steps();
        let mut buf = vec![0.0; d];
        let points: Vec<_> = merged_grid(target.cells(), fine)
            .into_iter()
            .map(|p| {
                target.interpolate(p.a, &mut buf);
                (p.b, buf.clone())
            })
            .collect();
        let n = points.len();
        Ok(Self {
            fields,
            cells,
            start: start.to_vec(),
            penalty,
            beta: 10.0,
            ws,
            points,
            norms: vec![0.0; n],
            weights: vec![0.0; n],
            dj: vec![0.0; (fine + 1) * d],
        })
    }

    pub fn set_beta(&mut self, beta: f64) {
        self.beta = beta;
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn parameter_count(&self) -> usize {
        self.cells * self.fields.noise_dim()
    }

    fn control(&self, values: &[f64]) -> Option<Control> {
        Control::new(self.cells, self.fields.noise_dim(), values.to_vec()).ok()
    }

    fn skeleton_at(&self, (cell, w): (usize, f64), l: usize) -> f64 {
        let d = self.start.len();
        let s = self.ws.states();
        (1.0 - w) * s[cell * d + l] + w * s[(cell + 1) * d + l]
    }

    /// Value and gradient; `+∞` when the skeleton blows up.
    pub fn value_and_gradient(&mut self, values: &[f64], grad: &mut [f64]) -> f64 {
        let Some(control) = self.control(values) else {
            return f64::INFINITY;
        };
        if self.ws.forward(self.fields, &control, &self.start).is_err() {
            return f64::INFINITY;
        }
        let d = self.start.len();
        let eta = 1.0 / self.beta;
        for (p, (loc, target)) in self.points.iter().enumerate() {
            let r2: f64 = (0..d)
                .map(|l| {
                    let e = self.skeleton_at(*loc, l) - target[l];
                    e * e
                })
                .sum();
            self.norms[p] = (r2 + eta * eta).sqrt() - eta;
        }
        let smooth = log_sum_exp(&self.norms, self.beta, &mut self.weights);
        let scale = self.penalty.unwrap_or(1.0);
        self.dj.iter_mut().for_each(|v| *v = 0.0);
        for (p, ((cell, w), target)) in self.points.iter().enumerate() {
            let denom = self.norms[p] + eta;
            for l in 0..d {
                let e = self.skeleton_at((*cell, *w), l) - target[l];
                let de = scale * self.weights[p] * e / denom;
                self.dj[cell * d + l] += (1.0 - w) * de;
                self.dj[(cell + 1) * d + l] += w * de;
            }
        }
        self.ws.adjoint(self.fields, &control, &self.dj, grad);
        match self.penalty {
            Some(lambda) => {
                for (g, v) in grad.iter_mut().zip(values) {
                    *g += v / self.cells as f64;
                }
                energy(&control) + lambda * smooth
            }
            None => smooth,
        }
    }

    /// Exact sup mismatch and the skeleton path for `values`.
    pub fn mismatch(&mut self, values: &[f64]) -> Result<(f64, SamplePath)> {
        let control = self
            .control(values)
            .ok_or_else(|| Error::invalid("control", "values must be finite"))?;
        self.ws.forward(self.fields, &control, &self.start)?;
        let d = self.start.len();
        let mut sup = 0.0f64;
        for (loc, target) in &self.points {
            let r2: f64 = (0..d)
                .map(|l| {
                    let e = self.skeleton_at(*loc, l) - target[l];
                    e * e
                })
                .sum();
            sup = sup.max(r2.sqrt());
        }
        Ok((sup, self.ws.path()))
    }
}

struct StartOutcome {
    values: Vec<f64>,
    objective: f64,
    iterations: usize,
    exhausted: bool,
    start_index: usize,
}

fn start_values(index: usize, seed: u64, len: usize) -> Vec<f64> {
    if index == 0 {
        return vec![0.0; len];
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Runs every start through all but the last inverse temperature, keeps the
/// lowest objective (ties to the lowest start index) and finishes that start
/// at the last temperature. A single temperature is run by every start.
fn multi_start<S, P>(
    objective: &mut PathObjective<'_, S>,
    betas: &[f64],
    starts: usize,
    seed: u64,
    max_iter: usize,
    stall_tol: f64,
    project: P,
) -> Result<StartOutcome>
where
    S: FieldSystem + ?Sized,
    P: Fn(&mut [f64]) + Copy,
{
    if betas.is_empty() || betas.iter().any(|b| !(*b > 0.0)) {
        return Err(Error::invalid(
            "betas",
            "need at least one positive inverse temperature",
        ));
    }
    if starts == 0 {
        return Err(Error::invalid("starts", "need at least one start"));
    }
    let n = objective.parameter_count();
    let opts = SpgOptions {
        max_iter,
        stall_tol,
        ..SpgOptions::default()
    };
    let run = |objective: &mut PathObjective<'_, S>, x: &mut Vec<f64>, schedule: &[f64], outcome: &mut StartOutcome| {
        for &beta in schedule {
            objective.set_beta(beta);
            let out = spg(|x, g| objective.value_and_gradient(x, g), project, x, &opts);
            outcome.iterations += out.iterations;
            outcome.exhausted = out.iterations >= max_iter;
            if out.value.is_finite() {
                *x = out.x;
            }
            outcome.objective = out.value;
        }
    };
    let (screen, finish) = if betas.len() == 1 {
        (betas, &betas[..0])
    } else {
        betas.split_at(betas.len() - 1)
    };
    let mut best: Option<StartOutcome> = None;
    for index in 0..starts {
        let mut x = start_values(index, seed, n);
        project(&mut x);
        let mut outcome = StartOutcome {
            values: Vec::new(),
            objective: f64::INFINITY,
            iterations: 0,
            exhausted: false,
            start_index: index,
        };
        run(objective, &mut x, screen, &mut outcome);
        outcome.values = x;
        if best.as_ref().is_none_or(|b| outcome.objective < b.objective) {
            best = Some(outcome);
        }
    }
    let mut best = best.expect("at least one start");
    let mut x = core::mem::take(&mut best.values);
    run(objective, &mut x, finish, &mut best);
    best.values = x;
    Ok(best)
}

/// `Ĩ(g)` as the least-norm control energy, for full-row-rank diffusion matrices.
///
/// On each cell of `g`, `ḟ = Ãᵀ(ÃÃᵀ + εI)⁻¹(ġ − Ã_0)` with `ġ` the difference
/// quotient and the fields evaluated at the cell midpoint. The skeleton starts
/// at `g(0)`.
pub fn rate_exact_full_rank<S: FieldSystem + ?Sized>(fields: &S, g: &SamplePath) -> Result<RateResult> {
    let (d, k) = (fields.dim(), fields.noise_dim());
    if g.dim() != d {
        return Err(Error::DimensionMismatch {
            what: "path dimension",
            expected: d,
            found: g.dim(),
        });
    }
    let m = g.cells();
    let mut a = vec![0.0; d * k];
    let sigma_min = |a: &[f64]| -> f64 {
        let mat = DMatrix::from_row_slice(d, k, a);
        let gram = &mat * mat.transpose();
        let low = gram
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        low.max(0.0).sqrt()
    };
    for j in 0..=m {
        fields.diffusion_matrix(g.point(j), &mut a);
        let s = if d > k { 0.0 } else { sigma_min(&a) };
        if !(s > RANK_THRESHOLD) {
            return Err(Error::RankDeficient {
                time: g.time(j),
                sigma_min: s,
            });
        }
    }
    let mut values = vec![0.0; m * k];
    let mut mid = vec![0.0; d];
    let mut drift = vec![0.0; d];
    for j in 0..m {
        let (p, q) = (g.point(j), g.point(j + 1));
        for l in 0..d {
            mid[l] = 0.5 * (p[l] + q[l]);
        }
        fields.diffusion_matrix(&mid, &mut a);
        fields.drift().eval(&mid, &mut drift);
        let mat = DMatrix::from_row_slice(d, k, &a);
        let demand = nalgebra::DVector::from_iterator(d, (0..d).map(|l| (q[l] - p[l]) * m as f64 - drift[l]));
        let gram = &mat * mat.transpose() + DMatrix::identity(d, d) * PSEUDO_INVERSE_REGULARIZATION;
        let solved = gram.lu().solve(&demand).ok_or(Error::RankDeficient {
            time: (j as f64 + 0.5) / m as f64,
            sigma_min: 0.0,
        })?;
        let rate = mat.transpose() * solved;
        values[j * k..(j + 1) * k].copy_from_slice(rate.as_slice());
    }
    let control = Control::new(m, k, values)?;
    let path = integrate_skeleton(fields, &control, g.start(), DEFAULT_SUBSTEPS)?;
    let residual = path.sup_distance_interpolated(g)?;
    Ok(RateResult {
        value: energy(&control),
        control,
        residual,
        method: RateMethod::ExactPseudoInverse,
        iterations: 0,
        start_index: 0,
        converged: true,
    })
}

/// `Ĩ(g)` by minimizing `I(f) + λ·LSE_β(|F̃_0(f) − g|)` over `m`-cell controls.
pub fn rate_variational<S: FieldSystem + ?Sized>(
    fields: &S,
    g: &SamplePath,
    m: usize,
    opts: &RateOptions,
) -> Result<RateResult> {
    if m < 8 {
        return Err(Error::invalid(
            "m",
            "the variational rate needs at least 8 control cells",
        ));
    }
    if !(opts.tolerance > 0.0) || !(opts.penalty > 0.0) {
        return Err(Error::invalid("tolerance", "tolerance and penalty must be positive"));
    }
    let start = opts.start.clone().unwrap_or_else(|| g.start().to_vec());
    let mut objective = PathObjective::new(fields, g, m, opts.substeps, &start, Some(opts.penalty))?;
    let best = multi_start(
        &mut objective,
        &opts.betas,
        opts.starts,
        opts.seed,
        opts.max_iter,
        opts.stall_tol,
        |_: &mut [f64]| {},
    )?;
    let (residual, _) = objective.mismatch(&best.values)?;
    let control = Control::new(m, fields.noise_dim(), best.values)?;
    let value = if residual > 10.0 * opts.tolerance {
        f64::INFINITY
    } else {
        energy(&control)
    };
    Ok(RateResult {
        value,
        control,
        residual,
        method: RateMethod::Variational,
        iterations: best.iterations,
        start_index: best.start_index,
        converged: residual <= opts.tolerance,
    })
}

/// `inf { sup_t |ξ_t − g_t| : g = F̃_0(f), I(f) ≤ cap }` over `m`-cell controls.
pub fn dist_to_theta<S: FieldSystem + ?Sized>(
    fields: &S,
    xi: &SamplePath,
    m: usize,
    opts: &DistOptions,
) -> Result<ThetaQuery> {
    if m == 0 {
        return Err(Error::invalid("m", "need at least one control cell"));
    }
    if !(opts.energy_cap >= 0.0) {
        return Err(Error::invalid("energy_cap", "must be nonnegative"));
    }
    let start = opts.start.clone().unwrap_or_else(|| vec![0.0; fields.dim()]);
    let mut objective = PathObjective::new(fields, xi, m, opts.substeps, &start, None)?;
    // I(f) = |v|²/(2m) ≤ cap on the stacked control values v
    let radius = (2.0 * m as f64 * opts.energy_cap).sqrt();
    let best = multi_start(
        &mut objective,
        &opts.betas,
        opts.starts,
        opts.seed,
        opts.max_iter,
        opts.stall_tol,
        move |x: &mut [f64]| project_ball(x, radius),
    )?;
    let (distance, path) = objective.mismatch(&best.values)?;
    Ok(ThetaQuery {
        target: xi.clone(),
        energy_cap: opts.energy_cap,
        distance,
        path,
        control: Control::new(m, fields.noise_dim(), best.values)?,
        iterations: best.iterations,
        start_index: best.start_index,
        converged: !best.exhausted,
    })
}

/// `√2 · sup‖Ã‖_op + sup|Ã_0|`, a sup-norm radius of `Θ` for skeletons from the origin.
///
/// Constant diffusion fields give the exact operator norm; otherwise the
/// Frobenius bound `(Σ_j sup|Ã_j|²)^{1/2}` stands in for it.
pub fn theta_bound<S: FieldSystem + ?Sized>(fields: &S) -> Result<f64> {
    let (d, k) = (fields.dim(), fields.noise_dim());
    let drift = fields.drift().sup_bound().ok_or(Error::UnboundedFields)?;
    let mut bounds = Vec::with_capacity(k);
    for j in 0..k {
        bounds.push(fields.diffusion(j).sup_bound().ok_or(Error::UnboundedFields)?);
    }
    let constants: Option<Vec<Vec<f64>>> = (0..k).map(|j| fields.diffusion(j).constant_value()).collect();
    let op = match constants {
        Some(cols) => {
            let mat = DMatrix::from_fn(d, k, |r, c| cols[c][r]);
            mat.singular_values().iter().copied().fold(0.0, f64::max)
        }
        None => bounds.iter().map(|b| b * b).sum::<f64>().sqrt(),
    };
    Ok(core::f64::consts::SQRT_2 * op + drift)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{Family, LimitSystem};
    use approx::assert_relative_eq;
    use core::f64::consts::SQRT_2;

    fn brownian() -> LimitSystem {
        LimitSystem::from_families(Family::Zero { dim: 1 }, vec![Family::Constant { value: vec![1.0] }]).unwrap()
    }

    fn split() -> LimitSystem {
        LimitSystem::from_families(
            Family::Zero { dim: 1 },
            vec![
                Family::Constant { value: vec![1.0] },
                Family::Constant { value: vec![1.0] },
            ],
        )
        .unwrap()
    }

    #[test]
    fn exact_rate_examples() {
        let g = SamplePath::from_fn(1, 64, |t, o| o[0] = SQRT_2 * t);
        let r = rate_exact_full_rank(&brownian(), &g).unwrap();
        assert_relative_eq!(r.value, 1.0, epsilon = 1e-9);
        assert!(r.control.values().iter().all(|v| (v - SQRT_2).abs() < 1e-9));
        assert!(r.residual < 1e-8);

        let flat = SamplePath::from_fn(1, 16, |_, o| o[0] = 0.3);
        assert_eq!(rate_exact_full_rank(&brownian(), &flat).unwrap().value, 0.0);

        let two = SamplePath::from_fn(1, 32, |t, o| o[0] = 2.0 * t);
        let r = rate_exact_full_rank(&split(), &two).unwrap();
        assert_relative_eq!(r.value, 1.0, epsilon = 1e-9);
        for c in 0..32 {
            assert_relative_eq!(r.control.cell(c)[0], 1.0, epsilon = 1e-9);
            assert_relative_eq!(r.control.cell(c)[1], 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn exact_rate_reports_rank_deficiency() {
        let radial = LimitSystem::from_families(
            Family::Zero { dim: 1 },
            vec![Family::RadialSaturating { direction: vec![1.0] }],
        )
        .unwrap();
        let g = SamplePath::from_fn(1, 8, |t, o| o[0] = t);
        match rate_exact_full_rank(&radial, &g) {
            Err(Error::RankDeficient { time, .. }) => assert_eq!(time, 0.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn variational_matches_exact_on_scalar_and_split_fixtures() {
        let g = SamplePath::from_fn(1, 64, |t, o| o[0] = SQRT_2 * t);
        let r = rate_variational(&brownian(), &g, 64, &RateOptions::default()).unwrap();
        assert!((r.value - 1.0).abs() <= 5e-3, "{r:?}");
        assert!(r.residual <= 1e-3);

        let two = SamplePath::from_fn(1, 64, |t, o| o[0] = 2.0 * t);
        let r = rate_variational(&split(), &two, 64, &RateOptions::default()).unwrap();
        assert!((r.value - 1.0).abs() <= 5e-3, "{r:?}");
    }

    #[test]
    fn unreachable_endpoint_costs_more_than_one() {
        let bound = theta_bound(&brownian()).unwrap();
        let g = SamplePath::from_fn(1, 32, |t, o| o[0] = 1.2 * bound * t);
        let r = rate_variational(&brownian(), &g, 32, &RateOptions::default()).unwrap();
        assert!(r.value > 1.0);
    }

    #[test]
    fn distance_examples() {
        let xi = SamplePath::from_fn(1, 64, |t, o| o[0] = 2.0 * t);
        let q = dist_to_theta(&brownian(), &xi, 64, &DistOptions::default()).unwrap();
        assert!((q.distance - (2.0 - SQRT_2)).abs() <= 1e-2, "{}", q.distance);
        assert!(q.path.sup_norm() <= SQRT_2 + 1e-6);
        assert!(q.control.energy() <= 1.0 + 1e-12);

        let zero = SamplePath::zeros(1, 64);
        let q = dist_to_theta(&brownian(), &zero, 64, &DistOptions::default()).unwrap();
        assert!(q.distance <= 1e-12);

        let sys =
            LimitSystem::from_families(Family::Sine { amp: vec![0.3] }, vec![Family::Tanh { amp: vec![1.0] }]).unwrap();
        let f = Control::new(16, 1, (0..16).map(|i| ((i % 5) as f64 - 2.0) * 0.6 + 0.5).collect()).unwrap();
        let f = f.scaled((0.5 / f.energy()).sqrt());
        let member = integrate_skeleton(&sys, &f, &[0.0], 4).unwrap();
        let q = dist_to_theta(&sys, &member, 16, &DistOptions::default()).unwrap();
        assert!(q.distance <= 1e-2, "{}", q.distance);
    }

    #[test]
    fn theta_bound_examples() {
        assert_relative_eq!(theta_bound(&brownian()).unwrap(), SQRT_2, epsilon = 1e-15);
        let drift_only = LimitSystem::from_families(
            Family::Constant { value: vec![-0.7] },
            vec![Family::Constant { value: vec![0.0] }],
        )
        .unwrap();
        assert_relative_eq!(theta_bound(&drift_only).unwrap(), 0.7, epsilon = 1e-15);
        assert_relative_eq!(theta_bound(&split()).unwrap(), 2.0, epsilon = 1e-12);
        let linear =
            LimitSystem::from_families(Family::Zero { dim: 1 }, vec![Family::linear(1, vec![1.0]).unwrap()]).unwrap();
        assert_eq!(theta_bound(&linear), Err(Error::UnboundedFields));
    }

    #[test]
    fn smoothed_distance_gradient_matches_differences() {
        let sys =
            LimitSystem::from_families(Family::Sine { amp: vec![0.4] }, vec![Family::Tanh { amp: vec![1.5] }]).unwrap();
        let xi = SamplePath::from_fn(1, 40, |t, o| o[0] = (3.0 * t).sin());
        let mut obj = PathObjective::new(&sys, &xi, 8, 4, &[0.0], None).unwrap();
        obj.set_beta(30.0);
        let x: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).cos()).collect();
        let mut grad = vec![0.0; 8];
        let mut scratch = vec![0.0; 8];
        obj.value_and_gradient(&x, &mut grad);
        for i in 0..8 {
            let h = 1e-6;
            let (mut p, mut m) = (x.clone(), x.clone());
            p[i] += h;
            m[i] -= h;
            let fd = (obj.value_and_gradient(&p, &mut scratch) - obj.value_and_gradient(&m, &mut scratch)) / (2.0 * h);
            assert!(
                (fd - grad[i]).abs() <= 1e-4 * fd.abs().max(1e-8),
                "{i}: {fd} {}",
                grad[i]
            );
        }
    }
}
