//! Numerical checkers for the coefficient-convergence hypothesis and the
//! tail condition on the rescaled initial point.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use super::{rescale, CoefficientSystem, FieldSystem, LimitSystem, VectorField};
use crate::error::{Error, Result};
use crate::flow::{norm, InitialCondition};
use crate::special::{ln_cauchy_tail, ln_gaussian_norm_tail};
use crate::wiener::{loglog, phi, GeometricGrid, WienerPath};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        })
    }
}

/// Axis-aligned box `[lo, hi]` in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::invalid(
                "box",
                "lower and upper corners need the same positive dimension",
            ));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a <= b)) {
            return Err(Error::invalid("box", "lower corner must not exceed upper corner"));
        }
        Ok(Self { lo, hi })
    }

    /// Uniform tensor grid with `n` points per axis, endpoints included.
    fn grid(&self, n: usize) -> Vec<Vec<f64>> {
        let d = self.lo.len();
        let total = n.pow(d as u32);
        (0..total)
            .map(|mut idx| {
                (0..d)
                    .map(|axis| {
                        let i = idx % n;
                        idx /= n;
                        self.lo[axis] + (self.hi[axis] - self.lo[axis]) * i as f64 / (n - 1) as f64
                    })
                    .collect()
            })
            .collect()
    }
}

/// Deviation of field `j` (0 is the drift) at scale `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct HRecord {
    pub u: f64,
    pub j: usize,
    pub sup_dev: f64,
    pub sup_dev_jacobian: f64,
    pub witness_point: Vec<f64>,
    pub non_finite: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HReport {
    pub records: Vec<HRecord>,
    pub verdict: Verdict,
    /// The record that decided a FAIL verdict.
    pub witness: Option<HRecord>,
}

fn field_pair<'a>(
    r: &'a super::RescaledSystem,
    limit: &'a LimitSystem,
    j: usize,
) -> (&'a dyn VectorField, &'a dyn VectorField) {
    if j == 0 {
        (r.drift(), limit.drift())
    } else {
        (r.diffusion(j - 1), limit.diffusion(j - 1))
    }
}

/// Sup-deviations of `A_j^u` and `∂A_j^u` from the declared limit fields on a
/// box grid, per scale and field. PASS needs every sequence non-increasing in
/// `u` and its last value below `tol`.
pub fn check_hypothesis_h(
    sys: &CoefficientSystem,
    limit: &LimitSystem,
    compact: &BoxRegion,
    scales: &[f64],
    grid_n: usize,
    tol: f64,
) -> Result<HReport> {
    let d = sys.dim();
    if limit.dim() != d || limit.noise_dim() != sys.noise_dim() {
        return Err(Error::DimensionMismatch {
            what: "limit system",
            expected: d,
            found: limit.dim(),
        });
    }
    if compact.lo.len() != d {
        return Err(Error::DimensionMismatch {
            what: "compact box",
            expected: d,
            found: compact.lo.len(),
        });
    }
    if grid_n < 2 {
        return Err(Error::invalid("grid_n", "need at least 2 points per axis"));
    }
    if scales.is_empty() || scales.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid(
            "scales",
            "scales must be non-empty and strictly increasing",
        ));
    }
    let points = compact.grid(grid_n);
    let k = sys.noise_dim();
    let mut records = Vec::with_capacity(scales.len() * (k + 1));
    let (mut a, mut b) = (vec![0.0; d], vec![0.0; d]);
    let (mut ja, mut jb) = (vec![0.0; d * d], vec![0.0; d * d]);
    for &u in scales {
        let r = rescale(sys, u)?;
        for j in 0..=k {
            let (field, lim) = field_pair(&r, limit, j);
            let mut rec = HRecord {
                u,
                j,
                sup_dev: 0.0,
                sup_dev_jacobian: 0.0,
                witness_point: points[0].clone(),
                non_finite: false,
            };
            for z in &points {
                field.eval(z, &mut a);
                lim.eval(z, &mut b);
                field.jacobian(z, &mut ja);
                lim.jacobian(z, &mut jb);
                let dev = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                let jdev = ja.iter().zip(&jb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                if !dev.is_finite() || !jdev.is_finite() {
                    rec.non_finite = true;
                }
                let dev = if dev.is_finite() { dev } else { f64::INFINITY };
                let jdev = if jdev.is_finite() { jdev } else { f64::INFINITY };
                if dev > rec.sup_dev {
                    rec.sup_dev = dev;
                    rec.witness_point = z.clone();
                }
                rec.sup_dev_jacobian = rec.sup_dev_jacobian.max(jdev);
            }
            records.push(rec);
        }
    }

    let mut witness = None;
    'fields: for j in 0..=k {
        let seq: Vec<&HRecord> = records.iter().filter(|r| r.j == j).collect();
        for w in seq.windows(2) {
            let grows = |prev: f64, next: f64| next > prev + 1e-12 * (1.0 + prev.abs());
            if w[1].non_finite
                || grows(w[0].sup_dev, w[1].sup_dev)
                || grows(w[0].sup_dev_jacobian, w[1].sup_dev_jacobian)
            {
                witness = Some(w[1].clone());
                break 'fields;
            }
        }
        let last = seq.last().expect("at least one scale");
        if last.non_finite || !(last.sup_dev < tol) || !(last.sup_dev_jacobian < tol) {
            witness = Some((*last).clone());
            break;
        }
    }
    Ok(HReport {
        verdict: if witness.is_none() {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
        witness,
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CMethod {
    /// Closed-form tail of the initial-condition family.
    Analytic,
    /// Tail counting over Monte Carlo draws.
    MonteCarlo,
    /// No draw exceeded the threshold; the estimate is the upper bound `log(1/n)/L(u)`.
    MonteCarloUnderflow,
}

impl CMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            CMethod::Analytic => "analytic",
            CMethod::MonteCarlo => "monte_carlo",
            CMethod::MonteCarloUnderflow => "monte_carlo_underflow",
        }
    }
}

/// `(1/L(u)) log P(|X_0| / φ(u) > δ)`; `-∞` when the event is impossible.
#[derive(Debug, Clone, PartialEq)]
pub struct CRecord {
    pub u: f64,
    pub estimate: f64,
    pub method: CMethod,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CReport {
    pub records: Vec<CRecord>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McOptions {
    pub samples: usize,
    pub seed: u64,
    /// Grid resolution on `[0, 1]` for path functionals.
    pub resolution: f64,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            samples: 10_000,
            seed: 0,
            resolution: 1e-3,
        }
    }
}

/// `log P(|X_0| > a)` in closed form, when the family has one.
fn ln_tail(init: &InitialCondition, d: usize, k: usize, a: f64) -> Option<f64> {
    match init {
        InitialCondition::Point(x) => Some(if norm(x) > a { 0.0 } else { f64::NEG_INFINITY }),
        InitialCondition::Endpoint => {
            if d <= k {
                Some(ln_gaussian_norm_tail(d, a))
            } else if d.is_multiple_of(k) {
                // |X_0|² = (d/k) χ²_k
                Some(ln_gaussian_norm_tail(k, a * (k as f64 / d as f64).sqrt()))
            } else {
                None
            }
        }
        // max of W over [0, 1] has the law of |W_1|; |X_0| = sqrt(d) M
        InitialCondition::RunningMax { .. } => Some(ln_gaussian_norm_tail(1, a / (d as f64).sqrt())),
        InitialCondition::Gaussian { scale, .. } => Some(if *scale == 0.0 {
            if a < 0.0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            ln_gaussian_norm_tail(d, a / scale.abs())
        }),
        InitialCondition::Cauchy { scale, .. } if d == 1 && *scale != 0.0 => Some(ln_cauchy_tail(a / scale.abs())),
        InitialCondition::Cauchy { .. } => None,
        InitialCondition::Bounded { inner, bound } => {
            if a >= bound * (d as f64).sqrt() {
                Some(f64::NEG_INFINITY)
            } else if d == 1 {
                ln_tail(inner, d, k, bound * (a / bound).atanh())
            } else {
                None
            }
        }
    }
}

fn needs_path(init: &InitialCondition) -> bool {
    match init {
        InitialCondition::Endpoint | InitialCondition::RunningMax { .. } => true,
        InitialCondition::Bounded { inner, .. } => needs_path(inner),
        _ => false,
    }
}

/// Estimates `(1/L(u)) log P(|X_0^u| > δ)` per scale; closed form when
/// available, Monte Carlo tail counting otherwise. PASS when the definite
/// estimates are non-increasing along the scales and end strictly below
/// where they started (or at `-∞`).
pub fn check_condition_c(
    initial: &InitialCondition,
    dim: usize,
    noise_dim: usize,
    scales: &[f64],
    delta: f64,
    mc: &McOptions,
) -> Result<CReport> {
    if !(delta > 0.0) {
        return Err(Error::invalid("delta", "threshold must be positive"));
    }
    if scales.is_empty() {
        return Err(Error::invalid("scales", "need at least one scale"));
    }
    let mut thresholds = Vec::with_capacity(scales.len());
    for &u in scales {
        thresholds.push((u, delta * phi(u)?, loglog(u)?));
    }

    let analytic: Option<Vec<f64>> = thresholds
        .iter()
        .map(|&(_, a, _)| ln_tail(initial, dim, noise_dim, a))
        .collect();
    let records: Vec<CRecord> = match analytic {
        Some(logs) => thresholds
            .iter()
            .zip(logs)
            .map(|(&(u, _, l), lp)| CRecord {
                u,
                estimate: lp / l,
                method: CMethod::Analytic,
            })
            .collect(),
        None => {
            if mc.samples == 0 {
                return Err(Error::invalid("mc_samples", "Monte Carlo fallback needs samples"));
            }
            let resolution = if needs_path(initial) { mc.resolution } else { 0.5 };
            let grid = GeometricGrid::new(2.0, 1, resolution)?;
            let mut norms = Vec::with_capacity(mc.samples);
            for n in 0..mc.samples {
                let path = WienerPath::sample(&grid, noise_dim, mc.seed.wrapping_add(n as u64))?;
                norms.push(norm(&initial.realize(&path, dim)?));
            }
            thresholds
                .iter()
                .map(|&(u, a, l)| {
                    let hits = norms.iter().filter(|&&x| x > a).count();
                    if hits == 0 {
                        CRecord {
                            u,
                            estimate: (1.0 / mc.samples as f64).ln() / l,
                            method: CMethod::MonteCarloUnderflow,
                        }
                    } else {
                        CRecord {
                            u,
                            estimate: (hits as f64 / mc.samples as f64).ln() / l,
                            method: CMethod::MonteCarlo,
                        }
                    }
                })
                .collect()
        }
    };

    let definite: Vec<f64> = records
        .iter()
        .take_while(|r| r.method != CMethod::MonteCarloUnderflow)
        .map(|r| r.estimate)
        .collect();
    let monotone = definite.windows(2).all(|w| w[1] <= w[0]);
    let decreased = match (definite.first(), definite.last()) {
        (Some(&first), Some(&last)) => last == f64::NEG_INFINITY || (definite.len() >= 2 && last < first),
        _ => false,
    };
    // underflow after definite values is consistent with further decrease
    let pass = monotone && (decreased || (definite.len() < records.len() && !definite.is_empty()));
    Ok(CReport {
        records,
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
    })
}
