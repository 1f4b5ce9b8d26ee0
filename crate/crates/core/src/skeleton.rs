//! The controlled skeleton ODE `ġ = Σ_j Ã_j(g) ḟ^j + Ã_0(g)` and the
//! Cameron–Martin energy of a control.
//!
//! Controls are piecewise constant in `ḟ` on uniform cells of `[0, 1]`; the
//! skeleton is integrated by classical RK4 with a fixed number of substeps
//! per cell. [`SkeletonWorkspace`] keeps the stage states of the last solve
//! so the discrete adjoint can return exact gradients of any function of the
//! fine-grid path.

use alloc::vec;
use alloc::vec::Vec;

use crate::coefficients::{FieldSystem, VectorField};
use crate::error::{Error, Result};
use crate::flow::{norm, SamplePath, BLOW_UP_GUARD};
#[allow(unused_imports)]
use num_traits::Float;

pub const DEFAULT_SUBSTEPS: usize = 4;

/// Piecewise-constant derivative `ḟ` of a Cameron–Martin path with `f(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    cells: usize,
    noise_dim: usize,
    values: Vec<f64>,
}

impl Control {
    pub fn new(cells: usize, noise_dim: usize, values: Vec<f64>) -> Result<Self> {
        if cells == 0 || noise_dim == 0 {
            return Err(Error::invalid(
                "control",
                "need at least one cell and one noise coordinate",
            ));
        }
        if values.len() != cells * noise_dim {
            return Err(Error::DimensionMismatch {
                what: "control values",
                expected: cells * noise_dim,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("control", "values must be finite"));
        }
        Ok(Self {
            cells,
            noise_dim,
            values,
        })
    }

    pub fn zeros(cells: usize, noise_dim: usize) -> Self {
        Self {
            cells,
            noise_dim,
            values: vec![0.0; cells * noise_dim],
        }
    }

    /// The same derivative `rate` on every cell.
    pub fn constant(cells: usize, rate: &[f64]) -> Self {
        let mut values = Vec::with_capacity(cells * rate.len());
        for _ in 0..cells {
            values.extend_from_slice(rate);
        }
        Self {
            cells,
            noise_dim: rate.len(),
            values,
        }
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cell(&self, i: usize) -> &[f64] {
        &self.values[i * self.noise_dim..(i + 1) * self.noise_dim]
    }

    pub fn energy(&self) -> f64 {
        energy(self)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    /// The path `f` itself, `f(t) = ∫_0^t ḟ`, on the cell boundaries.
    pub fn primitive(&self) -> SamplePath {
        let k = self.noise_dim;
        let mut values = vec![0.0; (self.cells + 1) * k];
        for i in 0..self.cells {
            for j in 0..k {
                values[(i + 1) * k + j] = values[i * k + j] + self.values[i * k + j] / self.cells as f64;
            }
        }
        SamplePath::new(k, values).expect("at least one cell")
    }
}

/// `½ ∫_0^1 |ḟ|²`, exact for piecewise-constant `ḟ`.
pub fn energy(control: &Control) -> f64 {
    0.5 * control.values.iter().map(|v| v * v).sum::<f64>() / control.cells as f64
}

/// RK4 solution of the skeleton from `x0`, returned on `cells · substeps` uniform cells.
pub fn integrate_skeleton<S: FieldSystem + ?Sized>(
    fields: &S,
    control: &Control,
    x0: &[f64],
    substeps: usize,
) -> Result<SamplePath> {
    let mut ws = SkeletonWorkspace::new(fields.dim(), fields.noise_dim(), control.cells(), substeps)?;
    ws.forward(fields, control, x0)?;
    Ok(ws.path())
}

/// Buffers for repeated forward/adjoint skeleton solves on a fixed grid.
#[derive(Debug, Clone)]
pub struct SkeletonWorkspace {
    dim: usize,
    noise_dim: usize,
    cells: usize,
    substeps: usize,
    /// `(steps + 1) × d` states on the fine grid.
    states: Vec<f64>,
    /// `steps × 4 × d` RK4 stage arguments.
    stages: Vec<f64>,
    rhs: [Vec<f64>; 4],
    /// Values of the constant fields, drift first, from the last forward solve.
    constants: Vec<Option<Vec<f64>>>,
    field_buf: Vec<f64>,
    jac_buf: Vec<f64>,
    tmp: Vec<f64>,
}

impl SkeletonWorkspace {
    pub fn new(dim: usize, noise_dim: usize, cells: usize, substeps: usize) -> Result<Self> {
        if substeps == 0 || cells == 0 {
            return Err(Error::invalid("substeps", "need at least one cell and one substep"));
        }
        let steps = cells * substeps;
        Ok(Self {
            dim,
            noise_dim,
            cells,
            substeps,
            states: vec![0.0; (steps + 1) * dim],
            stages: vec![0.0; steps * 4 * dim],
            rhs: [vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]],
            constants: Vec::new(),
            field_buf: vec![0.0; dim],
            jac_buf: vec![0.0; dim * dim],
            tmp: vec![0.0; dim],
        })
    }

    pub fn steps(&self) -> usize {
        self.cells * self.substeps
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn path(&self) -> SamplePath {
        SamplePath::new(self.dim, self.states.clone()).expect("workspace has at least one step")
    }

    pub fn forward<S: FieldSystem + ?Sized>(&mut self, fields: &S, control: &Control, x0: &[f64]) -> Result<()> {
        let d = self.dim;
        if x0.len() != d || fields.dim() != d {
            return Err(Error::DimensionMismatch {
                what: "skeleton initial point",
                expected: d,
                found: x0.len(),
            });
        }
        if control.cells() != self.cells
            || control.noise_dim() != self.noise_dim
            || fields.noise_dim() != self.noise_dim
        {
            return Err(Error::DimensionMismatch {
                what: "skeleton control grid",
                expected: self.cells,
                found: control.cells(),
            });
        }
        let h = 1.0 / self.steps() as f64;
        self.constants.clear();
        self.constants.push(fields.drift().constant_value());
        for j in 0..self.noise_dim {
            self.constants.push(fields.diffusion(j).constant_value());
        }
        self.states[..d].copy_from_slice(x0);
        if self.affine() {
            return self.forward_affine(control, h);
        }
        for n in 0..self.steps() {
            let u = control.cell(n / self.substeps);
            let (head, tail) = self.states.split_at_mut((n + 1) * d);
            let y = &head[n * d..];
            let stage = &mut self.stages[n * 4 * d..(n + 1) * 4 * d];
            stage[..d].copy_from_slice(y);
            for s in 0..4 {
                if s > 0 {
                    let c = if s == 3 { h } else { 0.5 * h };
                    for l in 0..d {
                        stage[s * d + l] = y[l] + c * self.rhs[s - 1][l];
                    }
                }
                let arg = &stage[s * d..(s + 1) * d];
                rhs(fields, &self.constants, u, arg, &mut self.rhs[s], &mut self.field_buf);
            }
            let next = &mut tail[..d];
            for l in 0..d {
                next[l] =
                    y[l] + h / 6.0 * (self.rhs[0][l] + 2.0 * self.rhs[1][l] + 2.0 * self.rhs[2][l] + self.rhs[3][l]);
            }
            check_state(next, (n + 1) as f64 * h)?;
        }
        Ok(())
    }

    /// All fields constant: the right-hand side is constant on each cell and
    /// RK4 reduces to `y + h·rhs`, with no stage states needed by the adjoint.
    fn affine(&self) -> bool {
        self.constants.iter().all(Option::is_some)
    }

    fn forward_affine(&mut self, control: &Control, h: f64) -> Result<()> {
        let (d, k) = (self.dim, self.noise_dim);
        let rate = &mut self.rhs[0];
        for cell in 0..self.cells {
            let u = control.cell(cell);
            rate.copy_from_slice(self.constants[0].as_deref().unwrap_or_default());
            for j in 0..k {
                let a = self.constants[j + 1].as_deref().unwrap_or_default();
                for l in 0..d {
                    rate[l] += u[j] * a[l];
                }
            }
            for n in cell * self.substeps..(cell + 1) * self.substeps {
                for l in 0..d {
                    self.states[(n + 1) * d + l] = self.states[n * d + l] + h * rate[l];
                }
                check_state(&self.states[(n + 1) * d..(n + 2) * d], (n + 1) as f64 * h)?;
            }
        }
        Ok(())
    }

    /// Gradient of `J(states)` with respect to the control values, given
    /// `dJ/d(states)` on the fine grid. Requires a preceding [`forward`](Self::forward).
    pub fn adjoint<S: FieldSystem + ?Sized>(&mut self, fields: &S, control: &Control, dj: &[f64], grad: &mut [f64]) {
        let (d, k) = (self.dim, self.noise_dim);
        let h = 1.0 / self.steps() as f64;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut lambda = dj[self.steps() * d..].to_vec();
        if self.affine() {
            for n in (0..self.steps()).rev() {
                let cell = n / self.substeps;
                for j in 0..k {
                    let a = self.constants[j + 1].as_deref().unwrap_or_default();
                    grad[cell * k + j] += h * a.iter().zip(&lambda).map(|(a, b)| a * b).sum::<f64>();
                }
                for l in 0..d {
                    lambda[l] += dj[n * d + l];
                }
            }
            return;
        }
        let mut kbar = [vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]];
        let mut ybar = vec![0.0; d];
        for n in (0..self.steps()).rev() {
            let cell = n / self.substeps;
            let u = control.cell(cell);
            let weights = [h / 6.0, h / 3.0, h / 3.0, h / 6.0];
            for s in 0..4 {
                for l in 0..d {
                    kbar[s][l] = weights[s] * lambda[l];
                }
            }
            ybar.copy_from_slice(&lambda);
            for s in (0..4).rev() {
                let arg = &self.stages[(n * 4 + s) * d..(n * 4 + s + 1) * d];
                // t = F_y(arg)^T kbar[s], and the control part A_j(arg) · kbar[s]
                self.tmp.iter_mut().for_each(|t| *t = 0.0);
                if self.constants[0].is_none() {
                    fields.drift().jacobian(arg, &mut self.jac_buf);
                    accumulate_transpose(&self.jac_buf, &kbar[s], 1.0, &mut self.tmp);
                }
                for j in 0..k {
                    let field = fields.diffusion(j);
                    eval_cached(field, &self.constants[j + 1], arg, &mut self.field_buf);
                    grad[cell * k + j] += self.field_buf.iter().zip(&kbar[s]).map(|(a, b)| a * b).sum::<f64>();
                    if u[j] != 0.0 && self.constants[j + 1].is_none() {
                        field.jacobian(arg, &mut self.jac_buf);
                        accumulate_transpose(&self.jac_buf, &kbar[s], u[j], &mut self.tmp);
                    }
                }
                for l in 0..d {
                    ybar[l] += self.tmp[l];
                }
                if s > 0 {
                    let c = if s == 3 { h } else { 0.5 * h };
                    for l in 0..d {
                        kbar[s - 1][l] += c * self.tmp[l];
                    }
                }
            }
            for l in 0..d {
                lambda[l] = ybar[l] + dj[n * d + l];
            }
        }
    }
}

fn eval_cached(field: &dyn VectorField, constant: &Option<Vec<f64>>, y: &[f64], out: &mut [f64]) {
    match constant {
        Some(v) => out.copy_from_slice(v),
        None => field.eval(y, out),
    }
}

/// `out = Ã_0(y) + Σ_j u_j Ã_j(y)`.
fn rhs<S: FieldSystem + ?Sized>(
    fields: &S,
    constants: &[Option<Vec<f64>>],
    u: &[f64],
    y: &[f64],
    out: &mut [f64],
    buf: &mut [f64],
) {
    eval_cached(fields.drift(), &constants[0], y, out);
    for (j, &uj) in u.iter().enumerate() {
        if uj != 0.0 {
            eval_cached(fields.diffusion(j), &constants[j + 1], y, buf);
            for l in 0..out.len() {
                out[l] += uj * buf[l];
            }
        }
    }
}

fn check_state(state: &[f64], time: f64) -> Result<()> {
    if !state.iter().all(|v| v.is_finite()) || norm(state) > BLOW_UP_GUARD {
        return Err(Error::BlowUp { time, scale: None });
    }
    Ok(())
}

/// `out += factor · Jᵀ v` for a row-major square `J`.
fn accumulate_transpose(jac: &[f64], v: &[f64], factor: f64, out: &mut [f64]) {
    let d = v.len();
    for c in 0..d {
        let mut s = 0.0;
        for r in 0..d {
            s += jac[r * d + c] * v[r];
        }
        out[c] += factor * s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{Family, LimitSystem};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn scalar(drift: Family, diff: Family) -> LimitSystem {
        LimitSystem::from_families(drift, alloc::vec![diff]).unwrap()
    }

    #[test]
    fn zero_control_without_drift_is_constant() {
        let sys = scalar(Family::Zero { dim: 1 }, Family::Sine { amp: alloc::vec![1.0] });
        let g = integrate_skeleton(&sys, &Control::zeros(8, 1), &[0.4], 4).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.4));
    }

    #[test]
    fn constant_diffusion_integrates_the_control() {
        let sys = scalar(
            Family::Zero { dim: 1 },
            Family::Constant {
                value: alloc::vec![1.0],
            },
        );
        let g = integrate_skeleton(&sys, &Control::constant(16, &[2f64.sqrt()]), &[0.0], 4).unwrap();
        for j in 0..=g.cells() {
            assert_relative_eq!(g.point(j)[0], 2f64.sqrt() * g.time(j), epsilon = 1e-14);
        }
    }

    #[test]
    fn linear_diffusion_gives_exponential() {
        let sys = scalar(Family::Zero { dim: 1 }, Family::linear(1, alloc::vec![1.0]).unwrap());
        let a = 1.3;
        let g = integrate_skeleton(&sys, &Control::constant(64, &[a]), &[1.0], 4).unwrap();
        for j in 0..=g.cells() {
            let exact = (a * g.time(j)).exp();
            assert!((g.point(j)[0] - exact).abs() <= 1e-6 * exact);
        }
    }

    #[test]
    fn energy_examples() {
        assert_eq!(energy(&Control::zeros(10, 2)), 0.0);
        assert_relative_eq!(energy(&Control::constant(7, &[2f64.sqrt()])), 1.0, epsilon = 1e-15);
        let half = Control::new(4, 1, alloc::vec![1.0, 1.0, -1.0, -1.0]).unwrap();
        assert_relative_eq!(energy(&half), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn refinement_order_is_at_least_three() {
        let sys = scalar(
            Family::Sine { amp: alloc::vec![0.5] },
            Family::Tanh { amp: alloc::vec![1.0] },
        );
        let c = Control::new(8, 1, (0..8).map(|i| (3.0 * i as f64 / 8.0).cos() + 0.5).collect()).unwrap();
        let end = |subs: usize| integrate_skeleton(&sys, &c, &[0.2], subs).unwrap().end()[0];
        let reference = end(256);
        let (e1, e2) = ((end(2) - reference).abs(), (end(4) - reference).abs());
        assert!(e1 / e2 >= 8.0, "order too low: {e1} / {e2}");
    }

    #[test]
    fn doubling_control_doubles_displacement() {
        let sys = scalar(
            Family::Zero { dim: 1 },
            Family::Constant {
                value: alloc::vec![0.7],
            },
        );
        let c = Control::new(6, 1, alloc::vec![0.1, -2.0, 0.3, 1.0, 4.0, -0.5]).unwrap();
        let g1 = integrate_skeleton(&sys, &c, &[1.0], 4).unwrap();
        let g2 = integrate_skeleton(&sys, &c.scaled(2.0), &[1.0], 4).unwrap();
        for j in 0..=g1.cells() {
            assert_relative_eq!(g2.point(j)[0] - 1.0, 2.0 * (g1.point(j)[0] - 1.0), epsilon = 1e-13);
        }
    }

    #[test]
    fn adjoint_matches_finite_differences_for_linear_functional() {
        let sys = LimitSystem::from_families(
            Family::Sine {
                amp: alloc::vec![0.3, -0.2],
            },
            alloc::vec![
                Family::Tanh {
                    amp: alloc::vec![1.0, 0.5]
                },
                Family::RadialSaturating {
                    direction: alloc::vec![0.4, 1.0]
                }
            ],
        )
        .unwrap();
        let c = Control::new(5, 2, (0..10).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.4).collect()).unwrap();
        let x0 = [0.3, -0.1];
        let mut ws = SkeletonWorkspace::new(2, 2, 5, 4).unwrap();
        let n = ws.steps() + 1;
        let weights: Vec<f64> = (0..2 * n).map(|i| ((i * 13 % 7) as f64 - 3.0) / 7.0).collect();
        let objective = |ws: &mut SkeletonWorkspace, c: &Control| {
            ws.forward(&sys, c, &x0).unwrap();
            ws.states().iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>()
        };
        objective(&mut ws, &c);
        let mut grad = alloc::vec![0.0; 10];
        ws.adjoint(&sys, &c, &weights, &mut grad);
        for i in 0..10 {
            let h = 1e-6;
            let mut plus = c.values().to_vec();
            plus[i] += h;
            let mut minus = c.values().to_vec();
            minus[i] -= h;
            let fp = objective(&mut ws, &Control::new(5, 2, plus).unwrap());
            let fm = objective(&mut ws, &Control::new(5, 2, minus).unwrap());
            let fd = (fp - fm) / (2.0 * h);
            assert!(
                (fd - grad[i]).abs() <= 1e-6 * (1.0 + fd.abs()),
                "{i}: {fd} vs {}",
                grad[i]
            );
        }
    }

    #[test]
    fn primitive_integrates_derivative() {
        let c = Control::new(4, 1, alloc::vec![4.0, 0.0, -4.0, 8.0]).unwrap();
        let f = c.primitive();
        assert_eq!(f.values(), &[0.0, 1.0, 1.0, 0.0, 2.0]);
    }

    proptest! {
        #[test]
        fn energy_is_invariant_under_signs_and_permutations(
            vals in proptest::collection::vec(-5.0f64..5.0, 1..40),
            seed in 0u64..1000,
        ) {
            let n = vals.len();
            let base = energy(&Control::new(n, 1, vals.clone()).unwrap());
            let mut perm: Vec<f64> = vals.iter().enumerate().map(|(i, v)| if (seed >> (i % 60)) & 1 == 1 { -v } else { *v }).collect();
            perm.rotate_left(seed as usize % n);
            perm.reverse();
            let e = energy(&Control::new(n, 1, perm).unwrap());
            prop_assert!((e - base).abs() <= 1e-12 * (1.0 + base));
            prop_assert!(base >= 0.0);
        }
    }
}
