//! Coefficient vector fields, the Itô drift correction, the scale-`u`
//! rescaled families and numerical checks of the convergence and
//! initial-condition hypotheses.

mod families;
mod hypotheses;

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;

pub use families::Family;
pub use hypotheses::{
    check_condition_c, check_hypothesis_h, BoxRegion, CMethod, CRecord, CReport, HRecord, HReport, McOptions, Verdict,
};

use crate::error::{Error, Result};
use crate::wiener::{loglog, phi};
#[allow(unused_imports)]
use num_traits::Float;

/// A map `R^d → R^d` with a Jacobian.
///
/// Jacobians are written row-major: `out[r * d + c] = ∂A_r / ∂x_c`.
pub trait VectorField: Debug + Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64], out: &mut [f64]);

    fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        fd_jacobian(self, x, out);
    }

    fn has_analytic_jacobian(&self) -> bool {
        false
    }

    /// Declared `sup_z |A(z)|`; `None` means unbounded.
    fn sup_bound(&self) -> Option<f64> {
        None
    }

    /// The value of a field known to be constant.
    fn constant_value(&self) -> Option<Vec<f64>> {
        None
    }
}

/// Central-difference Jacobian with step `1e-6 · (1 + |x_c|)` per coordinate.
pub fn fd_jacobian<F: VectorField + ?Sized>(field: &F, x: &[f64], out: &mut [f64]) {
    let d = field.dim();
    let mut probe = x.to_vec();
    let mut plus = vec![0.0; d];
    let mut minus = vec![0.0; d];
    for c in 0..d {
        let h = 1e-6 * (1.0 + x[c].abs());
        probe[c] = x[c] + h;
        field.eval(&probe, &mut plus);
        probe[c] = x[c] - h;
        field.eval(&probe, &mut minus);
        probe[c] = x[c];
        for r in 0..d {
            out[r * d + c] = (plus[r] - minus[r]) / (2.0 * h);
        }
    }
}

pub type Field = Arc<dyn VectorField>;

/// Anything with a drift field and `k` diffusion fields on `R^d`.
pub trait FieldSystem: Send + Sync {
    fn dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn drift(&self) -> &dyn VectorField;
    fn diffusion(&self, j: usize) -> &dyn VectorField;

    /// `d × k` matrix `[A_1(x) … A_k(x)]`, row-major.
    fn diffusion_matrix(&self, x: &[f64], out: &mut [f64]) {
        let (d, k) = (self.dim(), self.noise_dim());
        let mut col = vec![0.0; d];
        for j in 0..k {
            self.diffusion(j).eval(x, &mut col);
            for r in 0..d {
                out[r * k + j] = col[r];
            }
        }
    }
}

fn check_fields(dim: usize, drift: &Field, diffusion: &[Field]) -> Result<()> {
    if dim == 0 {
        return Err(Error::invalid("d", "state dimension must be positive"));
    }
    if diffusion.is_empty() {
        return Err(Error::invalid("k", "at least one diffusion field is required"));
    }
    for f in core::iter::once(drift).chain(diffusion) {
        if f.dim() != dim {
            return Err(Error::DimensionMismatch {
                what: "coefficient field",
                expected: dim,
                found: f.dim(),
            });
        }
    }
    Ok(())
}

/// The limit fields `Ã_0 … Ã_k` that drive the skeleton and define the rate function.
#[derive(Debug, Clone)]
pub struct LimitSystem {
    dim: usize,
    drift: Field,
    diffusion: Vec<Field>,
}

impl LimitSystem {
    pub fn new(drift: Field, diffusion: Vec<Field>) -> Result<Self> {
        let dim = drift.dim();
        check_fields(dim, &drift, &diffusion)?;
        Ok(Self { dim, drift, diffusion })
    }

    pub fn from_families(drift: Family, diffusion: Vec<Family>) -> Result<Self> {
        Self::new(
            Arc::new(drift),
            diffusion.into_iter().map(|f| Arc::new(f) as Field).collect(),
        )
    }

    pub fn drift_field(&self) -> &Field {
        &self.drift
    }

    pub fn diffusion_fields(&self) -> &[Field] {
        &self.diffusion
    }
}

impl FieldSystem for LimitSystem {
    fn dim(&self) -> usize {
        self.dim
    }
    fn noise_dim(&self) -> usize {
        self.diffusion.len()
    }
    fn drift(&self) -> &dyn VectorField {
        self.drift.as_ref()
    }
    fn diffusion(&self, j: usize) -> &dyn VectorField {
        self.diffusion[j].as_ref()
    }
}

/// Drift `A_0` and diffusion fields `A_1 … A_k` of the Stratonovich equation,
/// with an optional declared limit system.
#[derive(Debug, Clone)]
pub struct CoefficientSystem {
    dim: usize,
    drift: Field,
    diffusion: Vec<Field>,
    limit: Option<LimitSystem>,
}

impl CoefficientSystem {
    pub fn new(drift: Field, diffusion: Vec<Field>) -> Result<Self> {
        let dim = drift.dim();
        check_fields(dim, &drift, &diffusion)?;
        Ok(Self {
            dim,
            drift,
            diffusion,
            limit: None,
        })
    }

    pub fn from_families(drift: Family, diffusion: Vec<Family>) -> Result<Self> {
        Self::new(
            Arc::new(drift),
            diffusion.into_iter().map(|f| Arc::new(f) as Field).collect(),
        )
    }

    pub fn with_limit(mut self, limit: LimitSystem) -> Result<Self> {
        if limit.dim != self.dim || limit.diffusion.len() != self.diffusion.len() {
            return Err(Error::DimensionMismatch {
                what: "limit system",
                expected: self.dim,
                found: limit.dim,
            });
        }
        self.limit = Some(limit);
        Ok(self)
    }

    pub fn limit(&self) -> Option<&LimitSystem> {
        self.limit.as_ref()
    }

    /// The same fields viewed as a limit system (for families that are scale invariant).
    pub fn as_limit(&self) -> LimitSystem {
        LimitSystem {
            dim: self.dim,
            drift: self.drift.clone(),
            diffusion: self.diffusion.clone(),
        }
    }

    pub fn drift_field(&self) -> &Field {
        &self.drift
    }

    pub fn diffusion_fields(&self) -> &[Field] {
        &self.diffusion
    }
}

impl FieldSystem for CoefficientSystem {
    fn dim(&self) -> usize {
        self.dim
    }
    fn noise_dim(&self) -> usize {
        self.diffusion.len()
    }
    fn drift(&self) -> &dyn VectorField {
        self.drift.as_ref()
    }
    fn diffusion(&self, j: usize) -> &dyn VectorField {
        self.diffusion[j].as_ref()
    }
}

/// `B = A_0 + ½ Σ_j (∂A_j) A_j`, the drift of the equivalent Itô equation.
#[derive(Debug, Clone)]
pub struct ItoDrift {
    drift: Field,
    diffusion: Vec<Field>,
}

impl ItoDrift {
    /// Adds `factor · ½ Σ_j (∂A_j)(x) A_j(x)` to `out`.
    fn add_correction(diffusion: &[Field], x: &[f64], factor: f64, out: &mut [f64]) {
        let d = x.len();
        let mut a = vec![0.0; d];
        let mut jac = vec![0.0; d * d];
        for field in diffusion {
            field.eval(x, &mut a);
            field.jacobian(x, &mut jac);
            for r in 0..d {
                let s: f64 = (0..d).map(|c| jac[r * d + c] * a[c]).sum();
                out[r] += factor * 0.5 * s;
            }
        }
    }
}

impl VectorField for ItoDrift {
    fn dim(&self) -> usize {
        self.drift.dim()
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        self.drift.eval(x, out);
        Self::add_correction(&self.diffusion, x, 1.0, out);
    }
}

pub fn ito_drift(sys: &CoefficientSystem) -> ItoDrift {
    ItoDrift {
        drift: sys.drift.clone(),
        diffusion: sys.diffusion.clone(),
    }
}

/// `z ↦ factor · inner(scale · z)`.
#[derive(Debug, Clone)]
pub struct ScaledArgument {
    inner: Field,
    scale: f64,
    factor: f64,
}

impl ScaledArgument {
    pub fn new(inner: Field, scale: f64, factor: f64) -> Self {
        Self { inner, scale, factor }
    }

    fn scaled_point(&self, z: &[f64]) -> Vec<f64> {
        z.iter().map(|v| v * self.scale).collect()
    }
}

impl VectorField for ScaledArgument {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, z: &[f64], out: &mut [f64]) {
        self.inner.eval(&self.scaled_point(z), out);
        if self.factor != 1.0 {
            out.iter_mut().for_each(|o| *o *= self.factor);
        }
    }

    fn jacobian(&self, z: &[f64], out: &mut [f64]) {
        if self.inner.has_analytic_jacobian() {
            self.inner.jacobian(&self.scaled_point(z), out);
            let g = self.factor * self.scale;
            out.iter_mut().for_each(|o| *o *= g);
        } else {
            fd_jacobian(self, z, out);
        }
    }

    fn has_analytic_jacobian(&self) -> bool {
        self.inner.has_analytic_jacobian()
    }

    fn sup_bound(&self) -> Option<f64> {
        self.inner.sup_bound().map(|b| b * self.factor.abs())
    }

    fn constant_value(&self) -> Option<Vec<f64>> {
        self.inner
            .constant_value()
            .map(|v| v.into_iter().map(|x| x * self.factor).collect())
    }
}

/// The rescaled drift written as `(u/φ) [B(φz) − ½ Σ_j Σ_l (A_j)^l ∂_l A_j(φz)]`.
#[derive(Debug, Clone)]
pub struct BracketDrift {
    ito: ItoDrift,
    scale: f64,
    factor: f64,
}

impl VectorField for BracketDrift {
    fn dim(&self) -> usize {
        self.ito.dim()
    }

    fn eval(&self, z: &[f64], out: &mut [f64]) {
        let x: Vec<f64> = z.iter().map(|v| v * self.scale).collect();
        self.ito.eval(&x, out);
        ItoDrift::add_correction(&self.ito.diffusion, &x, -1.0, out);
        out.iter_mut().for_each(|o| *o *= self.factor);
    }
}

/// Coefficients of the equation solved by `ξ^u`: `A_j^u(z) = A_j(φ(u) z)`,
/// `A_0^u(z) = (u/φ(u)) A_0(φ(u) z)`, noise intensity `1/sqrt(log log u)`.
#[derive(Debug, Clone)]
pub struct RescaledSystem {
    u: f64,
    phi: f64,
    loglog: f64,
    drift: Field,
    bracket_drift: Field,
    diffusion: Vec<Field>,
}

impl RescaledSystem {
    pub fn scale(&self) -> f64 {
        self.u
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn loglog(&self) -> f64 {
        self.loglog
    }

    /// `1 / sqrt(log log u)`.
    pub fn noise_intensity(&self) -> f64 {
        1.0 / self.loglog.sqrt()
    }

    /// `A_0^u` in the simplified form `(u/φ) A_0(φ z)`.
    pub fn drift_field(&self) -> &Field {
        &self.drift
    }

    /// `A_0^u` in the bracket form built from the Itô drift.
    pub fn bracket_drift(&self) -> &Field {
        &self.bracket_drift
    }

    pub fn diffusion_fields(&self) -> &[Field] {
        &self.diffusion
    }
}

impl FieldSystem for RescaledSystem {
    fn dim(&self) -> usize {
        self.drift.dim()
    }
    fn noise_dim(&self) -> usize {
        self.diffusion.len()
    }
    fn drift(&self) -> &dyn VectorField {
        self.drift.as_ref()
    }
    fn diffusion(&self, j: usize) -> &dyn VectorField {
        self.diffusion[j].as_ref()
    }
}

pub fn rescale(sys: &CoefficientSystem, u: f64) -> Result<RescaledSystem> {
    let p = phi(u)?;
    let l = loglog(u)?;
    let factor = u / p;
    Ok(RescaledSystem {
        u,
        phi: p,
        loglog: l,
        drift: Arc::new(ScaledArgument::new(sys.drift.clone(), p, factor)),
        bracket_drift: Arc::new(BracketDrift {
            ito: ito_drift(sys),
            scale: p,
            factor,
        }),
        diffusion: sys
            .diffusion
            .iter()
            .map(|f| Arc::new(ScaledArgument::new(f.clone(), p, 1.0)) as Field)
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn scalar(f: Family) -> Field {
        Arc::new(f)
    }

    fn eval1(f: &dyn VectorField, x: f64) -> f64 {
        let mut o = [0.0];
        f.eval(&[x], &mut o);
        o[0]
    }

    #[test]
    fn ito_drift_examples() {
        let c = CoefficientSystem::from_families(Family::Zero { dim: 1 }, vec![Family::Constant { value: vec![2.5] }])
            .unwrap();
        assert_eq!(eval1(&ito_drift(&c), 0.7), 0.0);

        let s =
            CoefficientSystem::from_families(Family::Zero { dim: 1 }, vec![Family::Sine { amp: vec![1.0] }]).unwrap();
        for x in [-2.0, 0.3, 1.1] {
            assert_relative_eq!(eval1(&ito_drift(&s), x), 0.5 * x.sin() * x.cos(), epsilon = 1e-14);
        }

        let l = CoefficientSystem::from_families(
            Family::Zero { dim: 1 },
            vec![Family::Linear {
                dim: 1,
                matrix: vec![1.0],
            }],
        )
        .unwrap();
        assert_relative_eq!(eval1(&ito_drift(&l), 3.0), 1.5, epsilon = 1e-14);
    }

    #[test]
    fn ito_drift_with_constant_diffusion_is_the_drift() {
        let sys = CoefficientSystem::from_families(
            Family::Sine { amp: vec![0.4, -1.2] },
            vec![
                Family::Constant { value: vec![1.0, 2.0] },
                Family::Constant { value: vec![0.0, -3.0] },
            ],
        )
        .unwrap();
        let b = ito_drift(&sys);
        let x = [0.3, -1.7];
        let (mut got, mut want) = ([0.0; 2], [0.0; 2]);
        b.eval(&x, &mut got);
        sys.drift().eval(&x, &mut want);
        assert_eq!(got, want);
    }

    #[test]
    fn rescale_examples() {
        let sys = CoefficientSystem::from_families(
            Family::Zero { dim: 1 },
            vec![Family::Constant { value: vec![1.3] }, Family::Tanh { amp: vec![1.0] }],
        )
        .unwrap();
        for u in [3.0, 100.0, 1e9] {
            let r = rescale(&sys, u).unwrap();
            assert_eq!(eval1(r.diffusion(0), 0.4), 1.3);
            assert_eq!(eval1(r.diffusion(1), 0.0), 0.0);
            assert_eq!(eval1(r.drift(), 0.4), 0.0);
            assert_eq!(eval1(r.bracket_drift().as_ref(), 0.4), 0.0);
        }
        assert!(matches!(rescale(&sys, 2.0), Err(Error::ScaleOutOfDomain { .. })));
    }

    #[test]
    fn fd_jacobian_of_linear_field() {
        let m = vec![1.0, -2.0, 0.5, 3.0, 0.0, 1.0, -1.5, 2.5, 4.0];
        let f = Family::linear(3, m.clone()).unwrap();
        let mut j = [0.0; 9];
        fd_jacobian(&f, &[10.0, -3.0, 0.2], &mut j);
        for (a, b) in j.iter().zip(&m) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn scaled_argument_jacobian_chain_rule() {
        let f = ScaledArgument::new(scalar(Family::Tanh { amp: vec![2.0] }), 3.0, 0.5);
        let mut a = [0.0];
        f.jacobian(&[0.1], &mut a);
        let t = (0.3f64).tanh();
        assert_relative_eq!(a[0], 0.5 * 3.0 * 2.0 * (1.0 - t * t), epsilon = 1e-14);
    }

    #[test]
    fn unknown_family_is_rejected() {
        assert!(Family::from_name("cosine", 1, &[1.0]).is_err());
        assert!(Family::from_name("constant", 2, &[1.0, 2.0, 3.0]).is_err());
        assert_eq!(
            Family::from_name("tanh", 2, &[1.5]).unwrap(),
            Family::Tanh { amp: vec![1.5, 1.5] }
        );
    }

    fn arb_family(d: usize) -> impl Strategy<Value = Family> {
        let v = proptest::collection::vec(-2.0f64..2.0, d);
        prop_oneof![
            v.clone().prop_map(|value| Family::Constant { value }),
            v.clone().prop_map(|amp| Family::Sine { amp }),
            v.clone().prop_map(|amp| Family::Tanh { amp }),
            v.clone().prop_map(|direction| Family::RadialSaturating { direction }),
            proptest::collection::vec(-1.0f64..1.0, d * d).prop_map(move |m| Family::Linear { dim: d, matrix: m }),
        ]
    }

    proptest! {
        #[test]
        fn bracket_form_matches_simplified_drift(
            drift in arb_family(2),
            diff in proptest::collection::vec(arb_family(2), 1..3),
            log_u in 1.2f64..12.0,
            z in proptest::collection::vec(-3.0f64..3.0, 2),
        ) {
            let sys = CoefficientSystem::from_families(drift, diff).unwrap();
            let u = libm::exp(log_u);
            let r = rescale(&sys, u).unwrap();
            let (mut a, mut b) = ([0.0; 2], [0.0; 2]);
            r.drift().eval(&z, &mut a);
            r.bracket_drift().eval(&z, &mut b);
            for l in 0..2 {
                prop_assert!((a[l] - b[l]).abs() <= 1e-8 * (1.0 + a[l].abs()), "{} vs {}", a[l], b[l]);
            }
        }

        #[test]
        fn analytic_jacobians_agree_with_finite_differences(
            f in arb_family(2),
            x in proptest::collection::vec(-3.0f64..3.0, 2),
        ) {
            prop_assume!(x.iter().map(|v| v * v).sum::<f64>() > 1e-4);
            let (mut an, mut fd) = ([0.0; 4], [0.0; 4]);
            f.jacobian(&x, &mut an);
            fd_jacobian(&f, &x, &mut fd);
            for (a, b) in an.iter().zip(&fd) {
                prop_assert!((a - b).abs() <= 1e-5 * (1.0 + a.abs()));
            }
        }
    }
}
