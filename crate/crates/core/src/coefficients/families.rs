//! The registry of named coefficient families.
//!
//! Every family acts componentwise or through a fixed direction so that the
//! Jacobian has a closed form. `Sign` is not differentiable at the origin and
//! only serves as a (claimed) limit field.

use alloc::vec::Vec;

use super::VectorField;
use crate::error::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// `A(x) = 0`.
    Zero { dim: usize },
    /// `A(x) = value`.
    Constant { value: Vec<f64> },
    /// `A(x) = M x` with `M` row-major.
    Linear { dim: usize, matrix: Vec<f64> },
    /// `A(x)_l = amp_l · sin(x_l)`.
    Sine { amp: Vec<f64> },
    /// `A(x)_l = amp_l · tanh(x_l)`.
    Tanh { amp: Vec<f64> },
    /// `A(x)_l = amp_l · sign(x_l)` with `sign(0) = +1`.
    Sign { amp: Vec<f64> },
    /// `A(x) = v · |x| / (1 + |x|)`.
    RadialSaturating { direction: Vec<f64> },
}

impl Family {
    pub fn linear(dim: usize, matrix: Vec<f64>) -> Result<Self> {
        if matrix.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                what: "linear family matrix",
                expected: dim * dim,
                found: matrix.len(),
            });
        }
        Ok(Family::Linear { dim, matrix })
    }

    /// Builds a family from its registry name and flat parameter list.
    ///
    /// `zero` ignores parameters; `linear` takes a row-major `d × d` matrix;
    /// all others take a `d`-vector (a single value is broadcast).
    pub fn from_name(name: &str, dim: usize, params: &[f64]) -> Result<Self> {
        let vector = |params: &[f64]| -> Result<Vec<f64>> {
            match params.len() {
                1 => Ok(alloc::vec![params[0]; dim]),
                n if n == dim => Ok(params.to_vec()),
                n => Err(Error::DimensionMismatch {
                    what: "family parameters",
                    expected: dim,
                    found: n,
                }),
            }
        };
        Ok(match name {
            "zero" => Family::Zero { dim },
            "constant" => Family::Constant { value: vector(params)? },
            "linear" => {
                if params.len() == 1 {
                    let mut m = alloc::vec![0.0; dim * dim];
                    for i in 0..dim {
                        m[i * dim + i] = params[0];
                    }
                    Family::Linear { dim, matrix: m }
                } else {
                    Family::linear(dim, params.to_vec())?
                }
            }
            "sine" => Family::Sine { amp: vector(params)? },
            "tanh" => Family::Tanh { amp: vector(params)? },
            "sign" => Family::Sign { amp: vector(params)? },
            "radial_saturating" => Family::RadialSaturating {
                direction: vector(params)?,
            },
            other => {
                return Err(Error::invalid(
                    "family",
                    alloc::format!(
                        "unknown family `{other}` (known: zero, constant, linear, sine, tanh, sign, radial_saturating)"
                    ),
                ))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Zero { .. } => "zero",
            Family::Constant { .. } => "constant",
            Family::Linear { .. } => "linear",
            Family::Sine { .. } => "sine",
            Family::Tanh { .. } => "tanh",
            Family::Sign { .. } => "sign",
            Family::RadialSaturating { .. } => "radial_saturating",
        }
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl VectorField for Family {
    fn dim(&self) -> usize {
        match self {
            Family::Zero { dim } | Family::Linear { dim, .. } => *dim,
            Family::Constant { value } => value.len(),
            Family::Sine { amp } | Family::Tanh { amp } | Family::Sign { amp } => amp.len(),
            Family::RadialSaturating { direction } => direction.len(),
        }
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Family::Zero { .. } => out.iter_mut().for_each(|o| *o = 0.0),
            Family::Constant { value } => out.copy_from_slice(value),
            Family::Linear { dim, matrix } => {
                for r in 0..*dim {
                    out[r] = (0..*dim).map(|c| matrix[r * dim + c] * x[c]).sum();
                }
            }
            Family::Sine { amp } => {
                for l in 0..amp.len() {
                    out[l] = amp[l] * x[l].sin();
                }
            }
            Family::Tanh { amp } => {
                for l in 0..amp.len() {
                    out[l] = amp[l] * x[l].tanh();
                }
            }
            Family::Sign { amp } => {
                for l in 0..amp.len() {
                    out[l] = if x[l] >= 0.0 { amp[l] } else { -amp[l] };
                }
            }
            Family::RadialSaturating { direction } => {
                let r = norm(x);
                let s = r / (1.0 + r);
                for l in 0..direction.len() {
                    out[l] = direction[l] * s;
                }
            }
        }
    }

    fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        out.iter_mut().for_each(|o| *o = 0.0);
        match self {
            Family::Zero { .. } | Family::Constant { .. } | Family::Sign { .. } => {}
            Family::Linear { matrix, .. } => out.copy_from_slice(matrix),
            Family::Sine { amp } => {
                for l in 0..d {
                    out[l * d + l] = amp[l] * x[l].cos();
                }
            }
            Family::Tanh { amp } => {
                for l in 0..d {
                    let t = x[l].tanh();
                    out[l * d + l] = amp[l] * (1.0 - t * t);
                }
            }
            Family::RadialSaturating { direction } => {
                // v ⊗ x / (|x| (1 + |x|)^2); set to zero at the kink x = 0.
                let r = norm(x);
                if r > 0.0 {
                    let g = 1.0 / (r * (1.0 + r) * (1.0 + r));
                    for row in 0..d {
                        for col in 0..d {
                            out[row * d + col] = direction[row] * x[col] * g;
                        }
                    }
                }
            }
        }
    }

    fn has_analytic_jacobian(&self) -> bool {
        true
    }

    fn sup_bound(&self) -> Option<f64> {
        match self {
            Family::Zero { .. } => Some(0.0),
            Family::Constant { value } => Some(norm(value)),
            Family::Linear { matrix, .. } => {
                if matrix.iter().all(|&m| m == 0.0) {
                    Some(0.0)
                } else {
                    None
                }
            }
            Family::Sine { amp } | Family::Tanh { amp } | Family::Sign { amp } => Some(norm(amp)),
            Family::RadialSaturating { direction } => Some(norm(direction)),
        }
    }

    fn constant_value(&self) -> Option<Vec<f64>> {
        match self {
            Family::Zero { dim } => Some(alloc::vec![0.0; *dim]),
            Family::Constant { value } => Some(value.clone()),
            Family::Linear { dim, matrix } if matrix.iter().all(|&m| m == 0.0) => Some(alloc::vec![0.0; *dim]),
            _ => None,
        }
    }
}
