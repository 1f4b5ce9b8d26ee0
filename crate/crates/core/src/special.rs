//! Log-tail probabilities that stay finite far beyond f64 underflow.

use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

/// `log Q(s, x)` where `Q` is the regularized upper incomplete gamma function.
pub fn ln_gamma_q(s: f64, x: f64) -> f64 {
    debug_assert!(s > 0.0);
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return f64::NEG_INFINITY;
    }
    let ln_prefix = -x + s * x.ln() - libm::lgamma(s);
    if x < s + 1.0 {
        // series for P, then Q = 1 - P
        let mut term = 1.0 / s;
        let mut sum = term;
        let mut a = s;
        for _ in 0..500 {
            a += 1.0;
            term *= x / a;
            sum += term;
            if term.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        let p = (ln_prefix + sum.ln()).exp();
        (1.0 - p).max(f64::MIN_POSITIVE).ln()
    } else {
        // modified Lentz continued fraction for Γ(s, x) e^x x^{-s}
        let tiny = 1e-300;
        let mut b = x + 1.0 - s;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -(i as f64) * (i as f64 - s);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        ln_prefix + h.ln()
    }
}

/// `log P(|Z| > a)` for `Z` standard Gaussian in `R^d`.
pub fn ln_gaussian_norm_tail(d: usize, a: f64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    ln_gamma_q(d as f64 / 2.0, a * a / 2.0)
}

/// `log P(|C| > a)` for a standard Cauchy variable.
pub fn ln_cauchy_tail(a: f64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    (2.0 / PI).ln() + (1.0 / a).atan().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gaussian_tail_matches_erfc() {
        for a in [0.1, 0.5, 1.0, 2.0, 5.0, 20.0] {
            assert_relative_eq!(
                ln_gaussian_norm_tail(1, a),
                libm::erfc(a / 2f64.sqrt()).ln(),
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn gaussian_tail_asymptotics_far_out() {
        // Mills ratio: log P(|Z| > a) = -a²/2 - log(a sqrt(π/2)) + O(a^-2)
        for a in [50.0, 500.0, 5000.0] {
            let mills = -a * a / 2.0 - (a * (PI / 2.0).sqrt()).ln();
            assert!((ln_gaussian_norm_tail(1, a) - mills).abs() < 2.0 / (a * a), "a = {a}");
        }
    }

    #[test]
    fn chi_square_two_dims_is_exponential() {
        // |Z|² ~ Exp(1/2) in two dimensions
        for a in [0.3, 1.0, 3.0, 30.0] {
            assert_relative_eq!(ln_gaussian_norm_tail(2, a), -a * a / 2.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn cauchy_tail() {
        assert_relative_eq!(ln_cauchy_tail(1.0), 0.5f64.ln(), epsilon = 1e-15);
        let a = 1620.5;
        assert_relative_eq!(ln_cauchy_tail(a), (2.0 / (PI * a)).ln(), epsilon = 1e-6);
    }
}
