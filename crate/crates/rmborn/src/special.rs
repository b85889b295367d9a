//! Scaled complementary error function and a Gaussian tail integral built on it.

use libm::erfc;
use std::f64::consts::PI;

/// Scaled complementary error function `exp(x^2) erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        if x < -26.5 {
            return f64::INFINITY;
        }
        return 2.0 * exp_square(x) - erfcx(-x);
    }
    if x <= 26.0 {
        return exp_square(x) * erfc(x);
    }
    let y = 1.0 / (2.0 * x * x);
    // Asymptotic series sum (-1)^k (2k-1)!! y^k.
    let series = 1.0 - y * (1.0 - 3.0 * y * (1.0 - 5.0 * y * (1.0 - 7.0 * y * (1.0 - 9.0 * y))));
    series / (x * PI.sqrt())
}

/// `exp(x^2)` with the rounding error of `x^2` carried separately.
fn exp_square(x: f64) -> f64 {
    let hi = x * x;
    let lo = x.mul_add(x, -hi);
    hi.exp() * lo.exp()
}

/// `exp(a^2) * int_a^inf exp(-p^2) (p - a) dp = 1/2 - a (sqrt(pi)/2) erfcx(a)`.
///
/// Positive for every real `a`, behaves as `1/(4 a^2)` for large `a`.
pub fn gaussian_excess_tail(a: f64) -> f64 {
    if a >= 30.0 {
        let y = 1.0 / (a * a);
        return y / 4.0 * (1.0 - y * (1.5 - y * (3.75 - y * (13.125 - y * (59.0625 - y * 324.843_75)))));
    }
    0.5 - a * PI.sqrt() / 2.0 * erfcx(a)
}
