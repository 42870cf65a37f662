//! Scalar special functions used by the evidential losses.

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7, nine terms).
///
/// Small arguments are shifted up with `Γ(x) = Γ(x + 1) / x` so the series is
/// only ever evaluated at `x ≥ 0.5`.
pub fn ln_gamma(x: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return f64::NAN;
    }
    if x == 1.0 || x == 2.0 {
        return 0.0;
    }
    if x < 0.5 {
        return ln_gamma(x + 1.0) - libm::log(x);
    }
    let z = x - 1.0;
    let mut series = LANCZOS_COEFFS[0];
    for (i, &c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        series += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * libm::log(2.0 * core::f64::consts::PI) + (z + 0.5) * libm::log(t) - t
        + libm::log(series)
}

/// Digamma `ψ(x) = d/dx ln Γ(x)` for `x > 0`.
pub fn digamma(mut x: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return f64::NAN;
    }
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Asymptotic series in 1/x^2.
    let tail = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
    acc + libm::log(x) - 0.5 * inv - tail
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inverse(y: f64) -> f64 {
    if y > 30.0 {
        y + libm::log1p(-libm::exp(-y))
    } else {
        libm::log(libm::expm1(y))
    }
}

/// `tanh`, routed through a single `exp` away from the origin where the
/// cancellation in `1 - 2/(e^{2|x|} + 1)` is harmless.
#[inline]
pub fn tanh(x: f64) -> f64 {
    let a = libm::fabs(x);
    if a < 0.5 {
        return libm::tanh(x);
    }
    if a > 20.0 {
        return libm::copysign(1.0, x);
    }
    let t = 1.0 - 2.0 / (libm::exp(2.0 * a) + 1.0);
    libm::copysign(t, x)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!(ln_gamma(2.0).abs() < 1e-14);
        let half = 0.5 * libm::log(core::f64::consts::PI);
        assert!((ln_gamma(0.5) - half).abs() < 1e-13);
        // ln(10!) for Γ(11)
        assert!((ln_gamma(11.0) - libm::log(3_628_800.0)).abs() < 1e-12);
    }

    #[test]
    fn ln_gamma_matches_libm_to_1e10_relative() {
        let mut x = 0.01;
        while x < 60.0 {
            let reference = libm::lgamma(x);
            let got = ln_gamma(x);
            let scale = reference.abs().max(1.0);
            assert!((got - reference).abs() / scale < 1e-10, "x={x}: {got} vs {reference}");
            x *= 1.07;
        }
    }

    #[test]
    fn digamma_matches_ln_gamma_differences() {
        for &x in &[0.3, 1.0, 1.7, 2.5, 7.2, 30.0] {
            let h = 1e-5;
            let fd = (ln_gamma(x + h) - ln_gamma(x - h)) / (2.0 * h);
            assert!((digamma(x) - fd).abs() < 1e-8, "x={x}");
        }
        assert!((digamma(1.0) + EULER_GAMMA).abs() < 1e-12);
    }

    #[test]
    fn tanh_matches_libm() {
        let mut x = -25.0;
        while x < 25.0 {
            assert!((tanh(x) - libm::tanh(x)).abs() <= 4.0 * f64::EPSILON * libm::fabs(libm::tanh(x)).max(1e-300), "x={x}");
            x += 0.0137;
        }
    }

    #[test]
    fn softplus_roundtrip_and_limits() {
        assert!((softplus(0.0) - core::f64::consts::LN_2).abs() < 1e-15);
        for &y in &[1e-6, 0.01, 0.5, 3.0, 50.0] {
            assert!((softplus(softplus_inverse(y)) - y).abs() / y < 1e-10);
        }
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-16);
    }
}
