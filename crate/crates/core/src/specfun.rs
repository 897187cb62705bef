//! Special functions: log-Gamma, digamma, trigamma, the complex multivariate
//! log-Gamma, and the Gaussian tail function `Q` with its inverse.
//!
//! Digamma and trigamma shift their argument above [`ASYMPTOTIC_THRESHOLD`]
//! with the upward recurrence and then sum the asymptotic (Bernoulli) series.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ASYMPTOTIC_THRESHOLD: f64 = 10.0;

/// A probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub const ZERO: Probability = Probability(0.0);
    pub const ONE: Probability = Probability(1.0);
    pub const HALF: Probability = Probability(0.5);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Probability(value))
        } else {
            Err(Error::domain(format!("probability {value} is outside [0, 1]")))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// `1 - p`.
    pub fn complement(self) -> Probability {
        Probability(1.0 - self.0)
    }

    /// True when `0 < p < 1`.
    pub fn is_open_unit(self) -> bool {
        self.0 > 0.0 && self.0 < 1.0
    }
}

impl TryFrom<f64> for Probability {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Probability::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

impl std::fmt::Display for Probability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn require_positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} requires x > 0, got {x}")))
    }
}

/// `ln Γ(x)` for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    require_positive("log_gamma", x)?;
    Ok(libm::lgamma(x))
}

/// Euler's digamma function `Ψ(x) = d/dx ln Γ(x)` for `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    require_positive("digamma", x)?;
    let mut z = x;
    let mut acc = 0.0;
    while z < ASYMPTOTIC_THRESHOLD {
        acc -= 1.0 / z;
        z += 1.0;
    }
    let r = 1.0 / (z * z);
    // ln z - 1/(2z) - sum_k B_{2k} / (2k z^{2k})
    let series = r
        * (1.0 / 12.0
            - r * (1.0 / 120.0
                - r * (1.0 / 252.0
                    - r * (1.0 / 240.0
                        - r * (1.0 / 132.0 - r * (691.0 / 32760.0 - r / 12.0))))));
    Ok(acc + z.ln() - 0.5 / z - series)
}

/// Trigamma `Ψ'(x)` for `x > 0`.
pub fn trigamma(x: f64) -> Result<f64> {
    require_positive("trigamma", x)?;
    let mut z = x;
    let mut acc = 0.0;
    while z < ASYMPTOTIC_THRESHOLD {
        acc += 1.0 / (z * z);
        z += 1.0;
    }
    let r = 1.0 / (z * z);
    // 1/z + 1/(2z^2) + sum_k B_{2k} / z^{2k+1}
    let series = r
        * (1.0 / 6.0
            - r * (1.0 / 30.0
                - r * (1.0 / 42.0
                    - r * (1.0 / 30.0
                        - r * (5.0 / 66.0 - r * (691.0 / 2730.0 - r * 7.0 / 6.0))))));
    Ok(acc + 1.0 / z + 0.5 * r + series / z)
}

/// `ln Γ_m(x) = m(m-1)/2 ln π + Σ_{k=1}^{m} ln Γ(x - k + 1)`, the complex
/// multivariate log-Gamma. Requires `x > m - 1`.
pub fn log_multivariate_gamma(m: usize, x: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::domain("log_multivariate_gamma requires m >= 1"));
    }
    let mf = m as f64;
    if !(x.is_finite() && x > mf - 1.0) {
        return Err(Error::domain(format!(
            "log_multivariate_gamma requires x > m - 1 = {}, got {x}",
            mf - 1.0
        )));
    }
    let mut acc = mf * (mf - 1.0) / 2.0 * PI.ln();
    for k in 1..=m {
        acc += libm::lgamma(x - k as f64 + 1.0);
    }
    Ok(acc)
}

/// Gaussian tail probability `Q(x) = P[N(0,1) > x]`.
pub fn q_function(x: f64) -> Probability {
    if x.is_nan() {
        // Q is total on the reals; NaN has no tail probability to report.
        return Probability::HALF;
    }
    Probability(0.5 * libm::erfc(x * FRAC_1_SQRT_2))
}

#[inline]
fn q_raw(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

#[inline]
fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Acklam's rational approximation to the standard normal lower-tail
/// quantile, valid for `0 < p < 1` with relative error below 1.2e-9.
fn normal_quantile_rational(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Inverse of [`q_function`]: the `x` with `Q(x) = p`, for `0 < p < 1`.
pub fn q_inverse(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("q_inverse requires 0 < p < 1, got {p}")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    if p > 0.5 {
        // 1 - p is exact here
        return q_inverse(1.0 - p).map(|x| -x);
    }
    // Q(x) = p  <=>  Φ(-x) = p, and p < 1/2 so x > 0
    let mut x = -normal_quantile_rational(p);
    for _ in 0..3 {
        let err = q_raw(x) - p;
        let pdf = std_normal_pdf(x);
        if pdf == 0.0 {
            break;
        }
        // Halley step on f(x) = Q(x) - p, f' = -φ, f'' = xφ
        let newton = err / pdf;
        x += newton / (1.0 + 0.5 * x * newton);
    }
    Ok(x)
}
