//! Monte Carlo evaluation of the converse-side quantities: the auxiliary
//! output density, the mismatched information density, its stochastic upper
//! bound `j̄` and moments, the power-split constants `δ̄` and `Ξ`, the
//! centred information-density proxy, and an empirical meta-converse bound.
//!
//! Information densities are in nats per coherence block.

use nalgebra::Cholesky;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::montecarlo::{map_chunks, sample_moments, MCEstimate, McConfig};
use crate::normapprox::{check_validity, elogdet_wishart, varlogdet_wishart, Scenario};
use crate::randmat::{
    gram_eigenvalues, hermitian_logdet, lambda1, sample_cn_matrix, singular_values, ComplexMatrix,
};
use crate::specfun::{log_multivariate_gamma, Probability};

/// Relative gap enforced between coincident squared singular values.
pub const TIE_PERTURBATION: f64 = 1e-9;

/// Diagonal per-antenna amplitudes `d_1..d_{n_t}` of a block input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    diag: Vec<f64>,
}

impl PowerAllocation {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::dimension("power allocation needs n_t >= 1 entries"));
        }
        if diag.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::domain("amplitudes must be finite and non-negative"));
        }
        Ok(PowerAllocation { diag })
    }

    /// `d_i² = Tρ/n_t` on every antenna: the full budget split evenly.
    pub fn equal(n_t: usize, coherence: usize, snr: f64) -> Result<Self> {
        if n_t == 0 {
            return Err(Error::dimension("n_t must be >= 1"));
        }
        if !(snr >= 0.0 && snr.is_finite()) {
            return Err(Error::domain(format!("SNR must be finite and >= 0, got {snr}")));
        }
        let d = (coherence as f64 * snr / n_t as f64).sqrt();
        Self::new(vec![d; n_t])
    }

    pub fn zero(n_t: usize) -> Result<Self> {
        Self::new(vec![0.0; n_t])
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn n_t(&self) -> usize {
        self.diag.len()
    }

    pub fn energy(&self) -> f64 {
        self.diag.iter().map(|d| d * d).sum()
    }

    /// Per-channel-use power `α = tr(D²)/T`.
    pub fn alpha(&self, coherence: usize) -> f64 {
        self.energy() / coherence as f64
    }

    /// Checks the block power budget `tr(D²) ≤ Tρ`.
    pub fn check_budget(&self, coherence: usize, snr: f64) -> Result<()> {
        let budget = coherence as f64 * snr;
        if self.energy() > budget * (1.0 + 1e-12) {
            return Err(Error::domain(format!(
                "power allocation exceeds tr(D²) ≤ Tρ ({} > {budget})",
                self.energy()
            )));
        }
        Ok(())
    }
}

/// One realisation of an information density (nats per block).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct InfoDensitySample {
    pub value: f64,
}

impl InfoDensitySample {
    fn new(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::domain("information density evaluated to a non-finite value"));
        }
        Ok(InfoDensitySample { value })
    }
}

fn check_snr(snr: f64) -> Result<()> {
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(Error::domain(format!("SNR must be positive and finite, got {snr}")));
    }
    Ok(())
}

/// `ln f_{Y|X}(Y|X)` with the transmit power carried by `X`:
/// `-tr(Y^H (I_T + X X^H)^{-1} Y) - n_r T ln π - n_r ln det(I_{n_t} + X^H X)`.
///
/// Requires `‖X‖_F² ≤ Tρ`.
pub fn conditional_log_pdf(y: &ComplexMatrix, x: &ComplexMatrix, snr: f64) -> Result<f64> {
    check_snr(snr)?;
    let t = y.nrows();
    if x.nrows() != t || x.ncols() == 0 || y.ncols() == 0 {
        return Err(Error::shape(format!(
            "need Y of T x n_r and X of T x n_t with matching T (Y is {}x{}, X is {}x{})",
            y.nrows(),
            y.ncols(),
            x.nrows(),
            x.ncols()
        )));
    }
    if x.norm_squared() > t as f64 * snr * (1.0 + 1e-9) {
        return Err(Error::domain("input violates the block power constraint ‖X‖² ≤ Tρ"));
    }
    let n_r = y.ncols() as f64;
    // Woodbury: (I + X X^H)^{-1} = I - X (I + X^H X)^{-1} X^H
    let gram = ComplexMatrix::identity(x.ncols(), x.ncols()) + x.adjoint() * x;
    let chol = Cholesky::new(gram).ok_or_else(|| Error::domain("I + X^H X not positive definite"))?;
    let l = chol.l();
    let logdet = 2.0 * (0..x.ncols()).map(|i| l[(i, i)].re.ln()).sum::<f64>();
    let proj = x.adjoint() * y;
    let whitened = l
        .solve_lower_triangular(&proj)
        .ok_or_else(|| Error::domain("singular Cholesky factor"))?;
    let quad = y.norm_squared() - whitened.norm_squared();
    Ok(-quad - n_r * t as f64 * std::f64::consts::PI.ln() - n_r * logdet)
}

/// Same density written for a unit-energy-per-antenna input `x_hat`
/// (orthonormal columns, as in unitary space-time modulation) scaled by
/// `Tρ/n_t`: `-tr(Y^H (I + (ρT/n_t) X̂ X̂^H)^{-1} Y) - n_r T ln π - n_t n_r ln(1 + ρT/n_t)`.
pub fn conditional_log_pdf_unitary(y: &ComplexMatrix, x_hat: &ComplexMatrix, snr: f64) -> Result<f64> {
    check_snr(snr)?;
    let t = y.nrows();
    let n_t = x_hat.ncols();
    if x_hat.nrows() != t || n_t == 0 || y.ncols() == 0 {
        return Err(Error::shape("need Y of T x n_r and X̂ of T x n_t with matching T"));
    }
    let eye = ComplexMatrix::identity(n_t, n_t);
    if (x_hat.adjoint() * x_hat - &eye).norm() > 1e-9 {
        return Err(Error::domain("X̂ must have orthonormal columns"));
    }
    let mu = t as f64 * snr / n_t as f64;
    let n_r = y.ncols() as f64;
    // for orthonormal X̂: (I + μ X̂X̂^H)^{-1} = I - μ/(1+μ) X̂X̂^H
    let proj = x_hat.adjoint() * y;
    let quad = y.norm_squared() - mu / (1.0 + mu) * proj.norm_squared();
    Ok(-quad - n_r * t as f64 * std::f64::consts::PI.ln() - n_t as f64 * n_r * mu.ln_1p())
}

/// Squared singular values, descending, with near-ties pulled apart by a
/// relative [`TIE_PERTURBATION`].
fn separated_squares(y: &ComplexMatrix) -> Vec<f64> {
    let mut s = singular_values(y).squared();
    for k in 1..s.len() {
        let cap = s[k - 1] * (1.0 - TIE_PERTURBATION);
        if s[k] > cap {
            s[k] = cap;
        }
    }
    s
}

/// `ln q_Y(Y)` for the product-form auxiliary output density with
/// `μ = Tρ/n_t`, evaluated from the singular values of `Y` (`T x n_r`).
pub fn aux_log_pdf(y: &ComplexMatrix, snr: f64, n_t: usize) -> Result<f64> {
    check_snr(snr)?;
    let t = y.nrows();
    let n_r = y.ncols();
    if n_t == 0 || n_r < n_t {
        return Err(Error::dimension(format!(
            "auxiliary density needs 1 <= n_t <= n_r (n_t={n_t}, n_r={n_r})"
        )));
    }
    if t < n_r {
        return Err(Error::shape(format!(
            "Y must have at least as many rows as columns (T={t}, n_r={n_r})"
        )));
    }
    let s2 = separated_squares(y);
    if s2[n_t - 1] <= 0.0 {
        return Err(Error::DegenerateSpectrum(
            "one of the n_t largest singular values is zero".into(),
        ));
    }
    let mu = t as f64 * snr / n_t as f64;
    let (tf, m, r) = (t as f64, n_t as f64, n_r as f64);
    let mut v = -m * r * mu.ln() - r * tf * std::f64::consts::PI.ln()
        + log_multivariate_gamma(n_t, tf)?
        - log_multivariate_gamma(n_t, m)?;
    let power = tf - 2.0 * r + m;
    for &si in &s2[..n_t] {
        v -= si / mu + power * si.ln();
    }
    for &sj in &s2[n_t..] {
        v -= sj;
    }
    for &si in &s2[..n_t] {
        for &sj in &s2[n_t..] {
            let gap = si - sj;
            if gap <= 0.0 {
                return Err(Error::DegenerateSpectrum(format!(
                    "coincident singular values (σ_i² - σ_j² = {gap})"
                )));
            }
            v -= 2.0 * gap.ln();
        }
    }
    Ok(v)
}

/// `ln f_{Y|X}(Y|X) - ln q_Y(Y)`.
pub fn mismatched_info_density(
    x: &ComplexMatrix,
    y: &ComplexMatrix,
    snr: f64,
    n_t: usize,
) -> Result<InfoDensitySample> {
    if x.ncols() != n_t {
        return Err(Error::shape(format!(
            "X has {} columns but n_t = {n_t}",
            x.ncols()
        )));
    }
    InfoDensitySample::new(conditional_log_pdf(y, x, snr)? - aux_log_pdf(y, snr, n_t)?)
}

/// A `T x n_t` input whose leading `n_t x n_t` block is `diag(d)`.
pub fn diagonal_input(d: &PowerAllocation, coherence: usize) -> Result<ComplexMatrix> {
    if coherence < d.n_t() {
        return Err(Error::shape("T must be >= n_t for a diagonal input"));
    }
    let mut x = ComplexMatrix::zeros(coherence, d.n_t());
    for (i, &di) in d.diag().iter().enumerate() {
        x[(i, i)] = Complex64::new(di, 0.0);
    }
    Ok(x)
}

/// Precomputed coefficients of the stochastic upper bound `j̄(D, T, ρ)`.
#[derive(Debug, Clone)]
pub struct JbarSampler {
    n_t: usize,
    n_r: usize,
    coherence: usize,
    constant: f64,
    norm_coef: f64,
    inv_gain: Vec<f64>,
    gamma: Gamma<f64>,
}

impl JbarSampler {
    pub fn new(d: &PowerAllocation, coherence: usize, snr: f64, n_r: usize) -> Result<Self> {
        check_snr(snr)?;
        let n_t = d.n_t();
        if n_r == 0 {
            return Err(Error::dimension("n_r must be >= 1"));
        }
        if coherence < n_t + 1 {
            return Err(Error::shape(format!(
                "j̄ needs T >= n_t + 1 (T={coherence}, n_t={n_t})"
            )));
        }
        d.check_budget(coherence, snr)?;
        let (t, m, r) = (coherence as f64, n_t as f64, n_r as f64);
        let logdet_power: f64 = d.diag().iter().map(|x| (x * x).ln_1p()).sum();
        let constant = m * r * (t * snr / m).ln() + log_multivariate_gamma(n_t, m)?
            - log_multivariate_gamma(n_t, t)?
            + (t - m - r) * logdet_power;
        // the equal split recomputes Tρ as n_t·(sqrt(Tρ/n_t))²; treat rounding
        // residue as full power so the ‖H‖² coefficient is exactly zero there
        let budget = t * snr;
        let shortfall = budget - d.energy();
        let norm_coef = if shortfall.abs() <= 1e-12 * budget { 0.0 } else { -shortfall / budget };
        let inv_gain = d.diag().iter().map(|x| 1.0 / (1.0 + x * x)).collect();
        let gamma = Gamma::new(m * (t - m), 1.0)
            .map_err(|e| Error::domain(format!("gamma shape: {e}")))?;
        Ok(JbarSampler { n_t, n_r, coherence, constant, norm_coef, inv_gain, gamma })
    }

    fn logdet_term<R: Rng + ?Sized>(&self, h: &ComplexMatrix, rng: &mut R) -> Result<f64> {
        let lam = lambda1(self.coherence - self.n_t, self.n_r, rng)?;
        let mut a = h * h.adjoint();
        for (i, g) in self.inv_gain.iter().enumerate() {
            a[(i, i)] += Complex64::new(lam * g, 0.0);
        }
        hermitian_logdet(&a)
    }

    /// One draw of `ln det(H H^H + λ_1(Q^H Q)(I + D²)^{-1})`.
    pub fn draw_logdet<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let h = sample_cn_matrix(self.n_t, self.n_r, rng)?;
        self.logdet_term(&h, rng)
    }

    /// One draw of `j̄`. The `Z'` sum is realised as `‖H‖_F²` from the same
    /// `H`, and the `Z''` sum as one `Γ(n_t(T - n_t), 1)` variate.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<InfoDensitySample> {
        let h = sample_cn_matrix(self.n_t, self.n_r, rng)?;
        let logdet = self.logdet_term(&h, rng)?;
        let g = self.gamma.sample(rng);
        let tail = (self.coherence - self.n_t) as f64;
        InfoDensitySample::new(
            self.constant + self.norm_coef * h.norm_squared() - g + tail * logdet,
        )
    }

    /// Closed-form part of `E[j̄]` (everything except the log-det expectation).
    pub fn closed_mean(&self) -> f64 {
        let (t, m, r) = (self.coherence as f64, self.n_t as f64, self.n_r as f64);
        self.constant + self.norm_coef * r * m - m * (t - m)
    }
}

/// One draw of `j̄(D, T, ρ)`.
pub fn sample_jbar<R: Rng + ?Sized>(
    d: &PowerAllocation,
    coherence: usize,
    snr: f64,
    n_r: usize,
    rng: &mut R,
) -> Result<InfoDensitySample> {
    JbarSampler::new(d, coherence, snr, n_r)?.draw(rng)
}

/// `E[j̄]`: closed-form terms plus a Monte Carlo estimate of
/// `(T - n_t) E[ln det(H H^H + λ_1(Q^H Q)(I + D²)^{-1})]`.
pub fn jbar_mean(
    d: &PowerAllocation,
    coherence: usize,
    snr: f64,
    n_r: usize,
    cfg: &McConfig,
) -> Result<MCEstimate> {
    let s = JbarSampler::new(d, coherence, snr, n_r)?;
    let m = sample_moments(cfg, |rng| s.draw_logdet(rng))?;
    let tail = (coherence - d.n_t()) as f64;
    Ok(MCEstimate::of_mean(&m).affine(tail, s.closed_mean()))
}

/// Mean of directly sampled `j̄` draws (the second estimator of `E[j̄]`).
pub fn jbar_sample_mean(
    d: &PowerAllocation,
    coherence: usize,
    snr: f64,
    n_r: usize,
    cfg: &McConfig,
) -> Result<MCEstimate> {
    let s = JbarSampler::new(d, coherence, snr, n_r)?;
    let m = sample_moments(cfg, |rng| s.draw(rng).map(|v| v.value))?;
    Ok(MCEstimate::of_mean(&m))
}

/// `Ū = Var[j̄]` from sampled draws.
pub fn ubar_var(
    d: &PowerAllocation,
    coherence: usize,
    snr: f64,
    n_r: usize,
    cfg: &McConfig,
) -> Result<MCEstimate> {
    let s = JbarSampler::new(d, coherence, snr, n_r)?;
    let m = sample_moments(cfg, |rng| s.draw(rng).map(|v| v.value))?;
    Ok(MCEstimate::of_variance(&m))
}

fn check_dims(n_t: usize, n_r: usize) -> Result<()> {
    if n_t == 0 || n_r < n_t {
        return Err(Error::dimension(format!(
            "need 1 <= n_t <= n_r (n_t={n_t}, n_r={n_r})"
        )));
    }
    Ok(())
}

fn check_split_domain(coherence: usize, n_t: usize, n_r: usize) -> Result<()> {
    check_dims(n_t, n_r).map_err(|e| Error::validity(e.to_string()))?;
    if coherence < n_t + n_r {
        return Err(Error::validity(format!(
            "T ≥ n_t + n_r violated (T={coherence}, n_t={n_t}, n_r={n_r})"
        )));
    }
    Ok(())
}

/// Per-antenna power threshold (in units of ρ) separating the two input
/// classes: `T/n_t - T / (2 n_r sqrt(n_t) sqrt(E[ln det(H H^H)²]) + 1)`.
pub fn delta_bar(coherence: usize, n_t: usize, n_r: usize) -> Result<f64> {
    check_dims(n_t, n_r)?;
    let mean = elogdet_wishart(n_t, n_r)?;
    let second = mean * mean + varlogdet_wishart(n_t, n_r)?;
    let t = coherence as f64;
    let m = n_t as f64;
    Ok(t / m - t / (2.0 * n_r as f64 * m.sqrt() * second.sqrt() + 1.0))
}

/// Terms shared by both class-wise upper bounds.
fn jbar_common(coherence: usize, snr: f64, n_t: usize, n_r: usize) -> Result<f64> {
    let (t, m, r) = (coherence as f64, n_t as f64, n_r as f64);
    Ok(m * r * (t * snr / m).ln() + log_multivariate_gamma(n_t, m)?
        - log_multivariate_gamma(n_t, t)?
        - m * (t - m)
        + (t - m) * elogdet_wishart(n_t, n_r)?)
}

/// `ln((1 + δ̄ρ)(1 + (T - δ̄)ρ/(n_t - 1))^{n_t - 1})`; the second factor is
/// absent for a single antenna.
fn split_power_logdet(coherence: usize, snr: f64, n_t: usize, delta: f64) -> f64 {
    let mut v = (delta * snr).ln_1p();
    if n_t > 1 {
        let k = (n_t - 1) as f64;
        v += k * ((coherence as f64 - delta) * snr / k).ln_1p();
    }
    v
}

/// Upper bound on `E[j̄]` for inputs with every `d_i² > δ̄ρ`, attained at
/// equal power.
pub fn jbar_d1(coherence: usize, snr: f64, n_t: usize, n_r: usize) -> Result<f64> {
    check_split_domain(coherence, n_t, n_r)?;
    let (t, m, r) = (coherence as f64, n_t as f64, n_r as f64);
    Ok(jbar_common(coherence, snr, n_t, n_r)? + (t - m - r) * m * (t * snr / m).ln_1p())
}

/// Counterpart of [`jbar_d1`] for inputs with some `d_i² ≤ δ̄ρ`.
pub fn jbar_d2(coherence: usize, snr: f64, n_t: usize, n_r: usize) -> Result<f64> {
    check_split_domain(coherence, n_t, n_r)?;
    let delta = delta_bar(coherence, n_t, n_r)?;
    let (t, m, r) = (coherence as f64, n_t as f64, n_r as f64);
    Ok(jbar_common(coherence, snr, n_t, n_r)?
        + (t - m - r) * split_power_logdet(coherence, snr, n_t, delta))
}

/// `Ξ(T, ρ)`: the gap between the two class-wise bounds, from its own closed form.
pub fn xi_gap(coherence: usize, snr: f64, n_t: usize, n_r: usize) -> Result<f64> {
    check_split_domain(coherence, n_t, n_r)?;
    check_snr(snr)?;
    let delta = delta_bar(coherence, n_t, n_r)?;
    let (t, m, r) = (coherence as f64, n_t as f64, n_r as f64);
    let full = m * (t * snr / m).ln_1p();
    Ok((t - m - r) * (full - split_power_logdet(coherence, snr, n_t, delta)))
}

/// `Ξ(T) = lim_{ρ→∞} Ξ(T, ρ)`.
pub fn xi_gap_limit(coherence: usize, n_t: usize, n_r: usize) -> Result<f64> {
    check_split_domain(coherence, n_t, n_r)?;
    let delta = delta_bar(coherence, n_t, n_r)?;
    let (t, m, r) = (coherence as f64, n_t as f64, n_r as f64);
    let mut split = delta.ln();
    if n_t > 1 {
        split += (m - 1.0) * ((t - delta) / (m - 1.0)).ln();
    }
    Ok((t - m - r) * (m * (t / m).ln() - split))
}

/// Draws the two independent parts of the centred information-density proxy:
/// `(T - n_t)(ln det(H H^H) - E[ln det])` and `G - n_t(T - n_t)` with
/// `G ~ Γ(n_t(T - n_t), 1)` standing in for `tr(W_21^H W_21)`.
pub fn istar_parts<R: Rng + ?Sized>(
    coherence: usize,
    n_t: usize,
    n_r: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    check_dims(n_t, n_r)?;
    if coherence <= n_t {
        return Err(Error::dimension(format!(
            "need T > n_t (T={coherence}, n_t={n_t})"
        )));
    }
    let tail = (coherence - n_t) as f64;
    let shape = n_t as f64 * tail;
    let h = sample_cn_matrix(n_t, n_r, rng)?;
    let logdet = if n_t == 1 {
        h.norm_squared().ln()
    } else {
        gram_eigenvalues(&h).iter().map(|v| v.ln()).sum()
    };
    let gamma = Gamma::new(shape, 1.0).map_err(|e| Error::domain(format!("gamma shape: {e}")))?;
    let g = gamma.sample(rng);
    Ok((tail * (logdet - elogdet_wishart(n_t, n_r)?), g - shape))
}

/// One zero-mean draw of the high-SNR information-density proxy; its variance
/// is `T² Ṽ(T)`.
pub fn istar_centered_sample<R: Rng + ?Sized>(
    coherence: usize,
    n_t: usize,
    n_r: usize,
    rng: &mut R,
) -> Result<InfoDensitySample> {
    let (a, b) = istar_parts(coherence, n_t, n_r, rng)?;
    InfoDensitySample::new(a - b)
}

/// Outcome of the empirical weakened meta-converse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalConverseResult {
    /// Bound on the rate in nats per channel use.
    pub rate_upper_bound: f64,
    /// The optimising threshold `ln ξ` (nats per codeword).
    pub threshold_log_xi: f64,
    /// Empirical `P[S ≥ ln ξ]`.
    pub tail_estimate: Probability,
    /// Total number of `j̄` draws (`realizations · L`).
    pub samples: u64,
    /// Number of sampled codeword-level sums `S`.
    pub realizations: u64,
    /// Monte Carlo standard error of `rate_upper_bound` (quantile-density
    /// estimate at the optimising threshold).
    pub stderr: f64,
    /// Always true: the bound carries Monte Carlo error and is not certified.
    pub empirical: bool,
}

/// Evaluates `min_t [t - ln(1 - ε - P̂[S ≥ t])] / (L T)` over empirical
/// quantiles `t` of `S = Σ_ℓ j̄_ℓ`, with every block at equal full power.
///
/// The bound holds for any `ε ∈ (0, 1)`, so only the antenna/coherence part
/// of the validity check applies here.
pub fn empirical_converse(s: &Scenario, cfg: &McConfig) -> Result<EmpiricalConverseResult> {
    check_validity(s.coherence, s.n_t, s.n_r)?;
    if s.blocks.fract() != 0.0 || s.blocks < 1.0 {
        return Err(Error::domain(format!(
            "the converse needs an integer number of blocks L >= 1, got {}",
            s.blocks
        )));
    }
    let l = s.blocks as usize;
    if cfg.samples < 10 * l {
        return Err(Error::domain(format!(
            "need at least 10·L = {} samples, got {}",
            10 * l,
            cfg.samples
        )));
    }
    let d = PowerAllocation::equal(s.n_t, s.coherence, s.snr)?;
    let sampler = JbarSampler::new(&d, s.coherence, s.snr, s.n_r)?;
    let n = cfg.samples / l;
    let sums_cfg = McConfig { samples: n, ..*cfg };
    let mut sums: Vec<f64> = map_chunks(&sums_cfg, |rng, count| {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let mut acc = 0.0;
            for _ in 0..l {
                acc += sampler.draw(rng)?.value;
            }
            out.push(acc);
        }
        Ok(out)
    })?
    .into_iter()
    .flatten()
    .collect();
    sums.sort_by(f64::total_cmp);

    let eps = s.eps.value();
    let nf = n as f64;
    let mut best: Option<(f64, usize, f64)> = None;
    let mut k = 0;
    while k < n {
        // P̂[S ≥ sums[k]] counts every draw from the first copy of sums[k] on
        let tail = (n - k) as f64 / nf;
        let slack = 1.0 - eps - tail;
        if slack > 0.0 {
            let v = sums[k] - slack.ln();
            if best.is_none_or(|(b, _, _)| v < b) {
                best = Some((v, k, tail));
            }
        }
        let x = sums[k];
        while k < n && sums[k] == x {
            k += 1;
        }
    }
    let (value, idx, tail) = best.ok_or_else(|| {
        Error::Infeasible(format!(
            "no empirical threshold has P[S ≥ t] < 1 - ε = {} with {n} realisations",
            1.0 - eps
        ))
    })?;

    let scale = l as f64 * s.coherence as f64;
    let h = (nf.sqrt().round() as usize).max(1);
    let lo = idx.saturating_sub(h);
    let hi = (idx + h).min(n - 1);
    let q = idx as f64 / nf;
    let stderr = if hi > lo {
        let density_inv = (sums[hi] - sums[lo]) * nf / (hi - lo) as f64;
        (q * (1.0 - q) / nf).sqrt() * density_inv / scale
    } else {
        f64::INFINITY
    };

    Ok(EmpiricalConverseResult {
        rate_upper_bound: value / scale,
        threshold_log_xi: sums[idx],
        tail_estimate: Probability::new(tail)?,
        samples: (n * l) as u64,
        realizations: n as u64,
        stderr,
        empirical: true,
    })
}

/// Helper for tests and validation: `Y = X H + W` for a diagonal input.
pub fn diagonal_channel_output<R: Rng + ?Sized>(
    d: &PowerAllocation,
    coherence: usize,
    n_r: usize,
    rng: &mut R,
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let x = diagonal_input(d, coherence)?;
    let y = crate::randmat::channel_output(&x, n_r, rng)?;
    Ok((x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randmat::{random_truncated_unitary, random_unitary, RngStream};
    use nalgebra::DMatrix;
    use std::f64::consts::PI;

    fn real_matrix(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> ComplexMatrix {
        DMatrix::from_fn(rows, cols, |i, j| Complex64::new(f(i, j), 0.0))
    }

    fn e1(t: usize) -> ComplexMatrix {
        real_matrix(t, 1, |i, _| if i == 0 { 1.0 } else { 0.0 })
    }

    #[test]
    fn conditional_density_hand_case() {
        // T=2, ρ=2, n_t=1: μ = 4, X = 2 e_1, Y = e_1
        let x = e1(2) * Complex64::new(2.0, 0.0);
        let y = e1(2);
        let v = conditional_log_pdf(&y, &x, 2.0).unwrap();
        assert!((v - (-0.2 - 2.0 * PI.ln() - 5f64.ln())).abs() < 1e-12);
        let u = conditional_log_pdf_unitary(&y, &e1(2), 2.0).unwrap();
        assert!((u - v).abs() < 1e-12);
    }

    #[test]
    fn conditional_density_without_input_is_gaussian() {
        let mut rng = RngStream::new(3, 0).rng();
        let y = sample_cn_matrix(5, 2, &mut rng).unwrap();
        let x = ComplexMatrix::zeros(5, 2);
        let v = conditional_log_pdf(&y, &x, 1.0).unwrap();
        assert!((v - (-y.norm_squared() - 10.0 * PI.ln())).abs() < 1e-12);
    }

    #[test]
    fn aux_density_hand_case() {
        let v = aux_log_pdf(&e1(2), 2.0, 1).unwrap();
        assert!((v - (-(4f64).ln() - 2.0 * PI.ln() - 0.25)).abs() < 1e-12);
    }

    #[test]
    fn mismatched_density_hand_case() {
        let x = e1(2) * Complex64::new(2.0, 0.0);
        let j = mismatched_info_density(&x, &e1(2), 2.0, 1).unwrap();
        assert!((j.value - (0.05 - (1.25f64).ln())).abs() < 1e-12);
        assert!((j.value + 0.173_143_551_314_209_7).abs() < 1e-12);
    }

    #[test]
    fn densities_are_unitarily_invariant() {
        let mut rng = RngStream::new(8, 0).rng();
        let (t, n_t, n_r, rho) = (6, 2, 3, 5.0);
        for _ in 0..20 {
            let x_hat = random_truncated_unitary(t, n_t, &mut rng).unwrap();
            let x = &x_hat * Complex64::new((t as f64 * rho / n_t as f64).sqrt(), 0.0);
            let y = crate::randmat::channel_output(&x, n_r, &mut rng).unwrap();
            let a = random_unitary(t, &mut rng).unwrap();
            let f1 = conditional_log_pdf(&y, &(&a * &x), rho).unwrap();
            let f2 = conditional_log_pdf(&(a.adjoint() * &y), &x, rho).unwrap();
            assert!((f1 - f2).abs() < 1e-9);
            let q1 = aux_log_pdf(&y, rho, n_t).unwrap();
            let q2 = aux_log_pdf(&(&a * &y), rho, n_t).unwrap();
            assert!((q1 - q2).abs() < 1e-9);
            let u = conditional_log_pdf_unitary(&y, &x_hat, rho).unwrap();
            assert!((u - conditional_log_pdf(&y, &x, rho).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn aux_density_handles_ties_and_rejects_rank_loss() {
        // identical singular values: perturbed apart, still finite
        let y = real_matrix(4, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        assert!(aux_log_pdf(&y, 3.0, 1).unwrap().is_finite());
        let z = ComplexMatrix::zeros(4, 2);
        assert!(matches!(aux_log_pdf(&z, 3.0, 1), Err(Error::DegenerateSpectrum(_))));
    }

    #[test]
    fn full_power_drops_the_norm_term() {
        let d = PowerAllocation::equal(2, 8, 10.0).unwrap();
        let s = JbarSampler::new(&d, 8, 10.0, 3).unwrap();
        assert_eq!(s.norm_coef, 0.0);
        let over = PowerAllocation::new(vec![10.0, 10.0]).unwrap();
        assert!(JbarSampler::new(&over, 8, 10.0, 3).is_err());
    }

    #[test]
    fn zero_power_closed_terms() {
        let (t, m, r, rho) = (6usize, 2usize, 3usize, 4.0);
        let d = PowerAllocation::zero(m).unwrap();
        let s = JbarSampler::new(&d, t, rho, r).unwrap();
        let (tf, mf, rf) = (t as f64, m as f64, r as f64);
        let expect = -mf * (tf - mf) + mf * rf * (tf * rho / mf).ln()
            + log_multivariate_gamma(m, mf).unwrap()
            - log_multivariate_gamma(m, tf).unwrap()
            - rf * mf;
        assert!((s.closed_mean() - expect).abs() < 1e-12);
    }

    #[test]
    fn delta_bar_single_antenna_case() {
        // E[logdet²] = γ² + π²/6
        let g = 0.577_215_664_901_532_9_f64;
        let second = g * g + PI * PI / 6.0;
        let expect = 2.0 - 2.0 / (2.0 * second.sqrt() + 1.0);
        let v = delta_bar(2, 1, 1).unwrap();
        assert!((v - expect).abs() < 1e-12);
        assert!((v - 1.475_47).abs() < 1e-4);
    }

    #[test]
    fn xi_limits() {
        assert_eq!(xi_gap_limit(5, 2, 3).unwrap(), 0.0);
        for (t, m, r) in [(10, 1, 2), (12, 2, 2), (20, 3, 5)] {
            let lim = xi_gap_limit(t, m, r).unwrap();
            assert!(lim > 0.0);
            assert!((xi_gap(t, 1e6, m, r).unwrap() - lim).abs() < 1e-3);
        }
        assert!(jbar_d2(3, 10.0, 2, 2).is_err());
    }

    #[test]
    fn istar_is_centred() {
        let mut rng = RngStream::new(12, 0).rng();
        let m: crate::montecarlo::Moments = (0..50_000)
            .map(|_| istar_centered_sample(8, 2, 2, &mut rng).unwrap().value)
            .collect();
        assert!(m.mean().abs() < 4.0 * m.stderr_mean());
    }

    #[test]
    fn converse_rejects_fractional_blocks_and_small_budgets() {
        let s = Scenario::new(1, 2, 8, 2.5, 100.0, 1e-2).unwrap();
        assert!(empirical_converse(&s, &McConfig::new(1000, 1)).is_err());
        let s = Scenario::new(1, 2, 8, 4.0, 100.0, 1e-2).unwrap();
        assert!(empirical_converse(&s, &McConfig::new(30, 1)).is_err());
    }
}
