//! Normal approximations of the maximum coding rate and their inversions
//! into packet error probabilities.
//!
//! Rates are in nats per channel use, payloads in bits. Three channel
//! families are covered: the noncoherent Rayleigh block-fading channel (high-SNR
//! approximation, closed form), the MIMO AWGN channel, and the coherent
//! Rayleigh block-fading channel (moments estimated by Monte Carlo).

use std::collections::HashMap;
use std::f64::consts::LN_2;
use std::sync::{OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::montecarlo::{map_batches, MCEstimate, McConfig, Moments};
use crate::randmat::{gram_eigenvalues, sample_cn_matrix};
use crate::specfun::{
    digamma, log_gamma, log_multivariate_gamma, q_function, q_inverse, trigamma, Probability,
};

/// Seed used for coherent-channel moments when the caller does not pick one.
pub const DEFAULT_SEED: u64 = 0x00C0_FFEE;
/// Default Monte Carlo budget for the coherent-channel moments.
pub const DEFAULT_COHERENT_SAMPLES: usize = 100_000;
const COHERENT_BATCHES: usize = 32;

/// Channel and coding parameters.
///
/// `blocks` (the number of coherence intervals) is real so that fixed-`n`
/// sweeps over the coherence length need not hit divisors of `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n_t: usize,
    pub n_r: usize,
    pub coherence: usize,
    pub blocks: f64,
    pub snr: f64,
    pub eps: Probability,
}

impl Scenario {
    pub fn new(
        n_t: usize,
        n_r: usize,
        coherence: usize,
        blocks: f64,
        snr: f64,
        eps: f64,
    ) -> Result<Self> {
        if n_t == 0 || n_r == 0 {
            return Err(Error::dimension("n_t and n_r must be >= 1"));
        }
        if coherence == 0 {
            return Err(Error::domain("coherence interval T must be >= 1"));
        }
        if !(blocks > 0.0 && blocks.is_finite()) {
            return Err(Error::domain(format!("L must be positive, got {blocks}")));
        }
        check_snr(snr)?;
        let eps = Probability::new(eps)?;
        if !eps.is_open_unit() {
            return Err(Error::domain(format!("eps must lie in (0,1), got {eps}")));
        }
        Ok(Scenario { n_t, n_r, coherence, blocks, snr, eps })
    }

    /// Blocklength `n = L T`.
    pub fn blocklength(&self) -> f64 {
        self.blocks * self.coherence as f64
    }

    /// Checks the domain of the high-SNR approximation, including `eps < 1/2`.
    pub fn validate(&self) -> Result<()> {
        check_validity(self.coherence, self.n_t, self.n_r)?;
        if self.eps.value() >= 0.5 {
            return Err(Error::validity(format!(
                "eps < 1/2 violated (eps={})",
                self.eps
            )));
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }
}

fn check_snr(snr: f64) -> Result<()> {
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(Error::domain(format!("SNR must be positive and finite, got {snr}")));
    }
    Ok(())
}

/// Domain of the high-SNR approximation: `n_r >= n_t` and `T >= n_t + n_r`.
pub fn check_validity(coherence: usize, n_t: usize, n_r: usize) -> Result<()> {
    if n_t == 0 || n_r == 0 {
        return Err(Error::dimension("n_t and n_r must be >= 1"));
    }
    if n_r < n_t {
        return Err(Error::validity(format!(
            "n_r ≥ n_t violated (n_t={n_t}, n_r={n_r})"
        )));
    }
    if coherence < n_t + n_r {
        return Err(Error::validity(format!(
            "T ≥ n_t + n_r violated (T={coherence}, n_t={n_t}, n_r={n_r})"
        )));
    }
    Ok(())
}

fn check_wishart_dims(n_t: usize, n_r: usize) -> Result<()> {
    if n_t == 0 {
        return Err(Error::dimension("n_t must be >= 1"));
    }
    if n_t > n_r {
        return Err(Error::dimension(format!(
            "Wishart moments need n_r >= n_t (n_t={n_t}, n_r={n_r})"
        )));
    }
    Ok(())
}

/// A normal-approximation rate split into its parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBreakdown {
    pub capacity_term: f64,
    pub dispersion_term: f64,
    pub correction_term: f64,
    pub total: f64,
}

impl RateBreakdown {
    pub fn new(capacity_term: f64, dispersion_term: f64, correction_term: f64) -> Self {
        RateBreakdown {
            capacity_term,
            dispersion_term,
            correction_term,
            total: capacity_term - dispersion_term + correction_term,
        }
    }
}

/// `E[ln det(H H^H)] = Σ_{i<n_t} Ψ(n_r - i)` for `H` of size `n_t x n_r`.
pub fn elogdet_wishart(n_t: usize, n_r: usize) -> Result<f64> {
    check_wishart_dims(n_t, n_r)?;
    (0..n_t).map(|i| digamma((n_r - i) as f64)).sum()
}

/// `Var[ln det(H H^H)] = Σ_{i<n_t} Ψ'(n_r - i)`.
pub fn varlogdet_wishart(n_t: usize, n_r: usize) -> Result<f64> {
    check_wishart_dims(n_t, n_r)?;
    (0..n_t).map(|i| trigamma((n_r - i) as f64)).sum()
}

/// High-SNR capacity proxy `Ĩ(T, ρ)` in nats per channel use.
pub fn i_tilde(coherence: usize, snr: f64, n_t: usize, n_r: usize) -> Result<f64> {
    check_validity(coherence, n_t, n_r)?;
    check_snr(snr)?;
    let t = coherence as f64;
    let m = n_t as f64;
    let frac = 1.0 - m / t;
    let gamma_ratio = log_multivariate_gamma(n_t, m)? - log_multivariate_gamma(n_t, t)?;
    Ok(m * frac * (snr / m).ln()
        + m * frac * (t.ln() - 1.0)
        + gamma_ratio / t
        + frac * elogdet_wishart(n_t, n_r)?)
}

/// `Ĩ(T, ρ)` written around a supplied value of `E[ln det(H H^H)]`:
/// `(1 - n_t/T) (n_t ln(Tρ / (e n_t)) + E[ln det]) + (1/T) Σ_k ln(Γ(n_t-k)/Γ(T-k))`.
///
/// With the exact log-det mean this equals [`i_tilde`]; passing a Monte Carlo
/// estimate gives a sampled version.
pub fn i_tilde_from_logdet_mean(
    coherence: usize,
    snr: f64,
    n_t: usize,
    n_r: usize,
    logdet_mean: f64,
) -> Result<f64> {
    check_validity(coherence, n_t, n_r)?;
    check_snr(snr)?;
    let t = coherence as f64;
    let m = n_t as f64;
    let frac = 1.0 - m / t;
    // the π^{n_t(n_t-1)/2} factors of both multivariate gammas cancel
    let mut gamma_ratio = 0.0;
    for k in 0..n_t {
        gamma_ratio += log_gamma(m - k as f64)? - log_gamma(t - k as f64)?;
    }
    Ok(frac * (m * (t * snr / m).ln() - m + logdet_mean) + gamma_ratio / t)
}

/// High-SNR dispersion proxy `Ṽ(T)`.
pub fn v_tilde(coherence: usize, n_t: usize, n_r: usize) -> Result<f64> {
    check_validity(coherence, n_t, n_r)?;
    let frac = n_t as f64 / coherence as f64;
    Ok(frac * (1.0 - frac) + (1.0 - frac).powi(2) * varlogdet_wishart(n_t, n_r)?)
}

/// `Ĩ(T,ρ) - sqrt(Ṽ(T)/L) Q⁻¹(ε)`.
pub fn na_noncoherent(s: &Scenario) -> Result<RateBreakdown> {
    s.validate()?;
    let capacity = i_tilde(s.coherence, s.snr, s.n_t, s.n_r)?;
    let v = v_tilde(s.coherence, s.n_t, s.n_r)?;
    let backoff = (v / s.blocks).sqrt() * q_inverse(s.eps.value())?;
    Ok(RateBreakdown::new(capacity, backoff, 0.0))
}

fn n_min(n_t: usize, n_r: usize) -> Result<f64> {
    if n_t == 0 || n_r == 0 {
        return Err(Error::dimension("n_t and n_r must be >= 1"));
    }
    Ok(n_t.min(n_r) as f64)
}

/// MIMO AWGN capacity `n_min ln(1 + ρ/n_min)`.
pub fn c_awgn(snr: f64, n_t: usize, n_r: usize) -> Result<f64> {
    check_snr(snr)?;
    let k = n_min(n_t, n_r)?;
    Ok(k * (snr / k).ln_1p())
}

/// MIMO AWGN dispersion `ρ (2 + ρ/n_min) / (1 + ρ/n_min)²`.
pub fn v_awgn(snr: f64, n_t: usize, n_r: usize) -> Result<f64> {
    check_snr(snr)?;
    let g = snr / n_min(n_t, n_r)?;
    Ok(snr * (2.0 + g) / ((1.0 + g) * (1.0 + g)))
}

fn check_blocklength(n: f64) -> Result<()> {
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::domain(format!("blocklength must be positive, got {n}")));
    }
    Ok(())
}

fn check_bits(k_bits: f64) -> Result<()> {
    if !(k_bits >= 0.0 && k_bits.is_finite()) {
        return Err(Error::domain(format!("payload must be >= 0 bits, got {k_bits}")));
    }
    Ok(())
}

fn check_eps(eps: f64) -> Result<f64> {
    let p = Probability::new(eps)?;
    if !p.is_open_unit() {
        return Err(Error::domain(format!("eps must lie in (0,1), got {eps}")));
    }
    Ok(eps)
}

/// `C - sqrt(V/n) Q⁻¹(ε) + ln(n)/(2n)` for the MIMO AWGN channel.
pub fn na_awgn(n: f64, eps: f64, snr: f64, n_t: usize, n_r: usize) -> Result<RateBreakdown> {
    if n < 1.0 {
        return Err(Error::domain(format!("blocklength must be >= 1, got {n}")));
    }
    let eps = check_eps(eps)?;
    let c = c_awgn(snr, n_t, n_r)?;
    let v = v_awgn(snr, n_t, n_r)?;
    Ok(RateBreakdown::new(c, (v / n).sqrt() * q_inverse(eps)?, 0.5 * n.ln() / n))
}

/// Packet error probability of a `k_bits` packet over `n` AWGN channel uses.
pub fn eps_awgn(k_bits: f64, n: f64, snr: f64, n_t: usize, n_r: usize) -> Result<Probability> {
    check_bits(k_bits)?;
    check_blocklength(n)?;
    let c = c_awgn(snr, n_t, n_r)?;
    let v = v_awgn(snr, n_t, n_r)?;
    Ok(q_function((n * c - k_bits * LN_2 + 0.5 * n.ln()) / (n * v).sqrt()))
}

/// Largest (real-valued) payload in bits whose AWGN error probability is `eps`.
pub fn payload_awgn(n: f64, eps: f64, snr: f64, n_t: usize, n_r: usize) -> Result<f64> {
    check_blocklength(n)?;
    let eps = check_eps(eps)?;
    let c = c_awgn(snr, n_t, n_r)?;
    let v = v_awgn(snr, n_t, n_r)?;
    Ok((n * c + 0.5 * n.ln() - (n * v).sqrt() * q_inverse(eps)?) / LN_2)
}

/// Packet error probability over the noncoherent channel,
/// `Q((n Ĩ - k ln 2) / sqrt(n T Ṽ))`, with `L = n/T` real.
pub fn eps_noncoherent(
    k_bits: f64,
    n: f64,
    coherence: usize,
    snr: f64,
    n_t: usize,
    n_r: usize,
) -> Result<Probability> {
    check_bits(k_bits)?;
    check_blocklength(n)?;
    let i = i_tilde(coherence, snr, n_t, n_r)?;
    let v = v_tilde(coherence, n_t, n_r)?;
    Ok(q_function(
        (n * i - k_bits * LN_2) / (n * coherence as f64 * v).sqrt(),
    ))
}

/// Largest (real-valued) payload in bits at error probability `eps` over the
/// noncoherent channel; the inverse of [`eps_noncoherent`] in `k`.
pub fn payload_noncoherent(
    n: f64,
    eps: f64,
    coherence: usize,
    snr: f64,
    n_t: usize,
    n_r: usize,
) -> Result<f64> {
    check_blocklength(n)?;
    let eps = check_eps(eps)?;
    let i = i_tilde(coherence, snr, n_t, n_r)?;
    let v = v_tilde(coherence, n_t, n_r)?;
    Ok((n * i - (n * coherence as f64 * v).sqrt() * q_inverse(eps)?) / LN_2)
}

/// Monte Carlo estimates of the coherent-channel capacity and dispersion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentMoments {
    pub capacity: MCEstimate,
    pub dispersion: MCEstimate,
}

#[derive(Debug, Clone, Copy, Default)]
struct CoherentAccumulator {
    log_sum: Moments,
    penalty: Moments,
    c_squared: Moments,
    c_sum: Moments,
}

impl CoherentAccumulator {
    fn merge(&mut self, o: &CoherentAccumulator) {
        self.log_sum.merge(&o.log_sum);
        self.penalty.merge(&o.penalty);
        self.c_squared.merge(&o.c_squared);
        self.c_sum.merge(&o.c_sum);
    }

    fn dispersion(&self, coherence: f64, gain: f64, n_t: f64) -> f64 {
        let eta1 = self.c_squared.mean();
        let eta2 = self.c_sum.mean().powi(2);
        coherence * self.log_sum.variance()
            + self.penalty.mean()
            + gain * gain * (eta1 - eta2 / n_t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct CacheKey {
    n_t: usize,
    n_r: usize,
    snr_bits: u64,
    coherence: usize,
    samples: usize,
    seed: u64,
}

/// Memo of coherent-channel moments keyed by
/// `(n_t, n_r, ρ, T, samples, seed)`. Readers run concurrently.
#[derive(Debug, Default)]
pub struct WishartMomentCache {
    entries: RwLock<HashMap<CacheKey, CoherentMoments>>,
}

impl WishartMomentCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// The process-wide cache used by [`coherent_moments`].
    pub fn global() -> &'static WishartMomentCache {
        static CACHE: OnceLock<WishartMomentCache> = OnceLock::new();
        CACHE.get_or_init(WishartMomentCache::new)
    }

    pub fn len(&self) -> usize {
        self.entries.read().map(|m| m.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cached moments, computing and storing them on a miss.
    pub fn get_or_compute(
        &self,
        coherence: usize,
        snr: f64,
        n_t: usize,
        n_r: usize,
        cfg: &McConfig,
    ) -> Result<CoherentMoments> {
        let key = CacheKey {
            n_t,
            n_r,
            snr_bits: snr.to_bits(),
            coherence,
            samples: cfg.samples,
            seed: cfg.seed,
        };
        if let Some(hit) = self.entries.read().ok().and_then(|m| m.get(&key).copied()) {
            return Ok(hit);
        }
        let fresh = estimate_coherent_moments(coherence, snr, n_t, n_r, cfg)?;
        if let Ok(mut m) = self.entries.write() {
            // a concurrent writer may have won; keep its entry
            return Ok(*m.entry(key).or_insert(fresh));
        }
        Ok(fresh)
    }
}

/// Coherent-channel `C_c` and `V_c` from shared eigenvalue draws of `H H^H`,
/// memoised in [`WishartMomentCache::global`].
pub fn coherent_moments(
    coherence: usize,
    snr: f64,
    n_t: usize,
    n_r: usize,
    cfg: &McConfig,
) -> Result<CoherentMoments> {
    WishartMomentCache::global().get_or_compute(coherence, snr, n_t, n_r, cfg)
}

/// Uncached estimator behind [`coherent_moments`].
///
/// The `V_c` standard error is a delete-one-batch jackknife over 32 batches.
pub fn estimate_coherent_moments(
    coherence: usize,
    snr: f64,
    n_t: usize,
    n_r: usize,
    cfg: &McConfig,
) -> Result<CoherentMoments> {
    if n_t == 0 || n_r == 0 || coherence == 0 {
        return Err(Error::dimension("n_t, n_r and T must be >= 1"));
    }
    check_snr(snr)?;
    let gain = snr / n_t as f64;
    let batches = map_batches(cfg, COHERENT_BATCHES, |rng, count| {
        let mut acc = CoherentAccumulator::default();
        for _ in 0..count {
            let h = sample_cn_matrix(n_t, n_r, rng)?;
            let (mut log_sum, mut penalty, mut c2, mut c1) = (0.0, 0.0, 0.0, 0.0);
            for lam in gram_eigenvalues(&h) {
                let x = 1.0 + gain * lam;
                log_sum += (gain * lam).ln_1p();
                penalty += 1.0 - 1.0 / (x * x);
                let c = lam / x;
                c1 += c;
                c2 += c * c;
            }
            acc.log_sum.push(log_sum);
            acc.penalty.push(penalty);
            acc.c_squared.push(c2);
            acc.c_sum.push(c1);
        }
        Ok(acc)
    })?;

    let mut total = CoherentAccumulator::default();
    for b in &batches {
        total.merge(b);
    }
    let t = coherence as f64;
    let m = n_t as f64;
    let dispersion = total.dispersion(t, gain, m);

    let nb = batches.len();
    let stderr = if nb < 2 {
        f64::INFINITY
    } else {
        let loo: Vec<f64> = (0..nb)
            .map(|skip| {
                let mut acc = CoherentAccumulator::default();
                for (i, b) in batches.iter().enumerate() {
                    if i != skip {
                        acc.merge(b);
                    }
                }
                acc.dispersion(t, gain, m)
            })
            .collect();
        let mean = loo.iter().sum::<f64>() / nb as f64;
        let ss: f64 = loo.iter().map(|v| (v - mean).powi(2)).sum();
        ((nb as f64 - 1.0) / nb as f64 * ss).sqrt()
    };

    Ok(CoherentMoments {
        capacity: MCEstimate::of_mean(&total.log_sum),
        dispersion: MCEstimate::with_stderr(dispersion, stderr, total.log_sum.count()),
    })
}

/// Packet error probability over the coherent channel,
/// `Q((n C_c - k ln 2) / sqrt(n V_c))`, using cached moments.
pub fn eps_coherent(
    k_bits: f64,
    n: f64,
    coherence: usize,
    snr: f64,
    n_t: usize,
    n_r: usize,
    cfg: &McConfig,
) -> Result<Probability> {
    check_bits(k_bits)?;
    check_blocklength(n)?;
    let mom = coherent_moments(coherence, snr, n_t, n_r, cfg)?;
    Ok(q_function(
        (n * mom.capacity.mean - k_bits * LN_2) / (n * mom.dispersion.mean).sqrt(),
    ))
}

/// [`eps_coherent`] together with a delta-method standard error propagated
/// from the Monte Carlo errors of `C_c` and `V_c`.
pub fn eps_coherent_with_stderr(
    k_bits: f64,
    n: f64,
    coherence: usize,
    snr: f64,
    n_t: usize,
    n_r: usize,
    cfg: &McConfig,
) -> Result<(Probability, f64)> {
    check_bits(k_bits)?;
    check_blocklength(n)?;
    let mom = coherent_moments(coherence, snr, n_t, n_r, cfg)?;
    let (c, v) = (mom.capacity.mean, mom.dispersion.mean);
    let z = (n * c - k_bits * LN_2) / (n * v).sqrt();
    let density = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let dz_dc = n / (n * v).sqrt();
    let dz_dv = -z / (2.0 * v);
    let se = density
        * ((dz_dc * mom.capacity.stderr).powi(2) + (dz_dv * mom.dispersion.stderr).powi(2)).sqrt();
    Ok((q_function(z), se))
}

/// Largest (real-valued) payload in bits at error probability `eps` over the
/// coherent channel.
pub fn payload_coherent(
    n: f64,
    eps: f64,
    coherence: usize,
    snr: f64,
    n_t: usize,
    n_r: usize,
    cfg: &McConfig,
) -> Result<f64> {
    check_blocklength(n)?;
    let eps = check_eps(eps)?;
    let mom = coherent_moments(coherence, snr, n_t, n_r, cfg)?;
    Ok((n * mom.capacity.mean - (n * mom.dispersion.mean).sqrt() * q_inverse(eps)?) / LN_2)
}

/// Coherent normal approximation `C_c - sqrt(V_c/n) Q⁻¹(ε)` with `n = L T`.
pub fn na_coherent(s: &Scenario, cfg: &McConfig) -> Result<RateBreakdown> {
    let mom = coherent_moments(s.coherence, s.snr, s.n_t, s.n_r, cfg)?;
    let n = s.blocklength();
    Ok(RateBreakdown::new(
        mom.capacity.mean,
        (mom.dispersion.mean / n).sqrt() * q_inverse(s.eps.value())?,
        0.0,
    ))
}
