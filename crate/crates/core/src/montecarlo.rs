//! Monte Carlo plumbing: streaming moment accumulators, estimates with
//! standard errors, and a chunked sampler that fans out over worker threads.
//!
//! Samples are generated in fixed-size chunks, and chunk `c` always draws
//! from `RngStream::new(seed, c)`. Chunk results are merged in chunk order,
//! so estimates depend on `(seed, samples)` only, never on the worker count.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::randmat::RngStream;

/// Number of draws per chunk (and per RNG stream).
pub const CHUNK_SIZE: usize = 1 << 14;

/// Streaming central moments up to order four.
///
/// Updates and merges follow Pébay's one-pass formulas.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2
            - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let na = self.n as f64;
        let nb = other.n as f64;
        let n = na + nb;
        let delta = other.mean - self.mean;
        let d2 = delta * delta;
        let d3 = d2 * delta;
        let d4 = d2 * d2;

        let mean = self.mean + delta * nb / n;
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 = self.m3
            + other.m3
            + d3 * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + d4 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n;

        self.n += other.n;
        self.mean = mean;
        self.m2 = m2;
        self.m3 = m3;
        self.m4 = m4;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance (0 for fewer than two samples).
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n as f64 - 1.0)
        }
    }

    /// Standard error of the sample mean.
    pub fn stderr_mean(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        (self.variance() / self.n as f64).sqrt()
    }

    /// Large-sample standard error of the sample variance,
    /// `sqrt((μ4 - σ⁴ (n-3)/(n-1)) / n)`.
    pub fn stderr_variance(&self) -> f64 {
        if self.n < 4 {
            return f64::INFINITY;
        }
        let n = self.n as f64;
        let mu4 = self.m4 / n;
        let var = self.variance();
        let v = (mu4 - var * var * (n - 3.0) / (n - 1.0)) / n;
        v.max(0.0).sqrt()
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::new();
        for x in iter {
            m.push(x);
        }
        m
    }
}

/// A Monte Carlo estimate with its standard error.
///
/// `stderr = sqrt(variance / samples)` always holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub variance: f64,
    pub samples: u64,
    pub stderr: f64,
}

impl MCEstimate {
    /// Estimate of `E[X]` from accumulated draws of `X`.
    pub fn of_mean(m: &Moments) -> Self {
        let variance = m.variance();
        let samples = m.count().max(1);
        MCEstimate {
            mean: m.mean(),
            variance,
            samples,
            stderr: (variance / samples as f64).sqrt(),
        }
    }

    /// Estimate of `Var(X)` from accumulated draws of `X`.
    pub fn of_variance(m: &Moments) -> Self {
        Self::with_stderr(m.variance(), m.stderr_variance(), m.count())
    }

    /// An estimate whose standard error was obtained separately (e.g. from
    /// batch means); `variance` is back-filled as `stderr² · samples`.
    pub fn with_stderr(mean: f64, stderr: f64, samples: u64) -> Self {
        let samples = samples.max(1);
        MCEstimate {
            mean,
            variance: stderr * stderr * samples as f64,
            samples,
            stderr,
        }
    }

    /// Affine image `a·X + b` of the estimated quantity.
    pub fn affine(&self, a: f64, b: f64) -> Self {
        MCEstimate {
            mean: a * self.mean + b,
            variance: a * a * self.variance,
            samples: self.samples,
            stderr: a.abs() * self.stderr,
        }
    }

    /// True when `value` lies within `k` standard errors of the mean.
    pub fn within(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.stderr
    }
}

/// Sampling budget for a Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
    pub workers: usize,
}

impl McConfig {
    pub fn new(samples: usize, seed: u64) -> Self {
        McConfig {
            samples,
            seed,
            workers: 1,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    fn check(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::domain("Monte Carlo sample count must be >= 1"));
        }
        Ok(())
    }

    fn chunks(&self) -> Vec<(u64, usize)> {
        let full = self.samples / CHUNK_SIZE;
        let rest = self.samples % CHUNK_SIZE;
        let mut out: Vec<(u64, usize)> = (0..full as u64).map(|c| (c, CHUNK_SIZE)).collect();
        if rest > 0 {
            out.push((full as u64, rest));
        }
        out
    }
}

/// Runs `per_chunk(rng, count)` on every chunk and returns the results in
/// chunk order.
pub fn map_chunks<T, F>(cfg: &McConfig, per_chunk: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, usize) -> Result<T> + Sync,
{
    cfg.check()?;
    run_plan(cfg, &cfg.chunks(), per_chunk)
}

/// Like [`map_chunks`] but splits the samples into `batches` near-equal
/// batches (batch `b` uses stream `b`), for batch-based error estimates.
/// The batch count is capped at the sample count.
pub fn map_batches<T, F>(cfg: &McConfig, batches: usize, per_batch: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, usize) -> Result<T> + Sync,
{
    cfg.check()?;
    let b = batches.clamp(1, cfg.samples);
    let plan: Vec<(u64, usize)> = (0..b)
        .map(|i| (i as u64, cfg.samples / b + usize::from(i < cfg.samples % b)))
        .collect();
    run_plan(cfg, &plan, per_batch)
}

fn run_plan<T, F>(cfg: &McConfig, plan: &[(u64, usize)], per_chunk: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, usize) -> Result<T> + Sync,
{
    let run = |&(stream, count): &(u64, usize)| {
        let mut rng = RngStream::new(cfg.seed, stream).rng();
        per_chunk(&mut rng, count)
    };
    if cfg.workers <= 1 || plan.len() == 1 {
        return plan.iter().map(run).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::domain(format!("cannot start worker pool: {e}")))?;
    pool.install(|| plan.par_iter().map(run).collect())
}

/// Accumulates moments of `draw(rng)` over `cfg.samples` draws.
pub fn sample_moments<F>(cfg: &McConfig, draw: F) -> Result<Moments>
where
    F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync,
{
    let parts = map_chunks(cfg, |rng, count| {
        let mut m = Moments::new();
        for _ in 0..count {
            m.push(draw(rng)?);
        }
        Ok(m)
    })?;
    let mut total = Moments::new();
    for p in &parts {
        total.merge(p);
    }
    Ok(total)
}

/// Collects `cfg.samples` draws of `draw(rng)` in deterministic order.
pub fn sample_values<F>(cfg: &McConfig, draw: F) -> Result<Vec<f64>>
where
    F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync,
{
    let parts = map_chunks(cfg, |rng, count| {
        (0..count).map(|_| draw(rng)).collect::<Result<Vec<f64>>>()
    })?;
    Ok(parts.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn naive(xs: &[f64]) -> (f64, f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let m2: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
        let m4: f64 = xs.iter().map(|x| (x - mean).powi(4)).sum();
        (mean, m2 / (n - 1.0), m4 / n)
    }

    proptest! {
        #[test]
        fn merge_equals_single_pass(xs in prop::collection::vec(-50.0f64..50.0, 4..200), split in 0usize..200) {
            let split = split.min(xs.len());
            let whole: Moments = xs.iter().copied().collect();
            let mut left: Moments = xs[..split].iter().copied().collect();
            let right: Moments = xs[split..].iter().copied().collect();
            left.merge(&right);
            let (mean, var, mu4) = naive(&xs);
            prop_assert!((whole.mean() - mean).abs() < 1e-9);
            prop_assert!((left.mean() - mean).abs() < 1e-9);
            prop_assert!((whole.variance() - var).abs() < 1e-7 * var.max(1.0));
            prop_assert!((left.variance() - var).abs() < 1e-7 * var.max(1.0));
            prop_assert!((left.m4 / xs.len() as f64 - mu4).abs() < 1e-6 * mu4.max(1.0));
            prop_assert!((whole.m4 / xs.len() as f64 - mu4).abs() < 1e-6 * mu4.max(1.0));
        }
    }

    #[test]
    fn estimate_invariant_holds() {
        let m: Moments = (0..1000).map(|i| (i % 7) as f64).collect();
        let e = MCEstimate::of_mean(&m);
        assert!((e.stderr - (e.variance / e.samples as f64).sqrt()).abs() < 1e-15);
        let v = MCEstimate::of_variance(&m);
        assert!((v.stderr - (v.variance / v.samples as f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn results_independent_of_worker_count() {
        let cfg = McConfig::new(3 * CHUNK_SIZE + 17, 99);
        let draw = |rng: &mut ChaCha8Rng| -> Result<f64> { Ok(rng.random::<f64>()) };
        let one = sample_moments(&cfg, draw).unwrap();
        let four = sample_moments(&cfg.with_workers(4), draw).unwrap();
        assert_eq!(one, four);
        assert_eq!(one.count(), cfg.samples as u64);
        let vals = sample_values(&cfg.with_workers(3), draw).unwrap();
        assert_eq!(vals.len(), cfg.samples);
        assert_eq!(vals, sample_values(&cfg, draw).unwrap());
    }

    #[test]
    fn batches_cover_all_samples() {
        let cfg = McConfig::new(1003, 4).with_workers(3);
        let sizes = map_batches(&cfg, 32, |_, count| Ok(count)).unwrap();
        assert_eq!(sizes.len(), 32);
        assert_eq!(sizes.iter().sum::<usize>(), 1003);
        assert_eq!(map_batches(&McConfig::new(5, 1), 32, |_, c| Ok(c)).unwrap().len(), 5);
    }

    #[test]
    fn zero_samples_rejected() {
        let cfg = McConfig::new(0, 1);
        assert!(sample_moments(&cfg, |_| Ok(0.0)).is_err());
    }

    #[test]
    fn variance_stderr_for_uniform() {
        // Var(U) = 1/12, Var(sample variance) ≈ (1/80 - 1/144) / n
        let cfg = McConfig::new(200_000, 5);
        let m = sample_moments(&cfg, |rng| Ok(rng.random::<f64>())).unwrap();
        let expected = ((1.0 / 80.0 - 1.0 / 144.0) / 200_000f64).sqrt();
        assert!((m.stderr_variance() / expected - 1.0).abs() < 0.05);
        assert!((m.variance() - 1.0 / 12.0).abs() < 4.0 * expected);
    }
}
