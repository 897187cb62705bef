//! Grid evaluations of the approximations: rate versus coherence length at
//! fixed blocklength, error probability versus SNR, crossing points between
//! transmit-antenna counts, and the best antenna count for a given `T`.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::montecarlo::McConfig;
use crate::normapprox::{eps_awgn, eps_coherent_with_stderr, eps_noncoherent, na_noncoherent, Scenario};

/// Default upper end of crossing-point scans.
pub const DEFAULT_T_MAX: usize = 256;

/// One labelled series over the sweep axis; `None` marks points outside the
/// domain of the approximation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepColumn {
    pub label: String,
    pub values: Vec<Option<f64>>,
    /// Monte Carlo standard errors, present for sampled quantities only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis_name: String,
    pub axis_values: Vec<f64>,
    /// Name (with unit) of the tabulated quantity, e.g. `rate_nats_per_cu`.
    pub value_name: String,
    pub columns: Vec<SweepColumn>,
    pub metadata: BTreeMap<String, String>,
}

impl SweepTable {
    pub fn new(axis_name: &str, axis_values: Vec<f64>, value_name: &str) -> Self {
        SweepTable {
            axis_name: axis_name.to_string(),
            axis_values,
            value_name: value_name.to_string(),
            columns: Vec::new(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn push_column(&mut self, column: SweepColumn) -> Result<()> {
        if column.values.len() != self.axis_values.len()
            || column.stderr.as_ref().is_some_and(|s| s.len() != self.axis_values.len())
        {
            return Err(Error::shape(format!(
                "column '{}' has {} values for an axis of {}",
                column.label,
                column.values.len(),
                self.axis_values.len()
            )));
        }
        self.columns.push(column);
        Ok(())
    }

    pub fn column(&self, label: &str) -> Option<&SweepColumn> {
        self.columns.iter().find(|c| c.label == label)
    }
}

fn config_label(n_t: usize, n_r: usize) -> String {
    format!("nt{n_t}_nr{n_r}")
}

/// Noncoherent rate at fixed blocklength `n`, or `None` outside the domain.
fn rate_at(n: f64, eps: f64, snr: f64, n_t: usize, n_r: usize, coherence: usize) -> Option<f64> {
    let s = Scenario::new(n_t, n_r, coherence, n / coherence as f64, snr, eps).ok()?;
    na_noncoherent(&s).ok().map(|r| r.total)
}

/// Normal-approximation rate versus `T` at fixed blocklength `n` (`L = n/T`),
/// one column per `(n_t, n_r)` configuration.
pub fn rate_vs_t(
    n: f64,
    eps: f64,
    snr: f64,
    configs: &[(usize, usize)],
    t_range: &[usize],
) -> Result<SweepTable> {
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::domain(format!("blocklength must be positive, got {n}")));
    }
    let mut table = SweepTable::new(
        "T",
        t_range.iter().map(|&t| t as f64).collect(),
        "rate_nats_per_cu",
    );
    for &(n_t, n_r) in configs {
        let values = t_range
            .iter()
            .map(|&t| if t == 0 { None } else { rate_at(n, eps, snr, n_t, n_r, t) })
            .collect();
        table.push_column(SweepColumn { label: config_label(n_t, n_r), values, stderr: None })?;
    }
    table.metadata.insert("n".into(), n.to_string());
    table.metadata.insert("eps".into(), eps.to_string());
    table.metadata.insert("snr".into(), snr.to_string());
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingDirection {
    /// `n2` antennas become at least as good as `n1` at this `T`.
    Up,
    /// `n2` antennas fall behind `n1` again at this `T`.
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crossing {
    pub coherence: usize,
    pub direction: CrossingDirection,
}

/// Sign changes of `NA(n2, T) - NA(n1, T)` on the integer `T` grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossingReport {
    pub n1: usize,
    pub n2: usize,
    pub crossings: Vec<Crossing>,
}

impl CrossingReport {
    pub fn upward(&self) -> Vec<usize> {
        self.crossings
            .iter()
            .filter(|c| c.direction == CrossingDirection::Up)
            .map(|c| c.coherence)
            .collect()
    }

    pub fn all(&self) -> Vec<usize> {
        self.crossings.iter().map(|c| c.coherence).collect()
    }
}

/// Crossing `T` values for every pair `n1 < n2` drawn from `nt_list`,
/// scanning `T` from `n2 + n_r` to `t_max`.
pub fn crossing_points(
    n: f64,
    eps: f64,
    snr: f64,
    n_r: usize,
    nt_list: &[usize],
    t_max: usize,
) -> Result<Vec<CrossingReport>> {
    let mut list = nt_list.to_vec();
    list.sort_unstable();
    if list.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::domain("antenna counts must be distinct"));
    }
    if list.iter().any(|&m| m == 0 || m > n_r) {
        return Err(Error::validity(format!(
            "transmit antenna counts must lie in [1, n_r = {n_r}]"
        )));
    }
    let mut out = Vec::new();
    for (i, &n1) in list.iter().enumerate() {
        for &n2 in &list[i + 1..] {
            out.push(crossings_for_pair(n, eps, snr, n_r, n1, n2, t_max)?);
        }
    }
    Ok(out)
}

/// Crossings of a single pair `n1 < n2`.
pub fn crossings_for_pair(
    n: f64,
    eps: f64,
    snr: f64,
    n_r: usize,
    n1: usize,
    n2: usize,
    t_max: usize,
) -> Result<CrossingReport> {
    if n1 == n2 {
        return Err(Error::domain("a crossing needs two different antenna counts"));
    }
    let (n1, n2) = (n1.min(n2), n1.max(n2));
    let start = n2 + n_r;
    let diff = |t: usize| -> Result<f64> {
        let a = rate_at(n, eps, snr, n1, n_r, t);
        let b = rate_at(n, eps, snr, n2, n_r, t);
        match (a, b) {
            (Some(a), Some(b)) => Ok(b - a),
            _ => Err(Error::validity(format!(
                "no valid approximation for n_t ∈ {{{n1}, {n2}}} at T={t}, n={n}, eps={eps}"
            ))),
        }
    };
    let mut crossings = Vec::new();
    if t_max > start {
        let mut prev = diff(start)?;
        for t in start + 1..=t_max {
            let cur = diff(t)?;
            if prev < 0.0 && cur >= 0.0 {
                crossings.push(Crossing { coherence: t, direction: CrossingDirection::Up });
            } else if prev >= 0.0 && cur < 0.0 {
                crossings.push(Crossing { coherence: t, direction: CrossingDirection::Down });
            }
            prev = cur;
        }
    }
    Ok(CrossingReport { n1, n2, crossings })
}

/// Antenna count among `candidates` with the largest rate at `T`; ties go to
/// fewer antennas.
pub fn optimal_nt_among(
    coherence: usize,
    n: f64,
    eps: f64,
    snr: f64,
    n_r: usize,
    candidates: &[usize],
) -> Result<usize> {
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    let mut best: Option<(usize, f64)> = None;
    for m in sorted {
        if let Some(r) = rate_at(n, eps, snr, m, n_r, coherence) {
            if best.is_none_or(|(_, b)| r > b) {
                best = Some((m, r));
            }
        }
    }
    best.map(|(m, _)| m).ok_or_else(|| {
        Error::validity(format!(
            "no candidate n_t is valid at T={coherence}, n_r={n_r} (need T ≥ n_t + n_r)"
        ))
    })
}

/// Best `n_t ∈ [1, min(n_r, T - n_r)]` at coherence length `T`.
pub fn optimal_nt(coherence: usize, n: f64, eps: f64, snr: f64, n_r: usize) -> Result<usize> {
    if n_r == 0 || coherence < n_r + 1 {
        return Err(Error::validity(format!(
            "no valid n_t: need T ≥ 1 + n_r (T={coherence}, n_r={n_r})"
        )));
    }
    let top = n_r.min(coherence - n_r);
    let candidates: Vec<usize> = (1..=top).collect();
    optimal_nt_among(coherence, n, eps, snr, n_r, &candidates)
}

/// Channel family evaluated in an error-versus-SNR sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelFamily {
    Noncoherent,
    Coherent,
    Awgn,
}

impl ChannelFamily {
    pub fn name(self) -> &'static str {
        match self {
            ChannelFamily::Noncoherent => "noncoherent",
            ChannelFamily::Coherent => "coherent",
            ChannelFamily::Awgn => "awgn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrConfig {
    pub family: ChannelFamily,
    pub n_t: usize,
    pub n_r: usize,
}

/// Packet error probability versus SNR (dB) at fixed rate `R` nats per
/// channel use, i.e. `k ln 2 = R L T` over `n = L T` channel uses.
pub fn err_vs_snr(
    rate: f64,
    coherence: usize,
    blocks: f64,
    snr_db: &[f64],
    configs: &[ErrConfig],
    mc: &McConfig,
) -> Result<SweepTable> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::domain(format!("rate must be >= 0, got {rate}")));
    }
    if coherence == 0 || !(blocks > 0.0 && blocks.is_finite()) {
        return Err(Error::domain("need T >= 1 and L > 0"));
    }
    let n = blocks * coherence as f64;
    let k_bits = rate * n / LN_2;
    let mut table = SweepTable::new("snr_db", snr_db.to_vec(), "eps");
    for cfg in configs {
        let mut values = Vec::with_capacity(snr_db.len());
        let mut errs = Vec::with_capacity(snr_db.len());
        for &db in snr_db {
            let snr = 10f64.powf(db / 10.0);
            let (v, e) = match cfg.family {
                ChannelFamily::Noncoherent => (
                    eps_noncoherent(k_bits, n, coherence, snr, cfg.n_t, cfg.n_r)
                        .ok()
                        .map(f64::from),
                    None,
                ),
                ChannelFamily::Awgn => (
                    eps_awgn(k_bits, n, snr, cfg.n_t, cfg.n_r).ok().map(f64::from),
                    None,
                ),
                ChannelFamily::Coherent => {
                    match eps_coherent_with_stderr(k_bits, n, coherence, snr, cfg.n_t, cfg.n_r, mc) {
                        Ok((p, se)) => (Some(p.value()), Some(se)),
                        Err(_) => (None, None),
                    }
                }
            };
            values.push(v);
            errs.push(e);
        }
        let stderr = (cfg.family == ChannelFamily::Coherent).then_some(errs);
        table.push_column(SweepColumn {
            label: format!("{}_{}", cfg.family.name(), config_label(cfg.n_t, cfg.n_r)),
            values,
            stderr,
        })?;
    }
    table.metadata.insert("rate_nats_per_cu".into(), rate.to_string());
    table.metadata.insert("T".into(), coherence.to_string());
    table.metadata.insert("L".into(), blocks.to_string());
    Ok(table)
}
