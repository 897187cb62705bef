use std::f64::consts::LN_2;

use fblrate::aloha::{self, AlohaScenario, ChannelModel};
use fblrate::mcbounds::{delta_bar, empirical_converse, istar_centered_sample, xi_gap_limit};
use fblrate::montecarlo::{sample_moments, McConfig, MCEstimate};
use fblrate::normapprox::{
    coherent_moments, elogdet_wishart, eps_awgn, eps_coherent_with_stderr, eps_noncoherent,
    na_awgn, na_coherent, na_noncoherent, v_tilde, varlogdet_wishart, DEFAULT_COHERENT_SAMPLES,
};
use fblrate::randmat::wishart_logdet;
use fblrate::specfun::q_inverse;
use fblrate::sweeps::{
    crossing_points, err_vs_snr, optimal_nt, optimal_nt_among, rate_vs_t, ChannelFamily, ErrConfig,
};
use fblrate::{Error, RateBreakdown, Result, Scenario};
use serde_json::{json, Map, Value};

use crate::args::*;
use crate::output::{num, opt_num, Results};

pub const DEFAULT_CONVERSE_SAMPLES: usize = 100_000;
pub const DEFAULT_MOMENT_SAMPLES: usize = 100_000;
pub const DEFAULT_VARIANCE_LAW_SAMPLES: usize = 1_000_000;

pub const VARIANCE_LAW_TRIPLES: [(usize, usize, usize); 3] = [(1, 2, 4), (2, 2, 8), (2, 4, 12)];
pub const WISHART_PAIRS: [(usize, usize); 4] = [(1, 1), (1, 2), (2, 2), (2, 4)];
const POSITIVITY_MAX_NR: usize = 8;
const POSITIVITY_MAX_T: usize = 64;

pub struct Outcome {
    pub results: Results,
    pub mc: Option<Value>,
}

impl Outcome {
    fn plain(results: Results) -> Self {
        Outcome { results, mc: None }
    }
}

fn mc_config(opts: &McOpts, default_samples: usize) -> McConfig {
    McConfig::new(opts.samples.unwrap_or(default_samples), opts.seed).with_workers(opts.workers)
}

fn mc_metadata(cfg: &McConfig, stderr_columns: &[&str]) -> Value {
    json!({
        "seed": cfg.seed,
        "samples": cfg.samples,
        "workers": cfg.workers,
        "stderr_columns": stderr_columns,
    })
}

fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

/// Resolves `(T, n, L)` from whichever of `--T`, `--L`, `--n` were given.
fn resolve_length(
    coherence: Option<usize>,
    blocks: Option<f64>,
    n: Option<f64>,
    need_t: bool,
) -> Result<(Option<usize>, f64, Option<f64>)> {
    if need_t && coherence.is_none() {
        return Err(domain("this channel needs --T"));
    }
    match (coherence, blocks, n) {
        (Some(t), Some(l), Some(n)) => {
            let implied = l * t as f64;
            if (implied - n).abs() > 1e-9 * n.abs().max(1.0) {
                return Err(domain(format!("--n {n} disagrees with --L·--T = {implied}")));
            }
            Ok((Some(t), n, Some(l)))
        }
        (Some(t), Some(l), None) => Ok((Some(t), l * t as f64, Some(l))),
        (Some(t), None, Some(n)) => Ok((Some(t), n, Some(n / t as f64))),
        (None, None, Some(n)) => Ok((None, n, None)),
        (None, Some(_), _) => Err(domain("--L needs --T")),
        _ => Err(domain("give the blocklength with --n or --L")),
    }
}

fn breakdown_map(b: &RateBreakdown) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("capacity_term".into(), num(b.capacity_term));
    m.insert("dispersion_term".into(), num(b.dispersion_term));
    m.insert("correction_term".into(), num(b.correction_term));
    m.insert("total".into(), num(b.total));
    m
}

pub fn rate(a: &RateArgs) -> Result<Outcome> {
    let snr = a.snr.linear();
    let (coherence, n, blocks) =
        resolve_length(a.coherence, a.blocks, a.n, a.channel != Channel::Awgn)?;
    let mut mc = None;
    let mut m = match a.channel {
        Channel::Awgn => breakdown_map(&na_awgn(n, a.eps, snr, a.nt, a.nr)?),
        Channel::Noncoherent => {
            let s = Scenario::new(a.nt, a.nr, coherence.unwrap_or(0), blocks.unwrap_or(0.0), snr, a.eps)?;
            breakdown_map(&na_noncoherent(&s)?)
        }
        Channel::Coherent => {
            let t = coherence.unwrap_or(0);
            let s = Scenario::new(a.nt, a.nr, t, blocks.unwrap_or(0.0), snr, a.eps)?;
            let cfg = mc_config(&a.mc, DEFAULT_COHERENT_SAMPLES);
            let b = na_coherent(&s, &cfg)?;
            let mom = coherent_moments(t, snr, a.nt, a.nr, &cfg)?;
            let mut m = breakdown_map(&b);
            // total = C - sqrt(V/n) Q⁻¹(ε): first-order error propagation
            let dv = q_inverse(a.eps)? / (2.0 * (mom.dispersion.mean * n).sqrt());
            let total_se = mom.capacity.stderr.hypot(dv * mom.dispersion.stderr);
            m.insert("capacity_term_stderr".into(), num(mom.capacity.stderr));
            m.insert("dispersion".into(), num(mom.dispersion.mean));
            m.insert("dispersion_stderr".into(), num(mom.dispersion.stderr));
            m.insert("total_stderr".into(), num(total_se));
            mc = Some(mc_metadata(
                &cfg,
                &["capacity_term_stderr", "dispersion_stderr", "total_stderr"],
            ));
            m
        }
    };
    m.insert("blocklength".into(), num(n));
    m.insert("channel".into(), Value::from(a.channel.name()));
    Ok(Outcome { results: Results::Scalars(m), mc })
}

pub fn errprob(a: &ErrprobArgs) -> Result<Outcome> {
    let snr = a.snr.linear();
    let (coherence, n, _) = resolve_length(a.coherence, a.blocks, a.n, a.channel != Channel::Awgn)?;
    let t = coherence.unwrap_or(0);
    let mut m = Map::new();
    let mut mc = None;
    match a.channel {
        Channel::Awgn => {
            m.insert("eps".into(), num(eps_awgn(a.bits, n, snr, a.nt, a.nr)?.value()));
        }
        Channel::Noncoherent => {
            fblrate::normapprox::check_validity(t, a.nt, a.nr)?;
            m.insert("eps".into(), num(eps_noncoherent(a.bits, n, t, snr, a.nt, a.nr)?.value()));
        }
        Channel::Coherent => {
            let cfg = mc_config(&a.mc, DEFAULT_COHERENT_SAMPLES);
            let (p, se) = eps_coherent_with_stderr(a.bits, n, t, snr, a.nt, a.nr, &cfg)?;
            m.insert("eps".into(), num(p.value()));
            m.insert("eps_stderr".into(), num(se));
            mc = Some(mc_metadata(&cfg, &["eps_stderr"]));
        }
    }
    m.insert("bits".into(), num(a.bits));
    m.insert("blocklength".into(), num(n));
    m.insert("channel".into(), Value::from(a.channel.name()));
    Ok(Outcome { results: Results::Scalars(m), mc })
}

fn pair_configs(nt: &[usize], nr: &[usize]) -> Result<Vec<(usize, usize)>> {
    match (nt.len(), nr.len()) {
        (_, 1) => Ok(nt.iter().map(|&t| (t, nr[0])).collect()),
        (a, b) if a == b => Ok(nt.iter().copied().zip(nr.iter().copied()).collect()),
        (a, b) => Err(domain(format!(
            "--nt lists {a} values but --nr lists {b}; give one --nr or one per --nt"
        ))),
    }
}

pub fn sweep_t(a: &SweepTArgs) -> Result<Outcome> {
    if a.t_min == 0 || a.t_min > a.t_max {
        return Err(domain(format!("need 1 <= t-min <= t-max (got {}..{})", a.t_min, a.t_max)));
    }
    let configs = pair_configs(&a.nt, &a.nr)?;
    for &(t, r) in &configs {
        if r < t {
            return Err(Error::Validity(format!("n_r ≥ n_t violated (n_t={t}, n_r={r})")));
        }
    }
    let ts: Vec<usize> = (a.t_min..=a.t_max).collect();
    let table = rate_vs_t(a.n, a.eps, a.snr.linear(), &configs, &ts)?;
    Ok(Outcome::plain(Results::Sweep(table)))
}

/// `min, min+step, …` up to `max` inclusive, rounded to 12 decimals so that
/// steps like 0.1 print cleanly.
pub fn db_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite()) || !(min <= max) || !min.is_finite() || !max.is_finite() {
        return Err(domain(format!("bad SNR grid {min}..{max} step {step}")));
    }
    let count = ((max - min) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| ((min + i as f64 * step) * 1e12).round() / 1e12).collect())
}

pub fn sweep_snr(a: &SweepSnrArgs) -> Result<Outcome> {
    let pairs = pair_configs(&a.nt, &a.nr)?;
    let mut configs = Vec::new();
    for ch in &a.channel {
        let family = match ch {
            Channel::Noncoherent => ChannelFamily::Noncoherent,
            Channel::Coherent => ChannelFamily::Coherent,
            Channel::Awgn => ChannelFamily::Awgn,
        };
        for &(n_t, n_r) in &pairs {
            configs.push(ErrConfig { family, n_t, n_r });
        }
    }
    let grid = db_grid(a.snr_min_db, a.snr_max_db, a.snr_step_db)?;
    let cfg = mc_config(&a.mc, DEFAULT_COHERENT_SAMPLES);
    let table = err_vs_snr(a.rate, a.coherence, a.blocks, &grid, &configs, &cfg)?;
    let mc = a.channel.contains(&Channel::Coherent).then(|| {
        let cols: Vec<String> = table
            .columns
            .iter()
            .filter(|c| c.stderr.is_some())
            .map(|c| format!("{}_stderr", c.label))
            .collect();
        let refs: Vec<&str> = cols.iter().map(String::as_str).collect();
        mc_metadata(&cfg, &refs)
    });
    Ok(Outcome { results: Results::Sweep(table), mc })
}

pub fn antennas(a: &AntennasArgs) -> Result<Outcome> {
    let snr = a.snr.linear();
    let list: Vec<usize> = a.nt_list.clone().unwrap_or_else(|| (1..=a.nr).collect());
    let reports = crossing_points(a.n, a.eps, snr, a.nr, &list, a.t_max)?;
    let columns = ["kind", "n1", "n2", "T", "direction"].map(String::from).to_vec();
    let mut rows = Vec::new();
    for r in &reports {
        if r.crossings.is_empty() {
            rows.push(vec![json!("none"), json!(r.n1), json!(r.n2), Value::Null, Value::Null]);
        }
        for c in &r.crossings {
            let dir = serde_json::to_value(c.direction).unwrap_or(Value::Null);
            rows.push(vec![json!("crossing"), json!(r.n1), json!(r.n2), json!(c.coherence), dir]);
        }
    }
    if let Some(t) = a.coherence {
        let best = match &a.nt_list {
            Some(l) => optimal_nt_among(t, a.n, a.eps, snr, a.nr, l)?,
            None => optimal_nt(t, a.n, a.eps, snr, a.nr)?,
        };
        rows.push(vec![json!("optimal_nt"), json!(best), Value::Null, json!(t), Value::Null]);
    }
    Ok(Outcome::plain(Results::Rows { columns, rows }))
}

pub fn aloha_plan(a: &AlohaArgs) -> Result<Outcome> {
    let snr = a.snr.linear();
    let need_t = || a.coherence.ok_or_else(|| domain("fading channels need --T"));
    let mut cfg = None;
    let model = match a.channel {
        Channel::Awgn => ChannelModel::Awgn { n_t: a.nt, n_r: a.nr },
        Channel::Noncoherent => ChannelModel::Noncoherent { n_t: a.nt, n_r: a.nr, coherence: need_t()? },
        Channel::Coherent => {
            let c = mc_config(&a.mc, DEFAULT_COHERENT_SAMPLES);
            cfg = Some(c);
            ChannelModel::Coherent { n_t: a.nt, n_r: a.nr, coherence: need_t()?, mc: c }
        }
    };
    let sc = AlohaScenario::new(a.devices, a.n, snr, model, a.threshold)?;
    let plan = aloha::optimize(&sc)?;
    let (s_c, p_c) = aloha::collision_optimum(a.devices, sc.max_slots())?;
    let n_slot = a.n / plan.s_star as f64;

    let mut m = Map::new();
    m.insert("s_star".into(), json!(plan.s_star));
    m.insert("k_star".into(), json!(plan.k_star));
    m.insert("eps_star".into(), num(plan.eps_star.value()));
    m.insert("eps_at_k_star".into(), num(plan.eps_at_k_star.value()));
    m.insert("p_success".into(), num(plan.p_success.value()));
    m.insert("k_real".into(), num(plan.k_real));
    m.insert("slot_length".into(), num(n_slot));
    m.insert("collision_only_s".into(), json!(s_c));
    m.insert("collision_only_p_success".into(), num(p_c.value()));
    m.insert("channel".into(), Value::from(model.name()));

    let mut mc = None;
    if let (Some(cfg), ChannelModel::Coherent { coherence, .. }) = (cfg, model) {
        let (_, eps_se) =
            eps_coherent_with_stderr(plan.k_star as f64, n_slot, coherence, snr, a.nt, a.nr, &cfg)?;
        let mom = coherent_moments(coherence, snr, a.nt, a.nr, &cfg)?;
        // k_real = (n C - sqrt(n V) Q⁻¹(ε*)) / ln 2
        let qi = q_inverse(plan.eps_star.value())?;
        let dv = n_slot.sqrt() * qi / (2.0 * mom.dispersion.mean.sqrt());
        let k_se = (n_slot * mom.capacity.stderr).hypot(dv * mom.dispersion.stderr) / LN_2;
        m.insert("eps_at_k_star_stderr".into(), num(eps_se));
        m.insert("k_real_stderr".into(), num(k_se));
        mc = Some(mc_metadata(&cfg, &["eps_at_k_star_stderr", "k_real_stderr"]));
    }
    Ok(Outcome { results: Results::Scalars(m), mc })
}

pub fn converse(a: &ConverseArgs) -> Result<Outcome> {
    let s = Scenario::new(a.nt, a.nr, a.coherence, a.blocks, a.snr.linear(), a.eps)?;
    let cfg = mc_config(&a.mc, DEFAULT_CONVERSE_SAMPLES);
    let r = empirical_converse(&s, &cfg)?;
    // the normal approximation itself needs eps < 1/2
    let na = na_noncoherent(&s).ok().map(|b| b.total);
    let mut m = Map::new();
    m.insert("rate_upper_bound".into(), num(r.rate_upper_bound));
    m.insert("rate_upper_bound_stderr".into(), num(r.stderr));
    m.insert("threshold_log_xi".into(), num(r.threshold_log_xi));
    m.insert("tail_estimate".into(), num(r.tail_estimate.value()));
    m.insert("samples".into(), json!(r.samples));
    m.insert("realizations".into(), json!(r.realizations));
    m.insert("empirical".into(), json!(r.empirical));
    m.insert("normal_approximation".into(), opt_num(na));
    Ok(Outcome {
        results: Results::Scalars(m),
        mc: Some(mc_metadata(&cfg, &["rate_upper_bound_stderr"])),
    })
}

/// One line of the validation table.
struct Check {
    name: &'static str,
    dims: (Value, Value, Value),
    estimate: f64,
    expected: f64,
    stderr: Option<f64>,
    pass: bool,
}

impl Check {
    fn statistical(name: &'static str, dims: (Value, Value, Value), est: &MCEstimate, expected: f64) -> Self {
        let z = (est.mean - expected) / est.stderr;
        Check { name, dims, estimate: est.mean, expected, stderr: Some(est.stderr), pass: z.abs() <= 3.0 }
    }

    fn row(&self) -> Vec<Value> {
        let z = self.stderr.map(|se| (self.estimate - self.expected) / se);
        vec![
            json!(self.name),
            self.dims.0.clone(),
            self.dims.1.clone(),
            self.dims.2.clone(),
            num(self.estimate),
            num(self.expected),
            self.stderr.map_or(Value::Null, num),
            z.map_or(Value::Null, num),
            json!(self.pass),
        ]
    }
}

/// Sample variance of the centred information-density proxy, to be compared
/// with `T² Ṽ(T)`.
pub fn variance_law(coherence: usize, n_t: usize, n_r: usize, cfg: &McConfig) -> Result<(MCEstimate, f64)> {
    let m = sample_moments(cfg, |rng| istar_centered_sample(coherence, n_t, n_r, rng).map(|s| s.value))?;
    let t = coherence as f64;
    Ok((MCEstimate::of_variance(&m), t * t * v_tilde(coherence, n_t, n_r)?))
}

/// MC mean and variance of `ln det(H H^H)` for a Wishart draw.
pub fn wishart_moments(n_t: usize, n_r: usize, cfg: &McConfig) -> Result<(MCEstimate, MCEstimate)> {
    let m = sample_moments(cfg, |rng| wishart_logdet(n_t, n_r, rng))?;
    Ok((MCEstimate::of_mean(&m), MCEstimate::of_variance(&m)))
}

/// Number of grid points where `delta_bar` or `xi_gap_limit` is not positive.
pub fn positivity_failures(max_nr: usize, max_t: usize) -> Result<(usize, usize, usize)> {
    let (mut points, mut bad_delta, mut bad_xi) = (0, 0, 0);
    for n_r in 1..=max_nr {
        for n_t in 1..=n_r {
            for t in n_t + n_r + 1..=max_t {
                points += 1;
                if delta_bar(t, n_t, n_r)? <= 0.0 {
                    bad_delta += 1;
                }
                if xi_gap_limit(t, n_t, n_r)? <= 0.0 {
                    bad_xi += 1;
                }
            }
        }
    }
    Ok((points, bad_delta, bad_xi))
}

pub fn mc_validate(a: &McValidateArgs) -> Result<Outcome> {
    let law_cfg = mc_config(&a.mc, DEFAULT_VARIANCE_LAW_SAMPLES);
    let moment_cfg = mc_config(&a.mc, DEFAULT_MOMENT_SAMPLES);
    let mut checks = Vec::new();
    for (n_t, n_r, t) in VARIANCE_LAW_TRIPLES {
        let (est, expected) = variance_law(t, n_t, n_r, &law_cfg)?;
        checks.push(Check::statistical("variance_law", (json!(n_t), json!(n_r), json!(t)), &est, expected));
    }
    for (n_t, n_r) in WISHART_PAIRS {
        let (mean, var) = wishart_moments(n_t, n_r, &moment_cfg)?;
        let dims = (json!(n_t), json!(n_r), Value::Null);
        checks.push(Check::statistical("wishart_logdet_mean", dims.clone(), &mean, elogdet_wishart(n_t, n_r)?));
        checks.push(Check::statistical("wishart_logdet_var", dims, &var, varlogdet_wishart(n_t, n_r)?));
    }
    let (points, bad_delta, bad_xi) = positivity_failures(POSITIVITY_MAX_NR, POSITIVITY_MAX_T)?;
    for (name, bad) in [("delta_bar_positive", bad_delta), ("xi_gap_limit_positive", bad_xi)] {
        checks.push(Check {
            name,
            dims: (Value::Null, json!(POSITIVITY_MAX_NR), json!(POSITIVITY_MAX_T)),
            estimate: bad as f64,
            expected: 0.0,
            stderr: None,
            pass: bad == 0,
        });
    }
    let all_passed = checks.iter().all(|c| c.pass);
    let columns = ["check", "n_t", "n_r", "T", "estimate", "expected", "stderr", "z_score", "pass"]
        .map(String::from)
        .to_vec();
    let rows = checks.iter().map(Check::row).collect();
    let mc = json!({
        "seed": a.mc.seed,
        "workers": a.mc.workers,
        "variance_law_samples": law_cfg.samples,
        "moment_samples": moment_cfg.samples,
        "positivity_grid_points": points,
        "stderr_columns": ["stderr"],
        "all_passed": all_passed,
    });
    Ok(Outcome { results: Results::Rows { columns, rows }, mc: Some(mc) })
}
