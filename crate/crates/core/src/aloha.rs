//! Slotted-ALOHA planning for short packets: `d` devices share a frame of `n`
//! channel uses split into `s` slots, each device picks one slot at random,
//! and a packet succeeds if it does not collide and is decoded.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::montecarlo::McConfig;
use crate::normapprox::{
    check_validity, eps_awgn, eps_coherent, eps_noncoherent, payload_awgn, payload_coherent,
    payload_noncoherent, DEFAULT_COHERENT_SAMPLES, DEFAULT_SEED,
};
use crate::specfun::Probability;

/// Channel used inside each slot, with the dimensions it needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelModel {
    Awgn {
        n_t: usize,
        n_r: usize,
    },
    Coherent {
        n_t: usize,
        n_r: usize,
        coherence: usize,
        mc: McConfig,
    },
    Noncoherent {
        n_t: usize,
        n_r: usize,
        coherence: usize,
    },
    /// Error-free decoding up to `max_bits`, certain failure beyond.
    Ideal {
        max_bits: u64,
    },
}

impl ChannelModel {
    /// Coherent model with the default Monte Carlo budget and seed.
    pub fn coherent(n_t: usize, n_r: usize, coherence: usize) -> Self {
        ChannelModel::Coherent {
            n_t,
            n_r,
            coherence,
            mc: McConfig::new(DEFAULT_COHERENT_SAMPLES, DEFAULT_SEED),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ChannelModel::Awgn { .. } => "awgn",
            ChannelModel::Coherent { .. } => "coherent",
            ChannelModel::Noncoherent { .. } => "noncoherent",
            ChannelModel::Ideal { .. } => "ideal",
        }
    }

    /// Packet error probability of `k_bits` over `n_slot` channel uses.
    pub fn error_probability(&self, k_bits: f64, n_slot: f64, snr: f64) -> Result<Probability> {
        match *self {
            ChannelModel::Awgn { n_t, n_r } => eps_awgn(k_bits, n_slot, snr, n_t, n_r),
            ChannelModel::Coherent { n_t, n_r, coherence, mc } => {
                eps_coherent(k_bits, n_slot, coherence, snr, n_t, n_r, &mc)
            }
            ChannelModel::Noncoherent { n_t, n_r, coherence } => {
                eps_noncoherent(k_bits, n_slot, coherence, snr, n_t, n_r)
            }
            ChannelModel::Ideal { max_bits } => Ok(if k_bits <= max_bits as f64 {
                Probability::ZERO
            } else {
                Probability::ONE
            }),
        }
    }

    /// Real-valued payload whose error probability equals `eps` (0 < eps < 1).
    pub fn payload_at(&self, eps: f64, n_slot: f64, snr: f64) -> Result<f64> {
        match *self {
            ChannelModel::Awgn { n_t, n_r } => payload_awgn(n_slot, eps, snr, n_t, n_r),
            ChannelModel::Coherent { n_t, n_r, coherence, mc } => {
                payload_coherent(n_slot, eps, coherence, snr, n_t, n_r, &mc)
            }
            ChannelModel::Noncoherent { n_t, n_r, coherence } => {
                payload_noncoherent(n_slot, eps, coherence, snr, n_t, n_r)
            }
            ChannelModel::Ideal { max_bits } => Ok(max_bits as f64),
        }
    }
}

/// Frame, population and channel of an ALOHA planning problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlohaScenario {
    pub devices: usize,
    /// Channel uses per frame (real-valued).
    pub n: f64,
    pub snr: f64,
    pub channel: ChannelModel,
    pub success_threshold: Probability,
}

impl AlohaScenario {
    pub fn new(
        devices: usize,
        n: f64,
        snr: f64,
        channel: ChannelModel,
        success_threshold: f64,
    ) -> Result<Self> {
        let sc = AlohaScenario {
            devices,
            n,
            snr,
            channel,
            success_threshold: Probability::new(success_threshold)?,
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.devices == 0 {
            return Err(Error::domain("need at least one device"));
        }
        if !(self.n >= 1.0 && self.n.is_finite()) {
            return Err(Error::domain(format!("frame length must be >= 1, got {}", self.n)));
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return Err(Error::domain(format!("SNR must be positive, got {}", self.snr)));
        }
        if let ChannelModel::Noncoherent { n_t, n_r, coherence } = self.channel {
            check_validity(coherence, n_t, n_r)?;
        }
        Ok(())
    }

    pub fn max_slots(&self) -> usize {
        self.n.floor() as usize
    }
}

/// Probability that a given device's packet is alone in its slot:
/// `(d/s)(1 - 1/s)^{d-1}` (normalised per slot, as a throughput share).
pub fn collision_factor(devices: usize, slots: usize) -> f64 {
    let s = slots as f64;
    let d = devices as f64;
    if devices <= 1 {
        return d / s;
    }
    d / s * (1.0 - 1.0 / s).powi(devices as i32 - 1)
}

/// `P_s = (d/s)(1 - 1/s)^{d-1}(1 - ε*(k, n/s, ρ))`.
pub fn p_success(slots: usize, k_bits: u64, sc: &AlohaScenario) -> Result<Probability> {
    if slots == 0 || slots as f64 > sc.n {
        return Err(Error::domain(format!(
            "slot count must lie in [1, {}], got {slots}",
            sc.max_slots()
        )));
    }
    let c = collision_factor(sc.devices, slots);
    let eps = sc.channel.error_probability(k_bits as f64, sc.n / slots as f64, sc.snr)?;
    Probability::new((c * eps.complement().value()).clamp(0.0, 1.0))
}

/// Optimised slot count and payload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlohaPlan {
    pub s_star: usize,
    pub k_star: u64,
    /// Per-slot error probability at which the success constraint is tight,
    /// i.e. `ε*` at the real-valued maximum payload `k_real`.
    pub eps_star: Probability,
    /// Error probability of the integer payload `k_star`.
    pub eps_at_k_star: Probability,
    pub p_success: Probability,
    /// Real-valued maximum payload at `s_star`.
    pub k_real: f64,
}

/// Largest integer `k` with `p_success(s, k) ≥ threshold`, or `None`.
fn max_bits_for_slots(slots: usize, sc: &AlohaScenario) -> Result<Option<(u64, f64, f64)>> {
    let c = collision_factor(sc.devices, slots);
    let thr = sc.success_threshold.value();
    if c < thr {
        return Ok(None);
    }
    let feasible = |k: u64| -> Result<bool> { Ok(p_success(slots, k, sc)?.value() >= thr) };
    if !feasible(0)? {
        return Ok(None);
    }
    let n_slot = sc.n / slots as f64;
    let target = 1.0 - thr / c;
    let k_real = if target > 0.0 && target < 1.0 {
        sc.channel.payload_at(target, n_slot, sc.snr)?
    } else {
        0.0
    };
    // start from the closed-form inverse, then settle on the exact integer edge
    let mut k = if k_real.is_finite() && k_real > 0.0 { k_real.floor() as u64 } else { 0 };
    while k > 0 && !feasible(k)? {
        k -= 1;
    }
    while feasible(k + 1)? {
        k += 1;
    }
    Ok(Some((k, k_real, target)))
}

/// Exhaustive search over slot counts `s ∈ [1, ⌊n⌋]` and integer payloads:
/// maximise `k` subject to `P_s ≥ threshold`; ties go to larger `P_s`, then
/// to fewer slots.
pub fn optimize(sc: &AlohaScenario) -> Result<AlohaPlan> {
    sc.validate()?;
    if sc.success_threshold.value() <= 0.0 && !matches!(sc.channel, ChannelModel::Ideal { .. }) {
        return Err(Error::domain("a zero success threshold leaves the payload unbounded"));
    }
    let mut best: Option<AlohaPlan> = None;
    for s in 1..=sc.max_slots() {
        let Some((k, k_real, target)) = max_bits_for_slots(s, sc)? else {
            continue;
        };
        let ps = p_success(s, k, sc)?;
        let better = match &best {
            None => true,
            Some(b) => k > b.k_star || (k == b.k_star && ps.value() > b.p_success.value()),
        };
        if better {
            let n_slot = sc.n / s as f64;
            best = Some(AlohaPlan {
                s_star: s,
                k_star: k,
                eps_star: Probability::new(target.clamp(0.0, 1.0))?,
                eps_at_k_star: sc.channel.error_probability(k as f64, n_slot, sc.snr)?,
                p_success: ps,
                k_real,
            });
        }
    }
    best.ok_or_else(|| {
        Error::Infeasible(format!(
            "no slot count reaches success probability {} even with an empty payload",
            sc.success_threshold
        ))
    })
}

/// Best slot count when decoding never fails: maximises the collision factor
/// over `s ∈ [1, max_slots]`, returning `(s, P_s)`.
pub fn collision_optimum(devices: usize, max_slots: usize) -> Result<(usize, Probability)> {
    if devices == 0 || max_slots == 0 {
        return Err(Error::domain("need at least one device and one slot"));
    }
    let mut best = (1, collision_factor(devices, 1));
    for s in 2..=max_slots {
        let c = collision_factor(devices, s);
        if c > best.1 {
            best = (s, c);
        }
    }
    Ok((best.0, Probability::new(best.1.min(1.0))?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn awgn_scenario(thr: f64) -> AlohaScenario {
        AlohaScenario::new(12, 480.0, 10f64.powf(2.5), ChannelModel::Awgn { n_t: 1, n_r: 1 }, thr)
            .unwrap()
    }

    #[test]
    fn collision_only_optimum() {
        let (s, p) = collision_optimum(12, 480).unwrap();
        assert_eq!(s, 12);
        // (11/12)^11
        assert!((p.value() - (11f64 / 12.0).powi(11)).abs() < 1e-15);
        assert!((p.value() - 0.384).abs() < 1e-3);
    }

    #[test]
    fn single_slot_always_collides() {
        let sc = awgn_scenario(0.3);
        assert_eq!(p_success(1, 0, &sc).unwrap().value(), 0.0);
    }

    #[test]
    fn success_decreases_with_payload() {
        let sc = awgn_scenario(0.3);
        let mut prev = 1.0;
        for k in (0..1500).step_by(50) {
            let p = p_success(7, k, &sc).unwrap().value();
            assert!(p <= prev);
            assert!(p <= collision_factor(12, 7) + 1e-15);
            prev = p;
        }
    }

    #[test]
    fn awgn_plan_uses_seven_slots() {
        let plan = optimize(&awgn_scenario(0.3)).unwrap();
        assert_eq!(plan.s_star, 7);
        assert!((plan.eps_star.value() - 0.0462).abs() < 0.002);
        assert!(plan.p_success.value() >= 0.3);
        assert!(plan.k_real >= plan.k_star as f64 && plan.k_real < plan.k_star as f64 + 1.0);
    }

    #[test]
    fn ideal_channel_picks_one_slot_per_device() {
        let sc = AlohaScenario::new(12, 480.0, 1.0, ChannelModel::Ideal { max_bits: 100 }, 0.3)
            .unwrap();
        let plan = optimize(&sc).unwrap();
        assert_eq!(plan.s_star, 12);
        assert_eq!(plan.k_star, 100);
    }

    #[test]
    fn unreachable_threshold_is_infeasible() {
        let sc = awgn_scenario(0.39);
        assert!(matches!(optimize(&sc), Err(Error::Infeasible(_))));
    }
}
