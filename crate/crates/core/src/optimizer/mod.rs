//! Frame timing, power split and RIS configuration for one frame.
//!
//! [`joint_optimize`] runs the decomposition in order: frame timing first,
//! then L1 sweeps that alternate the centralized RIS configuration with the
//! power split of the scheduled users. Contending users only get a planned
//! RIS choice here; the simulator decides their actual access.

pub mod assign;
pub mod complexity;
pub mod power;
pub mod ris;

use serde::{Deserialize, Serialize};

pub use assign::{assign_ris_static, hungarian_max, StaticAssignment};
pub use complexity::{
    alg1_count, complexity_report, ris_rate_increment, ris_rate_increment_kappa, ComplexityInputs,
    ComplexityReport,
};
pub use power::{allocate_power, floor_powers, kkt_residual, sum_spectral_eff};
pub use ris::{centralized_ris_config, distributed_ris_select, CentralizedConfig, RisChoice};

use crate::channel::{effective_gain, rate_bps, ChannelRealization, PhaseConfig};
use crate::dcf::{contention_cascade, ContentionSummary};
use crate::error::{Error, Result};
use crate::scenario::{DcfParams, Scenario};

/// Noise floor and subchannel width shared by every link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub noise_w: f64,
    pub subchannel_bw_hz: f64,
}

impl LinkBudget {
    pub fn of(s: &Scenario) -> Self {
        Self { noise_w: s.radio.noise_w(), subchannel_bw_hz: s.radio.subchannel_bw_hz() }
    }
}

/// Durations of one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    /// Pilot period, one pilot per existing user.
    pub t0_s: f64,
    /// Computing period.
    pub t1_s: f64,
    /// Transmission period.
    pub t2_s: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Data slots per subchannel, J.
    pub slots_per_channel: usize,
    /// Duration of one data slot, t.
    pub data_slot_s: f64,
    /// Contention rounds budgeted for the contended period.
    pub n_r: usize,
    /// Airtime of one successful handshake plus payload.
    pub t_r_s: f64,
}

impl FrameConfig {
    pub fn total_s(&self) -> f64 {
        self.t0_s + self.t1_s + self.t2_s
    }

    /// `alpha t2`, equal to `J t`.
    pub fn scheduled_s(&self) -> f64 {
        self.slots_per_channel as f64 * self.data_slot_s
    }

    /// `beta t2`.
    pub fn contended_s(&self) -> f64 {
        self.t2_s - self.scheduled_s()
    }

    /// `beta / alpha`; infinite in pure contended mode.
    pub fn beta_over_alpha(&self) -> f64 {
        if self.alpha == 0.0 { f64::INFINITY } else { self.beta / self.alpha }
    }

    /// Same frame with the contended period stretched or shrunk so that
    /// `beta / alpha = ratio`, keeping `alpha t2 = J t`.
    pub fn with_beta_alpha(&self, ratio: f64) -> Result<Self> {
        if self.slots_per_channel == 0 {
            return Err(Error::InvalidScenario("beta/alpha is undefined without scheduled slots".into()));
        }
        if !(ratio >= 0.0 && ratio.is_finite()) {
            return Err(Error::NonPositive { what: "beta/alpha", value: ratio });
        }
        let scheduled = self.scheduled_s();
        let t2 = scheduled * (1.0 + ratio);
        Ok(Self { t2_s: t2, alpha: 1.0 / (1.0 + ratio), beta: ratio / (1.0 + ratio), ..self.clone() })
    }

    /// Checks the frame invariants for `x` scheduled users on `c` subchannels.
    pub fn check(&self, x: usize, c: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidAllocation(m));
        if !((self.alpha + self.beta - 1.0).abs() < 1e-12) {
            return bad(format!("alpha + beta = {}", self.alpha + self.beta));
        }
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.beta) {
            return bad("alpha or beta outside [0, 1]".into());
        }
        if self.slots_per_channel * c < x {
            return bad(format!("J C = {} < X = {x}", self.slots_per_channel * c));
        }
        let jt = self.scheduled_s();
        if (self.alpha * self.t2_s - jt).abs() > 1e-12 * self.t2_s.max(1.0) {
            return bad(format!("alpha t2 = {} differs from J t = {jt}", self.alpha * self.t2_s));
        }
        let need = self.n_r as f64 * self.t_r_s;
        if self.beta * self.t2_s < need * (1.0 - 1e-12) {
            return bad(format!("beta t2 = {} below N_r t_r = {need}", self.beta * self.t2_s));
        }
        Ok(())
    }
}

/// Frame timing from a precomputed cascade.
pub fn frame_timing_from(
    k: usize,
    x: usize,
    c: usize,
    dcf: &DcfParams,
    t1_s: f64,
    cascade: &ContentionSummary,
) -> Result<FrameConfig> {
    if c == 0 {
        return Err(Error::NonPositive { what: "num_subchannels", value: 0.0 });
    }
    let j = x.div_ceil(c);
    let scheduled = j as f64 * dcf.data_slot_s;
    let contended = cascade.n_r as f64 * cascade.t_r_s;
    let t2 = scheduled + contended;
    if t2 <= 0.0 {
        return Err(Error::DegenerateFrame);
    }
    Ok(FrameConfig {
        t0_s: k as f64 * dcf.pilot_time_s,
        t1_s,
        t2_s: t2,
        alpha: scheduled / t2,
        beta: contended / t2,
        slots_per_channel: j,
        data_slot_s: dcf.data_slot_s,
        n_r: cascade.n_r,
        t_r_s: cascade.t_r_s,
    })
}

/// `J = ceil(X / C)`, `t2 = J t + N_r t_r`, `alpha = J t / t2`,
/// `beta = N_r t_r / t2`, `t0 = K t_p`.
pub fn optimal_frame_timing(k: usize, x: usize, y: usize, c: usize, dcf: &DcfParams, t1_s: f64) -> Result<FrameConfig> {
    if x == 0 && y == 0 {
        return Err(Error::DegenerateFrame);
    }
    let cascade = contention_cascade(y, c, dcf)?;
    frame_timing_from(k, x, c, dcf, t1_s, &cascade)
}

/// A scheduled user's grant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledGrant {
    pub user: usize,
    pub ris: usize,
    pub slot: usize,
    pub power_w: f64,
    pub phases: PhaseConfig,
    pub rate_bps: f64,
}

/// A contending user's planned RIS, chosen with every RIS idle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContenderPlan {
    pub user: usize,
    pub ris: usize,
    pub rate_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationState {
    pub num_ris: usize,
    pub slots_per_channel: usize,
    pub scheduled: Vec<ScheduledGrant>,
    pub contenders: Vec<ContenderPlan>,
}

impl AllocationState {
    /// `a_km` over `num_users` users (rows) and the RISs (columns).
    pub fn a_km(&self, num_users: usize) -> Vec<Vec<u8>> {
        let mut a = vec![vec![0u8; self.num_ris]; num_users];
        for g in &self.scheduled {
            a[g.user][g.ris] = 1;
        }
        for c in &self.contenders {
            a[c.user][c.ris] = 1;
        }
        a
    }

    /// `t_kj` over the scheduled users in grant order.
    pub fn t_kj(&self) -> Vec<Vec<u8>> {
        self.scheduled
            .iter()
            .map(|g| (0..self.slots_per_channel).map(|j| u8::from(j == g.slot)).collect())
            .collect()
    }

    pub fn total_power_w(&self) -> f64 {
        self.scheduled.iter().map(|g| g.power_w).sum()
    }
}

/// Checks one-RIS-per-user, per-RIS capacity, one slot per user, distinct
/// (RIS, slot) grants and the power budget.
pub fn validate_allocation(a: &AllocationState, budget_w: f64) -> Result<()> {
    let bad = |m: String| Err(Error::InvalidAllocation(m));
    let mut load = vec![0usize; a.num_ris];
    let mut grants = std::collections::HashSet::new();
    let mut users = std::collections::HashSet::new();
    for g in &a.scheduled {
        if g.ris >= a.num_ris {
            return bad(format!("user {} on RIS {} of {}", g.user, g.ris, a.num_ris));
        }
        if g.slot >= a.slots_per_channel {
            return bad(format!("user {} in slot {} of {}", g.user, g.slot, a.slots_per_channel));
        }
        if !users.insert(g.user) {
            return bad(format!("user {} scheduled twice", g.user));
        }
        if !grants.insert((g.ris, g.slot)) {
            return bad(format!("RIS {} slot {} granted twice", g.ris, g.slot));
        }
        load[g.ris] += 1;
        if !(g.power_w >= 0.0) {
            return bad(format!("user {} has power {}", g.user, g.power_w));
        }
    }
    if let Some(m) = load.iter().position(|&l| l > a.slots_per_channel) {
        return bad(format!("RIS {m} carries {} users over {} slots", load[m], a.slots_per_channel));
    }
    for c in &a.contenders {
        if c.ris >= a.num_ris {
            return bad(format!("contender {} on RIS {}", c.user, c.ris));
        }
        if !users.insert(c.user) {
            return bad(format!("user {} both scheduled and contending", c.user));
        }
    }
    if a.total_power_w() > budget_w + 1e-12 {
        return bad(format!("power {} W over budget {budget_w} W", a.total_power_w()));
    }
    Ok(())
}

/// Closed-form throughput of a planned frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticThroughput {
    pub scheduled_bits: f64,
    pub contended_bits: f64,
    /// Scheduled bits over `alpha t2`.
    pub s_s: f64,
    /// Contended bits over `beta t2`.
    pub s_c: f64,
    /// All bits over the whole frame.
    pub s_o: f64,
    /// `(t + t_d) sum_k R_k / (t0 + t1 + t2)`, which charges every user a
    /// slot and a payload; kept for comparison.
    pub s_o_blended: f64,
    /// Set when the two overall figures differ by more than 1e-9 relative.
    pub blended_mismatch: bool,
}

pub fn analytic_throughput(frame: &FrameConfig, a: &AllocationState, payload_time_s: f64) -> AnalyticThroughput {
    let scheduled_bits: f64 = a.scheduled.iter().map(|g| g.rate_bps * frame.data_slot_s).sum();
    let contended_bits: f64 = a.contenders.iter().map(|c| c.rate_bps * payload_time_s).sum();
    let per = |bits: f64, time: f64| if time > 0.0 { bits / time } else { 0.0 };
    let total = frame.total_s();
    let s_o = per(scheduled_bits + contended_bits, total);
    let rate_sum: f64 = a.scheduled.iter().map(|g| g.rate_bps).chain(a.contenders.iter().map(|c| c.rate_bps)).sum();
    let s_o_blended = per((frame.data_slot_s + payload_time_s) * rate_sum, total);
    AnalyticThroughput {
        scheduled_bits,
        contended_bits,
        s_s: per(scheduled_bits, frame.alpha * frame.t2_s),
        s_c: per(contended_bits, frame.beta * frame.t2_s),
        s_o,
        s_o_blended,
        blended_mismatch: (s_o - s_o_blended).abs() > 1e-9 * s_o.abs().max(s_o_blended.abs()),
    }
}

/// Everything [`joint_optimize`] produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointResult {
    pub frame: FrameConfig,
    pub allocation: AllocationState,
    pub throughput: AnalyticThroughput,
    pub complexity: ComplexityReport,
    pub cascade: ContentionSummary,
    /// Scheduled sum rate (bit/s) after each outer sweep.
    pub objective_trace: Vec<f64>,
    /// Inner iterations of the RIS configuration in each outer sweep.
    pub inner_iterations: Vec<usize>,
}

/// Power, RIS and phases of the scheduled users, alternating up to
/// `max_sweeps` times from an equal power split.
pub fn optimize_scheduled(
    s: &Scenario,
    ch: &ChannelRealization,
    users: &[usize],
    slots_per_channel: usize,
    max_sweeps: usize,
) -> Result<(Vec<ScheduledGrant>, Vec<f64>, Vec<usize>)> {
    if users.is_empty() {
        return Ok((Vec::new(), Vec::new(), Vec::new()));
    }
    let link = LinkBudget::of(s);
    let budget = s.radio.power_budget_static_w();
    let min_se = s.radio.rate_min_bps / link.subchannel_bw_hz;
    let tol = s.optimizer.tolerance;
    let mut powers = vec![budget / users.len() as f64; users.len()];
    let mut trace: Vec<f64> = Vec::new();
    let mut inner = Vec::new();
    let mut grants = Vec::new();
    for _ in 0..max_sweeps.max(1) {
        let cfg = centralized_ris_config(ch, users, &powers, slots_per_channel, link, s.optimizer.l2, tol)?;
        inner.push(cfg.iterations);
        let snr_per_watt: Vec<f64> = users
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let m = cfg.assignment.ris[i];
                Ok(effective_gain(ch.r(k), ch.h(k, m), ch.g(k, m), &cfg.phases[i])?.norm_sqr() / link.noise_w)
            })
            .collect::<Result<_>>()?;
        powers = allocate_power(&snr_per_watt, budget, min_se)?;
        grants = users
            .iter()
            .enumerate()
            .map(|(i, &k)| ScheduledGrant {
                user: k,
                ris: cfg.assignment.ris[i],
                slot: cfg.assignment.slot[i],
                power_w: powers[i],
                phases: cfg.phases[i].clone(),
                rate_bps: rate_bps(snr_per_watt[i] * powers[i], link.subchannel_bw_hz),
            })
            .collect();
        let obj: f64 = grants.iter().map(|g: &ScheduledGrant| g.rate_bps).sum();
        let converged = trace.last().is_some_and(|&prev| obj - prev < tol * prev.abs().max(1.0));
        trace.push(obj);
        if converged {
            break;
        }
    }
    Ok((grants, trace, inner))
}

/// Planned RIS of each contender at the fixed contention power.
pub fn plan_contenders(s: &Scenario, ch: &ChannelRealization, users: &[usize]) -> Result<Vec<ContenderPlan>> {
    let link = LinkBudget::of(s);
    let all: Vec<usize> = (0..ch.num_ris).collect();
    let power = s.radio.tx_power_mobile_w();
    users
        .iter()
        .map(|&k| {
            let c = distributed_ris_select(ch, k, &all, power, link)?;
            Ok(ContenderPlan { user: k, ris: c.ris, rate_bps: c.rate_bps })
        })
        .collect()
}

/// Computing time of the proposed frame: `kappa_c` times the joint-pass
/// count with `scheduled` users.
pub fn computing_time(s: &Scenario, scheduled: usize) -> f64 {
    s.optimizer.kappa_c
        * alg1_count(s.population.num_existing, scheduled, s.ris.num_ris, s.ris.elements_per_ris, s.optimizer.l1)
}

/// Optimizes a frame in which `static_users` are scheduled and `contenders`
/// contend, with computing time `t1_s`.
pub fn optimize_partition(
    s: &Scenario,
    ch: &ChannelRealization,
    static_users: &[usize],
    contenders: &[usize],
    t1_s: f64,
) -> Result<JointResult> {
    if static_users.is_empty() && contenders.is_empty() {
        return Err(Error::DegenerateFrame);
    }
    let c = s.radio.num_subchannels;
    let cascade = contention_cascade(contenders.len(), c, &s.dcf)?;
    let frame = frame_timing_from(s.population.num_existing, static_users.len(), c, &s.dcf, t1_s, &cascade)?;
    let (scheduled, objective_trace, inner_iterations) =
        optimize_scheduled(s, ch, static_users, frame.slots_per_channel, s.optimizer.l1)?;
    let allocation = AllocationState {
        num_ris: ch.num_ris,
        slots_per_channel: frame.slots_per_channel,
        scheduled,
        contenders: plan_contenders(s, ch, contenders)?,
    };
    validate_allocation(&allocation, s.radio.power_budget_static_w())?;
    frame.check(static_users.len(), c)?;
    let throughput = analytic_throughput(&frame, &allocation, s.dcf.payload_time_s);

    let link = LinkBudget::of(s);
    let xi: Vec<f64> = allocation
        .scheduled
        .iter()
        .map(|g| {
            let reflect = effective_gain(num_complex::Complex64::new(0.0, 0.0), ch.h(g.user, g.ris), ch.g(g.user, g.ris), &g.phases)?;
            Ok(ris_rate_increment(ch.r(g.user), reflect, g.power_w, link.noise_w, link.subchannel_bw_hz))
        })
        .collect::<Result<_>>()?;
    let mobile_power = s.radio.tx_power_mobile_w();
    let chi: Vec<f64> = allocation
        .contenders
        .iter()
        .map(|p| {
            let k = p.user;
            let phases = crate::channel::align_phases(ch.r(k), ch.h(k, p.ris), ch.g(k, p.ris))?;
            let reflect = effective_gain(num_complex::Complex64::new(0.0, 0.0), ch.h(k, p.ris), ch.g(k, p.ris), &phases)?;
            Ok(ris_rate_increment(ch.r(k), reflect, mobile_power, link.noise_w, link.subchannel_bw_hz))
        })
        .collect::<Result<_>>()?;
    let inputs = ComplexityInputs {
        k: s.population.num_existing,
        x: static_users.len(),
        m: s.ris.num_ris,
        m_idle: s.ris.num_ris,
        n: s.ris.elements_per_ris,
        l1: s.optimizer.l1,
        l2: s.optimizer.l2,
        l3: s.optimizer.l3,
    };
    let complexity = complexity_report(&inputs, frame.total_s(), s.optimizer.kappa_c, &xi, &chi);
    Ok(JointResult { frame, allocation, throughput, complexity, cascade, objective_trace, inner_iterations })
}

/// Joint optimization of the proposed frame for the scenario's static and
/// mobile users.
pub fn joint_optimize(s: &Scenario, ch: &ChannelRealization) -> Result<JointResult> {
    let cls = s.classify();
    let t1 = computing_time(s, cls.x());
    optimize_partition(s, ch, &cls.static_users, &cls.mobile_users, t1)
}
