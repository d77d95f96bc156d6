//! Frame-level Monte-Carlo simulator: pilots, computing, scheduled slots and
//! DCF contention, for the proposed MAC and the two benchmark schemes.

pub mod contention;
pub mod trace;

use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use contention::{run_contention, BackoffState, ContentionInput, ContentionOutcome, Success};
pub use trace::{measure_throughput, Event, EventKind, FrameTrace, Throughput};

use crate::channel::{draw_channels, rate_bps, ChannelRealization};
use crate::dcf::handshake_time;
use crate::error::{Error, Result};
use crate::optimizer::{
    alg1_count, analytic_throughput, joint_optimize, optimize_partition, plan_contenders,
    AllocationState, AnalyticThroughput, FrameConfig, LinkBudget,
};
use crate::rng;
use crate::scenario::{Scenario, UserClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Static users scheduled, mobile users contend.
    Proposed,
    /// Every existing user scheduled, nobody contends.
    Scheme1,
    /// Every user contends.
    Scheme2,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Proposed, Mode::Scheme1, Mode::Scheme2];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Proposed => "proposed",
            Mode::Scheme1 => "scheme1",
            Mode::Scheme2 => "scheme2",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Mode::Proposed),
            "scheme1" => Ok(Mode::Scheme1),
            "scheme2" => Ok(Mode::Scheme2),
            other => Err(Error::Parse(format!("unknown mode {other:?} (expected proposed, scheme1 or scheme2)"))),
        }
    }
}

/// Frame timing and allocation of one frame under a given mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePlan {
    pub mode: Mode,
    pub frame: FrameConfig,
    pub allocation: AllocationState,
    pub analytic: AnalyticThroughput,
}

/// Plans a frame. Scheme 1 schedules the K existing users (new users are
/// unknown to the BS until the next pilot phase); Scheme 2 lets all K+Z users
/// contend over the time Scheme 1 would spend on scheduled slots.
pub fn plan_frame(s: &Scenario, ch: &ChannelRealization, mode: Mode) -> Result<FramePlan> {
    let k = s.population.num_existing;
    let (frame, allocation) = match mode {
        Mode::Proposed => {
            let r = joint_optimize(s, ch)?;
            (r.frame, r.allocation)
        }
        Mode::Scheme1 => {
            let existing: Vec<usize> = (0..k).collect();
            let t1 = s.optimizer.kappa_c
                * alg1_count(k, k, s.ris.num_ris, s.ris.elements_per_ris, s.optimizer.l1);
            let r = optimize_partition(s, ch, &existing, &[], t1)?;
            (r.frame, r.allocation)
        }
        Mode::Scheme2 => {
            let everyone: Vec<usize> = (0..s.population.total()).collect();
            if everyone.is_empty() {
                return Err(Error::DegenerateFrame);
            }
            let c = s.radio.num_subchannels;
            let t2 = k.max(1).div_ceil(c) as f64 * s.dcf.data_slot_s;
            let frame = FrameConfig {
                t0_s: k as f64 * s.dcf.pilot_time_s,
                t1_s: s.optimizer.kappa_c * k as f64,
                t2_s: t2,
                alpha: 0.0,
                beta: 1.0,
                slots_per_channel: 0,
                data_slot_s: s.dcf.data_slot_s,
                n_r: 0,
                t_r_s: handshake_time(&s.dcf),
            };
            let allocation = AllocationState {
                num_ris: ch.num_ris,
                slots_per_channel: 0,
                scheduled: Vec::new(),
                contenders: plan_contenders(s, ch, &everyone)?,
            };
            (frame, allocation)
        }
    };
    let analytic = analytic_throughput(&frame, &allocation, s.dcf.payload_time_s);
    Ok(FramePlan { mode, frame, allocation, analytic })
}

fn check_mode(s: &Scenario, a: &AllocationState, mode: Mode) -> Result<()> {
    let cls = s.classify();
    let mut sched: Vec<usize> = a.scheduled.iter().map(|g| g.user).collect();
    let mut cont: Vec<usize> = a.contenders.iter().map(|c| c.user).collect();
    sched.sort_unstable();
    cont.sort_unstable();
    let ok = match mode {
        Mode::Proposed => {
            let mut mobile = cls.mobile_users.clone();
            mobile.sort_unstable();
            sched == cls.static_users && cont == mobile
        }
        Mode::Scheme1 => cont.is_empty() && sched.iter().all(|&u| u < s.population.num_existing),
        Mode::Scheme2 => sched.is_empty(),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::ModeMismatch(mode.to_string()))
    }
}

/// Rate of every contender on every subchannel, with phases aligned to the
/// RIS bound to that subchannel and transmit power Upsilon.
pub fn contender_rates(s: &Scenario, ch: &ChannelRealization, users: &[usize]) -> Vec<Vec<f64>> {
    let link = LinkBudget::of(s);
    let power = s.radio.tx_power_mobile_w();
    let mut ris_of_channel = vec![0usize; s.radio.num_subchannels];
    for m in 0..s.ris.num_ris {
        ris_of_channel[s.ris.subchannel_of(m)] = m;
    }
    users
        .iter()
        .map(|&k| {
            ris_of_channel
                .iter()
                .map(|&m| rate_bps(ch.aligned_gain(k, m).powi(2) * power / link.noise_w, link.subchannel_bw_hz))
                .collect()
        })
        .collect()
}

/// Replays one frame event by event. The contention draws come from the
/// `(seed, frame_index)` contention stream.
pub fn run_frame(
    s: &Scenario,
    ch: &ChannelRealization,
    frame: &FrameConfig,
    allocation: &AllocationState,
    mode: Mode,
    seed: u64,
) -> Result<FrameTrace> {
    check_mode(s, allocation, mode)?;
    let total_users = s.population.total();
    let k = s.population.num_existing;
    let dcf = &s.dcf;
    let mut events = Vec::new();

    for u in 0..k {
        events.push(Event::new(u as f64 * dcf.pilot_time_s, dcf.pilot_time_s, EventKind::Pilot, Some(u), None));
    }
    events.push(Event::new(frame.t0_s, frame.t1_s, EventKind::Compute, None, None));

    let mut served = vec![false; total_users];
    let mut bits = vec![0.0; total_users];
    let t2_start = frame.t0_s + frame.t1_s;
    let mut scheduled_bits = 0.0;
    for g in &allocation.scheduled {
        let c = s.ris.subchannel_of(g.ris);
        events.push(Event::new(t2_start, 0.0, EventKind::SlotGrant, Some(g.user), Some(c)));
        if g.rate_bps >= s.radio.rate_min_bps * (1.0 - 1e-9) {
            let mut e = Event::new(
                t2_start + g.slot as f64 * frame.data_slot_s,
                frame.data_slot_s,
                EventKind::ScheduledData,
                Some(g.user),
                Some(c),
            );
            e.bits = g.rate_bps * frame.data_slot_s;
            scheduled_bits += e.bits;
            bits[g.user] += e.bits;
            served[g.user] = true;
            events.push(e);
        }
    }

    let contenders: Vec<usize> = allocation.contenders.iter().map(|c| c.user).collect();
    let rates = contender_rates(s, ch, &contenders);
    let start_s = t2_start + frame.alpha * frame.t2_s;
    let input = ContentionInput {
        users: &contenders,
        rates: &rates,
        start_s,
        end_s: frame.total_s(),
        rate_min_bps: s.radio.rate_min_bps,
        csi_best: s.simulation.csi_best_channel,
    };
    let mut rng = rng::stream(seed, rng::STREAM_CONTENTION, s.frame_index);
    let outcome = run_contention(&input, dcf, &mut rng);
    let mut contended_bits = 0.0;
    let mut contended_rates = Vec::with_capacity(outcome.successes.len());
    for succ in &outcome.successes {
        let b = succ.rate_bps * dcf.payload_time_s;
        contended_bits += b;
        bits[succ.user] += b;
        served[succ.user] = true;
        contended_rates.push((succ.user, succ.rate_bps));
    }
    let n_r_measured = outcome
        .successes
        .iter()
        .map(|x| x.end_s)
        .reduce(f64::max)
        .map(|last| ((last - start_s) / frame.t_r_s - 1e-9).ceil().max(0.0) as usize);
    events.extend(outcome.events);
    events.sort_by(|a, b| a.t_s.total_cmp(&b.t_s));

    let mut trace = FrameTrace {
        mode,
        frame_index: s.frame_index,
        frame: frame.clone(),
        events,
        classes: (0..total_users).map(|u| s.population.class_of(u)).collect(),
        served,
        bits,
        scheduled_bits,
        contended_bits,
        collisions: outcome.collisions,
        contenders: contenders.len(),
        contenders_served: outcome.successes.len(),
        n_r_measured,
        contended_rates,
        throughput: Throughput::default(),
    };
    trace.throughput = measure_throughput(&trace, frame);
    Ok(trace)
}

/// Served fraction per class; `None` when the class had no users.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Fairness {
    pub static_users: Option<f64>,
    pub existing_mobile: Option<f64>,
    pub new_mobile: Option<f64>,
    pub overall: f64,
}

impl Fairness {
    pub fn get(&self, class: UserClass) -> Option<f64> {
        match class {
            UserClass::Static => self.static_users,
            UserClass::ExistingMobile => self.existing_mobile,
            UserClass::NewMobile => self.new_mobile,
        }
    }
}

/// Fraction of users served in their frame, pooled over all frames.
pub fn measure_fairness(traces: &[FrameTrace]) -> Result<Fairness> {
    if traces.is_empty() {
        return Err(Error::Empty("frame list"));
    }
    let mut counts = [(0usize, 0usize); 3];
    for t in traces {
        for (class, &served) in t.classes.iter().zip(&t.served) {
            let slot = &mut counts[*class as usize];
            slot.1 += 1;
            slot.0 += served as usize;
        }
    }
    let frac = |(s, n): (usize, usize)| (n > 0).then(|| s as f64 / n as f64);
    let (served, all) = counts.iter().fold((0, 0), |a, c| (a.0 + c.0, a.1 + c.1));
    Ok(Fairness {
        static_users: frac(counts[0]),
        existing_mobile: frac(counts[1]),
        new_mobile: frac(counts[2]),
        overall: if all == 0 { 0.0 } else { served as f64 / all as f64 },
    })
}

/// Replacement for the optimal `beta / alpha` of a proposed frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaAlpha {
    Ratio(f64),
    /// Multiple of the frame's own optimum.
    Scale(f64),
}

impl BetaAlpha {
    pub fn apply(self, frame: &FrameConfig) -> Result<FrameConfig> {
        match self {
            BetaAlpha::Ratio(r) => frame.with_beta_alpha(r),
            BetaAlpha::Scale(x) => frame.with_beta_alpha(x * frame.beta_over_alpha()),
        }
    }
}

/// Runs `frames` consecutive frames. Channels and positions are redrawn each
/// frame; after a frame the new users become existing mobile users and the
/// same number of fresh users arrive. `beta_alpha` overrides the contended
/// share of proposed frames and is ignored by the benchmark schemes.
pub fn simulate(
    s: &Scenario,
    mode: Mode,
    frames: usize,
    seed: u64,
    beta_alpha: Option<BetaAlpha>,
) -> Result<Vec<FrameTrace>> {
    let mut cur = s.clone();
    cur.seed = seed;
    let arrivals = s.population.num_new_mobile;
    let mut out = Vec::with_capacity(frames);
    for _ in 0..frames {
        let ch = draw_channels(&cur, seed)?;
        let mut plan = plan_frame(&cur, &ch, mode)?;
        if let (Some(b), Mode::Proposed) = (beta_alpha, mode) {
            plan.frame = b.apply(&plan.frame)?;
        }
        out.push(run_frame(&cur, &ch, &plan.frame, &plan.allocation, mode, seed)?);
        cur.advance_frame(arrivals);
    }
    Ok(out)
}

/// Analytic contended throughput from realized per-user rates: every served
/// contender contributes `R t_d` over `beta t2`.
pub fn analytic_s_c(trace: &FrameTrace, payload_time_s: f64) -> f64 {
    let time = trace.frame.beta * trace.frame.t2_s;
    if time <= 0.0 {
        return 0.0;
    }
    trace.contended_rates.iter().map(|(_, r)| r * payload_time_s).sum::<f64>() / time
}
