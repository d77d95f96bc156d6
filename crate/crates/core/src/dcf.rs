//! Closed-form analysis of the contended period: Bianchi's fixed point, the
//! per-round success recursion, the number of contention rounds N_r and the
//! RTS/CTS handshake time t_r.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::DcfParams;

/// Bisection stops once the bracket on p is narrower than this.
pub const TAU_TOLERANCE: f64 = 1e-12;
pub const TAU_MAX_ITERATIONS: usize = 200;
/// Largest residual accepted on either fixed-point equation.
pub const TAU_RESIDUAL: f64 = 1e-10;
/// Rounds after which the cascade is declared non-terminating.
pub const CASCADE_ROUND_CAP: usize = 10_000;
/// Consecutive rounds without a newly served user before the guard kicks in.
pub const STARVATION_ROUNDS: usize = 50;

/// Transmission probability as a function of the conditional collision
/// probability. Uses the geometric-sum form of
/// `2(1-2p) / ((1-2p)(W+1) + pW(1-(2p)^l))`, which has no pole at p = 1/2.
pub fn tau_of_p(p: f64, w: f64, max_stage: u32) -> f64 {
    let two_p = 2.0 * p;
    let mut geo = 0.0;
    let mut term = 1.0;
    for _ in 0..max_stage {
        geo += term;
        term *= two_p;
    }
    2.0 / (w + 1.0 + p * w * geo)
}

/// Collision probability seen by one of `v` contenders that each send with `tau`.
pub fn p_of_tau(tau: f64, v: usize) -> f64 {
    1.0 - (1.0 - tau).powi(v as i32 - 1)
}

/// Solves the coupled (tau, p) fixed point for `contenders` stations.
pub fn solve_tau(contenders: usize, w_min: u32, max_stage: u32) -> Result<(f64, f64)> {
    if contenders == 0 {
        return Err(Error::NonPositive { what: "contenders", value: 0.0 });
    }
    let w = w_min as f64;
    if contenders == 1 {
        return Ok((tau_of_p(0.0, w, max_stage), 0.0));
    }
    // f(p) = p - p_of_tau(tau_of_p(p)) is increasing in p, f(0) <= 0 < f(1).
    let f = |p: f64| p - p_of_tau(tau_of_p(p, w, max_stage), contenders);
    let (mut lo, mut hi) = (0.0_f64, 1.0 - 1e-15);
    let mut iterations = 0;
    while hi - lo > TAU_TOLERANCE && iterations < TAU_MAX_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    let p = 0.5 * (lo + hi);
    let tau = tau_of_p(p, w, max_stage);
    let residual = fixed_point_residual(tau, p, contenders, w_min, max_stage);
    if residual >= TAU_RESIDUAL {
        return Err(Error::NoConvergence { iterations, residual });
    }
    Ok((tau, p))
}

/// Larger of the two equation residuals at (tau, p), with the first equation
/// evaluated in its printed rational form where that is well defined.
pub fn fixed_point_residual(tau: f64, p: f64, contenders: usize, w_min: u32, max_stage: u32) -> f64 {
    let w = w_min as f64;
    let a = 1.0 - 2.0 * p;
    let tau_eq = if a.abs() > 1e-6 {
        2.0 * a / (a * (w + 1.0) + p * w * (1.0 - (2.0 * p).powi(max_stage as i32)))
    } else {
        tau_of_p(p, w, max_stage)
    };
    let r1 = (tau - tau_eq).abs();
    let r2 = (p - p_of_tau(tau, contenders)).abs();
    r1.max(r2)
}

/// Per-slot outcome probabilities on one subchannel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotProbabilities {
    pub p_success: f64,
    pub p_idle: f64,
    /// Collision probability after the validity guard (never negative).
    pub p_collision: f64,
    /// `1 - P_e - P_s` before clamping.
    pub p_collision_raw: f64,
    /// Set when the raw value fell outside `[0, 1]` and was clamped.
    pub guard_triggered: bool,
}

/// `P_s = V tau (1-tau)^{V-1}`, `P_e = (1-tau)^{V-1}`, `P_c = 1 - P_e - P_s`.
///
/// The idle term keeps the exponent V-1, so a lone contender gets P_e = 1 and
/// a negative raw P_c. The guard clamps it to `[0, 1]` and raises a flag.
pub fn slot_probabilities(contenders: usize, tau: f64) -> SlotProbabilities {
    let v = contenders as f64;
    let q = (1.0 - tau).powi(contenders as i32 - 1);
    let p_success = v * tau * q;
    let p_idle = q;
    let raw = 1.0 - p_idle - p_success;
    let clamped = raw.clamp(0.0, 1.0);
    SlotProbabilities {
        p_success,
        p_idle,
        p_collision: clamped,
        p_collision_raw: raw,
        guard_triggered: !(-1e-15..=1.0).contains(&raw),
    }
}

/// Probability of a successful, sensing-weighted transmission on a given
/// subchannel when `n` contenders pick one of `c` subchannels uniformly.
pub fn channel_success_prob(n: usize, tau: f64, c: usize) -> f64 {
    if n == 0 || c == 0 {
        return 0.0;
    }
    let q = 1.0 / c as f64;
    if c == 1 {
        let s = slot_probabilities(n, tau);
        return s.p_idle * s.p_success;
    }
    let (ln_q, ln_1q) = (q.ln(), (1.0 - q).ln());
    let nf = n as f64;
    let mut ln_binom = 0.0;
    let mut total = 0.0;
    for v in 1..=n {
        let vf = v as f64;
        ln_binom += (nf - vf + 1.0).ln() - vf.ln();
        let pick = (ln_binom + vf * ln_q + (nf - vf) * ln_1q).exp();
        let s = slot_probabilities(v, tau);
        total += s.p_idle * s.p_success * pick;
    }
    total
}

/// One contention time of the cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentionRound {
    /// 1-based round index i.
    pub round_index: usize,
    /// Contenders N_i still waiting for their single transmission.
    pub contenders: usize,
    pub tau: f64,
    pub collision_prob: f64,
    pub success_prob_channel: f64,
    /// Users served up to and including this round, Ñ_i.
    pub cumulative_served: usize,
    /// Users force-served by the starvation guard in this round.
    pub forced: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentionSummary {
    pub rounds: Vec<ContentionRound>,
    pub n_r: usize,
    pub t_r_s: f64,
    pub required_beta_t2_s: f64,
    /// Number of rounds in which the starvation guard fired.
    pub guard_rounds: usize,
}

impl ContentionSummary {
    /// Floating sum of the per-round channel success probabilities up to round `i`.
    pub fn success_prob_sum(&self, i: usize) -> f64 {
        self.rounds[..i].iter().map(|r| r.success_prob_channel).sum()
    }
}

/// Contenders assumed on each subchannel when computing tau for a round.
pub fn contenders_per_channel(n: usize, c: usize) -> usize {
    n.div_ceil(c.max(1)).max(1)
}

/// Runs the served-user recursion `Ñ_i = min(Y, floor(C sum_{l<=i} P_{l,C}))`,
/// `N_{i+1} = Y - Ñ_i`, counting rounds while contenders remain.
pub fn contention_cascade(y: usize, c: usize, dcf: &DcfParams) -> Result<ContentionSummary> {
    contention_cascade_capped(y, c, dcf, CASCADE_ROUND_CAP)
}

pub fn contention_cascade_capped(
    y: usize,
    c: usize,
    dcf: &DcfParams,
    round_cap: usize,
) -> Result<ContentionSummary> {
    if c == 0 {
        return Err(Error::NonPositive { what: "num_subchannels", value: 0.0 });
    }
    let t_r = handshake_time(dcf);
    let mut rounds = Vec::new();
    let mut remaining = y;
    let mut sum_p = 0.0;
    let mut forced_total = 0usize;
    let mut served = 0usize;
    let mut idle_streak = 0usize;
    let mut guard_rounds = 0usize;
    while remaining > 0 {
        if rounds.len() >= round_cap {
            return Err(Error::NonTerminatingCascade { rounds: rounds.len(), remaining });
        }
        let v = contenders_per_channel(remaining, c);
        let (tau, p) = solve_tau(v, dcf.w_min, dcf.max_backoff_stage)?;
        let pc = channel_success_prob(remaining, tau, c);
        sum_p += pc;
        let mut next = ((c as f64 * sum_p).floor() as usize + forced_total).min(y);
        let mut forced = 0;
        if next == served {
            idle_streak += 1;
            if idle_streak >= STARVATION_ROUNDS {
                forced = c.min(remaining);
                forced_total += forced;
                next = (served + forced).min(y);
                idle_streak = 0;
                guard_rounds += 1;
            }
        } else {
            idle_streak = 0;
        }
        served = next;
        rounds.push(ContentionRound {
            round_index: rounds.len() + 1,
            contenders: remaining,
            tau,
            collision_prob: p,
            success_prob_channel: pc,
            cumulative_served: served,
            forced,
        });
        remaining = y - served;
    }
    let n_r = rounds.len();
    Ok(ContentionSummary {
        rounds,
        n_r,
        t_r_s: t_r,
        required_beta_t2_s: n_r as f64 * t_r,
        guard_rounds,
    })
}

/// `RTS + CTS + t_d + 2 SIFS + DIFS + 2 delta`.
pub fn handshake_time(dcf: &DcfParams) -> f64 {
    dcf.rts_s()
        + dcf.cts_s()
        + dcf.payload_time_s
        + 2.0 * dcf.sifs_s
        + dcf.difs_s
        + 2.0 * dcf.prop_delay_s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent solver: bisection directly on tau in (0, 1) of
    /// `tau - printed_eq(p(tau))`, with the printed rational form.
    fn oracle_tau(v: usize, w: f64, l: i32) -> f64 {
        let g = |tau: f64| {
            let p = 1.0 - (1.0 - tau).powi(v as i32 - 1);
            let a = 1.0 - 2.0 * p;
            tau - 2.0 * a / (a * (w + 1.0) + p * w * (1.0 - (2.0 * p).powi(l)))
        };
        let (mut lo, mut hi) = (1e-9, 2.0 / (w + 1.0));
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn single_contender() {
        let (tau, p) = solve_tau(1, 15, 6).unwrap();
        assert_eq!(p, 0.0);
        assert!((tau - 0.125).abs() < 1e-15);
    }

    #[test]
    fn zero_contenders_rejected() {
        assert!(solve_tau(0, 15, 6).is_err());
    }

    #[test]
    fn matches_independent_bisection() {
        let (tau, p) = solve_tau(10, 15, 6).unwrap();
        assert!((tau - oracle_tau(10, 15.0, 6)).abs() < 1e-9, "{tau}");
        assert!(fixed_point_residual(tau, p, 10, 15, 6) < 1e-10);
    }

    #[test]
    fn tau_decreases_with_contenders() {
        let mut prev = 1.0;
        for v in 2..=50 {
            let (tau, _) = solve_tau(v, 15, 6).unwrap();
            assert!(tau < prev, "v={v}");
            prev = tau;
        }
    }

    #[test]
    fn slot_probability_edges() {
        let s = slot_probabilities(1, 0.5);
        assert_eq!((s.p_success, s.p_idle), (0.5, 1.0));
        assert_eq!(s.p_collision_raw, -0.5);
        assert_eq!(s.p_collision, 0.0);
        assert!(s.guard_triggered);
        let s = slot_probabilities(2, 0.5);
        assert_eq!((s.p_success, s.p_idle, s.p_collision), (0.5, 0.5, 0.0));
        assert!(!s.guard_triggered);
    }

    #[test]
    fn slot_probabilities_by_enumeration() {
        // Enumerate all 2^V transmit patterns: success = exactly one sender.
        let (tau, _) = solve_tau(10, 15, 6).unwrap();
        let v = 10;
        let mut success = 0.0;
        let mut none = 0.0;
        for mask in 0u32..(1 << v) {
            let k = mask.count_ones() as i32;
            let pr = tau.powi(k) * (1.0 - tau).powi(v - k);
            match k {
                0 => none += pr,
                1 => success += pr,
                _ => {}
            }
        }
        let s = slot_probabilities(v as usize, tau);
        assert!((s.p_success - success).abs() < 1e-12);
        // The printed idle term is (1-tau)^{V-1} = P(no send among the other V-1).
        assert!((s.p_idle * (1.0 - tau) - none).abs() < 1e-12);
        let total = s.p_success + s.p_idle + s.p_collision;
        assert!((total - 1.0).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&s.p_collision));
    }

    /// Brute force over every user-to-channel assignment and every transmit
    /// pattern on channel 0.
    fn enumerate_channel_success(n: usize, tau: f64, c: usize) -> f64 {
        let total_assign = (c as u64).pow(n as u32);
        let mut acc = 0.0;
        for code in 0..total_assign {
            let mut x = code;
            let mut v = 0;
            for _ in 0..n {
                if x % c as u64 == 0 {
                    v += 1;
                }
                x /= c as u64;
            }
            if v == 0 {
                continue;
            }
            let mut single = 0.0;
            for mask in 0u32..(1 << v) {
                if mask.count_ones() == 1 {
                    single += tau * (1.0 - tau).powi(v - 1);
                }
            }
            acc += (1.0 - tau).powi(v - 1) * single;
        }
        acc / total_assign as f64
    }

    #[test]
    fn channel_success_trivial_cases() {
        assert!((channel_success_prob(1, 0.2, 2) - 0.1).abs() < 1e-15);
        assert!((channel_success_prob(1, 0.2, 4) - 0.05).abs() < 1e-15);
        let s = slot_probabilities(2, 0.3);
        assert!((channel_success_prob(2, 0.3, 1) - s.p_idle * s.p_success).abs() < 1e-15);
    }

    #[test]
    fn channel_success_matches_enumeration() {
        let (tau, _) = solve_tau(5, 15, 6).unwrap();
        let got = channel_success_prob(10, tau, 2);
        assert!((got - enumerate_channel_success(10, tau, 2)).abs() < 1e-12);
        for n in 1..=12 {
            for c in 1..=3 {
                if (c as u64).pow(n as u32) > 600_000 {
                    continue;
                }
                let tau = 0.03 + 0.01 * n as f64;
                let diff = (channel_success_prob(n, tau, c) - enumerate_channel_success(n, tau, c)).abs();
                assert!(diff < 1e-12, "n={n} c={c} diff={diff}");
            }
        }
    }

    #[test]
    fn empty_cascade() {
        let s = contention_cascade(0, 2, &DcfParams::default()).unwrap();
        assert_eq!(s.n_r, 0);
        assert!(s.rounds.is_empty());
        assert_eq!(s.required_beta_t2_s, 0.0);
    }

    #[test]
    fn single_user_cascade() {
        // One contender: tau = 1/8, P = tau / C = 1/16, and the first round with
        // floor(2 * i / 16) >= 1 is i = 8.
        let s = contention_cascade(1, 2, &DcfParams::default()).unwrap();
        assert_eq!(s.n_r, 8);
        assert_eq!(s.rounds.last().unwrap().cumulative_served, 1);
    }

    #[test]
    fn default_cascade_value() {
        let s = contention_cascade(100, 2, &DcfParams::default()).unwrap();
        assert_eq!(s.n_r, 301);
        assert_eq!(s.guard_rounds, 0);
    }

    #[test]
    fn round_cap_reports_error() {
        match contention_cascade_capped(100, 2, &DcfParams::default(), 10) {
            Err(Error::NonTerminatingCascade { rounds: 10, remaining }) => assert!(remaining > 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn starvation_guard_fires_on_tiny_probabilities() {
        let dcf = DcfParams { w_min: 4000, w_max: 4000, max_backoff_stage: 0, ..DcfParams::default() };
        let s = contention_cascade(3, 1, &dcf).unwrap();
        assert!(s.guard_rounds > 0);
        assert_eq!(s.rounds.last().unwrap().cumulative_served, 3);
    }

    #[test]
    fn handshake_examples() {
        let zero = DcfParams {
            rts_bytes: 0,
            cts_bytes: 0,
            sifs_s: 0.0,
            difs_s: 0.0,
            prop_delay_s: 0.0,
            payload_time_s: 1e-3,
            ..DcfParams::default()
        };
        assert_eq!(handshake_time(&zero), 1e-3);
        let d = DcfParams::default();
        assert!((handshake_time(&d) - 4392e-6).abs() < 1e-12);
        let doubled = DcfParams { payload_time_s: 2.0 * d.payload_time_s, ..d.clone() };
        assert!((handshake_time(&doubled) - handshake_time(&d) - d.payload_time_s).abs() < 1e-15);
    }

    #[test]
    fn n_r_nonincreasing_in_channels() {
        let d = DcfParams::default();
        for y in [5, 20, 60] {
            let mut prev = usize::MAX;
            for c in 1..=4 {
                let n = contention_cascade(y, c, &d).unwrap().n_r;
                assert!(n <= prev, "y={y} c={c}");
                prev = n;
            }
        }
    }

    proptest! {
        #[test]
        fn fixed_point_residual_small(v in 1usize..200, w in 2u32..64, l in 0u32..8) {
            let (tau, p) = solve_tau(v, w, l).unwrap();
            prop_assert!(tau > 0.0 && tau < 1.0);
            prop_assert!((0.0..1.0).contains(&p));
            prop_assert!(fixed_point_residual(tau, p, v, w, l) < TAU_RESIDUAL);
        }

        #[test]
        fn cascade_conservation(y in 0usize..120, c in 1usize..5) {
            let s = contention_cascade(y, c, &DcfParams::default()).unwrap();
            prop_assert_eq!(s.n_r, s.rounds.len());
            prop_assert_eq!(s.rounds.iter().filter(|r| r.contenders > 0).count(), s.n_r);
            let mut prev = 0;
            let mut forced = 0;
            for (i, r) in s.rounds.iter().enumerate() {
                if i == 0 {
                    prop_assert_eq!(r.contenders, y);
                } else {
                    prop_assert_eq!(r.contenders, y - s.rounds[i - 1].cumulative_served);
                }
                prop_assert!(r.cumulative_served >= prev);
                prev = r.cumulative_served;
                forced += r.forced;
                // Recompute the floor from scratch.
                let scratch = ((c as f64 * s.success_prob_sum(i + 1)).floor() as usize + forced).min(y);
                prop_assert_eq!(scratch, r.cumulative_served);
            }
            if y > 0 {
                prop_assert_eq!(s.rounds.last().unwrap().cumulative_served, y);
            }
            prop_assert!((s.required_beta_t2_s - s.n_r as f64 * s.t_r_s).abs() < 1e-12);
        }

        #[test]
        fn channel_probability_in_unit_interval(n in 1usize..300, c in 1usize..6, tau in 0.001f64..0.999) {
            let p = channel_success_prob(n, tau, c);
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }
}
