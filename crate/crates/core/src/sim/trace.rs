//! Event log of one simulated frame and its consistency checks.

use serde::{Deserialize, Serialize};

use super::Mode;
use crate::optimizer::FrameConfig;
use crate::scenario::{DcfParams, UserClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Pilot,
    Compute,
    SlotGrant,
    ScheduledData,
    /// DIFS plus backoff countdown on a subchannel.
    Idle,
    Rts,
    Cts,
    ContendedData,
    Collision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t_s: f64,
    pub duration_s: f64,
    pub kind: EventKind,
    pub user: Option<usize>,
    pub channel: Option<usize>,
    /// Bits delivered by a data event.
    pub bits: f64,
}

impl Event {
    pub fn new(t_s: f64, duration_s: f64, kind: EventKind, user: Option<usize>, channel: Option<usize>) -> Self {
        Self { t_s, duration_s, kind, user, channel, bits: 0.0 }
    }

    pub fn end_s(&self) -> f64 {
        self.t_s + self.duration_s
    }
}

/// Throughput of a frame (bit/s).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub s_s: f64,
    pub s_c: f64,
    pub s_o: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTrace {
    pub mode: Mode,
    pub frame_index: u64,
    pub frame: FrameConfig,
    /// Sorted by start time.
    pub events: Vec<Event>,
    /// Class of every user present in the frame (K + Z of them).
    pub classes: Vec<UserClass>,
    /// Users with a successful data transmission this frame.
    pub served: Vec<bool>,
    pub bits: Vec<f64>,
    pub scheduled_bits: f64,
    pub contended_bits: f64,
    pub collisions: usize,
    pub contenders: usize,
    pub contenders_served: usize,
    /// Contended time until the last success, in units of t_r (rounded up).
    pub n_r_measured: Option<usize>,
    /// Rates of the served contenders, `(user, bit/s)`.
    pub contended_rates: Vec<(usize, f64)>,
    pub throughput: Throughput,
}

impl FrameTrace {
    /// Checks event ordering, served-once, scheduled exclusivity, DCF legality
    /// and bit conservation. Returns the first violation found.
    pub fn check_invariants(&self, dcf: &DcfParams) -> Result<(), String> {
        let tol = 1e-9;
        if self.events.windows(2).any(|w| w[1].t_s < w[0].t_s) {
            return Err("event times decrease".into());
        }
        let total = self.frame.total_s();
        if let Some(e) = self.events.iter().find(|e| e.end_s() > total + tol) {
            return Err(format!("event {:?} ends after the frame at {total}", e));
        }
        let mut data_count = vec![0usize; self.served.len()];
        let mut bits = 0.0;
        for e in &self.events {
            if matches!(e.kind, EventKind::ScheduledData | EventKind::ContendedData) {
                let u = e.user.ok_or("data event without user")?;
                data_count[u] += 1;
                bits += e.bits;
            }
        }
        for (u, (&n, &s)) in data_count.iter().zip(&self.served).enumerate() {
            if n > 1 {
                return Err(format!("user {u} transmitted {n} times"));
            }
            if (n == 1) != s {
                return Err(format!("user {u} served flag disagrees with its data events"));
            }
        }
        let delivered = self.scheduled_bits + self.contended_bits;
        if (bits - delivered).abs() > 1e-9 * delivered.max(1.0) {
            return Err(format!("bits in events {bits} differ from delivered {delivered}"));
        }
        let per_user: f64 = self.bits.iter().sum();
        if (per_user - delivered).abs() > 1e-9 * delivered.max(1.0) {
            return Err("per-user bits do not add up".into());
        }

        let mut sched: Vec<&Event> = self.events.iter().filter(|e| e.kind == EventKind::ScheduledData).collect();
        sched.sort_by(|a, b| a.channel.cmp(&b.channel).then(a.t_s.total_cmp(&b.t_s)));
        for w in sched.windows(2) {
            if w[0].channel == w[1].channel && w[1].t_s < w[0].end_s() - tol {
                return Err(format!("scheduled data overlaps on channel {:?}", w[0].channel));
            }
        }

        for d in self.events.iter().filter(|e| e.kind == EventKind::ContendedData) {
            let (u, c) = (d.user, d.channel);
            let t_cts = d.t_s - dcf.sifs_s - dcf.cts_s();
            let t_rts = t_cts - dcf.sifs_s - dcf.rts_s();
            let near = |a: f64, b: f64| (a - b).abs() < tol;
            let has = |kind: EventKind, t: f64| {
                self.events.iter().any(|e| e.kind == kind && e.user == u && e.channel == c && near(e.t_s, t))
            };
            if !has(EventKind::Cts, t_cts) || !has(EventKind::Rts, t_rts) {
                return Err(format!("contended data of {u:?} lacks its RTS/CTS exchange"));
            }
            let idle = self
                .events
                .iter()
                .any(|e| e.kind == EventKind::Idle && e.channel == c && near(e.end_s(), t_rts) && e.duration_s >= dcf.difs_s - tol);
            if !idle {
                return Err(format!("contended data of {u:?} lacks DIFS and backoff before its RTS"));
            }
        }
        Ok(())
    }
}

/// `S_s = scheduled bits / (alpha t2)`, `S_c = contended bits / (beta t2)`,
/// `S_o = all bits / (t0 + t1 + t2)`.
pub fn measure_throughput(trace: &FrameTrace, frame: &FrameConfig) -> Throughput {
    let per = |bits: f64, time: f64| if time > 0.0 && bits > 0.0 { bits / time } else { 0.0 };
    Throughput {
        s_s: per(trace.scheduled_bits, frame.alpha * frame.t2_s),
        s_c: per(trace.contended_bits, frame.beta * frame.t2_s),
        s_o: per(trace.scheduled_bits + trace.contended_bits, frame.total_s()),
    }
}
