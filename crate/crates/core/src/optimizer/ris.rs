//! RIS selection and phase configuration: centralized for scheduled users,
//! per-user for contenders.

use serde::{Deserialize, Serialize};

use super::assign::{assign_ris_static, StaticAssignment};
use super::LinkBudget;
use crate::channel::{align_phases, effective_gain, rate_bps, ChannelRealization, PhaseConfig};
use crate::error::{Error, Result};

/// Output of [`centralized_ris_config`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralizedConfig {
    pub assignment: StaticAssignment,
    /// Phases of each scheduled user on its assigned RIS.
    pub phases: Vec<PhaseConfig>,
    /// Objective (sum rate, bit/s) after every iteration that ran.
    pub objective_trace: Vec<f64>,
    /// Iterations needed to converge; the final confirming pass is not counted.
    pub iterations: usize,
}

/// Rates of `users` on every RIS under the given per-pair phases.
fn rate_table(
    ch: &ChannelRealization,
    users: &[usize],
    powers: &[f64],
    phases: &[Vec<PhaseConfig>],
    link: LinkBudget,
) -> Result<Vec<Vec<f64>>> {
    users
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            (0..ch.num_ris)
                .map(|m| {
                    let gain = effective_gain(ch.r(k), ch.h(k, m), ch.g(k, m), &phases[i][m])?;
                    Ok(rate_bps(gain.norm_sqr() * powers[i] / link.noise_w, link.subchannel_bw_hz))
                })
                .collect()
        })
        .collect()
}

fn assigned_objective(rates: &[Vec<f64>], a: &StaticAssignment) -> f64 {
    a.ris.iter().enumerate().map(|(i, &m)| rates[i][m]).sum()
}

/// Alternates the 0-1 assignment (phases fixed) with phase alignment
/// (assignment fixed) for the scheduled `users` at the given `powers`.
///
/// Phases start at zero. The alignment step re-phases every user-RIS pair,
/// not only the assigned ones, so the next assignment sees aligned rates.
/// Stops when the objective gains less than `tolerance` or after
/// `max_iterations`.
pub fn centralized_ris_config(
    ch: &ChannelRealization,
    users: &[usize],
    powers: &[f64],
    slots_per_ris: usize,
    link: LinkBudget,
    max_iterations: usize,
    tolerance: f64,
) -> Result<CentralizedConfig> {
    if powers.len() != users.len() {
        return Err(Error::LengthMismatch { expected: users.len(), got: powers.len() });
    }
    let mut phases: Vec<Vec<PhaseConfig>> =
        vec![vec![PhaseConfig::zeros(ch.elements); ch.num_ris]; users.len()];
    let mut trace = Vec::new();
    let mut assignment = None;
    let mut iterations = 0;
    for it in 0..max_iterations.max(1) {
        let rates = rate_table(ch, users, powers, &phases, link)?;
        let a = assign_ris_static(&rates, slots_per_ris)?;
        for (i, &k) in users.iter().enumerate() {
            for (m, ph) in phases[i].iter_mut().enumerate() {
                *ph = align_phases(ch.r(k), ch.h(k, m), ch.g(k, m))?;
            }
        }
        let rates = rate_table(ch, users, powers, &phases, link)?;
        let obj = assigned_objective(&rates, &a);
        assignment = Some(a);
        let converged = trace.last().is_some_and(|&prev: &f64| obj - prev < tolerance * prev.abs().max(1.0));
        trace.push(obj);
        if converged {
            break;
        }
        iterations = it + 1;
    }
    let assignment = assignment.expect("at least one iteration");
    let phases = assignment.ris.iter().enumerate().map(|(i, &m)| phases[i][m].clone()).collect();
    Ok(CentralizedConfig { assignment, phases, objective_trace: trace, iterations })
}

/// Choice of a contending user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RisChoice {
    pub ris: usize,
    pub phases: PhaseConfig,
    pub rate_bps: f64,
}

/// Picks the idle RIS with the best aligned-phase rate for user `k`
/// (lowest RIS id on ties).
pub fn distributed_ris_select(
    ch: &ChannelRealization,
    k: usize,
    idle: &[usize],
    tx_power_w: f64,
    link: LinkBudget,
) -> Result<RisChoice> {
    let mut best: Option<(usize, f64)> = None;
    for &m in idle {
        let g = ch.aligned_gain(k, m);
        let better = match best {
            None => true,
            Some((bm, bg)) => g > bg || (g == bg && m < bm),
        };
        if better {
            best = Some((m, g));
        }
    }
    let (ris, gain) = best.ok_or(Error::NoRisAvailable)?;
    let phases = align_phases(ch.r(k), ch.h(k, ris), ch.g(k, ris))?;
    Ok(RisChoice {
        ris,
        phases,
        rate_bps: rate_bps(gain * gain * tx_power_w / link.noise_w, link.subchannel_bw_hz),
    })
}
