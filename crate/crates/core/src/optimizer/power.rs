//! Sum-rate power split among the scheduled users.
//!
//! With the RIS assignment and phases fixed, user k sees a linear SNR
//! `a_k * p_k`. Maximising `sum log2(1 + a_k p_k)` under `sum p_k <= P` and
//! `p_k >= f_k` (the rate floor) is solved by water-filling with floors:
//! `p_k = max(f_k, mu - 1/a_k)`, with the water level mu found by bisection.

use crate::error::{Error, Infeasibility, Result};

/// Largest scaled KKT residual accepted from [`allocate_power`].
pub const KKT_TOLERANCE: f64 = 1e-8;

/// Power needed by each user to reach `min_spectral_eff` bit/s/Hz.
pub fn floor_powers(snr_per_watt: &[f64], min_spectral_eff: f64) -> Vec<f64> {
    let need = 2f64.powf(min_spectral_eff) - 1.0;
    snr_per_watt
        .iter()
        .map(|&a| if need <= 0.0 { 0.0 } else if a > 0.0 { need / a } else { f64::INFINITY })
        .collect()
}

/// `sum_k log2(1 + a_k p_k)`.
pub fn sum_spectral_eff(snr_per_watt: &[f64], powers: &[f64]) -> f64 {
    snr_per_watt.iter().zip(powers).map(|(a, p)| (1.0 + a * p).log2()).sum()
}

fn water_level_powers<'a>(snr_per_watt: &'a [f64], floors: &'a [f64], mu: f64) -> impl Iterator<Item = f64> + 'a {
    snr_per_watt
        .iter()
        .zip(floors)
        .map(move |(&a, &f)| if a > 0.0 { f.max(mu - 1.0 / a) } else { f })
}

/// Optimal powers (W) for the given per-watt SNRs, budget and rate floor.
pub fn allocate_power(snr_per_watt: &[f64], budget_w: f64, min_spectral_eff: f64) -> Result<Vec<f64>> {
    if snr_per_watt.is_empty() {
        return Ok(Vec::new());
    }
    if !(budget_w > 0.0) {
        return Err(Error::NonPositive { what: "power budget", value: budget_w });
    }
    let floors = floor_powers(snr_per_watt, min_spectral_eff);
    if let Some((user, &f)) = floors
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .filter(|(_, &f)| f > budget_w)
    {
        return Err(Error::Infeasible(Infeasibility { user, required_w: f, budget_w }));
    }
    let floor_sum: f64 = floors.iter().sum();
    if floor_sum > budget_w {
        // Each floor fits alone but not together; blame the most expensive user.
        let (user, &f) = floors
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("nonempty");
        return Err(Error::Infeasible(Infeasibility { user, required_w: f, budget_w: budget_w - (floor_sum - f) }));
    }
    if snr_per_watt.iter().all(|&a| a <= 0.0) {
        // No user can use extra power; the floors are all that matter.
        return Ok(floors);
    }
    let total = |mu: f64| water_level_powers(snr_per_watt, &floors, mu).sum::<f64>();
    let mut lo = 0.0;
    let max_inv = snr_per_watt
        .iter()
        .filter(|&&a| a > 0.0)
        .map(|&a| 1.0 / a)
        .fold(0.0, f64::max);
    let mut hi = budget_w + max_inv;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total(mid) > budget_w {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let powers: Vec<f64> = water_level_powers(snr_per_watt, &floors, lo).collect();
    let residual = kkt_residual(snr_per_watt, &powers, &floors, budget_w);
    if residual >= KKT_TOLERANCE {
        return Err(Error::NoConvergence { iterations: 200, residual });
    }
    Ok(powers)
}

/// Scaled KKT residual of a candidate split: primal budget slack, plus
/// stationarity against the common water level for users above their floor
/// and dual sign for users sitting on it.
pub fn kkt_residual(snr_per_watt: &[f64], powers: &[f64], floors: &[f64], budget_w: f64) -> f64 {
    let used: f64 = powers.iter().sum();
    let mut worst = ((used - budget_w) / budget_w).abs();
    // Marginal gain (in nats) of each user at its power.
    let marginal = |a: f64, p: f64| if a > 0.0 { a / (1.0 + a * p) } else { 0.0 };
    let free: Vec<f64> = snr_per_watt
        .iter()
        .zip(powers)
        .zip(floors)
        .filter(|((_, &p), &f)| p > f * (1.0 + 1e-12) + 1e-300)
        .map(|((&a, &p), _)| marginal(a, p))
        .collect();
    if free.is_empty() {
        return worst;
    }
    let lambda = free.iter().sum::<f64>() / free.len() as f64;
    for g in &free {
        worst = worst.max((g - lambda).abs() / lambda);
    }
    for ((&a, &p), &f) in snr_per_watt.iter().zip(powers).zip(floors) {
        if p <= f * (1.0 + 1e-12) + 1e-300 {
            // Sitting on the floor is optimal only if the marginal gain there
            // does not beat the water level.
            worst = worst.max(((marginal(a, p) - lambda) / lambda).max(0.0));
        }
    }
    worst
}
