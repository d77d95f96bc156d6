//! Operation counts of the three configuration algorithms and the rate gain
//! an RIS adds to a user.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::rate_bps;

/// Sizes that enter the complexity expressions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityInputs {
    /// Existing users K.
    pub k: usize,
    /// Scheduled users X.
    pub x: usize,
    pub m: usize,
    /// Idle RISs seen by a contender, M-hat.
    pub m_idle: usize,
    pub n: usize,
    pub l1: usize,
    pub l2: usize,
    pub l3: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    /// `K + X^3 L1 + M^2 N^2 L1 + X^2 M^2 L1`.
    pub alg1: f64,
    /// `M^2 N^2 L2 + X^2 M^2 L2`.
    pub alg2: f64,
    /// `M^2 N^2 L3 + M^2 L3` with M-hat idle RISs.
    pub alg3: f64,
    /// Operations saved by scheduling only X of the K users: `K^3 L1 - X^3 L1`.
    pub delta_o: f64,
    /// `(T + kappa_c * delta_o) / T` for frame length T.
    pub improvement_ratio: f64,
    /// Mean RIS rate increment over scheduled users (bit/s).
    pub xi_mean_bps: f64,
    /// Mean RIS rate increment over contending users (bit/s).
    pub chi_mean_bps: f64,
}

/// Operation count of the joint scheduling and configuration pass with
/// `users` scheduled users in place of X.
pub fn alg1_count(k: usize, users: usize, m: usize, n: usize, l1: usize) -> f64 {
    let (k, x, m, n, l1) = (k as f64, users as f64, m as f64, n as f64, l1 as f64);
    k + x.powi(3) * l1 + m * m * n * n * l1 + x * x * m * m * l1
}

pub fn complexity_counts(c: &ComplexityInputs) -> (f64, f64, f64, f64) {
    let (k, x, m, mh, n) = (c.k as f64, c.x as f64, c.m as f64, c.m_idle as f64, c.n as f64);
    let (l1, l2, l3) = (c.l1 as f64, c.l2 as f64, c.l3 as f64);
    let alg1 = alg1_count(c.k, c.x, c.m, c.n, c.l1);
    let alg2 = m * m * n * n * l2 + x * x * m * m * l2;
    let alg3 = mh * mh * n * n * l3 + mh * mh * l3;
    let delta_o = k.powi(3) * l1 - x.powi(3) * l1;
    (alg1, alg2, alg3, delta_o)
}

/// Builds the report. `frame_s` is T = t0 + t1 + t2 and `kappa_c` converts
/// operation counts to seconds.
pub fn complexity_report(
    c: &ComplexityInputs,
    frame_s: f64,
    kappa_c: f64,
    xi_bps: &[f64],
    chi_bps: &[f64],
) -> ComplexityReport {
    let (alg1, alg2, alg3, delta_o) = complexity_counts(c);
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    ComplexityReport {
        alg1,
        alg2,
        alg3,
        delta_o,
        improvement_ratio: if frame_s > 0.0 { (frame_s + kappa_c * delta_o) / frame_s } else { 1.0 },
        xi_mean_bps: mean(xi_bps),
        chi_mean_bps: mean(chi_bps),
    }
}

/// Rate added by the reflected path `reflect = h Theta g` on top of the direct
/// path `r`, at power `rho_sq`, as a plain rate difference.
pub fn ris_rate_increment(r: Complex64, reflect: Complex64, rho_sq: f64, noise_w: f64, bw_hz: f64) -> f64 {
    let with = rate_bps((r + reflect).norm_sqr() * rho_sq / noise_w, bw_hz);
    let without = rate_bps(r.norm_sqr() * rho_sq / noise_w, bw_hz);
    with - without
}

/// Same increment through `kappa = sigma^2 + |r|^2 rho^2` and
/// `d_kappa = |hTg|^2 rho^2 + 2|r||hTg| rho^2`, valid when the reflected path
/// is co-phased with the direct one.
pub fn ris_rate_increment_kappa(r: Complex64, reflect: Complex64, rho_sq: f64, noise_w: f64, bw_hz: f64) -> f64 {
    let kappa = noise_w + r.norm_sqr() * rho_sq;
    let d_kappa = reflect.norm_sqr() * rho_sq + 2.0 * r.norm() * reflect.norm() * rho_sq;
    bw_hz * ((kappa + d_kappa) / kappa).log2()
}
