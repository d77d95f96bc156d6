//! Channel realizations, per-link SNR and RIS phase alignment.
//!
//! Every user k sees a direct path `r_k` to the BS and, through RIS m, a
//! cascaded path `sum_n h_mn e^{j theta_n} g_kmn`. User-RIS and RIS-BS links
//! are Rician with a geometric LoS term; the direct link is Rayleigh. Large
//! scale gain follows `PL0 * d^-exp` with distances from 3-D positions.

use std::f64::consts::TAU;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scenario::{db_to_linear, Position, Scenario};

/// Distances below this are rejected as singular.
pub const MIN_DISTANCE_M: f64 = 0.1;

/// Frozen small- and large-scale gains for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub num_users: usize,
    pub num_ris: usize,
    pub elements: usize,
    /// User-to-RIS vectors, laid out `[user][ris][element]`.
    g: Vec<Complex64>,
    /// RIS-to-BS vectors, laid out `[ris][element]`.
    h: Vec<Complex64>,
    /// Direct user-to-BS gains.
    r: Vec<Complex64>,
}

impl ChannelRealization {
    /// Builds a realization from explicit gains. `g` is indexed
    /// `[user][ris][element]`, `h` is `[ris][element]`.
    pub fn from_parts(
        r: Vec<Complex64>,
        h: Vec<Vec<Complex64>>,
        g: Vec<Vec<Vec<Complex64>>>,
    ) -> Result<Self> {
        let num_users = r.len();
        let num_ris = h.len();
        let elements = h.first().map_or(0, Vec::len);
        if g.len() != num_users {
            return Err(Error::LengthMismatch { expected: num_users, got: g.len() });
        }
        for hm in &h {
            if hm.len() != elements {
                return Err(Error::LengthMismatch { expected: elements, got: hm.len() });
            }
        }
        for gk in &g {
            if gk.len() != num_ris {
                return Err(Error::LengthMismatch { expected: num_ris, got: gk.len() });
            }
            for gkm in gk {
                if gkm.len() != elements {
                    return Err(Error::LengthMismatch { expected: elements, got: gkm.len() });
                }
            }
        }
        Ok(Self {
            num_users,
            num_ris,
            elements,
            g: g.into_iter().flatten().flatten().collect(),
            h: h.into_iter().flatten().collect(),
            r,
        })
    }

    pub fn r(&self, k: usize) -> Complex64 {
        self.r[k]
    }

    /// RIS-to-BS vector seen by user `k` through RIS `m` (same for every user).
    pub fn h(&self, _k: usize, m: usize) -> &[Complex64] {
        &self.h[m * self.elements..(m + 1) * self.elements]
    }

    pub fn g(&self, k: usize, m: usize) -> &[Complex64] {
        let start = (k * self.num_ris + m) * self.elements;
        &self.g[start..start + self.elements]
    }

    /// |r| + sum |h||g|: the magnitude reached with aligned phases.
    pub fn aligned_gain(&self, k: usize, m: usize) -> f64 {
        self.r(k).norm()
            + self
                .h(k, m)
                .iter()
                .zip(self.g(k, m))
                .map(|(h, g)| h.norm() * g.norm())
                .sum::<f64>()
    }

    /// Squared aligned gain for every (user, RIS) pair, `[user][ris]`.
    pub fn aligned_gain_sq_table(&self) -> Vec<Vec<f64>> {
        (0..self.num_users)
            .map(|k| (0..self.num_ris).map(|m| self.aligned_gain(k, m).powi(2)).collect())
            .collect()
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let c: Self = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        let expect_g = c.num_users * c.num_ris * c.elements;
        if c.g.len() != expect_g || c.h.len() != c.num_ris * c.elements || c.r.len() != c.num_users {
            return Err(Error::Parse("channel dump has inconsistent dimensions".into()));
        }
        Ok(c)
    }
}

/// Unit-amplitude RIS phase shifts, each in `[0, 2π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    theta: Vec<f64>,
}

impl PhaseConfig {
    /// Wraps every phase into `[0, 2π)`.
    pub fn new(theta: impl IntoIterator<Item = f64>) -> Self {
        Self { theta: theta.into_iter().map(wrap_phase).collect() }
    }

    pub fn zeros(n: usize) -> Self {
        Self { theta: vec![0.0; n] }
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

pub fn wrap_phase(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    if w >= TAU { 0.0 } else { w }
}

fn check_lengths(h: &[Complex64], g: &[Complex64], phases: &PhaseConfig) -> Result<()> {
    if h.len() != g.len() {
        return Err(Error::LengthMismatch { expected: h.len(), got: g.len() });
    }
    if phases.len() != h.len() {
        return Err(Error::LengthMismatch { expected: h.len(), got: phases.len() });
    }
    Ok(())
}

/// `r + sum_n h_n e^{j theta_n} g_n`.
pub fn effective_gain(
    r: Complex64,
    h: &[Complex64],
    g: &[Complex64],
    phases: &PhaseConfig,
) -> Result<Complex64> {
    check_lengths(h, g, phases)?;
    Ok(h.iter()
        .zip(g)
        .zip(phases.theta())
        .fold(r, |acc, ((h, g), &t)| acc + h * Complex64::from_polar(1.0, t) * g))
}

/// Linear SNR `|gain|^2 p / sigma^2`.
pub fn snr(
    r: Complex64,
    h: &[Complex64],
    g: &[Complex64],
    phases: &PhaseConfig,
    tx_power_w: f64,
    noise_w: f64,
) -> Result<f64> {
    if !(tx_power_w > 0.0) {
        return Err(Error::NonPositive { what: "tx_power_w", value: tx_power_w });
    }
    if !(noise_w > 0.0) {
        return Err(Error::NonPositive { what: "noise_w", value: noise_w });
    }
    Ok(effective_gain(r, h, g, phases)?.norm_sqr() * tx_power_w / noise_w)
}

/// Phases that make every reflected term co-phased with the direct path:
/// `theta_n = arg r - arg h_n - arg g_n`. Elements with a zero gain get 0.
pub fn align_phases(r: Complex64, h: &[Complex64], g: &[Complex64]) -> Result<PhaseConfig> {
    if h.len() != g.len() {
        return Err(Error::LengthMismatch { expected: h.len(), got: g.len() });
    }
    let ref_arg = r.arg();
    Ok(PhaseConfig::new(h.iter().zip(g).map(|(h, g)| {
        if *h == Complex64::new(0.0, 0.0) || *g == Complex64::new(0.0, 0.0) {
            0.0
        } else {
            ref_arg - h.arg() - g.arg()
        }
    })))
}

/// Shannon rate on one subchannel.
pub fn rate_bps(snr: f64, subchannel_bw_hz: f64) -> f64 {
    debug_assert!(snr >= 0.0, "negative SNR {snr}");
    subchannel_bw_hz * (1.0 + snr).log2()
}

fn distance(a: &Position, b: &Position) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Large-scale power gain `PL0 * d^-exp`.
pub fn path_gain(ref_db: f64, exponent: f64, d: f64) -> f64 {
    db_to_linear(ref_db) * d.powf(-exponent)
}

/// Half-wavelength square grid of element positions around `center` in the
/// vertical x-z plane.
pub fn element_positions(center: &Position, n: usize, wavelength: f64) -> Vec<Position> {
    let cols = (n as f64).sqrt().ceil().max(1.0) as usize;
    let rows = n.div_ceil(cols);
    let d = wavelength / 2.0;
    (0..n)
        .map(|i| {
            let (row, col) = (i / cols, i % cols);
            [
                center[0] + (col as f64 - (cols as f64 - 1.0) / 2.0) * d,
                center[1],
                center[2] + (row as f64 - (rows as f64 - 1.0) / 2.0) * d,
            ]
        })
        .collect()
}

fn circular_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// One Rician coefficient with mean power `power`, K-factor `k` (linear) and
/// LoS phase `los_phase`. `k = 0` gives Rayleigh fading.
pub fn rician<R: Rng + ?Sized>(rng: &mut R, power: f64, k: f64, los_phase: f64) -> Complex64 {
    let los = (k / (k + 1.0)).sqrt() * Complex64::from_polar(1.0, los_phase);
    let nlos = (1.0 / (k + 1.0)).sqrt() * circular_normal(rng);
    power.sqrt() * (los + nlos)
}

fn checked_distance(a: &Position, b: &Position, what: &str) -> Result<f64> {
    let d = distance(a, b);
    if d < MIN_DISTANCE_M {
        return Err(Error::DegenerateGeometry(format!("{what} distance {d:.3} m < {MIN_DISTANCE_M} m")));
    }
    Ok(d)
}

/// Draws a realization for every user and RIS of the scenario.
pub fn draw_channels(s: &Scenario, seed: u64) -> Result<ChannelRealization> {
    let users = s.user_positions();
    let bs = s.geometry.bs_position;
    let radio = &s.radio;
    let n = s.ris.elements_per_ris;
    let m_count = s.ris.num_ris;
    let lambda = radio.wavelength_m();
    let k_los = radio.rician_k();
    let wave = TAU / lambda;
    let mut rng = rng::stream(seed, rng::STREAM_CHANNELS, s.frame_index);

    let elements: Vec<Vec<Position>> =
        s.ris.positions.iter().map(|c| element_positions(c, n, lambda)).collect();

    let mut h = Vec::with_capacity(m_count);
    for (m, center) in s.ris.positions.iter().enumerate() {
        let d = checked_distance(center, &bs, &format!("RIS {m} to BS"))?;
        let power = path_gain(radio.ref_pathloss_db, radio.pathloss_exp_los, d);
        h.push(
            elements[m]
                .iter()
                .map(|e| rician(&mut rng, power, k_los, -wave * distance(e, &bs)))
                .collect::<Vec<_>>(),
        );
    }

    let mut r = Vec::with_capacity(users.len());
    let mut g = Vec::with_capacity(users.len());
    for (k, u) in users.iter().enumerate() {
        let d = checked_distance(u, &bs, &format!("user {k} to BS"))?;
        let power = path_gain(radio.ref_pathloss_db, radio.pathloss_exp_nlos, d);
        r.push(rician(&mut rng, power, 0.0, 0.0));
        let mut gk = Vec::with_capacity(m_count);
        for (m, center) in s.ris.positions.iter().enumerate() {
            let d = checked_distance(u, center, &format!("user {k} to RIS {m}"))?;
            let power = path_gain(radio.ref_pathloss_db, radio.pathloss_exp_los, d);
            gk.push(
                elements[m]
                    .iter()
                    .map(|e| rician(&mut rng, power, k_los, -wave * distance(u, e)))
                    .collect::<Vec<_>>(),
            );
        }
        g.push(gk);
    }
    ChannelRealization::from_parts(r, h, g)
}
