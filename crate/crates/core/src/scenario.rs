//! Static inputs of a run: geometry, user population, RIS inventory, radio and
//! protocol constants.
//!
//! A [`Scenario`] is loaded once from a TOML document, validated, and then
//! shared read-only. Decibel quantities stay in dBm in the file and are
//! converted to linear watts through the accessors on [`RadioParams`].

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub type Position = [f64; 3];

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioParams {
    /// Total bandwidth B shared by all subchannels (Hz).
    pub bandwidth_total_hz: f64,
    /// Number of orthogonal subchannels C.
    pub num_subchannels: usize,
    pub noise_power_dbm: f64,
    /// Fixed transmit power of every contending user.
    pub tx_power_mobile_dbm: f64,
    /// Sum-power budget shared by the scheduled users.
    pub tx_power_budget_static_dbm: f64,
    /// Minimum rate every served user must reach (bit/s).
    pub rate_min_bps: f64,
    /// Exponent on the user-RIS and RIS-BS links.
    pub pathloss_exp_los: f64,
    /// Exponent on the direct user-BS link.
    pub pathloss_exp_nlos: f64,
    /// Rician K-factor of the LoS links (dB). The direct link is Rayleigh.
    pub rician_k_factor_db: f64,
    /// Path gain at the 1 m reference distance (dB).
    pub ref_pathloss_db: f64,
    /// Carrier frequency, used for the LoS phase and element spacing (Hz).
    pub carrier_hz: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            bandwidth_total_hz: 20e6,
            num_subchannels: 2,
            noise_power_dbm: -94.0,
            tx_power_mobile_dbm: 10.0,
            tx_power_budget_static_dbm: 30.0,
            rate_min_bps: 1e6,
            pathloss_exp_los: 2.2,
            pathloss_exp_nlos: 3.6,
            rician_k_factor_db: 10.0,
            ref_pathloss_db: -30.0,
            carrier_hz: 2.4e9,
        }
    }
}

impl RadioParams {
    pub fn subchannel_bw_hz(&self) -> f64 {
        self.bandwidth_total_hz / self.num_subchannels as f64
    }

    pub fn noise_w(&self) -> f64 {
        dbm_to_watts(self.noise_power_dbm)
    }

    pub fn tx_power_mobile_w(&self) -> f64 {
        dbm_to_watts(self.tx_power_mobile_dbm)
    }

    pub fn power_budget_static_w(&self) -> f64 {
        dbm_to_watts(self.tx_power_budget_static_dbm)
    }

    pub fn rician_k(&self) -> f64 {
        db_to_linear(self.rician_k_factor_db)
    }

    pub fn wavelength_m(&self) -> f64 {
        299_792_458.0 / self.carrier_hz
    }
}

/// DCF and frame timing constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcfParams {
    /// Minimum contention window W_min (slots).
    pub w_min: u32,
    /// Maximum contention window W_max (slots).
    pub w_max: u32,
    /// Maximum backoff stage l.
    pub max_backoff_stage: u32,
    pub rts_bytes: u32,
    pub cts_bytes: u32,
    pub sifs_s: f64,
    pub difs_s: f64,
    /// One-way propagation delay.
    pub prop_delay_s: f64,
    pub payload_bytes: u32,
    /// Airtime of one contended payload, t_d.
    pub payload_time_s: f64,
    /// Airtime of one pilot, t_p.
    pub pilot_time_s: f64,
    /// Duration of one scheduled data slot, t.
    pub data_slot_s: f64,
    /// Bit rate used to turn RTS/CTS sizes into airtime.
    pub control_rate_bps: f64,
    /// Backoff slot duration.
    pub backoff_slot_s: f64,
}

impl Default for DcfParams {
    fn default() -> Self {
        Self {
            w_min: 15,
            w_max: 15 << 6,
            max_backoff_stage: 6,
            rts_bytes: 24,
            cts_bytes: 16,
            sifs_s: 10e-6,
            difs_s: 50e-6,
            prop_delay_s: 1e-6,
            payload_bytes: 500,
            // 500 bytes at the 1 Mb/s rate floor.
            payload_time_s: 4e-3,
            pilot_time_s: 100e-6,
            data_slot_s: 4e-3,
            control_rate_bps: 1e6,
            backoff_slot_s: 20e-6,
        }
    }
}

impl DcfParams {
    pub fn rts_s(&self) -> f64 {
        self.rts_bytes as f64 * 8.0 / self.control_rate_bps
    }

    pub fn cts_s(&self) -> f64 {
        self.cts_bytes as f64 * 8.0 / self.control_rate_bps
    }

    pub fn payload_bits(&self) -> f64 {
        self.payload_bytes as f64 * 8.0
    }

    /// Contention window at a given backoff stage.
    pub fn window(&self, stage: u32) -> u32 {
        let stage = stage.min(self.max_backoff_stage);
        self.w_min.saturating_mul(1 << stage).min(self.w_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserClass {
    Static,
    ExistingMobile,
    NewMobile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserPopulation {
    /// Existing users K (sent pilots this frame).
    pub num_existing: usize,
    /// New mobile users Z joining during this frame.
    pub num_new_mobile: usize,
    /// u_k for the existing users: 1 static, 0 mobile.
    pub mobility_flags: Vec<u8>,
    /// Optional explicit positions for all K+Z users. Sampled from the seed
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<Position>>,
}

/// Population split static : existing-mobile : new-mobile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationRatio {
    pub static_users: u32,
    pub mobile_users: u32,
    pub new_users: u32,
}

impl PopulationRatio {
    pub const fn new(static_users: u32, mobile_users: u32, new_users: u32) -> Self {
        Self {
            static_users,
            mobile_users,
            new_users,
        }
    }

    /// Splits `total` users by the ratio using largest-remainder rounding.
    pub fn split(&self, total: usize) -> (usize, usize, usize) {
        let parts = [self.static_users, self.mobile_users, self.new_users];
        let sum: u64 = parts.iter().map(|&p| p as u64).sum();
        if sum == 0 {
            return (0, 0, 0);
        }
        let mut counts = [0usize; 3];
        let mut rems = [(0u64, 0usize); 3];
        for (i, &p) in parts.iter().enumerate() {
            let num = total as u64 * p as u64;
            counts[i] = (num / sum) as usize;
            rems[i] = (num % sum, i);
        }
        let mut left = total - counts.iter().sum::<usize>();
        // Largest remainder first, lowest index on ties.
        rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in rems.iter() {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        (counts[0], counts[1], counts[2])
    }

    pub fn label(&self) -> String {
        format!("{}:{}:{}", self.static_users, self.mobile_users, self.new_users)
    }
}

impl std::str::FromStr for PopulationRatio {
    type Err = Error;

    /// Accepts `5:4:1`, `5/4/1` or `5-4-1`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split([':', '/', '-']).collect();
        if parts.len() != 3 {
            return Err(Error::Parse(format!("ratio `{s}` needs three parts")));
        }
        let mut v = [0u32; 3];
        for (slot, p) in v.iter_mut().zip(parts) {
            *slot = p
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("ratio `{s}`: bad part `{p}`")))?;
        }
        Ok(Self::new(v[0], v[1], v[2]))
    }
}

impl UserPopulation {
    /// Population of `total` = K + Z users split by `ratio`. Static users come
    /// first among the existing ones.
    pub fn from_ratio(total: usize, ratio: PopulationRatio) -> Self {
        let (x, existing_mobile, z) = ratio.split(total);
        let mut flags = vec![1u8; x];
        flags.extend(std::iter::repeat_n(0u8, existing_mobile));
        Self {
            num_existing: x + existing_mobile,
            num_new_mobile: z,
            mobility_flags: flags,
            positions: None,
        }
    }

    pub fn total(&self) -> usize {
        self.num_existing + self.num_new_mobile
    }

    pub fn class_of(&self, user: usize) -> UserClass {
        if user >= self.num_existing {
            UserClass::NewMobile
        } else if self.mobility_flags[user] == 1 {
            UserClass::Static
        } else {
            UserClass::ExistingMobile
        }
    }
}

/// Result of [`classify_users`]: a partition of the K+Z user ids.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Classification {
    /// Static users, X of them.
    pub static_users: Vec<usize>,
    /// Existing mobile users followed by new mobile users, Y of them.
    pub mobile_users: Vec<usize>,
    /// Number of entries at the tail of `mobile_users` that are new users.
    pub num_new: usize,
}

impl Classification {
    pub fn x(&self) -> usize {
        self.static_users.len()
    }

    pub fn y(&self) -> usize {
        self.mobile_users.len()
    }
}

/// Splits users into the scheduled (static) and contending (mobile) sets.
/// New users get ids `K..K+Z` and are always mobile.
pub fn classify_users(pop: &UserPopulation) -> Classification {
    let mut c = Classification::default();
    for (k, &u) in pop.mobility_flags.iter().enumerate().take(pop.num_existing) {
        if u == 1 {
            c.static_users.push(k);
        } else {
            c.mobile_users.push(k);
        }
    }
    c.mobile_users
        .extend(pop.num_existing..pop.num_existing + pop.num_new_mobile);
    c.num_new = pop.num_new_mobile;
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RisInventory {
    pub num_ris: usize,
    /// Zero leaves only the direct paths (a no-RIS baseline).
    pub elements_per_ris: usize,
    pub positions: Vec<Position>,
}

impl RisInventory {
    /// Each RIS is bound to the subchannel with the same index.
    pub fn subchannel_of(&self, ris: usize) -> usize {
        ris
    }
}

impl Default for RisInventory {
    fn default() -> Self {
        Self {
            num_ris: 2,
            elements_per_ris: 128,
            positions: vec![[25.0, 50.0, 50.0], [50.0, 25.0, 50.0]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    /// Users are dropped uniformly in `[0, side] x [0, side]`.
    pub area_side_m: f64,
    pub user_height_m: f64,
    pub bs_position: Position,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            area_side_m: 50.0,
            user_height_m: 0.0,
            bs_position: [0.0, 0.0, 100.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerParams {
    /// Outer power/RIS sweeps (L1).
    pub l1: usize,
    /// Centralized assignment/phase iterations (L2).
    pub l2: usize,
    /// Distributed selection iterations at each mobile user (L3).
    pub l3: usize,
    /// Seconds of computing per unit of the complexity count; sets t1.
    pub kappa_c: f64,
    /// Stop an alternation once the objective moves less than this.
    pub tolerance: f64,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        Self {
            l1: 5,
            l2: 5,
            l3: 5,
            kappa_c: DEFAULT_KAPPA_C,
            tolerance: 1e-9,
        }
    }
}

/// Calibrated so the computing period is about 5% of the transmission period
/// at the default scenario (t2 ~ 1.522 s, complexity count ~ 5.53e6).
pub const DEFAULT_KAPPA_C: f64 = 1.3767e-8;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationParams {
    /// Contenders pick the idle subchannel whose RIS gives the best rate
    /// instead of a uniform pick.
    #[serde(default)]
    pub csi_best_channel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    /// Frame counter for multi-frame runs.
    #[serde(default)]
    pub frame_index: u64,
    #[serde(default)]
    pub geometry: Geometry,
    pub population: UserPopulation,
    #[serde(default)]
    pub ris: RisInventory,
    #[serde(default)]
    pub radio: RadioParams,
    #[serde(default)]
    pub dcf: DcfParams,
    #[serde(default)]
    pub optimizer: OptimizerParams,
    #[serde(default)]
    pub simulation: SimulationParams,
}

impl Default for Scenario {
    /// 200 users at 5:4:1, two 128-element RISs, two 10 MHz subchannels.
    fn default() -> Self {
        Self {
            seed: 1,
            frame_index: 0,
            geometry: Geometry::default(),
            population: UserPopulation::from_ratio(200, PopulationRatio::new(5, 4, 1)),
            ris: RisInventory::default(),
            radio: RadioParams::default(),
            dcf: DcfParams::default(),
            optimizer: OptimizerParams::default(),
            simulation: SimulationParams::default(),
        }
    }
}

impl Scenario {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn classify(&self) -> Classification {
        classify_users(&self.population)
    }

    /// Positions of all K+Z users: explicit ones if given, otherwise uniform
    /// in the area. Each user's draw depends only on the seed, its id and,
    /// for mobile users, the frame index, so static users keep their spot
    /// across frames and growing the population keeps earlier users in place.
    pub fn user_positions(&self) -> Vec<Position> {
        if let Some(p) = &self.population.positions {
            return p.clone();
        }
        let side = self.geometry.area_side_m;
        (0..self.population.total())
            .map(|u| {
                let key = match self.population.class_of(u) {
                    UserClass::Static => rng::mix(u as u64),
                    _ => rng::mix(u as u64 ^ rng::mix(self.frame_index.wrapping_add(1))),
                };
                let mut rng: ChaCha8Rng = rng::stream(self.seed, rng::STREAM_POSITIONS, key);
                [
                    rng.random::<f64>() * side,
                    rng.random::<f64>() * side,
                    self.geometry.user_height_m,
                ]
            })
            .collect()
    }

    /// Sets the number of RISs (and subchannels, which are bound one-to-one),
    /// keeping the per-subchannel bandwidth. Extra RISs are placed on the
    /// area boundary at the height of the first RIS.
    pub fn set_num_ris(&mut self, m: usize) {
        let per_channel = self.radio.subchannel_bw_hz();
        let height = self.ris.positions.first().map_or(50.0, |p| p[2]);
        let side = self.geometry.area_side_m;
        let mut positions = self.ris.positions.clone();
        positions.truncate(m);
        let mut i = positions.len();
        while positions.len() < m {
            // Walk the perimeter in steps that avoid the two default spots.
            let t = ((i as f64) * 0.382).fract() * 4.0 * side;
            let p = match (t / side) as usize {
                0 => [t, side, height],
                1 => [side, 2.0 * side - t, height],
                2 => [3.0 * side - t, 0.0, height],
                _ => [0.0, t - 3.0 * side, height],
            };
            positions.push(p);
            i += 1;
        }
        self.ris.num_ris = m;
        self.ris.positions = positions;
        self.radio.num_subchannels = m;
        self.radio.bandwidth_total_hz = per_channel * m as f64;
    }

    /// Moves to the next frame: this frame's new users become existing mobile
    /// users and `arrivals` fresh users join.
    pub fn advance_frame(&mut self, arrivals: usize) {
        let pop = &mut self.population;
        pop.mobility_flags
            .extend(std::iter::repeat_n(0u8, pop.num_new_mobile));
        pop.num_existing += pop.num_new_mobile;
        pop.num_new_mobile = arrivals;
        if let Some(pos) = &mut pop.positions {
            // Keep explicit geometry usable: newcomers reuse the last position.
            let last = pos.last().copied().unwrap_or([0.0, 0.0, 0.0]);
            pos.resize(pop.num_existing + arrivals, last);
        }
        self.frame_index += 1;
    }
}

/// Violations found by [`validate_scenario`]; empty iff the scenario is runnable.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_runnable(&self) -> bool {
        self.violations.is_empty()
    }

    fn check(&mut self, ok: bool, msg: impl Into<String>) {
        if !ok {
            self.violations.push(msg.into());
        }
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_runnable() {
            Ok(())
        } else {
            Err(Error::InvalidScenario(self.violations.join("; ")))
        }
    }
}

pub fn validate_scenario(s: &Scenario) -> ValidationReport {
    let mut r = ValidationReport::default();
    let radio = &s.radio;
    r.check(radio.num_subchannels >= 1, "num_subchannels ≥ 1");
    r.check(
        radio.bandwidth_total_hz.is_finite() && radio.bandwidth_total_hz > 0.0,
        "bandwidth_total_hz > 0",
    );
    for (name, v) in [
        ("noise_power_dbm", radio.noise_power_dbm),
        ("tx_power_mobile_dbm", radio.tx_power_mobile_dbm),
        ("tx_power_budget_static_dbm", radio.tx_power_budget_static_dbm),
        ("rician_k_factor_db", radio.rician_k_factor_db),
        ("ref_pathloss_db", radio.ref_pathloss_db),
    ] {
        r.check(v.is_finite(), format!("{name} is finite"));
    }
    r.check(
        radio.rate_min_bps.is_finite() && radio.rate_min_bps >= 0.0,
        "rate_min_bps ≥ 0",
    );
    r.check(
        radio.pathloss_exp_los > 0.0 && radio.pathloss_exp_nlos > 0.0,
        "path-loss exponents > 0",
    );
    r.check(radio.carrier_hz > 0.0, "carrier_hz > 0");

    let dcf = &s.dcf;
    r.check(dcf.w_min >= 1, "w_min ≥ 1");
    r.check(dcf.w_min <= dcf.w_max, "w_min ≤ w_max");
    r.check(
        dcf.max_backoff_stage < 31
            && (dcf.w_min as u64) << dcf.max_backoff_stage == dcf.w_max as u64,
        "w_max = w_min · 2^max_backoff_stage",
    );
    for (name, v) in [
        ("sifs_s", dcf.sifs_s),
        ("difs_s", dcf.difs_s),
        ("prop_delay_s", dcf.prop_delay_s),
        ("payload_time_s", dcf.payload_time_s),
        ("pilot_time_s", dcf.pilot_time_s),
        ("data_slot_s", dcf.data_slot_s),
        ("control_rate_bps", dcf.control_rate_bps),
        ("backoff_slot_s", dcf.backoff_slot_s),
    ] {
        r.check(v.is_finite() && v > 0.0, format!("{name} > 0"));
    }

    let pop = &s.population;
    r.check(
        pop.mobility_flags.len() == pop.num_existing,
        format!(
            "mobility_flags length {} = num_existing {}",
            pop.mobility_flags.len(),
            pop.num_existing
        ),
    );
    r.check(
        pop.mobility_flags.iter().all(|&u| u <= 1),
        "mobility_flags ∈ {0, 1}",
    );
    let side = s.geometry.area_side_m;
    r.check(side > 0.0, "area_side_m > 0");
    if let Some(pos) = &pop.positions {
        r.check(
            pos.len() == pop.total(),
            format!("{} user positions for {} users", pos.len(), pop.total()),
        );
        let inside = pos.iter().all(|p| {
            p.iter().all(|c| c.is_finite()) && (0.0..=side).contains(&p[0]) && (0.0..=side).contains(&p[1])
        });
        r.check(inside, "every user position inside the area");
    }

    let ris = &s.ris;
    r.check(ris.num_ris >= 1, "num_ris ≥ 1");
    r.check(
        ris.positions.len() == ris.num_ris,
        format!("{} RIS positions for {} RISs", ris.positions.len(), ris.num_ris),
    );
    r.check(
        ris.num_ris == radio.num_subchannels,
        "num_ris = num_subchannels (one RIS per subchannel)",
    );

    let opt = &s.optimizer;
    r.check(opt.l1 >= 1 && opt.l2 >= 1 && opt.l3 >= 1, "iteration caps L1, L2, L3 ≥ 1");
    r.check(opt.kappa_c.is_finite() && opt.kappa_c >= 0.0, "kappa_c ≥ 0");
    r
}
