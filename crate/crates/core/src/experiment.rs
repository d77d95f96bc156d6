//! Parameter sweeps over seeds and modes, aggregated to mean and standard
//! deviation, with CSV and JSON writers.
//!
//! A sweep is a `;`-separated product of axes. Each axis is `name=values`
//! where values are a comma list whose items are either single values or
//! numeric ranges `start:stop:step` (stop inclusive):
//!
//! ```text
//! users=50:200:25;elements=0,128
//! ratio=6:3:1,5:4:1;beta_alpha=opt,0.5:3:0.5
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{PopulationRatio, Scenario, UserPopulation};
use crate::sim::{measure_fairness, simulate, BetaAlpha, Mode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Total population K + Z.
    Users,
    Ratio,
    /// Number of RISs (and subchannels).
    Ris,
    Elements,
    /// Absolute `beta / alpha` of proposed frames; `opt` keeps the optimum.
    BetaAlpha,
    /// `beta / alpha` as a multiple of each frame's optimum.
    BetaScale,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Users => "users",
            Axis::Ratio => "ratio",
            Axis::Ris => "ris",
            Axis::Elements => "elements",
            Axis::BetaAlpha => "beta_alpha",
            Axis::BetaScale => "beta_scale",
        }
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "users" | "K" | "k" => Axis::Users,
            "ratio" | "epsilon" => Axis::Ratio,
            "ris" | "M" | "m" => Axis::Ris,
            "elements" | "N" | "n" => Axis::Elements,
            "beta_alpha" => Axis::BetaAlpha,
            "beta_scale" => Axis::BetaScale,
            other => {
                return Err(Error::InvalidSweep(format!(
                    "unknown axis {other:?} (expected users, ratio, ris, elements, beta_alpha or beta_scale)"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisValue {
    Count(usize),
    Number(f64),
    Ratio(PopulationRatio),
    Optimal,
}

impl fmt::Display for AxisValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AxisValue::Count(n) => write!(f, "{n}"),
            AxisValue::Number(x) => write!(f, "{x}"),
            AxisValue::Ratio(r) => f.write_str(&r.label()),
            AxisValue::Optimal => f.write_str("opt"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub axis: Axis,
    pub values: Vec<AxisValue>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Sweep {
    pub axes: Vec<SweepAxis>,
}

fn parse_range(item: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = item.split(':').collect();
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::InvalidSweep(format!("bad number {s:?}")));
    match parts.as_slice() {
        [one] => Ok(vec![num(one)?]),
        [a, b, step] => {
            let (a, b, step) = (num(a)?, num(b)?, num(step)?);
            if !(step > 0.0) || b < a {
                return Err(Error::InvalidSweep(format!("empty range {item:?}")));
            }
            let n = ((b - a) / step + 1e-9).floor() as usize;
            if n > 100_000 {
                return Err(Error::InvalidSweep(format!("range {item:?} has too many points")));
            }
            Ok((0..=n).map(|i| a + i as f64 * step).collect())
        }
        _ => Err(Error::InvalidSweep(format!("bad range {item:?} (expected start:stop:step)"))),
    }
}

fn parse_values(axis: Axis, text: &str) -> Result<Vec<AxisValue>> {
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim) {
        if item.is_empty() {
            return Err(Error::InvalidSweep(format!("empty value for {}", axis.name())));
        }
        match axis {
            Axis::Ratio => {
                let r: PopulationRatio = item.parse().map_err(|e: Error| Error::InvalidSweep(e.to_string()))?;
                out.push(AxisValue::Ratio(r));
            }
            Axis::BetaAlpha if item == "opt" => out.push(AxisValue::Optimal),
            Axis::BetaAlpha | Axis::BetaScale => {
                for x in parse_range(item)? {
                    if !(x >= 0.0 && x.is_finite()) {
                        return Err(Error::InvalidSweep(format!("{} must be nonnegative", axis.name())));
                    }
                    out.push(AxisValue::Number(x));
                }
            }
            Axis::Users | Axis::Ris | Axis::Elements => {
                for x in parse_range(item)? {
                    if x < 0.0 || x.fract() != 0.0 {
                        return Err(Error::InvalidSweep(format!("{} takes whole numbers, got {x}", axis.name())));
                    }
                    let n = x as usize;
                    if n == 0 && axis != Axis::Elements {
                        return Err(Error::InvalidSweep(format!("{} must be positive", axis.name())));
                    }
                    out.push(AxisValue::Count(n));
                }
            }
        }
    }
    Ok(out)
}

impl FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut axes: Vec<SweepAxis> = Vec::new();
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, values) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidSweep(format!("expected axis=values, got {part:?}")))?;
            let axis: Axis = name.trim().parse()?;
            if axes.iter().any(|a| a.axis == axis) {
                return Err(Error::InvalidSweep(format!("axis {} given twice", axis.name())));
            }
            axes.push(SweepAxis { axis, values: parse_values(axis, values)? });
        }
        let has = |a: Axis| axes.iter().any(|x| x.axis == a);
        if has(Axis::BetaAlpha) && has(Axis::BetaScale) {
            return Err(Error::InvalidSweep("beta_alpha and beta_scale are exclusive".into()));
        }
        Ok(Sweep { axes })
    }
}

impl fmt::Display for Sweep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.axes.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{}=", a.axis.name())?;
            for (j, v) in a.values.iter().enumerate() {
                if j > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{v}")?;
            }
        }
        Ok(())
    }
}

impl Sweep {
    /// Cartesian product of the axes, last axis fastest. A sweep without
    /// axes has one empty point.
    pub fn points(&self) -> Vec<Vec<AxisValue>> {
        let mut points = vec![Vec::new()];
        for a in &self.axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    a.values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push(*v);
                        q
                    })
                })
                .collect();
        }
        points
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub sweep: Sweep,
    pub modes: Vec<Mode>,
    pub seeds: Vec<u64>,
    pub frames: usize,
    /// Ratio used when a sweep regenerates the population without a ratio axis.
    pub default_ratio: PopulationRatio,
}

impl ExperimentConfig {
    pub fn new(sweep: Sweep, modes: Vec<Mode>, seeds: Vec<u64>) -> Self {
        Self { sweep, modes, seeds, frames: 1, default_ratio: PopulationRatio::new(5, 4, 1) }
    }
}

/// Scenario and proposed-frame override for one sweep point.
pub fn apply_point(
    base: &Scenario,
    axes: &[SweepAxis],
    point: &[AxisValue],
    default_ratio: PopulationRatio,
) -> Result<(Scenario, Option<BetaAlpha>)> {
    let mut s = base.clone();
    let mut users = None;
    let mut ratio = None;
    let mut beta = None;
    for (a, v) in axes.iter().zip(point) {
        match (a.axis, *v) {
            (Axis::Users, AxisValue::Count(n)) => users = Some(n),
            (Axis::Ratio, AxisValue::Ratio(r)) => ratio = Some(r),
            (Axis::Ris, AxisValue::Count(m)) => s.set_num_ris(m),
            (Axis::Elements, AxisValue::Count(n)) => s.ris.elements_per_ris = n,
            (Axis::BetaAlpha, AxisValue::Number(x)) => beta = Some(BetaAlpha::Ratio(x)),
            (Axis::BetaAlpha, AxisValue::Optimal) => beta = None,
            (Axis::BetaScale, AxisValue::Number(x)) => beta = Some(BetaAlpha::Scale(x)),
            (axis, v) => return Err(Error::InvalidSweep(format!("value {v} does not fit axis {}", axis.name()))),
        }
    }
    if users.is_some() || ratio.is_some() {
        let total = users.unwrap_or_else(|| s.population.total());
        s.population = UserPopulation::from_ratio(total, ratio.unwrap_or(default_ratio));
    }
    Ok((s, beta))
}

/// Metrics reported for every cell, in column order.
pub const METRICS: [&str; 11] = [
    "s_s",
    "s_c",
    "s_o",
    "served_static",
    "served_mobile",
    "served_new",
    "served_overall",
    "collisions",
    "n_r_measured",
    "n_r_analytic",
    "beta_alpha",
];

/// One (point, mode, seed) run averaged over its frames. Undefined entries
/// are NaN (for example `served_new` without new users).
fn run_cell(s: &Scenario, mode: Mode, seed: u64, frames: usize, beta: Option<BetaAlpha>) -> Result<[f64; 11]> {
    let traces = simulate(s, mode, frames, seed, beta)?;
    let n = traces.len() as f64;
    let mean = |f: &dyn Fn(&crate::sim::FrameTrace) -> f64| traces.iter().map(f).sum::<f64>() / n;
    let fair = measure_fairness(&traces)?;
    let opt = |v: Option<f64>| v.unwrap_or(f64::NAN);
    let measured: Vec<f64> = traces.iter().filter_map(|t| t.n_r_measured).map(|v| v as f64).collect();
    Ok([
        mean(&|t| t.throughput.s_s),
        mean(&|t| t.throughput.s_c),
        mean(&|t| t.throughput.s_o),
        opt(fair.static_users),
        opt(fair.existing_mobile),
        opt(fair.new_mobile),
        fair.overall,
        mean(&|t| t.collisions as f64),
        if measured.is_empty() { f64::NAN } else { measured.iter().sum::<f64>() / measured.len() as f64 },
        mean(&|t| t.frame.n_r as f64),
        mean(&|t| if t.frame.alpha > 0.0 { t.frame.beta_over_alpha() } else { f64::NAN }),
    ])
}

/// Mean and sample standard deviation ignoring NaN entries.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() == 1 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    /// Sweep values in axis order, as printed.
    pub point: Vec<String>,
    pub mode: Mode,
    pub seeds: usize,
    /// `(mean, std)` per entry of [`METRICS`].
    pub metrics: Vec<(f64, f64)>,
}

impl ResultRow {
    pub fn mean(&self, metric: &str) -> Option<f64> {
        METRICS.iter().position(|m| *m == metric).map(|i| self.metrics[i].0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub axes: Vec<String>,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn columns(&self) -> Vec<String> {
        let mut c = self.axes.clone();
        c.push("mode".into());
        c.push("seeds".into());
        for m in METRICS {
            c.push(format!("{m}_mean"));
            c.push(format!("{m}_std"));
        }
        c
    }

    /// Rows of `mode` whose sweep values equal `point`.
    pub fn find(&self, point: &[&str], mode: Mode) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.mode == mode && r.point.iter().map(String::as_str).eq(point.iter().copied()))
    }
}

/// Runs every (point, mode, seed) cell in parallel and aggregates over seeds.
/// Cells are independent, so the table does not depend on the thread count.
pub fn run_experiment(base: &Scenario, cfg: &ExperimentConfig) -> Result<ResultTable> {
    if cfg.seeds.is_empty() {
        return Err(Error::Empty("seed list"));
    }
    if cfg.modes.is_empty() {
        return Err(Error::Empty("mode list"));
    }
    if cfg.frames == 0 {
        return Err(Error::Empty("frame count"));
    }
    let points = cfg.sweep.points();
    let scenarios: Vec<(Scenario, Option<BetaAlpha>)> = points
        .iter()
        .map(|p| apply_point(base, &cfg.sweep.axes, p, cfg.default_ratio))
        .collect::<Result<_>>()?;
    let cells: Vec<(usize, Mode, u64)> = (0..points.len())
        .flat_map(|p| cfg.modes.iter().flat_map(move |&m| cfg.seeds.iter().map(move |&s| (p, m, s))))
        .collect();
    let results: Vec<[f64; 11]> = cells
        .par_iter()
        .map(|&(p, mode, seed)| {
            let (s, beta) = &scenarios[p];
            run_cell(s, mode, seed, cfg.frames, *beta)
        })
        .collect::<Result<_>>()?;

    let per_row = cfg.seeds.len();
    let rows = cells
        .chunks(per_row)
        .zip(results.chunks(per_row))
        .map(|(cell, res)| {
            let (p, mode, _) = cell[0];
            let metrics = (0..METRICS.len())
                .map(|i| mean_std(&res.iter().map(|r| r[i]).collect::<Vec<_>>()))
                .collect();
            ResultRow { point: points[p].iter().map(ToString::to_string).collect(), mode, seeds: per_row, metrics }
        })
        .collect();
    Ok(ResultTable { axes: cfg.sweep.axes.iter().map(|a| a.axis.name().to_string()).collect(), rows })
}

/// 12 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.11e}")
}

fn round12(x: f64) -> f64 {
    format_float(x).parse().unwrap_or(x)
}

pub fn write_csv(table: &ResultTable, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(table.columns()).map_err(csv_err)?;
    for r in &table.rows {
        let mut rec = r.point.clone();
        rec.push(r.mode.to_string());
        rec.push(r.seeds.to_string());
        for (m, s) in &r.metrics {
            rec.push(format_float(*m));
            rec.push(format_float(*s));
        }
        w.write_record(rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<ResultTable> {
    let mut rd = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let n_axes = header
        .iter()
        .position(|h| h == "mode")
        .ok_or_else(|| Error::Parse("missing mode column".into()))?;
    let axes = header[..n_axes].to_vec();
    let expected = ResultTable { axes: axes.clone(), rows: Vec::new() }.columns();
    if header != expected {
        return Err(Error::Parse("unexpected CSV columns".into()));
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let f: Vec<&str> = rec.iter().collect();
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad number {s:?}")));
        let metrics = f[n_axes + 2..]
            .chunks(2)
            .map(|c| Ok((num(c[0])?, num(c[1])?)))
            .collect::<Result<_>>()?;
        rows.push(ResultRow {
            point: f[..n_axes].iter().map(|s| s.to_string()).collect(),
            mode: f[n_axes].parse()?,
            seeds: f[n_axes + 1].parse().map_err(|_| Error::Parse("bad seed count".into()))?,
            metrics,
        });
    }
    Ok(ResultTable { axes, rows })
}

/// JSON form: NaN becomes `null`, numbers carry 12 significant digits.
pub fn write_json(table: &ResultTable, path: impl AsRef<Path>) -> Result<()> {
    let rows: Vec<serde_json::Value> = table
        .rows
        .iter()
        .map(|r| {
            let mut obj = serde_json::Map::new();
            for (a, v) in table.axes.iter().zip(&r.point) {
                obj.insert(a.clone(), v.clone().into());
            }
            obj.insert("mode".into(), r.mode.to_string().into());
            obj.insert("seeds".into(), r.seeds.into());
            for (name, (m, s)) in METRICS.iter().zip(&r.metrics) {
                let num = |x: f64| serde_json::Number::from_f64(round12(x)).map_or(serde_json::Value::Null, Into::into);
                obj.insert(format!("{name}_mean"), num(*m));
                obj.insert(format!("{name}_std"), num(*s));
            }
            serde_json::Value::Object(obj)
        })
        .collect();
    let doc = serde_json::json!({ "columns": table.columns(), "rows": rows });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

/// Figure presets: sweep, modes and a default seed count.
pub fn preset(figure: &str) -> Result<(Sweep, Vec<Mode>, usize)> {
    let all = Mode::ALL.to_vec();
    let proposed = vec![Mode::Proposed];
    let (sweep, modes, seeds) = match figure {
        "fig5" => ("users=50:200:25;elements=0,128", all, 20),
        "fig6" => ("ratio=6:3:1,5:4:1,3:6:1;beta_alpha=opt,0.5:5:0.5", proposed, 20),
        "fig7" => ("ris=1:4:1;elements=32,64,128", all, 10),
        "fig8" => ("ratio=6:3:1,5:4:1,3:6:1;ris=1:4:1;elements=32,64,128", proposed, 10),
        "fig9" => ("ratio=5:4:1,5:3:2,5:2:3", all, 20),
        "fig10" => ("ratio=5:4:1,5:3:2,5:2:3;beta_scale=0.25:2:0.25", proposed, 20),
        other => return Err(Error::InvalidSweep(format!("unknown figure {other:?} (fig5 to fig10)"))),
    };
    Ok((sweep.parse()?, modes, seeds))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_ranges_lists_and_products() {
        let s: Sweep = "users=50:200:25".parse().unwrap();
        assert_eq!(s.axes[0].values.len(), 7);
        assert_eq!(s.axes[0].values[6], AxisValue::Count(200));
        let s: Sweep = "ratio=5:4:1,6:3:1; beta_alpha=opt,0.5:1.5:0.5".parse().unwrap();
        assert_eq!(s.points().len(), 8);
        assert_eq!(s.to_string(), "ratio=5:4:1,6:3:1;beta_alpha=opt,0.5,1,1.5");
        assert_eq!(s.points()[0], vec![AxisValue::Ratio(PopulationRatio::new(5, 4, 1)), AxisValue::Optimal]);
    }

    #[test]
    fn rejects_bad_sweeps() {
        for bad in ["speed=1:2:1", "users", "users=200:50:25", "users=1.5", "ris=0", "users=1;users=2", "users=1:2", ""] {
            let r = bad.parse::<Sweep>();
            if bad.is_empty() {
                assert_eq!(r.unwrap().points(), vec![Vec::<AxisValue>::new()]);
            } else {
                assert!(matches!(r, Err(Error::InvalidSweep(_))), "{bad}");
            }
        }
    }

    #[test]
    fn presets_parse() {
        for f in ["fig5", "fig6", "fig7", "fig8", "fig9", "fig10"] {
            preset(f).unwrap();
        }
        assert!(preset("fig4").is_err());
    }

    #[test]
    fn point_application() {
        let base = Scenario::default();
        let s: Sweep = "users=40;ris=3;elements=8".parse().unwrap();
        let (sc, beta) = apply_point(&base, &s.axes, &s.points()[0], PopulationRatio::new(5, 4, 1)).unwrap();
        assert_eq!(sc.population.total(), 40);
        assert_eq!((sc.ris.num_ris, sc.radio.num_subchannels, sc.ris.elements_per_ris), (3, 3, 8));
        assert!(beta.is_none());
        crate::scenario::validate_scenario(&sc).into_result().unwrap();
    }

    #[test]
    fn mean_std_skips_nan() {
        let (m, s) = mean_std(&[1.0, f64::NAN, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
        assert!(mean_std(&[f64::NAN]).0.is_nan());
    }

    fn tiny_table() -> ResultTable {
        let mut base = Scenario::default();
        base.ris.elements_per_ris = 8;
        let cfg = ExperimentConfig::new("users=20,30".parse().unwrap(), Mode::ALL.to_vec(), vec![1, 2]);
        run_experiment(&base, &cfg).unwrap()
    }

    #[test]
    fn csv_round_trip_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let t = tiny_table();
        assert_eq!(t.rows.len(), 6);
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        write_csv(&t, &a).unwrap();
        write_csv(&tiny_table(), &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let back = read_csv(&a).unwrap();
        assert_eq!(back.axes, t.axes);
        for (x, y) in back.rows.iter().zip(&t.rows) {
            assert_eq!(x.point, y.point);
            for ((m1, s1), (m2, s2)) in x.metrics.iter().zip(&y.metrics) {
                for (p, q) in [(m1, m2), (s1, s2)] {
                    assert!((p.is_nan() && q.is_nan()) || *p == round12(*q));
                }
            }
        }
        let j = dir.path().join("a.json");
        write_json(&t, &j).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(j).unwrap()).unwrap();
        assert_eq!(v["rows"].as_array().unwrap().len(), 6);
    }

    #[test]
    fn empty_table_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        write_csv(&ResultTable { axes: vec!["users".into()], rows: vec![] }, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("users,mode,seeds,s_s_mean"));
        assert!(read_csv(&p).unwrap().rows.is_empty());
    }
}
