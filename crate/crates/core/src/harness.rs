//! Experiment runner and result tables.
//!
//! A JSON file holds a `system` section in engineering units (dBm, km/h) and
//! an `experiment` section. Unit conversion happens once, in
//! [`SystemInput::to_config`]; everything past that point is linear.
//!
//! Every experiment yields a [`ResultTable`] whose first three columns are
//! `experiment`, `seed` and `variant`, followed by the grid column(s) and the
//! metrics. Rows are ordered by variant, then grid index, independently of
//! how many worker threads ran.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form_se::{sum_se, SeModel, WeightMode};
use crate::hardware::Resolution;
use crate::linalg::CVec;
use crate::monte_carlo::{run_monte_carlo, McConfig};
use crate::optimizer::{alternate_with_lsfd, extract_affine_coeffs, optimize_powers, Algorithm, OptimizerSettings};
use crate::scenario::{dbm_to_watt, kmh_to_mps, Scenario, SystemConfig};
use crate::{Error, Result};

/// One value for every item, or an explicit list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerItem<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> PerItem<T> {
    fn expand(&self, len: usize, path: &str) -> Result<Vec<T>> {
        match self {
            PerItem::One(v) => Ok(vec![v.clone(); len]),
            PerItem::Many(v) if v.len() == len => Ok(v.clone()),
            PerItem::Many(v) => Err(Error::config(path, format!("expected {len} entries, got {}", v.len()))),
        }
    }
}

/// ADC resolutions: uniform, per AP (`M` entries), per antenna (`M·N`
/// entries) or a pattern repeated over all `M·N` antennas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AdcSpec {
    One(Resolution),
    Many(Vec<Resolution>),
    Cycle { cycle: Vec<Resolution> },
}

impl AdcSpec {
    fn expand(&self, m: usize, n: usize, path: &str) -> Result<Vec<Resolution>> {
        match self {
            AdcSpec::One(r) => Ok(vec![*r; m * n]),
            AdcSpec::Many(v) if v.len() == m * n => Ok(v.clone()),
            AdcSpec::Many(v) if v.len() == m => Ok(v.iter().flat_map(|r| std::iter::repeat_n(*r, n)).collect()),
            AdcSpec::Many(v) => Err(Error::config(
                path,
                format!("expected {m} (per AP) or {} (per antenna) entries, got {}", m * n, v.len()),
            )),
            AdcSpec::Cycle { cycle } if cycle.is_empty() => Err(Error::config(path, "cycle must not be empty")),
            AdcSpec::Cycle { cycle } => Ok((0..m * n).map(|i| cycle[i % cycle.len()]).collect()),
        }
    }
}

fn d_area() -> f64 {
    1000.0
}
fn d_bw() -> f64 {
    20e6
}
fn d_noise() -> f64 {
    -94.0
}
fn d_pilot() -> PerItem<f64> {
    PerItem::One(10.0)
}
fn d_pmax() -> f64 {
    20.0
}
fn d_vel() -> PerItem<f64> {
    PerItem::One(54.0)
}
fn d_fc() -> f64 {
    2e9
}
fn d_ts() -> f64 {
    1e-5
}
fn d_zero() -> PerItem<f64> {
    PerItem::One(0.0)
}
fn d_ideal() -> PerItem<Resolution> {
    PerItem::One(Resolution::Ideal)
}
fn d_adc() -> AdcSpec {
    AdcSpec::One(Resolution::Ideal)
}
fn d_asd() -> f64 {
    30.0
}
fn d_spacing() -> f64 {
    0.5
}
fn d_shadow() -> f64 {
    4.0
}

/// System parameters in engineering units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemInput {
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub tau_c: usize,
    pub tau_p: usize,
    #[serde(default = "d_area")]
    pub area_side_m: f64,
    #[serde(default = "d_bw")]
    pub bandwidth_hz: f64,
    #[serde(default = "d_noise")]
    pub noise_power_dbm: f64,
    #[serde(default = "d_pilot")]
    pub pilot_power_dbm: PerItem<f64>,
    /// Data powers; `P_max` for every UE when absent.
    #[serde(default)]
    pub data_power_dbm: Option<PerItem<f64>>,
    #[serde(default = "d_pmax")]
    pub p_max_dbm: f64,
    #[serde(default = "d_vel")]
    pub velocity_kmh: PerItem<f64>,
    #[serde(default = "d_fc")]
    pub carrier_freq_hz: f64,
    #[serde(default = "d_ts")]
    pub sample_time_s: f64,
    #[serde(default = "d_zero")]
    pub kappa_t: PerItem<f64>,
    #[serde(default = "d_zero")]
    pub kappa_r: PerItem<f64>,
    #[serde(default = "d_ideal")]
    pub dac_bits: PerItem<Resolution>,
    #[serde(default = "d_adc")]
    pub adc_bits: AdcSpec,
    #[serde(default = "d_asd")]
    pub asd_deg: f64,
    #[serde(default = "d_spacing")]
    pub antenna_spacing: f64,
    #[serde(default = "d_shadow")]
    pub shadow_sigma_db: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SystemInput {
    /// Desk-scale defaults with ideal hardware.
    pub fn new(m: usize, k: usize, n: usize, tau_c: usize, tau_p: usize) -> Self {
        SystemInput {
            m,
            k,
            n,
            tau_c,
            tau_p,
            area_side_m: d_area(),
            bandwidth_hz: d_bw(),
            noise_power_dbm: d_noise(),
            pilot_power_dbm: d_pilot(),
            data_power_dbm: None,
            p_max_dbm: d_pmax(),
            velocity_kmh: d_vel(),
            carrier_freq_hz: d_fc(),
            sample_time_s: d_ts(),
            kappa_t: d_zero(),
            kappa_r: d_zero(),
            dac_bits: d_ideal(),
            adc_bits: d_adc(),
            asd_deg: d_asd(),
            antenna_spacing: d_spacing(),
            shadow_sigma_db: d_shadow(),
            seed: 0,
        }
    }

    /// Linear-unit configuration.
    pub fn to_config(&self) -> Result<SystemConfig> {
        let (m, k) = (self.m, self.k);
        let w = |v: Vec<f64>| v.into_iter().map(dbm_to_watt).collect::<Vec<_>>();
        let p_max = dbm_to_watt(self.p_max_dbm);
        let data_power = match &self.data_power_dbm {
            Some(d) => w(d.expand(k, "system.data_power_dbm")?),
            None => vec![p_max; k],
        };
        let cfg = SystemConfig {
            m,
            k,
            n: self.n,
            tau_c: self.tau_c,
            tau_p: self.tau_p,
            area_side: self.area_side_m,
            bandwidth: self.bandwidth_hz,
            noise_power: dbm_to_watt(self.noise_power_dbm),
            pilot_power: w(self.pilot_power_dbm.expand(k, "system.pilot_power_dbm")?),
            data_power,
            p_max,
            velocities: self
                .velocity_kmh
                .expand(k, "system.velocity_kmh")?
                .into_iter()
                .map(kmh_to_mps)
                .collect(),
            carrier_freq: self.carrier_freq_hz,
            sample_time: self.sample_time_s,
            kappa_t: self.kappa_t.expand(k, "system.kappa_t")?,
            kappa_r: self.kappa_r.expand(m, "system.kappa_r")?,
            dac_bits: self.dac_bits.expand(k, "system.dac_bits")?,
            adc_bits: self.adc_bits.expand(m, self.n, "system.adc_bits")?,
            asd_deg: self.asd_deg,
            antenna_spacing: self.antenna_spacing,
            shadow_sigma_db: self.shadow_sigma_db,
            seed: self.seed,
        };
        cfg.validate().map_err(|e| match e {
            Error::Config { path, message } => Error::config(format!("system.{path}"), message),
            other => other,
        })?;
        Ok(cfg)
    }
}

/// Named hardware override.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub name: String,
    #[serde(default)]
    pub kappa_t: Option<PerItem<f64>>,
    #[serde(default)]
    pub kappa_r: Option<PerItem<f64>>,
    #[serde(default)]
    pub dac_bits: Option<PerItem<Resolution>>,
    #[serde(default)]
    pub adc_bits: Option<AdcSpec>,
}

impl ProfileSpec {
    fn apply(&self, input: &SystemInput) -> SystemInput {
        let mut out = input.clone();
        if let Some(v) = &self.kappa_t {
            out.kappa_t = v.clone();
        }
        if let Some(v) = &self.kappa_r {
            out.kappa_r = v.clone();
        }
        if let Some(v) = &self.dac_bits {
            out.dac_bits = v.clone();
        }
        if let Some(v) = &self.adc_bits {
            out.adc_bits = v.clone();
        }
        out
    }
}

/// Experiment families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Validate,
    SweepInstant,
    SweepTauc,
    SweepTaup,
    SweepAps,
    SweepAntennas,
    SweepPower,
    Optimize,
    TermBreakdown,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Validate => "validate",
            ExperimentKind::SweepInstant => "sweep_instant",
            ExperimentKind::SweepTauc => "sweep_tauc",
            ExperimentKind::SweepTaup => "sweep_taup",
            ExperimentKind::SweepAps => "sweep_aps",
            ExperimentKind::SweepAntennas => "sweep_antennas",
            ExperimentKind::SweepPower => "sweep_power",
            ExperimentKind::Optimize => "optimize",
            ExperimentKind::TermBreakdown => "term_breakdown",
        }
    }

    fn grid_column(self) -> Option<&'static str> {
        match self {
            ExperimentKind::Validate => None,
            ExperimentKind::SweepInstant | ExperimentKind::TermBreakdown => Some("n"),
            ExperimentKind::SweepTauc => Some("tau_c"),
            ExperimentKind::SweepTaup => Some("tau_p"),
            ExperimentKind::SweepAps => Some("m"),
            ExperimentKind::SweepAntennas => Some("antennas"),
            ExperimentKind::SweepPower => Some("data_power_dbm"),
            ExperimentKind::Optimize => Some("n_opt"),
        }
    }

    fn uses_monte_carlo(self) -> bool {
        self == ExperimentKind::Validate
    }
}

fn d_trials() -> usize {
    1000
}
fn d_weights() -> Vec<WeightMode> {
    vec![WeightMode::Lsfd, WeightMode::Sld]
}
fn d_rounds() -> usize {
    1
}
fn d_algorithms() -> Vec<Algorithm> {
    vec![Algorithm::ClosedForm]
}

/// What to run and over which grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    /// Swept values; the meaning depends on `kind`.
    #[serde(default)]
    pub grid: Vec<f64>,
    #[serde(default = "d_trials")]
    pub trials: usize,
    #[serde(default = "d_weights")]
    pub weights: Vec<WeightMode>,
    /// Hardware variants; the system section alone when empty.
    #[serde(default)]
    pub profiles: Vec<ProfileSpec>,
    /// Speed variants applied to every UE; the system section when empty.
    #[serde(default)]
    pub velocities_kmh: Vec<f64>,
    #[serde(default = "d_rounds")]
    pub rounds: usize,
    #[serde(default = "d_algorithms")]
    pub algorithms: Vec<Algorithm>,
    /// Also optimize separately at every instant (optimize kind).
    #[serde(default)]
    pub per_instant: bool,
    /// Add Monte Carlo rows (term_breakdown kind).
    #[serde(default)]
    pub monte_carlo: bool,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind) -> Self {
        ExperimentSpec {
            kind,
            grid: Vec::new(),
            trials: d_trials(),
            weights: d_weights(),
            profiles: Vec::new(),
            velocities_kmh: Vec::new(),
            rounds: d_rounds(),
            algorithms: d_algorithms(),
            per_instant: false,
            monte_carlo: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if (self.kind.uses_monte_carlo() || self.monte_carlo) && self.trials == 0 {
            return Err(Error::config("experiment.trials", "must be at least 1"));
        }
        if self.weights.is_empty() {
            return Err(Error::config("experiment.weights", "must not be empty"));
        }
        if self.algorithms.is_empty() {
            return Err(Error::config("experiment.algorithms", "must not be empty"));
        }
        if self.grid.iter().any(|g| !g.is_finite()) {
            return Err(Error::config("experiment.grid", "values must be finite"));
        }
        Ok(())
    }
}

/// Complete experiment file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemInput,
    pub experiment: ExperimentSpec,
}

/// Parse an experiment file from JSON text, reporting the failing field.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(path, e.into_inner().to_string())
    })
}

/// Read and parse an experiment file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// One table cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format!("{v:.16e}"),
            Cell::Text(s) => s.clone(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Float(v) => Some(*v),
            Cell::Text(_) => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}
impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}
impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}
impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// Named columns and ordered rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl ResultTable {
    pub fn new(columns: &[&str]) -> Self {
        ResultTable {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::Invariant(format!(
                "row has {} cells, table has {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    /// Index of a column by name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// CSV text; floats carry 17 significant digits.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
    }

    /// JSON array with one object per row.
    pub fn to_json(&self) -> Result<String> {
        let rows: Vec<serde_json::Map<String, serde_json::Value>> = self
            .rows
            .iter()
            .map(|r| {
                self.columns
                    .iter()
                    .cloned()
                    .zip(r.iter().map(|c| serde_json::to_value(c).unwrap_or(serde_json::Value::Null)))
                    .collect()
            })
            .collect();
        Ok(serde_json::to_string_pretty(&rows)?)
    }

    /// Parse CSV written by [`ResultTable::to_csv`]; numeric cells come
    /// back as floats or integers.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let columns = r.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            rows.push(
                rec.iter()
                    .map(|s| {
                        if let Ok(i) = s.parse::<i64>() {
                            Cell::Int(i)
                        } else if let Ok(f) = s.parse::<f64>() {
                            Cell::Float(f)
                        } else {
                            Cell::Text(s.to_string())
                        }
                    })
                    .collect(),
            );
        }
        Ok(ResultTable { columns, rows })
    }
}

/// Output format of [`write_results`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Write a table to `path`.
pub fn write_results(table: &ResultTable, path: &Path, format: Format) -> Result<()> {
    let text = match format {
        Format::Csv => table.to_csv()?,
        Format::Json => table.to_json()?,
    };
    std::fs::write(path, text)?;
    Ok(())
}

fn mode_name(m: WeightMode) -> &'static str {
    match m {
        WeightMode::Lsfd => "lsfd",
        WeightMode::Sld => "sld",
    }
}

fn algo_name(a: Algorithm) -> &'static str {
    match a {
        Algorithm::ClosedForm => "closed_form_mm",
        Algorithm::ProjectedGradient => "projected_gradient_mm",
    }
}

fn grid_usize(v: f64, path: &str) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(Error::config(path, format!("expected a nonnegative integer, got {v}")))
    }
}

/// Hardware and velocity variant.
#[derive(Clone, Debug)]
struct Variant {
    label: String,
    input: SystemInput,
}

fn variants(base: &SystemInput, spec: &ExperimentSpec) -> Vec<Variant> {
    let profiles: Vec<(String, SystemInput)> = if spec.profiles.is_empty() {
        vec![("config".into(), base.clone())]
    } else {
        spec.profiles.iter().map(|p| (p.name.clone(), p.apply(base))).collect()
    };
    let mut out = Vec::new();
    for (name, input) in profiles {
        if spec.velocities_kmh.is_empty() {
            out.push(Variant {
                label: name.clone(),
                input,
            });
        } else {
            for &v in &spec.velocities_kmh {
                let mut i = input.clone();
                i.velocity_kmh = PerItem::One(v);
                out.push(Variant {
                    label: format!("{name}|v={v}"),
                    input: i,
                });
            }
        }
    }
    out
}

/// SE report of one configuration with its data powers.
fn model_for(input: &SystemInput) -> Result<SeModel> {
    SeModel::new(Scenario::generate(input.to_config()?)?)
}

/// Optimal or unit weights for every UE and data instant at powers `p`.
pub fn weights_table(model: &SeModel, mode: WeightMode, p: &[f64]) -> Result<Vec<Vec<CVec>>> {
    let scn = &model.scenario;
    let instants: Vec<usize> = scn.data_instants().collect();
    (0..scn.k())
        .into_par_iter()
        .map(|k| {
            instants
                .iter()
                .map(|&n| {
                    let t = model.terms(k, n)?;
                    model.weights(&t, mode, p)
                })
                .collect()
        })
        .collect()
}

/// Run one experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let spec = &cfg.experiment;
    spec.validate()?;
    let base = &cfg.system;
    base.to_config()?;
    let kind = spec.kind;
    let seed = base.seed as usize;
    let mut head = vec!["experiment", "seed", "variant"];
    if let Some(g) = kind.grid_column() {
        head.push(g);
    }
    let vars = variants(base, spec);
    let row_prefix = |label: &str| -> Vec<Cell> { vec![kind.name().into(), seed.into(), label.to_string().into()] };

    match kind {
        ExperimentKind::Validate => {
            head.extend(["ue", "se_closed_form", "se_monte_carlo", "rel_error"]);
            let mut table = ResultTable::new(&head);
            for v in &vars {
                let model = model_for(&v.input)?;
                let scn = &model.scenario;
                let p = scn.config.data_power.clone();
                for &mode in &spec.weights {
                    let cf = model.evaluate(&p, mode)?;
                    let w = weights_table(&model, mode, &p)?;
                    let mc = run_monte_carlo(scn, &model.kernels, &w, &p, &McConfig::new(spec.trials, base.seed))?;
                    let (mc_ue, _) = mc.empirical_se(scn.config.tau_c);
                    let label = format!("{}|{}", v.label, mode_name(mode));
                    for k in 0..scn.k() {
                        let mut row = row_prefix(&label);
                        row.extend([
                            k.into(),
                            cf.per_ue[k].into(),
                            mc_ue[k].into(),
                            ((mc_ue[k] - cf.per_ue[k]).abs() / cf.per_ue[k]).into(),
                        ]);
                        table.push(row)?;
                    }
                }
            }
            Ok(table)
        }
        ExperimentKind::SweepInstant => {
            head.extend(["sum_rate", "mean_sinr"]);
            let mut table = ResultTable::new(&head);
            for v in &vars {
                let model = model_for(&v.input)?;
                let scn = &model.scenario;
                let grid: Vec<usize> = if spec.grid.is_empty() {
                    scn.data_instants().collect()
                } else {
                    spec.grid
                        .iter()
                        .map(|g| grid_usize(*g, "experiment.grid"))
                        .collect::<Result<_>>()?
                };
                if let Some(bad) = grid.iter().find(|n| !scn.data_instants().contains(n)) {
                    return Err(Error::config("experiment.grid", format!("instant {bad} is outside the data phase")));
                }
                let p = scn.config.data_power.clone();
                for &mode in &spec.weights {
                    let rep = model.evaluate(&p, mode)?;
                    let label = format!("{}|{}", v.label, mode_name(mode));
                    for &n in &grid {
                        let idx = n - scn.lambda();
                        let s: Vec<f64> = rep.sinr.iter().map(|r| r[idx]).collect();
                        let rate: f64 = s.iter().map(|x| (1.0 + x).log2()).sum();
                        let mut row = row_prefix(&label);
                        row.extend([n.into(), rate.into(), (s.iter().sum::<f64>() / s.len() as f64).into()]);
                        table.push(row)?;
                    }
                }
            }
            Ok(table)
        }
        ExperimentKind::SweepTauc
        | ExperimentKind::SweepTaup
        | ExperimentKind::SweepAps
        | ExperimentKind::SweepAntennas
        | ExperimentKind::SweepPower => {
            if spec.grid.is_empty() {
                return Err(Error::config("experiment.grid", "must not be empty for this kind"));
            }
            head.extend(["sum_se", "mean_se"]);
            let mut table = ResultTable::new(&head);
            for v in &vars {
                let inputs: Vec<SystemInput> = spec
                    .grid
                    .iter()
                    .map(|&g| {
                        let mut i = v.input.clone();
                        match kind {
                            ExperimentKind::SweepTauc => i.tau_c = grid_usize(g, "experiment.grid")?,
                            ExperimentKind::SweepTaup => i.tau_p = grid_usize(g, "experiment.grid")?,
                            ExperimentKind::SweepAps => i.m = grid_usize(g, "experiment.grid")?,
                            ExperimentKind::SweepAntennas => i.n = grid_usize(g, "experiment.grid")?,
                            _ => i.data_power_dbm = Some(PerItem::One(g)),
                        }
                        Ok(i)
                    })
                    .collect::<Result<_>>()?;
                let results: Vec<Vec<(f64, f64)>> = inputs
                    .par_iter()
                    .map(|i| {
                        let model = model_for(i)?;
                        let p = model.scenario.config.data_power.clone();
                        spec.weights
                            .iter()
                            .map(|&mode| {
                                let r = model.evaluate(&p, mode)?;
                                Ok((r.sum, r.sum / r.per_ue.len() as f64))
                            })
                            .collect()
                    })
                    .collect::<Result<_>>()?;
                for (wi, &mode) in spec.weights.iter().enumerate() {
                    let label = format!("{}|{}", v.label, mode_name(mode));
                    for (gi, &g) in spec.grid.iter().enumerate() {
                        let mut row = row_prefix(&label);
                        let gcell: Cell = if kind == ExperimentKind::SweepPower { g.into() } else { (g as usize).into() };
                        row.extend([gcell, results[gi][wi].0.into(), results[gi][wi].1.into()]);
                        table.push(row)?;
                    }
                }
            }
            Ok(table)
        }
        ExperimentKind::Optimize => {
            head.extend(["allocation", "sum_se", "objective", "iterations"]);
            let mut table = ResultTable::new(&head);
            for v in &vars {
                let model = model_for(&v.input)?;
                let scn = &model.scenario;
                let p_max = scn.config.p_max;
                let grid: Vec<usize> = if spec.grid.is_empty() {
                    vec![scn.lambda()]
                } else {
                    spec.grid
                        .iter()
                        .map(|g| grid_usize(*g, "experiment.grid"))
                        .collect::<Result<_>>()?
                };
                for &mode in &spec.weights {
                    let label = format!("{}|{}", v.label, mode_name(mode));
                    for &n_opt in &grid {
                        if !scn.data_instants().contains(&n_opt) {
                            return Err(Error::config("experiment.grid", format!("instant {n_opt} is outside the data phase")));
                        }
                        let full = vec![p_max; scn.k()];
                        let terms = model.terms_at(n_opt)?;
                        let w: Vec<CVec> = terms.iter().map(|t| model.weights(t, mode, &full)).collect::<Result<_>>()?;
                        let obj_full = extract_affine_coeffs(&terms, &w, p_max)?.objective(&full);
                        let mut row = row_prefix(&label);
                        row.extend([n_opt.into(), "full_power".into(), model.evaluate(&full, mode)?.sum.into(), obj_full.into(), 0usize.into()]);
                        table.push(row)?;
                        for &alg in &spec.algorithms {
                            let settings = OptimizerSettings {
                                algorithm: alg,
                                ..OptimizerSettings::default()
                            };
                            let alt = alternate_with_lsfd(&model, n_opt, spec.rounds, mode, &settings)?;
                            let iters: usize = alt.allocations.iter().map(|a| a.iterations).sum();
                            let mut row = row_prefix(&label);
                            row.extend([
                                n_opt.into(),
                                algo_name(alg).into(),
                                model.evaluate(&alt.p, mode)?.sum.into(),
                                (*alt.round_objective.last().unwrap_or(&f64::NAN)).into(),
                                iters.into(),
                            ]);
                            table.push(row)?;
                        }
                    }
                    if spec.per_instant {
                        let settings = OptimizerSettings::default();
                        let per: Vec<Vec<f64>> = scn
                            .data_instants()
                            .collect::<Vec<_>>()
                            .par_iter()
                            .map(|&n| {
                                let alt = alternate_with_lsfd(&model, n, spec.rounds, mode, &settings)?;
                                let terms = model.terms_at(n)?;
                                terms
                                    .iter()
                                    .map(|t| {
                                        let a = model.weights(t, mode, &alt.p)?;
                                        Ok(if alt.p[t.k] == 0.0 { 0.0 } else { t.assemble_sinr(&a, &alt.p)?.sinr })
                                    })
                                    .collect()
                            })
                            .collect::<Result<_>>()?;
                        let sinr: Vec<Vec<f64>> = (0..scn.k()).map(|k| per.iter().map(|r| r[k]).collect()).collect();
                        let (_, total) = sum_se(scn.config.tau_c, &sinr);
                        let mut row = row_prefix(&label);
                        row.extend([0usize.into(), "per_instant".into(), total.into(), f64::NAN.into(), 0usize.into()]);
                        table.push(row)?;
                    }
                }
            }
            Ok(table)
        }
        ExperimentKind::TermBreakdown => {
            head.extend(["ue", "source", "ds", "bu", "ca", "iui", "dac", "trf", "rrf", "adc", "ns", "sinr"]);
            let mut table = ResultTable::new(&head);
            for v in &vars {
                let model = model_for(&v.input)?;
                let scn = &model.scenario;
                let p = scn.config.data_power.clone();
                let grid: Vec<usize> = if spec.grid.is_empty() {
                    vec![scn.lambda()]
                } else {
                    spec.grid
                        .iter()
                        .map(|g| grid_usize(*g, "experiment.grid"))
                        .collect::<Result<_>>()?
                };
                if let Some(bad) = grid.iter().find(|n| !scn.data_instants().contains(n)) {
                    return Err(Error::config("experiment.grid", format!("instant {bad} is outside the data phase")));
                }
                for &mode in &spec.weights {
                    let label = format!("{}|{}", v.label, mode_name(mode));
                    let w = weights_table(&model, mode, &p)?;
                    let mc = if spec.monte_carlo {
                        Some(run_monte_carlo(scn, &model.kernels, &w, &p, &McConfig::new(spec.trials, base.seed))?)
                    } else {
                        None
                    };
                    for &n in &grid {
                        let idx = n - scn.lambda();
                        for k in 0..scn.k() {
                            let t = model.terms(k, n)?;
                            let mut sources = vec![("closed_form", t.term_powers(&w[k][idx], &p))];
                            if let Some(mc) = &mc {
                                sources.push(("monte_carlo", mc.means(k, idx)));
                            }
                            for (src, tp) in sources {
                                let mut row = row_prefix(&label);
                                row.extend([
                                    n.into(),
                                    k.into(),
                                    src.into(),
                                    tp.ds.into(),
                                    tp.bu.into(),
                                    tp.ca.into(),
                                    tp.iui.iter().sum::<f64>().into(),
                                    tp.dac.into(),
                                    tp.trf.into(),
                                    tp.rrf.into(),
                                    tp.adc.into(),
                                    tp.ns.into(),
                                    tp.sinr().into(),
                                ]);
                                table.push(row)?;
                            }
                        }
                    }
                }
            }
            Ok(table)
        }
    }
}

/// Build a validated experiment directly from parts.
pub fn experiment(system: SystemInput, spec: ExperimentSpec) -> ExperimentConfig {
    ExperimentConfig {
        system,
        experiment: spec,
    }
}

/// Optimize once at `n_opt` with the given weights mode and return the
/// powers, for callers outside the table machinery.
pub fn optimized_powers(model: &SeModel, n_opt: usize, mode: WeightMode, s: &OptimizerSettings) -> Result<Vec<f64>> {
    let terms = model.terms_at(n_opt)?;
    let p0 = vec![model.scenario.config.p_max / 2.0; model.scenario.k()];
    let w: Vec<CVec> = terms.iter().map(|t| model.weights(t, mode, &p0)).collect::<Result<_>>()?;
    let c = extract_affine_coeffs(&terms, &w, model.scenario.config.p_max)?;
    Ok(optimize_powers(&c, &p0, s)?.p)
}
