//! Command-line and config-file parsing for the `smaplab` binary.
//!
//! A config file is a flat list of `key = value` lines (`#` starts a
//! comment). Keys are the long flag names of the chosen subcommand, with
//! `_` accepted for `-`. File values are spliced in front of the command
//! line, so flags given explicitly win.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "SMAPLAB_OUT";
pub const DEFAULT_OUT_ROOT: &str = "smaplab-out";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown key `{key}` in config file {file} (line {line})")]
    UnknownKey { key: String, file: PathBuf, line: usize },
    #[error("malformed line {line} in config file {file}: expected `key = value`")]
    Malformed { file: PathBuf, line: usize },
    #[error("cannot read config file {file}: {source}")]
    Unreadable {
        file: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("value out of range for --{name}: {value} ({reason})")]
    OutOfRange { name: &'static str, value: String, reason: String },
    #[error("missing required flag --{name} ({reason})")]
    Missing { name: &'static str, reason: &'static str },
    #[error("{0}")]
    Clap(#[from] clap::Error),
}

#[derive(Debug, Parser)]
#[command(name = "smaplab", version, about = "Spectral experiments for NLS, Schrödinger maps and the caloric gauge")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "subcommand")]
pub enum Command {
    /// Per-band norms, Besov norm and frequency envelope of a field.
    Besov(BesovArgs),
    /// Split-step cubic NLS with conservation diagnostics.
    NlsRun(NlsArgs),
    /// Schrödinger map flow into S².
    SmapRun(SmapArgs),
    /// Harmonic map heat flow to a constant map.
    Heatflow(HeatArgs),
    /// Caloric gauge at s = 0 with residual checks.
    CaloricGauge(CaloricArgs),
    /// Interaction Morawetz identity along the free flow.
    Morawetz(MorawetzArgs),
    /// Bilinear estimate slope study.
    BilinearVerify(BilinearArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Besov(_) => "besov",
            Command::NlsRun(_) => "nls-run",
            Command::SmapRun(_) => "smap-run",
            Command::Heatflow(_) => "heatflow",
            Command::CaloricGauge(_) => "caloric-gauge",
            Command::Morawetz(_) => "morawetz",
            Command::BilinearVerify(_) => "bilinear-verify",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::Besov(a) => &a.common,
            Command::NlsRun(a) => &a.common,
            Command::SmapRun(a) => &a.map.common,
            Command::Heatflow(a) => &a.map.common,
            Command::CaloricGauge(a) => &a.map.common,
            Command::Morawetz(a) => &a.common,
            Command::BilinearVerify(a) => &a.common,
        }
    }
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct Common {
    /// Flat `key = value` config file; explicit flags override it.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output directory (default `$SMAPLAB_OUT/<subcommand>`).
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldData {
    Gaussian,
    DyadicSum,
    BandNoise,
    File,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Emit {
    Csv,
    Json,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct FieldArgs {
    #[arg(long, default_value_t = 64)]
    pub grid_n: usize,
    #[arg(long, default_value_t = 32.0)]
    pub grid_len: f64,
    #[arg(long, value_enum, default_value_t = FieldData::Gaussian)]
    pub data: FieldData,
    /// Snapshot to read when `--data file`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Amplitude (Gaussian peak, per-band L² size, or band-noise L² size).
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    /// Gaussian width.
    #[arg(long, default_value_t = 2.0)]
    pub sigma: f64,
    /// Central band for dyadic-sum and band-noise data.
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub band: i32,
    /// Half-width J of the dyadic sum (bands band-J ..= band+J).
    #[arg(long, default_value_t = 2)]
    pub dyadic_half_width: i32,
    /// Width of the Gaussian window localizing band noise.
    #[arg(long, default_value_t = 4.0)]
    pub window: f64,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct BesovArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub field: FieldArgs,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub s: f64,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, default_value_t = 2.0)]
    pub q: f64,
    /// Envelope slack δ.
    #[arg(long, default_value_t = 0.25)]
    pub delta: f64,
    /// Envelope weight exponent σ.
    #[arg(long, default_value_t = 0)]
    pub envelope_sigma: i32,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct NlsArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub field: FieldArgs,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub mu: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value_t = 1.0)]
    pub t_end: f64,
    /// Record every this many steps.
    #[arg(long, default_value_t = 10)]
    pub sample_every: usize,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub dealias: bool,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Emit::Csv, Emit::Json])]
    pub emit: Vec<Emit>,
    #[arg(long, default_value_t = 1e-8)]
    pub tol_mass: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub tol_hamiltonian: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapData {
    /// `exp_Q` of a tangent field with a prescribed band profile.
    Envelope,
    /// Coherent Gaussian bump (`--bump-sigma`, `--bump-angle`).
    Bump,
    /// Snapshot holding the tangent field as `h₁ + i h₂`.
    File,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct MapArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 64)]
    pub grid_n: usize,
    #[arg(long, default_value_t = 16.0)]
    pub grid_len: f64,
    #[arg(long, value_enum, default_value_t = MapData::Envelope)]
    pub data: MapData,
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Tangent-field size ε in B¹_{∞,2}.
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    /// `flat:J0:COUNT` or `geom:J0:COUNT:RATIO`.
    #[arg(long, default_value = "flat:-1:3")]
    pub envelope_profile: String,
    #[arg(long, default_value_t = 2.0)]
    pub window: f64,
    #[arg(long, default_value_t = 0.5)]
    pub bump_sigma: f64,
    /// Direction of the bump in the tangent plane at Q, in radians.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub bump_angle: f64,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct HeatParams {
    #[arg(long, default_value_t = 1e-3)]
    pub ds0: f64,
    #[arg(long, default_value_t = 1.1)]
    pub growth: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub tol_q: f64,
    #[arg(long, default_value_t = 1e4)]
    pub s_cap: f64,
    /// Number of times every heat step is split in two
    /// [default: 1 for caloric-gauge, 0 otherwise].
    #[arg(long)]
    pub refine: Option<u32>,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct SmapArgs {
    #[command(flatten)]
    pub map: MapArgs,
    #[arg(long, default_value_t = 1e-4)]
    pub dt: f64,
    #[arg(long, default_value_t = 0.1)]
    pub t_end: f64,
    #[arg(long, default_value_t = 100)]
    pub sample_every: usize,
    /// Compute caloric ψ band norms at every sample.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub gauge_bands: bool,
    #[command(flatten)]
    pub heat: HeatParams,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Emit::Csv, Emit::Json])]
    pub emit: Vec<Emit>,
    #[arg(long, default_value_t = 1e-12)]
    pub tol_defect: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tol_energy: f64,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct HeatArgs {
    #[command(flatten)]
    pub map: MapArgs,
    #[command(flatten)]
    pub heat: HeatParams,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct CaloricArgs {
    #[command(flatten)]
    pub map: MapArgs,
    #[command(flatten)]
    pub heat: HeatParams,
    /// Fixed vector projected at s_max, as `x,y,z`.
    #[arg(long, default_value = "1,0,0")]
    pub e_inf: String,
    /// Time step for the gauged-equation residual; 0 skips it.
    #[arg(long, default_value_t = 0.0)]
    pub gauged_dt: f64,
    #[arg(long, default_value_t = 0.02)]
    pub gauged_t: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub tol_orthonormality: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub tol_caloric: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub tol_a_integral: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub tol_energy: f64,
    #[arg(long, default_value_t = 5e-2)]
    pub tol_gauged: f64,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct MorawetzArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 64)]
    pub grid_n: usize,
    #[arg(long, default_value_t = 32.0)]
    pub grid_len: f64,
    #[arg(long, default_value_t = 2.0)]
    pub sigma: f64,
    /// Momentum of the second Gaussian, `p1,p2`.
    #[arg(long, default_value = "1.5,0.5")]
    pub momentum: String,
    #[arg(long, default_value_t = 0.5)]
    pub t_end: f64,
    #[arg(long, default_value_t = 11)]
    pub samples: usize,
    /// Step of the finite difference in t.
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value_t = 2e-2)]
    pub tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowKind {
    Free,
    Nls,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct BilinearArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 512)]
    pub grid_n: usize,
    #[arg(long, default_value_t = 16.0 * std::f64::consts::PI)]
    pub grid_len: f64,
    #[arg(long, default_value_t = -2, allow_negative_numbers = true)]
    pub j: i32,
    #[arg(long, value_delimiter = ',', default_values_t = [3, 4, 5, 6])]
    pub gaps: Vec<i32>,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 24)]
    pub samples: usize,
    #[arg(long, default_value_t = 6.0)]
    pub time_factor: f64,
    #[arg(long, default_value_t = 6.0)]
    pub window: f64,
    #[arg(long, value_enum, default_value_t = FlowKind::Free)]
    pub flow: FlowKind,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub mu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub eps: f64,
    #[arg(long, default_value_t = 1)]
    pub steps_per_sample: usize,
    #[arg(long, default_value_t = -0.5, allow_negative_numbers = true)]
    pub target_slope: f64,
    /// Defaults to 0.15 for free flows and 0.2 for NLS.
    #[arg(long)]
    pub tol: Option<f64>,
}

/// Parsed and validated configuration of one run.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub command: Command,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn seed(&self) -> u64 {
        self.command.common().seed
    }
}

/// Parses with later occurrences of a flag replacing earlier ones.
fn try_parse(argv: &[OsString]) -> Result<Cli, clap::Error> {
    let cmd = Cli::command().mut_subcommands(|s| s.args_override_self(true));
    let m = cmd.try_get_matches_from(argv)?;
    Cli::from_arg_matches(&m)
}

fn normalize_key(k: &str) -> String {
    k.trim().trim_start_matches("--").replace('_', "-")
}

/// A `key = value` line; `key` is normalized to flag form, `raw` is as written.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigEntry {
    pub key: String,
    pub raw: String,
    pub value: String,
    pub line: usize,
}

/// Reads `key = value` lines.
pub fn read_config_file(path: &Path) -> Result<Vec<ConfigEntry>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Unreadable {
        file: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Malformed {
            file: path.to_path_buf(),
            line: i + 1,
        })?;
        let key = normalize_key(k);
        if key.is_empty() {
            return Err(ConfigError::Malformed {
                file: path.to_path_buf(),
                line: i + 1,
            });
        }
        out.push(ConfigEntry {
            key,
            raw: k.trim().to_string(),
            value: v.trim().to_string(),
            line: i + 1,
        });
    }
    Ok(out)
}

fn subcommand_keys(name: &str) -> BTreeMap<String, ()> {
    let cmd = Cli::command();
    let sub = cmd.find_subcommand(name).expect("known subcommand");
    sub.get_arguments()
        .filter_map(|a| a.get_long())
        .filter(|l| *l != "config" && *l != "help")
        .map(|l| (l.to_string(), ()))
        .collect()
}

/// Parses `argv` (including the program name), merging a config file
/// when `--config` is given, and validates ranges.
pub fn parse_config<I, T>(argv: I) -> Result<RunConfig, ConfigError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let first = try_parse(&argv)?;
    let command = match first.command.common().config.clone() {
        None => first.command,
        Some(path) => {
            let name = first.command.name();
            let known = subcommand_keys(name);
            let mut spliced: Vec<OsString> = argv[..2].to_vec();
            for e in read_config_file(&path)? {
                if !known.contains_key(&e.key) {
                    return Err(ConfigError::UnknownKey {
                        key: e.raw,
                        file: path,
                        line: e.line,
                    });
                }
                spliced.push(format!("--{}", e.key).into());
                spliced.push(e.value.into());
            }
            spliced.extend_from_slice(&argv[2..]);
            try_parse(&spliced)?.command
        }
    };
    validate(&command)?;
    let out_dir = match &command.common().out {
        Some(p) => p.clone(),
        None => std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT))
            .join(command.name()),
    };
    Ok(RunConfig { command, out_dir })
}

fn range(name: &'static str, ok: bool, value: impl ToString, reason: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::OutOfRange {
            name,
            value: value.to_string(),
            reason: reason.to_string(),
        })
    }
}

fn positive(name: &'static str, v: f64) -> Result<(), ConfigError> {
    range(name, v > 0.0 && v.is_finite(), v, "must be positive and finite")
}

fn grid(n: usize, len: f64) -> Result<(), ConfigError> {
    range("grid-n", n.is_power_of_two() && n >= 16, n, "not a power of two >= 16")?;
    range("grid-n", n <= 4096, n, "larger than 4096")?;
    positive("grid-len", len)
}

fn field(f: &FieldArgs) -> Result<(), ConfigError> {
    grid(f.grid_n, f.grid_len)?;
    range("eps", f.eps >= 0.0 && f.eps.is_finite(), f.eps, "must be finite and nonnegative")?;
    positive("sigma", f.sigma)?;
    positive("window", f.window)?;
    range("dyadic-half-width", f.dyadic_half_width >= 0, f.dyadic_half_width, "must be nonnegative")?;
    if f.data == FieldData::File && f.input.is_none() {
        return Err(ConfigError::Missing {
            name: "input",
            reason: "required with --data file",
        });
    }
    Ok(())
}

fn map(m: &MapArgs) -> Result<(), ConfigError> {
    grid(m.grid_n, m.grid_len)?;
    range("epsilon", m.epsilon >= 0.0 && m.epsilon.is_finite(), m.epsilon, "must be finite and nonnegative")?;
    positive("window", m.window)?;
    positive("bump-sigma", m.bump_sigma)?;
    range("bump-angle", m.bump_angle.is_finite(), m.bump_angle, "must be finite")?;
    if let Err(e) = crate::sphere::EnvelopeProfile::parse(&m.envelope_profile) {
        return range("envelope-profile", false, &m.envelope_profile, &e.to_string());
    }
    if m.data == MapData::File && m.input.is_none() {
        return Err(ConfigError::Missing {
            name: "input",
            reason: "required with --data file",
        });
    }
    Ok(())
}

fn heat(h: &HeatParams) -> Result<(), ConfigError> {
    positive("ds0", h.ds0)?;
    range("growth", h.growth >= 1.0 && h.growth.is_finite(), h.growth, "must be at least 1")?;
    positive("tol-q", h.tol_q)?;
    positive("s-cap", h.s_cap)?;
    let r = h.refine.unwrap_or(0);
    range("refine", r <= 6, r, "at most 6")
}

pub fn parse_vec3(name: &'static str, s: &str) -> Result<[f64; 3], ConfigError> {
    let v: Vec<f64> = s.split(',').filter_map(|p| p.trim().parse().ok()).collect();
    match v.as_slice() {
        [a, b, c] if v.iter().all(|x| x.is_finite()) => Ok([*a, *b, *c]),
        _ => Err(ConfigError::OutOfRange {
            name,
            value: s.to_string(),
            reason: "expected three comma-separated numbers".into(),
        }),
    }
}

pub fn parse_pair(name: &'static str, s: &str) -> Result<(f64, f64), ConfigError> {
    let v: Vec<f64> = s.split(',').filter_map(|p| p.trim().parse().ok()).collect();
    match v.as_slice() {
        [a, b] if v.iter().all(|x| x.is_finite()) => Ok((*a, *b)),
        _ => Err(ConfigError::OutOfRange {
            name,
            value: s.to_string(),
            reason: "expected two comma-separated numbers".into(),
        }),
    }
}

fn mu(m: f64) -> Result<(), ConfigError> {
    range("mu", m.abs() == 1.0, m, "must be 1 or -1")
}

pub fn validate(c: &Command) -> Result<(), ConfigError> {
    match c {
        Command::Besov(a) => {
            field(&a.field)?;
            range("p", a.p >= 1.0, a.p, "must be at least 1")?;
            range("q", a.q >= 1.0, a.q, "must be at least 1")?;
            positive("delta", a.delta)?;
            range("envelope-sigma", (0..=3).contains(&a.envelope_sigma), a.envelope_sigma, "supported values are 0..=3")
        }
        Command::NlsRun(a) => {
            field(&a.field)?;
            mu(a.mu)?;
            positive("dt", a.dt)?;
            range("t-end", a.t_end >= 0.0 && a.t_end.is_finite(), a.t_end, "must be finite and nonnegative")?;
            range("sample-every", a.sample_every >= 1, a.sample_every, "must be at least 1")?;
            positive("tol-mass", a.tol_mass)?;
            positive("tol-hamiltonian", a.tol_hamiltonian)
        }
        Command::SmapRun(a) => {
            map(&a.map)?;
            heat(&a.heat)?;
            positive("dt", a.dt)?;
            range("t-end", a.t_end >= 0.0 && a.t_end.is_finite(), a.t_end, "must be finite and nonnegative")?;
            range("sample-every", a.sample_every >= 1, a.sample_every, "must be at least 1")?;
            positive("tol-defect", a.tol_defect)?;
            positive("tol-energy", a.tol_energy)
        }
        Command::Heatflow(a) => {
            map(&a.map)?;
            heat(&a.heat)
        }
        Command::CaloricGauge(a) => {
            map(&a.map)?;
            heat(&a.heat)?;
            parse_vec3("e-inf", &a.e_inf)?;
            range("gauged-dt", a.gauged_dt >= 0.0 && a.gauged_dt.is_finite(), a.gauged_dt, "must be finite and nonnegative")?;
            if a.gauged_dt > 0.0 {
                range("gauged-t", a.gauged_t >= 2.0 * a.gauged_dt, a.gauged_t, "needs two steps of history")?;
            }
            for (n, v) in [
                ("tol-orthonormality", a.tol_orthonormality),
                ("tol-caloric", a.tol_caloric),
                ("tol-a-integral", a.tol_a_integral),
                ("tol-energy", a.tol_energy),
                ("tol-gauged", a.tol_gauged),
            ] {
                positive(n, v)?;
            }
            Ok(())
        }
        Command::Morawetz(a) => {
            grid(a.grid_n, a.grid_len)?;
            positive("sigma", a.sigma)?;
            parse_pair("momentum", &a.momentum)?;
            range("t-end", a.t_end >= 0.0 && a.t_end.is_finite(), a.t_end, "must be finite and nonnegative")?;
            range("samples", a.samples >= 1, a.samples, "must be at least 1")?;
            positive("dt", a.dt)?;
            positive("tol", a.tol)
        }
        Command::BilinearVerify(a) => {
            grid(a.grid_n, a.grid_len)?;
            range("gaps", a.gaps.len() >= 2 && a.gaps.iter().all(|g| *g > 0), format!("{:?}", a.gaps), "need at least two positive gaps")?;
            range("trials", a.trials >= 1, a.trials, "must be at least 1")?;
            range("samples", a.samples >= 2, a.samples, "must be at least 2")?;
            positive("time-factor", a.time_factor)?;
            positive("window", a.window)?;
            if a.flow == FlowKind::Nls {
                mu(a.mu)?;
                positive("eps", a.eps)?;
                range("steps-per-sample", a.steps_per_sample >= 1, a.steps_per_sample, "must be at least 1")?;
            }
            if let Some(t) = a.tol {
                positive("tol", t)?;
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn parse(args: &[&str]) -> Result<RunConfig, ConfigError> {
        parse_config(std::iter::once("smaplab").chain(args.iter().copied()))
    }

    #[test]
    fn defaults_parse() {
        let c = parse(&["besov", "--grid-n", "64", "--grid-len", "32"]).unwrap();
        let Command::Besov(a) = &c.command else { panic!() };
        assert_eq!(a.field.grid_n, 64);
        assert_eq!(a.field.grid_len, 32.0);
        for sub in ["nls-run", "smap-run", "heatflow", "caloric-gauge", "morawetz", "bilinear-verify"] {
            parse(&[sub]).unwrap();
        }
    }

    #[test]
    fn non_power_of_two_rejected() {
        let e = parse(&["besov", "--grid-n", "63"]).unwrap_err();
        assert!(matches!(e, ConfigError::OutOfRange { name: "grid-n", .. }), "{e}");
        assert!(e.to_string().contains("not a power of two"));
    }

    #[test]
    fn flag_overrides_file() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# sweep\ngrid_n = 64\ngrid-len=8  # short box\n\ndt = 0.01").unwrap();
        let path = f.path().to_str().unwrap();
        let c = parse(&["nls-run", "--config", path, "--grid-n", "128"]).unwrap();
        let Command::NlsRun(a) = &c.command else { panic!() };
        assert_eq!(a.field.grid_n, 128);
        assert_eq!(a.field.grid_len, 8.0);
        assert_eq!(a.dt, 0.01);
        let c = parse(&["nls-run", "--config", path]).unwrap();
        let Command::NlsRun(a) = &c.command else { panic!() };
        assert_eq!(a.field.grid_n, 64);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "grid-n = 64\nepsilon = 0.1").unwrap();
        let e = parse(&["nls-run", "--config", f.path().to_str().unwrap()]).unwrap_err();
        assert!(matches!(&e, ConfigError::UnknownKey { key, line: 2, .. } if key == "epsilon"), "{e}");
    }

    #[test]
    fn malformed_and_missing_are_distinct() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "grid-n 64").unwrap();
        let e = parse(&["besov", "--config", f.path().to_str().unwrap()]).unwrap_err();
        assert!(matches!(e, ConfigError::Malformed { line: 1, .. }), "{e}");
        let e = parse(&["besov", "--data", "file"]).unwrap_err();
        assert!(matches!(e, ConfigError::Missing { name: "input", .. }), "{e}");
        let e = parse(&["nls-run", "--mu", "0.5"]).unwrap_err();
        assert!(matches!(e, ConfigError::OutOfRange { name: "mu", .. }), "{e}");
        let e = parse(&["nls-run", "--no-such-flag", "1"]).unwrap_err();
        assert!(matches!(e, ConfigError::Clap(_)), "{e}");
    }

    #[test]
    fn out_dir_resolution() {
        let c = parse(&["morawetz", "--out", "/tmp/x"]).unwrap();
        assert_eq!(c.out_dir, PathBuf::from("/tmp/x"));
        let c = parse(&["morawetz"]).unwrap();
        assert!(c.out_dir.ends_with("morawetz"));
    }

    #[test]
    fn lists_and_negative_numbers() {
        let c = parse(&["bilinear-verify", "--gaps", "3,5", "--j", "-3", "--flow", "nls", "--mu", "-1"]).unwrap();
        let Command::BilinearVerify(a) = &c.command else { panic!() };
        assert_eq!(a.gaps, vec![3, 5]);
        assert_eq!(a.j, -3);
        assert_eq!(a.mu, -1.0);
        let c = parse(&["nls-run", "--emit", "json", "--dealias", "false"]).unwrap();
        let Command::NlsRun(a) = &c.command else { panic!() };
        assert_eq!(a.emit, vec![Emit::Json]);
        assert!(!a.dealias);
    }
}
