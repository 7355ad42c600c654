//! End-to-end experiment orchestration: a flat key-value config resolves
//! into a sieve, a set A, a filtered subset S, exact counts, the
//! ε-certificate, a sample batch, and the normality diagnostics, all
//! collected into one reproducible JSON report.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::diophantine::Theta;
use crate::energy::{multiplicative_energy, square_energy, ComplexPair, EnergyReport};
use crate::error::{Error, Result};
use crate::gaussianity::{
    default_t_grid, empirical_char_fn, epsilon_certificate, ks_statistic, moment_report,
    CharFnReport, EpsilonCertificate, MomentReport,
};
use crate::rng::mix64;
use crate::sampler::{sample_batch, Model, SampleBatch};
use crate::sets::WeightedSet;
use crate::sieve::{cache_size_bytes, SieveTable};

/// Report schema version.
pub const SCHEMA_VERSION: u32 = 1;

/// Above this set size the exact fourth moment of A is skipped in the
/// moment block (|A|² products get expensive and the identity checks live
/// in the energy report anyway).
const EXACT_FOURTH_SIZE_CAP: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetFamily {
    Interval,
    TwoSquares,
    ShiftedPrimes,
    Twisted,
}

impl SetFamily {
    fn parse(s: &str) -> Result<SetFamily> {
        match s {
            "interval" => Ok(SetFamily::Interval),
            "two_squares" | "two-squares" => Ok(SetFamily::TwoSquares),
            "shifted_primes" | "shifted-primes" => Ok(SetFamily::ShiftedPrimes),
            "twisted" => Ok(SetFamily::Twisted),
            other => Err(Error::Config(format!("unknown set family {other:?}"))),
        }
    }
}

/// Fully resolved experiment parameters. Every field has a config-file key
/// of the same name and a CLI flag override.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub sieve_limit: u64,
    pub sieve_cache: Option<String>,
    pub set: SetFamily,
    pub x: Option<u64>,
    pub y: Option<u64>,
    pub shift_k: Option<i64>,
    pub n: Option<u64>,
    pub theta: Option<String>,
    pub model: Model,
    pub samples: usize,
    pub seed: u64,
    pub epsilon: f64,
    /// "auto" resolves to ceil((1+ε)·log log x).
    pub omega_cap: Option<String>,
    pub profile_filter: bool,
    pub k_min: Option<i32>,
    pub k_max: Option<i32>,
    pub squarefree: bool,
    /// "auto" resolves to (log log N)^-5.
    pub rho: Option<String>,
    pub t_grid: Option<String>,
    pub product_ks: Vec<u32>,
    pub include_samples: bool,
    pub threads: Option<usize>,
    pub out: Option<String>,
}

const KNOWN_KEYS: &[&str] = &[
    "sieve_limit",
    "sieve_cache",
    "set",
    "x",
    "y",
    "shift_k",
    "n",
    "theta",
    "model",
    "samples",
    "seed",
    "epsilon",
    "omega_cap",
    "profile_filter",
    "k_min",
    "k_max",
    "squarefree",
    "rho",
    "t_grid",
    "product_ks",
    "include_samples",
    "threads",
    "out",
];

/// Parse `key = value` lines; '#' starts a comment, blank lines are
/// skipped. Later duplicates override earlier ones.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

impl ExperimentConfig {
    /// Build a config from a key-value map (config file merged with CLI
    /// overrides). Unknown keys are rejected.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<ExperimentConfig> {
        for key in map.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("unknown config key {key:?}")));
            }
        }
        let get = |k: &str| map.get(k).map(String::as_str);
        let parse_u64 = |k: &str| -> Result<Option<u64>> {
            get(k)
                .map(|v| v.parse::<u64>().map_err(|_| bad_value(k, v)))
                .transpose()
        };
        let family = SetFamily::parse(
            get("set").ok_or_else(|| Error::Config("missing required key 'set'".into()))?,
        )?;
        let x = parse_u64("x")?;
        let y = parse_u64("y")?;
        let n = parse_u64("n")?;
        let shift_k = get("shift_k")
            .map(|v| v.parse::<i64>().map_err(|_| bad_value("shift_k", v)))
            .transpose()?;
        let theta = get("theta").map(str::to_string);
        let seed = parse_u64("seed")?
            .ok_or_else(|| Error::Config("missing required key 'seed'".into()))?;
        let samples = get("samples")
            .ok_or_else(|| Error::Config("missing required key 'samples'".into()))?
            .parse::<usize>()
            .map_err(|_| bad_value("samples", get("samples").unwrap()))?;
        let model = match get("model") {
            Some(v) => Model::parse(v)?,
            None => Model::Steinhaus,
        };
        let epsilon = get("epsilon")
            .map(|v| v.parse::<f64>().map_err(|_| bad_value("epsilon", v)))
            .transpose()?
            .unwrap_or(0.1);
        let sieve_limit = match parse_u64("sieve_limit")? {
            Some(v) => v,
            None => default_sieve_limit(family, x, y, n, shift_k)?,
        };
        let parse_bool = |k: &str| -> Result<bool> {
            match get(k) {
                None => Ok(false),
                Some("true") | Some("1") => Ok(true),
                Some("false") | Some("0") => Ok(false),
                Some(v) => Err(bad_value(k, v)),
            }
        };
        let parse_i32 = |k: &str| -> Result<Option<i32>> {
            get(k)
                .map(|v| v.parse::<i32>().map_err(|_| bad_value(k, v)))
                .transpose()
        };
        let product_ks = match get("product_ks") {
            None => vec![1, 2],
            Some(v) => v
                .split(',')
                .map(|p| p.trim().parse::<u32>().map_err(|_| bad_value("product_ks", v)))
                .collect::<Result<Vec<u32>>>()?,
        };
        Ok(ExperimentConfig {
            sieve_limit,
            sieve_cache: get("sieve_cache").map(str::to_string),
            set: family,
            x,
            y,
            shift_k,
            n,
            theta,
            model,
            samples,
            seed,
            epsilon,
            omega_cap: get("omega_cap").map(str::to_string),
            profile_filter: parse_bool("profile_filter")?,
            k_min: parse_i32("k_min")?,
            k_max: parse_i32("k_max")?,
            squarefree: parse_bool("squarefree")?,
            rho: get("rho").map(str::to_string),
            t_grid: get("t_grid").map(str::to_string),
            product_ks,
            include_samples: parse_bool("include_samples")?,
            threads: get("threads")
                .map(|v| v.parse::<usize>().map_err(|_| bad_value("threads", v)))
                .transpose()?,
            out: get("out").map(str::to_string),
        })
    }

    pub fn from_file(path: &Path, overrides: &BTreeMap<String, String>) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)?;
        let mut map = parse_config_text(&text)?;
        for (k, v) in overrides {
            map.insert(k.clone(), v.clone());
        }
        ExperimentConfig::from_map(&map)
    }

    /// The largest integer the configuration will query.
    fn max_referenced(&self) -> Result<u64> {
        match self.set {
            SetFamily::Interval | SetFamily::TwoSquares => {
                let x = require(self.x, "x")?;
                let y = require(self.y, "y")?;
                x.checked_add(y)
                    .ok_or_else(|| Error::Config("x + y overflows".into()))
            }
            SetFamily::ShiftedPrimes => {
                let n = require(self.n, "n")?;
                let k = require(self.shift_k, "shift_k")?;
                Ok(if k < 0 { n + k.unsigned_abs() } else { n })
            }
            SetFamily::Twisted => require(self.n, "n"),
        }
    }

    fn t_grid_points(&self) -> Result<Vec<(f64, f64)>> {
        match &self.t_grid {
            None => Ok(default_t_grid()),
            Some(spec) => {
                let mut axis = Vec::new();
                for part in spec.split(',') {
                    let v: f64 = part
                        .trim()
                        .parse()
                        .map_err(|_| bad_value("t_grid", spec))?;
                    axis.push(v);
                    if v != 0.0 {
                        axis.push(-v);
                    }
                }
                let mut grid = Vec::with_capacity(axis.len() * axis.len());
                for &t1 in &axis {
                    for &t2 in &axis {
                        grid.push((t1, t2));
                    }
                }
                Ok(grid)
            }
        }
    }
}

fn bad_value(key: &str, value: &str) -> Error {
    Error::Config(format!("bad value {value:?} for key {key:?}"))
}

fn require<T: Copy>(v: Option<T>, key: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("set family needs key {key:?}")))
}

fn default_sieve_limit(
    family: SetFamily,
    x: Option<u64>,
    y: Option<u64>,
    n: Option<u64>,
    shift_k: Option<i64>,
) -> Result<u64> {
    let needed = match family {
        SetFamily::Interval | SetFamily::TwoSquares => {
            require(x, "x")?.checked_add(require(y, "y")?)
        }
        SetFamily::ShiftedPrimes => {
            let n = require(n, "n")?;
            let k = require(shift_k, "shift_k")?;
            Some(if k < 0 { n + k.unsigned_abs() } else { n })
        }
        SetFamily::Twisted => Some(require(n, "n")?),
    };
    needed
        .map(|v| v.max(2))
        .ok_or_else(|| Error::Config("referenced range overflows".into()))
}

/// Construct the set A and the filtered subset S for a config, recording
/// any formula-derived defaults that were applied.
pub fn build_sets(
    config: &ExperimentConfig,
    table: &SieveTable,
) -> Result<(WeightedSet, WeightedSet, BTreeMap<String, String>)> {
    let mut derived = BTreeMap::new();
    let a = match config.set {
        SetFamily::Interval => {
            WeightedSet::interval_set(require(config.x, "x")?, require(config.y, "y")?)?
        }
        SetFamily::TwoSquares => WeightedSet::two_squares_set(
            table,
            require(config.x, "x")?,
            require(config.y, "y")?,
        )?,
        SetFamily::ShiftedPrimes => WeightedSet::shifted_primes_set(
            table,
            require(config.n, "n")?,
            require(config.shift_k, "shift_k")?,
        )?,
        SetFamily::Twisted => {
            let spec = config
                .theta
                .as_deref()
                .ok_or_else(|| Error::Config("twisted family needs key 'theta'".into()))?;
            WeightedSet::twisted_weights(require(config.n, "n")?, &Theta::parse(spec)?)?
        }
    };
    if a.is_empty() {
        return Err(Error::EmptySet(format!(
            "constructor produced an empty set: {}",
            a.label()
        )));
    }

    let mut s = a.clone();
    if let Some(cap_spec) = &config.omega_cap {
        let cap = if cap_spec == "auto" {
            let x_ref = s.max_element().unwrap() as f64;
            let cap = ((1.0 + config.epsilon) * x_ref.ln().ln()).ceil();
            if !cap.is_finite() || cap < 0.0 {
                return Err(Error::Config(
                    "auto omega_cap needs a larger reference point".into(),
                ));
            }
            derived.insert("omega_cap".into(), format!("{}", cap as u32));
            cap as u32
        } else {
            cap_spec
                .parse::<u32>()
                .map_err(|_| bad_value("omega_cap", cap_spec))?
        };
        s = s.omega_filter(table, cap)?;
    }
    if config.profile_filter {
        let (k_min, k_max) = match (config.k_min, config.k_max) {
            (Some(lo), Some(hi)) => (lo, hi),
            _ => {
                let x = require(config.x, "x")? as f64;
                let y = require(config.y, "y")? as f64;
                if y < 1.0 {
                    return Err(Error::Config("auto profile range needs y >= 1".into()));
                }
                let delta = y / x;
                let lo = (1.0 / delta).ln().ln().ceil() as i32;
                let hi = x.ln().ln().floor() as i32;
                if lo > hi {
                    return Err(Error::Config(format!(
                        "auto profile range is empty: k in [{lo}, {hi}]"
                    )));
                }
                derived.insert("k_min".into(), lo.to_string());
                derived.insert("k_max".into(), hi.to_string());
                (lo, hi)
            }
        };
        s = s.omega_profile_filter(table, config.epsilon, k_min, k_max)?;
    }
    if config.squarefree {
        s = s.squarefree_filter(table)?;
    }
    if let Some(rho_spec) = &config.rho {
        let rho = if rho_spec == "auto" {
            let n_ref = s.max_element().map(|v| v as f64).unwrap_or(f64::NAN);
            let rho = n_ref.ln().ln().powi(-5);
            derived.insert("rho".into(), format!("{rho}"));
            rho
        } else {
            rho_spec
                .parse::<f64>()
                .map_err(|_| bad_value("rho", rho_spec))?
        };
        s = s.random_thin(rho, mix64(config.seed ^ 0x7468_696e))?;
    }
    let s = s.restrict_min_two();
    if s.is_empty() {
        return Err(Error::EmptySet(format!(
            "filter chain produced an empty subset: {}",
            s.label()
        )));
    }
    Ok((a, s, derived))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SetSummary {
    pub label: String,
    pub size: u64,
    pub variance: f64,
    pub min: u64,
    pub max: u64,
}

impl SetSummary {
    fn of(set: &WeightedSet) -> SetSummary {
        SetSummary {
            label: set.label().to_string(),
            size: set.len() as u64,
            variance: set.variance(),
            min: set.min_element().unwrap_or(0),
            max: set.max_element().unwrap_or(0),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BatchSummary {
    pub model: Model,
    pub seed: u64,
    pub m: usize,
    pub mean: ComplexPair,
    pub mean_abs2: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KsReport {
    pub re: f64,
    pub re_sigma: f64,
    /// Absent for the Rademacher model (Z is real).
    pub im: Option<f64>,
    pub im_sigma: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: u32,
    pub timestamp_unix: u64,
    pub config: ExperimentConfig,
    pub derived_defaults: BTreeMap<String, String>,
    pub set_summary: SetSummary,
    pub subset_summary: SetSummary,
    pub energy: EnergyReport,
    pub certificate: EpsilonCertificate,
    pub batch_summary: BatchSummary,
    pub moments: MomentReport,
    pub char_fn: CharFnReport,
    pub ks: KsReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<[f64; 2]>>,
}

impl ExperimentReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }
}

fn batch_ks(batch: &SampleBatch) -> Result<KsReport> {
    let re: Vec<f64> = batch.values.iter().map(|z| z.re).collect();
    match batch.model {
        Model::Steinhaus => {
            let sigma = std::f64::consts::FRAC_1_SQRT_2;
            let im: Vec<f64> = batch.values.iter().map(|z| z.im).collect();
            Ok(KsReport {
                re: ks_statistic(&re, sigma)?,
                re_sigma: sigma,
                im: Some(ks_statistic(&im, sigma)?),
                im_sigma: Some(sigma),
            })
        }
        Model::Rademacher => Ok(KsReport {
            re: ks_statistic(&re, 1.0)?,
            re_sigma: 1.0,
            im: None,
            im_sigma: None,
        }),
    }
}

/// Run the full pipeline for one config. The report is bitwise
/// reproducible given the same config, independent of thread count;
/// only `timestamp_unix` varies between runs.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    if config.samples == 0 {
        return Err(Error::Config("samples must be >= 1".into()));
    }
    let max_ref = config.max_referenced()?;
    if max_ref > config.sieve_limit {
        return Err(Error::Config(format!(
            "configuration references {max_ref} beyond sieve_limit {}",
            config.sieve_limit
        )));
    }
    let table = match &config.sieve_cache {
        Some(path) if Path::new(path).exists() => {
            let t = SieveTable::read_cache(path)?;
            if t.limit() < config.sieve_limit {
                let t = SieveTable::build(config.sieve_limit)?;
                t.write_cache(path)?;
                t
            } else {
                t
            }
        }
        Some(path) => {
            let t = SieveTable::build(config.sieve_limit)?;
            t.write_cache(path)?;
            t
        }
        None => SieveTable::build(config.sieve_limit)?,
    };

    let (a, s, derived_defaults) = build_sets(config, &table)?;
    let energy = EnergyReport::compute(&s, &table, &config.product_ks)?;
    let certificate = epsilon_certificate(&a, &s, &table)?;
    let batch = sample_batch(config.model, &a, &table, config.samples, config.seed)?;

    let exact_fourth = if a.len() <= EXACT_FOURTH_SIZE_CAP && a.is_indicator() {
        match config.model {
            Model::Steinhaus => Some(multiplicative_energy(&a)?),
            Model::Rademacher => {
                let all_squarefree = a
                    .support()
                    .iter()
                    .try_fold(true, |acc, &v| table.is_squarefree(v).map(|sf| acc && sf))?;
                if all_squarefree {
                    Some(square_energy(&a, &table)?)
                } else {
                    None
                }
            }
        }
    } else {
        None
    };
    let moments = moment_report(&batch, exact_fourth)?;
    let char_fn = empirical_char_fn(&batch, &config.t_grid_points()?)?;
    let ks = batch_ks(&batch)?;

    let mean = {
        let mut re = 0.0;
        let mut im = 0.0;
        for z in &batch.values {
            re += z.re;
            im += z.im;
        }
        ComplexPair {
            re: re / batch.m() as f64,
            im: im / batch.m() as f64,
        }
    };
    let batch_summary = BatchSummary {
        model: batch.model,
        seed: batch.seed,
        m: batch.m(),
        mean,
        mean_abs2: moments.mean_abs2,
    };
    let samples = config
        .include_samples
        .then(|| batch.values.iter().map(|z| [z.re, z.im]).collect());

    Ok(ExperimentReport {
        schema: SCHEMA_VERSION,
        timestamp_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        config: config.clone(),
        derived_defaults,
        set_summary: SetSummary::of(&a),
        subset_summary: SetSummary::of(&s),
        energy,
        certificate,
        batch_summary,
        moments,
        char_fn,
        ks,
        samples,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CacheSummary {
    pub limit: u64,
    pub path: String,
    pub bytes: u64,
    /// "built", "rebuilt", or "verified".
    pub action: String,
}

/// Write (or verify) the binary sieve cache at `path`. An existing valid
/// cache with the same limit is left untouched; a valid cache with a
/// different limit is rebuilt; a corrupt file is an error.
pub fn build_cache(limit: u64, path: &str) -> Result<CacheSummary> {
    if Path::new(path).exists() {
        let existing = SieveTable::read_cache(path)?;
        if existing.limit() == limit {
            return Ok(CacheSummary {
                limit,
                path: path.to_string(),
                bytes: cache_size_bytes(limit),
                action: "verified".into(),
            });
        }
        let table = SieveTable::build(limit)?;
        let bytes = table.write_cache(path)?;
        return Ok(CacheSummary {
            limit,
            path: path.to_string(),
            bytes,
            action: "rebuilt".into(),
        });
    }
    let table = SieveTable::build(limit)?;
    let bytes = table.write_cache(path)?;
    Ok(CacheSummary {
        limit,
        path: path.to_string(),
        bytes,
        action: "built".into(),
    })
}
