//! Run configuration: one flat key-value TOML document using the model
//! definition names (`mu.init`, `a_K`, `Nmax`, `coef.t`, ...).
//!
//! Dotted names are ordinary TOML dotted keys, so `mu.init = 0.3` and
//! `[mu] init = 0.3` are equivalent. Every key is optional; unknown keys are
//! rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use etas_core::{BinningConfig, EtasParams, MagnitudeModel, PriorSpec, TimeDomain};
use etas_inference::FitConfig;
use etas_simulator::IncompletenessModel;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    /// Catalogue CSV to fit; `None` means simulate one.
    pub catalogue: Option<PathBuf>,
    /// Calendar labels of the domain ends, carried as metadata.
    pub time_int: Option<(String, String)>,
    pub t1: f64,
    pub t2: f64,
    pub m0: f64,
    pub b_value: f64,
    pub initial: EtasParams,
    pub priors: PriorSpec,
    pub binning: BinningConfig,
    pub max_iter: usize,
    pub max_step: Option<f64>,
    pub conv_fraction: f64,
    /// Parameters used when simulating.
    pub truth: EtasParams,
    /// Imposed `(time, magnitude)` events for simulation.
    pub seed_events: Vec<(f64, f64)>,
    pub incompleteness: Option<IncompletenessModel>,
    pub history_conditioning: bool,
    pub output: PathBuf,
    pub seed: u64,
    pub num_threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let fit = FitConfig::default();
        Self {
            catalogue: None,
            time_int: None,
            t1: 0.0,
            t2: 1000.0,
            m0: 2.5,
            b_value: 1.0,
            initial: fit.initial,
            priors: fit.priors,
            binning: fit.binning,
            max_iter: fit.max_iter,
            max_step: None,
            conv_fraction: fit.convergence_fraction,
            truth: EtasParams::reference(),
            seed_events: Vec::new(),
            incompleteness: None,
            history_conditioning: true,
            output: PathBuf::from("out"),
            seed: 1,
            num_threads: None,
        }
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn bad(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

fn number(key: &str, v: &toml::Value) -> Result<f64, CliError> {
    match v {
        toml::Value::Float(x) => Ok(*x),
        toml::Value::Integer(i) => Ok(*i as f64),
        other => Err(bad(key, format!("expected a number, got {other}"))),
    }
}

fn count(key: &str, v: &toml::Value) -> Result<u64, CliError> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        other => Err(bad(key, format!("expected a non-negative integer, got {other}"))),
    }
}

fn string(key: &str, v: &toml::Value) -> Result<String, CliError> {
    v.as_str().map(str::to_owned).ok_or_else(|| bad(key, "expected a string"))
}

fn pair<T>(key: &str, v: &toml::Value, item: impl Fn(&str, &toml::Value) -> Result<T, CliError>) -> Result<(T, T), CliError> {
    match v.as_array().map(Vec::as_slice) {
        Some([a, b]) => Ok((item(key, a)?, item(key, b)?)),
        _ => Err(bad(key, "expected a two-element array")),
    }
}

/// Parses `"500:6.7"` into `(500.0, 6.7)`.
pub fn parse_seed_event(s: &str) -> Result<(f64, f64), CliError> {
    let (t, m) = s
        .split_once(':')
        .ok_or_else(|| CliError::Config(format!("seed event {s:?} is not TIME:MAGNITUDE")))?;
    let parse = |x: &str| {
        x.trim()
            .parse::<f64>()
            .map_err(|_| CliError::Config(format!("seed event {s:?} is not TIME:MAGNITUDE")))
    };
    Ok((parse(t)?, parse(m)?))
}

/// Parses `"G=3.8,H=1.0"`; missing entries take the defaults.
pub fn parse_incompleteness(s: &str) -> Result<IncompletenessModel, CliError> {
    let mut model = IncompletenessModel::default();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("incompleteness entry {part:?} is not KEY=VALUE")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("incompleteness value {v:?} is not a number")))?;
        match k.trim() {
            "G" | "g" => model.g = v,
            "H" | "h" => model.h = v,
            other => return Err(CliError::Config(format!("unknown incompleteness key {other:?}"))),
        }
    }
    IncompletenessModel::new(model.g, model.h).map_err(|e| CliError::Config(e.to_string()))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let table: toml::Table = text.parse().map_err(|e| CliError::Config(format!("{e}")))?;
        let mut flat = BTreeMap::new();
        flatten("", &table, &mut flat);

        let mut cfg = Self::default();
        let mut prior = [0.5, 0.5, -1.0, 0.5, 0.0, 10.0, 0.0, 1.0, 1.0, 2.0];
        let prior_keys = ["a_mu", "b_mu", "a_K", "b_K", "a_alpha", "b_alpha", "a_c", "b_c", "a_p", "b_p"];
        let mut incompleteness: Option<IncompletenessModel> = None;

        for (key, v) in &flat {
            let k = key.as_str();
            if let Some(i) = prior_keys.iter().position(|p| *p == k) {
                prior[i] = number(k, v)?;
                continue;
            }
            match k {
                "catalogue" | "catalog" => cfg.catalogue = Some(PathBuf::from(string(k, v)?)),
                "time.int" => cfg.time_int = Some(pair(k, v, string)?),
                "T12" => (cfg.t1, cfg.t2) = pair(k, v, number)?,
                "M0" => cfg.m0 = number(k, v)?,
                "b_value" => cfg.b_value = number(k, v)?,
                "mu.init" => cfg.initial.mu = number(k, v)?,
                "K.init" => cfg.initial.k = number(k, v)?,
                "alpha.init" => cfg.initial.alpha = number(k, v)?,
                "c.init" => cfg.initial.c = number(k, v)?,
                "p.init" => cfg.initial.p = number(k, v)?,
                "mu.true" => cfg.truth.mu = number(k, v)?,
                "K.true" => cfg.truth.k = number(k, v)?,
                "alpha.true" => cfg.truth.alpha = number(k, v)?,
                "c.true" => cfg.truth.c = number(k, v)?,
                "p.true" => cfg.truth.p = number(k, v)?,
                "Nmax" => cfg.binning.n_max = count(k, v)? as u32,
                "coef.t" => cfg.binning.coef = number(k, v)?,
                "delta.t" => cfg.binning.delta = number(k, v)?,
                "max_iter" => cfg.max_iter = count(k, v)? as usize,
                "max_step" => cfg.max_step = Some(number(k, v)?),
                "conv_fraction" => cfg.conv_fraction = number(k, v)?,
                "seed_events" => {
                    let list = v.as_array().ok_or_else(|| bad(k, "expected an array of \"TIME:MAGNITUDE\""))?;
                    cfg.seed_events = list
                        .iter()
                        .map(|s| parse_seed_event(&string(k, s)?))
                        .collect::<Result<_, _>>()?;
                }
                "incomplete.G" => incompleteness.get_or_insert_with(Default::default).g = number(k, v)?,
                "incomplete.H" => incompleteness.get_or_insert_with(Default::default).h = number(k, v)?,
                "history.conditioning" => {
                    cfg.history_conditioning = v.as_bool().ok_or_else(|| bad(k, "expected true or false"))?
                }
                "output" => cfg.output = PathBuf::from(string(k, v)?),
                "seed" => cfg.seed = count(k, v)?,
                "num.threads" => cfg.num_threads = Some(count(k, v)? as usize),
                other => return Err(CliError::Config(format!("unknown configuration key {other:?}"))),
            }
        }
        let [a_mu, b_mu, a_k, b_k, a_alpha, b_alpha, a_c, b_c, a_p, b_p] = prior;
        cfg.priors = PriorSpec::from_table(a_mu, b_mu, a_k, b_k, a_alpha, b_alpha, a_c, b_c, a_p, b_p);
        cfg.incompleteness = incompleteness;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Checks the whole configuration before any work starts.
    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: etas_core::Error| CliError::Config(e.to_string());
        self.domain()?;
        self.magnitude_model()?;
        self.truth.check().map_err(cfg)?;
        if let Some(m) = &self.incompleteness {
            IncompletenessModel::new(m.g, m.h).map_err(cfg)?;
        }
        for &(t, m) in &self.seed_events {
            if !(t >= self.t1 && t <= self.t2 && m >= self.m0) {
                return Err(CliError::Config(format!(
                    "seed event {t}:{m} must lie in [T1, T2] with magnitude >= M0"
                )));
            }
        }
        if self.num_threads == Some(0) {
            return Err(CliError::Config("num.threads must be at least 1".into()));
        }
        self.fit_config().check().map_err(cfg)?;
        Ok(())
    }

    pub fn domain(&self) -> Result<TimeDomain, CliError> {
        TimeDomain::new(self.t1, self.t2, self.m0).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn magnitude_model(&self) -> Result<MagnitudeModel, CliError> {
        MagnitudeModel::new(self.b_value, self.m0).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            initial: self.initial,
            max_iter: self.max_iter,
            convergence_fraction: self.conv_fraction,
            max_step: self.max_step,
            binning: self.binning,
            priors: self.priors,
            ..FitConfig::default()
        }
    }
}
