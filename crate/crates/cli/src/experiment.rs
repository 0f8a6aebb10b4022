//! The synthetic robustness studies. Each builds its fixture catalogues,
//! fits every run (in parallel), and records failures without stopping.

use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use etas_core::{Catalog, EtasParams};
use etas_inference::PosteriorResult;
use etas_simulator::{apply_incompleteness, IncompletenessScope};

use crate::commands::{fit_catalogue, simulate_fixture};
use crate::output::{ensure_dir, write_csv, write_json, write_posterior};
use crate::{CliError, RunConfig};

/// Mainshock imposed on seeded fixtures when the configuration gives none.
pub const MAINSHOCK: (f64, f64) = (500.0, 6.7);

/// The four trial starting sets.
pub const STARTING_SETS: [[f64; 5]; 4] = [
    [0.05, 0.01, 1.0, 0.05, 1.01],
    [5.0, 1.0, 5.0, 0.3, 1.5],
    [0.1, 0.089, 2.29, 0.11, 1.08],
    [0.3, 0.1, 1.0, 0.2, 1.01],
];

pub const REPLICATES: u64 = 10;
pub const CROPPED_STARTS: [f64; 5] = [0.0, 250.0, 400.0, 500.0, 501.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    VaryInit,
    Stochastic,
    RepresentativeSample,
    HistoryConditioning,
    Incompleteness,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::VaryInit,
        ExperimentKind::Stochastic,
        ExperimentKind::RepresentativeSample,
        ExperimentKind::HistoryConditioning,
        ExperimentKind::Incompleteness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::VaryInit => "vary-init",
            ExperimentKind::Stochastic => "stochastic",
            ExperimentKind::RepresentativeSample => "representative-sample",
            ExperimentKind::HistoryConditioning => "history-conditioning",
            ExperimentKind::Incompleteness => "incompleteness",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown experiment {s:?}")))
    }
}

/// One fit within an experiment.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub label: String,
    /// Index into the experiment's fixtures.
    pub fixture: usize,
    pub t1: f64,
    pub history_conditioning: bool,
    pub initial: EtasParams,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub spec: RunSpec,
    pub result: Result<PosteriorResult, String>,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub kind: ExperimentKind,
    pub truth: EtasParams,
    pub fixtures: Vec<(String, Catalog)>,
    pub outcomes: Vec<RunOutcome>,
}

impl Experiment {
    pub fn outcome(&self, label: &str) -> Option<&RunOutcome> {
        self.outcomes.iter().find(|o| o.spec.label == label)
    }

    /// Writes fixtures, per-run posteriors and `summary.csv`.
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        ensure_dir(dir)?;
        for (name, cat) in &self.fixtures {
            cat.save_csv(dir.join(format!("{name}.csv")))?;
        }
        for o in &self.outcomes {
            if let Ok(res) = &o.result {
                write_posterior(&dir.join("runs").join(&o.spec.label), res)?;
            }
        }
        let mut header: Vec<String> = [
            "label", "fixture", "T1", "history", "status", "n_events", "n_history", "iterations", "seconds",
        ]
        .map(String::from)
        .to_vec();
        for name in EtasParams::NAMES {
            header.extend([format!("{name}_mode"), format!("{name}_lower95"), format!("{name}_upper95")]);
        }
        header.push("error".into());
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = self.outcomes.iter().map(|o| {
            let mut row = vec![
                o.spec.label.clone(),
                self.fixtures[o.spec.fixture].0.clone(),
                o.spec.t1.to_string(),
                o.spec.history_conditioning.to_string(),
            ];
            match &o.result {
                Ok(r) => {
                    row.extend([
                        format!("{:?}", r.status),
                        r.n_events.to_string(),
                        r.n_history.to_string(),
                        r.iterations.to_string(),
                        r.elapsed_seconds.to_string(),
                    ]);
                    for m in &r.marginals {
                        row.extend([m.mode.to_string(), m.lower95.to_string(), m.upper95.to_string()]);
                    }
                    row.push(String::new());
                }
                Err(e) => {
                    row.push("Failed".into());
                    row.extend(std::iter::repeat_n(String::new(), 4 + 15));
                    row.push(e.clone());
                }
            }
            row
        });
        write_csv(&dir.join("summary.csv"), &header, rows)?;
        if self.kind == ExperimentKind::VaryInit {
            let mut rows = Vec::new();
            for (i, (name, _)) in self.fixtures.iter().enumerate() {
                let fits: Vec<&PosteriorResult> = self
                    .outcomes
                    .iter()
                    .filter(|o| o.spec.fixture == i)
                    .filter_map(|o| o.result.as_ref().ok())
                    .collect();
                let d = max_pairwise_scaled_difference(&fits);
                for (k, p) in EtasParams::NAMES.iter().enumerate() {
                    rows.push(vec![name.clone(), p.to_string(), d[k].to_string()]);
                }
            }
            write_csv(&dir.join("agreement.csv"), &["fixture", "parameter", "max_scaled_difference"], rows)?;
        }
        write_json(&dir.join("experiment.json"), &serde_json::json!({
            "experiment": self.kind.name(),
            "truth": self.truth,
            "runs": self.outcomes.len(),
            "failed": self.outcomes.iter().filter(|o| o.result.is_err()).count(),
        }))
    }
}

/// Largest `|theta_a - theta_b| / min(sd_a, sd_b)` over pairs of fits, per
/// internal coordinate.
pub fn max_pairwise_scaled_difference(fits: &[&PosteriorResult]) -> [f64; 5] {
    let mut out = [0.0f64; 5];
    for (i, a) in fits.iter().enumerate() {
        for b in &fits[i + 1..] {
            let (sa, sb) = (a.approx.sd(), b.approx.sd());
            for k in 0..5 {
                let d = (a.mode_internal.0[k] - b.mode_internal.0[k]).abs() / sa[k].min(sb[k]);
                out[k] = out[k].max(d);
            }
        }
    }
    out
}

fn seeded(cfg: &RunConfig) -> RunConfig {
    let mut c = cfg.clone();
    if c.seed_events.is_empty() {
        c.seed_events = vec![MAINSHOCK];
    }
    c
}

fn unseeded(cfg: &RunConfig) -> RunConfig {
    RunConfig {
        seed_events: Vec::new(),
        ..cfg.clone()
    }
}

fn spec(label: String, fixture: usize, cfg: &RunConfig) -> RunSpec {
    RunSpec {
        label,
        fixture,
        t1: cfg.t1,
        history_conditioning: false,
        initial: cfg.initial,
    }
}

/// Builds the fixtures and runs every fit of `kind`.
pub fn run_experiment(kind: ExperimentKind, cfg: &RunConfig) -> Result<Experiment, CliError> {
    cfg.validate()?;
    let mut fixtures: Vec<(String, Catalog)> = Vec::new();
    let mut specs: Vec<RunSpec> = Vec::new();
    match kind {
        ExperimentKind::VaryInit => {
            fixtures.push(("unseeded".into(), simulate_fixture(&unseeded(cfg))?.catalog));
            fixtures.push(("seeded".into(), simulate_fixture(&seeded(cfg))?.catalog));
            for (f, name) in ["unseeded", "seeded"].iter().enumerate() {
                for (i, set) in STARTING_SETS.iter().enumerate() {
                    let mut s = spec(format!("{name}-start{}", i + 1), f, cfg);
                    s.initial = EtasParams::from_array(*set);
                    specs.push(s);
                }
            }
        }
        ExperimentKind::Stochastic => {
            for r in 0..REPLICATES {
                for (name, base) in [("unseeded", unseeded(cfg)), ("seeded", seeded(cfg))] {
                    let run = RunConfig {
                        seed: cfg.seed.wrapping_add(r),
                        ..base
                    };
                    fixtures.push((format!("{name}-{r}"), simulate_fixture(&run)?.catalog));
                    specs.push(spec(format!("{name}-{r}"), fixtures.len() - 1, cfg));
                }
            }
        }
        ExperimentKind::RepresentativeSample | ExperimentKind::HistoryConditioning => {
            fixtures.push(("seeded".into(), simulate_fixture(&seeded(cfg))?.catalog));
            for t1 in CROPPED_STARTS {
                let conditioning: &[bool] = match kind {
                    ExperimentKind::RepresentativeSample => &[false],
                    _ if t1 == 0.0 => &[],
                    _ => &[true, false],
                };
                for &h in conditioning {
                    let tag = if kind == ExperimentKind::HistoryConditioning {
                        if h { "-history" } else { "-cropped" }
                    } else {
                        ""
                    };
                    let mut s = spec(format!("T1-{t1}{tag}"), 0, cfg);
                    s.t1 = t1;
                    s.history_conditioning = h;
                    specs.push(s);
                }
            }
        }
        ExperimentKind::Incompleteness => {
            let base = seeded(cfg);
            let complete = simulate_fixture(&base)?.catalog;
            let model = cfg.incompleteness.unwrap_or_default();
            let scope = IncompletenessScope::Mainshocks(base.seed_events.clone());
            let degraded = apply_incompleteness(&complete, &model, &scope, cfg.m0)?;
            fixtures.push(("complete".into(), complete));
            fixtures.push(("incomplete".into(), degraded));
            specs.push(spec("complete".into(), 0, cfg));
            specs.push(spec("incomplete".into(), 1, cfg));
        }
    }

    let run_one = |s: &RunSpec| -> RunOutcome {
        let run = RunConfig {
            t1: s.t1,
            history_conditioning: s.history_conditioning,
            initial: s.initial,
            ..cfg.clone()
        };
        let result = run
            .validate()
            .and_then(|_| fit_catalogue(&fixtures[s.fixture].1, &run))
            .map_err(|e| e.to_string());
        RunOutcome {
            spec: s.clone(),
            result,
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.num_threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let outcomes = pool.install(|| specs.par_iter().map(run_one).collect());
    Ok(Experiment {
        kind,
        truth: cfg.truth,
        fixtures,
        outcomes,
    })
}
