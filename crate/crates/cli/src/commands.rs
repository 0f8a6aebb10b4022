use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use etas_core::link::sample_prior;
use etas_core::{load_catalog, split_domain, Catalog, CsvFormat, EtasParams, PriorSpec};
use etas_inference::{fit, sample_posterior, PosteriorResult};
use etas_simulator::{
    apply_incompleteness, simulate_catalog, IncompletenessScope, SimConfig, Simulation, DEFAULT_MAX_EVENTS,
};

use crate::output::{ensure_dir, write_csv, write_json, write_posterior};
use crate::{CliError, RunConfig};

pub fn simulate_fixture(cfg: &RunConfig) -> Result<Simulation, CliError> {
    let sim = SimConfig {
        params: cfg.truth,
        dom: cfg.domain()?,
        mag_model: cfg.magnitude_model()?,
        seeds: cfg.seed_events.clone(),
        rng_seed: cfg.seed,
        max_events: DEFAULT_MAX_EVENTS,
    };
    Ok(simulate_catalog(&sim)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateManifest {
    pub seed: u64,
    pub truth: EtasParams,
    pub t1: f64,
    pub t2: f64,
    pub m0: f64,
    pub b_value: f64,
    pub seed_events: Vec<(f64, f64)>,
    pub n_events: usize,
    pub n_incomplete: Option<usize>,
}

/// Writes `catalogue.csv`, `genealogy.json`, `manifest.json`, and with an
/// incompleteness model also `catalogue_incomplete.csv`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulateManifest, CliError> {
    let sim = simulate_fixture(cfg)?;
    let dir = &cfg.output;
    ensure_dir(dir)?;
    sim.catalog.save_csv(dir.join("catalogue.csv"))?;
    write_json(&dir.join("genealogy.json"), &sim.genealogy)?;

    let n_incomplete = match &cfg.incompleteness {
        Some(model) => {
            if cfg.seed_events.is_empty() {
                return Err(CliError::Config(
                    "incompleteness needs a seeded mainshock (--seed-event)".into(),
                ));
            }
            let scope = IncompletenessScope::Mainshocks(cfg.seed_events.clone());
            let degraded = apply_incompleteness(&sim.catalog, model, &scope, cfg.m0)?;
            degraded.save_csv(dir.join("catalogue_incomplete.csv"))?;
            Some(degraded.len())
        }
        None => None,
    };
    let manifest = SimulateManifest {
        seed: cfg.seed,
        truth: cfg.truth,
        t1: cfg.t1,
        t2: cfg.t2,
        m0: cfg.m0,
        b_value: cfg.b_value,
        seed_events: cfg.seed_events.clone(),
        n_events: sim.catalog.len(),
        n_incomplete,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Splits `cat` on the configured domain and fits it, dropping pre-T1
/// events unless history conditioning is on.
pub fn fit_catalogue(cat: &Catalog, cfg: &RunConfig) -> Result<PosteriorResult, CliError> {
    let dom = cfg.domain()?;
    let (history, modeled) = split_domain(cat, &dom);
    let history = if cfg.history_conditioning { history } else { Catalog::empty() };
    fit(&modeled, &history, &dom, &cfg.fit_config()).map_err(|e| CliError::Fit(e.to_string()))
}

/// Fits the configured catalogue (or a simulated one when none is given).
pub fn cmd_fit(cfg: &RunConfig) -> Result<PosteriorResult, CliError> {
    let cat = match &cfg.catalogue {
        Some(path) => load_catalog(path, &CsvFormat::default())?,
        None => simulate_fixture(cfg)?.catalog,
    };
    let res = fit_catalogue(&cat, cfg)?;
    write_posterior(&cfg.output, &res)?;
    write_csv(
        &cfg.output.join("timing.csv"),
        &["n_events", "n_history", "n_rows", "iterations", "seconds"],
        [vec![
            res.n_events.to_string(),
            res.n_history.to_string(),
            res.n_rows.to_string(),
            res.iterations.to_string(),
            res.elapsed_seconds.to_string(),
        ]],
    )?;
    Ok(res)
}

/// Where triggering-curve parameter draws come from.
#[derive(Debug, Clone)]
pub enum ParamSource {
    Posterior(Box<PosteriorResult>),
    Prior(PriorSpec),
}

impl ParamSource {
    pub fn draw(&self, n: usize, seed: u64) -> Vec<EtasParams> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            ParamSource::Posterior(res) => sample_posterior(res, n, &mut rng),
            ParamSource::Prior(spec) => sample_prior(spec, n, &mut rng),
        }
    }
}

/// One family of curves over a shared time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveFamily {
    pub label: String,
    /// Parent magnitude; `None` for the magnitude-free Omori curve.
    pub magnitude: Option<f64>,
    pub times: Vec<f64>,
    /// `rates[sample][time]`.
    pub rates: Vec<Vec<f64>>,
    /// 2.5%, 50% and 97.5% across samples at each time.
    pub quantiles: Vec<[f64; 3]>,
}

fn quantile_sorted(xs: &[f64], q: f64) -> f64 {
    let h = q * (xs.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    xs[lo] + (h - lo as f64) * (xs[hi] - xs[lo])
}

/// Omori curve `K (t/c + 1)^-p` and `g_t` for each parent magnitude, on a
/// log-spaced grid over `[horizon 1e-4, horizon]`.
pub fn triggering_curves(
    samples: &[EtasParams],
    magnitudes: &[f64],
    m0: f64,
    horizon: f64,
    n_grid: usize,
) -> Vec<CurveFamily> {
    let n_grid = n_grid.max(2);
    let (lo, hi) = ((horizon * 1e-4).ln(), horizon.ln());
    let times: Vec<f64> = (0..n_grid)
        .map(|i| (lo + (hi - lo) * i as f64 / (n_grid - 1) as f64).exp())
        .collect();
    let family = |label: String, magnitude: Option<f64>| {
        let rates: Vec<Vec<f64>> = samples
            .iter()
            .map(|p| {
                let scale = magnitude.map_or(p.k, |m| p.k * (p.alpha * (m - m0)).exp());
                times.iter().map(|&t| scale * (t / p.c + 1.0).powf(-p.p)).collect()
            })
            .collect();
        let quantiles = if samples.is_empty() {
            vec![[f64::NAN; 3]; times.len()]
        } else {
            (0..times.len())
                .map(|j| {
                    let mut col: Vec<f64> = rates.iter().map(|r| r[j]).collect();
                    col.sort_by(f64::total_cmp);
                    [quantile_sorted(&col, 0.025), quantile_sorted(&col, 0.5), quantile_sorted(&col, 0.975)]
                })
                .collect()
        };
        CurveFamily {
            label,
            magnitude,
            times: times.clone(),
            rates,
            quantiles,
        }
    };
    let mut out = vec![family("omori".into(), None)];
    for &m in magnitudes {
        out.push(family(format!("gt_M{m}"), Some(m)));
    }
    out
}

/// Writes `<label>_samples.csv` and `<label>_quantiles.csv` per family.
pub fn cmd_triggering(
    source: &ParamSource,
    n_samples: usize,
    seed: u64,
    magnitudes: &[f64],
    m0: f64,
    horizon: f64,
    out: &Path,
) -> Result<Vec<CurveFamily>, CliError> {
    if !(horizon > 0.0) {
        return Err(CliError::Config(format!("horizon must be positive, got {horizon}")));
    }
    let samples = source.draw(n_samples, seed);
    let families = triggering_curves(&samples, magnitudes, m0, horizon, 200);
    ensure_dir(out)?;
    for f in &families {
        let mut header = vec!["time".to_string()];
        header.extend((0..samples.len()).map(|i| format!("s{i}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_csv(
            &out.join(format!("{}_samples.csv", f.label)),
            &header,
            f.times.iter().enumerate().map(|(j, t)| {
                let mut row = vec![t.to_string()];
                row.extend(f.rates.iter().map(|r| r[j].to_string()));
                row
            }),
        )?;
        write_csv(
            &out.join(format!("{}_quantiles.csv", f.label)),
            &["time", "q025", "q50", "q975"],
            f.times
                .iter()
                .zip(&f.quantiles)
                .map(|(t, q)| vec![t.to_string(), q[0].to_string(), q[1].to_string(), q[2].to_string()]),
        )?;
    }
    Ok(families)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchPoint {
    pub target: usize,
    pub n_events: usize,
    pub seconds: f64,
    pub iterations: usize,
    pub seed: u64,
}

/// Least-squares slope of `ln seconds` against `ln n_events`.
pub fn power_law_slope(points: &[BenchPoint]) -> f64 {
    let xy: Vec<(f64, f64)> = points
        .iter()
        .map(|p| ((p.n_events as f64).ln(), p.seconds.ln()))
        .collect();
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Simulates catalogues of roughly each target size by scaling the
/// background rate, then times a fit of each. Seeds are searched upward from
/// the configured seed until the count lies within 30% of the target.
pub fn bench(cfg: &RunConfig, sizes: &[usize]) -> Result<Vec<BenchPoint>, CliError> {
    let base = RunConfig {
        seed_events: Vec::new(),
        ..cfg.clone()
    };
    let mut points = Vec::with_capacity(sizes.len());
    for &target in sizes {
        let mut run = base.clone();
        // Triggered events roughly double the background count at the
        // reference parameters.
        run.truth.mu = 0.5 * target as f64 / cfg.domain()?.length();
        let mut found = None;
        for j in 0..200 {
            run.seed = cfg.seed.wrapping_add(j);
            let Ok(sim) = simulate_fixture(&run) else { continue };
            let n = sim.catalog.len() as f64;
            if (n - target as f64).abs() <= 0.3 * target as f64 {
                found = Some(sim.catalog);
                break;
            }
        }
        let cat = found.ok_or_else(|| {
            CliError::Config(format!("no seed gave a catalogue near {target} events"))
        })?;
        let res = fit_catalogue(&cat, &run)?;
        points.push(BenchPoint {
            target,
            n_events: res.n_events,
            seconds: res.elapsed_seconds,
            iterations: res.iterations,
            seed: run.seed,
        });
    }
    Ok(points)
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchSummary {
    pub points: Vec<BenchPoint>,
    pub slope: f64,
}

/// Writes `bench.csv` and `bench_summary.json`.
pub fn cmd_bench(cfg: &RunConfig, sizes: &[usize]) -> Result<BenchSummary, CliError> {
    let points = bench(cfg, sizes)?;
    let summary = BenchSummary {
        slope: power_law_slope(&points),
        points,
    };
    ensure_dir(&cfg.output)?;
    write_csv(
        &cfg.output.join("bench.csv"),
        &["target", "n_events", "seconds", "iterations", "seed"],
        summary.points.iter().map(|p| {
            vec![
                p.target.to_string(),
                p.n_events.to_string(),
                p.seconds.to_string(),
                p.iterations.to_string(),
                p.seed.to_string(),
            ]
        }),
    )?;
    write_json(&cfg.output.join("bench_summary.json"), &summary)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn omori_curve_drops_the_magnitude_term() {
        let p = EtasParams::reference();
        let fams = triggering_curves(&[p], &[4.0, 6.7], 2.5, 1.0, 50);
        assert_eq!(fams.len(), 3);
        let ratio = (p.alpha * (6.7 - 2.5)).exp();
        for j in 0..50 {
            assert!((fams[2].rates[0][j] / fams[0].rates[0][j] - ratio).abs() < 1e-9 * ratio);
        }
        assert!((fams[0].times[49] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantiles_are_ordered() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws = sample_prior(&PriorSpec::default(), 100, &mut rng);
        for f in triggering_curves(&draws, &[4.0], 2.5, 10.0, 30) {
            for q in &f.quantiles {
                assert!(q[0] <= q[1] && q[1] <= q[2] && q[0] >= 0.0);
            }
        }
    }

    #[test]
    fn slope_of_exact_power_law() {
        let pts: Vec<BenchPoint> = [100usize, 400, 1600]
            .iter()
            .map(|&n| BenchPoint {
                target: n,
                n_events: n,
                seconds: 0.01 * (n as f64).powf(1.2),
                iterations: 1,
                seed: 0,
            })
            .collect();
        assert!((power_law_slope(&pts) - 1.2).abs() < 1e-12);
    }
}
