//! Synthetic ETAS catalogues from the branching representation: a Poisson
//! background plus imposed seed events form generation 0, and every event
//! spawns a Poisson number of offspring with Omori-distributed delays.
//!
//! Each parent draws from its own ChaCha substream keyed by `(seed, id)`,
//! so a catalogue does not depend on traversal order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use etas_core::model::{gr_sample, triggered_count};
use etas_core::{Catalog, Error, EtasParams, Event, MagnitudeModel, Result, TimeDomain};

/// Default guard against supercritical cascades.
pub const DEFAULT_MAX_EVENTS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: EtasParams,
    pub dom: TimeDomain,
    pub mag_model: MagnitudeModel,
    /// Imposed generation-0 events as `(time, magnitude)`.
    pub seeds: Vec<(f64, f64)>,
    pub rng_seed: u64,
    pub max_events: usize,
}

impl SimConfig {
    pub fn new(params: EtasParams, dom: TimeDomain, rng_seed: u64) -> Self {
        Self {
            params,
            dom,
            mag_model: MagnitudeModel::standard(dom.m0),
            seeds: Vec::new(),
            rng_seed,
            max_events: DEFAULT_MAX_EVENTS,
        }
    }

    pub fn with_seed_event(mut self, time: f64, magnitude: f64) -> Self {
        self.seeds.push((time, magnitude));
        self
    }

    pub fn check(&self) -> Result<()> {
        self.params.check()?;
        self.dom.check()?;
        for &(t, m) in &self.seeds {
            if !self.dom.contains(t) {
                return Err(Error::InvalidConfig(format!(
                    "seed event at {t} lies outside [{}, {}]",
                    self.dom.t1, self.dom.t2
                )));
            }
            if !(m >= self.dom.m0) {
                return Err(Error::BelowThreshold { m, m0: self.dom.m0 });
            }
        }
        Ok(())
    }
}

/// Genealogy record for one simulated event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub child_id: u64,
    pub parent_id: Option<u64>,
    pub generation: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub catalog: Catalog,
    /// Ordered by `child_id`.
    pub genealogy: Vec<Lineage>,
}

fn draw_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<usize> {
    if !(mean > 0.0) {
        return Ok(0);
    }
    Poisson::new(mean)
        .map(|d| d.sample(rng) as usize)
        .map_err(|_| Error::Numerical(format!("Poisson mean {mean} out of range")))
}

/// Homogeneous Poisson background on `[T1, T2]` with GR magnitudes, sorted
/// by time. Rates too large to sample yield no events.
pub fn simulate_background<R: Rng + ?Sized>(
    mu: f64,
    dom: &TimeDomain,
    mag_model: &MagnitudeModel,
    rng: &mut R,
) -> Vec<(f64, f64)> {
    let n = draw_poisson(mu * dom.length(), rng).unwrap_or(0);
    let mut times: Vec<f64> = (0..n).map(|_| rng.random_range(dom.t1..=dom.t2)).collect();
    times.sort_by(f64::total_cmp);
    times.into_iter().zip(gr_sample(n, mag_model, rng)).collect()
}

/// Delay with CDF proportional to the Omori integral over `(0, lag]`,
/// truncated at `horizon`, for a uniform `u`.
pub fn omori_delay(u: f64, horizon: f64, c: f64, p: f64) -> f64 {
    let one_minus_p = 1.0 - p;
    let d = -(one_minus_p * (horizon / c).ln_1p()).exp_m1();
    let lag = c * ((-u * d).ln_1p() / one_minus_p).exp_m1();
    lag.clamp(f64::MIN_POSITIVE, horizon)
}

/// Direct offspring of `parent` inside `(t_parent, T2]`, sorted by time.
pub fn simulate_offspring<R: Rng + ?Sized>(
    parent: &Event,
    params: &EtasParams,
    dom: &TimeDomain,
    mag_model: &MagnitudeModel,
    rng: &mut R,
) -> Result<Vec<(f64, f64)>> {
    if parent.time >= dom.t2 {
        return Ok(Vec::new());
    }
    let window = TimeDomain {
        t1: parent.time,
        ..*dom
    };
    let n = draw_poisson(triggered_count(parent, &window, params), rng)?;
    let horizon = dom.t2 - parent.time;
    let mut times: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            parent.time + omori_delay(u, horizon, params.c, params.p)
        })
        .collect();
    times.sort_by(f64::total_cmp);
    Ok(times.into_iter().zip(gr_sample(n, mag_model, rng)).collect())
}

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Full branching simulation, generation by generation.
pub fn simulate_catalog(cfg: &SimConfig) -> Result<Simulation> {
    cfg.check()?;
    let mut rng = substream(cfg.rng_seed, 0);
    let mut gen0 = simulate_background(cfg.params.mu, &cfg.dom, &cfg.mag_model, &mut rng);
    gen0.extend(cfg.seeds.iter().copied());
    gen0.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));

    let mut events: Vec<Event> = Vec::new();
    let mut genealogy: Vec<Lineage> = Vec::new();
    let mut push = |time: f64, magnitude: f64, parent_id: Option<u64>, generation: u32, events: &mut Vec<Event>| {
        let id = events.len() as u64;
        events.push(Event::new(time, magnitude, id));
        genealogy.push(Lineage {
            child_id: id,
            parent_id,
            generation,
        });
    };
    for (t, m) in gen0 {
        push(t, m, None, 0, &mut events);
    }
    if events.len() > cfg.max_events {
        return Err(Error::Supercritical { cap: cfg.max_events });
    }

    let mut current = 0..events.len();
    let mut generation = 0;
    while !current.is_empty() {
        generation += 1;
        let start = events.len();
        for idx in current {
            let parent = events[idx];
            let mut prng = substream(cfg.rng_seed, parent.id + 1);
            let children = simulate_offspring(&parent, &cfg.params, &cfg.dom, &cfg.mag_model, &mut prng)?;
            if events.len() + children.len() > cfg.max_events {
                return Err(Error::Supercritical { cap: cfg.max_events });
            }
            for (t, m) in children {
                push(t, m, Some(parent.id), generation, &mut events);
            }
        }
        current = start..events.len();
    }

    Ok(Simulation {
        catalog: Catalog::new(events)?,
        genealogy,
    })
}

/// Rate-dependent completeness `M_c(t) = M_i - G - H log10(t - t_i)` after a
/// large event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncompletenessModel {
    pub g: f64,
    pub h: f64,
}

impl Default for IncompletenessModel {
    fn default() -> Self {
        Self { g: 3.8, h: 1.0 }
    }
}

impl IncompletenessModel {
    pub fn new(g: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) || !g.is_finite() || !h.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "incompleteness needs finite G and H > 0 (G={g}, H={h})"
            )));
        }
        Ok(Self { g, h })
    }

    /// Completeness threshold at lag `t - t_i > 0` after an event of
    /// magnitude `mi`.
    pub fn threshold(&self, mi: f64, lag: f64) -> f64 {
        mi - self.g - self.h * lag.log10()
    }
}

/// Which events raise the completeness threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum IncompletenessScope {
    /// Only the listed mainshocks, given as `(time, magnitude)`.
    Mainshocks(Vec<(f64, f64)>),
    /// Every event at or above the given magnitude.
    AllAbove(f64),
}

/// Drops events recorded below the transient completeness level. Reference
/// mainshocks are always kept, and the threshold never drops below `m0`.
pub fn apply_incompleteness(
    cat: &Catalog,
    model: &IncompletenessModel,
    scope: &IncompletenessScope,
    m0: f64,
) -> Result<Catalog> {
    let refs: Vec<Event> = match scope {
        IncompletenessScope::Mainshocks(list) => {
            let mut out = Vec::with_capacity(list.len());
            for &(t, m) in list {
                let found = cat.iter().find(|e| e.time == t && e.magnitude == m);
                out.push(*found.ok_or(Error::MissingMainshock(t))?);
            }
            out
        }
        IncompletenessScope::AllAbove(mag) => cat.iter().filter(|e| e.magnitude >= *mag).copied().collect(),
    };
    let keep_refs = matches!(scope, IncompletenessScope::Mainshocks(_));
    Ok(cat.filter(|e| {
        if keep_refs && refs.iter().any(|r| r.id == e.id) {
            return true;
        }
        !refs.iter().any(|r| {
            e.time > r.time && {
                let mc = model.threshold(r.magnitude, e.time - r.time).max(m0);
                e.magnitude < mc
            }
        })
    }))
}
