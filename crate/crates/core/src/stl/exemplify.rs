//! Search for a trace satisfying a formula.
//!
//! Each channel of each vehicle is a piecewise-linear function through a
//! fixed number of control points. The search maximises robustness at the
//! start of the trace by random restarts followed by coordinate hill
//! climbing. Failing to find a trace does not mean the formula is
//! unsatisfiable.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::Formula;
use super::atoms::{Bindings, EvalContext, EvalError};
use super::eval::{eval_bool, eval_robust};
use crate::road::RoadNetwork;
use crate::rss::RssParams;
use crate::trace::{Trace, VehicleDims, VehicleState, VehicleTrack};

const MAX_SAMPLES: usize = 100_000;
const MIN_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn is_valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi
    }

    fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelBounds {
    pub s: Bounds,
    pub v: Bounds,
    pub a: Bounds,
    pub d: Bounds,
    pub theta: Bounds,
}

impl Default for ChannelBounds {
    fn default() -> Self {
        Self {
            s: Bounds::new(0.0, 200.0),
            v: Bounds::new(0.0, 40.0),
            a: Bounds::new(-8.0, 5.0),
            d: Bounds::new(0.0, 10.5),
            theta: Bounds::new(0.0, 0.0),
        }
    }
}

impl ChannelBounds {
    fn all(&self) -> [Bounds; 5] {
        [self.s, self.v, self.a, self.d, self.theta]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleTemplate {
    pub id: String,
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default)]
    pub bounds: ChannelBounds,
}

fn default_length() -> f64 {
    4.5
}

fn default_width() -> f64 {
    1.8
}

fn default_control_points() -> usize {
    5
}

/// Shape of the traces the search ranges over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalTemplate {
    pub vehicles: Vec<VehicleTemplate>,
    pub duration: f64,
    pub dt: f64,
    #[serde(default = "default_control_points")]
    pub control_points: usize,
}

impl SignalTemplate {
    pub fn single(id: &str, duration: f64, dt: f64) -> Self {
        Self {
            vehicles: vec![VehicleTemplate {
                id: id.into(),
                length: default_length(),
                width: default_width(),
                bounds: ChannelBounds::default(),
            }],
            duration,
            dt,
            control_points: default_control_points(),
        }
    }

    fn sample_count(&self) -> usize {
        (self.duration / self.dt).round() as usize + 1
    }

    pub fn validate(&self) -> Result<(), ExemplifyError> {
        let bad = |m: String| Err(ExemplifyError::InvalidTemplate(m));
        if self.vehicles.is_empty() {
            return bad("the template has no vehicles".into());
        }
        if !(self.duration.is_finite() && self.duration > 0.0 && self.dt.is_finite() && self.dt > 0.0) {
            return bad("duration and dt must be positive".into());
        }
        if self.sample_count() > MAX_SAMPLES {
            return bad(format!("more than {MAX_SAMPLES} samples"));
        }
        if self.control_points < 2 {
            return bad("at least 2 control points are needed".into());
        }
        let mut ids = HashSet::new();
        for v in &self.vehicles {
            if !ids.insert(v.id.as_str()) {
                return bad(format!("duplicate vehicle `{}`", v.id));
            }
            if !VehicleDims::new(v.length, v.width).is_valid() {
                return bad(format!("vehicle `{}` has invalid dimensions", v.id));
            }
            if v.bounds.all().iter().any(|b| !b.is_valid()) {
                return bad(format!("vehicle `{}` has empty or non-finite bounds", v.id));
            }
            if v.bounds.v.lo < 0.0 {
                return bad(format!("vehicle `{}` allows negative speed", v.id));
            }
        }
        Ok(())
    }

    fn ranges(&self) -> Vec<Bounds> {
        let k = self.control_points;
        self.vehicles
            .iter()
            .flat_map(|v| v.bounds.all())
            .flat_map(|b| std::iter::repeat(b).take(k))
            .collect()
    }

    /// Trace through the given control points (channel-major per vehicle).
    pub fn instantiate(&self, x: &[f64]) -> Trace {
        let n = self.sample_count();
        let k = self.control_points;
        let times: Vec<f64> = (0..n).map(|i| i as f64 * self.dt).collect();
        let hi = times[n - 1];
        let interp = |cps: &[f64], t: f64| {
            let u = t / hi * (k - 1) as f64;
            let j = (u.floor() as usize).min(k - 2);
            let w = u - j as f64;
            cps[j] * (1.0 - w) + cps[j + 1] * w
        };
        let tracks = self
            .vehicles
            .iter()
            .enumerate()
            .map(|(vi, v)| {
                let base = vi * 5 * k;
                let ch = |c: usize| &x[base + c * k..base + (c + 1) * k];
                let states = times
                    .iter()
                    .map(|&t| {
                        Some(VehicleState {
                            s: interp(ch(0), t),
                            v: interp(ch(1), t).max(0.0),
                            a: interp(ch(2), t),
                            d: interp(ch(3), t),
                            theta: interp(ch(4), t),
                        })
                    })
                    .collect();
                VehicleTrack::new(v.id.clone(), VehicleDims::new(v.length, v.width), states)
            })
            .collect();
        Trace::new(times, tracks).expect("template traces are well-formed")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExemplifyConfig {
    pub restarts: usize,
    /// Hill-climbing steps per restart.
    pub steps: usize,
    pub seed: u64,
}

impl Default for ExemplifyConfig {
    fn default() -> Self {
        Self {
            restarts: 20,
            steps: 200,
            seed: 0,
        }
    }
}

impl ExemplifyConfig {
    /// Splits a total evaluation budget over the default number of restarts.
    /// Splits at most `budget` evaluations over the restarts; each restart
    /// spends one on its starting point.
    pub fn with_budget(budget: usize, seed: u64) -> Self {
        let restarts = Self::default().restarts.min(budget.max(1));
        Self {
            restarts,
            steps: (budget / restarts).saturating_sub(1),
            seed,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExemplifyError {
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone)]
pub enum ExemplifyOutcome {
    Found {
        trace: Trace,
        robustness: f64,
        evaluations: usize,
    },
    Failure {
        best_trace: Trace,
        best_robustness: f64,
        evaluations: usize,
        /// The search was stopped before its budget ran out.
        cancelled: bool,
    },
}

impl ExemplifyOutcome {
    pub fn is_found(&self) -> bool {
        matches!(self, ExemplifyOutcome::Found { .. })
    }
}

/// Vehicle names bind to the template ids of the same name.
pub fn exemplify(
    formula: &Formula,
    template: &SignalTemplate,
    road: &RoadNetwork,
    lanes: &BTreeMap<String, String>,
    rss: &RssParams,
    cfg: &ExemplifyConfig,
) -> Result<ExemplifyOutcome, ExemplifyError> {
    exemplify_with_stop(formula, template, road, lanes, rss, cfg, &|| false)
}

/// [`exemplify`] that gives up, with the best trace so far, once `stop`
/// returns true. `stop` is polled before every evaluation.
pub fn exemplify_with_stop(
    formula: &Formula,
    template: &SignalTemplate,
    road: &RoadNetwork,
    lanes: &BTreeMap<String, String>,
    rss: &RssParams,
    cfg: &ExemplifyConfig,
    stop: &dyn Fn() -> bool,
) -> Result<ExemplifyOutcome, ExemplifyError> {
    template.validate()?;
    let bindings = Bindings {
        vehicles: template.vehicles.iter().map(|v| (v.id.clone(), v.id.clone())).collect(),
        lanes: lanes.clone(),
    };
    let ranges = template.ranges();
    let score = |x: &[f64]| -> Result<(f64, Trace), EvalError> {
        let trace = template.instantiate(x);
        let ctx = EvalContext::new(&trace, road, bindings.clone()).with_rss(*rss);
        let r = eval_robust(formula, &ctx, 0.0)?;
        Ok((r, trace))
    };
    let accept = |trace: &Trace, r: f64| -> Result<bool, EvalError> {
        if r <= 0.0 {
            return Ok(false);
        }
        let ctx = EvalContext::new(trace, road, bindings.clone()).with_rss(*rss);
        eval_bool(formula, &ctx, 0.0)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut evaluations = 0;
    let mut best: Option<(f64, Trace)> = None;
    let mut cancelled = false;
    for _ in 0..cfg.restarts.max(1) {
        if best.is_some() && stop() {
            cancelled = true;
            break;
        }
        let mut x: Vec<f64> = ranges
            .iter()
            .map(|b| if b.width() > 0.0 { rng.gen_range(b.lo..=b.hi) } else { b.lo })
            .collect();
        let (mut r, mut trace) = score(&x)?;
        evaluations += 1;
        let mut step = 0.5;
        for _ in 0..cfg.steps {
            if stop() {
                cancelled = true;
                break;
            }
            if accept(&trace, r)? {
                return Ok(ExemplifyOutcome::Found {
                    trace,
                    robustness: r,
                    evaluations,
                });
            }
            let free: Vec<usize> = (0..x.len()).filter(|&i| ranges[i].width() > 0.0).collect();
            if free.is_empty() {
                break;
            }
            let i = free[rng.gen_range(0..free.len())];
            let b = ranges[i];
            let delta = if rng.gen_bool(0.5) { step } else { -step } * b.width();
            let old = x[i];
            x[i] = (old + delta).clamp(b.lo, b.hi);
            let (r2, t2) = score(&x)?;
            evaluations += 1;
            if r2 > r {
                r = r2;
                trace = t2;
            } else {
                x[i] = old;
                step *= 0.5;
                if step < MIN_STEP {
                    step = 0.5;
                }
            }
        }
        if accept(&trace, r)? {
            return Ok(ExemplifyOutcome::Found {
                trace,
                robustness: r,
                evaluations,
            });
        }
        if best.as_ref().map_or(true, |(b, _)| r > *b) {
            best = Some((r, trace));
        }
        if cancelled {
            break;
        }
    }
    let (best_robustness, best_trace) = best.expect("at least one restart ran");
    Ok(ExemplifyOutcome::Failure {
        best_trace,
        best_robustness,
        evaluations,
        cancelled,
    })
}
