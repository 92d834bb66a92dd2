//! Candidate pairs and the dangerArises filter.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::highd::{Direction, Recording, VehicleSeries};
use super::PipelineParams;
use crate::road::RoadNetwork;
use crate::rss::{rss_violation, Footprint};
use crate::scenario::{danger, danger_arises, init_safe, rss_violation as rss_violation_formula};
use crate::stl::{bool_signal, eval_bool, Bindings, EvalContext, EvalError, Formula};
use crate::trace::{front_rear, TimeInterval, Trace};

/// An ordered (SV, POV) pair that violates RSS at least once.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidatePair {
    pub recording: String,
    pub direction: Direction,
    pub sv: String,
    pub pov: String,
    pub first_frame: i64,
    pub last_frame: i64,
    pub window: TimeInterval,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PairScan {
    /// Ordered pairs of co-present vehicles.
    pub scanned: usize,
    pub pairs: Vec<CandidatePair>,
}

fn overlap(a: &VehicleSeries, b: &VehicleSeries) -> Option<(i64, i64)> {
    let lo = a.first_frame.max(b.first_frame);
    let hi = a.last_frame().min(b.last_frame());
    (lo <= hi).then_some((lo, hi))
}

/// Ordered pairs of same-direction vehicles that are co-present and violate
/// RSS in at least one shared frame. Both orders are emitted.
pub fn enumerate_pairs(rec: &Recording, params: &PipelineParams) -> PairScan {
    let mut scan = PairScan::default();
    for dir in &rec.directions {
        let vs = &dir.vehicles;
        for i in 0..vs.len() {
            for j in i + 1..vs.len() {
                let Some((lo, hi)) = overlap(&vs[i], &vs[j]) else {
                    continue;
                };
                scan.scanned += 2;
                let violates = (lo..=hi).any(|f| {
                    let a = Footprint::new(vs[i].state_at(f).unwrap(), vs[i].dims);
                    let b = Footprint::new(vs[j].state_at(f).unwrap(), vs[j].dims);
                    rss_violation(&a, &b, &params.rss, params.convention)
                });
                if !violates {
                    continue;
                }
                let window = TimeInterval {
                    lo: rec.time_of(lo),
                    hi: rec.time_of(hi),
                };
                for (sv, pov) in [(i, j), (j, i)] {
                    scan.pairs.push(CandidatePair {
                        recording: rec.id.clone(),
                        direction: dir.direction,
                        sv: vs[sv].id.clone(),
                        pov: vs[pov].id.clone(),
                        first_frame: lo,
                        last_frame: hi,
                        window,
                    });
                }
            }
        }
    }
    scan
}

/// A trimmed trace that passes the dangerArises filter.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbTrace {
    pub recording: String,
    pub direction: Direction,
    pub sv: String,
    pub pov: String,
    /// Vehicles that may play the first POV of the three-vehicle row.
    pub pov1_candidates: Vec<String>,
    /// Name of the map in `road`.
    pub map: String,
    pub road: Arc<RoadNetwork>,
    pub trace: Trace,
}

impl DisturbTrace {
    /// Stable identifier `recording-direction-sv-pov`.
    pub fn key(&self) -> String {
        format!("{}-{}-{}-{}", self.recording, self.direction.name(), self.sv, self.pov)
    }

    pub fn bindings(&self) -> Bindings {
        Bindings::new().vehicle("SV", &self.sv).vehicle("POV", &self.pov)
    }
}

pub fn map_name(recording: &str, direction: Direction) -> String {
    format!("{recording}-{}", direction.name())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FilterStats {
    pub candidates: usize,
    pub kept: usize,
    /// dangerArises is false at the start of the pair's window.
    pub dropped_no_danger: usize,
    /// dangerArises no longer holds once the trace is trimmed.
    pub dropped_after_trim: usize,
}

impl FilterStats {
    pub fn merge(&mut self, other: &FilterStats) {
        self.candidates += other.candidates;
        self.kept += other.kept;
        self.dropped_no_danger += other.dropped_no_danger;
        self.dropped_after_trim += other.dropped_after_trim;
    }
}

enum Outcome {
    Kept(DisturbTrace),
    NoDanger,
    LostAfterTrim,
}

/// Trim window of a two-vehicle trace whose roles are bound as `SV`/`POV`:
/// from the first time `initSafe ∧ F danger` holds to the end of the last
/// RSS violation on the sample grid. `None` when dangerArises fails.
pub fn trim_window(ctx: &EvalContext<'_>, params: &PipelineParams) -> Result<Option<TimeInterval>, EvalError> {
    let p = &params.scenario;
    let start_formula = Formula::and(
        init_safe("SV", "POV", p),
        Formula::finally(TimeInterval::unbounded(), danger("SV", "POV", p)),
    );
    let Some(&(start, _)) = bool_signal(&start_formula, ctx)?.true_intervals().first() else {
        return Ok(None);
    };
    // snap onto the sample grid so the trimmed trace keeps the original times
    let times = ctx.trace.times();
    let start = ctx.trace.sample_index(start).map_or(start, |k| times[k]);
    let violation = bool_signal(&rss_violation_formula("SV", "POV"), ctx)?;
    let Some(last) = times.iter().rposition(|&t| violation.value_at(t) == Some(true)) else {
        return Ok(None);
    };
    let end = times.get(last + 1).copied().unwrap_or(ctx.trace.domain().hi);
    if end <= start {
        return Ok(None);
    }
    Ok(Some(TimeInterval { lo: start, hi: end }))
}

fn context<'a>(trace: &'a Trace, road: &'a RoadNetwork, bindings: Bindings, params: &PipelineParams) -> EvalContext<'a> {
    EvalContext::new(trace, road, bindings)
        .with_rss(params.rss)
        .with_mode(params.mode)
        .with_convention(params.convention)
}

/// Vehicles ahead of SV and behind POV in SV's lane at frame `frame`.
fn pov1_candidates<'a>(
    vehicles: &'a [VehicleSeries],
    road: &RoadNetwork,
    sv: &VehicleSeries,
    pov: &VehicleSeries,
    frame: i64,
) -> Vec<&'a VehicleSeries> {
    let (Some(s_sv), Some(s_pov)) = (sv.state_at(frame), pov.state_at(frame)) else {
        return Vec::new();
    };
    let Some(lane) = road.lane_at(&s_sv, &sv.dims) else {
        return Vec::new();
    };
    let (front_sv, _) = front_rear(&s_sv, &sv.dims);
    let (front_pov, _) = front_rear(&s_pov, &pov.dims);
    vehicles
        .iter()
        .filter(|v| v.id != sv.id && v.id != pov.id)
        .filter(|v| {
            v.state_at(frame).is_some_and(|st| {
                let (front, _) = front_rear(&st, &v.dims);
                front > front_sv && front < front_pov && road.at_lane(lane, &st, &v.dims)
            })
        })
        .collect()
}

fn filter_pair(rec: &Recording, pair: &CandidatePair, roads: &[Arc<RoadNetwork>], params: &PipelineParams) -> Result<Outcome, EvalError> {
    let di = rec
        .directions
        .iter()
        .position(|d| d.direction == pair.direction)
        .expect("pair direction exists");
    let data = &rec.directions[di];
    let road = &roads[di];
    let find = |id: &str| data.vehicles.iter().find(|v| v.id == id).expect("pair vehicle exists");
    let (sv, pov) = (find(&pair.sv), find(&pair.pov));
    let Some(trace) = rec.window_trace(&[sv, pov], pair.first_frame, pair.last_frame) else {
        return Ok(Outcome::NoDanger);
    };
    let bindings = Bindings::new().vehicle("SV", &sv.id).vehicle("POV", &pov.id);
    let ctx = context(&trace, road, bindings.clone(), params);
    let arises = danger_arises("SV", "POV", &params.scenario);
    if !eval_bool(&arises, &ctx, trace.domain().lo)? {
        return Ok(Outcome::NoDanger);
    }
    let Some(window) = trim_window(&ctx, params)? else {
        return Ok(Outcome::NoDanger);
    };
    let first = (window.lo * rec.frame_rate).round() as i64;
    let mut vehicles = vec![sv, pov];
    let mut pov1 = Vec::new();
    if params.three_vehicle {
        for c in pov1_candidates(&data.vehicles, road, sv, pov, first) {
            pov1.push(c.id.clone());
            vehicles.push(c);
        }
    }
    let full = rec
        .window_trace(&vehicles, pair.first_frame, pair.last_frame)
        .expect("window already evaluated");
    let Ok(trimmed) = full.trim_with(window, params.mode) else {
        return Ok(Outcome::LostAfterTrim);
    };
    let ctx = context(&trimmed, road, bindings, params);
    if !eval_bool(&arises, &ctx, trimmed.domain().lo)? {
        return Ok(Outcome::LostAfterTrim);
    }
    Ok(Outcome::Kept(DisturbTrace {
        recording: rec.id.clone(),
        direction: pair.direction,
        sv: sv.id.clone(),
        pov: pov.id.clone(),
        pov1_candidates: pov1,
        map: map_name(&rec.id, pair.direction),
        road: road.clone(),
        trace: trimmed,
    }))
}

/// Keeps the pairs whose trace satisfies dangerArises at its start, trimmed
/// to the span between the onset of initial safety and the end of the last
/// violation. Other vehicles are dropped except, in three-vehicle mode, the
/// candidates for the first POV.
pub fn filter_and_trim(
    rec: &Recording,
    pairs: &[CandidatePair],
    params: &PipelineParams,
) -> Result<(Vec<DisturbTrace>, FilterStats), EvalError> {
    let roads: Vec<Arc<RoadNetwork>> = rec.directions.iter().map(|d| Arc::new(d.road.clone())).collect();
    let outcomes = pairs
        .par_iter()
        .map(|pair| filter_pair(rec, pair, &roads, params))
        .collect::<Result<Vec<_>, _>>()?;
    let mut stats = FilterStats {
        candidates: pairs.len(),
        ..FilterStats::default()
    };
    let mut kept = Vec::new();
    for o in outcomes {
        match o {
            Outcome::Kept(t) => kept.push(t),
            Outcome::NoDanger => stats.dropped_no_danger += 1,
            Outcome::LostAfterTrim => stats.dropped_after_trim += 1,
        }
    }
    stats.kept = kept.len();
    Ok((kept, stats))
}
