//! Formula constructors for the traffic-disturbance scenarios.
//!
//! Every scenario has the shape `initSafe ∧ roadSector ∧ initialCondition ∧
//! behaviourSV ∧ behaviourPOV`. Rows 1–8 are the main-road scenarios; rows
//! 9–16 and 17–24 repeat them in merge and departure zones.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::road::{RoadNetwork, Zone};
use crate::stl::{atom, ArgKind, AtomKind, AtomRegistry, Formula};
use crate::trace::{front_rear, TimeInterval, Trace};

pub const SCENARIO_COUNT: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    /// How long an RSS violation must last to count as danger.
    pub min_danger: f64,
    /// How long the pair must be safe at the start.
    pub min_safe: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            min_danger: 0.0,
            min_safe: 0.6,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, x) in [("min_danger", self.min_danger), ("min_safe", self.min_safe)] {
            if !(x.is_finite() && x >= 0.0) {
                return Err(format!("{name} must be finite and non-negative, got {x}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SpecVariant {
    #[serde(rename = "ISO34502-STL")]
    Base,
    #[serde(rename = "ISO34502-STL-extA")]
    ExtA,
    #[serde(rename = "ISO34502-STL-ext")]
    Ext,
}

impl SpecVariant {
    pub const ALL: [SpecVariant; 3] = [SpecVariant::Base, SpecVariant::ExtA, SpecVariant::Ext];

    pub fn name(self) -> &'static str {
        match self {
            SpecVariant::Base => "ISO34502-STL",
            SpecVariant::ExtA => "ISO34502-STL-extA",
            SpecVariant::Ext => "ISO34502-STL-ext",
        }
    }
}

impl fmt::Display for SpecVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SpecVariant {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ISO34502-STL" | "base" => Ok(SpecVariant::Base),
            "ISO34502-STL-extA" | "extA" | "exta" => Ok(SpecVariant::ExtA),
            "ISO34502-STL-ext" | "ext" => Ok(SpecVariant::Ext),
            _ => Err(ScenarioError::UnknownVariant(s.to_string())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("scenario index {0} is outside 1..=24")]
    IndexOutOfRange(usize),
    #[error("scenario {index} needs {expected} POV name(s), got {found}")]
    ArityMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("unknown spec set `{0}`")]
    UnknownVariant(String),
    #[error("a spec set needs at least one scenario index")]
    EmptySpecSet,
}

/// A spec variant together with the scenario indices it consists of.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecSet {
    pub variant: SpecVariant,
    pub indices: Vec<usize>,
}

impl SpecSet {
    pub fn new(variant: SpecVariant, mut indices: Vec<usize>) -> Result<Self, ScenarioError> {
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() {
            return Err(ScenarioError::EmptySpecSet);
        }
        if let Some(&i) = indices.iter().find(|&&i| i == 0 || i > SCENARIO_COUNT) {
            return Err(ScenarioError::IndexOutOfRange(i));
        }
        Ok(Self { variant, indices })
    }

    /// The two-vehicle main-road scenarios 1 and 3–8.
    pub fn two_vehicle_main(variant: SpecVariant) -> Self {
        Self {
            variant,
            indices: vec![1, 3, 4, 5, 6, 7, 8],
        }
    }

    pub fn all(variant: SpecVariant) -> Self {
        Self {
            variant,
            indices: (1..=SCENARIO_COUNT).collect(),
        }
    }
}

/// Row of the scenario table (1..=8) an index repeats.
pub fn row_of(index: usize) -> usize {
    (index - 1) % 8 + 1
}

pub fn zone_of(index: usize) -> Zone {
    match (index - 1) / 8 {
        0 => Zone::Main,
        1 => Zone::Merge,
        _ => Zone::Depart,
    }
}

pub fn pov_arity(index: usize) -> usize {
    if row_of(index) == 2 {
        2
    } else {
        1
    }
}

/// Which vehicle's initial lane the lane argument defaults to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaneSource {
    Sv,
    Pov,
}

pub fn default_lane_source(index: usize) -> LaneSource {
    if row_of(index) == 7 {
        LaneSource::Pov
    } else {
        LaneSource::Sv
    }
}

/// Id of the lane `vehicle` occupies at the first sample of `trace`.
pub fn initial_lane(trace: &Trace, road: &RoadNetwork, vehicle: &str) -> Option<String> {
    let track = trace.track(vehicle)?;
    let state = track.states.first().copied().flatten()?;
    road.lane_at(&state, &track.dims).map(|i| road.lanes()[i].id.clone())
}

/// Names used for the vehicles and the lane inside a scenario formula.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Roles {
    pub sv: String,
    pub povs: Vec<String>,
    pub lane: String,
}

impl Roles {
    pub fn pair(sv: &str, pov: &str, lane: &str) -> Self {
        Self {
            sv: sv.into(),
            povs: vec![pov.into()],
            lane: lane.into(),
        }
    }

    pub fn triple(sv: &str, pov1: &str, pov2: &str, lane: &str) -> Self {
        Self {
            sv: sv.into(),
            povs: vec![pov1.into(), pov2.into()],
            lane: lane.into(),
        }
    }

    /// Canonical role names for scenario `index`.
    pub fn canonical(index: usize) -> Self {
        if pov_arity(index) == 2 {
            Self::triple("SV", "POV1", "POV2", "L")
        } else {
            Self::pair("SV", "POV", "L")
        }
    }
}

fn window(hi: f64) -> TimeInterval {
    TimeInterval { lo: 0.0, hi }
}

pub fn at_lane(a: &str, l: &str) -> Formula {
    atom("atLane", &[a, l])
}

pub fn ahead_of(a: &str, b: &str) -> Formula {
    atom("aheadOf", &[a, b])
}

pub fn ahead_of_ext(a: &str, b: &str) -> Formula {
    atom("aheadOf_ext", &[a, b])
}

fn ahead(variant: SpecVariant, a: &str, b: &str) -> Formula {
    match variant {
        SpecVariant::Ext => ahead_of_ext(a, b),
        _ => ahead_of(a, b),
    }
}

pub fn faster_than(a: &str, b: &str) -> Formula {
    atom("fasterThan", &[a, b])
}

pub fn same_lane(a: &str, b: &str, l: &str) -> Formula {
    Formula::and(at_lane(a, l), at_lane(b, l))
}

pub fn in_adj_lanes(a: &str, b: &str, l: &str) -> Formula {
    Formula::and(at_lane(a, l), atom("atAdjLane", &[b, l]))
}

pub fn same_lane3(a: &str, b: &str, c: &str, l: &str) -> Formula {
    Formula::and(same_lane(a, b, l), same_lane(b, c, l))
}

pub fn lane_keep(a: &str, l: &str) -> Formula {
    at_lane(a, l)
}

pub fn leaving_lane(a: &str, l: &str) -> Formula {
    Formula::and(
        at_lane(a, l),
        Formula::finally(TimeInterval::unbounded(), Formula::not(at_lane(a, l))),
    )
}

pub fn entering_lane(a: &str, l: &str) -> Formula {
    Formula::and(
        Formula::not(at_lane(a, l)),
        Formula::finally(TimeInterval::unbounded(), at_lane(a, l)),
    )
}

pub fn rss_violation(a: &str, b: &str) -> Formula {
    Formula::and(
        Formula::or(atom("dangerAhead", &[a, b]), atom("dangerAhead", &[b, a])),
        Formula::or(atom("dangerLeft", &[a, b]), atom("dangerLeft", &[b, a])),
    )
}

pub fn danger(sv: &str, pov: &str, p: &ScenarioParams) -> Formula {
    Formula::globally(window(p.min_danger), rss_violation(sv, pov))
}

pub fn init_safe(sv: &str, pov: &str, p: &ScenarioParams) -> Formula {
    Formula::globally(window(p.min_safe), Formula::not(rss_violation(sv, pov)))
}

pub fn danger_arises(sv: &str, pov: &str, p: &ScenarioParams) -> Formula {
    Formula::finally(
        TimeInterval::unbounded(),
        Formula::and(
            init_safe(sv, pov, p),
            Formula::finally(TimeInterval::unbounded(), danger(sv, pov, p)),
        ),
    )
}

pub fn road_sector(zone: Zone, sv: &str, pov: &str) -> Formula {
    match zone {
        Zone::Main => Formula::and(atom("onMainRoad", &[sv]), atom("onMainRoad", &[pov])),
        Zone::Merge => Formula::or(atom("inMergeZone", &[sv]), atom("inMergeZone", &[pov])),
        Zone::Depart => Formula::or(atom("inDepartZone", &[sv]), atom("inDepartZone", &[pov])),
    }
}

pub fn cut_in(pov: &str, sv: &str, l: &str, p: &ScenarioParams, variant: SpecVariant) -> Formula {
    let completed = match variant {
        SpecVariant::Ext => same_lane(sv, pov, l),
        _ => Formula::and(same_lane(sv, pov, l), ahead_of(sv, pov)),
    };
    Formula::and(
        Formula::not(same_lane(pov, sv, l)),
        Formula::finally(
            TimeInterval::unbounded(),
            Formula::and(danger(sv, pov, p), Formula::finally(window(p.min_danger), completed)),
        ),
    )
}

pub fn cut_out(pov: &str, sv: &str, l: &str, p: &ScenarioParams) -> Formula {
    Formula::and(
        same_lane(pov, sv, l),
        Formula::finally(
            TimeInterval::unbounded(),
            Formula::and(
                danger(pov, sv, p),
                Formula::finally(window(p.min_danger), Formula::not(at_lane(pov, l))),
            ),
        ),
    )
}

pub fn accel(pov: &str, sv: &str, l: &str, variant: SpecVariant) -> Formula {
    let rel = match variant {
        SpecVariant::Base => faster_than(sv, pov),
        _ => Formula::or(faster_than(sv, pov), atom("accelerates", &[pov])),
    };
    Formula::and(rel, lane_keep(pov, l))
}

pub fn decel(pov: &str, sv: &str, l: &str, variant: SpecVariant) -> Formula {
    let rel = match variant {
        SpecVariant::Base => faster_than(pov, sv),
        _ => Formula::or(faster_than(pov, sv), atom("decelerates", &[pov])),
    };
    Formula::and(rel, lane_keep(pov, l))
}

/// `initialCondition ∧ behaviourSV ∧ behaviourPOV` for a table row.
fn disturb(row: usize, v: SpecVariant, r: &Roles, p: &ScenarioParams) -> Formula {
    let until = |a, b| Formula::until(TimeInterval::unbounded(), a, b);
    let (sv, l) = (r.sv.as_str(), r.lane.as_str());
    if row == 2 {
        let (pov1, pov2) = (r.povs[0].as_str(), r.povs[1].as_str());
        let init = Formula::and_all([same_lane3(sv, pov1, pov2, l), ahead(v, sv, pov1), ahead(v, pov1, pov2)]);
        let sv_beh = until(lane_keep(sv, l), Formula::not(same_lane(sv, pov1, l)));
        let pov_beh = Formula::and(
            leaving_lane(pov1, l),
            until(
                lane_keep(pov2, l),
                Formula::and(Formula::not(same_lane(pov2, pov1, l)), danger(sv, pov2, p)),
            ),
        );
        return Formula::and_all([init, sv_beh, pov_beh]);
    }
    let pov = r.povs[0].as_str();
    let same_or_adj = || Formula::or(same_lane(sv, pov, l), in_adj_lanes(sv, pov, l));
    let (init, sv_beh, pov_beh) = match row {
        1 => (
            Formula::True,
            until(lane_keep(sv, l), danger(sv, pov, p)),
            cut_in(pov, sv, l, p, v),
        ),
        3 => (
            Formula::and(ahead(v, pov, sv), same_or_adj()),
            until(lane_keep(sv, l), danger(sv, pov, p)),
            until(accel(pov, sv, l, v), danger(sv, pov, p)),
        ),
        4 => (
            Formula::and(ahead(v, sv, pov), same_or_adj()),
            until(lane_keep(sv, l), danger(sv, pov, p)),
            until(decel(pov, sv, l, v), danger(sv, pov, p)),
        ),
        5 => (Formula::True, leaving_lane(sv, l), cut_in(pov, sv, l, p, v)),
        6 => (Formula::True, leaving_lane(sv, l), cut_out(pov, sv, l, p)),
        7 => (
            ahead(v, pov, sv),
            entering_lane(sv, l),
            until(accel(pov, sv, l, v), danger(sv, pov, p)),
        ),
        8 => (
            Formula::and(same_lane(sv, pov, l), ahead(v, sv, pov)),
            leaving_lane(sv, l),
            until(decel(pov, sv, l, v), danger(sv, pov, p)),
        ),
        _ => unreachable!("rows are 1..=8"),
    };
    Formula::and_all([init, sv_beh, pov_beh])
}

/// The full formula of scenario `index` under `variant`.
pub fn scenario(index: usize, variant: SpecVariant, roles: &Roles, p: &ScenarioParams) -> Result<Formula, ScenarioError> {
    if index == 0 || index > SCENARIO_COUNT {
        return Err(ScenarioError::IndexOutOfRange(index));
    }
    let expected = pov_arity(index);
    if roles.povs.len() != expected {
        return Err(ScenarioError::ArityMismatch {
            index,
            expected,
            found: roles.povs.len(),
        });
    }
    // danger in the three-vehicle row is between SV and the second POV
    let pov = roles.povs.last().unwrap();
    Ok(Formula::and_all([
        init_safe(&roles.sv, pov, p),
        road_sector(zone_of(index), &roles.sv, pov),
        disturb(row_of(index), variant, roles, p),
    ]))
}

#[derive(Debug, Clone, Serialize)]
pub struct CatalogEntry {
    pub index: usize,
    pub variant: SpecVariant,
    pub roles: Vec<String>,
    pub formula: String,
}

/// Every scenario formula with canonical role names.
pub fn catalog(variant: SpecVariant, p: &ScenarioParams) -> Vec<CatalogEntry> {
    (1..=SCENARIO_COUNT)
        .map(|i| {
            let roles = Roles::canonical(i);
            let mut names = vec![roles.sv.clone()];
            names.extend(roles.povs.iter().cloned());
            names.push(roles.lane.clone());
            CatalogEntry {
                index: i,
                variant,
                roles: names,
                formula: scenario(i, variant, &roles, p).expect("canonical roles fit").to_string(),
            }
        })
        .collect()
}

/// Road and vehicle-relation atoms used by the scenario formulas.
pub fn register_atoms(reg: &mut AtomRegistry) {
    let strict = AtomKind::Predicate { strict: true };
    let veh = ArgKind::Vehicle;
    reg.register("atLane", &[veh, ArgKind::Lane], strict, "vehicle occupies a lanelet of the lane", |env, args| {
        let (s, d) = env.vehicle(&args[0])?;
        Some(env.road.lane_margin(args[1].lane(), &s, &d))
    });
    reg.register(
        "atAdjLane",
        &[veh, ArgKind::Lane],
        strict,
        "vehicle occupies a lane adjacent to the lane",
        |env, args| {
            let (s, d) = env.vehicle(&args[0])?;
            Some(
                env.road
                    .adjacent_lanes(args[1].lane())
                    .iter()
                    .map(|&j| env.road.lane_margin(j, &s, &d))
                    .fold(f64::NEG_INFINITY, f64::max),
            )
        },
    );
    for (name, zone) in [("onMainRoad", Zone::Main), ("inMergeZone", Zone::Merge), ("inDepartZone", Zone::Depart)] {
        reg.register(name, &[veh], strict, "vehicle occupies a lanelet of the zone", move |env, args| {
            let (s, d) = env.vehicle(&args[0])?;
            Some(env.road.zone_margin(zone, &s, &d))
        });
    }
    reg.register(
        "aheadOf",
        &[veh, veh],
        AtomKind::Predicate { strict: false },
        "front(a) <= rear(b)",
        |env, args| {
            let (sa, da) = env.vehicle(&args[0])?;
            let (sb, db) = env.vehicle(&args[1])?;
            Some(front_rear(&sb, &db).1 - front_rear(&sa, &da).0)
        },
    );
    reg.register("aheadOf_ext", &[veh, veh], strict, "front(a) < front(b)", |env, args| {
        let (sa, _) = env.vehicle(&args[0])?;
        let (sb, _) = env.vehicle(&args[1])?;
        Some(sb.s - sa.s)
    });
    reg.register("fasterThan", &[veh, veh], strict, "v(a) < v(b)", |env, args| {
        let (sa, _) = env.vehicle(&args[0])?;
        let (sb, _) = env.vehicle(&args[1])?;
        Some(sb.v - sa.v)
    });
    reg.register("accelerates", &[veh], strict, "a(a) > 0", |env, args| {
        env.vehicle(&args[0]).map(|(s, _)| s.a)
    });
    reg.register("decelerates", &[veh], strict, "a(a) < 0", |env, args| {
        env.vehicle(&args[0]).map(|(s, _)| -s.a)
    });
}
