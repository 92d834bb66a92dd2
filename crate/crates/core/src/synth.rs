//! Parametric generator of disturbance traces with a known scenario label.
//!
//! Every generated trace starts safe, becomes dangerous, and realises the
//! behaviour of exactly the row it was drawn for. Vehicles are 4.5 m by
//! 1.8 m on a three-lane road with 3.5 m lanes; lane `k` (from the right)
//! holds a centred vehicle at `d = 3.5 k + 2.65`.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::road::{build_lanes, straight_road, LaneAttr, Lanelet, RoadNetwork, Zone};
use crate::rss::{d_rss_lon, RssParams};
use crate::scenario::{default_lane_source, initial_lane, pov_arity, row_of, zone_of, LaneSource, Roles};
use crate::stl::Bindings;
use crate::trace::{Trace, VehicleDims, VehicleState, VehicleTrack};

pub const LANE_WIDTH: f64 = 3.5;
pub const DT: f64 = 0.04;
pub const CAR: VehicleDims = VehicleDims {
    length: 4.5,
    width: 1.8,
};

const BOUNDARIES: [f64; 4] = [0.0, 3.5, 7.0, 10.5];
const ROAD_START: f64 = -200.0;
const ZONE_END: f64 = 1000.0;
const ROAD_END: f64 = 2000.0;

/// Left-edge offset of a car centred in lane `k` (0 = rightmost).
pub fn lane_centre_d(k: usize) -> f64 {
    LANE_WIDTH * k as f64 + (LANE_WIDTH + CAR.width) / 2.0
}

pub fn main_road() -> RoadNetwork {
    straight_road(&BOUNDARIES, ROAD_START, ROAD_END, Zone::Main, "l").expect("static map")
}

/// Three lanes whose upstream part is a merge or departure zone. The
/// rightmost lane is the merging (or departing) lane and ends with the zone;
/// the two through lanes continue as main road.
pub fn zone_road(zone: Zone) -> RoadNetwork {
    let (prefix, attr) = match zone {
        Zone::Merge => ("m", LaneAttr::Merge),
        Zone::Depart => ("x", LaneAttr::Departure),
        Zone::Main => return main_road(),
    };
    let lanelet = |id: String, zone, attr, s: (f64, f64), k: usize, pred: Option<String>, succ: Option<String>| Lanelet {
        id,
        zone,
        attr,
        s_min: s.0,
        s_max: s.1,
        d_right: BOUNDARIES[k],
        d_left: BOUNDARIES[k + 1],
        pred,
        succ,
    };
    let mut lanelets = vec![lanelet(format!("{prefix}1"), zone, attr, (ROAD_START, ZONE_END), 0, None, None)];
    for k in 1..3 {
        let head = format!("{prefix}{}", k + 1);
        let tail = format!("{head}b");
        lanelets.push(lanelet(head.clone(), zone, LaneAttr::Main, (ROAD_START, ZONE_END), k, None, Some(tail.clone())));
        lanelets.push(lanelet(tail, Zone::Main, LaneAttr::Main, (ZONE_END, ROAD_END), k, Some(head), None));
    }
    build_lanes(lanelets).expect("static map")
}

/// Map on which scenario `index` is generated.
pub fn road_for(index: usize) -> RoadNetwork {
    zone_road(zone_of(index))
}

/// A smooth lateral move to `to` over `[start, start + duration]`.
#[derive(Debug, Clone, Copy)]
struct Shift {
    start: f64,
    duration: f64,
    to: f64,
}

#[derive(Debug, Clone)]
struct Plan {
    id: &'static str,
    s0: f64,
    v0: f64,
    /// `(from, acceleration)`: constant acceleration from `from` on.
    accel: Option<(f64, f64)>,
    d0: f64,
    shifts: Vec<Shift>,
}

impl Plan {
    fn new(id: &'static str, s0: f64, v0: f64, lane: usize) -> Self {
        Self {
            id,
            s0,
            v0,
            accel: None,
            d0: lane_centre_d(lane),
            shifts: Vec::new(),
        }
    }

    fn shift(mut self, start: f64, duration: f64, lane: usize) -> Self {
        self.shifts.push(Shift {
            start: start.max(0.0),
            duration,
            to: lane_centre_d(lane),
        });
        self
    }

    fn accelerate(mut self, from: f64, a: f64) -> Self {
        self.accel = Some((from, a));
        self
    }

    /// Lateral offset and lateral velocity at `t`.
    fn lateral(&self, t: f64) -> (f64, f64) {
        let mut d = self.d0;
        let mut vd = 0.0;
        for sh in &self.shifts {
            let from = d;
            if t >= sh.start + sh.duration {
                d = sh.to;
            } else if t > sh.start {
                let u = (t - sh.start) / sh.duration;
                d = from + (sh.to - from) * (1.0 - (PI * u).cos()) / 2.0;
                vd = (sh.to - from) * PI / (2.0 * sh.duration) * (PI * u).sin();
                break;
            } else {
                break;
            }
        }
        (d, vd)
    }

    fn track(&self, times: &[f64]) -> VehicleTrack {
        let mut s = self.s0;
        let mut v = self.v0;
        let mut prev_t = times[0];
        let states = times
            .iter()
            .map(|&t| {
                let a = match self.accel {
                    Some((from, a)) if t >= from && v + a * DT > 0.5 => a,
                    _ => 0.0,
                };
                let h = t - prev_t;
                s += v * h;
                v = (v + a * h).max(0.5);
                prev_t = t;
                let (d, vd) = self.lateral(t);
                Some(VehicleState {
                    s,
                    v: v.hypot(vd),
                    a,
                    d,
                    theta: vd.atan2(v),
                })
            })
            .collect();
        VehicleTrack::new(self.id, CAR, states)
    }
}

/// A generated trace with the roles it was built for.
#[derive(Debug, Clone)]
pub struct SynthCase {
    pub index: usize,
    pub trace: Trace,
    /// Vehicle names as they appear in the trace (`SV`, `POV` or `POV1`/`POV2`).
    pub roles: Roles,
}

impl SynthCase {
    /// Bindings of the role names to the vehicles, with the lane argument
    /// resolved from the initial lane of the vehicle that defines it.
    pub fn bindings(&self, road: &RoadNetwork) -> Option<Bindings> {
        let lane_vehicle = match default_lane_source(self.index) {
            LaneSource::Sv => &self.roles.sv,
            LaneSource::Pov => &self.roles.povs[0],
        };
        let lane = initial_lane(&self.trace, road, lane_vehicle)?;
        let mut b = Bindings::new().vehicle(&self.roles.sv, &self.roles.sv);
        for p in &self.roles.povs {
            b = b.vehicle(p, p);
        }
        Some(b.lane(&self.roles.lane, &lane))
    }

    /// The (SV, danger partner) pair.
    pub fn danger_pair(&self) -> (&str, &str) {
        (&self.roles.sv, self.roles.povs.last().unwrap())
    }
}

fn sample_times(duration: f64) -> Vec<f64> {
    let n = (duration / DT).round() as usize;
    (0..=n).map(|k| k as f64 * DT).collect()
}

/// Side lane (0 or 2) next to the middle lane.
fn side(rng: &mut ChaCha8Rng) -> usize {
    if rng.gen_bool(0.5) {
        0
    } else {
        2
    }
}

/// Gap between fronts (`s_front - s_rear`) at which the rear vehicle enters
/// the longitudinal RSS distance.
fn rss_gap(v_rear: f64, v_front: f64) -> f64 {
    CAR.length + d_rss_lon(v_rear, v_front, &RssParams::default())
}

/// Draws one trace of scenario `index` (1..=24) from `seed`.
pub fn generate(index: usize, seed: u64) -> SynthCase {
    assert!((1..=24).contains(&index), "scenario index {index} out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let rng = &mut rng;
    let s_sv = rng.gen_range(50.0..150.0);
    let (plans, duration) = match row_of(index) {
        1 | 5 => {
            // POV cuts in from a side lane, a little slower than SV
            let v_sv = rng.gen_range(22.0..30.0);
            let v_pov = v_sv - rng.gen_range(0.0..2.0);
            let from = side(rng);
            let start = rng.gen_range(1.0..3.0);
            let dur = rng.gen_range(2.0..4.0);
            let pov = Plan::new("POV", s_sv + rng.gen_range(15.0..35.0), v_pov, from).shift(start, dur, 1);
            let mut sv = Plan::new("SV", s_sv, v_sv, 1);
            if row_of(index) == 5 {
                sv = sv.shift(start + dur + rng.gen_range(0.5..1.5), rng.gen_range(2.0..3.0), 2 - from);
            }
            (vec![sv, pov], 12.0)
        }
        2 => {
            // POV1 leaves the lane and reveals a much slower POV2
            let v_sv = rng.gen_range(24.0..30.0);
            let v2 = v_sv - rng.gen_range(10.0..16.0);
            let gap2 = rss_gap(v_sv, v2) + rng.gen_range(12.0..25.0);
            let collide = gap2 / (v_sv - v2);
            let pov1 = Plan::new("POV1", s_sv + rng.gen_range(20.0..35.0), v_sv, 1).shift(
                rng.gen_range(0.0..1.0),
                rng.gen_range(1.5..2.5),
                side(rng),
            );
            let sv = Plan::new("SV", s_sv, v_sv, 1);
            let pov2 = Plan::new("POV2", s_sv + gap2, v2, 1);
            (vec![sv, pov1, pov2], (collide - 0.3).min(8.0))
        }
        3 => {
            // a faster POV closes in from behind in SV's lane
            let v_sv = rng.gen_range(18.0..26.0);
            let v_pov = v_sv + rng.gen_range(4.0..10.0);
            let gap = rss_gap(v_pov, v_sv) + rng.gen_range(10.0..25.0);
            let pov = Plan::new("POV", s_sv - gap, v_pov, 1).accelerate(0.0, rng.gen_range(0.0..1.0));
            (vec![Plan::new("SV", s_sv, v_sv, 1), pov], 10.0)
        }
        4 | 8 => {
            // SV closes in on a slower POV ahead
            let v_pov = rng.gen_range(15.0..24.0);
            let v_sv = v_pov + rng.gen_range(4.0..10.0);
            let margin = rng.gen_range(10.0..25.0);
            let gap = rss_gap(v_sv, v_pov) + margin;
            let danger_at = margin / (v_sv - v_pov);
            let pov = Plan::new("POV", s_sv + gap, v_pov, 1).accelerate(0.0, -rng.gen_range(0.0..1.0));
            let mut sv = Plan::new("SV", s_sv, v_sv, 1);
            if row_of(index) == 8 {
                sv = sv.shift(danger_at + rng.gen_range(0.5..1.5), rng.gen_range(2.0..3.0), side(rng));
            }
            (vec![sv, pov], 12.0)
        }
        6 => {
            // a slower POV ahead leaves SV's lane while SV is too close
            let v_sv = rng.gen_range(22.0..30.0);
            let v_pov = v_sv - rng.gen_range(4.0..8.0);
            let margin = rng.gen_range(8.0..15.0);
            let gap = rss_gap(v_sv, v_pov) + margin;
            let danger_at = margin / (v_sv - v_pov);
            let dur = rng.gen_range(2.5..3.5);
            // the POV footprint clears the lane about two thirds into the move
            let exit = danger_at + rng.gen_range(0.2..1.0);
            let to = side(rng);
            let pov = Plan::new("POV", s_sv + gap, v_pov, 1).shift(exit - 0.7 * dur, dur, to);
            let sv = Plan::new("SV", s_sv, v_sv, 1).shift(exit + rng.gen_range(1.0..2.0), 2.5, 2 - to);
            (vec![sv, pov], 12.0)
        }
        7 => {
            // SV moves into the lane of a faster POV behind it
            let v_pov = rng.gen_range(22.0..30.0);
            let v_sv = v_pov - rng.gen_range(2.0..6.0);
            let start = rng.gen_range(1.0..3.0);
            let dur = rng.gen_range(2.0..3.5);
            let gap = (v_pov - v_sv) * (start + dur) + rng.gen_range(10.0..25.0);
            let sv = Plan::new("SV", s_sv, v_sv, side(rng)).shift(start, dur, 1);
            (vec![sv, Plan::new("POV", s_sv - gap, v_pov, 1)], 10.0)
        }
        _ => unreachable!(),
    };
    let times = sample_times(duration);
    let tracks = plans.iter().map(|p| p.track(&times)).collect();
    let trace = Trace::new(times, tracks).expect("generated trace is well-formed");
    let roles = if pov_arity(index) == 2 {
        Roles::triple("SV", "POV1", "POV2", "L")
    } else {
        Roles::pair("SV", "POV", "L")
    };
    SynthCase { index, trace, roles }
}
