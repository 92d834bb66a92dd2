//! RSS safe distances and the instantaneous danger predicates built on them.

use serde::{Deserialize, Serialize};

use crate::stl::{ArgKind, AtomKind, AtomRegistry};
use crate::trace::{longitudinal_lateral_velocity, AngleConvention, VehicleDims, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RssParams {
    /// Reaction time in seconds.
    pub rho: f64,
    pub a_max: f64,
    /// Comfortable braking of the rear vehicle.
    pub b_min: f64,
    /// Maximal braking of the front vehicle.
    pub b_max: f64,
    pub a_max_lat: f64,
    pub b_min_lat: f64,
}

impl Default for RssParams {
    fn default() -> Self {
        Self {
            rho: 0.6,
            a_max: 5.0,
            b_min: 6.0,
            b_max: 8.0,
            a_max_lat: 1.5,
            b_min_lat: 1.5,
        }
    }
}

impl RssParams {
    pub fn validate(&self) -> Result<(), String> {
        let all = [self.rho, self.a_max, self.b_min, self.b_max, self.a_max_lat, self.b_min_lat];
        if all.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err("RSS parameters must be finite and positive".into());
        }
        if self.b_min > self.b_max {
            return Err(format!("b_min ({}) exceeds b_max ({})", self.b_min, self.b_max));
        }
        Ok(())
    }
}

/// Longitudinal safe distance between a rear vehicle at `v_r` and a front
/// vehicle at `v_f`.
pub fn d_rss_lon(v_r: f64, v_f: f64, p: &RssParams) -> f64 {
    let rho = p.rho;
    let d = v_r * rho + p.a_max * rho * rho / 2.0 + (v_r + p.a_max * rho).powi(2) / (2.0 * p.b_min)
        - v_f * v_f / (2.0 * p.b_max);
    d.max(0.0)
}

/// Lateral safe distance; vehicle 1 is to the left of vehicle 2 and the
/// velocities are lateral.
pub fn d_rss_lat(v1: f64, v2: f64, p: &RssParams) -> f64 {
    let rho = p.rho;
    let a = p.a_max_lat;
    let d = (v1 - v2) * rho + a * rho * rho + ((v1 + rho * a).powi(2) + (v2 - rho * a).powi(2)) / (2.0 * p.b_min_lat);
    d.max(0.0)
}

/// A vehicle at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    pub state: VehicleState,
    pub dims: VehicleDims,
}

impl Footprint {
    pub fn new(state: VehicleState, dims: VehicleDims) -> Self {
        Self { state, dims }
    }
}

/// Margin of `0 <= s_b - s_a <= length(b) + dRSS_lon(v_lon_a, v_lon_b)`;
/// non-negative iff `b` is ahead of `a` within the safe distance.
pub fn danger_ahead_margin(a: &Footprint, b: &Footprint, p: &RssParams, conv: AngleConvention) -> f64 {
    let gap = b.state.s - a.state.s;
    let va = longitudinal_lateral_velocity(&a.state, conv).0;
    let vb = longitudinal_lateral_velocity(&b.state, conv).0;
    gap.min(b.dims.length + d_rss_lon(va, vb, p) - gap)
}

/// Margin of `0 <= d_b - d_a <= width(b) + dRSS_lat(v_lat_b, v_lat_a)`.
pub fn danger_left_margin(a: &Footprint, b: &Footprint, p: &RssParams, conv: AngleConvention) -> f64 {
    let gap = b.state.d - a.state.d;
    let va = longitudinal_lateral_velocity(&a.state, conv).1;
    let vb = longitudinal_lateral_velocity(&b.state, conv).1;
    gap.min(b.dims.width + d_rss_lat(vb, va, p) - gap)
}

pub fn danger_ahead(a: &Footprint, b: &Footprint, p: &RssParams, conv: AngleConvention) -> bool {
    danger_ahead_margin(a, b, p, conv) >= 0.0
}

pub fn danger_left(a: &Footprint, b: &Footprint, p: &RssParams, conv: AngleConvention) -> bool {
    danger_left_margin(a, b, p, conv) >= 0.0
}

pub fn rss_violation_lon(a: &Footprint, b: &Footprint, p: &RssParams, conv: AngleConvention) -> bool {
    danger_ahead(a, b, p, conv) || danger_ahead(b, a, p, conv)
}

pub fn rss_violation_lat(a: &Footprint, b: &Footprint, p: &RssParams, conv: AngleConvention) -> bool {
    danger_left(a, b, p, conv) || danger_left(b, a, p, conv)
}

pub fn rss_violation(a: &Footprint, b: &Footprint, p: &RssParams, conv: AngleConvention) -> bool {
    rss_violation_lon(a, b, p, conv) && rss_violation_lat(a, b, p, conv)
}

fn recip(x: f64) -> f64 {
    if x == 0.0 {
        f64::INFINITY
    } else {
        1.0 / x
    }
}

/// Reciprocal form of [`danger_ahead_margin`]: same sign, but the margin
/// keeps shrinking as the gap grows instead of peaking mid-range.
pub fn danger_ahead_rs(a: &Footprint, b: &Footprint, p: &RssParams, conv: AngleConvention) -> f64 {
    let inv_gap = recip(b.state.s - a.state.s);
    let va = longitudinal_lateral_velocity(&a.state, conv).0;
    let vb = longitudinal_lateral_velocity(&b.state, conv).0;
    let inv_safe = recip(b.dims.length + d_rss_lon(va, vb, p));
    inv_gap.min(inv_gap - inv_safe)
}

pub fn danger_left_rs(a: &Footprint, b: &Footprint, p: &RssParams, conv: AngleConvention) -> f64 {
    let inv_gap = recip(b.state.d - a.state.d);
    let va = longitudinal_lateral_velocity(&a.state, conv).1;
    let vb = longitudinal_lateral_velocity(&b.state, conv).1;
    let inv_safe = recip(b.dims.width + d_rss_lat(vb, va, p));
    inv_gap.min(inv_gap - inv_safe)
}

type PairMargin = fn(&Footprint, &Footprint, &RssParams, AngleConvention) -> f64;

pub fn register_atoms(reg: &mut AtomRegistry) {
    let atoms: [(&str, &str, PairMargin); 4] = [
        ("dangerAhead", "b ahead of a within the longitudinal RSS distance", danger_ahead_margin),
        ("dangerLeft", "b left of a within the lateral RSS distance", danger_left_margin),
        ("dangerAhead_rs", "dangerAhead with reciprocal robustness", danger_ahead_rs),
        ("dangerLeft_rs", "dangerLeft with reciprocal robustness", danger_left_rs),
    ];
    for (name, doc, f) in atoms {
        reg.register(
            name,
            &[ArgKind::Vehicle, ArgKind::Vehicle],
            AtomKind::Predicate { strict: false },
            doc,
            move |env, args| {
                let (sa, da) = env.vehicle(&args[0])?;
                let (sb, db) = env.vehicle(&args[1])?;
                Some(f(&Footprint::new(sa, da), &Footprint::new(sb, db), env.rss, env.convention))
            },
        );
    }
}
