//! Random multi-vehicle scenes on the synthetic maps, and checks that one
//! Boolean signal implies another everywhere.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use scenmon_core::road::{RoadNetwork, Zone};
use scenmon_core::scenario::{
    ahead_of, ahead_of_ext, danger, danger_arises, initial_lane, pov_arity, scenario, zone_of, Roles, ScenarioParams,
    SpecVariant, SCENARIO_COUNT,
};
use scenmon_core::stl::{bool_signal, Bindings, EvalContext, Formula, Signal};
use scenmon_core::synth::{self, CAR};
use scenmon_core::trace::{Trace, VehicleState, VehicleTrack};

pub const VEHICLES: [&str; 3] = ["A", "B", "C"];

pub struct Scene {
    pub zone: Zone,
    pub road: RoadNetwork,
    pub trace: Trace,
}

/// Three cars with random speeds, accelerations and lane changes, sampled
/// every 0.2 s for up to 12 s. `C` may enter late or leave early.
pub fn random_scene(rng: &mut ChaCha8Rng) -> Scene {
    let zone = [Zone::Main, Zone::Merge, Zone::Depart][rng.gen_range(0..3)];
    let road = synth::zone_road(zone);
    let n = rng.gen_range(10..=60usize);
    let dt = 0.2;
    let times: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
    let base_s = if zone != Zone::Main && rng.gen_bool(0.3) { 900.0 } else { 50.0 };
    let tracks = VEHICLES
        .iter()
        .map(|&id| {
            let mut s = base_s + rng.gen_range(0.0..80.0);
            let mut v: f64 = rng.gen_range(18.0..32.0);
            let mut lane = rng.gen_range(0..3usize);
            let mut d = synth::lane_centre_d(lane);
            let mut target = d;
            let mut a = 0.0;
            let mut states = Vec::with_capacity(n);
            for _ in 0..n {
                if rng.gen_bool(0.1) {
                    a = rng.gen_range(-4.0..3.0);
                }
                if (d - target).abs() < 1e-9 && rng.gen_bool(0.05) {
                    lane = if lane == 0 { 1 } else if lane == 2 { 1 } else if rng.gen_bool(0.5) { 0 } else { 2 };
                    target = synth::lane_centre_d(lane);
                }
                let vd = (target - d).clamp(-0.8, 0.8);
                states.push(Some(VehicleState {
                    s,
                    v,
                    a,
                    d,
                    theta: (vd / v.max(1.0)).atan(),
                }));
                s += v * dt;
                v = (v + a * dt).max(0.0);
                d += vd;
            }
            if id == "C" {
                let lo = if rng.gen_bool(0.2) { rng.gen_range(0..n / 2) } else { 0 };
                let hi = if rng.gen_bool(0.2) { rng.gen_range(n / 2..n) } else { n };
                for (k, st) in states.iter_mut().enumerate() {
                    if k < lo || k >= hi {
                        *st = None;
                    }
                }
            }
            VehicleTrack::new(id, CAR, states)
        })
        .collect();
    let trace = Trace::new(times, tracks).expect("valid scene");
    Scene { zone, road, trace }
}

/// First point where `a` holds and `b` does not, if any.
pub fn counterexample(a: &Signal<bool>, b: &Signal<bool>) -> Option<f64> {
    let mut ts = a.breakpoints();
    ts.extend(b.breakpoints());
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let mut probes = ts.clone();
    probes.extend(ts.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    probes.sort_by(f64::total_cmp);
    probes
        .into_iter()
        .find(|&t| a.value_at(t) == Some(true) && b.value_at(t) != Some(true))
}

fn signal(f: &Formula, trace: &Trace, road: &RoadNetwork, b: &Bindings) -> Signal<bool> {
    bool_signal(f, &EvalContext::new(trace, road, b.clone())).expect("scenario formulas evaluate")
}

fn implies(name: &str, a: &Signal<bool>, b: &Signal<bool>) -> Result<(), String> {
    match counterexample(a, b) {
        None => Ok(()),
        Some(t) => Err(format!("{name} fails at t = {t}")),
    }
}

/// Role assignments tried on a scene: every ordered pair, and for the
/// three-vehicle row every ordered triple.
fn assignments<'a>(ids: &[&'a str], arity: usize) -> Vec<Vec<&'a str>> {
    let mut out = Vec::new();
    for &a in ids {
        for &b in ids {
            if a == b {
                continue;
            }
            if arity == 1 {
                out.push(vec![a, b]);
                continue;
            }
            for &c in ids {
                if c != a && c != b {
                    out.push(vec![a, b, c]);
                }
            }
        }
    }
    out
}

/// Checks on one scene, for the scenarios of its zone and every role
/// assignment and starting lane:
/// base ⇒ extA ⇒ ext, each variant ⇒ dangerArises, min_danger 0.6 ⇒ 0 for
/// every variant and for danger itself, and aheadOf ⇒ aheadOf_ext. Returns the number of implications checked.
pub fn check_structure(trace: &Trace, road: &RoadNetwork, zone: Zone, p: &ScenarioParams) -> Result<usize, String> {
    let mut checked = 0;
    let strict = ScenarioParams { min_danger: 0.6, ..*p };
    let loose = ScenarioParams { min_danger: 0.0, ..*p };
    let ids: Vec<&str> = trace.vehicle_ids().collect();
    for index in (1..=SCENARIO_COUNT).filter(|&i| zone_of(i) == zone) {
        for names in assignments(&ids, pov_arity(index)) {
            let roles = if names.len() == 3 {
                Roles::triple("SV", "P1", "P2", "L")
            } else {
                Roles::pair("SV", "P1", "L")
            };
            // scenarios can only hold on a lane one of the vehicles starts in
            let mut lanes: Vec<String> = names.iter().filter_map(|v| initial_lane(trace, road, v)).collect();
            lanes.sort();
            lanes.dedup();
            for lane in &lanes {
                let mut bind = Bindings::new().vehicle("SV", names[0]).vehicle("P1", names[1]).lane("L", lane);
                if names.len() == 3 {
                    bind = bind.vehicle("P2", names[2]);
                }
                let sig = |f: Formula| signal(&f, trace, road, &bind);
                let f = |v, p: &ScenarioParams| sig(scenario(index, v, &roles, p).expect("roles fit"));
                let [base, ext_a, ext] = SpecVariant::ALL.map(|v| f(v, p));
                let long = SpecVariant::ALL.map(|v| f(v, &strict));
                let da = sig(danger_arises("SV", roles.povs.last().unwrap(), p));
                let tag = |what: &str| format!("scenario {index} {what} with {names:?} on lane {lane}");
                implies(&tag("base => extA"), &base, &ext_a)?;
                implies(&tag("extA => ext"), &ext_a, &ext)?;
                for (v, phi) in SpecVariant::ALL.iter().zip([&base, &ext_a, &ext]) {
                    implies(&tag(&format!("{v} => dangerArises")), phi, &da)?;
                }
                for (v, (lo, hi)) in SpecVariant::ALL.iter().zip(long.iter().zip([&base, &ext_a, &ext])) {
                    implies(&tag(&format!("{v} min_danger 0.6 => 0")), lo, hi)?;
                }
                checked += 8;
            }
        }
    }
    for pair in assignments(&ids, 1) {
        let bind = Bindings::new().vehicle("X", pair[0]).vehicle("Y", pair[1]);
        let sig = |f: Formula| signal(&f, trace, road, &bind);
        implies("danger(0.6) => danger(0)", &sig(danger("X", "Y", &strict)), &sig(danger("X", "Y", &loose)))?;
        implies("aheadOf => aheadOf_ext", &sig(ahead_of("X", "Y")), &sig(ahead_of_ext("X", "Y")))?;
        checked += 2;
    }
    Ok(checked)
}
