//! Shared test support: random formulas and traces on a time quantum, and a
//! brute-force evaluator over the half-grid of that quantum.
//!
//! Sample times and interval bounds are integer multiples of `Q`, so every
//! subformula is constant on each open quantum gap. Element `h` of the
//! half-grid is the instant `h/2 * Q` when `h` is even and the open gap
//! around `h/2 * Q` when `h` is odd.

#![allow(dead_code)]

pub mod rss_props;
pub mod scenes;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use scenmon_core::road::{straight_road, RoadNetwork, Zone};
use scenmon_core::stl::{Arg, Atom, CmpOp, Comparison, Formula};
use scenmon_core::trace::{TimeInterval, Trace, VehicleDims, VehicleState, VehicleTrack};

pub const Q: f64 = 0.1;

/// A random trace in integer units: sample instants, domain end and the
/// per-vehicle channel values `(v, a, d)` at each sample.
#[derive(Debug, Clone)]
pub struct UnitTrace {
    pub samples: Vec<i64>,
    pub end: i64,
    pub vehicles: Vec<(String, Vec<Option<[f64; 3]>>)>,
}

impl UnitTrace {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let end = rng.gen_range(5..=100);
        let segments = rng.gen_range(1..=20usize);
        let mut samples: Vec<i64> = (0..segments).map(|_| rng.gen_range(1..end)).collect();
        samples.push(0);
        samples.sort_unstable();
        samples.dedup();
        if samples.len() < 2 || rng.gen_bool(0.5) {
            samples.push(end);
            samples.dedup();
        }
        let n = samples.len();
        let mut vehicles = Vec::new();
        for (id, may_vanish) in [("X", false), ("Y", true)] {
            let states = (0..n)
                .map(|_| {
                    if may_vanish && rng.gen_bool(0.2) {
                        None
                    } else {
                        Some([
                            rng.gen_range(0..=4) as f64,
                            rng.gen_range(-2..=2) as f64,
                            rng.gen_range(0..=4) as f64,
                        ])
                    }
                })
                .collect();
            vehicles.push((id.to_string(), states));
        }
        Self { samples, end, vehicles }
    }

    pub fn to_trace(&self) -> Trace {
        let times = self.samples.iter().map(|&k| k as f64 * Q).collect();
        let tracks = self
            .vehicles
            .iter()
            .map(|(id, states)| {
                let states = states
                    .iter()
                    .map(|s| {
                        s.map(|[v, a, d]| VehicleState {
                            s: 0.0,
                            v,
                            a,
                            d,
                            theta: 0.0,
                        })
                    })
                    .collect();
                VehicleTrack::new(id.clone(), VehicleDims::new(4.5, 1.8), states)
            })
            .collect();
        Trace::with_domain_end(times, tracks, self.end as f64 * Q).unwrap()
    }

    /// Channel values of `vehicle` on half-grid element `h`.
    fn channels(&self, vehicle: usize, h: i64) -> Option<[f64; 3]> {
        // the instant h/2 for even h, a point just after (h-1)/2 for odd h
        let unit = h / 2;
        let k = self.samples.partition_point(|&x| x <= unit) - 1;
        self.vehicles[vehicle].1[k]
    }

    pub fn half_len(&self) -> i64 {
        2 * self.end
    }
}

pub fn empty_road() -> RoadNetwork {
    straight_road(&[0.0, 3.5], 0.0, 1.0, Zone::Main, "l").unwrap()
}

fn iv(lo: i64, hi: Option<i64>) -> TimeInterval {
    // dividing keeps the printed bounds short (1.7 rather than 1.7000000000000002)
    let per_second = (1.0 / Q).round();
    TimeInterval::new(lo as f64 / per_second, hi.map_or(f64::INFINITY, |h| h as f64 / per_second)).unwrap()
}

fn random_atom(rng: &mut ChaCha8Rng) -> Formula {
    let vehicle = if rng.gen_bool(0.7) { "X" } else { "Y" };
    let channel = ["v", "a", "d"][rng.gen_range(0..3)];
    let c = rng.gen_range(-1..=4) as f64;
    if rng.gen_bool(0.6) {
        let dir = if rng.gen_bool(0.5) { "gt" } else { "lt" };
        Formula::Atom(Atom::new(
            format!("{channel}_{dir}"),
            vec![Arg::Name(vehicle.into()), Arg::Number(c)],
        ))
    } else {
        let op = [CmpOp::Gt, CmpOp::Ge, CmpOp::Lt, CmpOp::Le][rng.gen_range(0..4)];
        let mut a = Atom::new(channel, vec![Arg::Name(vehicle.into())]);
        a.cmp = Some(Comparison { op, threshold: c });
        Formula::Atom(a)
    }
}

fn random_interval(rng: &mut ChaCha8Rng) -> TimeInterval {
    let lo = rng.gen_range(0..=20);
    let hi = if rng.gen_bool(0.25) {
        None
    } else {
        Some(lo + rng.gen_range(0..=30))
    };
    iv(lo, hi)
}

/// Random formula of the given maximal depth over the channel atoms.
pub fn random_formula(rng: &mut ChaCha8Rng, depth: usize) -> Formula {
    if depth <= 1 || rng.gen_bool(0.2) {
        return match rng.gen_range(0..20) {
            0 => Formula::True,
            1 => Formula::False,
            _ => random_atom(rng),
        };
    }
    let sub = |rng: &mut ChaCha8Rng| random_formula(rng, depth - 1);
    match rng.gen_range(0..7) {
        0 => Formula::not(sub(rng)),
        1 => Formula::and(sub(rng), sub(rng)),
        2 => Formula::or(sub(rng), sub(rng)),
        3 => Formula::globally(random_interval(rng), sub(rng)),
        4 => Formula::finally(random_interval(rng), sub(rng)),
        _ => Formula::until(random_interval(rng), sub(rng), sub(rng)),
    }
}

/// Lattice operations shared by the Boolean and robust oracles.
pub trait Lattice: Copy + PartialEq + std::fmt::Debug {
    const TOP: Self;
    const BOTTOM: Self;
    fn atom(margin: Option<f64>, strict: bool) -> Self;
    fn neg(self) -> Self;
    fn meet(self, o: Self) -> Self;
    fn join(self, o: Self) -> Self;
}

impl Lattice for bool {
    const TOP: bool = true;
    const BOTTOM: bool = false;
    fn atom(margin: Option<f64>, strict: bool) -> bool {
        margin.is_some_and(|m| if strict { m > 0.0 } else { m >= 0.0 })
    }
    fn neg(self) -> bool {
        !self
    }
    fn meet(self, o: bool) -> bool {
        self && o
    }
    fn join(self, o: bool) -> bool {
        self || o
    }
}

impl Lattice for f64 {
    const TOP: f64 = f64::INFINITY;
    const BOTTOM: f64 = f64::NEG_INFINITY;
    fn atom(margin: Option<f64>, _strict: bool) -> f64 {
        margin.unwrap_or(f64::NEG_INFINITY)
    }
    fn neg(self) -> f64 {
        -self
    }
    fn meet(self, o: f64) -> f64 {
        self.min(o)
    }
    fn join(self, o: f64) -> f64 {
        self.max(o)
    }
}

fn atom_margin(trace: &UnitTrace, a: &Atom, h: i64) -> (Option<f64>, bool) {
    let Arg::Name(vehicle) = &a.args[0] else { panic!("vehicle first") };
    let vi = trace.vehicles.iter().position(|(id, _)| id == vehicle).unwrap();
    let ch = |name: &str| match name {
        "v" => 0,
        "a" => 1,
        "d" => 2,
        other => panic!("unknown channel {other}"),
    };
    let values = trace.channels(vi, h);
    if let Some(cmp) = a.cmp {
        let x = values.map(|c| c[ch(&a.name)]);
        let m = x.map(|x| match cmp.op {
            CmpOp::Gt | CmpOp::Ge => x - cmp.threshold,
            CmpOp::Lt | CmpOp::Le => cmp.threshold - x,
        });
        return (m, matches!(cmp.op, CmpOp::Gt | CmpOp::Lt));
    }
    let (channel, dir) = a.name.split_once('_').unwrap();
    let Arg::Number(c) = a.args[1] else { panic!("threshold second") };
    let x = values.map(|v| v[ch(channel)]);
    (x.map(|x| if dir == "gt" { x - c } else { c - x }), true)
}

/// Value of `f` on every half-grid element.
pub fn oracle<L: Lattice>(f: &Formula, trace: &UnitTrace) -> Vec<L> {
    let n = trace.half_len();
    let window = |iv: &TimeInterval, h: i64| -> Option<(i64, i64)> {
        let a = (iv.lo / Q).round() as i64;
        let start = h + 2 * a;
        if start > n {
            return None;
        }
        let end = if iv.hi.is_finite() {
            (h + 2 * (iv.hi / Q).round() as i64).min(n)
        } else {
            n
        };
        Some((start, end))
    };
    match f {
        Formula::True => vec![L::TOP; n as usize + 1],
        Formula::False => vec![L::BOTTOM; n as usize + 1],
        Formula::Atom(a) => (0..=n)
            .map(|h| {
                let (m, strict) = atom_margin(trace, a, h);
                L::atom(m, strict)
            })
            .collect(),
        Formula::Not { arg } => oracle::<L>(arg, trace).into_iter().map(L::neg).collect(),
        Formula::And { lhs, rhs } => oracle::<L>(lhs, trace)
            .into_iter()
            .zip(oracle::<L>(rhs, trace))
            .map(|(x, y)| x.meet(y))
            .collect(),
        Formula::Or { lhs, rhs } => oracle::<L>(lhs, trace)
            .into_iter()
            .zip(oracle::<L>(rhs, trace))
            .map(|(x, y)| x.join(y))
            .collect(),
        Formula::Globally { interval, arg } => {
            let s = oracle::<L>(arg, trace);
            (0..=n)
                .map(|h| match window(interval, h) {
                    None => L::TOP,
                    Some((lo, hi)) => (lo..=hi).fold(L::TOP, |acc, k| acc.meet(s[k as usize])),
                })
                .collect()
        }
        Formula::Finally { interval, arg } => {
            let s = oracle::<L>(arg, trace);
            (0..=n)
                .map(|h| match window(interval, h) {
                    None => L::BOTTOM,
                    Some((lo, hi)) => (lo..=hi).fold(L::BOTTOM, |acc, k| acc.join(s[k as usize])),
                })
                .collect()
        }
        Formula::Until { interval, lhs, rhs } => {
            let s1 = oracle::<L>(lhs, trace);
            let s2 = oracle::<L>(rhs, trace);
            (0..=n)
                .map(|h| match window(interval, h) {
                    None => L::BOTTOM,
                    Some((lo, hi)) => {
                        let mut best = L::BOTTOM;
                        let mut prefix = L::TOP;
                        for k in lo..=hi {
                            let here = s2[k as usize];
                            // inside an open gap the witness may sit at its start only
                            // when the gap is where the window begins
                            let cand = if k % 2 == 1 && k != lo {
                                here.meet(s1[k as usize])
                            } else {
                                here
                            };
                            best = best.join(cand.meet(prefix));
                            prefix = prefix.meet(s1[k as usize]);
                        }
                        best
                    }
                })
                .collect()
        }
    }
}

/// Representative time of half-grid element `h`.
pub fn element_time(h: i64) -> f64 {
    h as f64 * Q / 2.0
}
