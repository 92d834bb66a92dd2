//! Named atomic predicates and the context formulas are evaluated in.
//!
//! An atom is a real-valued function of the vehicle states at one instant.
//! Predicates hold when their margin is positive (or non-negative for
//! non-strict predicates); terms are raw quantities that only appear inside
//! comparisons such as `v(SV) > 5`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use super::ast::{Arg, Atom, CmpOp};
use crate::road::RoadNetwork;
use crate::rss::RssParams;
use crate::scenario::ScenarioParams;
use crate::trace::{AngleConvention, InterpolationMode, Trace, TraceError, VehicleDims, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgKind {
    Vehicle,
    Lane,
    Number,
}

impl fmt::Display for ArgKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArgKind::Vehicle => "vehicle",
            ArgKind::Lane => "lane",
            ArgKind::Number => "number",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AtomKind {
    /// Holds iff margin > 0 (strict) or margin >= 0.
    Predicate { strict: bool },
    /// A raw quantity usable only on the left of a comparison.
    Term,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resolved {
    Vehicle(usize),
    Lane(usize),
    Number(f64),
}

impl Resolved {
    pub fn vehicle(&self) -> usize {
        match self {
            Resolved::Vehicle(i) => *i,
            _ => unreachable!("argument kinds are checked at compile time"),
        }
    }

    pub fn lane(&self) -> usize {
        match self {
            Resolved::Lane(i) => *i,
            _ => unreachable!("argument kinds are checked at compile time"),
        }
    }

    pub fn number(&self) -> f64 {
        match self {
            Resolved::Number(x) => *x,
            _ => unreachable!("argument kinds are checked at compile time"),
        }
    }
}

/// Everything an atom may read at one instant.
pub struct AtomEnv<'a> {
    pub states: &'a [Option<VehicleState>],
    pub dims: &'a [VehicleDims],
    pub road: &'a RoadNetwork,
    pub rss: &'a RssParams,
    pub convention: AngleConvention,
}

impl AtomEnv<'_> {
    pub fn vehicle(&self, arg: &Resolved) -> Option<(VehicleState, VehicleDims)> {
        let i = arg.vehicle();
        self.states[i].map(|s| (s, self.dims[i]))
    }
}

/// Returns `None` when a referenced vehicle is absent at this instant.
pub type AtomFn = Arc<dyn Fn(&AtomEnv<'_>, &[Resolved]) -> Option<f64> + Send + Sync>;

#[derive(Clone)]
pub struct AtomSpec {
    pub name: String,
    pub params: Vec<ArgKind>,
    pub kind: AtomKind,
    pub doc: String,
    pub eval: AtomFn,
}

impl AtomSpec {
    pub fn signature(&self) -> String {
        let params: Vec<String> = self.params.iter().map(ToString::to_string).collect();
        match self.kind {
            AtomKind::Term => format!("{}({}) <cmp> <number>", self.name, params.join(", ")),
            AtomKind::Predicate { .. } => format!("{}({})", self.name, params.join(", ")),
        }
    }
}

impl fmt::Debug for AtomSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AtomSpec")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("kind", &self.kind)
            .finish()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AtomSignature {
    pub name: String,
    pub params: Vec<ArgKind>,
    pub kind: AtomKind,
    pub signature: String,
    pub doc: String,
}

#[derive(Debug, Clone, Default)]
pub struct AtomRegistry {
    atoms: BTreeMap<String, AtomSpec>,
}

impl AtomRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register<F>(&mut self, name: &str, params: &[ArgKind], kind: AtomKind, doc: &str, eval: F)
    where
        F: Fn(&AtomEnv<'_>, &[Resolved]) -> Option<f64> + Send + Sync + 'static,
    {
        self.atoms.insert(
            name.to_string(),
            AtomSpec {
                name: name.to_string(),
                params: params.to_vec(),
                kind,
                doc: doc.to_string(),
                eval: Arc::new(eval),
            },
        );
    }

    pub fn get(&self, name: &str) -> Option<&AtomSpec> {
        self.atoms.get(name)
    }

    pub fn names(&self) -> Vec<String> {
        self.atoms.keys().cloned().collect()
    }

    pub fn signatures(&self) -> Vec<AtomSignature> {
        self.atoms
            .values()
            .map(|a| AtomSignature {
                name: a.name.clone(),
                params: a.params.clone(),
                kind: a.kind,
                signature: a.signature(),
                doc: a.doc.clone(),
            })
            .collect()
    }
}

/// Per-vehicle channel terms and threshold predicates (`v(a) > c`, `v_gt(a, c)`, ...).
pub fn register_channels(reg: &mut AtomRegistry) {
    type Channel = fn(&VehicleState, &VehicleDims, AngleConvention) -> f64;
    let channels: [(&str, &str, Channel); 9] = [
        ("s", "longitudinal position", |s, _, _| s.s),
        ("v", "speed", |s, _, _| s.v),
        ("a", "acceleration", |s, _, _| s.a),
        ("d", "lateral offset", |s, _, _| s.d),
        ("theta", "heading relative to the path", |s, _, _| s.theta),
        ("vlon", "longitudinal velocity", |s, _, c| crate::trace::longitudinal_lateral_velocity(s, c).0),
        ("vlat", "lateral velocity", |s, _, c| crate::trace::longitudinal_lateral_velocity(s, c).1),
        ("front", "front end along the path", |s, d, _| crate::trace::front_rear(s, d).0),
        ("rear", "rear end along the path", |s, d, _| crate::trace::front_rear(s, d).1),
    ];
    for (name, doc, f) in channels {
        reg.register(name, &[ArgKind::Vehicle], AtomKind::Term, doc, move |env, args| {
            env.vehicle(&args[0]).map(|(s, d)| f(&s, &d, env.convention))
        });
        if matches!(name, "s" | "v" | "a" | "d") {
            reg.register(
                &format!("{name}_gt"),
                &[ArgKind::Vehicle, ArgKind::Number],
                AtomKind::Predicate { strict: true },
                &format!("{doc} greater than a constant"),
                move |env, args| {
                    env.vehicle(&args[0])
                        .map(|(s, d)| f(&s, &d, env.convention) - args[1].number())
                },
            );
            reg.register(
                &format!("{name}_lt"),
                &[ArgKind::Vehicle, ArgKind::Number],
                AtomKind::Predicate { strict: true },
                &format!("{doc} less than a constant"),
                move |env, args| {
                    env.vehicle(&args[0])
                        .map(|(s, d)| args[1].number() - f(&s, &d, env.convention))
                },
            );
        }
    }
}

/// Maps formula names to vehicle ids in the trace and lane ids in the road.
#[derive(Debug, Clone, Default, PartialEq, Serialize, serde::Deserialize)]
pub struct Bindings {
    #[serde(default)]
    pub vehicles: BTreeMap<String, String>,
    #[serde(default)]
    pub lanes: BTreeMap<String, String>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn vehicle(mut self, name: &str, id: &str) -> Self {
        self.vehicles.insert(name.to_string(), id.to_string());
        self
    }

    pub fn lane(mut self, name: &str, id: &str) -> Self {
        self.lanes.insert(name.to_string(), id.to_string());
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("unbound {kind} `{name}`; known: {}", known.join(", "))]
    UnboundName {
        name: String,
        kind: &'static str,
        known: Vec<String>,
    },
    #[error("atom `{atom}`: {message}")]
    ArgMismatch { atom: String, message: String },
    #[error("`{name}` is bound to vehicle `{id}`, which is not in the trace")]
    UnknownVehicle { name: String, id: String },
    #[error("`{name}` is bound to lane `{id}`, which is not in the road network")]
    UnknownLane { name: String, id: String },
    #[error(transparent)]
    Trace(#[from] TraceError),
}

pub struct EvalContext<'a> {
    pub trace: &'a Trace,
    pub road: &'a RoadNetwork,
    pub bindings: Bindings,
    pub rss: RssParams,
    pub scenario: ScenarioParams,
    pub mode: InterpolationMode,
    pub convention: AngleConvention,
    pub registry: &'a AtomRegistry,
}

impl<'a> EvalContext<'a> {
    /// Context with default parameters and the standard atom registry.
    pub fn new(trace: &'a Trace, road: &'a RoadNetwork, bindings: Bindings) -> Self {
        Self {
            trace,
            road,
            bindings,
            rss: RssParams::default(),
            scenario: ScenarioParams::default(),
            mode: InterpolationMode::StepHold,
            convention: AngleConvention::PathAligned,
            registry: crate::standard_registry(),
        }
    }

    pub fn with_rss(mut self, rss: RssParams) -> Self {
        self.rss = rss;
        self
    }

    pub fn with_mode(mut self, mode: InterpolationMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_convention(mut self, convention: AngleConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn with_registry(mut self, registry: &'a AtomRegistry) -> Self {
        self.registry = registry;
        self
    }

    pub(crate) fn resolve_atom(&self, atom: &Atom) -> Result<ResolvedAtom, EvalError> {
        let spec = self.registry.get(&atom.name).ok_or_else(|| EvalError::UnboundName {
            name: atom.name.clone(),
            kind: "atom",
            known: self.registry.names(),
        })?;
        let mismatch = |message: String| EvalError::ArgMismatch {
            atom: atom.name.clone(),
            message,
        };
        if spec.params.len() != atom.args.len() {
            return Err(mismatch(format!(
                "expected {} arguments, found {}",
                spec.params.len(),
                atom.args.len()
            )));
        }
        let test = match (spec.kind, atom.cmp) {
            (AtomKind::Predicate { strict }, None) => AtomTest::Predicate { strict },
            (AtomKind::Term, Some(c)) => AtomTest::Compare(c.op, c.threshold),
            (AtomKind::Predicate { .. }, Some(_)) => {
                return Err(mismatch("a predicate cannot be compared to a number".into()))
            }
            (AtomKind::Term, None) => {
                return Err(mismatch("a term needs a comparison such as `> 0`".into()))
            }
        };
        let args = spec
            .params
            .iter()
            .zip(&atom.args)
            .map(|(kind, arg)| self.resolve_arg(*kind, arg, &atom.name))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ResolvedAtom {
            eval: spec.eval.clone(),
            args,
            test,
        })
    }

    fn resolve_arg(&self, kind: ArgKind, arg: &Arg, atom: &str) -> Result<Resolved, EvalError> {
        match (kind, arg) {
            (ArgKind::Number, Arg::Number(x)) => Ok(Resolved::Number(*x)),
            (ArgKind::Vehicle, Arg::Name(n)) => {
                let id = self.bindings.vehicles.get(n).ok_or_else(|| EvalError::UnboundName {
                    name: n.clone(),
                    kind: "vehicle",
                    known: self.bindings.vehicles.keys().cloned().collect(),
                })?;
                self.trace
                    .vehicle_index(id)
                    .map(Resolved::Vehicle)
                    .ok_or_else(|| EvalError::UnknownVehicle {
                        name: n.clone(),
                        id: id.clone(),
                    })
            }
            (ArgKind::Lane, Arg::Name(n)) => {
                let id = self.bindings.lanes.get(n).ok_or_else(|| EvalError::UnboundName {
                    name: n.clone(),
                    kind: "lane",
                    known: self.bindings.lanes.keys().cloned().collect(),
                })?;
                self.road
                    .lane_index(id)
                    .map(Resolved::Lane)
                    .ok_or_else(|| EvalError::UnknownLane {
                        name: n.clone(),
                        id: id.clone(),
                    })
            }
            (kind, arg) => Err(EvalError::ArgMismatch {
                atom: atom.to_string(),
                message: format!("expected a {kind} argument, found `{arg}`"),
            }),
        }
    }
}

#[derive(Clone, Copy)]
pub(crate) enum AtomTest {
    Predicate { strict: bool },
    Compare(CmpOp, f64),
}

pub(crate) struct ResolvedAtom {
    pub eval: AtomFn,
    pub args: Vec<Resolved>,
    pub test: AtomTest,
}

impl ResolvedAtom {
    /// `(margin, strict)` at one instant, `None` if a vehicle is absent.
    pub fn margin(&self, env: &AtomEnv<'_>) -> Option<(f64, bool)> {
        let raw = (self.eval)(env, &self.args)?;
        Some(match self.test {
            AtomTest::Predicate { strict } => (raw, strict),
            AtomTest::Compare(op, c) => (op.margin(raw, c), op.is_strict()),
        })
    }
}
