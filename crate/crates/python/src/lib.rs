use std::collections::BTreeMap;
use std::sync::Arc;

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use scenmon_core::road::{RoadNetwork, Zone};
use scenmon_core::rss::{self, RssParams};
use scenmon_core::scenario::{self, Roles, ScenarioParams, SpecVariant};
use scenmon_core::standard_registry;
use scenmon_core::stl::exemplify::{exemplify as search, ExemplifyConfig, ExemplifyOutcome, SignalTemplate};
use scenmon_core::stl::{self, eval_series, Bindings, EvalContext, Formula};
use scenmon_core::synth;
use scenmon_core::trace::{self, InterpolationMode, Trace, VehicleState};

create_exception!(pyscenmon, ParseError, PyValueError, "Formula text that does not parse.");
create_exception!(pyscenmon, EvalError, PyValueError, "A formula that cannot be evaluated on a trace.");

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A parsed STL formula.
#[pyclass(name = "Formula", frozen, module = "pyscenmon")]
struct PyFormula {
    inner: Formula,
}

#[pymethods]
impl PyFormula {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        parse_text(text).map(|inner| Self { inner })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind_name()
    }

    fn children(&self) -> Vec<PyFormula> {
        self.inner.children().into_iter().map(|c| PyFormula { inner: c.clone() }).collect()
    }

    /// Subformulas in pre-order, as in the node ids of `evaluate`.
    fn preorder(&self) -> Vec<String> {
        self.inner.preorder().into_iter().map(|f| f.to_string()).collect()
    }

    /// The syntax tree as JSON.
    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("formulas serialize")
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Formula({:?})", self.inner.to_string())
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }
}

fn parse_text(text: &str) -> PyResult<Formula> {
    stl::parse(text).map_err(|e| ParseError::new_err((e.to_string(), e.position())))
}

fn formula_arg(f: &Bound<'_, PyAny>) -> PyResult<Formula> {
    if let Ok(text) = f.extract::<String>() {
        return parse_text(&text);
    }
    match f.extract::<PyRef<'_, PyFormula>>() {
        Ok(p) => Ok(p.inner.clone()),
        Err(_) => Err(value_error("expected a formula string or Formula")),
    }
}

/// A sampled multi-vehicle trace.
#[pyclass(name = "Trace", frozen, module = "pyscenmon")]
struct PyTrace {
    inner: Arc<Trace>,
}

#[pymethods]
impl PyTrace {
    /// Reads the long CSV format (`time,id,s,v,a,d,theta,length,width`).
    #[staticmethod]
    #[pyo3(signature = (text, domain_end=None))]
    fn from_csv(text: &str, domain_end: Option<f64>) -> PyResult<Self> {
        let t = trace::read_csv(text.as_bytes(), domain_end).map_err(value_error)?;
        Ok(Self { inner: Arc::new(t) })
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut out = Vec::new();
        trace::write_csv(&self.inner, &mut out).map_err(value_error)?;
        Ok(String::from_utf8(out).expect("csv is utf-8"))
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times().to_vec()
    }

    #[getter]
    fn domain(&self) -> (f64, f64) {
        let d = self.inner.domain();
        (d.lo, d.hi)
    }

    #[getter]
    fn vehicles(&self) -> Vec<String> {
        self.inner.vehicle_ids().map(str::to_string).collect()
    }

    /// One channel (`s`, `v`, `a`, `d` or `theta`) of a vehicle; `None` where
    /// the vehicle is absent.
    fn channel(&self, vehicle: &str, name: &str) -> PyResult<Vec<Option<f64>>> {
        let track = self
            .inner
            .track(vehicle)
            .ok_or_else(|| value_error(format!("no vehicle `{vehicle}`")))?;
        let pick: fn(&VehicleState) -> f64 = match name {
            "s" => |s| s.s,
            "v" => |s| s.v,
            "a" => |s| s.a,
            "d" => |s| s.d,
            "theta" => |s| s.theta,
            _ => return Err(value_error(format!("unknown channel `{name}`"))),
        };
        Ok(track.states.iter().map(|s| s.as_ref().map(pick)).collect())
    }

    fn __len__(&self) -> usize {
        self.inner.times().len()
    }

    fn __repr__(&self) -> String {
        let d = self.inner.domain();
        format!("Trace({} samples on [{}, {}], vehicles {:?})", self.inner.times().len(), d.lo, d.hi, self.vehicles())
    }
}

/// A lanelet road network.
#[pyclass(name = "Road", frozen, module = "pyscenmon")]
struct PyRoad {
    inner: Arc<RoadNetwork>,
}

#[pymethods]
impl PyRoad {
    /// The generated three-lane road of a zone: `main`, `merge` or `depart`.
    #[staticmethod]
    #[pyo3(signature = (zone="main"))]
    fn zone(zone: &str) -> PyResult<Self> {
        let z = match zone {
            "main" => Zone::Main,
            "merge" => Zone::Merge,
            "depart" => Zone::Depart,
            _ => return Err(value_error(format!("unknown zone `{zone}`"))),
        };
        Ok(Self {
            inner: Arc::new(synth::zone_road(z)),
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let r = RoadNetwork::from_json(text).map_err(value_error)?;
        Ok(Self { inner: Arc::new(r) })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn lanes(&self) -> Vec<String> {
        self.inner.lanes().iter().map(|l| l.id.clone()).collect()
    }
}

fn rss_params(kw: Option<&Bound<'_, PyDict>>) -> PyResult<RssParams> {
    let mut p = RssParams::default();
    if let Some(kw) = kw {
        for (k, v) in kw.iter() {
            let key: String = k.extract()?;
            let x: f64 = v.extract()?;
            match key.as_str() {
                "rho" => p.rho = x,
                "a_max" => p.a_max = x,
                "b_min" => p.b_min = x,
                "b_max" => p.b_max = x,
                "a_max_lat" => p.a_max_lat = x,
                "b_min_lat" => p.b_min_lat = x,
                _ => return Err(value_error(format!("unknown RSS parameter `{key}`"))),
            }
        }
    }
    p.validate().map_err(value_error)?;
    Ok(p)
}

/// Longitudinal RSS distance between a rear and a front vehicle.
#[pyfunction]
#[pyo3(signature = (v_rear, v_front, **params))]
fn d_rss_lon(v_rear: f64, v_front: f64, params: Option<&Bound<'_, PyDict>>) -> PyResult<f64> {
    Ok(rss::d_rss_lon(v_rear, v_front, &rss_params(params)?))
}

/// Lateral RSS distance for two lateral velocities (left vehicle first).
#[pyfunction]
#[pyo3(signature = (v_left, v_right, **params))]
fn d_rss_lat(v_left: f64, v_right: f64, params: Option<&Bound<'_, PyDict>>) -> PyResult<f64> {
    Ok(rss::d_rss_lat(v_left, v_right, &rss_params(params)?))
}

#[pyfunction]
fn parse(text: &str) -> PyResult<PyFormula> {
    PyFormula::new(text)
}

/// Registered atom signatures.
#[pyfunction]
fn atoms() -> Vec<String> {
    standard_registry().signatures().into_iter().map(|s| s.signature).collect()
}

fn mode_arg(mode: &str) -> PyResult<InterpolationMode> {
    match mode {
        "step_hold" => Ok(InterpolationMode::StepHold),
        "linear" => Ok(InterpolationMode::Linear),
        _ => Err(value_error(format!("unknown mode `{mode}`"))),
    }
}

/// Evaluates `formula` on `trace`. Vehicle names default to themselves.
///
/// Returns a dict with `verdict` and `robustness` at the start of the trace,
/// the sample `times`, and per-subformula `nodes` (pre-order) holding
/// `satisfied` and `robustness` series.
#[pyfunction]
#[pyo3(signature = (formula, trace, road=None, vehicles=None, lanes=None, mode="step_hold"))]
fn evaluate<'py>(
    py: Python<'py>,
    formula: &Bound<'py, PyAny>,
    trace: &PyTrace,
    road: Option<&PyRoad>,
    vehicles: Option<BTreeMap<String, String>>,
    lanes: Option<BTreeMap<String, String>>,
    mode: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let f = formula_arg(formula)?;
    let main;
    let road = match road {
        Some(r) => &*r.inner,
        None => {
            main = synth::main_road();
            &main
        }
    };
    let mut b = Bindings::new();
    for id in trace.inner.vehicle_ids() {
        b = b.vehicle(id, id);
    }
    b.vehicles.extend(vehicles.unwrap_or_default());
    b.lanes.extend(lanes.unwrap_or_default());
    let ctx = EvalContext::new(&trace.inner, road, b).with_mode(mode_arg(mode)?);
    let report = eval_series(&f, &ctx).map_err(|e| EvalError::new_err(e.to_string()))?;
    let out = PyDict::new(py);
    out.set_item("verdict", report.nodes[0].satisfied[0])?;
    out.set_item("robustness", report.nodes[0].robustness[0])?;
    out.set_item("times", report.times.clone())?;
    let nodes = report
        .nodes
        .iter()
        .map(|n| {
            let d = PyDict::new(py);
            d.set_item("id", n.id)?;
            d.set_item("kind", n.kind)?;
            d.set_item("label", n.label.clone())?;
            d.set_item("children", n.children.clone())?;
            d.set_item("satisfied", n.satisfied.clone())?;
            d.set_item("robustness", n.robustness.clone())?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    out.set_item("nodes", nodes)?;
    Ok(out)
}

fn variant_arg(v: &str) -> PyResult<SpecVariant> {
    v.parse().map_err(value_error)
}

/// The 24 scenario formulas of a spec set (`base`, `extA` or `ext`).
#[pyfunction]
#[pyo3(signature = (variant="ext", min_danger=0.0, min_safe=0.6))]
fn catalog<'py>(py: Python<'py>, variant: &str, min_danger: f64, min_safe: f64) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let p = ScenarioParams { min_danger, min_safe };
    p.validate().map_err(value_error)?;
    scenario::catalog(variant_arg(variant)?, &p)
        .into_iter()
        .map(|e| {
            let d = PyDict::new(py);
            d.set_item("index", e.index)?;
            d.set_item("roles", e.roles)?;
            d.set_item("formula", e.formula)?;
            Ok(d)
        })
        .collect()
}

/// One scenario formula for the given vehicle and lane names.
#[pyfunction]
#[pyo3(signature = (index, variant="ext", sv="SV", povs=None, lane="L"))]
fn scenario_formula(index: usize, variant: &str, sv: &str, povs: Option<Vec<String>>, lane: &str) -> PyResult<PyFormula> {
    let roles = match povs {
        Some(p) if p.len() == 2 => Roles::triple(sv, &p[0], &p[1], lane),
        Some(p) if p.len() == 1 => Roles::pair(sv, &p[0], lane),
        Some(p) => return Err(value_error(format!("expected one or two POV names, got {}", p.len()))),
        None if scenario::pov_arity(index) == 2 => Roles::triple(sv, "POV1", "POV2", lane),
        None => Roles::pair(sv, "POV", lane),
    };
    let f = scenario::scenario(index, variant_arg(variant)?, &roles, &ScenarioParams::default()).map_err(value_error)?;
    Ok(PyFormula { inner: f })
}

/// A generated trace of scenario `index` with its road and default bindings
/// (`vehicles`, `lanes`).
#[pyfunction]
#[pyo3(signature = (index, seed=0))]
fn generate<'py>(py: Python<'py>, index: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    if !(1..=scenario::SCENARIO_COUNT).contains(&index) {
        return Err(value_error(format!("scenario index {index} is outside 1..=24")));
    }
    let case = synth::generate(index, seed);
    let road = synth::road_for(index);
    let b = case.bindings(&road).unwrap_or_default();
    let out = PyDict::new(py);
    out.set_item("trace", PyTrace { inner: Arc::new(case.trace) })?;
    out.set_item("road", PyRoad { inner: Arc::new(road) })?;
    out.set_item("vehicles", b.vehicles)?;
    out.set_item("lanes", b.lanes)?;
    Ok(out)
}

/// Searches for a trace of the given vehicles satisfying `formula`; returns
/// `(trace, robustness)` or `None` when the budget runs out.
#[pyfunction]
#[pyo3(signature = (formula, vehicles=None, duration=10.0, dt=0.1, road=None, lanes=None, budget=None, seed=0))]
#[allow(clippy::too_many_arguments)]
fn exemplify(
    py: Python<'_>,
    formula: &Bound<'_, PyAny>,
    vehicles: Option<Vec<String>>,
    duration: f64,
    dt: f64,
    road: Option<&PyRoad>,
    lanes: Option<BTreeMap<String, String>>,
    budget: Option<usize>,
    seed: u64,
) -> PyResult<Option<(PyTrace, f64)>> {
    let f = formula_arg(formula)?;
    let ids = vehicles.unwrap_or_else(|| vec!["SV".into()]);
    let first = ids.first().ok_or_else(|| value_error("no vehicles"))?;
    let mut template = SignalTemplate::single(first, duration, dt);
    for id in &ids[1..] {
        let mut v = template.vehicles[0].clone();
        v.id = id.clone();
        template.vehicles.push(v);
    }
    let road = road.map(|r| r.inner.clone()).unwrap_or_else(|| Arc::new(synth::main_road()));
    let lanes = lanes.unwrap_or_default();
    let cfg = match budget {
        Some(b) => ExemplifyConfig::with_budget(b, seed),
        None => ExemplifyConfig {
            seed,
            ..ExemplifyConfig::default()
        },
    };
    let out = py
        .detach(|| search(&f, &template, &road, &lanes, &RssParams::default(), &cfg))
        .map_err(|e| EvalError::new_err(e.to_string()))?;
    Ok(match out {
        ExemplifyOutcome::Found { trace, robustness, .. } => Some((PyTrace { inner: Arc::new(trace) }, robustness)),
        ExemplifyOutcome::Failure { .. } => None,
    })
}

#[pymodule]
fn pyscenmon(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFormula>()?;
    m.add_class::<PyTrace>()?;
    m.add_class::<PyRoad>()?;
    m.add("ParseError", m.py().get_type::<ParseError>())?;
    m.add("EvalError", m.py().get_type::<EvalError>())?;
    m.add_function(wrap_pyfunction!(parse, m)?)?;
    m.add_function(wrap_pyfunction!(atoms, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(d_rss_lon, m)?)?;
    m.add_function(wrap_pyfunction!(d_rss_lat, m)?)?;
    m.add_function(wrap_pyfunction!(catalog, m)?)?;
    m.add_function(wrap_pyfunction!(scenario_formula, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(exemplify, m)?)?;
    Ok(())
}
