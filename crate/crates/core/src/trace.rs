//! Time, vehicle states and multi-vehicle traces.
//!
//! A [`Trace`] is the signal over which formulas are evaluated: a strictly
//! increasing grid of sample times together with, for every vehicle, its
//! dimensions and one optional [`VehicleState`] per sample (`None` while the
//! vehicle is outside the recorded field of view).

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Frame rate assumed when a recording does not state one.
pub const DEFAULT_FRAME_RATE_HZ: f64 = 25.0;

/// Tolerance used when comparing sample times.
pub const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("time {t} is outside the trace domain {domain}")]
    OutOfDomain { t: f64, domain: TimeInterval },
    #[error("vehicle `{vehicle}` has no sample covering t={t}")]
    VehicleAbsent { vehicle: String, t: f64 },
    #[error("unknown vehicle `{0}`")]
    UnknownVehicle(String),
    #[error("fewer than two samples remain in {0}")]
    EmptyDomain(TimeInterval),
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("invalid trace: {0}")]
    Invalid(String),
}

/// A closed time interval `[lo, hi]`; `hi` may be `+inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeInterval {
    pub lo: f64,
    pub hi: f64,
}

impl TimeInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, TraceError> {
        if lo.is_nan() || hi.is_nan() || !lo.is_finite() || lo < 0.0 || lo > hi {
            return Err(TraceError::InvalidInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    /// `[0, inf)`, the window of an untimed operator.
    pub const fn unbounded() -> Self {
        Self {
            lo: 0.0,
            hi: f64::INFINITY,
        }
    }

    pub fn is_unbounded(&self) -> bool {
        self.lo == 0.0 && self.hi == f64::INFINITY
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lo - TIME_EPS && t <= self.hi + TIME_EPS
    }

    pub fn contains_interval(&self, other: &TimeInterval) -> bool {
        self.contains(other.lo) && self.contains(other.hi)
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }
}

impl fmt::Display for TimeInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.hi.is_infinite() {
            write!(f, "[{},inf]", self.lo)
        } else {
            write!(f, "[{},{}]", self.lo, self.hi)
        }
    }
}

/// Curvilinear point-mass state of the tracked front-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    /// Longitudinal position along the reference path (m).
    pub s: f64,
    /// Speed (m/s).
    pub v: f64,
    /// Acceleration (m/s²).
    pub a: f64,
    /// Lateral offset from the reference path, increasing to the left (m).
    pub d: f64,
    /// Heading relative to the reference path (rad).
    pub theta: f64,
}

/// How a heading angle splits the speed into path-relative components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleConvention {
    /// `theta = 0` is aligned with the path: `v_lon = v cos θ`, `v_lat = v sin θ`.
    #[default]
    PathAligned,
    /// `v_lon = v sin θ`, `v_lat = v cos θ`.
    Literal,
}

impl VehicleState {
    pub fn is_finite(&self) -> bool {
        [self.s, self.v, self.a, self.d, self.theta]
            .iter()
            .all(|x| x.is_finite())
    }

    /// `(v_lon, v_lat)` under the path-aligned convention.
    pub fn lon_lat_velocity(&self) -> (f64, f64) {
        longitudinal_lateral_velocity(self, AngleConvention::PathAligned)
    }

    fn lerp(&self, other: &VehicleState, w: f64) -> VehicleState {
        let mix = |x: f64, y: f64| x + (y - x) * w;
        VehicleState {
            s: mix(self.s, other.s),
            v: mix(self.v, other.v),
            a: mix(self.a, other.a),
            d: mix(self.d, other.d),
            theta: mix(self.theta, other.theta),
        }
    }
}

pub fn longitudinal_lateral_velocity(state: &VehicleState, convention: AngleConvention) -> (f64, f64) {
    let (sin, cos) = state.theta.sin_cos();
    match convention {
        AngleConvention::PathAligned => (state.v * cos, state.v * sin),
        AngleConvention::Literal => (state.v * sin, state.v * cos),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleDims {
    pub length: f64,
    pub width: f64,
}

impl VehicleDims {
    pub fn new(length: f64, width: f64) -> Self {
        Self { length, width }
    }

    pub fn is_valid(&self) -> bool {
        self.length > 0.0 && self.width > 0.0 && self.length.is_finite() && self.width.is_finite()
    }
}

/// `(front, rear)` projected onto the reference path.
pub fn front_rear(state: &VehicleState, dims: &VehicleDims) -> (f64, f64) {
    (state.s, state.s - dims.length)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpolationMode {
    /// Piecewise-constant: hold the last sample.
    #[default]
    StepHold,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleTrack {
    pub id: String,
    pub dims: VehicleDims,
    /// One entry per sample time; `None` while the vehicle is not present.
    pub states: Vec<Option<VehicleState>>,
}

impl VehicleTrack {
    pub fn new(id: impl Into<String>, dims: VehicleDims, states: Vec<Option<VehicleState>>) -> Self {
        Self {
            id: id.into(),
            dims,
            states,
        }
    }

    /// Index range `[first, last]` of present samples.
    pub fn presence_span(&self) -> Option<(usize, usize)> {
        let first = self.states.iter().position(Option::is_some)?;
        let last = self.states.iter().rposition(Option::is_some)?;
        Some((first, last))
    }
}

/// Immutable multi-vehicle trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    times: Vec<f64>,
    domain: TimeInterval,
    tracks: Vec<VehicleTrack>,
    index: HashMap<String, usize>,
}

impl Trace {
    /// Builds a trace whose domain spans the first to the last sample.
    pub fn new(times: Vec<f64>, tracks: Vec<VehicleTrack>) -> Result<Self, TraceError> {
        let hi = times.last().copied().unwrap_or(0.0);
        Self::with_domain_end(times, tracks, hi)
    }

    /// Builds a trace whose domain ends at `domain_hi`, which may lie after
    /// the last sample (the last sample is then held until `domain_hi`).
    pub fn with_domain_end(
        times: Vec<f64>,
        tracks: Vec<VehicleTrack>,
        domain_hi: f64,
    ) -> Result<Self, TraceError> {
        if times.len() < 2 {
            return Err(TraceError::Invalid("a trace needs at least 2 samples".into()));
        }
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(TraceError::Invalid("sample times must be finite and non-negative".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(TraceError::Invalid("sample times must be strictly increasing".into()));
        }
        let last = *times.last().unwrap();
        if !(domain_hi.is_finite() && domain_hi >= last) {
            return Err(TraceError::Invalid(format!(
                "domain end {domain_hi} precedes the last sample {last}"
            )));
        }
        let mut index = HashMap::with_capacity(tracks.len());
        for (i, track) in tracks.iter().enumerate() {
            if track.states.len() != times.len() {
                return Err(TraceError::Invalid(format!(
                    "vehicle `{}` has {} states for {} samples",
                    track.id,
                    track.states.len(),
                    times.len()
                )));
            }
            if !track.dims.is_valid() {
                return Err(TraceError::Invalid(format!("vehicle `{}` has invalid dimensions", track.id)));
            }
            if track
                .states
                .iter()
                .flatten()
                .any(|st| !st.is_finite() || st.v < 0.0)
            {
                return Err(TraceError::Invalid(format!(
                    "vehicle `{}` has a non-finite state or negative speed",
                    track.id
                )));
            }
            if index.insert(track.id.clone(), i).is_some() {
                return Err(TraceError::Invalid(format!("duplicate vehicle id `{}`", track.id)));
            }
        }
        let domain = TimeInterval {
            lo: times[0],
            hi: domain_hi,
        };
        Ok(Self {
            times,
            domain,
            tracks,
            index,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn domain(&self) -> TimeInterval {
        self.domain
    }

    pub fn tracks(&self) -> &[VehicleTrack] {
        &self.tracks
    }

    pub fn vehicle_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn track(&self, id: &str) -> Option<&VehicleTrack> {
        self.vehicle_index(id).map(|i| &self.tracks[i])
    }

    pub fn vehicle_ids(&self) -> impl Iterator<Item = &str> {
        self.tracks.iter().map(|t| t.id.as_str())
    }

    /// Index of the greatest sample time `<= t` (with tolerance).
    pub fn sample_at_or_before(&self, t: f64) -> Option<usize> {
        let k = self.times.partition_point(|&x| x <= t + TIME_EPS);
        k.checked_sub(1)
    }

    /// Index of a sample whose time equals `t` up to [`TIME_EPS`].
    pub fn sample_index(&self, t: f64) -> Option<usize> {
        self.sample_at_or_before(t)
            .filter(|&k| (self.times[k] - t).abs() <= TIME_EPS)
    }

    pub fn value_at(&self, vehicle: &str, t: f64, mode: InterpolationMode) -> Result<VehicleState, TraceError> {
        let vi = self
            .vehicle_index(vehicle)
            .ok_or_else(|| TraceError::UnknownVehicle(vehicle.to_string()))?;
        self.value_at_index(vi, t, mode)
    }

    pub fn value_at_index(&self, vi: usize, t: f64, mode: InterpolationMode) -> Result<VehicleState, TraceError> {
        if !self.domain.contains(t) {
            return Err(TraceError::OutOfDomain { t, domain: self.domain });
        }
        let track = &self.tracks[vi];
        let absent = || TraceError::VehicleAbsent {
            vehicle: track.id.clone(),
            t,
        };
        let k = self.sample_at_or_before(t).ok_or_else(absent)?;
        let here = track.states[k].ok_or_else(absent)?;
        match mode {
            InterpolationMode::StepHold => Ok(here),
            InterpolationMode::Linear => {
                if (self.times[k] - t).abs() <= TIME_EPS || k + 1 == self.times.len() {
                    return Ok(here);
                }
                let next = track.states[k + 1].ok_or_else(absent)?;
                let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
                Ok(here.lerp(&next, w))
            }
        }
    }

    /// Restriction to `new_domain` with step-hold insertion of a sample at its start.
    pub fn trim(&self, new_domain: TimeInterval) -> Result<Trace, TraceError> {
        self.trim_with(new_domain, InterpolationMode::StepHold)
    }

    pub fn trim_with(&self, new_domain: TimeInterval, mode: InterpolationMode) -> Result<Trace, TraceError> {
        if !self.domain.contains_interval(&new_domain) {
            return Err(TraceError::OutOfDomain {
                t: if self.domain.contains(new_domain.lo) {
                    new_domain.hi
                } else {
                    new_domain.lo
                },
                domain: self.domain,
            });
        }
        let (lo, hi) = (new_domain.lo, new_domain.hi);
        let first = self.times.partition_point(|&x| x < lo - TIME_EPS);
        let end = self.times.partition_point(|&x| x <= hi + TIME_EPS);
        if end.saturating_sub(first) < 2 {
            return Err(TraceError::EmptyDomain(new_domain));
        }
        let starts_on_sample = (self.times[first] - lo).abs() <= TIME_EPS;
        let mut times = Vec::with_capacity(end - first + 1);
        if !starts_on_sample {
            times.push(lo);
        }
        times.extend_from_slice(&self.times[first..end]);
        if starts_on_sample {
            times[0] = lo;
        }
        let tracks = self
            .tracks
            .iter()
            .enumerate()
            .map(|(vi, track)| {
                let mut states = Vec::with_capacity(times.len());
                if !starts_on_sample {
                    states.push(self.value_at_index(vi, lo, mode).ok());
                }
                states.extend_from_slice(&track.states[first..end]);
                VehicleTrack {
                    id: track.id.clone(),
                    dims: track.dims,
                    states,
                }
            })
            .collect();
        let last = *times.last().unwrap();
        Trace::with_domain_end(times, tracks, hi.max(last))
    }

    /// Copy keeping only the named vehicles, in the given order.
    pub fn retain_vehicles(&self, ids: &[&str]) -> Result<Trace, TraceError> {
        let tracks = ids
            .iter()
            .map(|id| {
                self.track(id)
                    .cloned()
                    .ok_or_else(|| TraceError::UnknownVehicle(id.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Trace::with_domain_end(self.times.clone(), tracks, self.domain.hi)
    }

    /// Co-presence window of two vehicles as sample index bounds.
    pub fn co_presence(&self, a: usize, b: usize) -> Option<(usize, usize)> {
        let (sa, ea) = self.tracks[a].presence_span()?;
        let (sb, eb) = self.tracks[b].presence_span()?;
        let (s, e) = (sa.max(sb), ea.min(eb));
        (s <= e).then_some((s, e))
    }
}

/// Column order of the long-format trace CSV: one row per present vehicle
/// and sample.
pub const CSV_HEADER: [&str; 9] = ["time", "id", "s", "v", "a", "d", "theta", "length", "width"];

/// Writes `trace` in long format. Floats use the shortest representation
/// that round-trips, so reading the file back yields an identical trace.
pub fn write_csv<W: std::io::Write>(trace: &Trace, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for (k, t) in trace.times.iter().enumerate() {
        for track in &trace.tracks {
            if let Some(st) = track.states[k] {
                w.write_record([
                    t.to_string(),
                    track.id.clone(),
                    st.s.to_string(),
                    st.v.to_string(),
                    st.a.to_string(),
                    st.d.to_string(),
                    st.theta.to_string(),
                    track.dims.length.to_string(),
                    track.dims.width.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a long-format trace. The domain ends at the last sample unless
/// `domain_end` extends it.
pub fn read_csv<R: std::io::Read>(input: R, domain_end: Option<f64>) -> Result<Trace, TraceError> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(|e| TraceError::Invalid(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| TraceError::Invalid(format!("missing column `{name}`")))
    };
    let cols = CSV_HEADER.map(col);
    let mut idx = [0; 9];
    for (i, c) in cols.into_iter().enumerate() {
        idx[i] = c?;
    }

    let mut times: Vec<f64> = Vec::new();
    let mut order: Vec<String> = Vec::new();
    let mut vehicles: HashMap<String, (VehicleDims, Vec<(usize, VehicleState)>)> = HashMap::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| TraceError::Invalid(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64, TraceError> {
            let field = rec.get(idx[i]).unwrap_or("").trim();
            field
                .parse::<f64>()
                .map_err(|_| TraceError::Invalid(format!("line {line}: bad {} value `{field}`", CSV_HEADER[i])))
        };
        let t = num(0)?;
        let id = rec.get(idx[1]).unwrap_or("").trim().to_string();
        let state = VehicleState {
            s: num(2)?,
            v: num(3)?,
            a: num(4)?,
            d: num(5)?,
            theta: num(6)?,
        };
        let dims = VehicleDims::new(num(7)?, num(8)?);
        match times.last() {
            Some(&last) if t < last => {
                return Err(TraceError::Invalid(format!("line {line}: time {t} goes backwards")))
            }
            Some(&last) if t == last => {}
            _ => times.push(t),
        }
        let k = times.len() - 1;
        let entry = vehicles.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            (dims, Vec::new())
        });
        if entry.0 != dims {
            return Err(TraceError::Invalid(format!("line {line}: dimensions of `{id}` change")));
        }
        if entry.1.last().is_some_and(|(j, _)| *j == k) {
            return Err(TraceError::Invalid(format!("line {line}: `{id}` appears twice at t={t}")));
        }
        entry.1.push((k, state));
    }
    let n = times.len();
    let tracks = order
        .into_iter()
        .map(|id| {
            let (dims, rows) = vehicles.remove(&id).expect("ordered ids are present");
            let mut states = vec![None; n];
            for (k, st) in rows {
                states[k] = Some(st);
            }
            VehicleTrack::new(id, dims, states)
        })
        .collect();
    let hi = domain_end.unwrap_or_else(|| times.last().copied().unwrap_or(0.0));
    Trace::with_domain_end(times, tracks, hi)
}
