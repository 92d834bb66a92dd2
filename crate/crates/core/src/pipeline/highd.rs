//! Reader for recordings in the highD CSV layout.
//!
//! highD positions are bounding boxes in image coordinates: `x` grows to the
//! right, `y` grows downwards, `(x, y)` is the top-left corner, `width` runs
//! along `x` and `height` along `y`. Vehicles on the lower half drive towards
//! +x, vehicles on the upper half towards -x. Each half becomes its own
//! curvilinear frame whose reference path is the rightmost lane marking
//! (seen in the driving direction), with `s` measured along the driving
//! direction and `d` to the left of it.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::road::{straight_road, RoadNetwork, Zone};
use crate::trace::{AngleConvention, Trace, VehicleDims, VehicleState, VehicleTrack};

pub const TRACK_COLUMNS: [&str; 11] = [
    "frame",
    "id",
    "x",
    "y",
    "width",
    "height",
    "xVelocity",
    "yVelocity",
    "xAcceleration",
    "yAcceleration",
    "laneId",
];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: missing column `{column}`")]
    MissingColumn { file: String, column: String },
    #[error("{file}, row {row}: {message}")]
    Parse { file: String, row: u64, message: String },
    #[error("frame rate {configured} Hz disagrees with the recording metadata ({metadata} Hz)")]
    InconsistentFrameRate { metadata: f64, configured: f64 },
    #[error("{file}: {message}")]
    Invalid { file: String, message: String },
    #[error("no recordings found in {0}")]
    NoRecordings(PathBuf),
}

#[derive(Debug, Clone, Default)]
pub struct IngestConfig {
    /// Expected frame rate; must agree with the metadata when both are given.
    pub frame_rate: Option<f64>,
    /// Keep only vehicles whose class is `Car`.
    pub cars_only: bool,
    pub convention: AngleConvention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Upper half of the image, driving towards -x.
    Upper,
    /// Lower half of the image, driving towards +x.
    Lower,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Upper => "upper",
            Direction::Lower => "lower",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    pub rows: usize,
    /// Rows dropped because the vehicle is not a car.
    pub rows_dropped_class: usize,
    pub vehicles: usize,
    pub vehicles_dropped_class: usize,
}

/// One vehicle's contiguous run of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleSeries {
    pub id: String,
    pub dims: VehicleDims,
    pub first_frame: i64,
    pub states: Vec<VehicleState>,
}

impl VehicleSeries {
    pub fn last_frame(&self) -> i64 {
        self.first_frame + self.states.len() as i64 - 1
    }

    pub fn state_at(&self, frame: i64) -> Option<VehicleState> {
        let k = frame - self.first_frame;
        (0..self.states.len() as i64).contains(&k).then(|| self.states[k as usize])
    }
}

/// The vehicles of one driving direction and the road they drive on.
#[derive(Debug, Clone)]
pub struct DirectionData {
    pub direction: Direction,
    pub road: RoadNetwork,
    /// Ordered by vehicle id.
    pub vehicles: Vec<VehicleSeries>,
}

#[derive(Debug, Clone)]
pub struct Recording {
    pub id: String,
    pub frame_rate: f64,
    pub directions: Vec<DirectionData>,
    pub stats: IngestStats,
}

impl Recording {
    pub fn time_of(&self, frame: i64) -> f64 {
        frame as f64 / self.frame_rate
    }

    pub fn direction(&self, direction: Direction) -> Option<&DirectionData> {
        self.directions.iter().find(|d| d.direction == direction)
    }

    /// Trace over `[first, last]` frames with the given vehicles (absent
    /// outside their own frames). `None` for windows shorter than two frames.
    pub fn window_trace(&self, vehicles: &[&VehicleSeries], first: i64, last: i64) -> Option<Trace> {
        if last <= first {
            return None;
        }
        let times = (first..=last).map(|f| self.time_of(f)).collect();
        let tracks = vehicles
            .iter()
            .map(|v| {
                let states = (first..=last).map(|f| v.state_at(f)).collect();
                VehicleTrack::new(v.id.clone(), v.dims, states)
            })
            .collect();
        Some(Trace::new(times, tracks).expect("ingested states are validated"))
    }

    /// All vehicles of one direction over the frames any of them is present.
    pub fn direction_trace(&self, direction: Direction) -> Option<Trace> {
        let data = self.direction(direction)?;
        let first = data.vehicles.iter().map(|v| v.first_frame).min()?;
        let last = data.vehicles.iter().map(|v| v.last_frame()).max()?;
        let refs: Vec<&VehicleSeries> = data.vehicles.iter().collect();
        self.window_trace(&refs, first, last)
    }
}

/// Files making up one recording.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordingFiles {
    pub id: String,
    pub tracks: PathBuf,
    pub recording_meta: PathBuf,
    pub tracks_meta: Option<PathBuf>,
}

/// Finds `NN_tracks.csv` files with a matching `NN_recordingMeta.csv`,
/// ordered by id.
pub fn discover(dir: &Path) -> Result<Vec<RecordingFiles>, IngestError> {
    let io = |source| IngestError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(id) = name.strip_suffix("_tracks.csv") else {
            continue;
        };
        let meta = dir.join(format!("{id}_recordingMeta.csv"));
        if !meta.is_file() {
            continue;
        }
        let tracks_meta = dir.join(format!("{id}_tracksMeta.csv"));
        found.push(RecordingFiles {
            id: id.to_string(),
            tracks: path.clone(),
            recording_meta: meta,
            tracks_meta: tracks_meta.is_file().then_some(tracks_meta),
        });
    }
    if found.is_empty() {
        return Err(IngestError::NoRecordings(dir.to_path_buf()));
    }
    found.sort_by(|a, b| id_key(&a.id).cmp(&id_key(&b.id)));
    Ok(found)
}

/// Sort key putting numeric ids in numeric order before other ids.
pub fn id_key(id: &str) -> (u8, u64, String) {
    match id.parse::<u64>() {
        Ok(n) => (0, n, String::new()),
        Err(_) => (1, 0, id.to_string()),
    }
}

struct Table {
    file: String,
    reader: csv::Reader<File>,
    columns: BTreeMap<String, usize>,
}

impl Table {
    fn open(path: &Path) -> Result<Self, IngestError> {
        let file = path.display().to_string();
        let handle = File::open(path).map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(handle);
        let columns = reader
            .headers()
            .map_err(|e| IngestError::Parse {
                file: file.clone(),
                row: 1,
                message: e.to_string(),
            })?
            .iter()
            .enumerate()
            .map(|(i, h)| (h.to_string(), i))
            .collect();
        Ok(Self { file, reader, columns })
    }

    fn require(&self, name: &str) -> Result<usize, IngestError> {
        self.columns.get(name).copied().ok_or_else(|| IngestError::MissingColumn {
            file: self.file.clone(),
            column: name.to_string(),
        })
    }

    /// Rows with their 1-based line numbers.
    fn rows(&mut self) -> Result<Vec<(u64, csv::StringRecord)>, IngestError> {
        let mut out = Vec::new();
        for rec in self.reader.records() {
            let rec = rec.map_err(|e| IngestError::Parse {
                file: self.file.clone(),
                row: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            out.push((line, rec));
        }
        Ok(out)
    }

    fn parse_err(&self, row: u64, message: String) -> IngestError {
        IngestError::Parse {
            file: self.file.clone(),
            row,
            message,
        }
    }

    fn number(&self, rec: &csv::StringRecord, row: u64, col: usize, name: &str) -> Result<f64, IngestError> {
        let field = rec.get(col).unwrap_or("");
        match field.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(self.parse_err(row, format!("`{name}` is not a finite number: `{field}`"))),
        }
    }
}

struct Meta {
    frame_rate: f64,
    upper: Vec<f64>,
    lower: Vec<f64>,
}

fn markings(table: &Table, row: u64, text: &str, name: &str) -> Result<Vec<f64>, IngestError> {
    let values = text
        .split(';')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<f64>().ok().filter(|x| x.is_finite()))
        .collect::<Option<Vec<f64>>>()
        .ok_or_else(|| table.parse_err(row, format!("`{name}` is not a `;`-separated list of numbers")))?;
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(IngestError::Invalid {
            file: table.file.clone(),
            message: format!("`{name}` offsets are not strictly increasing: {values:?}"),
        });
    }
    if values.len() == 1 {
        return Err(IngestError::Invalid {
            file: table.file.clone(),
            message: format!("`{name}` needs at least two markings"),
        });
    }
    Ok(values)
}

fn read_meta(path: &Path) -> Result<Meta, IngestError> {
    let mut table = Table::open(path)?;
    let rate = table.require("frameRate")?;
    let upper = table.require("upperLaneMarkings")?;
    let lower = table.require("lowerLaneMarkings")?;
    let rows = table.rows()?;
    let Some((row, rec)) = rows.first() else {
        return Err(IngestError::Invalid {
            file: table.file.clone(),
            message: "no metadata row".into(),
        });
    };
    let frame_rate = table.number(rec, *row, rate, "frameRate")?;
    if frame_rate <= 0.0 {
        return Err(table.parse_err(*row, format!("frame rate must be positive, got {frame_rate}")));
    }
    Ok(Meta {
        frame_rate,
        upper: markings(&table, *row, rec.get(upper).unwrap_or(""), "upperLaneMarkings")?,
        lower: markings(&table, *row, rec.get(lower).unwrap_or(""), "lowerLaneMarkings")?,
    })
}

#[derive(Default, Clone)]
struct VehicleMeta {
    class: Option<String>,
    direction: Option<Direction>,
}

fn parse_direction(text: &str) -> Option<Direction> {
    match text {
        "1" => Some(Direction::Upper),
        "2" => Some(Direction::Lower),
        _ => None,
    }
}

fn read_tracks_meta(path: &Path) -> Result<BTreeMap<String, VehicleMeta>, IngestError> {
    let mut table = Table::open(path)?;
    let id = table.require("id")?;
    let class = table.columns.get("class").copied();
    let dir = table.columns.get("drivingDirection").copied();
    let mut out = BTreeMap::new();
    for (_, rec) in table.rows()? {
        let meta = VehicleMeta {
            class: class.and_then(|c| rec.get(c)).map(str::to_string),
            direction: dir.and_then(|c| rec.get(c)).and_then(parse_direction),
        };
        out.insert(rec.get(id).unwrap_or("").to_string(), meta);
    }
    Ok(out)
}

/// Raw box of one row in image coordinates.
#[derive(Clone, Copy)]
struct Row {
    frame: i64,
    x: f64,
    y: f64,
    width: f64,
    height: f64,
    vx: f64,
    vy: f64,
    ax: f64,
}

/// Curvilinear state of a row in the frame of `direction`, whose reference
/// path lies at image ordinate `y_ref`.
fn to_curvilinear(r: &Row, direction: Direction, y_ref: f64, conv: AngleConvention) -> VehicleState {
    let (s, d, v_lon, v_lat, a) = match direction {
        Direction::Lower => (r.x + r.width, y_ref - r.y, r.vx, -r.vy, r.ax),
        Direction::Upper => (-r.x, r.y + r.height - y_ref, -r.vx, r.vy, -r.ax),
    };
    let theta = match conv {
        AngleConvention::PathAligned => v_lat.atan2(v_lon),
        AngleConvention::Literal => v_lon.atan2(v_lat),
    };
    VehicleState {
        s,
        v: v_lon.hypot(v_lat),
        a,
        d,
        theta: if v_lon == 0.0 && v_lat == 0.0 { 0.0 } else { theta },
    }
}

/// Reference ordinate and lateral lane boundaries (right to left) of a
/// direction's frame.
fn frame_of(direction: Direction, markings: &[f64]) -> (f64, Vec<f64>) {
    match direction {
        Direction::Lower => {
            let y_ref = *markings.last().unwrap();
            (y_ref, markings.iter().rev().map(|m| y_ref - m).collect())
        }
        Direction::Upper => {
            let y_ref = markings[0];
            (y_ref, markings.iter().map(|m| m - y_ref).collect())
        }
    }
}

/// Reads one recording.
pub fn ingest(files: &RecordingFiles, cfg: &IngestConfig) -> Result<Recording, IngestError> {
    let meta = read_meta(&files.recording_meta)?;
    if let Some(configured) = cfg.frame_rate {
        if (configured - meta.frame_rate).abs() > 1e-9 {
            return Err(IngestError::InconsistentFrameRate {
                metadata: meta.frame_rate,
                configured,
            });
        }
    }
    let vehicle_meta = match &files.tracks_meta {
        Some(p) => read_tracks_meta(p)?,
        None => BTreeMap::new(),
    };

    let mut table = Table::open(&files.tracks)?;
    let cols = TRACK_COLUMNS
        .iter()
        .map(|c| table.require(c))
        .collect::<Result<Vec<_>, _>>()?;
    let class_col = table.columns.get("class").copied();
    let dir_col = table.columns.get("drivingDirection").copied();

    let mut stats = IngestStats::default();
    let mut per_vehicle: BTreeMap<String, (VehicleMeta, Vec<(u64, Row)>)> = BTreeMap::new();
    let mut dropped = std::collections::BTreeSet::new();
    for (line, rec) in table.rows()? {
        stats.rows += 1;
        let num = |i: usize| table.number(&rec, line, cols[i], TRACK_COLUMNS[i]);
        let frame = num(0)?;
        if frame.fract() != 0.0 {
            return Err(table.parse_err(line, format!("frame `{frame}` is not an integer")));
        }
        let id = rec.get(cols[1]).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(table.parse_err(line, "empty vehicle id".into()));
        }
        let row = Row {
            frame: frame as i64,
            x: num(2)?,
            y: num(3)?,
            width: num(4)?,
            height: num(5)?,
            vx: num(6)?,
            vy: num(7)?,
            ax: num(8)?,
        };
        num(9)?;
        if row.width <= 0.0 || row.height <= 0.0 {
            return Err(table.parse_err(line, "vehicle extent must be positive".into()));
        }
        let mut vm = vehicle_meta.get(&id).cloned().unwrap_or_default();
        if let Some(c) = class_col.and_then(|c| rec.get(c)) {
            vm.class = Some(c.to_string());
        }
        if let Some(d) = dir_col.and_then(|c| rec.get(c)).and_then(parse_direction) {
            vm.direction = Some(d);
        }
        let is_car = vm.class.as_deref().map(|c| c.eq_ignore_ascii_case("car"));
        if cfg.cars_only && is_car == Some(false) {
            stats.rows_dropped_class += 1;
            dropped.insert(id);
            continue;
        }
        per_vehicle.entry(id).or_insert_with(|| (vm, Vec::new())).1.push((line, row));
    }
    stats.vehicles_dropped_class = dropped.len();

    let mut by_direction: BTreeMap<Direction, Vec<(String, VehicleDims, Vec<Row>)>> = BTreeMap::new();
    for (id, (vm, mut rows)) in per_vehicle {
        rows.sort_by_key(|(_, r)| r.frame);
        for w in rows.windows(2) {
            if w[1].1.frame != w[0].1.frame + 1 {
                return Err(table.parse_err(
                    w[1].0,
                    format!(
                        "frames of vehicle {id} are not contiguous ({} follows {})",
                        w[1].1.frame, w[0].1.frame
                    ),
                ));
            }
        }
        let direction = vm.direction.unwrap_or_else(|| {
            let mean_vx = rows.iter().map(|(_, r)| r.vx).sum::<f64>() / rows.len() as f64;
            if mean_vx < 0.0 {
                Direction::Upper
            } else {
                Direction::Lower
            }
        });
        let first = rows[0].1;
        let dims = VehicleDims::new(first.width, first.height);
        by_direction
            .entry(direction)
            .or_default()
            .push((id, dims, rows.into_iter().map(|(_, r)| r).collect()));
    }

    let mut directions = Vec::new();
    for (direction, mut vehicles) in by_direction {
        let marks = match direction {
            Direction::Upper => &meta.upper,
            Direction::Lower => &meta.lower,
        };
        if marks.is_empty() {
            return Err(IngestError::Invalid {
                file: files.recording_meta.display().to_string(),
                message: format!("vehicles drive in the {} direction but it has no lane markings", direction.name()),
            });
        }
        let (y_ref, bounds) = frame_of(direction, marks);
        vehicles.sort_by(|a, b| id_key(&a.0).cmp(&id_key(&b.0)));
        let series: Vec<VehicleSeries> = vehicles
            .into_iter()
            .map(|(id, dims, rows)| VehicleSeries {
                id,
                dims,
                first_frame: rows[0].frame,
                states: rows
                    .iter()
                    .map(|r| to_curvilinear(r, direction, y_ref, cfg.convention))
                    .collect(),
            })
            .collect();
        let (s_lo, s_hi) = series
            .iter()
            .flat_map(|v| v.states.iter().map(move |st| (st.s - v.dims.length, st.s)))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (r, f)| (lo.min(r), hi.max(f)));
        let road = straight_road(&bounds, s_lo - 50.0, s_hi + 50.0, Zone::Main, &format!("{}-", direction.name()))
            .map_err(|e| IngestError::Invalid {
                file: files.recording_meta.display().to_string(),
                message: e.to_string(),
            })?;
        stats.vehicles += series.len();
        directions.push(DirectionData {
            direction,
            road,
            vehicles: series,
        });
    }

    Ok(Recording {
        id: files.id.clone(),
        frame_rate: meta.frame_rate,
        directions,
        stats,
    })
}

/// Reads every recording under `dir`.
pub fn ingest_dir(dir: &Path, cfg: &IngestConfig) -> Result<Vec<Recording>, IngestError> {
    discover(dir)?.iter().map(|f| ingest(f, cfg)).collect()
}
