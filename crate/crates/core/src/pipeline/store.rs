//! Directory layout for disturbance traces:
//!
//! ```text
//! manifest.json
//! maps/<map>.json
//! traces/<recording>-<direction>-<sv>-<pov>.csv
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::highd::Direction;
use super::pairs::DisturbTrace;
use super::PipelineParams;
use crate::road::RoadNetwork;
use crate::trace::{read_csv, write_csv, TraceError};

pub const MANIFEST: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("manifest `{key}` is {manifest} but the configuration says {config}")]
    ManifestMismatch { key: String, manifest: String, config: String },
    #[error("{path}: {source}")]
    Trace {
        path: PathBuf,
        #[source]
        source: TraceError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub recording: String,
    pub direction: Direction,
    pub sv: String,
    pub pov: String,
    #[serde(default)]
    pub pov1_candidates: Vec<String>,
    pub map: String,
    pub domain: [f64; 2],
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub params: PipelineParams,
    /// Free-form counters from the run that produced the traces.
    #[serde(default)]
    pub stats: BTreeMap<String, usize>,
    pub maps: BTreeMap<String, String>,
    pub traces: Vec<ManifestEntry>,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes the traces with their maps and a manifest. Traces are written in
/// the given order.
pub fn write_traces(
    dir: &Path,
    traces: &[DisturbTrace],
    params: &PipelineParams,
    stats: BTreeMap<String, usize>,
) -> Result<Manifest, StoreError> {
    for sub in ["maps", "traces"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(io(&p))?;
    }
    let mut maps = BTreeMap::new();
    let mut entries = Vec::with_capacity(traces.len());
    for dt in traces {
        if !maps.contains_key(&dt.map) {
            let rel = format!("maps/{}.json", dt.map);
            let p = dir.join(&rel);
            fs::write(&p, dt.road.to_json()).map_err(io(&p))?;
            maps.insert(dt.map.clone(), rel);
        }
        let rel = format!("traces/{}.csv", dt.key());
        let p = dir.join(&rel);
        let mut buf = Vec::new();
        write_csv(&dt.trace, &mut buf).map_err(|e| StoreError::Format {
            path: p.clone(),
            message: e.to_string(),
        })?;
        fs::write(&p, buf).map_err(io(&p))?;
        let domain = dt.trace.domain();
        entries.push(ManifestEntry {
            file: rel,
            recording: dt.recording.clone(),
            direction: dt.direction,
            sv: dt.sv.clone(),
            pov: dt.pov.clone(),
            pov1_candidates: dt.pov1_candidates.clone(),
            map: dt.map.clone(),
            domain: [domain.lo, domain.hi],
            samples: dt.trace.times().len(),
        });
    }
    let manifest = Manifest {
        format: FORMAT_VERSION,
        params: *params,
        stats,
        maps,
        traces: entries,
    };
    let p = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&p, text + "\n").map_err(io(&p))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, StoreError> {
    let p = dir.join(MANIFEST);
    let text = fs::read_to_string(&p).map_err(io(&p))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| StoreError::Format {
        path: p.clone(),
        message: e.to_string(),
    })?;
    if m.format != FORMAT_VERSION {
        return Err(StoreError::Format {
            path: p,
            message: format!("unsupported manifest format {}", m.format),
        });
    }
    Ok(m)
}

/// Fails when a parameter that shapes the traces differs between the
/// manifest and the configuration.
pub fn check_params(manifest: &PipelineParams, config: &PipelineParams) -> Result<(), StoreError> {
    let mismatch = |key: &str, m: String, c: String| {
        Err(StoreError::ManifestMismatch {
            key: key.into(),
            manifest: m,
            config: c,
        })
    };
    if manifest.scenario.min_danger != config.scenario.min_danger {
        return mismatch("scenario.min_danger", manifest.scenario.min_danger.to_string(), config.scenario.min_danger.to_string());
    }
    if manifest.scenario.min_safe != config.scenario.min_safe {
        return mismatch("scenario.min_safe", manifest.scenario.min_safe.to_string(), config.scenario.min_safe.to_string());
    }
    if manifest.rss != config.rss {
        return mismatch("rss", format!("{:?}", manifest.rss), format!("{:?}", config.rss));
    }
    if manifest.mode != config.mode {
        return mismatch("mode", format!("{:?}", manifest.mode), format!("{:?}", config.mode));
    }
    if manifest.convention != config.convention {
        return mismatch("angle_convention", format!("{:?}", manifest.convention), format!("{:?}", config.convention));
    }
    if manifest.three_vehicle != config.three_vehicle {
        return mismatch("three_vehicle", manifest.three_vehicle.to_string(), config.three_vehicle.to_string());
    }
    Ok(())
}

/// Loads all traces of a directory in manifest order.
pub fn read_traces(dir: &Path) -> Result<(Manifest, Vec<DisturbTrace>), StoreError> {
    let manifest = read_manifest(dir)?;
    let mut roads: BTreeMap<&str, Arc<RoadNetwork>> = BTreeMap::new();
    for (name, rel) in &manifest.maps {
        let p = dir.join(rel);
        let text = fs::read_to_string(&p).map_err(io(&p))?;
        let road = RoadNetwork::from_json(&text).map_err(|e| StoreError::Format {
            path: p.clone(),
            message: e.to_string(),
        })?;
        roads.insert(name, Arc::new(road));
    }
    let mut traces = Vec::with_capacity(manifest.traces.len());
    for e in &manifest.traces {
        let p = dir.join(&e.file);
        let road = roads.get(e.map.as_str()).cloned().ok_or_else(|| StoreError::Format {
            path: dir.join(MANIFEST),
            message: format!("trace {} refers to unknown map `{}`", e.file, e.map),
        })?;
        let file = fs::File::open(&p).map_err(io(&p))?;
        let trace = read_csv(std::io::BufReader::new(file), Some(e.domain[1])).map_err(|source| StoreError::Trace {
            path: p.clone(),
            source,
        })?;
        traces.push(DisturbTrace {
            recording: e.recording.clone(),
            direction: e.direction,
            sv: e.sv.clone(),
            pov: e.pov.clone(),
            pov1_candidates: e.pov1_candidates.clone(),
            map: e.map.clone(),
            road,
            trace,
        });
    }
    Ok((manifest, traces))
}
