//! Recording ingest, pair filtering, trimming and scenario evaluation.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rss::RssParams;
use crate::scenario::ScenarioParams;
use crate::stl::EvalError;
use crate::trace::{AngleConvention, InterpolationMode};

pub mod fixture;
pub mod highd;
pub mod pairs;
pub mod report;
pub mod store;

pub use highd::{discover, ingest, ingest_dir, Direction, IngestConfig, IngestError, IngestStats, Recording};
pub use pairs::{enumerate_pairs, filter_and_trim, CandidatePair, DisturbTrace, FilterStats, PairScan};
pub use report::{evaluate, format_recall, render_table, EvaluationReport, TraceMatches};
pub use store::{check_params, read_traces, write_traces, Manifest, StoreError};

/// Parameters that shape the disturbance traces and their evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineParams {
    pub rss: RssParams,
    pub scenario: ScenarioParams,
    pub mode: InterpolationMode,
    #[serde(rename = "angle_convention")]
    pub convention: AngleConvention,
    pub cars_only: bool,
    pub three_vehicle: bool,
}

impl PipelineParams {
    pub fn validate(&self) -> Result<(), String> {
        self.rss.validate()?;
        self.scenario.validate()
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid parameters: {0}")]
    Params(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunStats {
    pub recordings: usize,
    pub rows: usize,
    pub rows_dropped_class: usize,
    pub vehicles: usize,
    pub pairs_scanned: usize,
    pub pairs_violating: usize,
    pub pairs_kept: usize,
    pub dropped_no_danger: usize,
    pub dropped_after_trim: usize,
}

impl RunStats {
    pub fn to_map(&self) -> BTreeMap<String, usize> {
        let v = serde_json::to_value(self).expect("stats serialize");
        serde_json::from_value(v).expect("stats are counters")
    }
}

/// Filters and trims the pairs of every recording, in recording order.
pub fn filter_recordings(recordings: &[Recording], params: &PipelineParams) -> Result<(Vec<DisturbTrace>, RunStats), PipelineError> {
    params.validate().map_err(PipelineError::Params)?;
    let mut stats = RunStats {
        recordings: recordings.len(),
        ..RunStats::default()
    };
    let mut out = Vec::new();
    for rec in recordings {
        stats.rows += rec.stats.rows;
        stats.rows_dropped_class += rec.stats.rows_dropped_class;
        stats.vehicles += rec.stats.vehicles;
        let scan = enumerate_pairs(rec, params);
        stats.pairs_scanned += scan.scanned;
        stats.pairs_violating += scan.pairs.len();
        let (kept, fs) = filter_and_trim(rec, &scan.pairs, params)?;
        stats.pairs_kept += fs.kept;
        stats.dropped_no_danger += fs.dropped_no_danger;
        stats.dropped_after_trim += fs.dropped_after_trim;
        out.extend(kept);
    }
    Ok((out, stats))
}

/// Ingests every recording in `data_dir` and filters it.
pub fn filter_dir(
    data_dir: &Path,
    params: &PipelineParams,
    frame_rate: Option<f64>,
) -> Result<(Vec<DisturbTrace>, RunStats), PipelineError> {
    let cfg = IngestConfig {
        frame_rate,
        cars_only: params.cars_only,
        convention: params.convention,
    };
    let recordings = ingest_dir(data_dir, &cfg)?;
    filter_recordings(&recordings, params)
}

/// Runs `f` on a pool of `jobs` worker threads (all cores when `None`).
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        builder = builder.num_threads(n.max(1));
    }
    builder.build().expect("thread pool starts").install(f)
}
