//! Run configuration: a TOML file with dotted keys, overridden by flags of
//! the same name.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::Args;
use scenmon_core::pipeline::PipelineParams;
use scenmon_core::rss::RssParams;
use scenmon_core::scenario::{ScenarioParams, SpecSet, SpecVariant};
use scenmon_core::trace::{AngleConvention, InterpolationMode};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Directory with highD recordings.
    pub data_dir: Option<PathBuf>,
    /// Directory of disturbance traces (written by `filter`, read by `evaluate`).
    pub trace_dir: Option<PathBuf>,
    /// Directory for report files.
    pub out_dir: Option<PathBuf>,
    /// Lanelet map (JSON) for `check` and `exemplify`.
    pub map: Option<PathBuf>,
    pub rss: RssParams,
    pub scenario: ScenarioParams,
    /// `base`, `extA`, `ext` or `all`.
    pub spec_set: String,
    pub scenarios: Option<Vec<usize>>,
    pub mode: InterpolationMode,
    pub angle_convention: AngleConvention,
    pub frame_rate: Option<f64>,
    pub cars_only: bool,
    pub three_vehicle: bool,
    pub seed: u64,
    pub jobs: Option<usize>,
    pub addr: SocketAddr,
}

impl Default for Config {
    fn default() -> Self {
        let p = PipelineParams::default();
        Self {
            data_dir: None,
            trace_dir: None,
            out_dir: None,
            map: None,
            rss: p.rss,
            scenario: p.scenario,
            spec_set: "all".into(),
            scenarios: None,
            mode: p.mode,
            angle_convention: p.convention,
            frame_rate: None,
            cars_only: p.cars_only,
            three_vehicle: p.three_vehicle,
            seed: 0,
            jobs: None,
            addr: SocketAddr::from(([127, 0, 0, 1], 8080)),
        }
    }
}

/// Flags that override configuration keys.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Configuration file (TOML)
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long = "data_dir", alias = "data-dir", global = true, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    #[arg(long = "trace_dir", alias = "trace-dir", global = true, value_name = "DIR")]
    pub trace_dir: Option<PathBuf>,
    #[arg(long = "out_dir", alias = "out-dir", global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_name = "FILE")]
    pub map: Option<PathBuf>,
    #[arg(long = "rss.rho", global = true, value_name = "S")]
    pub rss_rho: Option<f64>,
    #[arg(long = "rss.a_max", global = true, value_name = "M/S2")]
    pub rss_a_max: Option<f64>,
    #[arg(long = "rss.b_min", global = true, value_name = "M/S2")]
    pub rss_b_min: Option<f64>,
    #[arg(long = "rss.b_max", global = true, value_name = "M/S2")]
    pub rss_b_max: Option<f64>,
    #[arg(long = "rss.a_max_lat", global = true, value_name = "M/S2")]
    pub rss_a_max_lat: Option<f64>,
    #[arg(long = "rss.b_min_lat", global = true, value_name = "M/S2")]
    pub rss_b_min_lat: Option<f64>,
    #[arg(long = "scenario.min_danger", global = true, value_name = "S")]
    pub min_danger: Option<f64>,
    #[arg(long = "scenario.min_safe", global = true, value_name = "S")]
    pub min_safe: Option<f64>,
    /// base, extA, ext or all
    #[arg(long = "spec_set", alias = "spec-set", global = true)]
    pub spec_set: Option<String>,
    /// Comma-separated scenario indices
    #[arg(long, global = true, value_delimiter = ',')]
    pub scenarios: Option<Vec<usize>>,
    /// step_hold or linear
    #[arg(long, global = true)]
    pub mode: Option<String>,
    /// path_aligned or literal
    #[arg(long = "angle_convention", alias = "angle-convention", global = true)]
    pub angle_convention: Option<String>,
    #[arg(long = "frame_rate", alias = "frame-rate", global = true)]
    pub frame_rate: Option<f64>,
    #[arg(long = "cars_only", alias = "cars-only", global = true, num_args = 0..=1, default_missing_value = "true")]
    pub cars_only: Option<bool>,
    #[arg(long = "three_vehicle", alias = "three-vehicle", global = true, num_args = 0..=1, default_missing_value = "true")]
    pub three_vehicle: Option<bool>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub addr: Option<SocketAddr>,
}

fn enum_value<T: for<'de> Deserialize<'de>>(key: &str, text: &str) -> Result<T, CliError> {
    T::deserialize(serde::de::value::StrDeserializer::<serde::de::value::Error>::new(text))
        .map_err(|e| CliError::Usage(format!("--{key}: {e}")))
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(o: &Overrides) -> Result<Self, CliError> {
        let mut c = match &o.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
            }
            None => Self::default(),
        };
        macro_rules! set {
            ($($field:expr => $flag:expr),* $(,)?) => {
                $(if let Some(v) = $flag.clone() { $field = v; })*
            };
        }
        set! {
            c.rss.rho => o.rss_rho,
            c.rss.a_max => o.rss_a_max,
            c.rss.b_min => o.rss_b_min,
            c.rss.b_max => o.rss_b_max,
            c.rss.a_max_lat => o.rss_a_max_lat,
            c.rss.b_min_lat => o.rss_b_min_lat,
            c.scenario.min_danger => o.min_danger,
            c.scenario.min_safe => o.min_safe,
            c.spec_set => o.spec_set,
            c.cars_only => o.cars_only,
            c.three_vehicle => o.three_vehicle,
            c.seed => o.seed,
            c.addr => o.addr,
        }
        set! {
            c.data_dir => o.data_dir.as_ref().map(|p| Some(p.clone())),
            c.trace_dir => o.trace_dir.as_ref().map(|p| Some(p.clone())),
            c.out_dir => o.out_dir.as_ref().map(|p| Some(p.clone())),
            c.map => o.map.as_ref().map(|p| Some(p.clone())),
            c.scenarios => o.scenarios.as_ref().map(|s| Some(s.clone())),
            c.frame_rate => o.frame_rate.map(Some),
            c.jobs => o.jobs.map(Some),
        }
        if let Some(m) = &o.mode {
            c.mode = enum_value("mode", m)?;
        }
        if let Some(m) = &o.angle_convention {
            c.angle_convention = enum_value("angle_convention", m)?;
        }
        c.params().validate().map_err(CliError::Usage)?;
        c.spec_sets()?;
        Ok(c)
    }

    pub fn params(&self) -> PipelineParams {
        PipelineParams {
            rss: self.rss,
            scenario: self.scenario,
            mode: self.mode,
            convention: self.angle_convention,
            cars_only: self.cars_only,
            three_vehicle: self.three_vehicle,
        }
    }

    /// Spec sets selected by `spec_set` and `scenarios`. Without explicit
    /// indices the two-vehicle main-road scenarios are used, plus the
    /// three-vehicle one in three-vehicle mode.
    pub fn spec_sets(&self) -> Result<Vec<SpecSet>, CliError> {
        let variants: Vec<SpecVariant> = if self.spec_set == "all" {
            SpecVariant::ALL.to_vec()
        } else {
            vec![self.spec_set.parse().map_err(|e| CliError::Usage(format!("spec_set: {e}")))?]
        };
        let indices = match &self.scenarios {
            Some(s) => s.clone(),
            None if self.three_vehicle => vec![1, 2, 3, 4, 5, 6, 7, 8],
            None => vec![1, 3, 4, 5, 6, 7, 8],
        };
        variants
            .into_iter()
            .map(|v| SpecSet::new(v, indices.clone()).map_err(|e| CliError::Usage(format!("scenarios: {e}"))))
            .collect()
    }

    pub fn require<'a>(&self, key: &str, value: &'a Option<PathBuf>) -> Result<&'a Path, CliError> {
        value
            .as_deref()
            .ok_or_else(|| CliError::Usage(format!("`{key}` is not set (config key or --{key})")))
    }
}
