use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use scenmon_core::road::{RoadNetwork, Zone};
use scenmon_core::scenario::{zone_of, SCENARIO_COUNT};
use scenmon_core::stl::Bindings;
use scenmon_core::synth;
use scenmon_core::trace::Trace;
use tokio::sync::RwLock;

use crate::ServiceConfig;

#[derive(Debug, Clone)]
pub struct StoredTrace {
    pub trace: Arc<Trace>,
    pub map: String,
    pub road: Arc<RoadNetwork>,
    /// Bindings used when a request leaves a name unbound.
    pub defaults: Bindings,
}

#[derive(Debug, Clone, serde::Serialize)]
pub(crate) struct Snapshot {
    pub label: Option<String>,
    pub formula: String,
}

#[derive(Debug, Default)]
pub(crate) struct Session {
    pub traces: BTreeMap<String, StoredTrace>,
    pub maps: BTreeMap<String, Arc<RoadNetwork>>,
    pub snapshots: Vec<Snapshot>,
}

pub(crate) struct AppState {
    pub cfg: ServiceConfig,
    pub builtin_maps: BTreeMap<String, Arc<RoadNetwork>>,
    pub fixtures: BTreeMap<String, StoredTrace>,
    pub sessions: RwLock<HashMap<String, Session>>,
}

pub(crate) fn builtin_maps() -> BTreeMap<String, Arc<RoadNetwork>> {
    [("main", Zone::Main), ("merge", Zone::Merge), ("depart", Zone::Depart)]
        .into_iter()
        .map(|(name, z)| (name.to_string(), Arc::new(synth::zone_road(z))))
        .collect()
}

fn map_name(z: Zone) -> &'static str {
    match z {
        Zone::Main => "main",
        Zone::Merge => "merge",
        Zone::Depart => "depart",
    }
}

/// One generated trace per scenario, named `scenario-<i>`, with its role
/// names bound to themselves and `L` bound to the scenario's lane.
pub fn fixtures() -> BTreeMap<String, StoredTrace> {
    let maps = builtin_maps();
    (1..=SCENARIO_COUNT)
        .map(|i| {
            let case = synth::generate(i, 0);
            let map = map_name(zone_of(i));
            let road = maps[map].clone();
            let defaults = case.bindings(&road).expect("generated vehicles start on a lane");
            (
                format!("scenario-{i}"),
                StoredTrace {
                    trace: Arc::new(case.trace),
                    map: map.to_string(),
                    road,
                    defaults,
                },
            )
        })
        .collect()
}

impl AppState {
    pub fn new(cfg: ServiceConfig) -> Self {
        Self {
            cfg,
            builtin_maps: builtin_maps(),
            fixtures: fixtures(),
            sessions: RwLock::new(HashMap::new()),
        }
    }
}
