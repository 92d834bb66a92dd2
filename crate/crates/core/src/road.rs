//! Lanelet road network in curvilinear form.
//!
//! Lanelets are axis-aligned boxes in `(s, d)` space. Lanes are the
//! connected predecessor/successor chains of lanelets sharing one attribute,
//! and two lanes are adjacent when some of their lanelets overlap
//! longitudinally and share a lateral boundary.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::trace::{VehicleDims, VehicleState};

const BOUND_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoadError {
    #[error("lanelet `{from}` links to `{to}` with a different attribute")]
    InvalidChain { from: String, to: String },
    #[error("lanelet `{0}` would belong to more than one lane")]
    DuplicateMembership(String),
    #[error("lanelet `{from}` references unknown lanelet `{to}`")]
    UnknownReference { from: String, to: String },
    #[error("duplicate lanelet id `{0}`")]
    DuplicateId(String),
    #[error("lanelet `{0}` has degenerate bounds")]
    DegenerateLanelet(String),
    #[error("map parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Zone {
    #[serde(rename = "mainZone", alias = "mainRoad")]
    Main,
    #[serde(rename = "mergeZone")]
    Merge,
    #[serde(rename = "departZone")]
    Depart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaneAttr {
    Main,
    Merge,
    Departure,
}

fn id_string<'de, D: Deserializer<'de>>(de: D) -> Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Id {
        S(String),
        N(i64),
    }
    Ok(match Id::deserialize(de)? {
        Id::S(s) => s,
        Id::N(n) => n.to_string(),
    })
}

fn opt_id_string<'de, D: Deserializer<'de>>(de: D) -> Result<Option<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Id {
        S(String),
        N(i64),
    }
    Ok(Option::<Id>::deserialize(de)?.map(|id| match id {
        Id::S(s) => s,
        Id::N(n) => n.to_string(),
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lanelet {
    #[serde(deserialize_with = "id_string")]
    pub id: String,
    pub zone: Zone,
    pub attr: LaneAttr,
    pub s_min: f64,
    pub s_max: f64,
    /// Right boundary offset from the reference path.
    pub d_right: f64,
    /// Left boundary offset; always greater than `d_right`.
    pub d_left: f64,
    #[serde(default, deserialize_with = "opt_id_string")]
    pub pred: Option<String>,
    #[serde(default, deserialize_with = "opt_id_string")]
    pub succ: Option<String>,
}

impl Lanelet {
    /// Signed occupancy margin: the smaller of the longitudinal and lateral
    /// overlap lengths between the footprint and this lanelet. Positive iff
    /// the vehicle occupies the lanelet.
    pub fn occupancy_margin(&self, state: &VehicleState, dims: &VehicleDims) -> f64 {
        let s_overlap = state.s.min(self.s_max) - (state.s - dims.length).max(self.s_min);
        let d_overlap = state.d.min(self.d_left) - (state.d - dims.width).max(self.d_right);
        s_overlap.min(d_overlap)
    }
}

/// True iff the vehicle footprint overlaps the lanelet with positive measure.
pub fn occ(state: &VehicleState, dims: &VehicleDims, lanelet: &Lanelet) -> bool {
    lanelet.occupancy_margin(state, dims) > 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lane {
    pub id: String,
    /// Lanelet indices ordered from upstream to downstream.
    pub lanelets: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadNetwork {
    lanelets: Vec<Lanelet>,
    lanes: Vec<Lane>,
    lane_of: Vec<usize>,
    adjacency: Vec<BTreeSet<usize>>,
    lanelet_index: HashMap<String, usize>,
    lane_index: HashMap<String, usize>,
}

impl RoadNetwork {
    pub fn lanelets(&self) -> &[Lanelet] {
        &self.lanelets
    }

    pub fn lanes(&self) -> &[Lane] {
        &self.lanes
    }

    pub fn lane_index(&self, id: &str) -> Option<usize> {
        self.lane_index.get(id).copied()
    }

    pub fn lane(&self, id: &str) -> Option<&Lane> {
        self.lane_index(id).map(|i| &self.lanes[i])
    }

    pub fn lanelet(&self, id: &str) -> Option<&Lanelet> {
        self.lanelet_index.get(id).map(|&i| &self.lanelets[i])
    }

    /// Lane containing the given lanelet.
    pub fn lane_of_lanelet(&self, lanelet_id: &str) -> Option<&Lane> {
        self.lanelet_index
            .get(lanelet_id)
            .map(|&i| &self.lanes[self.lane_of[i]])
    }

    /// Indices of lanes adjacent to lane `lane`.
    pub fn adjacent_lanes(&self, lane: usize) -> &BTreeSet<usize> {
        &self.adjacency[lane]
    }

    pub fn adj_lane_ids(&self, id: &str) -> Vec<&str> {
        self.lane_index(id)
            .map(|i| {
                self.adjacency[i]
                    .iter()
                    .map(|&j| self.lanes[j].id.as_str())
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn lane_margin(&self, lane: usize, state: &VehicleState, dims: &VehicleDims) -> f64 {
        self.lanes[lane]
            .lanelets
            .iter()
            .map(|&l| self.lanelets[l].occupancy_margin(state, dims))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn at_lane(&self, lane: usize, state: &VehicleState, dims: &VehicleDims) -> bool {
        self.lane_margin(lane, state, dims) > 0.0
    }

    pub fn zone_margin(&self, zone: Zone, state: &VehicleState, dims: &VehicleDims) -> f64 {
        self.lanelets
            .iter()
            .filter(|l| l.zone == zone)
            .map(|l| l.occupancy_margin(state, dims))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn on_main_road(&self, state: &VehicleState, dims: &VehicleDims) -> bool {
        self.zone_margin(Zone::Main, state, dims) > 0.0
    }

    pub fn in_merge_zone(&self, state: &VehicleState, dims: &VehicleDims) -> bool {
        self.zone_margin(Zone::Merge, state, dims) > 0.0
    }

    pub fn in_depart_zone(&self, state: &VehicleState, dims: &VehicleDims) -> bool {
        self.zone_margin(Zone::Depart, state, dims) > 0.0
    }

    /// Lane whose lanelet contains the footprint's lateral centre at `s`,
    /// falling back to the lane with the largest occupancy margin.
    pub fn lane_at(&self, state: &VehicleState, dims: &VehicleDims) -> Option<usize> {
        let centre_d = state.d - dims.width / 2.0;
        let centre_s = state.s - dims.length / 2.0;
        let by_centre = self.lanelets.iter().position(|l| {
            centre_d >= l.d_right && centre_d < l.d_left && centre_s >= l.s_min && centre_s < l.s_max
        });
        if let Some(l) = by_centre {
            return Some(self.lane_of[l]);
        }
        (0..self.lanes.len())
            .map(|i| (i, self.lane_margin(i, state, dims)))
            .filter(|(_, m)| *m > 0.0)
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.lanelets).expect("lanelets serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, RoadError> {
        let lanelets: Vec<Lanelet> =
            serde_json::from_str(text).map_err(|e| RoadError::Parse(e.to_string()))?;
        build_lanes(lanelets)
    }
}

fn left_adjacent(l1: &Lanelet, l2: &Lanelet) -> bool {
    // l1 is left of l2: they share l2's left bound and overlap along s.
    let s_overlap = l1.s_max.min(l2.s_max) - l1.s_min.max(l2.s_min);
    s_overlap > BOUND_EPS && (l1.d_right - l2.d_left).abs() <= BOUND_EPS
}

/// Groups lanelets into lanes and derives lane adjacency.
pub fn build_lanes(lanelets: Vec<Lanelet>) -> Result<RoadNetwork, RoadError> {
    let mut lanelet_index = HashMap::with_capacity(lanelets.len());
    for (i, l) in lanelets.iter().enumerate() {
        if !(l.d_right < l.d_left && l.s_min < l.s_max) || ![l.s_min, l.s_max, l.d_right, l.d_left].iter().all(|x| x.is_finite()) {
            return Err(RoadError::DegenerateLanelet(l.id.clone()));
        }
        if lanelet_index.insert(l.id.clone(), i).is_some() {
            return Err(RoadError::DuplicateId(l.id.clone()));
        }
    }
    let resolve = |from: &Lanelet, to: &str| {
        lanelet_index
            .get(to)
            .copied()
            .ok_or_else(|| RoadError::UnknownReference {
                from: from.id.clone(),
                to: to.to_string(),
            })
    };

    // Directed successor edges from both pred and succ declarations.
    let n = lanelets.len();
    let mut next: Vec<Option<usize>> = vec![None; n];
    let mut prev: Vec<Option<usize>> = vec![None; n];
    let mut link = |from: usize, to: usize| -> Result<(), RoadError> {
        if lanelets[from].attr != lanelets[to].attr {
            return Err(RoadError::InvalidChain {
                from: lanelets[from].id.clone(),
                to: lanelets[to].id.clone(),
            });
        }
        match next[from] {
            Some(existing) if existing != to => {
                return Err(RoadError::DuplicateMembership(lanelets[from].id.clone()))
            }
            _ => next[from] = Some(to),
        }
        match prev[to] {
            Some(existing) if existing != from => {
                return Err(RoadError::DuplicateMembership(lanelets[to].id.clone()))
            }
            _ => prev[to] = Some(from),
        }
        Ok(())
    };
    for (i, l) in lanelets.iter().enumerate() {
        if let Some(s) = &l.succ {
            link(i, resolve(l, s)?)?;
        }
        if let Some(p) = &l.pred {
            link(resolve(l, p)?, i)?;
        }
    }

    let mut lane_of = vec![usize::MAX; n];
    let mut lanes = Vec::new();
    for start in 0..n {
        if lane_of[start] != usize::MAX {
            continue;
        }
        // Walk upstream to the head of the chain (guarding against cycles).
        let mut head = start;
        let mut steps = 0;
        while let Some(p) = prev[head] {
            if p == start || steps > n {
                break;
            }
            head = p;
            steps += 1;
        }
        let lane_idx = lanes.len();
        let mut members = Vec::new();
        let mut cur = Some(head);
        while let Some(c) = cur {
            if lane_of[c] != usize::MAX {
                if lane_of[c] == lane_idx {
                    break;
                }
                return Err(RoadError::DuplicateMembership(lanelets[c].id.clone()));
            }
            lane_of[c] = lane_idx;
            members.push(c);
            cur = next[c];
        }
        lanes.push(Lane {
            id: lanelets[head].id.clone(),
            lanelets: members,
        });
    }

    let mut adjacency = vec![BTreeSet::new(); lanes.len()];
    for i in 0..n {
        for j in 0..n {
            if i != j && lane_of[i] != lane_of[j] && left_adjacent(&lanelets[i], &lanelets[j]) {
                adjacency[lane_of[i]].insert(lane_of[j]);
                adjacency[lane_of[j]].insert(lane_of[i]);
            }
        }
    }
    let lane_index = lanes
        .iter()
        .enumerate()
        .map(|(i, l)| (l.id.clone(), i))
        .collect();
    Ok(RoadNetwork {
        lanelets,
        lanes,
        lane_of,
        adjacency,
        lanelet_index,
        lane_index,
    })
}

/// Straight multi-lane road: one single-lanelet lane per pair of consecutive
/// lateral boundaries (ordered right to left).
pub fn straight_road(
    boundaries: &[f64],
    s_min: f64,
    s_max: f64,
    zone: Zone,
    id_prefix: &str,
) -> Result<RoadNetwork, RoadError> {
    let lanelets = boundaries
        .windows(2)
        .enumerate()
        .map(|(k, w)| Lanelet {
            id: format!("{id_prefix}{}", k + 1),
            zone,
            attr: LaneAttr::Main,
            s_min,
            s_max,
            d_right: w[0],
            d_left: w[1],
            pred: None,
            succ: None,
        })
        .collect();
    build_lanes(lanelets)
}
