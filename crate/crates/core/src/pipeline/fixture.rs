//! Writers for small recordings in the highD layout, and ready-made
//! disturbance trace sets from the synthetic generator.

use std::fs;
use std::io;
use std::path::Path;
use std::sync::Arc;

use super::highd::Direction;
use super::pairs::DisturbTrace;
use crate::road::Zone;
use crate::scenario::zone_of;
use crate::synth::{self, CAR};
use crate::trace::{VehicleDims, VehicleState};

/// Lane markings (image ordinates) matching the synthetic three-lane road in
/// each direction.
pub const LOWER_MARKINGS: [f64; 4] = [19.5, 23.0, 26.5, 30.0];
pub const UPPER_MARKINGS: [f64; 4] = [5.0, 8.5, 12.0, 15.5];

#[derive(Debug, Clone)]
pub struct FixtureVehicle {
    pub id: u64,
    pub class: String,
    pub direction: Direction,
    pub dims: VehicleDims,
    pub first_frame: i64,
    /// Path-aligned curvilinear states, one per frame.
    pub states: Vec<VehicleState>,
}

#[derive(Debug, Clone)]
pub struct FixtureRecording {
    pub id: String,
    pub frame_rate: f64,
    pub vehicles: Vec<FixtureVehicle>,
}

struct WorldRow {
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    ax: f64,
}

fn to_world(st: &VehicleState, dims: &VehicleDims, direction: Direction) -> WorldRow {
    let (v_lon, v_lat) = (st.v * st.theta.cos(), st.v * st.theta.sin());
    match direction {
        Direction::Lower => WorldRow {
            x: st.s - dims.length,
            y: LOWER_MARKINGS[3] - st.d,
            vx: v_lon,
            vy: -v_lat,
            ax: st.a,
        },
        Direction::Upper => WorldRow {
            x: -st.s,
            y: st.d - dims.width + UPPER_MARKINGS[0],
            vx: -v_lon,
            vy: v_lat,
            ax: -st.a,
        },
    }
}

fn join(m: &[f64]) -> String {
    m.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

impl FixtureRecording {
    pub fn new(id: &str) -> Self {
        Self {
            id: id.to_string(),
            frame_rate: 25.0,
            vehicles: Vec::new(),
        }
    }

    /// Writes `<id>_tracks.csv`, `<id>_tracksMeta.csv` and `<id>_recordingMeta.csv`.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        let mut tracks = csv::Writer::from_path(dir.join(format!("{}_tracks.csv", self.id)))?;
        tracks.write_record(super::highd::TRACK_COLUMNS)?;
        let mut meta = csv::Writer::from_path(dir.join(format!("{}_tracksMeta.csv", self.id)))?;
        meta.write_record(["id", "width", "height", "initialFrame", "finalFrame", "numFrames", "class", "drivingDirection"])?;
        for v in &self.vehicles {
            for (k, st) in v.states.iter().enumerate() {
                let w = to_world(st, &v.dims, v.direction);
                let lane = ((st.d - v.dims.width / 2.0) / synth::LANE_WIDTH).floor() as i64 + 2;
                tracks.write_record([
                    (v.first_frame + k as i64).to_string(),
                    v.id.to_string(),
                    w.x.to_string(),
                    w.y.to_string(),
                    v.dims.length.to_string(),
                    v.dims.width.to_string(),
                    w.vx.to_string(),
                    w.vy.to_string(),
                    w.ax.to_string(),
                    "0".to_string(),
                    lane.to_string(),
                ])?;
            }
            let dir_code = match v.direction {
                Direction::Upper => "1",
                Direction::Lower => "2",
            };
            meta.write_record([
                v.id.to_string(),
                v.dims.length.to_string(),
                v.dims.width.to_string(),
                v.first_frame.to_string(),
                (v.first_frame + v.states.len() as i64 - 1).to_string(),
                v.states.len().to_string(),
                v.class.clone(),
                dir_code.to_string(),
            ])?;
        }
        tracks.flush()?;
        meta.flush()?;
        let mut rec = csv::Writer::from_path(dir.join(format!("{}_recordingMeta.csv", self.id)))?;
        rec.write_record(["id", "frameRate", "upperLaneMarkings", "lowerLaneMarkings"])?;
        rec.write_record([
            self.id.clone(),
            self.frame_rate.to_string(),
            join(&UPPER_MARKINGS),
            join(&LOWER_MARKINGS),
        ])?;
        rec.flush()
    }

    /// Adds the vehicles of a generated main-road case, starting at
    /// `first_frame`, with ids from `first_id` on.
    pub fn add_case(&mut self, case: &synth::SynthCase, direction: Direction, first_frame: i64, first_id: u64) {
        for (k, track) in case.trace.tracks().iter().enumerate() {
            self.vehicles.push(FixtureVehicle {
                id: first_id + k as u64,
                class: "Car".into(),
                direction,
                dims: track.dims,
                first_frame,
                states: track.states.iter().map(|s| s.expect("generated vehicles are always present")).collect(),
            });
        }
    }
}

fn cruise(s0: f64, v: f64, d: f64, frames: usize, dt: f64) -> Vec<VehicleState> {
    (0..frames)
        .map(|k| VehicleState {
            s: s0 + v * k as f64 * dt,
            v,
            a: 0.0,
            d,
            theta: 0.0,
        })
        .collect()
}

/// Two cars in the middle lane at 20 m/s, 25 frames per second, from frame
/// 0. The follower's front is `gap(t)` metres behind the leader's front.
pub fn gap_schedule_pair(id: &str, frames: usize, gap: impl Fn(f64) -> f64) -> FixtureRecording {
    let mut rec = FixtureRecording::new(id);
    let dt = 1.0 / rec.frame_rate;
    let d = synth::lane_centre_d(1);
    let follower = cruise(100.0, 20.0, d, frames, dt);
    let leader = follower
        .iter()
        .enumerate()
        .map(|(k, st)| VehicleState {
            s: st.s + gap(k as f64 * dt),
            ..*st
        })
        .collect();
    for (id, states) in [(1, follower), (2, leader)] {
        rec.vehicles.push(FixtureVehicle {
            id,
            class: "Car".into(),
            direction: Direction::Lower,
            dims: CAR,
            first_frame: 0,
            states,
        });
    }
    rec
}

/// Safe for the first two seconds of every unsafe stretch: violating before
/// 2 s, safe on [2, 5), violating on [5, 10), safe until 14 s.
pub fn trim_fixture() -> FixtureRecording {
    gap_schedule_pair("02", 351, |t| if t < 2.0 - 1e-9 || (5.0 - 1e-9..10.0 - 1e-9).contains(&t) { 20.0 } else { 60.0 })
}

/// The standard corpus: recording `01` with one generated instance of each
/// main-road two-vehicle scenario in separate time slots (plus an
/// upper-direction cut-in and a lone truck), and the trim fixture as `02`.
pub fn write_corpus(dir: &Path) -> io::Result<()> {
    let mut rec = FixtureRecording::new("01");
    let slot = 400;
    for (k, index) in [1usize, 3, 4, 5, 6, 7, 8].into_iter().enumerate() {
        let case = synth::generate(index, 100 + k as u64);
        rec.add_case(&case, Direction::Lower, 1 + slot * k as i64, 10 * (k as u64 + 1));
    }
    let upper = synth::generate(1, 7);
    rec.add_case(&upper, Direction::Upper, 1, 900);
    rec.vehicles.push(FixtureVehicle {
        id: 999,
        class: "Truck".into(),
        direction: Direction::Lower,
        dims: VehicleDims::new(15.0, 2.5),
        first_frame: 1,
        states: cruise(900.0, 22.0, synth::lane_centre_d(0) + 0.35, 200, synth::DT),
    });
    rec.write(dir)?;
    trim_fixture().write(dir)
}

/// Generated disturbance traces for the given scenario indices, `per_index`
/// each, as if they had passed the filter. Vehicles keep their role names.
pub fn synthetic_disturb_traces(indices: &[usize], per_index: usize, seed: u64) -> Vec<DisturbTrace> {
    let maps: Vec<(Zone, &str, Arc<crate::road::RoadNetwork>)> = [Zone::Main, Zone::Merge, Zone::Depart]
        .into_iter()
        .map(|z| {
            let name = match z {
                Zone::Main => "main",
                Zone::Merge => "merge",
                Zone::Depart => "depart",
            };
            (z, name, Arc::new(synth::zone_road(z)))
        })
        .collect();
    let mut out = Vec::new();
    for &index in indices {
        let (_, map, road) = maps.iter().find(|(z, _, _)| *z == zone_of(index)).expect("every zone has a map");
        for k in 0..per_index {
            let case = synth::generate(index, seed.wrapping_add(k as u64));
            let (sv, pov) = case.danger_pair();
            let pov1_candidates = if case.roles.povs.len() == 2 {
                vec![case.roles.povs[0].clone()]
            } else {
                Vec::new()
            };
            out.push(DisturbTrace {
                recording: format!("s{index}n{k}"),
                direction: Direction::Lower,
                sv: sv.to_string(),
                pov: pov.to_string(),
                pov1_candidates,
                map: map.to_string(),
                road: road.clone(),
                trace: case.trace,
            });
        }
    }
    out
}
