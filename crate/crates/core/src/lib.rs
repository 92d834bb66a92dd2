//! Offline monitoring of highway traffic-disturbance scenarios.
//!
//! Traces of vehicles in curvilinear road coordinates are checked against
//! signal temporal logic formulas whose atoms measure lane occupancy,
//! relative position and RSS safe-distance violations.

use std::sync::OnceLock;

pub mod pipeline;
pub mod road;
pub mod rss;
pub mod scenario;
pub mod stl;
pub mod synth;
pub mod trace;

/// Registry with the channel, road, relation and RSS atoms.
pub fn standard_registry() -> &'static stl::AtomRegistry {
    static REGISTRY: OnceLock<stl::AtomRegistry> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut reg = stl::AtomRegistry::new();
        stl::register_channels(&mut reg);
        scenario::register_atoms(&mut reg);
        rss::register_atoms(&mut reg);
        reg
    })
}
