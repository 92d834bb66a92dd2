//! RSS invariants on single inputs, shared by the property tests and the
//! acceptance run.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use scenmon_core::rss::{
    d_rss_lat, d_rss_lon, danger_ahead, danger_ahead_rs, danger_left, danger_left_rs, rss_violation, Footprint,
    RssParams,
};
use scenmon_core::trace::{AngleConvention, VehicleDims, VehicleState};

pub fn random_footprint(rng: &mut ChaCha8Rng) -> Footprint {
    Footprint::new(
        VehicleState {
            s: rng.gen_range(-100.0..100.0),
            v: rng.gen_range(0.0..45.0),
            a: rng.gen_range(-8.0..5.0),
            d: rng.gen_range(-8.0..8.0),
            theta: rng.gen_range(-0.6..0.6),
        },
        VehicleDims::new(rng.gen_range(3.0..20.0), rng.gen_range(1.5..3.0)),
    )
}

/// Clamp and monotonicity of the safe distances at one speed pair, moving
/// each speed up by `dv >= 0`.
pub fn check_distances(v_r: f64, v_f: f64, dv: f64, lat: (f64, f64), p: &RssParams) -> Result<(), String> {
    let lon = d_rss_lon(v_r, v_f, p);
    if lon < 0.0 || d_rss_lat(lat.0, lat.1, p) < 0.0 {
        return Err(format!("negative distance at v_r={v_r}, v_f={v_f}, lat={lat:?}"));
    }
    if d_rss_lon(v_r + dv, v_f, p) < lon {
        return Err(format!("d_rss_lon decreases in v_r at {v_r} + {dv}"));
    }
    if d_rss_lon(v_r, v_f + dv, p) > lon {
        return Err(format!("d_rss_lon increases in v_f at {v_f} + {dv}"));
    }
    Ok(())
}

/// Symmetry of the violation and sign agreement of the reciprocal forms.
pub fn check_pair(a: &Footprint, b: &Footprint, p: &RssParams) -> Result<(), String> {
    for conv in [AngleConvention::PathAligned, AngleConvention::Literal] {
        if rss_violation(a, b, p, conv) != rss_violation(b, a, p, conv) {
            return Err(format!("asymmetric violation for {a:?} / {b:?}"));
        }
        let ahead = danger_ahead_rs(a, b, p, conv);
        if ahead != 0.0 && (ahead > 0.0) != danger_ahead(a, b, p, conv) {
            return Err(format!("dangerAhead_rs sign {ahead} for {a:?} / {b:?}"));
        }
        let left = danger_left_rs(a, b, p, conv);
        if left != 0.0 && (left > 0.0) != danger_left(a, b, p, conv) {
            return Err(format!("dangerLeft_rs sign {left} for {a:?} / {b:?}"));
        }
    }
    Ok(())
}

/// `(gap, robustness, boolean)` for `b` placed `gap` metres ahead of `a`.
pub fn gap_sweep(v_a: f64, v_b: f64, gaps: &[f64], p: &RssParams) -> Vec<(f64, f64, bool)> {
    let at = |s: f64, v: f64| {
        Footprint::new(
            VehicleState {
                s,
                v,
                a: 0.0,
                d: 0.0,
                theta: 0.0,
            },
            VehicleDims::new(4.5, 1.8),
        )
    };
    let conv = AngleConvention::PathAligned;
    gaps.iter()
        .map(|&g| {
            let (a, b) = (at(0.0, v_a), at(g, v_b));
            (g, danger_ahead_rs(&a, &b, p, conv), danger_ahead(&a, &b, p, conv))
        })
        .collect()
}

/// Nonincreasing robustness and sign agreement along a sweep.
pub fn check_sweep(sweep: &[(f64, f64, bool)]) -> Result<(), String> {
    for w in sweep.windows(2) {
        if w[1].1 > w[0].1 {
            return Err(format!("robustness rises from {} at {} m to {} at {} m", w[0].1, w[0].0, w[1].1, w[1].0));
        }
    }
    for &(g, r, b) in sweep {
        if r != 0.0 && (r > 0.0) != b {
            return Err(format!("sign of {r} disagrees with {b} at {g} m"));
        }
    }
    Ok(())
}
