//! Acceptance run: one PASS/FAIL line per criterion, with its runtime
//! against a fixed limit. `SCENMON_HIGHD_DIR` enables the full highD run.

mod common;

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use common::rss_props::{check_distances, check_pair, check_sweep, gap_sweep, random_footprint};
use common::scenes::{check_structure, random_scene};
use common::{element_time, empty_road, oracle, random_formula, UnitTrace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use scenmon_core::pipeline::fixture::{synthetic_disturb_traces, write_corpus};
use scenmon_core::pipeline::report::matches_csv;
use scenmon_core::pipeline::{evaluate, filter_dir, read_traces, render_table, with_jobs, write_traces, PipelineParams};
use scenmon_core::rss::{d_rss_lat, d_rss_lon, RssParams};
use scenmon_core::scenario::{danger_arises, zone_of, ScenarioParams, SpecSet, SpecVariant};
use scenmon_core::stl::{bool_signal, robust_signal, Bindings, EvalContext};
use scenmon_core::synth;

const MONITOR_FORMULAS: u64 = 1000;
const MONITOR_LIMIT: Duration = Duration::from_secs(60);

const RSS_LON_EXPECTED: f64 = 48.29;
const RSS_LAT_EXPECTED: f64 = 1.08;
const RSS_TOLERANCE: f64 = 0.01;
const RSS_RANDOM_INPUTS: usize = 10_000;
const RSS_LIMIT: Duration = Duration::from_secs(5);

const SYNTH_PER_INDEX: usize = 50;
const SYNTH_LIMIT: Duration = Duration::from_secs(300);

const STRUCT_RANDOM: u64 = 1000;
const STRUCT_GENERATED_PER_INDEX: u64 = 5;
const STRUCT_LIMIT: Duration = Duration::from_secs(120);

const SWEEP_POINTS: usize = 200;
const SWEEP_FROM: f64 = 1.0;
const SWEEP_TO: f64 = 150.0;
const SWEEP_SPEED: f64 = 27.78;
const SWEEP_LIMIT: Duration = Duration::from_secs(5);

const PIPELINE_JOBS: usize = 4;
const PIPELINE_LIMIT: Duration = Duration::from_secs(60);
const TRIM_DOMAIN: (f64, f64) = (2.0, 10.0);

const HIGHD_ENV: &str = "SCENMON_HIGHD_DIR";

/// `(min_danger, |T|, spec set, matching, s1, s3, s4, s5, s6, s7, s8)`.
const HIGHD_EXPECTED: [(f64, usize, SpecVariant, usize, [usize; 7]); 6] = [
    (0.0, 32398, SpecVariant::Base, 24038, [4091, 21941, 21941, 291, 218, 3188, 924]),
    (0.0, 32398, SpecVariant::ExtA, 30288, [4091, 27652, 26008, 291, 218, 4362, 969]),
    (0.0, 32398, SpecVariant::Ext, 31139, [9364, 27652, 26008, 378, 218, 4362, 969]),
    (0.6, 28881, SpecVariant::Base, 21564, [4076, 19595, 19595, 283, 215, 3171, 801]),
    (0.6, 28881, SpecVariant::ExtA, 27177, [4076, 24843, 23328, 283, 215, 4347, 838]),
    (0.6, 28881, SpecVariant::Ext, 27963, [9312, 24843, 23328, 361, 215, 4347, 838]),
];

type Check = Result<String, String>;

fn monitor_correctness() -> Check {
    let road = empty_road();
    let bindings = Bindings::new().vehicle("X", "X").vehicle("Y", "Y");
    let mut points = 0usize;
    for seed in 0..MONITOR_FORMULAS {
        let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0000 + seed);
        let f = random_formula(&mut rng, 4);
        let ut = UnitTrace::random(&mut rng);
        let trace = ut.to_trace();
        let ctx = EvalContext::new(&trace, &road, bindings.clone());
        let bools = bool_signal(&f, &ctx).map_err(|e| format!("seed {seed}: {e}"))?;
        let robs = robust_signal(&f, &ctx).map_err(|e| format!("seed {seed}: {e}"))?;
        let want = oracle::<bool>(&f, &ut);
        for h in 0..=ut.half_len() {
            let t = element_time(h);
            let (b, r) = (bools.value_at(t).unwrap(), robs.value_at(t).unwrap());
            if b != want[h as usize] {
                return Err(format!("seed {seed}: {f} is {b} at t = {t}, oracle says {}", want[h as usize]));
            }
            if r != 0.0 && (r > 0.0) != b {
                return Err(format!("seed {seed}: {f} has robustness {r} but is {b} at t = {t}"));
            }
            points += 1;
        }
    }
    Ok(format!("{MONITOR_FORMULAS} formulas, {points} time points agree"))
}

fn rss_numerics() -> Check {
    let p = RssParams::default();
    let lon = d_rss_lon(27.78, 27.78, &p);
    let lat = d_rss_lat(0.0, 0.0, &p);
    if (lon - RSS_LON_EXPECTED).abs() > RSS_TOLERANCE {
        return Err(format!("d_rss_lon(27.78, 27.78) = {lon}"));
    }
    if (lat - RSS_LAT_EXPECTED).abs() > RSS_TOLERANCE {
        return Err(format!("d_rss_lat(0, 0) = {lat}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5afe);
    for _ in 0..RSS_RANDOM_INPUTS {
        let (v_r, v_f, dv) = (rng.gen_range(0.0..60.0), rng.gen_range(0.0..60.0), rng.gen_range(0.0..10.0));
        let lat = (rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
        check_distances(v_r, v_f, dv, lat, &p)?;
        check_pair(&random_footprint(&mut rng), &random_footprint(&mut rng), &p)?;
    }
    Ok(format!("d_rss_lon = {lon:.4}, d_rss_lat = {lat:.4}, {RSS_RANDOM_INPUTS} random inputs"))
}

fn synthetic_detection() -> Check {
    let params = PipelineParams {
        three_vehicle: true,
        ..PipelineParams::default()
    };
    let indices: Vec<usize> = (1..=24).collect();
    let traces = synthetic_disturb_traces(&indices, SYNTH_PER_INDEX, 0xd15c);
    let (report, matches) =
        evaluate(&SpecSet::all(SpecVariant::Ext), &traces, &params).map_err(|e| e.to_string())?;
    for (dt, m) in traces.iter().zip(&matches) {
        let intended: usize = dt.recording[1..dt.recording.find('n').unwrap()].parse().unwrap();
        if !m.matched.iter().any(|&(i, hit)| i == intended && hit) {
            return Err(format!("{} is not detected as scenario {intended}", dt.key()));
        }
        let ctx = EvalContext::new(&dt.trace, &dt.road, dt.bindings());
        let da = danger_arises("SV", "POV", &params.scenario);
        let da = scenmon_core::stl::eval_bool(&da, &ctx, dt.trace.domain().lo).map_err(|e| e.to_string())?;
        if !da {
            return Err(format!("{} does not satisfy dangerArises", dt.key()));
        }
    }
    Ok(format!(
        "{} traces over scenarios 1-24, {} detected as intended, all satisfy dangerArises",
        report.traces, report.traces
    ))
}

fn structural_implications() -> Check {
    let p = ScenarioParams::default();
    let random: usize = (0..STRUCT_RANDOM)
        .into_par_iter()
        .map(|seed| {
            let scene = random_scene(&mut ChaCha8Rng::seed_from_u64(0x57_0000 + seed));
            check_structure(&scene.trace, &scene.road, scene.zone, &p).map_err(|e| format!("random scene {seed}: {e}"))
        })
        .collect::<Result<Vec<_>, String>>()?
        .into_iter()
        .sum();
    let generated: usize = (1..=24usize)
        .into_par_iter()
        .flat_map(|i| (0..STRUCT_GENERATED_PER_INDEX).into_par_iter().map(move |k| (i, k)))
        .map(|(index, k)| {
            let case = synth::generate(index, 0x9e_0000 + k);
            check_structure(&case.trace, &synth::road_for(index), zone_of(index), &p)
                .map_err(|e| format!("generated scenario {index} seed {k}: {e}"))
        })
        .collect::<Result<Vec<_>, String>>()?
        .into_iter()
        .sum();
    Ok(format!(
        "{STRUCT_RANDOM} random and {} generated traces, {} implications, no counterexample",
        24 * STRUCT_GENERATED_PER_INDEX,
        random + generated
    ))
}

fn robust_sweep() -> Check {
    let step = (SWEEP_TO - SWEEP_FROM) / (SWEEP_POINTS - 1) as f64;
    let gaps: Vec<f64> = (0..SWEEP_POINTS).map(|k| SWEEP_FROM + step * k as f64).collect();
    let sweep = gap_sweep(SWEEP_SPEED, SWEEP_SPEED, &gaps, &RssParams::default());
    check_sweep(&sweep)?;
    let danger = sweep.iter().filter(|s| s.2).count();
    Ok(format!("{SWEEP_POINTS} gaps, nonincreasing, signs agree ({danger} in danger)"))
}

/// Filter and evaluate output of one run, as bytes.
fn pipeline_output(data: &Path, jobs: usize) -> Result<Vec<u8>, String> {
    let params = PipelineParams::default();
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    with_jobs(Some(jobs), || {
        let (traces, stats) = filter_dir(data, &params, None).map_err(|e| e.to_string())?;
        write_traces(out.path(), &traces, &params, stats.to_map()).map_err(|e| e.to_string())?;
        let (_, loaded) = read_traces(out.path()).map_err(|e| e.to_string())?;
        let mut reports = Vec::new();
        let mut sets = Vec::new();
        for v in SpecVariant::ALL {
            let (r, m) = evaluate(&SpecSet::two_vehicle_main(v), &loaded, &params).map_err(|e| e.to_string())?;
            sets.push((v.name().to_string(), m));
            reports.push(r);
        }
        let mut bytes = fs::read(out.path().join("manifest.json")).map_err(|e| e.to_string())?;
        for t in &traces {
            bytes.extend(fs::read(out.path().join("traces").join(format!("{}.csv", t.key()))).map_err(|e| e.to_string())?);
        }
        bytes.extend(render_table(&reports).into_bytes());
        bytes.extend(matches_csv(&sets).into_bytes());
        for r in &reports {
            bytes.extend(r.json_line().into_bytes());
        }
        Ok(bytes)
    })
}

fn pipeline_determinism() -> Check {
    let data = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_corpus(data.path()).map_err(|e| e.to_string())?;
    let first = pipeline_output(data.path(), 1)?;
    if pipeline_output(data.path(), 1)? != first {
        return Err("two runs with one job differ".into());
    }
    if pipeline_output(data.path(), PIPELINE_JOBS)? != first {
        return Err(format!("jobs=1 and jobs={PIPELINE_JOBS} differ"));
    }
    let (traces, _) = filter_dir(data.path(), &PipelineParams::default(), None).map_err(|e| e.to_string())?;
    let trimmed: Vec<_> = traces.iter().filter(|t| t.recording == "02").collect();
    if trimmed.is_empty() {
        return Err("the trim fixture produced no trace".into());
    }
    for t in &trimmed {
        let d = t.trace.domain();
        if (d.lo, d.hi) != TRIM_DOMAIN {
            return Err(format!("{} has domain [{}, {}]", t.key(), d.lo, d.hi));
        }
    }
    Ok(format!(
        "{} bytes identical over 3 runs, trim fixture domain [{}, {}]",
        first.len(),
        TRIM_DOMAIN.0,
        TRIM_DOMAIN.1
    ))
}

fn highd_table(dir: &Path) -> Check {
    let mut lines = Vec::new();
    for min_danger in [0.0, 0.6] {
        let params = PipelineParams {
            scenario: ScenarioParams {
                min_danger,
                ..ScenarioParams::default()
            },
            ..PipelineParams::default()
        };
        let (traces, _) = filter_dir(dir, &params, None).map_err(|e| e.to_string())?;
        for &(md, n, variant, matching, per) in HIGHD_EXPECTED.iter().filter(|r| r.0 == min_danger) {
            let (r, _) = evaluate(&SpecSet::two_vehicle_main(variant), &traces, &params).map_err(|e| e.to_string())?;
            let got: Vec<usize> = [1, 3, 4, 5, 6, 7, 8].iter().map(|i| r.per_scenario[i]).collect();
            let line = format!(
                "min_danger {md} {variant}: |T| {} matching {} recall {} per scenario {got:?}",
                r.traces,
                r.matching,
                r.recall_text()
            );
            if r.traces != n || r.matching != matching || got != per {
                return Err(format!("{line}; expected |T| {n} matching {matching} per scenario {per:?}"));
            }
            lines.push(line);
        }
    }
    Ok(lines.join("; "))
}

fn run(name: &str, limit: Duration, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = f();
    let elapsed = start.elapsed();
    let (ok, detail) = match outcome {
        Ok(d) if elapsed <= limit => (true, d),
        Ok(d) => (false, format!("{d}; took longer than {} s", limit.as_secs())),
        Err(e) => (false, e),
    };
    println!(
        "{} {name}: {detail} [{:.2} s, limit {} s]",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    ok
}

fn main() {
    println!("acceptance");
    let results = [
        run("monitor correctness", MONITOR_LIMIT, monitor_correctness),
        run("rss numerics", RSS_LIMIT, rss_numerics),
        run("synthetic detection", SYNTH_LIMIT, synthetic_detection),
        run("structural implications", STRUCT_LIMIT, structural_implications),
        run("robust gap sweep", SWEEP_LIMIT, robust_sweep),
        run("pipeline determinism", PIPELINE_LIMIT, pipeline_determinism),
    ];
    let mut ok = results.iter().all(|&r| r);
    match std::env::var_os(HIGHD_ENV) {
        Some(dir) => ok &= run("highD table reproduction", Duration::from_secs(4 * 3600), || highd_table(Path::new(&dir))),
        None => println!("SKIP highD table reproduction: set {HIGHD_ENV} to a directory of highD recordings"),
    }
    if !ok {
        std::process::exit(1);
    }
}
