//! Scenario evaluation over disturbance traces and the summary table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use super::pairs::DisturbTrace;
use super::PipelineParams;
use crate::scenario::{default_lane_source, initial_lane, pov_arity, scenario, LaneSource, Roles, SpecSet, SpecVariant};
use crate::stl::{eval_bool, Bindings, EvalContext, EvalError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub spec_set: String,
    pub min_danger: f64,
    pub traces: usize,
    pub matching: usize,
    /// `matching / traces`; undefined for an empty trace set.
    pub recall: Option<f64>,
    /// Traces matched by each scenario of the spec set.
    pub per_scenario: BTreeMap<usize, usize>,
}

impl EvaluationReport {
    pub fn recall_text(&self) -> String {
        format_recall(self.recall)
    }

    /// One JSON object on a single line.
    pub fn json_line(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            #[serde(flatten)]
            report: &'a EvaluationReport,
            recall_text: String,
        }
        serde_json::to_string(&Line {
            report: self,
            recall_text: self.recall_text(),
        })
        .expect("report serializes")
    }
}

/// Recall as a percentage with one decimal, or `n/a`.
pub fn format_recall(recall: Option<f64>) -> String {
    match recall {
        Some(r) => format!("{:.1}%", 100.0 * r),
        None => "n/a".to_string(),
    }
}

/// Per-trace verdicts of one spec set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceMatches {
    pub key: String,
    pub matched: Vec<(usize, bool)>,
}

impl TraceMatches {
    pub fn any(&self) -> bool {
        self.matched.iter().any(|(_, m)| *m)
    }
}

/// Scenario indices that can be evaluated: the three-vehicle row only in
/// three-vehicle mode.
pub fn effective_indices(spec: &SpecSet, three_vehicle: bool) -> Vec<usize> {
    spec.indices
        .iter()
        .copied()
        .filter(|&i| three_vehicle || pov_arity(i) == 1)
        .collect()
}

/// Whether scenario `index` holds at the start of `dt`.
pub fn scenario_holds(dt: &DisturbTrace, index: usize, variant: SpecVariant, params: &PipelineParams) -> Result<bool, EvalError> {
    let lane_vehicle = match default_lane_source(index) {
        LaneSource::Sv => &dt.sv,
        LaneSource::Pov => &dt.pov,
    };
    let Some(lane) = initial_lane(&dt.trace, &dt.road, lane_vehicle) else {
        return Ok(false);
    };
    let t0 = dt.trace.domain().lo;
    let holds = |roles: &Roles, bindings: Bindings| -> Result<bool, EvalError> {
        let f = scenario(index, variant, roles, &params.scenario).expect("roles match the arity");
        let ctx = EvalContext::new(&dt.trace, &dt.road, bindings)
            .with_rss(params.rss)
            .with_mode(params.mode)
            .with_convention(params.convention);
        eval_bool(&f, &ctx, t0)
    };
    if pov_arity(index) == 2 {
        // lane of the three-vehicle row is SV's; any first-POV candidate may match
        let roles = Roles::triple("SV", "POV1", "POV2", "L");
        for c in &dt.pov1_candidates {
            let b = Bindings::new()
                .vehicle("SV", &dt.sv)
                .vehicle("POV1", c)
                .vehicle("POV2", &dt.pov)
                .lane("L", &lane);
            if holds(&roles, b)? {
                return Ok(true);
            }
        }
        return Ok(false);
    }
    holds(&Roles::pair("SV", "POV", "L"), dt.bindings().lane("L", &lane))
}

/// Evaluates every scenario of `spec` at the start of every trace.
pub fn evaluate(
    spec: &SpecSet,
    traces: &[DisturbTrace],
    params: &PipelineParams,
) -> Result<(EvaluationReport, Vec<TraceMatches>), EvalError> {
    let indices = effective_indices(spec, params.three_vehicle);
    let matches = traces
        .par_iter()
        .map(|dt| {
            let matched = indices
                .iter()
                .map(|&i| Ok((i, scenario_holds(dt, i, spec.variant, params)?)))
                .collect::<Result<Vec<_>, EvalError>>()?;
            Ok(TraceMatches { key: dt.key(), matched })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let mut per_scenario: BTreeMap<usize, usize> = indices.iter().map(|&i| (i, 0)).collect();
    for m in &matches {
        for (i, hit) in &m.matched {
            if *hit {
                *per_scenario.get_mut(i).unwrap() += 1;
            }
        }
    }
    let matching = matches.iter().filter(|m| m.any()).count();
    let report = EvaluationReport {
        spec_set: spec.variant.name().to_string(),
        min_danger: params.scenario.min_danger,
        traces: traces.len(),
        matching,
        recall: recall(matching, traces.len()),
        per_scenario,
    };
    Ok((report, matches))
}

pub fn recall(matching: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| matching as f64 / total as f64)
}

/// Table with one row per report.
pub fn render_table(reports: &[EvaluationReport]) -> String {
    let indices: Vec<usize> = {
        let mut all: Vec<usize> = reports.iter().flat_map(|r| r.per_scenario.keys().copied()).collect();
        all.sort_unstable();
        all.dedup();
        all
    };
    let mut out = String::new();
    let _ = write!(out, "{:<20} {:>10} {:>8} {:>8} {:>7}", "spec set", "min_danger", "|T|", "matching", "recall");
    for i in &indices {
        let _ = write!(out, " {:>6}", format!("s{i}"));
    }
    out.push('\n');
    for r in reports {
        let _ = write!(
            out,
            "{:<20} {:>10} {:>8} {:>8} {:>7}",
            r.spec_set,
            r.min_danger,
            r.traces,
            r.matching,
            r.recall_text()
        );
        for i in &indices {
            match r.per_scenario.get(i) {
                Some(n) => {
                    let _ = write!(out, " {n:>6}");
                }
                None => {
                    let _ = write!(out, " {:>6}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Per-trace verdicts as CSV: one row per trace and spec set.
pub fn matches_csv(sets: &[(String, Vec<TraceMatches>)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let indices: Vec<usize> = sets
        .first()
        .and_then(|(_, m)| m.first())
        .map(|m| m.matched.iter().map(|(i, _)| *i).collect())
        .unwrap_or_default();
    let mut header = vec!["trace".to_string(), "spec_set".to_string()];
    header.extend(indices.iter().map(|i| format!("s{i}")));
    w.write_record(&header).expect("in-memory write");
    for (name, matches) in sets {
        for m in matches {
            let mut row = vec![m.key.clone(), name.clone()];
            row.extend(m.matched.iter().map(|(_, hit)| u8::from(*hit).to_string()));
            w.write_record(&row).expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recall_formatting() {
        assert_eq!(format_recall(recall(24038, 32398)), "74.2%");
        assert_eq!(format_recall(recall(0, 0)), "n/a");
        assert_eq!(format_recall(recall(5, 5)), "100.0%");
    }

    #[test]
    fn empty_report_renders() {
        let r = EvaluationReport {
            spec_set: "ISO34502-STL".into(),
            min_danger: 0.0,
            traces: 0,
            matching: 0,
            recall: None,
            per_scenario: [(1, 0)].into_iter().collect(),
        };
        assert!(render_table(&[r.clone()]).contains("n/a"));
        assert!(r.json_line().contains("\"recall\":null"));
    }
}
