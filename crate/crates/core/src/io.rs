//! Versioned on-disk formats.
//!
//! Structured files are JSON objects whose `format` field names the schema
//! and version. Tables are CSV and plot data is whitespace-separated
//! columns; both start with a `# format: <name>` line.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dp::DpPartitionPlan;
use crate::error::{Error, Result};
use crate::metrics::ComparisonTable;
use crate::sim::{Primitive, SimTimeline};
use crate::tp::MicroGroupPlan;

pub const DP_PLAN_FORMAT: &str = "atomshard.dp-plan.v1";
pub const TP_PLAN_FORMAT: &str = "atomshard.tp-plan.v1";
pub const TIMELINE_FORMAT: &str = "atomshard.timeline.v1";
pub const STEP_TRACE_FORMAT: &str = "atomshard.step-trace.v1";
pub const LOAD_REPORT_FORMAT: &str = "atomshard.load-report.v1";
pub const SUMMARY_FORMAT: &str = "atomshard.sim-summary.v1";
pub const PLOT_FORMAT: &str = "atomshard.plot.v1";

#[derive(Serialize)]
struct EnvelopeRef<'a, T> {
    format: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

#[derive(Deserialize)]
struct Envelope<T> {
    format: String,
    #[serde(flatten)]
    body: T,
}

#[derive(Serialize, Deserialize)]
struct PlanBody<T> {
    plan: T,
}

/// Pretty JSON tagged with `format`. `value` must serialize to an object.
pub fn to_versioned_json<T: Serialize>(format: &str, value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&EnvelopeRef { format, body: value })
        .map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn from_versioned_json<T: DeserializeOwned>(format: &str, text: &str) -> Result<T> {
    let env: Envelope<T> =
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    if env.format != format {
        return Err(Error::Format(format!(
            "expected format `{format}`, found `{}`",
            env.format
        )));
    }
    Ok(env.body)
}

pub fn dp_plan_to_json(plan: &DpPartitionPlan) -> Result<String> {
    to_versioned_json(DP_PLAN_FORMAT, &PlanBody { plan })
}

pub fn dp_plan_from_json(text: &str) -> Result<DpPartitionPlan> {
    from_versioned_json::<PlanBody<DpPartitionPlan>>(DP_PLAN_FORMAT, text).map(|b| b.plan)
}

pub fn tp_plan_to_json(plan: &MicroGroupPlan) -> Result<String> {
    to_versioned_json(TP_PLAN_FORMAT, &PlanBody { plan })
}

pub fn tp_plan_from_json(text: &str) -> Result<MicroGroupPlan> {
    from_versioned_json::<PlanBody<MicroGroupPlan>>(TP_PLAN_FORMAT, text).map(|b| b.plan)
}

/// Chrome-trace JSON; the format tag sits under `otherData`.
pub fn timeline_to_json(tl: &SimTimeline) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&tl.to_chrome_trace())
        .map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV with a leading `# format:` line.
pub fn csv_table(format: &str, header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| Error::Format(e.to_string()))?;
    for row in rows {
        w.write_record(row).map_err(|e| Error::Format(e.to_string()))?;
    }
    let body = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    let body = String::from_utf8(body).map_err(|e| Error::Format(e.to_string()))?;
    Ok(format!("# format: {format}\n{body}"))
}

/// Parses a table written by [`csv_table`], returning header and rows.
pub fn read_csv_table(format: &str, text: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let expected = format!("# format: {format}");
    if first.trim_end() != expected {
        return Err(Error::Format(format!("expected `{expected}`, found `{first}`")));
    }
    let mut r = csv::Reader::from_reader(rest.as_bytes());
    let header = r
        .headers()
        .map_err(|e| Error::Format(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let rows = r
        .records()
        .map(|rec| {
            rec.map(|rec| rec.iter().map(str::to_string).collect())
                .map_err(|e| Error::Format(e.to_string()))
        })
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

pub fn load_report_csv(table: &ComparisonTable) -> Result<String> {
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            vec![
                r.plan.clone(),
                r.flops_rlb.to_string(),
                r.memory_rlb.to_string(),
                opt(r.j_dp),
                opt(r.j_comm),
                r.groups.map(|g| g.to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    csv_table(LOAD_REPORT_FORMAT, &ComparisonTable::COLUMNS, &rows)
}

pub const SUMMARY_COLUMNS: [&str; 13] = [
    "point",
    "strategy",
    "fwd_bwd_time",
    "optimizer_time",
    "iteration_time",
    "exposed_comm_time",
    "optimizer_comm_time",
    "optimizer_comm_bytes",
    "reduce_scatter_bytes",
    "all_gather_bytes",
    "all_reduce_bytes",
    "all_to_all_bytes",
    "broadcast_bytes",
];

/// One row per `(point, timeline)`; `point` names the sweep coordinate.
pub fn summary_csv(rows: &[(String, &SimTimeline)]) -> Result<String> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|(point, tl)| {
            let t = &tl.totals;
            let mut row = vec![
                point.clone(),
                tl.label.clone(),
                t.fwd_bwd_time.to_string(),
                t.optimizer_time.to_string(),
                t.iteration_time.to_string(),
                t.exposed_comm_time.to_string(),
                t.optimizer_comm_time.to_string(),
                t.optimizer_comm_bytes.to_string(),
            ];
            row.extend(Primitive::ALL.iter().map(|&p| tl.volume(p).to_string()));
            row
        })
        .collect();
    csv_table(SUMMARY_FORMAT, &SUMMARY_COLUMNS, &rows)
}

/// Whitespace-separated columns for external plotting tools. Cells must not
/// contain whitespace.
pub fn plot_data(columns: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = format!("# format: {PLOT_FORMAT}\n# {}\n", columns.join(" "));
    for row in rows {
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}
