//! File ingestion and emission: scenario JSON (dB-suffixed field names)
//! and the iteration-trace CSV.

use std::path::Path;

use crate::distpc::TraceRow;
use crate::model::{Scenario, ScenarioSpec};
use crate::Result;

/// Load a scenario from a JSON document with dB-unit fields.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    let spec: ScenarioSpec = serde_json::from_str(&text)?;
    spec.build()
}

pub fn scenario_spec_from_json(text: &str) -> Result<Scenario> {
    let spec: ScenarioSpec = serde_json::from_str(text)?;
    spec.build()
}

/// Iteration-trace CSV: `iter,sum_utility,eps,p_ul_1..K,p_dl_1..K,
/// q_ul_1..K,q_dl_1..K`. The `eps` column is empty when no reference
/// utility was supplied.
pub fn trace_csv_header(k_ul: usize, k_dl: usize) -> String {
    let mut cols = vec!["iter".to_string(), "sum_utility".into(), "eps".into()];
    cols.extend((1..=k_ul).map(|i| format!("p_ul_{i}")));
    cols.extend((1..=k_dl).map(|j| format!("p_dl_{j}")));
    cols.extend((1..=k_ul).map(|i| format!("q_ul_{i}")));
    cols.extend((1..=k_dl).map(|j| format!("q_dl_{j}")));
    cols.join(",")
}

pub fn trace_to_csv(trace: &[TraceRow], k_ul: usize, k_dl: usize) -> String {
    let mut out = trace_csv_header(k_ul, k_dl);
    out.push('\n');
    for row in trace {
        let mut fields = vec![
            row.iter.to_string(),
            row.sum_utility.to_string(),
            row.eps.map(|e| e.to_string()).unwrap_or_default(),
        ];
        fields.extend(row.p_ul.iter().map(|v| v.to_string()));
        fields.extend(row.p_dl.iter().map(|v| v.to_string()));
        fields.extend(row.q_ul.iter().map(|v| v.to_string()));
        fields.extend(row.q_dl.iter().map(|v| v.to_string()));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}
