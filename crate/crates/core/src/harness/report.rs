use crate::error::Result;
use crate::transfer::ExperimentReport;

/// Pretty-printed JSON: per-iteration table, best iteration, stage summaries.
pub fn report_summary(report: &ExperimentReport) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    text
}

pub fn parse_report(text: &str) -> Result<ExperimentReport> {
    Ok(serde_json::from_str(text)?)
}
