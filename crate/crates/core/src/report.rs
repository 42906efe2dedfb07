//! Report rendering: stable JSON, markdown tables, and CSV exports.
//!
//! JSON carries fractions, markdown carries percentages; both are rounded to
//! six significant digits so the two documents agree number for number.

use serde_json::Value;

use crate::audit::{AuditReport, CharacterizationEntry};
use crate::error::{Error, Result};
use crate::tuning::GridCell;

/// Round to `digits` significant decimal digits. Zero and non-finite values
/// pass through unchanged.
pub fn round_sig(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let magnitude = x.abs().log10().floor() as i32;
    let factor = 10f64.powi(digits - 1 - magnitude);
    (x * factor).round() / factor
}

/// Shortest decimal form of a value rounded to six significant digits.
pub fn fmt_sig(x: f64) -> String {
    format!("{}", round_sig(x, 6))
}

fn fmt_pct(x: f64) -> String {
    fmt_sig(x * 100.0)
}

fn fmt_opt_pct(x: Option<f64>) -> String {
    x.map(fmt_pct).unwrap_or_else(|| "N/A".into())
}

fn fmt_opt_sig(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_else(|| "N/A".into())
}

fn round_json_floats(value: &mut Value) {
    match value {
        Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                if !n.is_i64() && !n.is_u64() {
                    if let Some(rounded) = serde_json::Number::from_f64(round_sig(f, 6)) {
                        *value = Value::Number(rounded);
                    }
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_json_floats),
        Value::Object(map) => map.values_mut().for_each(round_json_floats),
        _ => {}
    }
}

/// Serialize the report as a stable JSON document (keys sorted, floats at
/// six significant digits, trailing newline).
pub fn report_to_json(report: &AuditReport) -> Result<String> {
    let mut value = serde_json::to_value(report)
        .map_err(|e| Error::Invalid(format!("cannot serialize report: {e}")))?;
    round_json_floats(&mut value);
    let text = serde_json::to_string_pretty(&value)
        .map_err(|e| Error::Invalid(format!("cannot serialize report: {e}")))?;
    Ok(text + "\n")
}

/// Render the report as markdown: a summary table, the per-cluster table,
/// and (when present) the most-vs-least-biased characterization.
pub fn report_to_markdown(report: &AuditReport) -> String {
    let mut out = String::new();
    let h = &report.hyperparams;
    out.push_str(&format!(
        "# Audit report ({})\n\nk = {}, lambda = {}, gamma = {}, seed = {}, restarts = {}\n\n",
        report.method, h.k, h.lambda, h.gamma, h.seed, h.restarts
    ));
    out.push_str(&format!(
        "Thresholds: accuracy gap >= {} %, severity gap <= {}\n\n",
        fmt_pct(report.thresholds.acc_gap_min),
        fmt_sig(report.thresholds.severity_gap_max)
    ));

    out.push_str("| Metric | Value |\n|---|---|\n");
    out.push_str(&format!(
        "| Inertia | {} |\n",
        fmt_opt_sig(report.normalized_inertia)
    ));
    out.push_str(&format!("| SCR (%) | {} |\n", fmt_pct(report.scr)));
    out.push_str(&format!("| SIR (%) | {} |\n", fmt_pct(report.sir)));
    out.push_str(&format!(
        "| Avg \\|Bias\\| (%) | {} |\n",
        fmt_pct(report.avg_abs_bias)
    ));
    out.push_str(&format!(
        "| Max \\|Bias\\| (%) | {} |\n",
        fmt_pct(report.max_abs_bias)
    ));
    out.push_str(&format!(
        "| Global bias (%) | {} |\n",
        fmt_pct(report.global_bias)
    ));
    out.push_str(&format!(
        "| Global Acc-A / Acc-B (%) | {} / {} |\n\n",
        fmt_pct(report.global_acc_a),
        fmt_pct(report.global_acc_b)
    ));

    out.push_str("| Cluster | Size | Acc-A (%) | Acc-B (%) | Bias (%) | Severity gap | Flagged |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");
    for c in &report.clusters {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} |\n",
            c.cluster_id,
            c.size,
            fmt_opt_pct(c.acc_a),
            fmt_opt_pct(c.acc_b),
            fmt_opt_pct(c.bias_score),
            fmt_opt_sig(c.severity_gap),
            if c.flagged { "yes" } else { "" }
        ));
    }

    if let Some(entries) = &report.characterization {
        out.push_str("\n## Most vs least biased cluster\n\n");
        out.push_str(&characterization_to_markdown(entries));
    }
    out
}

fn characterization_to_markdown(entries: &[CharacterizationEntry]) -> String {
    let mut out = String::from("| Attribute | Delta (%) |\n|---|---|\n");
    for e in entries {
        out.push_str(&format!(
            "| {} = {} | {} |\n",
            e.attribute,
            e.value,
            fmt_opt_sig(e.delta_percent)
        ));
    }
    out
}

/// Per-cluster accuracy pairs as CSV, with the whole-cohort global row last.
pub fn clusters_to_csv(report: &AuditReport, n: usize) -> String {
    let mut out = String::from("cluster,size,acc_a,acc_b,bias_score,severity_gap,flagged\n");
    let cell = |x: Option<f64>| x.map(fmt_sig).unwrap_or_default();
    for c in &report.clusters {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.cluster_id,
            c.size,
            cell(c.acc_a),
            cell(c.acc_b),
            cell(c.bias_score),
            cell(c.severity_gap),
            if c.flagged { 1 } else { 0 }
        ));
    }
    out.push_str(&format!(
        "global,{},{},{},{},,\n",
        n,
        fmt_sig(report.global_acc_a),
        fmt_sig(report.global_acc_b),
        fmt_sig(report.global_bias)
    ));
    out
}

/// Grid-search table as CSV, one row per (lambda, gamma) cell.
pub fn grid_to_csv(cells: &[GridCell]) -> String {
    let mut out = String::from(
        "lambda,gamma,scr,sir,avg_abs_bias,max_abs_bias,normalized_inertia,objective\n",
    );
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt_sig(c.lambda),
            fmt_sig(c.gamma),
            fmt_sig(c.scr),
            fmt_sig(c.sir),
            fmt_sig(c.avg_abs_bias),
            fmt_sig(c.max_abs_bias),
            fmt_sig(c.normalized_inertia),
            fmt_sig(c.objective)
        ));
    }
    out
}

/// Side-by-side method comparison (Inertia / SCR / SIR / |Bias| rows), one
/// column per report.
pub fn compare_to_markdown(reports: &[&AuditReport]) -> String {
    let mut out = String::new();
    out.push_str("| Metric |");
    for r in reports {
        out.push_str(&format!(" {} |", r.method));
    }
    out.push('\n');
    out.push_str("|---|");
    for _ in reports {
        out.push_str("---|");
    }
    out.push('\n');

    let row = |label: &str, f: &dyn Fn(&AuditReport) -> String| {
        let mut line = format!("| {label} |");
        for r in reports {
            line.push_str(&format!(" {} |", f(r)));
        }
        line.push('\n');
        line
    };
    out.push_str(&row("Inertia", &|r| fmt_opt_sig(r.normalized_inertia)));
    out.push_str(&row("SCR (%)", &|r| fmt_pct(r.scr)));
    out.push_str(&row("SIR (%)", &|r| fmt_pct(r.sir)));
    out.push_str(&row("Avg |Bias| (%)", &|r| fmt_pct(r.avg_abs_bias)));
    out.push_str(&row("Max |Bias| (%)", &|r| fmt_pct(r.max_abs_bias)));
    out.push_str(&row("Global bias (%)", &|r| fmt_pct(r.global_bias)));
    out
}
