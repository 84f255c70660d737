//! Side-by-side model comparison: F1, latency, retention, speedup.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalResult;

/// Canonical model roles, in pipeline order.
pub const ROLE_TEACHER: &str = "teacher";
pub const ROLE_STUDENT_FT: &str = "student-ft";
pub const ROLE_STUDENT_DTFT: &str = "student-dtft";

const ROLE_ORDER: [&str; 3] = [ROLE_TEACHER, ROLE_STUDENT_FT, ROLE_STUDENT_DTFT];

/// Latency numbers a comparison row can carry (microseconds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub mean_us: f64,
    pub median_us: f64,
    pub p95_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latency: Option<LatencySummary>,
}

/// Rows in pipeline order plus the headline ratios. `retention_pct` is the
/// two-stage student's F1 as a percentage of the teacher's; `speedup` is
/// teacher mean latency over student mean latency. Both are `None` when the
/// inputs to compute them are missing (single-model tables) or degenerate
/// (zero teacher F1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub retention_pct: Option<f64>,
    pub speedup: Option<f64>,
}

impl ComparisonTable {
    /// Aligned plain-text rendering; ratios shown to two decimals.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<14} {:>8} {:>14}\n",
            "model", "f1", "mean-latency"
        ));
        for row in &self.rows {
            let latency = row
                .latency
                .map(|l| format!("{:.1}us", l.mean_us))
                .unwrap_or_else(|| "-".into());
            out.push_str(&format!("{:<14} {:>8.4} {:>14}\n", row.model, row.f1, latency));
        }
        match self.retention_pct {
            Some(r) => out.push_str(&format!("retention: {r:.2}%\n")),
            None => out.push_str("retention: n/a\n"),
        }
        match self.speedup {
            Some(s) => out.push_str(&format!("speedup: {s:.2}x\n")),
            None => out.push_str("speedup: n/a\n"),
        }
        out
    }

    /// CSV rendering, full precision.
    pub fn render_csv(&self) -> String {
        let mut out = String::from("model,f1,mean_latency_us,median_latency_us,p95_latency_us\n");
        for row in &self.rows {
            match row.latency {
                Some(l) => out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    row.model, row.f1, l.mean_us, l.median_us, l.p95_us
                )),
                None => out.push_str(&format!("{},{},,,\n", row.model, row.f1)),
            }
        }
        out
    }
}

/// Builds the comparison table from per-model results and optional latency
/// records. Known roles render first in pipeline order (teacher, fine-tuned
/// student, two-stage student); anything else follows alphabetically.
pub fn compare(
    results: &BTreeMap<String, EvalResult>,
    latencies: &BTreeMap<String, LatencySummary>,
) -> ComparisonTable {
    let mut names: Vec<&String> = results.keys().collect();
    names.sort_by_key(|name| {
        let role_rank = ROLE_ORDER
            .iter()
            .position(|r| r == name)
            .unwrap_or(ROLE_ORDER.len());
        (role_rank, name.as_str())
    });

    let rows: Vec<ComparisonRow> = names
        .iter()
        .map(|name| ComparisonRow {
            model: (*name).clone(),
            f1: results[*name].micro_f1,
            latency: latencies.get(*name).copied(),
        })
        .collect();

    let teacher_f1 = results.get(ROLE_TEACHER).map(|r| r.micro_f1);
    let student_f1 = results.get(ROLE_STUDENT_DTFT).map(|r| r.micro_f1);
    let retention_pct = match (teacher_f1, student_f1) {
        (Some(t), Some(s)) if t > 0.0 => Some(100.0 * s / t),
        _ => None,
    };

    let speedup = match (latencies.get(ROLE_TEACHER), latencies.get(ROLE_STUDENT_DTFT)) {
        (Some(t), Some(s)) if s.mean_us > 0.0 => Some(t.mean_us / s.mean_us),
        _ => None,
    };

    ComparisonTable { rows, retention_pct, speedup }
}
