use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::metrics::{csv_field, speedup, EvalReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub baseline: Option<f64>,
    pub method: Option<f64>,
    /// `method − baseline`.
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline_method: String,
    pub method: String,
    pub dataset_hash: String,
    pub image_count: u64,
    pub rows: Vec<ComparisonRow>,
    /// Percentage of the baseline's mean calls per image saved by the method.
    pub speedup: f64,
}

/// Lines two reports up metric by metric. Both must cover the same dataset.
pub fn compare(baseline: &EvalReport, method: &EvalReport) -> Result<Comparison, HarnessError> {
    if baseline.dataset_hash != method.dataset_hash {
        return Err(HarnessError::DatasetMismatch {
            baseline: baseline.dataset_hash.clone(),
            method: method.dataset_hash.clone(),
        });
    }
    let row = |metric: &str, b: Option<f64>, m: Option<f64>| ComparisonRow {
        metric: metric.to_string(),
        baseline: b,
        method: m,
        delta: b.zip(m).map(|(b, m)| m - b),
    };
    let top = |r: &EvalReport, k: usize| r.top_k_overall.get(&k).copied();
    let rows = vec![
        row("top1", top(baseline, 1), top(method, 1)),
        row("top3", top(baseline, 3), top(method, 3)),
        row("top5", top(baseline, 5), top(method, 5)),
        row("top1_classwise", baseline.top1_classwise, method.top1_classwise),
        row(
            "calls_per_image",
            Some(baseline.mean_calls_per_image),
            Some(method.mean_calls_per_image),
        ),
        row(
            "surviving_leaves",
            Some(baseline.mean_surviving_leaves),
            Some(method.mean_surviving_leaves),
        ),
    ];
    Ok(Comparison {
        baseline_method: baseline.method.clone(),
        method: method.method.clone(),
        dataset_hash: baseline.dataset_hash.clone(),
        image_count: method.image_count,
        rows,
        speedup: speedup(baseline.mean_calls_per_image, method.mean_calls_per_image)?,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into())
}

impl Comparison {
    pub fn row(&self, metric: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<18} {:>12} {:>12} {:>10}",
            "metric", self.baseline_method, self.method, "delta"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<18} {:>12} {:>12} {:>10}",
                r.metric,
                cell(r.baseline),
                cell(r.method),
                cell(r.delta)
            );
        }
        let _ = writeln!(out, "speed-up: {:.2}%", self.speedup);
        out
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("metric,baseline,method,delta\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                csv_field(&r.metric),
                opt(r.baseline),
                opt(r.method),
                opt(r.delta)
            );
        }
        let _ = writeln!(out, "speedup,,{},", self.speedup);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{ImageRecord, RunMetrics};

    fn report(method: &str, hash: &str, calls: u64) -> EvalReport {
        let images = vec![ImageRecord {
            image_id: "a".into(),
            truth: Some("x".into()),
            prediction: "x".into(),
            top: vec!["x".into()],
            metrics: RunMetrics::new(0, calls, 100),
        }];
        EvalReport::build(method, hash, 100, 16, images).unwrap()
    }

    #[test]
    fn identical_reports_have_zero_deltas() {
        let r = report("flat", "h", 1600);
        let c = compare(&r, &r).unwrap();
        assert!(c.rows.iter().all(|row| row.delta.map_or(true, |d| d == 0.0)));
        assert_eq!(c.speedup, 0.0);
    }

    #[test]
    fn table_one_costs() {
        let c = compare(&report("flat", "h", 1600), &report("hdc", "h", 650)).unwrap();
        assert!((c.speedup - 59.375).abs() < 1e-12);
        assert!(c.to_table().contains("speed-up: 59.38%"));
        assert_eq!(c.row("calls_per_image").unwrap().delta, Some(-950.0));
    }

    #[test]
    fn hash_mismatch_is_refused() {
        let err = compare(&report("flat", "h1", 1), &report("hdc", "h2", 1)).unwrap_err();
        assert!(matches!(err, HarnessError::DatasetMismatch { .. }));
        assert_eq!(err.exit_code(), 2);
    }
}
