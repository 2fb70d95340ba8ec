//! Evaluation machinery: precision/recall curves, PR-AUC, F1, and harvest
//! reports aggregating attempt records into stage success rates, failure
//! histograms and timing summaries.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::sim::{AttemptRecord, FailureCategory, Stage, STAGES};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("scores and labels differ in length: {scores} vs {labels}")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("curve has a single distinct recall value; AUC is undefined")]
    DegenerateCurve,
    #[error("threshold {0} is not a point of the curve")]
    ThresholdNotFound(f64),
}

/// One operating point of a precision-recall curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
}

/// Precision-recall curve over a threshold sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

impl PrCurve {
    /// CSV rows `threshold,precision,recall` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,precision,recall\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.threshold, p.precision, p.recall));
        }
        out
    }
}

/// Count detections at each threshold (predicted positive when
/// `score >= threshold`) and form precision and recall.
///
/// Precision at zero predictions is defined as 1 (conservative endpoint);
/// recall with no ground-truth positives is defined as 0.
pub fn precision_recall(
    scores: &[f64],
    labels: &[bool],
    thresholds: &[f64],
) -> Result<PrCurve, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    let mut points = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for (&s, &l) in scores.iter().zip(labels) {
            let predicted = s >= t;
            match (predicted, l) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let precision = if tp + fp == 0 {
            1.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_ == 0 {
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        points.push(PrPoint {
            threshold: t,
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            precision,
            recall,
        });
    }
    Ok(PrCurve { points })
}

/// Evenly spaced thresholds across the observed score range, endpoints
/// included. The default sweep granularity is 256.
pub fn even_thresholds(scores: &[f64], count: usize) -> Vec<f64> {
    assert!(count >= 2);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &s in scores {
        lo = lo.min(s);
        hi = hi.max(s);
    }
    if !lo.is_finite() || !hi.is_finite() || hi <= lo {
        return vec![0.0];
    }
    (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect()
}

/// Area under the precision-recall curve by trapezoidal integration over
/// recall. Points are sorted by recall; duplicate recall values keep their
/// maximum precision. Errors when only one distinct recall value exists.
pub fn auc(curve: &PrCurve) -> Result<f64, MetricsError> {
    let mut by_recall: BTreeMap<u64, f64> = BTreeMap::new();
    for p in &curve.points {
        let key = p.recall.to_bits();
        let e = by_recall.entry(key).or_insert(p.precision);
        *e = e.max(p.precision);
    }
    let pts: Vec<(f64, f64)> = by_recall
        .into_iter()
        .map(|(r, p)| (f64::from_bits(r), p))
        .collect();
    if pts.len() < 2 {
        return Err(MetricsError::DegenerateCurve);
    }
    let mut area = 0.0;
    for w in pts.windows(2) {
        let (r0, p0) = w[0];
        let (r1, p1) = w[1];
        area += (r1 - r0) * (p0 + p1) / 2.0;
    }
    Ok(area)
}

/// F1 at a threshold that must be one of the curve's operating points:
/// `2PR / (P + R)`, and 0 when `P + R = 0`.
pub fn f1_at(curve: &PrCurve, threshold: f64) -> Result<f64, MetricsError> {
    let p = curve
        .points
        .iter()
        .find(|p| p.threshold == threshold)
        .ok_or(MetricsError::ThresholdNotFound(threshold))?;
    Ok(f1_of(p.precision, p.recall))
}

pub fn f1_of(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Best F1 over all points of the curve; 0 for an empty curve.
pub fn best_f1(curve: &PrCurve) -> f64 {
    curve
        .points
        .iter()
        .map(|p| f1_of(p.precision, p.recall))
        .fold(0.0, f64::max)
}

/// Mean and standard deviation of one stage's simulated duration.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub mean_seconds: f64,
    pub stddev_seconds: f64,
    pub samples: usize,
}

/// Aggregated results for one scenario (records sharing the `modified`
/// flag). Rates are percentages of peppers, where a pepper passes a stage if
/// any of its attempts did.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub modified: bool,
    pub peppers: usize,
    pub attempts: usize,
    pub avg_attempts: f64,
    pub pepper_detection_rate: f64,
    pub peduncle_detection_rate: f64,
    /// Per-pepper attachment rate; monotone under the stage chain.
    pub attachment_rate: f64,
    /// Attachment rate conditioned on peduncle detection, the convention
    /// used by per-stage success tables.
    pub attachment_rate_conditional: f64,
    pub harvest_rate: f64,
    /// Failure counts keyed by category letter a-i.
    pub failure_histogram: BTreeMap<char, usize>,
    pub stage_timing: Vec<StageTiming>,
}

/// Full report over all scenarios present in a record stream.
#[derive(Debug, Clone, Serialize)]
pub struct HarvestReport {
    pub scenarios: Vec<ScenarioReport>,
}

/// Aggregate attempt records per pepper and scenario.
pub fn harvest_report(records: &[AttemptRecord]) -> HarvestReport {
    let mut scenarios: BTreeMap<bool, Vec<&AttemptRecord>> = BTreeMap::new();
    for r in records {
        scenarios.entry(r.modified).or_default().push(r);
    }
    let scenarios = scenarios
        .into_iter()
        .map(|(modified, recs)| scenario_report(modified, &recs))
        .collect();
    HarvestReport { scenarios }
}

fn scenario_report(modified: bool, records: &[&AttemptRecord]) -> ScenarioReport {
    let mut per_pepper: BTreeMap<u64, (bool, bool, bool, bool, usize)> = BTreeMap::new();
    for r in records {
        let e = per_pepper
            .entry(r.pepper_id)
            .or_insert((false, false, false, false, 0));
        e.0 |= r.pepper_detected;
        e.1 |= r.peduncle_detected;
        e.2 |= r.attached;
        e.3 |= r.harvested;
        e.4 += 1;
    }
    let peppers = per_pepper.len();
    let attempts = records.len();
    let n = peppers as f64;
    let detected = per_pepper.values().filter(|v| v.0).count();
    let peduncle = per_pepper.values().filter(|v| v.1).count();
    let attached = per_pepper.values().filter(|v| v.2).count();
    let harvested = per_pepper.values().filter(|v| v.3).count();
    let rate = |c: usize| if peppers == 0 { 0.0 } else { 100.0 * c as f64 / n };

    let mut failure_histogram: BTreeMap<char, usize> = BTreeMap::new();
    for c in FailureCategory::ALL {
        failure_histogram.insert(c.letter(), 0);
    }
    for r in records {
        if let Some(cat) = r.failure_category {
            *failure_histogram.get_mut(&cat.letter()).unwrap() += 1;
        }
    }

    let stage_timing = STAGES
        .iter()
        .map(|&stage| {
            let durations: Vec<f64> = records
                .iter()
                .filter_map(|r| r.durations.get(stage))
                .collect();
            let samples = durations.len();
            let (mean, stddev) = if samples == 0 {
                (0.0, 0.0)
            } else {
                let mean = durations.iter().sum::<f64>() / samples as f64;
                let var = durations.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>()
                    / samples as f64;
                (mean, var.sqrt())
            };
            StageTiming {
                stage,
                mean_seconds: mean,
                stddev_seconds: stddev,
                samples,
            }
        })
        .collect();

    ScenarioReport {
        modified,
        peppers,
        attempts,
        avg_attempts: if peppers == 0 { 0.0 } else { attempts as f64 / n },
        pepper_detection_rate: rate(detected),
        peduncle_detection_rate: rate(peduncle),
        attachment_rate: rate(attached),
        attachment_rate_conditional: if peduncle == 0 {
            0.0
        } else {
            100.0 * attached as f64 / peduncle as f64
        },
        harvest_rate: rate(harvested),
        failure_histogram,
        stage_timing,
    }
}

impl HarvestReport {
    /// Aligned-column success table, one scenario per column.
    pub fn success_table(&self) -> String {
        let mut out = String::new();
        let label = |m: bool| if m { "Modified" } else { "Unmodified" };
        out.push_str(&format!("{:<28}", ""));
        for s in &self.scenarios {
            out.push_str(&format!("{:>14}", label(s.modified)));
        }
        out.push('\n');
        type Cell = Box<dyn Fn(&ScenarioReport) -> String>;
        let rows: Vec<(&str, Cell)> = vec![
            ("Avg Attempts (total)", Box::new(|s: &ScenarioReport| format!("{:.1}", s.avg_attempts))),
            ("Pepper Detection", Box::new(|s| format!("{:.0}%", s.pepper_detection_rate))),
            ("Peduncle Detection", Box::new(|s| format!("{:.0}%", s.peduncle_detection_rate))),
            ("Attachment Success", Box::new(|s| format!("{:.0}%", s.attachment_rate_conditional))),
            ("Overall Harvest Success", Box::new(|s| format!("{:.1}%", s.harvest_rate))),
        ];
        for (name, f) in rows {
            out.push_str(&format!("{:<28}", name));
            for s in &self.scenarios {
                out.push_str(&format!("{:>14}", f(s)));
            }
            out.push('\n');
        }
        out
    }

    /// Aligned-column execution-time table per stage.
    pub fn timing_table(&self) -> String {
        let mut out = String::new();
        for s in &self.scenarios {
            out.push_str(&format!(
                "Stage timings ({})\n",
                if s.modified { "modified" } else { "unmodified" }
            ));
            out.push_str(&format!("{:<24}{:>28}\n", "Harvesting stage", "Average time s (std dev)"));
            let mut total_mean = 0.0;
            for t in &s.stage_timing {
                out.push_str(&format!(
                    "{:<24}{:>18.1} (± {:.1})\n",
                    t.stage.name(),
                    t.mean_seconds,
                    t.stddev_seconds
                ));
                total_mean += t.mean_seconds;
            }
            out.push_str(&format!("{:<24}{:>18.1}\n", "Total", total_mean));
        }
        out
    }

    /// CSV of failure counts keyed a-i, one scenario per column.
    pub fn failure_csv(&self) -> String {
        let mut out = String::from("category");
        for s in &self.scenarios {
            out.push_str(if s.modified { ",modified" } else { ",unmodified" });
        }
        out.push('\n');
        for c in FailureCategory::ALL {
            out.push(c.letter());
            for s in &self.scenarios {
                out.push_str(&format!(",{}", s.failure_histogram[&c.letter()]));
            }
            out.push('\n');
        }
        out
    }
}
