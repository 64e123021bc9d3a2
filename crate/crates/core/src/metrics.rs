//! Forecast verification: confusion counts, CSI, HSS, performance-diagram
//! coordinates, per-hour WMAE and day-level standard errors.
//!
//! Scores that would divide by zero come back as `None` and are skipped by
//! every aggregate.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid_store::{SequenceSample, Split};
use crate::losses::weight;
use crate::forecast::ForecastBundle;

pub const DEFAULT_THRESHOLDS: [f64; 8] = [1.0, 3.0, 5.0, 10.0, 15.0, 20.0, 30.0, 40.0];
/// WMAE thresholds reported per hour.
pub const WMAE_THRESHOLDS: [f64; 2] = [0.5, 0.0];

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("shape mismatch: {0} vs {1}")]
    ShapeMismatch(usize, usize),
    #[error("standard error needs at least 2 units, got {0}")]
    TooFewUnits(usize),
    #[error("nothing to report")]
    Empty,
    #[error("hour {0} not in forecast")]
    MissingHour(usize),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }

    fn add_pair(&mut self, target: f64, pred: f64, threshold: f64) {
        match (target >= threshold, pred >= threshold) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }
}

/// Binarize both maps with `>= threshold` and count the four cells.
pub fn confusion(target: &[f64], pred: &[f64], threshold: f64) -> Result<ConfusionCounts, MetricError> {
    if target.len() != pred.len() {
        return Err(MetricError::ShapeMismatch(target.len(), pred.len()));
    }
    let mut c = ConfusionCounts::default();
    for (&t, &p) in target.iter().zip(pred) {
        c.add_pair(t, p, threshold);
    }
    Ok(c)
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den != 0.0).then(|| num / den)
}

pub fn csi(c: &ConfusionCounts) -> Option<f64> {
    ratio(c.tp as f64, (c.tp + c.fn_ + c.fp) as f64)
}

/// Heidke skill score in the standard form with the factor 2 in the
/// numerator, so a perfect forecast scores 1.
pub fn hss(c: &ConfusionCounts) -> Option<f64> {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    ratio(
        2.0 * (tp * tn - fp * fn_),
        (tp + fn_) * (tn + fn_) + (tp + fp) * (tn + fp),
    )
}

pub fn pod(c: &ConfusionCounts) -> Option<f64> {
    ratio(c.tp as f64, (c.tp + c.fn_) as f64)
}

pub fn success_ratio(c: &ConfusionCounts) -> Option<f64> {
    ratio(c.tp as f64, (c.tp + c.fp) as f64)
}

pub fn bias(c: &ConfusionCounts) -> Option<f64> {
    ratio((c.tp + c.fp) as f64, (c.tp + c.fn_) as f64)
}

/// WMAE of each hour separately.
pub fn wmae_metric(targets: &[Vec<f64>], preds: &[Vec<f64>], th: f64) -> Result<Vec<f64>, MetricError> {
    if targets.len() != preds.len() {
        return Err(MetricError::ShapeMismatch(targets.len(), preds.len()));
    }
    targets
        .iter()
        .zip(preds)
        .map(|(t, p)| {
            crate::losses::wmae(t, p, th).map_err(|_| MetricError::ShapeMismatch(t.len(), p.len()))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerfRow {
    pub threshold: f64,
    pub pod: Option<f64>,
    pub sr: Option<f64>,
    pub csi: Option<f64>,
    pub bias: Option<f64>,
}

impl PerfRow {
    /// A row is a marker row when any coordinate is undefined.
    pub fn is_marker(&self) -> bool {
        self.pod.is_none() || self.sr.is_none() || self.csi.is_none()
    }
}

pub fn performance_diagram_rows(counts: &[(f64, ConfusionCounts)]) -> Result<Vec<PerfRow>, MetricError> {
    if counts.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(counts
        .iter()
        .map(|(threshold, c)| PerfRow {
            threshold: *threshold,
            pod: pod(c),
            sr: success_ratio(c),
            csi: csi(c),
            bias: bias(c),
        })
        .collect())
}

/// Sample standard deviation over `sqrt(n)`.
pub fn standard_error(scores: &[f64]) -> Result<f64, MetricError> {
    let n = scores.len();
    if n < 2 {
        return Err(MetricError::TooFewUnits(n));
    }
    let mean = scores.iter().sum::<f64>() / n as f64;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1) as f64;
    Ok((var / n as f64).sqrt())
}

#[derive(Clone, Debug, Default)]
struct HourTally {
    /// Weighted absolute error sums, one per entry of `WMAE_THRESHOLDS`.
    wmae_sum: [f64; 2],
    pixels: u64,
    counts: Vec<ConfusionCounts>,
}

impl HourTally {
    fn new(n_thresholds: usize) -> Self {
        HourTally {
            counts: vec![ConfusionCounts::default(); n_thresholds],
            ..Default::default()
        }
    }

    fn merge(&mut self, other: &HourTally) {
        for i in 0..2 {
            self.wmae_sum[i] += other.wmae_sum[i];
        }
        self.pixels += other.pixels;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            a.merge(b);
        }
    }

    fn wmae(&self, i: usize) -> f64 {
        self.wmae_sum[i] / self.pixels as f64
    }
}

/// Streaming accumulator: add (sample, forecast) pairs, then call `finish`.
#[derive(Clone, Debug)]
pub struct Verifier {
    thresholds: Vec<f64>,
    hours: Vec<usize>,
    /// Keyed by day number so per-day scores come out in calendar order.
    days: BTreeMap<i64, Vec<HourTally>>,
    samples: usize,
}

impl Verifier {
    pub fn new(thresholds: &[f64], hours: &[usize]) -> Self {
        Verifier {
            thresholds: thresholds.to_vec(),
            hours: hours.to_vec(),
            days: BTreeMap::new(),
            samples: 0,
        }
    }

    pub fn add(&mut self, sample: &SequenceSample, forecast: &ForecastBundle) -> Result<(), MetricError> {
        let targets: Vec<&[f64]> = sample.targets.iter().map(|t| t.values.as_slice()).collect();
        let preds: Vec<&[f64]> = forecast.predictions.iter().map(|p| p.as_slice()).collect();
        self.add_maps(sample.anchor.day_number(), &targets, &preds)
    }

    /// Lower-level entry for callers without a `SequenceSample`.
    pub fn add_maps(&mut self, day: i64, targets: &[&[f64]], preds: &[&[f64]]) -> Result<(), MetricError> {
        let n_thr = self.thresholds.len();
        let n_hours = self.hours.len();
        let tallies = self
            .days
            .entry(day)
            .or_insert_with(|| vec![HourTally::new(n_thr); n_hours]);
        for (slot, &h) in self.hours.iter().enumerate() {
            let t = targets.get(h).ok_or(MetricError::MissingHour(h))?;
            let p = preds.get(h).ok_or(MetricError::MissingHour(h))?;
            if t.len() != p.len() {
                return Err(MetricError::ShapeMismatch(t.len(), p.len()));
            }
            let tally = &mut tallies[slot];
            for (&y, &yhat) in t.iter().zip(p.iter()) {
                let err = (y - yhat).abs();
                for (i, &th) in WMAE_THRESHOLDS.iter().enumerate() {
                    tally.wmae_sum[i] += weight(y, th) * err;
                }
                for (c, &thr) in tally.counts.iter_mut().zip(&self.thresholds) {
                    c.add_pair(y, yhat, thr);
                }
            }
            tally.pixels += t.len() as u64;
        }
        self.samples += 1;
        Ok(())
    }

    pub fn finish(self, model: &str, split: Split) -> Result<VerificationReport, MetricError> {
        if self.samples == 0 {
            return Err(MetricError::Empty);
        }
        let n_thr = self.thresholds.len();
        let mut hours = Vec::new();
        for (slot, &hour) in self.hours.iter().enumerate() {
            let mut pooled = HourTally::new(n_thr);
            for day in self.days.values() {
                pooled.merge(&day[slot]);
            }
            let se_of = |f: &dyn Fn(&HourTally) -> Option<f64>| -> Option<f64> {
                let per_day: Vec<f64> = self.days.values().filter_map(|d| f(&d[slot])).collect();
                standard_error(&per_day).ok()
            };
            let wmae = [pooled.wmae(0), pooled.wmae(1)];
            let wmae_se = [se_of(&|t| Some(t.wmae(0))), se_of(&|t| Some(t.wmae(1)))];
            let thresholds = self
                .thresholds
                .iter()
                .enumerate()
                .map(|(i, &threshold)| {
                    let c = pooled.counts[i];
                    ThresholdScores {
                        threshold,
                        counts: c,
                        csi: csi(&c),
                        hss: hss(&c),
                        pod: pod(&c),
                        sr: success_ratio(&c),
                        bias: bias(&c),
                        csi_se: se_of(&|t| csi(&t.counts[i])),
                        hss_se: se_of(&|t| hss(&t.counts[i])),
                    }
                })
                .collect();
            hours.push(HourScores {
                hour,
                wmae,
                wmae_se,
                thresholds,
            });
        }
        Ok(VerificationReport {
            model: model.to_string(),
            split,
            samples: self.samples,
            days: self.days.len(),
            hours,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdScores {
    pub threshold: f64,
    pub counts: ConfusionCounts,
    pub csi: Option<f64>,
    pub hss: Option<f64>,
    pub pod: Option<f64>,
    pub sr: Option<f64>,
    pub bias: Option<f64>,
    pub csi_se: Option<f64>,
    pub hss_se: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HourScores {
    pub hour: usize,
    /// WMAE at Th = 0.5 and Th = 0, pooled over every pixel of the split.
    pub wmae: [f64; 2],
    pub wmae_se: [Option<f64>; 2],
    pub thresholds: Vec<ThresholdScores>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub model: String,
    pub split: Split,
    pub samples: usize,
    pub days: usize,
    pub hours: Vec<HourScores>,
}

pub const REPORT_HEADER: &str = "model,split,hour,threshold,tp,fp,tn,fn,csi,hss,pod,sr,bias,csi_se,hss_se,wmae_th0.5,wmae_th0,wmae_th0.5_se,wmae_th0_se,samples,days";

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

impl VerificationReport {
    pub fn hour(&self, hour: usize) -> Option<&HourScores> {
        self.hours.iter().find(|h| h.hour == hour)
    }

    /// CSV rows without the header, one per (hour, threshold).
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for h in &self.hours {
            for t in &h.thresholds {
                let c = t.counts;
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.6},{:.6},{},{},{},{}",
                    self.model,
                    self.split.as_str(),
                    h.hour,
                    t.threshold,
                    c.tp,
                    c.fp,
                    c.tn,
                    c.fn_,
                    fmt_opt(t.csi),
                    fmt_opt(t.hss),
                    fmt_opt(t.pod),
                    fmt_opt(t.sr),
                    fmt_opt(t.bias),
                    fmt_opt(t.csi_se),
                    fmt_opt(t.hss_se),
                    h.wmae[0],
                    h.wmae[1],
                    fmt_opt(h.wmae_se[0]),
                    fmt_opt(h.wmae_se[1]),
                    self.samples,
                    self.days,
                );
            }
        }
        out
    }

    /// Performance-diagram coordinates for one hour.
    pub fn perf_rows(&self, hour: usize) -> Vec<PerfRow> {
        self.hour(hour)
            .map(|h| {
                h.thresholds
                    .iter()
                    .map(|t| PerfRow {
                        threshold: t.threshold,
                        pod: t.pod,
                        sr: t.sr,
                        csi: t.csi,
                        bias: t.bias,
                    })
                    .collect()
            })
            .unwrap_or_default()
    }
}

pub const PERF_HEADER: &str = "model,hour,threshold,pod,sr,csi,bias";

/// Performance-diagram CSV over several reports.
pub fn perf_csv(reports: &[VerificationReport]) -> String {
    let mut out = format!("{PERF_HEADER}\n");
    for r in reports {
        for h in &r.hours {
            for row in r.perf_rows(h.hour) {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    r.model,
                    h.hour,
                    row.threshold,
                    fmt_opt(row.pod),
                    fmt_opt(row.sr),
                    fmt_opt(row.csi),
                    fmt_opt(row.bias)
                );
            }
        }
    }
    out
}

/// Full report CSV over several reports.
pub fn report_csv(reports: &[VerificationReport]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for r in reports {
        out.push_str(&r.csv_rows());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(tp: u64, fp: u64, tn: u64, fn_: u64) -> ConfusionCounts {
        ConfusionCounts { tp, fp, tn, fn_ }
    }

    #[test]
    fn confusion_examples() {
        let c = confusion(&[1.2, 0.1], &[0.2, 1.3], 1.0).unwrap();
        assert_eq!(c, counts(0, 1, 0, 1));
        let t = [0.0, 2.0, 5.0, 1.0];
        let c = confusion(&t, &t, 1.0).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        assert_eq!(confusion(&t, &t, 100.0).unwrap(), counts(0, 0, 4, 0));
        assert_eq!(confusion(&t, &[1.0], 1.0), Err(MetricError::ShapeMismatch(4, 1)));
        // Closed at the threshold.
        assert_eq!(confusion(&[1.0], &[1.0], 1.0).unwrap(), counts(1, 0, 0, 0));
    }

    #[test]
    fn score_examples() {
        assert_eq!(csi(&counts(3, 0, 0, 1)), Some(0.75));
        assert_eq!(hss(&counts(1, 0, 1, 0)), Some(1.0));
        assert_eq!(hss(&counts(25, 25, 25, 25)), Some(0.0));
        assert_eq!(csi(&counts(0, 0, 10, 0)), None);
        assert_eq!(hss(&counts(0, 0, 10, 0)), None);
    }

    #[test]
    fn perf_rows_examples() {
        let rows = performance_diagram_rows(&[
            (1.0, counts(4, 0, 3, 0)),
            (3.0, counts(1, 1, 5, 1)),
            (5.0, counts(0, 0, 9, 0)),
        ])
        .unwrap();
        assert_eq!((rows[0].csi, rows[0].bias), (Some(1.0), Some(1.0)));
        assert_eq!((rows[1].pod, rows[1].sr), (Some(0.5), Some(0.5)));
        assert!((rows[1].csi.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(rows[2].is_marker());
        assert_eq!(performance_diagram_rows(&[]), Err(MetricError::Empty));
    }

    #[test]
    fn standard_error_examples() {
        assert_eq!(standard_error(&[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert!((standard_error(&[1.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(standard_error(&[1.0]), Err(MetricError::TooFewUnits(1)));
    }

    #[test]
    fn wmae_metric_examples() {
        let y = vec![vec![5.0], vec![0.0], vec![1.0]];
        let p = vec![vec![3.0], vec![0.3], vec![1.0]];
        assert_eq!(wmae_metric(&y, &p, 0.5).unwrap(), vec![10.0, 0.0, 0.0]);
        let th0 = wmae_metric(&y, &p, 0.0).unwrap();
        assert!(th0[1] >= 0.3 - 1e-15);
        assert_eq!(wmae_metric(&y, &y, 0.5).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn verifier_pools_and_splits_by_day() {
        let mut v = Verifier::new(&[1.0], &[0]);
        v.add_maps(0, &[&[2.0, 0.0]], &[&[2.0, 0.0]]).unwrap();
        v.add_maps(1, &[&[2.0, 0.0]], &[&[0.0, 2.0]]).unwrap();
        let r = v.finish("m", Split::Test).unwrap();
        let t = &r.hours[0].thresholds[0];
        assert_eq!(t.counts, counts(1, 1, 1, 1));
        assert_eq!(t.csi, Some(1.0 / 3.0));
        // Day CSIs are 1 and 0.
        assert!((t.csi_se.unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(r.days, 2);
        let csv = report_csv(&[r]);
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.lines().nth(1).unwrap().starts_with("m,test,0,1,1,1,1,1,"));
        assert!(Verifier::new(&[1.0], &[0]).finish("m", Split::Val).is_err());
    }
}
