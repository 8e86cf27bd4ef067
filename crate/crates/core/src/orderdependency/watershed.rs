use std::ops::Range;

use super::curves::{CurveSet, TimeGrid};
use crate::error::{Error, Result};

/// When to stop lowering the threshold. Both values are in slots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Criterion {
    /// Stop once the average gap between consecutive segments is below the value.
    AvgGap(f64),
    /// Stop once the average segment length exceeds the value.
    AvgLen(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WatershedConfig {
    pub hi_frac: f64,
    pub lo_frac: f64,
    pub step_frac: f64,
    pub criterion: Criterion,
}

impl Default for WatershedConfig {
    fn default() -> Self {
        WatershedConfig {
            hi_frac: 0.95,
            lo_frac: 0.05,
            step_frac: 0.05,
            criterion: Criterion::AvgGap(6.0),
        }
    }
}

impl WatershedConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lo_frac > 0.0 && self.lo_frac < self.hi_frac && self.hi_frac <= 1.0) {
            return Err(Error::config(format!(
                "watershed fractions need 0 < lo ({}) < hi ({}) <= 1",
                self.lo_frac, self.hi_frac
            )));
        }
        if self.step_frac.is_nan() || self.step_frac <= 0.0 {
            return Err(Error::config("watershed step must be > 0"));
        }
        let (Criterion::AvgGap(v) | Criterion::AvgLen(v)) = self.criterion;
        if !v.is_finite() || v < 0.0 {
            return Err(Error::config(format!(
                "watershed criterion value must be >= 0, got {v}"
            )));
        }
        Ok(())
    }

    /// Number of thresholds in the sweep `hi, hi - step, ..., >= lo`.
    pub fn sweep_len(&self) -> usize {
        ((self.hi_frac - self.lo_frac) / self.step_frac + 1e-9).floor() as usize + 1
    }

    /// Threshold fraction of sweep position `i`.
    pub fn fraction(&self, i: usize) -> f64 {
        self.hi_frac - i as f64 * self.step_frac
    }
}

/// One grouped segment with its integrated step scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start_s: f64,
    pub end_s: f64,
    /// Slots covered by the segment.
    pub slots: Range<usize>,
    pub scores: Vec<f64>,
}

/// Disjoint, time-ordered segments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SegmentList {
    pub segments: Vec<Segment>,
}

impl SegmentList {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Segments over the given slot runs, scored by integrating `f` over each run.
    pub fn from_runs(runs: &[Range<usize>], curves: &CurveSet, grid: &TimeGrid) -> Self {
        let w = grid.slot_width();
        let segments = runs
            .iter()
            .map(|r| {
                let mut scores = vec![0.0; curves.f.steps];
                for m in r.clone() {
                    for (s, v) in scores.iter_mut().zip(curves.f.row(m)) {
                        *s += v * w;
                    }
                }
                Segment {
                    start_s: grid.slot_start(r.start),
                    end_s: grid.slot_start(r.end),
                    slots: r.clone(),
                    scores,
                }
            })
            .collect();
        SegmentList { segments }
    }

    /// Same intervals, new scores.
    pub fn with_scores(&self, scores: Vec<Vec<f64>>) -> SegmentList {
        SegmentList {
            segments: self
                .segments
                .iter()
                .zip(scores)
                .map(|(s, scores)| Segment {
                    scores,
                    ..s.clone()
                })
                .collect(),
        }
    }
}

/// Incrementally maintained set of active slots, tracked as maximal runs.
struct RunTracker {
    active: Vec<bool>,
    // run_start[end] / run_end[start] are valid at run boundaries only
    run_start: Vec<usize>,
    run_end: Vec<usize>,
    runs: usize,
    count: usize,
    lo: usize,
    hi: usize,
}

impl RunTracker {
    fn new(n: usize) -> Self {
        RunTracker {
            active: vec![false; n],
            run_start: vec![0; n],
            run_end: vec![0; n],
            runs: 0,
            count: 0,
            lo: usize::MAX,
            hi: 0,
        }
    }

    fn activate(&mut self, i: usize) {
        let n = self.active.len();
        let left = i > 0 && self.active[i - 1];
        let right = i + 1 < n && self.active[i + 1];
        let start = if left { self.run_start[i - 1] } else { i };
        let end = if right { self.run_end[i + 1] } else { i };
        self.active[i] = true;
        self.run_end[start] = end;
        self.run_start[end] = start;
        self.runs = self.runs + 1 - usize::from(left) - usize::from(right);
        self.count += 1;
        self.lo = self.lo.min(i);
        self.hi = self.hi.max(i);
    }

    fn satisfied(&self, criterion: Criterion) -> bool {
        match criterion {
            Criterion::AvgGap(theta) => {
                if self.runs < 2 {
                    return false;
                }
                let span = self.hi - self.lo + 1;
                let gap = (span - self.count) as f64 / (self.runs - 1) as f64;
                gap < theta
            }
            Criterion::AvgLen(theta) => {
                self.runs > 0 && self.count as f64 / self.runs as f64 > theta
            }
        }
    }

    fn runs(&self) -> Vec<Range<usize>> {
        let mut out = Vec::with_capacity(self.runs);
        let mut m = 0;
        while m < self.active.len() {
            if self.active[m] {
                let end = self.run_end[m];
                out.push(m..end + 1);
                m = end + 1;
            } else {
                m += 1;
            }
        }
        out
    }
}

/// Groups the actionness signal into disjoint segments by a descending
/// threshold sweep.
///
/// At each threshold the segments are the maximal runs of slots whose
/// actionness exceeds it. The sweep stops at the first threshold whose
/// segments satisfy the criterion and falls back to the lowest threshold.
/// A gap criterion is never satisfied by fewer than two segments.
pub fn watershed_group(
    curves: &CurveSet,
    grid: &TimeGrid,
    cfg: &WatershedConfig,
) -> Result<SegmentList> {
    cfg.validate()?;
    let a = &curves.actionness;
    if a.len() != grid.slots() {
        return Err(Error::Dimension(format!(
            "actionness has {} slots, grid has {}",
            a.len(),
            grid.slots()
        )));
    }
    let max = a.iter().copied().fold(0.0f64, f64::max);
    if max.is_nan() || max <= 0.0 {
        return Err(Error::NoSignal);
    }

    let mut order: Vec<usize> = (0..a.len()).collect();
    order.sort_by(|&i, &j| a[j].total_cmp(&a[i]).then(i.cmp(&j)));

    let mut tracker = RunTracker::new(a.len());
    let mut next = 0;
    let n = cfg.sweep_len();
    for i in 0..n {
        let threshold = cfg.fraction(i) * max;
        while next < order.len() && a[order[next]] > threshold {
            tracker.activate(order[next]);
            next += 1;
        }
        if tracker.satisfied(cfg.criterion) {
            break;
        }
    }
    Ok(SegmentList::from_runs(&tracker.runs(), curves, grid))
}
