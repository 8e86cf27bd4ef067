//! Evaluation metrics: temporal IoU, mAP / mAR at IoU thresholds, frame
//! accuracy, and the missing-step / order-consistency statistics of an
//! annotation set.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::datamodel::{
    AnnotationSet, DetectionSet, Interval, Lexicon, VideoAnnotation, VideoDetections,
};
use crate::error::{Error, Result};

pub const DEFAULT_ALPHAS: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];
pub const DEFAULT_FRAME_RATE_HZ: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub alphas: Vec<f64>,
    pub frame_rate_hz: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            alphas: DEFAULT_ALPHAS.to_vec(),
            frame_rate_hz: DEFAULT_FRAME_RATE_HZ,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(Error::config("at least one IoU threshold is required"));
        }
        for (i, a) in self.alphas.iter().enumerate() {
            if !(*a > 0.0 && *a <= 1.0) {
                return Err(Error::config(format!("IoU threshold {a} outside (0, 1]")));
            }
            if i > 0 && *a <= self.alphas[i - 1] {
                return Err(Error::config("IoU thresholds must be strictly increasing"));
            }
        }
        if !(self.frame_rate_hz > 0.0 && self.frame_rate_hz.is_finite()) {
            return Err(Error::config("frame rate must be positive"));
        }
        Ok(())
    }
}

pub fn iou(g: &Interval, d: &Interval) -> f64 {
    g.iou(d)
}

/// Outcome of greedy matching for one class in one video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    /// Per detection, in input order: true positive or not.
    pub tp: Vec<bool>,
    /// Per ground-truth segment: whether some detection claimed it.
    pub matched: Vec<bool>,
}

fn best_unmatched(gt: &[Interval], matched: &[bool], det: &Interval, alpha: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, g) in gt.iter().enumerate() {
        if matched[j] {
            continue;
        }
        let o = g.iou(det);
        if o >= alpha && best.is_none_or(|(_, b)| o > b) {
            best = Some((j, o));
        }
    }
    best.map(|(j, _)| j)
}

/// Matches detections (already sorted by descending score) to ground truth.
/// Each detection claims the unmatched segment of highest IoU if that IoU is
/// at least `alpha`.
pub fn match_greedy(detections: &[Interval], gt: &[Interval], alpha: f64) -> Matching {
    let mut matched = vec![false; gt.len()];
    let tp = detections
        .iter()
        .map(|d| match best_unmatched(gt, &matched, d, alpha) {
            Some(j) => {
                matched[j] = true;
                true
            }
            None => false,
        })
        .collect();
    Matching { tp, matched }
}

/// Sum of precision at every true-positive rank, divided by the number of
/// ground-truth segments.
pub fn average_precision(flags: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &tp) in flags.iter().enumerate() {
        if tp {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    total / n_gt as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassEval {
    pub step: usize,
    pub n_gt: usize,
    pub n_det: usize,
    pub ap: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaEval {
    pub alpha: f64,
    pub map: f64,
    pub mar: f64,
    pub per_class: Vec<ClassEval>,
}

struct Ref<'a> {
    video: usize,
    det: &'a crate::datamodel::Detection,
}

/// Evaluates all classes that have ground truth at one IoU threshold.
///
/// Detections of a class are ranked across videos by descending score and
/// matched greedily within their own video. Detections in videos without
/// annotations count as false positives.
pub fn evaluate_at(
    detections: &DetectionSet,
    annotations: &AnnotationSet,
    alpha: f64,
) -> Result<AlphaEval> {
    let video_index: HashMap<&str, usize> = annotations
        .videos
        .iter()
        .enumerate()
        .map(|(i, v)| (v.video_id.as_str(), i))
        .collect();

    // ground truth per (class, video)
    let mut gt: BTreeMap<usize, Vec<Vec<Interval>>> = BTreeMap::new();
    for (vi, v) in annotations.videos.iter().enumerate() {
        for s in &v.segments {
            gt.entry(s.step)
                .or_insert_with(|| vec![Vec::new(); annotations.videos.len()])[vi]
                .push(s.interval());
        }
    }
    if gt.is_empty() {
        return Err(Error::EmptyEvaluation);
    }

    let mut dets: BTreeMap<usize, Vec<Ref>> = BTreeMap::new();
    for (order, v) in detections.videos.iter().enumerate() {
        let video = video_index
            .get(v.video_id.as_str())
            .copied()
            .unwrap_or(usize::MAX - order);
        for det in &v.detections {
            dets.entry(det.step).or_default().push(Ref { video, det });
        }
    }

    let mut per_class = Vec::with_capacity(gt.len());
    for (&step, gt_by_video) in &gt {
        let n_gt: usize = gt_by_video.iter().map(Vec::len).sum();
        let mut ranked = dets.remove(&step).unwrap_or_default();
        ranked.sort_by(|a, b| {
            b.det
                .score
                .total_cmp(&a.det.score)
                .then(a.video.cmp(&b.video))
                .then(a.det.start_s.total_cmp(&b.det.start_s))
                .then(a.det.end_s.total_cmp(&b.det.end_s))
        });
        let mut matched: Vec<Vec<bool>> =
            gt_by_video.iter().map(|g| vec![false; g.len()]).collect();
        let flags: Vec<bool> = ranked
            .iter()
            .map(|r| {
                let Some(g) = gt_by_video.get(r.video) else {
                    return false;
                };
                match best_unmatched(g, &matched[r.video], &r.det.interval(), alpha) {
                    Some(j) => {
                        matched[r.video][j] = true;
                        true
                    }
                    None => false,
                }
            })
            .collect();
        let hits = flags.iter().filter(|f| **f).count();
        per_class.push(ClassEval {
            step,
            n_gt,
            n_det: ranked.len(),
            ap: average_precision(&flags, n_gt),
            recall: hits as f64 / n_gt as f64,
        });
    }
    let n = per_class.len() as f64;
    Ok(AlphaEval {
        alpha,
        map: per_class.iter().map(|c| c.ap).sum::<f64>() / n,
        mar: per_class.iter().map(|c| c.recall).sum::<f64>() / n,
        per_class,
    })
}

/// Mean over ground-truth classes of the per-class average precision.
pub fn map_at(detections: &DetectionSet, annotations: &AnnotationSet, alpha: f64) -> Result<f64> {
    evaluate_at(detections, annotations, alpha).map(|e| e.map)
}

/// Mean over ground-truth classes of the fraction of segments matched.
pub fn mar_at(detections: &DetectionSet, annotations: &AnnotationSet, alpha: f64) -> Result<f64> {
    evaluate_at(detections, annotations, alpha).map(|e| e.mar)
}

/// Fraction of frames whose labels agree. `None` is background.
pub fn frame_accuracy(pred: &[Option<usize>], gt: &[Option<usize>]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::Dimension(format!(
            "frame sequences differ in length ({} vs {})",
            pred.len(),
            gt.len()
        )));
    }
    if gt.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let hits = pred.iter().zip(gt).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / gt.len() as f64)
}

/// Number of frames sampled from `[0, duration)` at `fps`; frame `i` is at `i / fps`.
pub fn frame_count(duration_s: f64, fps: f64) -> usize {
    (duration_s * fps + 1e-9).floor() as usize
}

/// Per-frame label of the highest-scoring detection covering the frame.
pub fn rasterize_detections(
    video: &VideoDetections,
    duration_s: f64,
    fps: f64,
) -> Vec<Option<usize>> {
    let n = frame_count(duration_s, fps);
    let mut best: Vec<Option<(f64, usize)>> = vec![None; n];
    for d in &video.detections {
        for (i, slot) in best.iter_mut().enumerate() {
            let t = i as f64 / fps;
            if t >= d.start_s && t < d.end_s && slot.is_none_or(|(s, _)| d.score > s) {
                *slot = Some((d.score, d.step));
            }
        }
    }
    best.into_iter().map(|b| b.map(|(_, step)| step)).collect()
}

/// Per-frame ground-truth label; the first covering segment wins.
pub fn rasterize_annotation(video: &VideoAnnotation, fps: f64) -> Vec<Option<usize>> {
    (0..frame_count(video.duration_s, fps))
        .map(|i| {
            let t = i as f64 / fps;
            video
                .segments
                .iter()
                .find(|s| t >= s.start_s && t < s.end_s)
                .map(|s| s.step)
        })
        .collect()
}

/// Frame accuracy pooled over all annotated videos. Videos without
/// detections are predicted as background throughout.
pub fn frame_accuracy_set(
    detections: &DetectionSet,
    annotations: &AnnotationSet,
    fps: f64,
) -> Result<f64> {
    let empty = |id: &str| VideoDetections {
        video_id: id.to_string(),
        detections: Vec::new(),
    };
    let mut pred = Vec::new();
    let mut gt = Vec::new();
    for v in &annotations.videos {
        let d = detections
            .videos
            .iter()
            .find(|d| d.video_id == v.video_id)
            .cloned()
            .unwrap_or_else(|| empty(&v.video_id));
        pred.extend(rasterize_detections(&d, v.duration_s, fps));
        gt.extend(rasterize_annotation(v, fps));
    }
    frame_accuracy(&pred, &gt)
}

/// Length of the longest common subsequence.
pub fn lcs<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskOrderStats {
    pub task: usize,
    pub n_videos: usize,
    pub n_steps: usize,
    pub mss: f64,
    pub oce: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderStats {
    pub per_task: Vec<TaskOrderStats>,
    pub mean_mss: f64,
    pub mean_oce: f64,
}

/// Missing-step score and order-consistency error per task.
///
/// For a task with `K` steps and `N` videos, `MSS = 1 - sum(v) / (K N)` and
/// `OCE = 1 - sum(l) / sum(u)`, where `u = v` is the number of distinct
/// annotated steps in a video and `l` the LCS of its step sequence with the
/// task's canonical order. Tasks without videos are left out.
pub fn mss_oce(annotations: &AnnotationSet, lexicon: &Lexicon) -> Result<OrderStats> {
    let mut per_task = Vec::new();
    for task in 0..lexicon.num_tasks() {
        let canonical = lexicon.steps_of(task);
        let k = canonical.len();
        let mut n = 0usize;
        let (mut sum_v, mut sum_l) = (0usize, 0usize);
        for v in annotations.videos.iter().filter(|v| v.task == task) {
            n += 1;
            let seq = v.step_sequence();
            let mut distinct = seq.clone();
            distinct.sort_unstable();
            distinct.dedup();
            sum_v += distinct.len();
            sum_l += lcs(&seq, canonical);
        }
        if n == 0 {
            continue;
        }
        // integer numerators keep simple cases exact
        let mss = (k * n - sum_v.min(k * n)) as f64 / (k * n) as f64;
        let oce = if sum_v == 0 {
            0.0
        } else {
            (sum_v - sum_l) as f64 / sum_v as f64
        };
        per_task.push(TaskOrderStats {
            task,
            n_videos: n,
            n_steps: k,
            mss,
            oce,
        });
    }
    if per_task.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let m = per_task.len() as f64;
    Ok(OrderStats {
        mean_mss: per_task.iter().map(|t| t.mss).sum::<f64>() / m,
        mean_oce: per_task.iter().map(|t| t.oce).sum::<f64>() / m,
        per_task,
    })
}

/// Collected evaluation results with CSV and plain-text renderings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricReport {
    pub by_alpha: Vec<AlphaEval>,
    pub frame_accuracy: Option<f64>,
    pub order: Option<OrderStats>,
}

fn fmt_value(v: f64) -> String {
    format!("{v:.6}")
}

impl MetricReport {
    pub fn detection(
        detections: &DetectionSet,
        annotations: &AnnotationSet,
        cfg: &EvalConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let by_alpha = cfg
            .alphas
            .iter()
            .map(|&a| evaluate_at(detections, annotations, a))
            .collect::<Result<_>>()?;
        Ok(MetricReport {
            by_alpha,
            ..Default::default()
        })
    }

    /// CSV with columns `metric,alpha,class_or_task,value`; mean rows last.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,alpha,class_or_task,value\n");
        for e in &self.by_alpha {
            for c in &e.per_class {
                let _ = writeln!(out, "AP,{},{},{}", e.alpha, c.step, fmt_value(c.ap));
            }
            for c in &e.per_class {
                let _ = writeln!(out, "AR,{},{},{}", e.alpha, c.step, fmt_value(c.recall));
            }
        }
        if let Some(o) = &self.order {
            for t in &o.per_task {
                let _ = writeln!(out, "MSS,,{},{}", t.task, fmt_value(t.mss));
            }
            for t in &o.per_task {
                let _ = writeln!(out, "OCE,,{},{}", t.task, fmt_value(t.oce));
            }
        }
        for e in &self.by_alpha {
            let _ = writeln!(out, "mAP,{},mean,{}", e.alpha, fmt_value(e.map));
        }
        for e in &self.by_alpha {
            let _ = writeln!(out, "mAR,{},mean,{}", e.alpha, fmt_value(e.mar));
        }
        if let Some(fa) = self.frame_accuracy {
            let _ = writeln!(out, "frame_accuracy,,mean,{}", fmt_value(fa));
        }
        if let Some(o) = &self.order {
            let _ = writeln!(out, "MSS,,mean,{}", fmt_value(o.mean_mss));
            let _ = writeln!(out, "OCE,,mean,{}", fmt_value(o.mean_oce));
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        if !self.by_alpha.is_empty() {
            let _ = write!(out, "{:<8}", "alpha");
            for e in &self.by_alpha {
                let _ = write!(out, "{:>10}", e.alpha);
            }
            out.push('\n');
            for (name, pick) in [("mAP", 0), ("mAR", 1)] {
                let _ = write!(out, "{name:<8}");
                for e in &self.by_alpha {
                    let v = if pick == 0 { e.map } else { e.mar };
                    let _ = write!(out, "{:>10.4}", 100.0 * v);
                }
                out.push('\n');
            }
        }
        if let Some(fa) = self.frame_accuracy {
            let _ = writeln!(out, "frame accuracy: {:.4}", 100.0 * fa);
        }
        if let Some(o) = &self.order {
            let _ = writeln!(
                out,
                "{:<8}{:>8}{:>8}{:>10}{:>10}",
                "task", "videos", "steps", "MSS", "OCE"
            );
            for t in &o.per_task {
                let _ = writeln!(
                    out,
                    "{:<8}{:>8}{:>8}{:>10.4}{:>10.4}",
                    t.task, t.n_videos, t.n_steps, t.mss, t.oce
                );
            }
            let _ = writeln!(
                out,
                "{:<24}{:>10.4}{:>10.4}",
                "mean", o.mean_mss, o.mean_oce
            );
        }
        out
    }
}
