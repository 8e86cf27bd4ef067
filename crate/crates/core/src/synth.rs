//! Seeded synthetic corpora and brute-force reference implementations.
//!
//! Every video draws from its own ChaCha8 stream keyed by `(seed, split,
//! index)`, so a corpus is a pure function of its [`SynthConfig`] and videos
//! can be generated in any order or in parallel.

use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::datamodel::{
    quantize, write_annotations, write_lexicon, write_proposals, AnnotatedSegment, AnnotationSet,
    Detection, DetectionSet, Domain, Lexicon, Proposal, ProposalFile, ProposalSet, Step, Task,
    VideoAnnotation, VideoDetections,
};
use crate::error::{Error, Result};
use crate::orderdependency::{
    Criterion, CurveSet, Segment, SegmentList, SlotMatrix, TimeGrid, WatershedConfig,
};

/// Segment durations are drawn from this range, in seconds.
pub const SEGMENT_DURATION_S: (f64, f64) = (5.0, 30.0);
/// Background stretches before, between and after segments, in seconds.
pub const BACKGROUND_GAP_S: (f64, f64) = (5.0, 30.0);
/// Peak score given to the labeled step of a proposal.
pub const PEAK_SCORE: (f64, f64) = (0.5, 1.0);
/// Fraction of the peak moved to a foreign-task step on confusion.
pub const CONFUSION_FRACTION: (f64, f64) = (0.3, 0.7);
/// Upper bound of the per-step background score, divided by K.
pub const BACKGROUND_SCORE: f64 = 0.1;
const TASKS_PER_DOMAIN: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_tasks: usize,
    pub steps_per_task: usize,
    /// Videos per split; train and test each get this many.
    pub n_videos: usize,
    /// Probability that each canonical step is left out of a video.
    pub drop_prob: f64,
    /// Probability of swapping each adjacent pair in one left-to-right pass.
    pub swap_prob: f64,
    /// Proposal boundary noise, uniform in `[-jitter_s, jitter_s]`.
    pub jitter_s: f64,
    /// Probability that a proposal leaks part of its peak to a step of another task.
    pub confusion_prob: f64,
    pub proposals_per_segment: usize,
    /// Probability that a proposal's peak lands on another step of the same task.
    pub label_noise_prob: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_tasks: 4,
            steps_per_task: 5,
            n_videos: 20,
            drop_prob: 0.1,
            swap_prob: 0.1,
            jitter_s: 2.0,
            confusion_prob: 0.2,
            proposals_per_segment: 4,
            label_noise_prob: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("drop_prob", self.drop_prob),
            ("swap_prob", self.swap_prob),
            ("confusion_prob", self.confusion_prob),
            ("label_noise_prob", self.label_noise_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        for (name, n) in [
            ("n_tasks", self.n_tasks),
            ("steps_per_task", self.steps_per_task),
            ("n_videos", self.n_videos),
            ("proposals_per_segment", self.proposals_per_segment),
        ] {
            if n == 0 {
                return Err(Error::config(format!("{name} must be >= 1")));
            }
        }
        if !(self.jitter_s >= 0.0 && self.jitter_s.is_finite()) {
            return Err(Error::config("jitter_s must be >= 0"));
        }
        if self.drop_prob >= 1.0 {
            return Err(Error::config(
                "drop_prob = 1 drops every step; videos would have no segments",
            ));
        }
        Ok(())
    }

    /// Sets one field from its textual key and value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("invalid value for {key}: {value}")))
        }
        match key.trim() {
            "seed" => self.seed = parse(key, value)?,
            "n_tasks" => self.n_tasks = parse(key, value)?,
            "steps_per_task" => self.steps_per_task = parse(key, value)?,
            "n_videos" => self.n_videos = parse(key, value)?,
            "drop_prob" => self.drop_prob = parse(key, value)?,
            "swap_prob" => self.swap_prob = parse(key, value)?,
            "jitter_s" => self.jitter_s = parse(key, value)?,
            "confusion_prob" => self.confusion_prob = parse(key, value)?,
            "proposals_per_segment" => self.proposals_per_segment = parse(key, value)?,
            "label_noise_prob" => self.label_noise_prob = parse(key, value)?,
            other => return Err(Error::config(format!("unknown config key {other}"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines on top of `self`. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn apply_lines(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key=value", n + 1)))?;
            self.set(key, value)?;
        }
        Ok(())
    }
}

/// A generated lexicon with train / test annotations and detector output
/// for the test videos.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub lexicon: Lexicon,
    pub train: AnnotationSet,
    pub test: AnnotationSet,
    pub proposals: ProposalFile,
}

impl Corpus {
    pub const LEXICON_FILE: &'static str = "lexicon.json";
    pub const TRAIN_FILE: &'static str = "train_annotations.json";
    pub const TEST_FILE: &'static str = "test_annotations.json";
    pub const PROPOSALS_FILE: &'static str = "proposals.json";

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        write_lexicon(&dir.join(Self::LEXICON_FILE), &self.lexicon)?;
        write_annotations(&dir.join(Self::TRAIN_FILE), &self.train)?;
        write_annotations(&dir.join(Self::TEST_FILE), &self.test)?;
        write_proposals(&dir.join(Self::PROPOSALS_FILE), &self.proposals)
    }
}

pub fn synth_lexicon(n_tasks: usize, steps_per_task: usize) -> Lexicon {
    let n_domains = n_tasks.div_ceil(TASKS_PER_DOMAIN);
    Lexicon::new(
        (0..n_domains)
            .map(|id| Domain {
                id,
                name: format!("domain_{id}"),
            })
            .collect(),
        (0..n_tasks)
            .map(|id| Task {
                id,
                name: format!("task_{id}"),
                domain: id / TASKS_PER_DOMAIN,
            })
            .collect(),
        (0..n_tasks * steps_per_task)
            .map(|id| Step {
                id,
                label: format!("task_{}_step_{}", id / steps_per_task, id % steps_per_task),
                task: id / steps_per_task,
            })
            .collect(),
    )
    .expect("synthetic lexicon is valid")
}

fn video_rng(seed: u64, split: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((split << 32) | index as u64);
    rng
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn annotate(
    cfg: &SynthConfig,
    lexicon: &Lexicon,
    video_id: String,
    rng: &mut ChaCha8Rng,
) -> VideoAnnotation {
    let task = rng.random_range(0..cfg.n_tasks);
    let canonical = lexicon.steps_of(task);
    let mut seq: Vec<usize> = canonical
        .iter()
        .copied()
        .filter(|_| !rng.random_bool(cfg.drop_prob))
        .collect();
    if seq.is_empty() {
        seq.push(canonical[rng.random_range(0..canonical.len())]);
    }
    for i in 0..seq.len().saturating_sub(1) {
        if rng.random_bool(cfg.swap_prob) {
            seq.swap(i, i + 1);
        }
    }
    let mut t = uniform(rng, BACKGROUND_GAP_S);
    let mut segments = Vec::with_capacity(seq.len());
    for step in seq {
        let start_s = quantize(t);
        let end_s = quantize(t + uniform(rng, SEGMENT_DURATION_S));
        segments.push(AnnotatedSegment {
            step,
            start_s,
            end_s,
        });
        t = end_s + uniform(rng, BACKGROUND_GAP_S);
    }
    VideoAnnotation {
        video_id,
        task,
        duration_s: quantize(t),
        segments,
    }
}

fn detect(
    cfg: &SynthConfig,
    lexicon: &Lexicon,
    video: &VideoAnnotation,
    rng: &mut ChaCha8Rng,
) -> ProposalSet {
    let k = lexicon.num_steps();
    let siblings = lexicon.steps_of(video.task);
    let foreign: Vec<usize> = (0..k)
        .filter(|&s| lexicon.task_of(s) != video.task)
        .collect();
    let t_max = video.duration_s;
    let mut proposals = Vec::new();
    for seg in &video.segments {
        for _ in 0..cfg.proposals_per_segment {
            let j = cfg.jitter_s;
            let mut start = (seg.start_s + uniform(rng, (-j, j))).clamp(0.0, t_max);
            let mut end = (seg.end_s + uniform(rng, (-j, j))).clamp(0.0, t_max);
            if end - start < 1.0 {
                (start, end) = (seg.start_s, seg.end_s);
            }
            let mut scores: Vec<f64> = (0..k)
                .map(|_| rng.random::<f64>() * BACKGROUND_SCORE / k as f64)
                .collect();
            let mut label = seg.step;
            if siblings.len() > 1 && rng.random_bool(cfg.label_noise_prob) {
                let others: Vec<usize> = siblings
                    .iter()
                    .copied()
                    .filter(|&s| s != seg.step)
                    .collect();
                label = others[rng.random_range(0..others.len())];
            }
            let peak = uniform(rng, PEAK_SCORE);
            scores[label] += peak;
            if !foreign.is_empty() && rng.random_bool(cfg.confusion_prob) {
                let target = foreign[rng.random_range(0..foreign.len())];
                let moved = peak * uniform(rng, CONFUSION_FRACTION);
                scores[label] -= moved;
                scores[target] += moved;
            }
            let (start_s, end_s) = (quantize(start), quantize(end));
            proposals.push(Proposal::new(
                start_s,
                end_s,
                scores.into_iter().map(quantize).collect(),
            ));
        }
    }
    ProposalSet {
        video_id: video.video_id.clone(),
        duration_s: video.duration_s,
        proposals,
    }
}

const TRAIN_SPLIT: u64 = 0;
const TEST_SPLIT: u64 = 1;

pub fn generate_corpus(cfg: &SynthConfig) -> Result<Corpus> {
    cfg.validate()?;
    let lexicon = synth_lexicon(cfg.n_tasks, cfg.steps_per_task);
    let train = (0..cfg.n_videos)
        .into_par_iter()
        .map(|i| {
            let mut rng = video_rng(cfg.seed, TRAIN_SPLIT, i);
            annotate(cfg, &lexicon, format!("train_{i:04}"), &mut rng)
        })
        .collect();
    let (test, proposals): (Vec<_>, Vec<_>) = (0..cfg.n_videos)
        .into_par_iter()
        .map(|i| {
            let mut rng = video_rng(cfg.seed, TEST_SPLIT, i);
            let ann = annotate(cfg, &lexicon, format!("test_{i:04}"), &mut rng);
            let props = detect(cfg, &lexicon, &ann, &mut rng);
            (ann, props)
        })
        .unzip();
    Ok(Corpus {
        lexicon,
        train: AnnotationSet { videos: train },
        test: AnnotationSet { videos: test },
        proposals: ProposalFile { videos: proposals },
    })
}

/// Reference mAP: explicit precision / recall curves and an exhaustive
/// matcher, for small instances. Returns 0 when no class has ground truth.
pub fn oracle_map(detections: &DetectionSet, annotations: &AnnotationSet, alpha: f64) -> f64 {
    fn overlap(a: (f64, f64), b: (f64, f64)) -> f64 {
        let inter = a.1.min(b.1) - a.0.max(b.0);
        if inter <= 0.0 {
            return 0.0;
        }
        let union = (a.1 - a.0) + (b.1 - b.0) - inter;
        (inter / union).min(1.0)
    }

    let mut classes: Vec<usize> = annotations
        .videos
        .iter()
        .flat_map(|v| v.segments.iter().map(|s| s.step))
        .collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.is_empty() {
        return 0.0;
    }

    let video_rank = |id: &str, order: usize| {
        annotations
            .videos
            .iter()
            .position(|v| v.video_id == id)
            .unwrap_or(usize::MAX - order)
    };

    let mut total_ap = 0.0;
    for &c in &classes {
        // (video rank, video id, start, end, score)
        let mut ranked: Vec<(usize, &str, f64, f64, f64)> = Vec::new();
        for (order, v) in detections.videos.iter().enumerate() {
            for d in v.detections.iter().filter(|d| d.step == c) {
                ranked.push((
                    video_rank(&v.video_id, order),
                    &v.video_id,
                    d.start_s,
                    d.end_s,
                    d.score,
                ));
            }
        }
        ranked.sort_by(|a, b| {
            b.4.total_cmp(&a.4)
                .then(a.0.cmp(&b.0))
                .then(a.2.total_cmp(&b.2))
                .then(a.3.total_cmp(&b.3))
        });

        // every ground-truth segment of this class, with a used flag
        let mut gts: Vec<(&str, f64, f64, bool)> = annotations
            .videos
            .iter()
            .flat_map(|v| {
                v.segments
                    .iter()
                    .filter(|s| s.step == c)
                    .map(move |s| (v.video_id.as_str(), s.start_s, s.end_s, false))
            })
            .collect();
        let n_gt = gts.len() as f64;

        let mut precision = Vec::with_capacity(ranked.len());
        let mut recall = Vec::with_capacity(ranked.len());
        let (mut tp, mut fp) = (0.0, 0.0);
        for (_, vid, s, e, _) in &ranked {
            let mut best: Option<usize> = None;
            let mut best_iou = -1.0;
            for (j, g) in gts.iter().enumerate() {
                if g.0 != *vid || g.3 {
                    continue;
                }
                let o = overlap((g.1, g.2), (*s, *e));
                if o >= alpha && o > best_iou {
                    best_iou = o;
                    best = Some(j);
                }
            }
            match best {
                Some(j) => {
                    gts[j].3 = true;
                    tp += 1.0;
                }
                None => fp += 1.0,
            }
            precision.push(tp / (tp + fp));
            recall.push(tp / n_gt);
        }
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        for (p, r) in precision.iter().zip(&recall) {
            ap += (r - prev_recall) * p;
            prev_recall = *r;
        }
        total_ap += ap;
    }
    total_ap / classes.len() as f64
}

/// Reference watershed: rescans every slot at every threshold of the sweep.
pub fn oracle_watershed(
    curves: &CurveSet,
    grid: &TimeGrid,
    cfg: &WatershedConfig,
) -> Result<SegmentList> {
    let a = &curves.actionness;
    let max = a.iter().cloned().fold(0.0, f64::max);
    if max.is_nan() || max <= 0.0 {
        return Err(Error::NoSignal);
    }

    let runs_above = |threshold: f64| {
        let mut runs: Vec<(usize, usize)> = Vec::new();
        let mut open: Option<usize> = None;
        for m in 0..=a.len() {
            let on = m < a.len() && a[m] > threshold;
            match (on, open) {
                (true, None) => open = Some(m),
                (false, Some(s)) => {
                    runs.push((s, m));
                    open = None;
                }
                _ => {}
            }
        }
        runs
    };
    let satisfied = |runs: &[(usize, usize)]| match cfg.criterion {
        Criterion::AvgGap(theta) => {
            if runs.len() < 2 {
                return false;
            }
            let gaps: usize = runs.windows(2).map(|w| w[1].0 - w[0].1).sum();
            (gaps as f64) / ((runs.len() - 1) as f64) < theta
        }
        Criterion::AvgLen(theta) => {
            if runs.is_empty() {
                return false;
            }
            let total: usize = runs.iter().map(|r| r.1 - r.0).sum();
            (total as f64) / (runs.len() as f64) > theta
        }
    };

    let mut chosen = Vec::new();
    let mut i = 0usize;
    loop {
        let frac = cfg.hi_frac - i as f64 * cfg.step_frac;
        if frac < cfg.lo_frac - 1e-9 {
            break;
        }
        chosen = runs_above(frac * max);
        if satisfied(&chosen) {
            break;
        }
        i += 1;
    }

    let w = grid.slot_width();
    let segments = chosen
        .into_iter()
        .map(|(s, e)| {
            let scores = (0..curves.f.steps)
                .map(|k| (s..e).map(|m| curves.f.get(m, k) * w).sum())
                .collect();
            Segment {
                start_s: if s == 0 { 0.0 } else { s as f64 * w },
                end_s: if e == grid.slots() {
                    grid.duration_s()
                } else {
                    e as f64 * w
                },
                slots: s..e,
                scores,
            }
        })
        .collect();
    Ok(SegmentList { segments })
}

/// Random non-negative curve set with bumps, plateaus and exact zeros, for
/// exercising the watershed.
pub fn random_curve_set(seed: u64, slots: usize, steps: usize) -> CurveSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = SlotMatrix::zeros(slots, steps);
    let bumps = rng.random_range(1..=6);
    for _ in 0..bumps {
        let center = rng.random_range(0..slots) as f64;
        let width = rng.random_range(1.0..slots as f64 / 4.0);
        let height = rng.random_range(0.1..2.0);
        let step = rng.random_range(0..steps);
        let flat = rng.random_bool(0.3);
        for m in 0..slots {
            let z = (m as f64 - center) / width;
            let v = if flat {
                if z.abs() <= 1.0 {
                    height
                } else {
                    0.0
                }
            } else if z.abs() < 3.0 {
                height * (-0.5 * z * z).exp()
            } else {
                0.0
            };
            f.row_mut(m)[step] += v;
        }
    }
    if rng.random_bool(0.3) {
        // coarse values create ties across slots
        for v in f.data.iter_mut() {
            *v = (*v * 4.0).round() / 4.0;
        }
        if f.data.iter().all(|v| *v == 0.0) {
            f.row_mut(slots / 2)[0] = 1.0;
        }
    }
    CurveSet::from_matrix(f)
}

/// Random small detection / annotation pair: up to 5 classes, 20 ground-truth
/// segments and 50 detections spread over 1 to 3 videos.
pub fn random_eval_instance(seed: u64) -> (DetectionSet, AnnotationSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_classes = rng.random_range(1..=5);
    let n_videos = rng.random_range(1..=3);
    let n_gt = rng.random_range(1..=20);
    let n_det = rng.random_range(0..=50);
    let duration = 100.0;
    let interval = |rng: &mut ChaCha8Rng| {
        let a = (rng.random_range(0.0..90.0) * 4.0f64).round() / 4.0;
        let len = (rng.random_range(1.0..30.0) * 4.0f64).round() / 4.0;
        (a, (a + len).min(duration))
    };

    let mut annotations = AnnotationSet {
        videos: (0..n_videos)
            .map(|v| VideoAnnotation {
                video_id: format!("v{v}"),
                task: 0,
                duration_s: duration,
                segments: Vec::new(),
            })
            .collect(),
    };
    for _ in 0..n_gt {
        let v = rng.random_range(0..n_videos);
        let (start_s, end_s) = interval(&mut rng);
        annotations.videos[v].segments.push(AnnotatedSegment {
            step: rng.random_range(0..n_classes),
            start_s,
            end_s,
        });
    }
    for v in &mut annotations.videos {
        v.segments.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    }

    let mut detections = DetectionSet {
        videos: (0..n_videos)
            .map(|v| VideoDetections {
                video_id: format!("v{v}"),
                detections: Vec::new(),
            })
            .collect(),
    };
    for _ in 0..n_det {
        let v = rng.random_range(0..n_videos);
        let (start_s, end_s) = interval(&mut rng);
        detections.videos[v].detections.push(Detection {
            step: rng.random_range(0..n_classes),
            start_s,
            end_s,
            score: rng.random::<f64>(),
        });
    }
    (detections, annotations)
}
