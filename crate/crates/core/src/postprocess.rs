//! Turning refined proposals into final detections.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::datamodel::{Detection, DetectionSet, ProposalFile, ProposalSet, VideoDetections};
use crate::error::{Error, Result};

pub const DEFAULT_NMS_THRESHOLD: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmsConfig {
    pub iou_threshold: f64,
}

impl Default for NmsConfig {
    fn default() -> Self {
        NmsConfig {
            iou_threshold: DEFAULT_NMS_THRESHOLD,
        }
    }
}

impl NmsConfig {
    pub fn new(iou_threshold: f64) -> Result<Self> {
        if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
            return Err(Error::config(format!(
                "nms threshold must be in (0, 1], got {iou_threshold}"
            )));
        }
        Ok(NmsConfig { iou_threshold })
    }
}

/// Per-proposal weighted sum of two modalities' score vectors.
pub fn combine_modalities(
    a: &ProposalSet,
    b: &ProposalSet,
    weights: (f64, f64),
) -> Result<ProposalSet> {
    if a.video_id != b.video_id || a.proposals.len() != b.proposals.len() {
        return Err(Error::invalid(format!(
            "interval mismatch: videos {} and {} do not share proposals",
            a.video_id, b.video_id
        )));
    }
    let (wa, wb) = weights;
    let mut scores = Vec::with_capacity(a.proposals.len());
    for (i, (pa, pb)) in a.proposals.iter().zip(&b.proposals).enumerate() {
        if pa.start_s != pb.start_s || pa.end_s != pb.end_s {
            return Err(Error::invalid(format!(
                "interval mismatch in video {} proposal {i}",
                a.video_id
            )));
        }
        if pa.scores.len() != pb.scores.len() {
            return Err(Error::Dimension(format!(
                "video {} proposal {i}: score lengths differ",
                a.video_id
            )));
        }
        scores.push(
            pa.scores
                .iter()
                .zip(&pb.scores)
                .map(|(x, y)| wa * x + wb * y)
                .collect(),
        );
    }
    Ok(a.with_scores(scores))
}

/// [`combine_modalities`] over two whole files, matched by video id.
pub fn combine_files(
    a: &ProposalFile,
    b: &ProposalFile,
    weights: (f64, f64),
) -> Result<ProposalFile> {
    if a.videos.len() != b.videos.len() {
        return Err(Error::invalid("proposal files cover different videos"));
    }
    let videos = a
        .videos
        .iter()
        .map(|va| {
            let vb = b
                .videos
                .iter()
                .find(|v| v.video_id == va.video_id)
                .ok_or_else(|| Error::invalid(format!("video {} missing", va.video_id)))?;
            combine_modalities(va, vb, weights)
        })
        .collect::<Result<_>>()?;
    Ok(ProposalFile { videos })
}

fn detection_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.start_s.total_cmp(&b.start_s))
        .then(a.step.cmp(&b.step))
        .then(a.end_s.total_cmp(&b.end_s))
}

/// Greedy suppression of one class: keep the best remaining candidate and
/// drop anything overlapping a kept one by more than `threshold`.
fn suppress(mut candidates: Vec<Detection>, threshold: f64) -> Vec<Detection> {
    candidates.sort_by(detection_order);
    let mut kept: Vec<Detection> = Vec::new();
    for c in candidates {
        let iv = c.interval();
        if kept.iter().all(|k| k.interval().iou(&iv) <= threshold) {
            kept.push(c);
        }
    }
    kept
}

/// Expands every proposal into one candidate per step with a positive score
/// and runs class-wise NMS. Output is sorted by descending score.
pub fn nms(proposals: &ProposalSet, cfg: &NmsConfig) -> VideoDetections {
    let k = proposals.num_steps().unwrap_or(0);
    let mut per_class: Vec<Vec<Detection>> = vec![Vec::new(); k];
    for p in &proposals.proposals {
        for (step, &score) in p.scores.iter().enumerate() {
            if score > 0.0 {
                per_class[step].push(Detection {
                    step,
                    start_s: p.start_s,
                    end_s: p.end_s,
                    score,
                });
            }
        }
    }
    let mut detections: Vec<Detection> = per_class
        .into_iter()
        .flat_map(|c| suppress(c, cfg.iou_threshold))
        .collect();
    detections.sort_by(detection_order);
    VideoDetections {
        video_id: proposals.video_id.clone(),
        detections,
    }
}

/// Class-wise NMS of already-labeled detections; used to re-run suppression
/// on an existing detection set.
pub fn nms_detections(video: &VideoDetections, cfg: &NmsConfig) -> VideoDetections {
    let k = video
        .detections
        .iter()
        .map(|d| d.step + 1)
        .max()
        .unwrap_or(0);
    let mut per_class: Vec<Vec<Detection>> = vec![Vec::new(); k];
    for d in video.detections.iter().filter(|d| d.score > 0.0) {
        per_class[d.step].push(d.clone());
    }
    let mut detections: Vec<Detection> = per_class
        .into_iter()
        .flat_map(|c| suppress(c, cfg.iou_threshold))
        .collect();
    detections.sort_by(detection_order);
    VideoDetections {
        video_id: video.video_id.clone(),
        detections,
    }
}

pub fn nms_all(file: &ProposalFile, cfg: &NmsConfig) -> DetectionSet {
    DetectionSet {
        videos: file.videos.par_iter().map(|v| nms(v, cfg)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::Proposal;

    fn set(props: &[(f64, f64, &[f64])]) -> ProposalSet {
        ProposalSet {
            video_id: "v".into(),
            duration_s: 100.0,
            proposals: props
                .iter()
                .map(|(a, b, s)| Proposal::new(*a, *b, s.to_vec()))
                .collect(),
        }
    }

    fn kept(d: &VideoDetections) -> Vec<(usize, f64, f64, f64)> {
        d.detections
            .iter()
            .map(|d| (d.step, d.start_s, d.end_s, d.score))
            .collect()
    }

    #[test]
    fn same_class_overlap_suppressed() {
        let d = nms(
            &set(&[(0.0, 10.0, &[0.9]), (1.0, 10.0, &[0.8])]),
            &NmsConfig::default(),
        );
        assert_eq!(kept(&d), vec![(0, 0.0, 10.0, 0.9)]);
    }

    #[test]
    fn different_classes_independent() {
        let d = nms(
            &set(&[(0.0, 10.0, &[0.9, 0.0]), (1.0, 10.0, &[0.0, 0.8])]),
            &NmsConfig::default(),
        );
        assert_eq!(kept(&d), vec![(0, 0.0, 10.0, 0.9), (1, 1.0, 10.0, 0.8)]);
    }

    #[test]
    fn disjoint_survives() {
        let d = nms(
            &set(&[
                (0.0, 10.0, &[0.9]),
                (1.0, 10.0, &[0.8]),
                (20.0, 30.0, &[0.7]),
            ]),
            &NmsConfig::default(),
        );
        assert_eq!(kept(&d), vec![(0, 0.0, 10.0, 0.9), (0, 20.0, 30.0, 0.7)]);
    }

    #[test]
    fn zero_scores_produce_no_candidates() {
        let d = nms(
            &set(&[(0.0, 10.0, &[0.0, 0.0, 0.4])]),
            &NmsConfig::default(),
        );
        assert_eq!(kept(&d), vec![(2, 0.0, 10.0, 0.4)]);
    }

    #[test]
    fn ties_prefer_earlier_start() {
        let d = nms(
            &set(&[(2.0, 10.0, &[0.5]), (1.0, 10.0, &[0.5])]),
            &NmsConfig::default(),
        );
        assert_eq!(kept(&d), vec![(0, 1.0, 10.0, 0.5)]);
    }

    #[test]
    fn fusion_examples() {
        let a = set(&[(0.0, 1.0, &[0.4])]);
        let b = set(&[(0.0, 1.0, &[0.8])]);
        let c = combine_modalities(&a, &b, (0.5, 0.5)).unwrap();
        assert!((c.proposals[0].scores[0] - 0.6).abs() < 1e-15);
        assert_eq!(combine_modalities(&a, &b, (1.0, 0.0)).unwrap(), a);
        let shifted = set(&[(0.5, 1.0, &[0.8])]);
        assert!(combine_modalities(&a, &shifted, (0.5, 0.5)).is_err());
    }

    #[test]
    fn threshold_range() {
        assert!(NmsConfig::new(0.0).is_err());
        assert!(NmsConfig::new(1.0).is_ok());
        assert!(NmsConfig::new(1.2).is_err());
    }
}
