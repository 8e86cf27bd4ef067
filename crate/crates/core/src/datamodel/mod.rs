//! Shared domain types, their validation, and the JSON file formats.

mod json;
mod lexicon;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use json::{
    format_sig9, load_annotations, load_detections, load_lexicon, load_proposals, quantize,
    read_json, to_json_string, write_annotations, write_detections, write_json, write_lexicon,
    write_proposals,
};
pub use lexicon::{Domain, Lexicon, MembershipMatrix, Step, Task};

/// Builds the step-to-task membership matrix of `lexicon`.
pub fn build_membership(lexicon: &Lexicon) -> MembershipMatrix {
    MembershipMatrix::from_lexicon(lexicon)
}

/// Closed-open time interval in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub start_s: f64,
    pub end_s: f64,
}

impl Interval {
    pub fn new(start_s: f64, end_s: f64) -> Self {
        Interval { start_s, end_s }
    }

    pub fn len(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn is_empty(&self) -> bool {
        self.end_s <= self.start_s
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.start_s + self.end_s)
    }

    pub fn intersection(&self, other: &Interval) -> f64 {
        (self.end_s.min(other.end_s) - self.start_s.max(other.start_s)).max(0.0)
    }

    /// Temporal intersection over union; 0 for disjoint intervals.
    pub fn iou(&self, other: &Interval) -> f64 {
        let inter = self.intersection(other);
        if inter <= 0.0 {
            return 0.0;
        }
        let union = self.len() + other.len() - inter;
        (inter / union).min(1.0)
    }

    fn check(&self, what: &str, duration_s: Option<f64>) -> Result<()> {
        if !self.start_s.is_finite() || !self.end_s.is_finite() {
            return Err(Error::invalid(format!("{what}: non-finite interval")));
        }
        if self.start_s < 0.0 {
            return Err(Error::invalid(format!(
                "{what}: start_s {} is negative",
                self.start_s
            )));
        }
        if self.end_s <= self.start_s {
            return Err(Error::invalid(format!(
                "{what}: end_s {} must exceed start_s {}",
                self.end_s, self.start_s
            )));
        }
        if let Some(d) = duration_s {
            if self.end_s > d {
                return Err(Error::invalid(format!(
                    "{what}: interval [{}, {}] out of range [0, {d}]",
                    self.start_s, self.end_s
                )));
            }
        }
        Ok(())
    }
}

fn check_duration(what: &str, duration_s: f64) -> Result<()> {
    if !duration_s.is_finite() || duration_s <= 0.0 {
        return Err(Error::invalid(format!(
            "{what}: duration_s {duration_s} must be positive"
        )));
    }
    Ok(())
}

/// A detector candidate: interval plus one score per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Proposal {
    pub start_s: f64,
    pub end_s: f64,
    pub scores: Vec<f64>,
}

impl Proposal {
    pub fn new(start_s: f64, end_s: f64, scores: Vec<f64>) -> Self {
        Proposal {
            start_s,
            end_s,
            scores,
        }
    }

    pub fn interval(&self) -> Interval {
        Interval::new(self.start_s, self.end_s)
    }

    pub fn validate(&self, what: &str, k: Option<usize>, duration_s: Option<f64>) -> Result<()> {
        self.interval().check(what, duration_s)?;
        if let Some(k) = k {
            if self.scores.len() != k {
                return Err(Error::invalid(format!(
                    "{what}: scores length {} ≠ K ({k})",
                    self.scores.len()
                )));
            }
        }
        if let Some((i, s)) = self
            .scores
            .iter()
            .enumerate()
            .find(|(_, s)| !s.is_finite() || **s < 0.0)
        {
            return Err(Error::invalid(format!(
                "{what}: score[{i}] = {s} is negative or non-finite"
            )));
        }
        Ok(())
    }
}

/// All proposals of one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalSet {
    pub video_id: String,
    pub duration_s: f64,
    pub proposals: Vec<Proposal>,
}

impl ProposalSet {
    pub fn num_steps(&self) -> Option<usize> {
        self.proposals.first().map(|p| p.scores.len())
    }

    /// Validates every proposal. Without an explicit `k`, all score vectors
    /// must share the length of the first one.
    pub fn validate(&self, k: Option<usize>) -> Result<()> {
        check_duration(&format!("video {}", self.video_id), self.duration_s)?;
        let k = k.or(self.num_steps());
        for (i, p) in self.proposals.iter().enumerate() {
            p.validate(
                &format!("video {} proposal {i}", self.video_id),
                k,
                Some(self.duration_s),
            )?;
        }
        Ok(())
    }

    /// Same intervals, new scores.
    pub fn with_scores(&self, scores: Vec<Vec<f64>>) -> ProposalSet {
        debug_assert_eq!(scores.len(), self.proposals.len());
        ProposalSet {
            video_id: self.video_id.clone(),
            duration_s: self.duration_s,
            proposals: self
                .proposals
                .iter()
                .zip(scores)
                .map(|(p, s)| Proposal::new(p.start_s, p.end_s, s))
                .collect(),
        }
    }
}

/// Contents of a `proposals.json` file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalFile {
    pub videos: Vec<ProposalSet>,
}

impl ProposalFile {
    pub fn validate(&self, k: Option<usize>) -> Result<()> {
        let k = k.or_else(|| self.videos.iter().find_map(ProposalSet::num_steps));
        check_unique_ids(self.videos.iter().map(|v| v.video_id.as_str()))?;
        self.videos.iter().try_for_each(|v| v.validate(k))
    }
}

fn check_unique_ids<'a>(ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::invalid(format!("duplicate video_id {id}")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedSegment {
    pub step: usize,
    pub start_s: f64,
    pub end_s: f64,
}

impl AnnotatedSegment {
    pub fn interval(&self) -> Interval {
        Interval::new(self.start_s, self.end_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoAnnotation {
    pub video_id: String,
    pub task: usize,
    pub duration_s: f64,
    pub segments: Vec<AnnotatedSegment>,
}

impl VideoAnnotation {
    /// Step ids in temporal order.
    pub fn step_sequence(&self) -> Vec<usize> {
        self.segments.iter().map(|s| s.step).collect()
    }
}

/// Ground-truth step segments, the contents of `annotations.json`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationSet {
    pub videos: Vec<VideoAnnotation>,
}

impl AnnotationSet {
    pub fn validate(&self, lexicon: Option<&Lexicon>) -> Result<()> {
        check_unique_ids(self.videos.iter().map(|v| v.video_id.as_str()))?;
        for v in &self.videos {
            let what = format!("video {}", v.video_id);
            check_duration(&what, v.duration_s)?;
            if let Some(lex) = lexicon {
                if v.task >= lex.num_tasks() {
                    return Err(Error::invalid(format!("{what}: unknown task {}", v.task)));
                }
            }
            let mut prev_start = f64::NEG_INFINITY;
            for (i, seg) in v.segments.iter().enumerate() {
                let what = format!("{what} segment {i}");
                seg.interval().check(&what, Some(v.duration_s))?;
                if seg.start_s < prev_start {
                    return Err(Error::invalid(format!(
                        "{what}: segments must be in nondecreasing start order"
                    )));
                }
                prev_start = seg.start_s;
                if let Some(lex) = lexicon {
                    if seg.step >= lex.num_steps() {
                        return Err(Error::invalid(format!("{what}: unknown step {}", seg.step)));
                    }
                    if lex.task_of(seg.step) != v.task {
                        return Err(Error::invalid(format!(
                            "{what}: step {} does not belong to task {}",
                            seg.step, v.task
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, video_id: &str) -> Option<&VideoAnnotation> {
        self.videos.iter().find(|v| v.video_id == video_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detection {
    pub step: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub score: f64,
}

impl Detection {
    pub fn interval(&self) -> Interval {
        Interval::new(self.start_s, self.end_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoDetections {
    pub video_id: String,
    pub detections: Vec<Detection>,
}

/// Post-NMS labeled intervals, the contents of `detections.json`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionSet {
    pub videos: Vec<VideoDetections>,
}

impl DetectionSet {
    pub fn validate(&self, k: Option<usize>) -> Result<()> {
        check_unique_ids(self.videos.iter().map(|v| v.video_id.as_str()))?;
        for v in &self.videos {
            for (i, d) in v.detections.iter().enumerate() {
                let what = format!("video {} detection {i}", v.video_id);
                d.interval().check(&what, None)?;
                if !d.score.is_finite() {
                    return Err(Error::invalid(format!("{what}: non-finite score")));
                }
                if let Some(k) = k {
                    if d.step >= k {
                        return Err(Error::invalid(format!("{what}: unknown step {}", d.step)));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(proposals: Vec<Proposal>) -> ProposalSet {
        ProposalSet {
            video_id: "v".into(),
            duration_s: 10.0,
            proposals,
        }
    }

    #[test]
    fn short_score_vector_is_rejected() {
        let s = set(vec![Proposal::new(0.0, 1.0, vec![0.1, 0.2, 0.3])]);
        let err = s.validate(Some(4)).unwrap_err();
        assert!(err.to_string().contains("scores length 3 ≠ K (4)"), "{err}");
    }

    #[test]
    fn degenerate_interval_is_rejected() {
        for (a, b) in [(2.0, 2.0), (3.0, 1.0)] {
            let err = set(vec![Proposal::new(a, b, vec![0.5])])
                .validate(None)
                .unwrap_err();
            assert!(err.to_string().contains("must exceed"), "{err}");
        }
    }

    #[test]
    fn out_of_range_and_negative_scores_are_rejected() {
        let err = set(vec![Proposal::new(5.0, 11.0, vec![0.5])])
            .validate(None)
            .unwrap_err();
        assert!(err.to_string().contains("out of range"), "{err}");
        let err = set(vec![Proposal::new(1.0, 2.0, vec![-0.1])])
            .validate(None)
            .unwrap_err();
        assert!(err.to_string().contains("negative"), "{err}");
    }

    #[test]
    fn iou_examples() {
        let g = Interval::new(0.0, 10.0);
        assert!((g.iou(&Interval::new(5.0, 15.0)) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(g.iou(&g), 1.0);
        assert_eq!(g.iou(&Interval::new(10.0, 12.0)), 0.0);
    }

    #[test]
    fn annotation_order_and_membership_checked() {
        let lex = Lexicon::new(
            vec![Domain {
                id: 0,
                name: "d".into(),
            }],
            vec![
                Task {
                    id: 0,
                    name: "a".into(),
                    domain: 0,
                },
                Task {
                    id: 1,
                    name: "b".into(),
                    domain: 0,
                },
            ],
            vec![
                Step {
                    id: 0,
                    label: "x".into(),
                    task: 0,
                },
                Step {
                    id: 1,
                    label: "y".into(),
                    task: 1,
                },
            ],
        )
        .unwrap();
        let mut ann = AnnotationSet {
            videos: vec![VideoAnnotation {
                video_id: "v".into(),
                task: 0,
                duration_s: 10.0,
                segments: vec![
                    AnnotatedSegment {
                        step: 0,
                        start_s: 4.0,
                        end_s: 5.0,
                    },
                    AnnotatedSegment {
                        step: 0,
                        start_s: 1.0,
                        end_s: 2.0,
                    },
                ],
            }],
        };
        assert!(ann
            .validate(Some(&lex))
            .unwrap_err()
            .to_string()
            .contains("nondecreasing"));
        ann.videos[0].segments.swap(0, 1);
        ann.validate(Some(&lex)).unwrap();
        ann.videos[0].segments[1].step = 1;
        assert!(ann
            .validate(Some(&lex))
            .unwrap_err()
            .to_string()
            .contains("does not belong"));
    }
}
