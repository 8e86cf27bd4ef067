//! Task-consistency refinement.
//!
//! Bottom-up: proposal scores are summed into a video-level step score, which
//! is mapped onto tasks through the membership matrix. The highest-scoring
//! task wins. Top-down: every step outside the winning task is multiplied by
//! the attenuation coefficient `gamma`; steps inside it are left untouched.

use rayon::prelude::*;

use crate::datamodel::{Lexicon, MembershipMatrix, ProposalFile, ProposalSet};
use crate::error::{Error, Result};

/// `e^-2`, the default attenuation coefficient.
pub const DEFAULT_GAMMA: f64 = 0.1353352832366127;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AggregateMode {
    /// Task score is the sum of its steps' scores.
    #[default]
    Sum,
    /// Task score is the mean of its steps' scores.
    Average,
}

impl std::str::FromStr for AggregateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(AggregateMode::Sum),
            "average" | "avg" => Ok(AggregateMode::Average),
            other => Err(Error::config(format!(
                "aggregate mode must be sum or average, got {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TcConfig {
    pub gamma: f64,
    pub aggregate: AggregateMode,
}

impl Default for TcConfig {
    fn default() -> Self {
        TcConfig {
            gamma: DEFAULT_GAMMA,
            aggregate: AggregateMode::Sum,
        }
    }
}

impl TcConfig {
    /// `gamma` must lie in `[0, 1]`; zero gives hard masking.
    pub fn new(gamma: f64, aggregate: AggregateMode) -> Result<Self> {
        let cfg = TcConfig { gamma, aggregate };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config(format!(
                "gamma must be in [0, 1], got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TcResult {
    pub predicted_task: usize,
    pub video_score: Vec<f64>,
    pub task_scores: Vec<f64>,
    pub refined: ProposalSet,
}

/// Elementwise sum of all proposal score vectors.
pub fn aggregate_video_score(proposals: &ProposalSet) -> Result<Vec<f64>> {
    let first = proposals.proposals.first().ok_or(Error::NoProposals)?;
    let mut total = vec![0.0; first.scores.len()];
    for p in &proposals.proposals {
        if p.scores.len() != total.len() {
            return Err(Error::Dimension(format!(
                "proposal score lengths differ ({} vs {})",
                p.scores.len(),
                total.len()
            )));
        }
        for (t, s) in total.iter_mut().zip(&p.scores) {
            *t += s;
        }
    }
    Ok(total)
}

/// `s_t = s_v W`, optionally divided by each task's step count.
pub fn task_score(video_score: &[f64], w: &MembershipMatrix, mode: AggregateMode) -> Vec<f64> {
    assert_eq!(video_score.len(), w.num_steps(), "video score length ≠ K");
    let mut scores = vec![0.0; w.num_tasks()];
    for (i, s) in video_score.iter().enumerate() {
        for (j, t) in scores.iter_mut().enumerate() {
            *t += s * w.get(i, j);
        }
    }
    if mode == AggregateMode::Average {
        for (j, t) in scores.iter_mut().enumerate() {
            *t /= w.task_size(j) as f64;
        }
    }
    scores
}

/// Index of the largest entry; ties go to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Per-step multiplier: 1 for steps of `task`, `gamma` elsewhere.
pub fn refine_mask(task: usize, w: &MembershipMatrix, gamma: f64) -> Result<Vec<f64>> {
    if task >= w.num_tasks() {
        return Err(Error::invalid(format!("unknown task id {task}")));
    }
    Ok(w.column(task)
        .into_iter()
        .map(|v| v + gamma * (1.0 - v))
        .collect())
}

pub fn apply_tc(proposals: &ProposalSet, lexicon: &Lexicon, config: &TcConfig) -> Result<TcResult> {
    config.validate()?;
    let w = lexicon.membership();
    let video_score = aggregate_video_score(proposals)?;
    if video_score.len() != w.num_steps() {
        return Err(Error::Dimension(format!(
            "scores length {} ≠ K ({})",
            video_score.len(),
            w.num_steps()
        )));
    }
    let task_scores = task_score(&video_score, &w, config.aggregate);
    let predicted_task = argmax(&task_scores);
    let mask = refine_mask(predicted_task, &w, config.gamma)?;

    let refined = proposals.with_scores(
        proposals
            .proposals
            .iter()
            .map(|p| p.scores.iter().zip(&mask).map(|(s, m)| s * m).collect())
            .collect(),
    );
    Ok(TcResult {
        predicted_task,
        video_score,
        task_scores,
        refined,
    })
}

/// Applies [`apply_tc`] to every video. Results keep the input video order.
pub fn apply_tc_all(
    file: &ProposalFile,
    lexicon: &Lexicon,
    config: &TcConfig,
) -> Result<Vec<TcResult>> {
    file.videos
        .par_iter()
        .map(|v| {
            apply_tc(v, lexicon, config)
                .map_err(|e| Error::invalid(format!("video {}: {e}", v.video_id)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{Domain, Proposal, Step, Task};

    fn two_task_lexicon() -> Lexicon {
        Lexicon::new(
            vec![Domain {
                id: 0,
                name: "d".into(),
            }],
            vec![
                Task {
                    id: 0,
                    name: "A".into(),
                    domain: 0,
                },
                Task {
                    id: 1,
                    name: "B".into(),
                    domain: 0,
                },
            ],
            (0..4)
                .map(|id| Step {
                    id,
                    label: format!("s{id}"),
                    task: id / 2,
                })
                .collect(),
        )
        .unwrap()
    }

    fn video(scores: &[&[f64]]) -> ProposalSet {
        ProposalSet {
            video_id: "v".into(),
            duration_s: 100.0,
            proposals: scores
                .iter()
                .enumerate()
                .map(|(i, s)| Proposal::new(i as f64, i as f64 + 5.0, s.to_vec()))
                .collect(),
        }
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(
            aggregate_video_score(&video(&[&[0.9, 0.1]])).unwrap(),
            vec![0.9, 0.1]
        );
        let two = video(&[&[0.9, 0.1, 0.3, 0.0], &[0.2, 0.8, 0.1, 0.1]]);
        let sv = aggregate_video_score(&two).unwrap();
        for (a, b) in sv.iter().zip([1.1, 0.9, 0.4, 0.1]) {
            assert!((a - b).abs() < 1e-15);
        }
        let swapped = video(&[&[0.2, 0.8, 0.1, 0.1], &[0.9, 0.1, 0.3, 0.0]]);
        assert_eq!(aggregate_video_score(&swapped).unwrap(), sv);
        assert!(matches!(
            aggregate_video_score(&video(&[])),
            Err(Error::NoProposals)
        ));
    }

    #[test]
    fn task_score_sum_and_average() {
        let w = two_task_lexicon().membership();
        let sv = [1.1, 0.9, 0.4, 0.1];
        let sum = task_score(&sv, &w, AggregateMode::Sum);
        assert!((sum[0] - 2.0).abs() < 1e-15 && (sum[1] - 0.5).abs() < 1e-15);
        let avg = task_score(&sv, &w, AggregateMode::Average);
        assert!((avg[0] - 1.0).abs() < 1e-15 && (avg[1] - 0.25).abs() < 1e-15);

        let single = Lexicon::new(
            vec![Domain {
                id: 0,
                name: "d".into(),
            }],
            vec![Task {
                id: 0,
                name: "A".into(),
                domain: 0,
            }],
            (0..4)
                .map(|id| Step {
                    id,
                    label: String::new(),
                    task: 0,
                })
                .collect(),
        )
        .unwrap();
        let st = task_score(&sv, &single.membership(), AggregateMode::Sum);
        assert_eq!(st, vec![sv.iter().sum::<f64>()]);
    }

    #[test]
    fn mask_examples() {
        let w = two_task_lexicon().membership();
        let gamma = (-2.0f64).exp();
        assert_eq!(gamma, DEFAULT_GAMMA);
        let m = refine_mask(0, &w, gamma).unwrap();
        assert_eq!(m[..2], [1.0, 1.0]);
        assert!((m[2] - 0.135335).abs() < 1e-6 && m[2] == m[3]);
        assert_eq!(refine_mask(1, &w, 1.0).unwrap(), vec![1.0; 4]);
        assert!(refine_mask(2, &w, gamma).is_err());
    }

    #[test]
    fn two_task_refinement() {
        let lex = two_task_lexicon();
        let v = video(&[&[0.9, 0.1, 0.3, 0.0], &[0.2, 0.8, 0.1, 0.1]]);
        let r = apply_tc(&v, &lex, &TcConfig::default()).unwrap();
        assert_eq!(r.predicted_task, 0);
        let p1 = &r.refined.proposals[0].scores;
        assert_eq!(p1[..2], [0.9, 0.1]);
        assert!((p1[2] - 0.040601).abs() < 5e-7, "{}", p1[2]);
        assert_eq!(p1[3], 0.0);
        assert_eq!(r.refined.proposals[0].start_s, 0.0);
    }

    #[test]
    fn support_inside_one_task_is_untouched() {
        let lex = two_task_lexicon();
        let v = video(&[&[0.0, 0.0, 0.3, 0.7], &[0.0, 0.0, 0.5, 0.1]]);
        let r = apply_tc(&v, &lex, &TcConfig::default()).unwrap();
        assert_eq!(r.predicted_task, 1);
        assert_eq!(r.refined, v);
    }

    #[test]
    fn ties_go_to_lowest_task() {
        let lex = two_task_lexicon();
        let v = video(&[&[0.5, 0.0, 0.0, 0.5]]);
        assert_eq!(
            apply_tc(&v, &lex, &TcConfig::default())
                .unwrap()
                .predicted_task,
            0
        );
    }

    #[test]
    fn gamma_out_of_range_rejected() {
        assert!(TcConfig::new(1.5, AggregateMode::Sum).is_err());
        assert!(TcConfig::new(-0.1, AggregateMode::Sum).is_err());
        assert!(TcConfig::new(0.0, AggregateMode::Sum).is_ok());
    }
}
