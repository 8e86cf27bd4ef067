use super::transition::TransitionModel;
use super::watershed::SegmentList;
use crate::error::{Error, Result};

/// How the observed segment score `s1` and the ordering score `s2` are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fusion {
    /// `l1 * s1 + l2 * s2`
    #[default]
    WeightedSum,
    /// `sqrt(l1 * s1^2 + l2 * s2^2)`
    Rms,
    /// `s1^l1 * s2^l2`
    Geometric,
    /// `max(s1, s2)`
    MaxPool,
}

impl Fusion {
    pub fn combine(self, l1: f64, l2: f64, s1: f64, s2: f64) -> f64 {
        match self {
            Fusion::WeightedSum => l1 * s1 + l2 * s2,
            Fusion::Rms => (l1 * s1 * s1 + l2 * s2 * s2).sqrt(),
            Fusion::Geometric => s1.powf(l1) * s2.powf(l2),
            Fusion::MaxPool => s1.max(s2),
        }
    }
}

impl std::str::FromStr for Fusion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted" | "weighted_sum" => Ok(Fusion::WeightedSum),
            "rms" => Ok(Fusion::Rms),
            "geometric" => Ok(Fusion::Geometric),
            "max" | "max_pool" => Ok(Fusion::MaxPool),
            other => Err(Error::config(format!(
                "fusion must be weighted, rms, geometric or max, got {other}"
            ))),
        }
    }
}

pub(crate) fn check_lambdas(lambda1: f64, lambda2: f64) -> Result<()> {
    if !(lambda1 >= 0.0 && lambda2 >= 0.0) {
        return Err(Error::config("lambda1 and lambda2 must be >= 0"));
    }
    if (lambda1 + lambda2 - 1.0).abs() > 1e-9 {
        return Err(Error::config("lambda1+lambda2 must equal 1"));
    }
    Ok(())
}

/// Re-scores segments with the transition prior.
///
/// The ordering score of the first segment is the first-step prior `eta`;
/// each later segment receives the refined score of its predecessor pushed
/// through one transition step. Intervals are unchanged.
pub fn refine_segments(
    segments: &SegmentList,
    model: &TransitionModel,
    lambda1: f64,
    lambda2: f64,
    fusion: Fusion,
) -> Result<SegmentList> {
    check_lambdas(lambda1, lambda2)?;
    let k = model.num_steps();
    let mut refined: Vec<Vec<f64>> = Vec::with_capacity(segments.len());
    for (l, seg) in segments.segments.iter().enumerate() {
        if seg.scores.len() != k {
            return Err(Error::Dimension(format!(
                "segment {l} has {} scores, transition model has K={k}",
                seg.scores.len()
            )));
        }
        let prior = match refined.last() {
            None => model.eta().to_vec(),
            Some(prev) => model.propagate(prev),
        };
        let new = seg
            .scores
            .iter()
            .zip(&prior)
            .map(|(&s1, &s2)| fusion.combine(lambda1, lambda2, s1, s2))
            .collect();
        refined.push(new);
    }
    Ok(segments.with_scores(refined))
}
