//! Ordering-dependency refinement.
//!
//! Three stages per video:
//!
//! 1. **Grouping.** Each proposal spreads its score vector over a discrete
//!    time grid; the summed step curves give an actionness signal, which a
//!    descending-threshold watershed splits into disjoint segments. Segment
//!    scores are the integrals of the step curves over each segment.
//! 2. **Ordering refinement.** Segment scores are fused with a Markov prior:
//!    the first segment with the first-step distribution, every later one with
//!    its predecessor's refined score pushed through the transition matrix.
//! 3. **Mapping variation.** The per-segment change is distributed back onto
//!    the overlapping proposals in proportion to their share of the curve.

mod curves;
mod refine;
mod transition;
mod variation;
mod watershed;

use rayon::prelude::*;

pub use curves::{accumulate, proposal_curve, CurveSet, Distribution, SlotMatrix, TimeGrid};
pub use refine::{refine_segments, Fusion};
pub use transition::{build_transition, TransitionModel};
pub use variation::map_variation;
pub use watershed::{watershed_group, Criterion, Segment, SegmentList, WatershedConfig};

use crate::datamodel::{ProposalFile, ProposalSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub distribution: Distribution,
    pub slots: usize,
    pub watershed: WatershedConfig,
    pub fusion: Fusion,
}

impl Default for OdConfig {
    /// Ordering score only (`lambda1 = 0`), Gaussian profile with `beta = 1`,
    /// 100 slots, average-gap stop at 6 slots, weighted-sum fusion.
    fn default() -> Self {
        OdConfig {
            lambda1: 0.0,
            lambda2: 1.0,
            distribution: Distribution::Gaussian { beta: 1.0 },
            slots: 100,
            watershed: WatershedConfig::default(),
            fusion: Fusion::WeightedSum,
        }
    }
}

impl OdConfig {
    /// Weights that favor the observed score, suited to datasets where
    /// appearance is more reliable than ordering.
    pub fn appearance_weighted() -> Self {
        OdConfig {
            lambda1: 0.8,
            lambda2: 0.2,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        refine::check_lambdas(self.lambda1, self.lambda2)?;
        self.distribution.validate()?;
        self.watershed.validate()?;
        if self.slots < 2 {
            return Err(Error::config(format!(
                "slots must be >= 2, got {}",
                self.slots
            )));
        }
        Ok(())
    }
}

/// Intermediate products of one [`apply_od`] run.
#[derive(Debug, Clone, PartialEq)]
pub struct OdTrace {
    pub curves: CurveSet,
    pub segments: SegmentList,
    pub refined_segments: SegmentList,
    pub output: ProposalSet,
}

pub fn apply_od_traced(
    proposals: &ProposalSet,
    model: &TransitionModel,
    cfg: &OdConfig,
) -> Result<OdTrace> {
    cfg.validate()?;
    let grid = TimeGrid::new(proposals.duration_s, cfg.slots)?;
    let curves = accumulate(proposals, &grid, &cfg.distribution)?;
    if curves.f.steps != model.num_steps() {
        return Err(Error::Dimension(format!(
            "scores length {} ≠ K ({}) of the transition model",
            curves.f.steps,
            model.num_steps()
        )));
    }
    let segments = watershed_group(&curves, &grid, &cfg.watershed)?;
    let refined_segments = refine_segments(&segments, model, cfg.lambda1, cfg.lambda2, cfg.fusion)?;
    let output = map_variation(
        proposals,
        &curves,
        &segments,
        &refined_segments,
        &grid,
        &cfg.distribution,
    )?;
    Ok(OdTrace {
        curves,
        segments,
        refined_segments,
        output,
    })
}

/// Group, refine and map back: returns proposals with the same intervals
/// and ordering-refined scores.
pub fn apply_od(
    proposals: &ProposalSet,
    model: &TransitionModel,
    cfg: &OdConfig,
) -> Result<ProposalSet> {
    apply_od_traced(proposals, model, cfg).map(|t| t.output)
}

/// Applies [`apply_od`] to every video, keeping input order.
pub fn apply_od_all(
    file: &ProposalFile,
    model: &TransitionModel,
    cfg: &OdConfig,
) -> Result<ProposalFile> {
    let videos = file
        .videos
        .par_iter()
        .map(|v| {
            apply_od(v, model, cfg)
                .map_err(|e| Error::invalid(format!("video {}: {e}", v.video_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProposalFile { videos })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::Proposal;

    fn chain_model(k: usize) -> TransitionModel {
        let mut omega = vec![0; k * k];
        for i in 0..k - 1 {
            omega[i * k + i + 1] = 5;
        }
        let mut eta = vec![0.0; k];
        eta[0] = 1.0;
        TransitionModel::from_parts(k, omega, eta).unwrap()
    }

    fn video() -> ProposalSet {
        ProposalSet {
            video_id: "v".into(),
            duration_s: 100.0,
            proposals: vec![
                Proposal::new(5.0, 25.0, vec![0.7, 0.2, 0.1]),
                Proposal::new(8.0, 22.0, vec![0.6, 0.3, 0.1]),
                Proposal::new(40.0, 60.0, vec![0.5, 0.4, 0.1]),
                Proposal::new(75.0, 95.0, vec![0.1, 0.2, 0.7]),
            ],
        }
    }

    #[test]
    fn observed_weight_one_is_identity() {
        let cfg = OdConfig {
            lambda1: 1.0,
            lambda2: 0.0,
            ..Default::default()
        };
        let v = video();
        assert_eq!(apply_od(&v, &chain_model(3), &cfg).unwrap(), v);
    }

    #[test]
    fn intervals_preserved() {
        let v = video();
        let out = apply_od(&v, &chain_model(3), &OdConfig::default()).unwrap();
        assert_eq!(out.proposals.len(), v.proposals.len());
        for (a, b) in out.proposals.iter().zip(&v.proposals) {
            assert_eq!((a.start_s, a.end_s), (b.start_s, b.end_s));
            assert!(a.scores.iter().all(|s| *s >= 0.0 && s.is_finite()));
        }
    }

    #[test]
    fn dominant_chain_wins_each_segment() {
        // the middle proposal favors step 0 but sits second in a 0 -> 1 -> 2 chain
        let v = video();
        let trace = apply_od_traced(&v, &chain_model(3), &OdConfig::default()).unwrap();
        assert_eq!(trace.segments.len(), 3);
        let top = |s: &[f64]| crate::taskconsistency::argmax(s);
        let refined_top: Vec<usize> = trace
            .refined_segments
            .segments
            .iter()
            .map(|s| top(&s.scores))
            .collect();
        assert_eq!(refined_top, vec![0, 1, 2]);
        assert_eq!(top(&trace.output.proposals[2].scores), 1);
        assert_eq!(top(&v.proposals[2].scores), 0);
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = OdConfig {
            lambda1: 0.7,
            lambda2: 0.2,
            ..Default::default()
        };
        assert!(apply_od(&video(), &chain_model(3), &cfg).is_err());
        let cfg = OdConfig {
            distribution: Distribution::Gaussian { beta: 0.0 },
            ..Default::default()
        };
        assert!(apply_od(&video(), &chain_model(3), &cfg).is_err());
    }
}
