use super::curves::{proposal_curve, unit_peak_gaussian, CurveSet, Distribution, TimeGrid};
use super::watershed::SegmentList;
use crate::datamodel::ProposalSet;
use crate::error::{Error, Result};

/// Maps segment score changes back onto the proposals that produced them.
///
/// Inside segment `l` the step curve changes by the segment's relative change
/// `(new - old) / old`; each proposal receives its share of that change
/// weighted by its own curve and a unit-peak Gaussian centered on the
/// proposal. Steps whose old segment score is zero receive no change.
/// Refined scores are floored at zero.
pub fn map_variation(
    proposals: &ProposalSet,
    curves: &CurveSet,
    old: &SegmentList,
    new: &SegmentList,
    grid: &TimeGrid,
    dist: &Distribution,
) -> Result<ProposalSet> {
    if old.len() != new.len() {
        return Err(Error::Dimension(format!(
            "segment lists differ in length ({} vs {})",
            old.len(),
            new.len()
        )));
    }
    let k = curves.f.steps;
    if curves.f.slots != grid.slots() {
        return Err(Error::Dimension(
            "curve set and grid disagree on slots".into(),
        ));
    }

    // relative change per slot and step, zero outside segments
    let mut ratio = vec![0.0; grid.slots() * k];
    let mut any_change = false;
    for (l, (so, sn)) in old.segments.iter().zip(&new.segments).enumerate() {
        if so.slots != sn.slots || so.scores.len() != k || sn.scores.len() != k {
            return Err(Error::Dimension(format!(
                "segment {l} differs in structure"
            )));
        }
        if so.slots.end > grid.slots() {
            return Err(Error::Dimension(format!("segment {l} exceeds the grid")));
        }
        let rel: Vec<f64> = so
            .scores
            .iter()
            .zip(&sn.scores)
            .map(|(o, n)| if *o == 0.0 { 0.0 } else { (n - o) / o })
            .collect();
        any_change |= rel.iter().any(|r| *r != 0.0);
        for m in so.slots.clone() {
            for (kk, r) in rel.iter().enumerate() {
                if curves.f.get(m, kk) != 0.0 {
                    ratio[m * k + kk] = *r;
                }
            }
        }
    }
    if !any_change {
        return Ok(proposals.clone());
    }

    let w = grid.slot_width();
    let mut scores = Vec::with_capacity(proposals.proposals.len());
    for p in &proposals.proposals {
        let fn_curve = proposal_curve(p, grid, dist)?;
        let iv = p.interval();
        let (mu, sigma) = (iv.center(), dist.sigma(&iv));
        let mut delta = vec![0.0; k];
        for m in 0..grid.slots() {
            let phi = unit_peak_gaussian(grid.center(m), mu, sigma);
            for (kk, d) in delta.iter_mut().enumerate() {
                let r = ratio[m * k + kk];
                if r != 0.0 {
                    *d += r * fn_curve.get(m, kk) * phi * w;
                }
            }
        }
        scores.push(
            p.scores
                .iter()
                .zip(&delta)
                .map(|(s, d)| (s + d).max(0.0))
                .collect(),
        );
    }
    Ok(proposals.with_scores(scores))
}
