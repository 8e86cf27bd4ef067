use std::f64::consts::PI;

use crate::datamodel::{Interval, Proposal, ProposalSet};
use crate::error::{Error, Result};

/// Uniform discretization of `[0, T]` into `M` slots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    duration_s: f64,
    slots: usize,
}

impl TimeGrid {
    pub fn new(duration_s: f64, slots: usize) -> Result<Self> {
        if slots < 2 {
            return Err(Error::config(format!("slots must be >= 2, got {slots}")));
        }
        if !duration_s.is_finite() || duration_s <= 0.0 {
            return Err(Error::config(format!(
                "duration must be positive, got {duration_s}"
            )));
        }
        Ok(TimeGrid { duration_s, slots })
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn slot_width(&self) -> f64 {
        self.duration_s / self.slots as f64
    }

    pub fn center(&self, m: usize) -> f64 {
        (m as f64 + 0.5) * self.slot_width()
    }

    /// Start time of slot `m`; `slot_start(M)` is exactly `T`.
    pub fn slot_start(&self, m: usize) -> f64 {
        if m >= self.slots {
            self.duration_s
        } else {
            m as f64 * self.slot_width()
        }
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.slots).map(|m| self.center(m))
    }
}

/// Temporal profile used to spread a proposal's score over time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    /// Normal density centered on the proposal with `sigma = beta * len / 2`.
    Gaussian { beta: f64 },
    /// `|t - mu| / len` inside the proposal, zero outside. This profile is
    /// zero at the center and peaks at the edges.
    Triangle,
}

impl Default for Distribution {
    fn default() -> Self {
        Distribution::Gaussian { beta: 1.0 }
    }
}

impl Distribution {
    pub fn validate(&self) -> Result<()> {
        if let Distribution::Gaussian { beta } = self {
            if !beta.is_finite() || *beta <= 0.0 {
                return Err(Error::config(format!("beta must be > 0, got {beta}")));
            }
        }
        Ok(())
    }

    /// Spread of the proposal profile; also used for the variation regularizer.
    pub fn sigma(&self, interval: &Interval) -> f64 {
        match self {
            Distribution::Gaussian { beta } => beta * interval.len() / 2.0,
            Distribution::Triangle => interval.len() / 2.0,
        }
    }

    /// Weight applied to a unit score at time `t`.
    pub fn weight(&self, interval: &Interval, t: f64) -> f64 {
        let mu = interval.center();
        match self {
            Distribution::Gaussian { .. } => {
                let sigma = self.sigma(interval);
                let z = t - mu;
                (-(z * z) / (2.0 * sigma * sigma)).exp() / ((2.0 * PI).sqrt() * sigma)
            }
            Distribution::Triangle => {
                if t >= interval.start_s && t <= interval.end_s {
                    (t - mu).abs() / interval.len()
                } else {
                    0.0
                }
            }
        }
    }
}

/// Unit-peak Gaussian `exp(-(t - mu)^2 / (2 sigma^2))`.
pub(crate) fn unit_peak_gaussian(t: f64, mu: f64, sigma: f64) -> f64 {
    let z = t - mu;
    (-(z * z) / (2.0 * sigma * sigma)).exp()
}

/// Row-major `M x K` matrix of per-slot step values.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotMatrix {
    pub slots: usize,
    pub steps: usize,
    pub data: Vec<f64>,
}

impl SlotMatrix {
    pub fn zeros(slots: usize, steps: usize) -> Self {
        SlotMatrix {
            slots,
            steps,
            data: vec![0.0; slots * steps],
        }
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.data[m * self.steps..(m + 1) * self.steps]
    }

    pub fn row_mut(&mut self, m: usize) -> &mut [f64] {
        &mut self.data[m * self.steps..(m + 1) * self.steps]
    }

    pub fn get(&self, m: usize, k: usize) -> f64 {
        self.data[m * self.steps + k]
    }
}

/// Accumulated step curves `f` and actionness `a` of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSet {
    pub f: SlotMatrix,
    pub actionness: Vec<f64>,
}

impl CurveSet {
    /// Builds a curve set from `f`, deriving actionness as row sums.
    pub fn from_matrix(f: SlotMatrix) -> Self {
        let actionness = (0..f.slots).map(|m| f.row(m).iter().sum()).collect();
        CurveSet { f, actionness }
    }
}

/// Per-slot contribution of a single proposal: `weight(t_m) * scores`.
pub fn proposal_curve(p: &Proposal, grid: &TimeGrid, dist: &Distribution) -> Result<SlotMatrix> {
    let iv = p.interval();
    if iv.len().is_nan() || iv.len() <= 0.0 {
        return Err(Error::invalid(format!(
            "zero-length interval [{}, {}]",
            iv.start_s, iv.end_s
        )));
    }
    let mut out = SlotMatrix::zeros(grid.slots(), p.scores.len());
    for m in 0..grid.slots() {
        let w = dist.weight(&iv, grid.center(m));
        if w == 0.0 {
            continue;
        }
        for (o, s) in out.row_mut(m).iter_mut().zip(&p.scores) {
            *o = w * s;
        }
    }
    Ok(out)
}

/// Sums all proposal curves of a video.
pub fn accumulate(
    proposals: &ProposalSet,
    grid: &TimeGrid,
    dist: &Distribution,
) -> Result<CurveSet> {
    let k = proposals.num_steps().ok_or(Error::NoProposals)?;
    let mut f = SlotMatrix::zeros(grid.slots(), k);
    for p in &proposals.proposals {
        if p.scores.len() != k {
            return Err(Error::Dimension("proposal score lengths differ".into()));
        }
        let c = proposal_curve(p, grid, dist)?;
        for (acc, v) in f.data.iter_mut().zip(&c.data) {
            *acc += v;
        }
    }
    Ok(CurveSet::from_matrix(f))
}
