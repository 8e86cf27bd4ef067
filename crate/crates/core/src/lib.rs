//! Post-processing and evaluation for step localization in instructional videos.
//!
//! The crate takes detector proposals (temporal intervals with a per-step score
//! vector), refines their scores with two structural priors, and evaluates the
//! resulting detections:
//!
//! - [`taskconsistency`]: every step found in a video should belong to one task.
//!   Proposal scores are summed into a task vote and steps outside the winning
//!   task are attenuated.
//! - [`orderdependency`]: steps follow each other according to statistics learned
//!   from training annotations. Proposals are grouped into disjoint segments with
//!   a 1-D watershed, segment scores are propagated through a Markov transition
//!   matrix, and the score change is mapped back onto the proposals.
//! - [`postprocess`]: class-wise temporal NMS and modality score fusion.
//! - [`metrics`]: IoU, mAP/mAR at IoU thresholds, frame accuracy and the
//!   missing-step / order-consistency statistics of an annotation set.
//! - [`synth`]: seeded synthetic corpora and brute-force reference oracles.
//!
//! All file formats live in [`datamodel`].

pub mod datamodel;
pub mod error;
pub mod metrics;
pub mod orderdependency;
pub mod postprocess;
pub mod synth;
pub mod taskconsistency;

pub use datamodel::{
    AnnotatedSegment, AnnotationSet, Detection, DetectionSet, Interval, Lexicon, MembershipMatrix,
    Proposal, ProposalFile, ProposalSet, VideoAnnotation, VideoDetections,
};
pub use error::{Error, Result};
pub use metrics::{EvalConfig, MetricReport};
pub use orderdependency::{OdConfig, SegmentList, TimeGrid, TransitionModel};
pub use postprocess::NmsConfig;
pub use synth::SynthConfig;
pub use taskconsistency::{AggregateMode, TcConfig, TcResult};
