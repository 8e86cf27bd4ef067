//! Fixtures shared by the benchmarks.

use steploc::orderdependency::{build_transition, TransitionModel};
use steploc::synth::{generate_corpus, Corpus};
use steploc::SynthConfig;

/// A mid-sized corpus: 8 tasks of 6 steps, `n_videos` per split.
pub fn corpus(n_videos: usize) -> Corpus {
    generate_corpus(&SynthConfig {
        seed: 42,
        n_tasks: 8,
        steps_per_task: 6,
        n_videos,
        proposals_per_segment: 8,
        ..Default::default()
    })
    .expect("benchmark corpus")
}

pub fn transitions(c: &Corpus) -> TransitionModel {
    build_transition(&c.train, c.lexicon.num_steps()).expect("transition model")
}
