//! Shared fixtures for the benchmarks.

use idgap_core::synth::{generate, GapModel, KindSpec, MemorySink, SynthSpec};
use idgap_core::SyntheticManifest;

/// A corpus of about `n` comments and `n / 10` submissions with mixed gaps.
pub fn corpus(n: u64) -> (MemorySink, SyntheticManifest) {
    let mut spec = SynthSpec::new(
        1,
        KindSpec::new(1_000, 1_000 + n - 1, 10.0).with_gap(GapModel::Uniform { rate: 0.01 }).with_gap(GapModel::Bursty {
            rate: 0.01,
            mean_len: 20.0,
            max_len: 2_000,
        }),
        KindSpec::new(1, n / 10, 100.0).with_gap(GapModel::Uniform { rate: 0.02 }),
    );
    spec.n_subreddits = 100;
    spec.n_authors = 10_000;
    let mut sink = MemorySink::default();
    let manifest = generate(&spec, &mut sink).expect("fixture spec is valid");
    (sink, manifest)
}

/// Deterministic pseudo-random stream for inputs that need no statistics.
pub fn splitmix(seed: u64) -> impl Iterator<Item = u64> {
    let mut state = seed;
    std::iter::repeat_with(move || {
        state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    })
}
