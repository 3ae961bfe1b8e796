//! Shared fixtures for the benchmarks.

use chordgram::HmmParams;

pub const VOCAB: usize = 25;

/// Sequences drawn from a random 6-state HMM, with lengths cycling through 4..24.
pub fn corpus(count: usize, seed: u64) -> Vec<Vec<usize>> {
    let source = HmmParams::init_random(6, VOCAB, seed).expect("valid fixture");
    (0..count as u64).map(|i| source.sample_sequence(4 + (i % 20) as usize, seed ^ i)).collect()
}
