//! Shared fixtures for the criterion benches.

use numlab_core::synth::{generate, Benchmark, SynthConfig};

/// A reduced benchmark that keeps a single forward pass in the millisecond
/// range.
pub fn small_benchmark() -> Benchmark {
    generate(&SynthConfig {
        proteins: 4,
        ..SynthConfig::default()
    })
    .expect("synthetic benchmark")
}
