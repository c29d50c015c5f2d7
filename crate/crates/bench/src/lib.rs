//! Shared fixtures for the benchmarks in `benches/`.

use fntree::data::{fit_normalization, generate_synthetic};
use fntree::gp::{random_tree, GpConfig};
use fntree::{Dataset, FntModel, SynthConfig};

/// The default synthetic dataset with min-max scaled inputs.
pub fn scaled_synthetic() -> Dataset {
    let data = generate_synthetic(&SynthConfig::default()).expect("default config is valid");
    let norm = fit_normalization(data.rows()).expect("non-empty");
    norm.apply_dataset(&data).expect("same arity")
}

/// A random tree of at least `min_size` nodes over four inputs.
pub fn tree_of_size(min_size: usize, seed: u64) -> FntModel {
    let cfg = GpConfig::default();
    let mut rng = fntree::seed::rng(seed, &[]);
    loop {
        let m = random_tree(&cfg, 4, &mut rng).expect("valid config");
        if m.complexity() >= min_size {
            return m;
        }
    }
}
