#![allow(dead_code, clippy::needless_range_loop)]

pub mod checks;
pub mod oracles;

use std::path::PathBuf;
use std::sync::OnceLock;

use ictrack_core::harness::{synthesize, DesignCache, Designs, ExperimentConfig};
use ictrack_core::trajectories::ReferenceTrajectory;

/// Designs are shared by all test binaries through this directory.
pub fn cache_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("ictrack-designs")
}

/// Default figure-eight experiment with the shared cache.
pub fn lemniscate_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::with_trajectory(ReferenceTrajectory::lemniscate(1.0, 0.5, 0.6));
    cfg.output.cache_dir = Some(cache_dir());
    cfg
}

pub fn fixture() -> &'static (ExperimentConfig, Designs) {
    static CELL: OnceLock<(ExperimentConfig, Designs)> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = lemniscate_config();
        let designs = synthesize(&cfg, Some(&DesignCache::new(cache_dir()))).expect("designs");
        (cfg, designs)
    })
}
