//! Fixtures shared by the benchmarks.

use semeq::language::default_jitter;
use semeq::mismatch::atom_members;
use semeq::seeding;
use semeq::transport::{atom_cloud, PointCloud};
use semeq::{GridConfig, Language};

/// Uniform random points in the unit square with uneven masses.
pub fn random_cloud(seed: u64, n: usize) -> PointCloud {
    use rand::Rng;
    let mut rng = seeding::rng(seed, &[]);
    let pts = (0..n)
        .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
        .collect();
    let masses: Vec<f64> = (0..n).map(|_| 0.2 + rng.random::<f64>()).collect();
    PointCloud::from_masses(pts, &masses).expect("positive masses")
}

/// Two synthesized languages on the default grid.
pub fn language_pair(source_seed: u64, target_seed: u64) -> (Language, Language) {
    let g = GridConfig::default();
    (
        Language::synthesize(g, source_seed, default_jitter()).expect("valid seed"),
        Language::synthesize(g, target_seed, default_jitter()).expect("valid seed"),
    )
}

/// The noiseless symbols of one atom, as the codebook fit sees them.
pub fn atom(lang: &Language, atom: usize) -> PointCloud {
    let members = atom_members(lang);
    atom_cloud(lang, &members[atom], "bench", atom).expect("non-empty atom")
}
