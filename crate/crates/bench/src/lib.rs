//! Benchmark fixtures shared by the criterion targets.

use fibercurv::bundle::BundleMetric;
use fibercurv::families::{random_bundle, RandomParams};
use fibercurv::Chart;

/// Seeded random bundle metric on the unit cube `[0, 1]^n`.
pub fn random_fixture(n: usize, fiber_dim: usize, points: usize) -> BundleMetric {
    let chart = Chart::new(&vec![(0.0, 1.0); n], &vec![points; n]).expect("valid chart");
    random_bundle(42, fiber_dim, &chart, &RandomParams::default()).expect("valid fixture")
}
