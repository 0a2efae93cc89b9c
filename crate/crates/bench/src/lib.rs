//! Scenarios shared by the benchmarks.

use tokenpeg_core::genesis::SideVariant;
use tokenpeg_core::simnet::{presets, ScenarioConfig};

/// Named end-to-end scenarios, smallest first.
pub fn scenarios() -> Vec<(&'static str, ScenarioConfig)> {
    vec![
        ("happy_path", presets::happy_path(SideVariant::Gasless)),
        ("happy_path_native", presets::happy_path(SideVariant::NativeGas)),
        ("random_workload", presets::random_workload(1, SideVariant::Gasless)),
        ("lossy", presets::lossy(1)),
        ("reorg_immunity", presets::reorg_immunity(1)),
        ("desk_scale", presets::desk_scale(1)),
    ]
}
