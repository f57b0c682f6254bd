//! Fixtures shared by the benchmarks.

use hhepi::fitting::TargetData;
use hhepi::ids::{ids_final_size, IdsSolveOptions};
use hhepi::mt::mt_generate;
use hhepi::{HouseholdSizeDistribution, IdsParams, MtGeneration};

/// Asymptotic data of both reference parameter sets, MT first.
pub fn reference_targets(dist: &HouseholdSizeDistribution) -> (TargetData, TargetData) {
    let (qm, _) = mt_generate(&MtGeneration::reference(), dist).expect("reference MT data");
    let (qi, _) = ids_final_size(&IdsParams::reference(), dist, &IdsSolveOptions::default()).expect("reference IDS data");
    (
        TargetData::asymptotic(qm, dist.clone()).expect("normalized"),
        TargetData::asymptotic(qi, dist.clone()).expect("normalized"),
    )
}
