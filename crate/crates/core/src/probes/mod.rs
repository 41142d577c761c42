//! Empirical studies: growth of the CJ form in n, the Schur/SI/annular norm
//! suite, Carleson norms, the Bianchini seminorm and the mixing identity.

mod growth;
mod mixing;
mod schur;

pub use growth::{
    cj_box_kernel, growth_probe, random_bump_field, ExponentRule, GrowthProbeConfig, GrowthRow, GrowthTable,
};
pub use mixing::{
    bianchini_seminorm, bianchini_seminorm_with, bressan_trilinear, mixing_identity_check, BianchiniConfig,
    FlowSpec, MixingConfig, MixingResult, SetFn, TorusField, VelocityFn, MIXING_GAP_FLOOR,
};
pub use schur::{
    builtin_bikernels, carleson_norm, schur_suite, schur_suite_with, si_ann_suite, si_ann_suite_with, BiFn,
    BiKernel, CarlesonConfig, SchurConfig,
};

#[cfg(test)]
mod tests;
