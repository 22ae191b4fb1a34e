//! Frequency masks for inhomogeneous neighborhoods, M-cones, cutoffs and microlocal norms.

mod analysis;
mod cone;
mod cutoff;
mod inclusion;
mod mask;

pub use analysis::{
    cutoff_membership, filter_membership, masked_fl_norm, mcl_elliptic, mcl_fl_norm, symbol_filter_membership,
    verify_mcl_continuity, FilterReport, MclContinuityReport, MclEllipticConfig, MclEllipticReport, MclEllipticStep,
    MclTerms, MclWeights, Sampler, Verdict, DIVERGENT_GROWTH, FINITE_GROWTH, MCL_RATIO_GROWTH,
};
pub use cone::{
    check_cone_equivalence, check_m_conic, m_cone, m_cone_distance, m_norm, m_scale, m_sphere_samples,
    ConeEquivalenceReport, ConeScheduleEntry, ConeUnion,
};
pub use cutoff::{cutoff_symbol, Cutoff, CutoffReport, SEMINORM_DRIFT};
pub use inclusion::{find_inclusion_eps, InclusionMode, InclusionReport, InclusionStep};
pub use mask::{bracket_neighborhood, euclid_neighborhood, in_xk, FrequencyMask, SetDescriptor};

/// Number of steps in every `eps'` search.
pub const SCHEDULE_LEN: i32 = 10;

/// `eps / 2^k` for `k = 1..=10`, largest first.
pub fn schedule(eps: f64) -> Vec<f64> {
    (1..=SCHEDULE_LEN).map(|k| eps / 2f64.powi(k)).collect()
}
