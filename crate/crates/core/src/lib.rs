//! Numerical verification toolkit for local identifiability of l1 sparse
//! coding.
//!
//! The crate generates signals from a probabilistic k-sparse model, evaluates
//! the penalized sparse-coding objective and its closed-form sign-restricted
//! surrogate, computes coherence/RIP/frame quantities of dictionaries, and
//! exposes every constant and condition needed to check the local-minimum,
//! exact-recovery, sample-complexity, and outlier-robustness guarantees at
//! desk scale.

pub mod analysis;
pub mod dictionary;
pub mod error;
pub mod manifold;
pub mod model;
pub mod phi;
pub mod rng;
pub mod solver;
pub(crate) mod support;
pub mod theorem;

pub use analysis::{
    coherence_transfer_bound, cumulative_coherence, plain_coherence, rip_constants,
    spectral_profile, DictionaryProfile, RipMode,
};
pub use dictionary::Dictionary;
pub use error::{Error, Result};
pub use manifold::{decompose, reconstruct, sample_sphere, SphereDecomposition};
pub use model::{
    draw_coefficients, draw_support, generate_batch, inject_outliers, CoefficientLaw,
    CoefficientModel, NoiseSpec, SignalBatch,
};
pub use phi::{
    delta_phi_terms, deviation_constants, expectation_traces, expected_delta_phi,
    lower_bound_fixed_pair, uniform_lower_bound, DeltaPhiTerms, DeviationConstants,
    ExpectationTraces, FixedPairBound, TraceMode, UniformBound,
};
pub use solver::{
    check_sign_recovery, exact_recovery_check, f_value, lasso_solve, lasso_solve_detailed,
    objective_f, objective_f_certified, recovery_threshold_check, restricted_minimizer,
    BatchObjective, ExactRecoveryCheck, LassoOptions, LassoSolution, RecoveryCertificate,
    RestrictedSolution,
};
pub use theorem::{
    asymptotic_report, finite_sample_n, outlier_thresholds, ConditionRow, OutlierThresholds,
    TheoremReport,
};
