//! Behavioral tests of the experiment drivers on small instances.

use sparsid_cli::config::ExperimentConfig;
use sparsid_cli::experiments::{
    run_delta_f, run_local_min_search, run_outlier_sweep, run_report,
    run_sample_complexity_sweep,
};

fn cfg(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_str_content(text).expect("valid config")
}

#[test]
fn delta_f_vanishes_in_the_zero_radius_limit() {
    let cfg = cfg("
dict = orthonormal
dict.m = 12
model.k = 2
lambda_bar = 0.05
radii = 1e-9
n = 64
n_dirs = 4
seed = 5
");
    let rows = run_delta_f(&cfg).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].min_delta_f.abs() < 1e-10);
    assert!(rows[0].mean_delta_f.abs() < 1e-10);
}

#[test]
fn delta_f_positive_on_admissible_instance() {
    let cfg = cfg("
dict = orthonormal
dict.m = 16
model.k = 2
model.dist = fixed_profile
model.profile = 1.0,1.0
lambda_bar = 0.05
radii = 0.03,0.08
n = 2000
n_dirs = 16
seeds = 2
seed = 9
");
    let rows = run_delta_f(&cfg).unwrap();
    assert_eq!(rows.len(), 4);
    for row in &rows {
        assert!(row.positive, "r={} seed={}", row.r, row.seed);
        assert!(row.solver_failures == 0);
        assert!(row.certified_fraction > 0.99);
        // theory column is conservative whenever it exists
        if row.theory_bound.is_finite() {
            assert!(row.min_delta_f >= row.theory_bound);
        }
    }
}

#[test]
fn delta_f_rows_are_reproducible() {
    let text = "
dict = orthonormal
dict.m = 10
model.k = 2
lambda_bar = 0.05
radii = 0.05
n = 200
n_dirs = 5
seed = 77
";
    let a = run_delta_f(&cfg(text)).unwrap();
    let b = run_delta_f(&cfg(text)).unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b.iter()) {
        assert_eq!(x.min_delta_f.to_bits(), y.min_delta_f.to_bits());
        assert_eq!(x.mean_delta_f.to_bits(), y.mean_delta_f.to_bits());
    }
}

#[test]
fn local_min_stays_at_reference_when_started_there() {
    // initialization radius ~ 0: the search must not leave the reference
    let cfg = cfg("
dict = orthonormal
dict.m = 24
model.k = 1
model.alpha_min = 1.0
model.alpha_max = 2.0
lambda = 0.25
radii = 0.05
r_init = 1e-9
n = 512
n_dirs = 1
seeds = 2
seed = 21
");
    let outcomes = run_local_min_search(&cfg).unwrap();
    for o in &outcomes {
        assert!(o.row.converged && !o.row.diverged);
        assert!(o.row.final_radius < 1e-6, "drifted to {}", o.row.final_radius);
        assert_eq!(o.row.sign_match_rate, 1.0);
        // objective trace never increases beyond the divergence tolerance
        for w in o.row.f_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }
}

#[test]
fn oversized_penalty_collapses_sign_match() {
    let cfg = cfg("
dict = orthonormal
dict.m = 16
model.k = 1
model.alpha_min = 1.0
model.alpha_max = 2.0
lambda = 10.0
radii = 0.05
r_init = 0.02
n = 128
max_iters = 3
seed = 31
");
    let outcomes = run_local_min_search(&cfg).unwrap();
    // every coefficient is thresholded to zero, so no sign pattern matches
    assert_eq!(outcomes[0].row.sign_match_rate, 0.0);
}

#[test]
fn outlier_sweep_reduces_to_delta_f_without_outliers() {
    let text = "
dict = orthonormal
dict.m = 16
model.k = 2
model.dist = fixed_profile
model.profile = 1.0,1.0
lambda_bar = 0.05
radii = 0.05
n = 1000
n_dirs = 8
seed = 41
outliers.multipliers = 0.0
";
    let rows = run_outlier_sweep(&cfg(text)).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].n_out, 0);
    assert!(rows[0].positive);
    assert_eq!(rows[0].min_delta_f_full, rows[0].min_delta_f_inliers);
}

#[test]
fn outliers_below_half_empirical_budget_preserve_positivity() {
    let text = "
dict = orthonormal
dict.m = 16
model.k = 2
model.dist = fixed_profile
model.profile = 1.0,1.0
lambda_bar = 0.05
radii = 0.04,0.08
n = 1500
n_dirs = 10
seeds = 2
seed = 51
outliers.count = 16
outliers.style = sphere
outliers.multipliers = 0.5
";
    let rows = run_outlier_sweep(&cfg(text)).unwrap();
    assert_eq!(rows.len(), 4);
    for row in &rows {
        assert!(row.n_out == 16);
        assert!(row.within_naive_empirical);
        assert!(row.positive, "r={} seed={}", row.r, row.seed);
        // energy budget hit exactly
        let target = 0.5 * row.naive_threshold_empirical;
        assert!((row.fro_sq_over_n_in - target).abs() <= 1e-12 * (1.0 + target));
    }
}

#[test]
fn sample_sweep_monotone_and_eta_passthrough() {
    let text = "
dict = orthonormal
dict.m = 16
model.k = 1
model.alpha_min = 1.0
model.alpha_max = 2.0
lambda = 0.02
radii = 0.001
n_grid = 50,200,800
n_dirs = 6
seeds = 12
seed = 61
x = 2.0
";
    let cfg = cfg(text);
    let rows = run_sample_complexity_sweep(&cfg).unwrap();
    assert_eq!(rows.len(), 3);
    // eta_n is the deviation-constant passthrough
    let inst = sparsid_cli::experiments::Instance::from_config(&cfg).unwrap();
    for row in &rows {
        let dc = sparsid::deviation_constants(
            &inst.d0,
            &inst.model,
            inst.lambda,
            row.r,
            row.n,
            2.0,
        )
        .unwrap();
        assert!((row.eta_n - dc.eta_n).abs() < 1e-14);
    }
    // nonincreasing failure rate up to 3-sigma binomial noise
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let sigma = (a.failure_rate.max(1e-3) * (1.0 - a.failure_rate).max(1e-3)
            / a.seeds as f64)
            .sqrt();
        assert!(
            b.failure_rate <= a.failure_rate + 3.0 * sigma,
            "failure rate increased: {} -> {}",
            a.failure_rate,
            b.failure_rate
        );
    }
    // whenever the grid reaches the sufficient size, zero failures
    for row in &rows {
        if row.n_required.is_finite() && (row.n as f64) >= row.n_required {
            assert_eq!(row.failures, 0);
        }
    }
}

#[test]
fn report_sections_follow_config() {
    let base = "
dict = onb_pair
dict.m = 32
model.k = 1
lambda = 0.25
radii = 0.05
";
    let bundle = run_report(&cfg(base)).unwrap();
    assert!(bundle.finite_sample.is_none());
    assert!(bundle.outliers.is_none());
    assert_eq!(bundle.report.p, 64);

    let with_sections = format!("{base}\nreport.r = 0.001\nreport.n_in = 100000\n");
    let bundle = run_report(&cfg(&with_sections)).unwrap();
    let fs = bundle.finite_sample.unwrap();
    assert!(fs.n_required.is_finite() || fs.n_required.is_nan());
    assert!(bundle.outliers.is_some());
}
