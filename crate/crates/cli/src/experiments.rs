//! Monte Carlo verification campaigns over Frobenius spheres: objective
//! positivity, local-minimum search, outlier stress, and sample-complexity
//! sweeps.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use sparsid::rng::substream;
use sparsid::{
    asymptotic_report, deviation_constants, f_value, finite_sample_n, generate_batch,
    inject_outliers, lasso_solve_detailed, objective_f_certified, outlier_thresholds,
    sample_sphere, uniform_lower_bound, CoefficientModel, Dictionary, LassoOptions, SignalBatch,
    TheoremReport,
};

use crate::config::{artifact_version, ExperimentConfig, OutlierStyle};

/// Substream bases keeping experiment draws disjoint from batch columns.
const DIR_STREAM_BASE: u64 = 1 << 41;
const ADVERSARIAL_STREAM_BASE: u64 = 1 << 42;
const INIT_STREAM_BASE: u64 = 1 << 43;
const RADIUS_STRIDE: u64 = 1 << 20;

#[derive(Debug)]
pub enum ExperimentError {
    Core(sparsid::Error),
    Config(crate::config::ConfigError),
}

impl std::fmt::Display for ExperimentError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExperimentError::Core(e) => write!(f, "{e}"),
            ExperimentError::Config(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for ExperimentError {}

impl From<sparsid::Error> for ExperimentError {
    fn from(e: sparsid::Error) -> Self {
        ExperimentError::Core(e)
    }
}

impl From<crate::config::ConfigError> for ExperimentError {
    fn from(e: crate::config::ConfigError) -> Self {
        ExperimentError::Config(e)
    }
}

pub type ExpResult<T> = Result<T, ExperimentError>;

/// Shared context for one experiment run.
pub struct Instance {
    pub d0: Dictionary,
    pub model: CoefficientModel,
    pub lambda: f64,
    pub lambda_bar: f64,
}

impl Instance {
    pub fn from_config(cfg: &ExperimentConfig) -> ExpResult<Self> {
        let d0 = cfg.build_dictionary()?;
        let model = cfg.build_model(d0.ncols())?;
        let lambda = cfg.lambda(&model);
        let lambda_bar = cfg.lambda_bar(&model);
        Ok(Self {
            d0,
            model,
            lambda,
            lambda_bar,
        })
    }
}

/// One row of the sphere-positivity table.
#[derive(Debug, Clone, Serialize)]
pub struct DeltaFRow {
    pub seed: u64,
    pub r: f64,
    pub n_dirs: usize,
    pub n_signals: usize,
    pub min_delta_f: f64,
    pub mean_delta_f: f64,
    /// Proven expectation lower bound minus `2 eta_n`; NaN when the bound
    /// preconditions fail at this radius.
    pub theory_bound: f64,
    pub eta_n: f64,
    pub bound_valid: bool,
    pub positive: bool,
    pub certified_fraction: f64,
    pub solver_failures: usize,
    pub config_hash: String,
    pub version: String,
}

fn sample_directions(
    d0: &Dictionary,
    r: f64,
    n_dirs: usize,
    seed: u64,
    ridx: usize,
) -> sparsid::Result<Vec<Dictionary>> {
    (0..n_dirs)
        .map(|dir| {
            let mut rng = substream(seed, DIR_STREAM_BASE + ridx as u64 * RADIUS_STRIDE + dir as u64);
            sample_sphere(d0, r, &mut rng)
        })
        .collect()
}

struct SphereScan {
    delta_f: Vec<f64>,
    certified: usize,
    total_columns: usize,
    failures: usize,
}

/// Inlier-batch objective differences across a set of directions, against a
/// precomputed reference value.
fn scan_directions(
    batch: &SignalBatch,
    directions: &[Dictionary],
    lambda: f64,
    f_reference: f64,
) -> SphereScan {
    let mut delta_f = Vec::with_capacity(directions.len());
    let mut certified = 0usize;
    let mut total = 0usize;
    let mut failures = 0usize;
    for d in directions {
        match objective_f_certified(batch, d, lambda) {
            Ok(obj) => {
                delta_f.push(obj.value - f_reference);
                certified += obj.certified;
                total += batch.n();
            }
            Err(_) => {
                delta_f.push(f64::NAN);
                failures += 1;
            }
        }
    }
    SphereScan {
        delta_f,
        certified,
        total_columns: total,
        failures,
    }
}

fn finite_min(values: &[f64]) -> f64 {
    values
        .iter()
        .cloned()
        .filter(|v| v.is_finite())
        .fold(f64::INFINITY, f64::min)
}

fn finite_mean(values: &[f64]) -> f64 {
    let finite: Vec<f64> = values.iter().cloned().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        f64::NAN
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    }
}

/// Theory column: certified uniform lower bound minus twice the deviation
/// bound, when both are available at this radius.
fn theory_bound(
    inst: &Instance,
    r: f64,
    n: usize,
    x: f64,
) -> (f64, f64, bool) {
    let ub = match uniform_lower_bound(&inst.d0, &inst.model, inst.lambda_bar, r) {
        Ok(ub) => ub,
        Err(_) => return (f64::NAN, f64::NAN, false),
    };
    match deviation_constants(&inst.d0, &inst.model, inst.lambda, r, n, x) {
        Ok(dc) => (ub.bound - 2.0 * dc.eta_n, dc.eta_n, ub.valid),
        Err(_) => (f64::NAN, f64::NAN, false),
    }
}

/// Positivity of the sphere infimum: for each radius, sample directions and
/// record the minimum objective difference over a fixed signal batch.
pub fn run_delta_f(cfg: &ExperimentConfig) -> ExpResult<Vec<DeltaFRow>> {
    let inst = Instance::from_config(cfg)?;
    let mut rows = Vec::new();
    for s in 0..cfg.seeds {
        let seed = cfg.seed + s as u64;
        let batch = generate_batch(&inst.d0, &inst.model, cfg.n, seed)?;
        let f0 = objective_f_certified(&batch, &inst.d0, inst.lambda)?;
        for (ridx, &r) in cfg.radii.iter().enumerate() {
            let directions = sample_directions(&inst.d0, r, cfg.n_dirs, seed, ridx)?;
            let scan = scan_directions(&batch, &directions, inst.lambda, f0.value);
            let (bound, eta_n, bound_valid) = theory_bound(&inst, r, cfg.n, cfg.x);
            let min_delta_f = finite_min(&scan.delta_f);
            rows.push(DeltaFRow {
                seed,
                r,
                n_dirs: cfg.n_dirs,
                n_signals: cfg.n,
                min_delta_f,
                mean_delta_f: finite_mean(&scan.delta_f),
                theory_bound: bound,
                eta_n,
                bound_valid,
                positive: scan.failures == 0 && min_delta_f > 0.0,
                certified_fraction: if scan.total_columns > 0 {
                    scan.certified as f64 / scan.total_columns as f64
                } else {
                    0.0
                },
                solver_failures: scan.failures,
                config_hash: cfg.hash.clone(),
                version: artifact_version(),
            });
        }
    }
    Ok(rows)
}

/// Result of one alternating-minimization run.
#[derive(Debug, Clone, Serialize)]
pub struct LocalMinRow {
    pub seed: u64,
    pub converged: bool,
    pub diverged: bool,
    pub iterations: usize,
    pub r_init: f64,
    pub final_radius: f64,
    pub sign_match_rate: f64,
    pub f_first: f64,
    pub f_final: f64,
    #[serde(skip)]
    pub f_trace: Vec<f64>,
    pub solver_failures: usize,
    pub config_hash: String,
    pub version: String,
}

impl LocalMinRow {
    pub fn trace_string(&self) -> String {
        self.f_trace
            .iter()
            .map(|v| format!("{v:.12e}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Outcome of the local search including the final dictionary (not written
/// to tables; used by callers that inspect the iterate).
pub struct LocalMinOutcome {
    pub row: LocalMinRow,
    pub dictionary: Dictionary,
}

fn lasso_batch(
    batch: &SignalBatch,
    d: &Dictionary,
    lambda: f64,
    warm: &mut [DVector<f64>],
) -> (f64, usize) {
    let results: Vec<(DVector<f64>, f64, bool)> = warm
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let x = batch.signals.column(i).clone_owned();
            match lasso_solve_detailed(&x, d, lambda, LassoOptions::default(), Some(w)) {
                Ok(sol) => {
                    let z = &x - d.entries() * &sol.alpha;
                    let f = 0.5 * z.norm_squared() + lambda * sol.alpha.abs().sum();
                    (sol.alpha, f, false)
                }
                Err(_) => (w.clone(), f64::NAN, true),
            }
        })
        .collect();
    let mut failures = 0usize;
    let mut f_sum = 0.0;
    for (i, (alpha, f, failed)) in results.into_iter().enumerate() {
        warm[i] = alpha;
        if failed {
            failures += 1;
        } else {
            f_sum += f;
        }
    }
    (f_sum / batch.n() as f64, failures)
}

fn sign_pattern_matches(alpha: &DVector<f64>, signs: &[i8]) -> bool {
    for j in 0..alpha.len() {
        let s = if alpha[j] > 0.0 {
            1
        } else if alpha[j] < 0.0 {
            -1
        } else {
            0
        };
        if s != signs[j] {
            return false;
        }
    }
    true
}

/// Alternating minimization: an exact Lasso step followed by per-atom least
/// squares constrained to the sphere (descent in both steps). Starts from a
/// sampled point on the radius-`r_init` sphere around the reference.
pub fn run_local_min_search(cfg: &ExperimentConfig) -> ExpResult<Vec<LocalMinOutcome>> {
    let inst = Instance::from_config(cfg)?;
    let mut outcomes = Vec::new();
    for s in 0..cfg.seeds {
        let seed = cfg.seed + s as u64;
        let batch = generate_batch(&inst.d0, &inst.model, cfg.n, seed)?;
        let mut rng = substream(seed, INIT_STREAM_BASE);
        let mut d = sample_sphere(&inst.d0, cfg.r_init, &mut rng)?;
        let (p, n) = (batch.p(), batch.n());
        let mut coeffs: Vec<DVector<f64>> = vec![DVector::zeros(p); n];
        let mut f_trace = Vec::new();
        let mut converged = false;
        let mut diverged = false;
        let mut iterations = 0usize;
        let mut failures = 0usize;

        for iter in 0..cfg.max_iters {
            iterations = iter + 1;
            let (f_lasso, lasso_failures) = lasso_batch(&batch, &d, inst.lambda, &mut coeffs);
            failures += lasso_failures;
            f_trace.push(f_lasso);

            // dictionary step: Gauss-Seidel over atoms, each update solves the
            // unit-norm-constrained least squares with the codes fixed
            let mut residual = batch.signals.clone();
            for (i, alpha) in coeffs.iter().enumerate() {
                let mut col = residual.column_mut(i);
                for j in 0..p {
                    if alpha[j] != 0.0 {
                        col.axpy(-alpha[j], &d.atom(j).clone_owned(), 1.0);
                    }
                }
            }
            let l1_total: f64 = coeffs.iter().map(|a| a.abs().sum()).sum();
            let f_before_dict = (0.5 * residual.norm_squared() + inst.lambda * l1_total) / n as f64;

            let mut entries = d.entries().clone();
            for j in 0..p {
                let users: Vec<usize> = (0..n).filter(|&i| coeffs[i][j] != 0.0).collect();
                if users.is_empty() {
                    continue;
                }
                let weight_sq: f64 = users.iter().map(|&i| coeffs[i][j] * coeffs[i][j]).sum();
                if weight_sq < 1e-12 {
                    continue;
                }
                let old = entries.column(j).clone_owned();
                let mut g = &old * weight_sq;
                for &i in &users {
                    g.axpy(coeffs[i][j], &residual.column(i).clone_owned(), 1.0);
                }
                let norm = g.norm();
                if norm < 1e-12 {
                    continue;
                }
                g.unscale_mut(norm);
                let shift = &old - &g;
                for &i in &users {
                    residual
                        .column_mut(i)
                        .axpy(coeffs[i][j], &shift, 1.0);
                }
                entries.column_mut(j).copy_from(&g);
            }
            let d_next = Dictionary::from_matrix(entries)?;
            let f_after_dict =
                (0.5 * residual.norm_squared() + inst.lambda * l1_total) / n as f64;
            if f_after_dict > f_before_dict + 1e-9 {
                diverged = true;
                d = d_next;
                break;
            }
            let step = d.frobenius_distance(&d_next);
            d = d_next;
            if step <= 1e-8 {
                converged = true;
                break;
            }
        }

        // final Lasso at the converged dictionary for the sign-match rate
        let (f_final, final_failures) = lasso_batch(&batch, &d, inst.lambda, &mut coeffs);
        failures += final_failures;
        let matches = (0..n)
            .filter(|&i| sign_pattern_matches(&coeffs[i], &batch.signs[i]))
            .count();
        let row = LocalMinRow {
            seed,
            converged,
            diverged,
            iterations,
            r_init: cfg.r_init,
            final_radius: d.frobenius_distance(&inst.d0),
            sign_match_rate: matches as f64 / n as f64,
            f_first: f_trace.first().cloned().unwrap_or(f64::NAN),
            f_final,
            f_trace,
            solver_failures: failures,
            config_hash: cfg.hash.clone(),
            version: artifact_version(),
        };
        outcomes.push(LocalMinOutcome {
            row,
            dictionary: d,
        });
    }
    Ok(outcomes)
}

/// One row of the outlier stress sweep.
#[derive(Debug, Clone, Serialize)]
pub struct OutlierRow {
    pub seed: u64,
    pub r: f64,
    pub multiplier: f64,
    pub style: String,
    pub n_out: usize,
    pub outlier_energy: f64,
    pub fro_sq_over_n_in: f64,
    pub l12_over_n_in: f64,
    pub min_delta_f_inliers: f64,
    pub min_delta_f_full: f64,
    /// Deterministic energy budget `2 * min_dirs deltaF_in` (per inlier).
    pub naive_threshold_empirical: f64,
    /// Conservative theory budget `||X_out||_F^2 / n_in` from the proven
    /// bound and deviation constant (zero at desk-scale sample sizes).
    pub naive_threshold_theory: f64,
    pub refined_threshold_theory: f64,
    pub theory_zero_budget: bool,
    pub within_naive_empirical: bool,
    pub positive: bool,
    pub solver_failures: usize,
    pub config_hash: String,
    pub version: String,
}

struct OutlierSet {
    /// Distinct outlier columns with multiplicities (adversarial outliers
    /// repeat one column, so each direction is solved once per distinct
    /// column).
    columns: DMatrix<f64>,
    multiplicity: Vec<usize>,
    energy: f64,
}

impl OutlierSet {
    fn n_out(&self) -> usize {
        self.multiplicity.iter().sum()
    }

    fn fro_sq(&self) -> f64 {
        (0..self.columns.ncols())
            .map(|c| self.multiplicity[c] as f64 * self.columns.column(c).norm_squared())
            .sum()
    }

    fn l12(&self) -> f64 {
        (0..self.columns.ncols())
            .map(|c| self.multiplicity[c] as f64 * self.columns.column(c).norm())
            .sum()
    }

    /// Sum over outliers of `f_x(d) - f_reference_per_column`.
    fn delta_sum(&self, d: &Dictionary, lambda: f64, f_ref: &[f64]) -> sparsid::Result<f64> {
        let per_column: sparsid::Result<Vec<f64>> = (0..self.columns.ncols())
            .into_par_iter()
            .map(|c| f_value(&self.columns.column(c).clone_owned(), d, lambda))
            .collect();
        let per_column = per_column?;
        Ok(per_column
            .iter()
            .zip(f_ref.iter().zip(self.multiplicity.iter()))
            .map(|(f, (f0, &mult))| mult as f64 * (f - f0))
            .sum())
    }
}

/// The tilted-plane adversarial construction: a target direction that spends
/// the whole Frobenius budget rotating one atom, and outliers placed midway
/// between the original and rotated atom (the placement that maximizes
/// objective damage per unit of outlier energy under the l1 penalty).
struct AdversarialPlan {
    target: Dictionary,
    outlier_direction: DVector<f64>,
    energy: f64,
}

fn adversarial_plan(
    d0: &Dictionary,
    lambda: f64,
    r: f64,
    seed: u64,
    ridx: usize,
) -> sparsid::Result<AdversarialPlan> {
    use rand::Rng;
    let mut rng = substream(seed, ADVERSARIAL_STREAM_BASE + ridx as u64);
    let m = d0.nrows();
    let p = d0.ncols();
    let j_star = rng.gen_range(0..p);
    let atom = d0.atom(j_star).clone_owned();
    // spread direction orthogonal to the target atom
    let mut w = DVector::from_fn(m, |_, _| if rng.gen::<bool>() { 1.0 } else { -1.0 });
    w.axpy(-w.dot(&atom), &atom, 1.0);
    let norm = w.norm();
    if norm < 1e-9 {
        return Err(sparsid::Error::InvalidInput(
            "degenerate adversarial spread direction".into(),
        ));
    }
    w.unscale_mut(norm);

    let phi = std::f64::consts::FRAC_PI_4;
    let u0 = &atom * phi.cos() + &w * phi.sin();

    // keep every non-target atom inactive at the reference dictionary
    let mut c_other = 0.0f64;
    for j in 0..p {
        if j != j_star {
            c_other = c_other.max(d0.atom(j).dot(&u0).abs());
        }
    }
    let energy = if c_other > 1e-12 {
        (0.95 * lambda / c_other).min(100.0 * lambda)
    } else {
        100.0 * lambda
    };

    // rotate the target atom toward the outliers by the full budget
    let theta = 2.0 * (r / 2.0).asin();
    let mut entries = d0.entries().clone();
    let rotated = &atom * theta.cos() + &w * theta.sin();
    entries.column_mut(j_star).copy_from(&rotated);
    let target = Dictionary::from_matrix(entries)?;
    Ok(AdversarialPlan {
        target,
        outlier_direction: u0,
        energy,
    })
}

fn build_outlier_set(
    style: OutlierStyle,
    target_fro_sq: f64,
    cfg_count: usize,
    plan: Option<&AdversarialPlan>,
    d0: &Dictionary,
    seed: u64,
) -> sparsid::Result<OutlierSet> {
    use rand::Rng;
    match style {
        OutlierStyle::Adversarial => {
            let plan = plan.expect("adversarial plan required");
            let e_sq = plan.energy * plan.energy;
            let n_out = (target_fro_sq / e_sq).ceil().max(1.0) as usize;
            // hit the energy budget exactly; the per-outlier energy can only
            // shrink, which keeps the non-target atoms inactive
            let energy = (target_fro_sq / n_out as f64).sqrt();
            let mut columns = DMatrix::zeros(d0.nrows(), 1);
            columns
                .column_mut(0)
                .copy_from(&(&plan.outlier_direction * energy));
            Ok(OutlierSet {
                columns,
                multiplicity: vec![n_out],
                energy,
            })
        }
        OutlierStyle::Sphere | OutlierStyle::AtomAligned => {
            let n_out = cfg_count.max(1);
            let energy = (target_fro_sq / n_out as f64).sqrt();
            let mut columns = DMatrix::zeros(d0.nrows(), n_out);
            for i in 0..n_out {
                let mut rng = substream(seed, sparsid::model::OUTLIER_STREAM_BASE + i as u64);
                match style {
                    OutlierStyle::AtomAligned => {
                        let j = rng.gen_range(0..d0.ncols());
                        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                        columns
                            .column_mut(i)
                            .copy_from(&(d0.atom(j).clone_owned() * (sign * energy)));
                    }
                    OutlierStyle::Sphere => {
                        use rand_distr::Distribution;
                        let g = DVector::from_fn(d0.nrows(), |_, _| {
                            let v: f64 = rand_distr::StandardNormal.sample(&mut rng);
                            v
                        });
                        let norm = g.norm();
                        columns.column_mut(i).copy_from(&(&g * (energy / norm)));
                    }
                    OutlierStyle::Adversarial => unreachable!(),
                }
            }
            Ok(OutlierSet {
                columns,
                multiplicity: vec![1; n_out],
                energy,
            })
        }
    }
}

/// Sweeps outlier energy across multiples of the deterministic empirical
/// budget and records whether sphere positivity survives.
pub fn run_outlier_sweep(cfg: &ExperimentConfig) -> ExpResult<Vec<OutlierRow>> {
    let inst = Instance::from_config(cfg)?;
    let report = asymptotic_report(&inst.d0, &inst.model, inst.lambda)?;
    let mut rows = Vec::new();
    for s in 0..cfg.seeds {
        let seed = cfg.seed + s as u64;
        let batch = generate_batch(&inst.d0, &inst.model, cfg.n, seed)?;
        let n_in = batch.n_in;
        let f0 = objective_f_certified(&batch, &inst.d0, inst.lambda)?;
        for (ridx, &r) in cfg.radii.iter().enumerate() {
            let mut directions = sample_directions(&inst.d0, r, cfg.n_dirs, seed, ridx)?;
            let plan = if cfg.outlier_style == OutlierStyle::Adversarial {
                let plan = adversarial_plan(&inst.d0, inst.lambda, r, seed, ridx)?;
                directions.push(plan.target.clone());
                Some(plan)
            } else {
                None
            };
            let scan = scan_directions(&batch, &directions, inst.lambda, f0.value);
            let min_in = finite_min(&scan.delta_f);
            let naive_emp = 2.0 * min_in;

            let theory = outlier_thresholds(&report, r, cfg.x, n_in, report.frame_lower);
            let naive_theory = theory.naive / n_in as f64;
            let refined_theory = theory
                .refined
                .map(|v| v / n_in as f64)
                .unwrap_or(f64::NAN);

            for &mult in &cfg.outlier_multipliers {
                let target_fro_sq = mult * naive_emp.max(0.0) * n_in as f64;
                if !(target_fro_sq > 0.0) {
                    rows.push(OutlierRow {
                        seed,
                        r,
                        multiplier: mult,
                        style: cfg.outlier_style.as_str().to_string(),
                        n_out: 0,
                        outlier_energy: 0.0,
                        fro_sq_over_n_in: 0.0,
                        l12_over_n_in: 0.0,
                        min_delta_f_inliers: min_in,
                        min_delta_f_full: min_in,
                        naive_threshold_empirical: naive_emp,
                        naive_threshold_theory: naive_theory,
                        refined_threshold_theory: refined_theory,
                        theory_zero_budget: theory.zero_budget,
                        within_naive_empirical: true,
                        positive: scan.failures == 0 && min_in > 0.0,
                        solver_failures: scan.failures,
                        config_hash: cfg.hash.clone(),
                        version: artifact_version(),
                    });
                    continue;
                }
                let set = build_outlier_set(
                    cfg.outlier_style,
                    target_fro_sq,
                    cfg.outlier_count,
                    plan.as_ref(),
                    &inst.d0,
                    seed,
                )?;
                let n_out = set.n_out();
                let f_ref: sparsid::Result<Vec<f64>> = (0..set.columns.ncols())
                    .map(|c| f_value(&set.columns.column(c).clone_owned(), &inst.d0, inst.lambda))
                    .collect();
                let f_ref = f_ref?;

                let mut min_full = f64::INFINITY;
                let mut failures = scan.failures;
                for (di, d) in directions.iter().enumerate() {
                    if !scan.delta_f[di].is_finite() {
                        continue;
                    }
                    match set.delta_sum(d, inst.lambda, &f_ref) {
                        Ok(out_delta) => {
                            let full = (n_in as f64 * scan.delta_f[di] + out_delta)
                                / (n_in + n_out) as f64;
                            min_full = min_full.min(full);
                        }
                        Err(_) => failures += 1,
                    }
                }
                let fro_sq = set.fro_sq();
                rows.push(OutlierRow {
                    seed,
                    r,
                    multiplier: mult,
                    style: cfg.outlier_style.as_str().to_string(),
                    n_out,
                    outlier_energy: set.energy,
                    fro_sq_over_n_in: fro_sq / n_in as f64,
                    l12_over_n_in: set.l12() / n_in as f64,
                    min_delta_f_inliers: min_in,
                    min_delta_f_full: min_full,
                    naive_threshold_empirical: naive_emp,
                    naive_threshold_theory: naive_theory,
                    refined_threshold_theory: refined_theory,
                    theory_zero_budget: theory.zero_budget,
                    within_naive_empirical: fro_sq <= naive_emp * n_in as f64,
                    positive: failures == 0 && min_full > 0.0,
                    solver_failures: failures,
                    config_hash: cfg.hash.clone(),
                    version: artifact_version(),
                });
            }
        }
    }
    Ok(rows)
}

/// One row of the sample-complexity sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SampleNRow {
    pub n: usize,
    pub r: f64,
    pub seed: u64,
    pub seeds: usize,
    pub failures: usize,
    pub failure_rate: f64,
    pub min_delta_f_worst: f64,
    pub eta_n: f64,
    /// Sufficient sample size from the explicit finite-sample formula; NaN
    /// when the radius is outside the certified window.
    pub n_required: f64,
    pub solver_failures: usize,
    pub config_hash: String,
    pub version: String,
}

/// Repeats the positivity experiment across a grid of sample sizes and
/// reports the empirical failure rate of the sphere minimum.
pub fn run_sample_complexity_sweep(cfg: &ExperimentConfig) -> ExpResult<Vec<SampleNRow>> {
    if cfg.n_grid.is_empty() {
        return Err(ExperimentError::Config(crate::config::ConfigError::Invalid(
            "samplen needs a nonempty n_grid".into(),
        )));
    }
    let inst = Instance::from_config(cfg)?;
    let r = cfg.radii[0];
    let report = asymptotic_report(&inst.d0, &inst.model, inst.lambda)?;
    let n_required = finite_sample_n(&report, r, cfg.x).unwrap_or(f64::NAN);
    let mut rows = Vec::new();
    for &n in &cfg.n_grid {
        let mut failures = 0usize;
        let mut solver_failures = 0usize;
        let mut worst = f64::INFINITY;
        for s in 0..cfg.seeds {
            let seed = cfg.seed + s as u64;
            let batch = generate_batch(&inst.d0, &inst.model, n, seed)?;
            let f0 = objective_f_certified(&batch, &inst.d0, inst.lambda)?;
            let directions = sample_directions(&inst.d0, r, cfg.n_dirs, seed, 0)?;
            let scan = scan_directions(&batch, &directions, inst.lambda, f0.value);
            let min_delta = finite_min(&scan.delta_f);
            solver_failures += scan.failures;
            worst = worst.min(min_delta);
            if !(min_delta > 0.0) || scan.failures > 0 {
                failures += 1;
            }
        }
        let eta_n = deviation_constants(&inst.d0, &inst.model, inst.lambda, r, n, cfg.x)
            .map(|dc| dc.eta_n)
            .unwrap_or(f64::NAN);
        rows.push(SampleNRow {
            n,
            r,
            seed: cfg.seed,
            seeds: cfg.seeds,
            failures,
            failure_rate: failures as f64 / cfg.seeds as f64,
            min_delta_f_worst: worst,
            eta_n,
            n_required,
            solver_failures,
            config_hash: cfg.hash.clone(),
            version: artifact_version(),
        });
    }
    Ok(rows)
}

/// Builds the condition/constant report for the configured instance,
/// optionally extended with the finite-sample and outlier sections.
#[derive(Debug, Clone, Serialize)]
pub struct ReportBundle {
    pub report: TheoremReport,
    pub finite_sample: Option<FiniteSampleSection>,
    pub outliers: Option<OutlierSection>,
    pub config_hash: String,
    pub version: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct FiniteSampleSection {
    pub r: f64,
    pub x: f64,
    pub n_required: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutlierSection {
    pub r: f64,
    pub x: f64,
    pub n_in: usize,
    pub naive_fro_sq: f64,
    pub refined_l12: Option<f64>,
    pub zero_budget: bool,
    pub diagnostics: Vec<String>,
}

pub fn run_report(cfg: &ExperimentConfig) -> ExpResult<ReportBundle> {
    let inst = Instance::from_config(cfg)?;
    let report = asymptotic_report(&inst.d0, &inst.model, inst.lambda)?;
    let finite_sample = cfg.report_r.map(|r| FiniteSampleSection {
        r,
        x: cfg.x,
        n_required: finite_sample_n(&report, r, cfg.x).unwrap_or(f64::NAN),
    });
    let outliers = match (cfg.report_r, cfg.report_n_in) {
        (Some(r), Some(n_in)) => {
            let t = outlier_thresholds(&report, r, cfg.x, n_in, report.frame_lower);
            Some(OutlierSection {
                r,
                x: cfg.x,
                n_in,
                naive_fro_sq: t.naive,
                refined_l12: t.refined,
                zero_budget: t.zero_budget,
                diagnostics: t.diagnostics,
            })
        }
        _ => None,
    };
    Ok(ReportBundle {
        report,
        finite_sample,
        outliers,
        config_hash: cfg.hash.clone(),
        version: artifact_version(),
    })
}

/// Inlier batch plus isotropic outliers of the given per-column energy,
/// through the generic generator path.
pub fn build_batch_with_outliers(cfg: &ExperimentConfig, energy: f64) -> ExpResult<SignalBatch> {
    let inst = Instance::from_config(cfg)?;
    let batch = generate_batch(&inst.d0, &inst.model, cfg.n, cfg.seed)?;
    Ok(inject_outliers(&batch, cfg.outlier_count, energy, cfg.seed)?)
}
