//! Evaluates every condition and constant of the identifiability guarantees
//! for a concrete `(dictionary, model, penalty)` instance and derives the
//! finite-sample and outlier-robustness thresholds from the explicit
//! deviation constants.

use serde::Serialize;

use crate::analysis::{
    cumulative_coherence, plain_coherence, rip_constants_with_budget, spectral_profile, RipMode,
};
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::model::CoefficientModel;

/// One evaluated inequality, with both sides retained so downstream tables
/// can be rendered without recomputation.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionRow {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `true` when the inequality is strict (`<`), `false` for `<=`.
    pub strict: bool,
    pub satisfied: bool,
}

impl ConditionRow {
    fn new(name: &str, lhs: f64, rhs: f64, strict: bool) -> Self {
        let satisfied = if strict { lhs < rhs } else { lhs <= rhs };
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            strict,
            satisfied,
        }
    }
}

/// Machine-readable evaluation of the local-minimum guarantee for one
/// instance. Carries every scalar needed by the finite-sample and outlier
/// operations, so those are pure functions of the report.
#[derive(Debug, Clone, Serialize)]
pub struct TheoremReport {
    pub m: usize,
    pub p: usize,
    pub k: usize,
    pub mu_1: f64,
    pub mu_k: f64,
    pub op_norm: f64,
    pub gram_residual: f64,
    pub frame_lower: f64,
    pub delta_lower_k: f64,
    pub delta_upper_k: f64,
    pub rip_exact: bool,
    pub e_alpha_sq: f64,
    pub e_abs_alpha: f64,
    pub kappa_alpha: f64,
    pub alpha_min: f64,
    pub m_alpha: f64,
    pub m_eps: f64,
    pub lambda: f64,
    pub lambda_bar: f64,
    /// Radius-window coefficients: a local minimum is guaranteed within any
    /// radius in `(c_min * lambda_bar, c_max * lambda_bar)`.
    pub c_min: f64,
    pub c_max: f64,
    pub radius_interval: (f64, f64),
    pub interval_nonempty: bool,
    pub conditions: Vec<ConditionRow>,
    pub all_satisfied: bool,
    /// Informational rows (looser coherence-only relaxations), never part of
    /// the pass/fail decision.
    pub informational: Vec<ConditionRow>,
    pub notes: Vec<String>,
}

impl TheoremReport {
    /// Admissible relative noise `m_eps / m_alpha` at radius `r`:
    /// `(7/2) (c_max * lambda_bar - r)`.
    pub fn noise_threshold(&self, r: f64) -> f64 {
        3.5 * (self.c_max * self.lambda_bar - r)
    }

    pub fn condition(&self, name: &str) -> Option<&ConditionRow> {
        self.conditions.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Minimum radius of the uniform expectation bound,
    /// `(2/3) c_min lambda_bar (1 + 2 lambda_bar)`.
    pub fn r_min(&self) -> f64 {
        2.0 / 3.0 * self.c_min * self.lambda_bar * (1.0 + 2.0 * self.lambda_bar)
    }

    /// Uniform expectation lower bound at radius `r`:
    /// `(E[a^2]/8)(k/p) r (r - r_min)`.
    pub fn expectation_lower_bound(&self, r: f64) -> f64 {
        self.e_alpha_sq / 8.0 * (self.k as f64 / self.p as f64) * r * (r - self.r_min())
    }

    /// Deviation bound `eta_n` at radius `r`, sample size `n`, confidence `x`,
    /// from the explicit Lipschitz constant of the non-quadratic part.
    pub fn eta_n(&self, r: f64, n: usize, x: f64) -> Result<f64> {
        let s = (1.0 - self.delta_lower_k).max(0.0).sqrt() - r;
        if s <= 0.0 {
            return Err(Error::InfeasibleRadius {
                radius: r,
                reason: format!(
                    "radius must stay below sqrt(1 - delta_lower) = {:.6}",
                    (1.0 - self.delta_lower_k).max(0.0).sqrt()
                ),
            });
        }
        let lk = self.lambda * (self.k as f64).sqrt() / s;
        let l = (self.m_eps + lk) / s
            * (2.0 * (1.0 + self.delta_upper_k).sqrt() * self.m_alpha + self.m_eps + lk);
        let n_f = n as f64;
        Ok(r * (l + self.m_alpha * self.m_alpha * r)
            * ((2.0 * x / n_f).sqrt()
                + 12.0 * (std::f64::consts::PI * self.m as f64 * self.p as f64 / n_f).sqrt()))
    }
}

/// Evaluates the asymptotic (infinite-sample, no-outlier) conditions and
/// constants for `(d0, model, lambda)`. Unsatisfied conditions are reported,
/// never thrown.
pub fn asymptotic_report(
    d0: &Dictionary,
    model: &CoefficientModel,
    lambda: f64,
) -> Result<TheoremReport> {
    if model.p != d0.ncols() {
        return Err(Error::InvalidParameter(
            "model and dictionary disagree on the atom count".into(),
        ));
    }
    let (m, p, k) = (d0.nrows(), d0.ncols(), model.k);
    let mu_1 = plain_coherence(d0);
    let mu_k = if k < p {
        cumulative_coherence(d0, k)?
    } else {
        cumulative_coherence(d0, p - 1)?
    };
    let (op_norm, gram_residual, frame_lower) = spectral_profile(d0);
    let (delta_lower_k, delta_upper_k, rip_exact) =
        match rip_constants_with_budget(d0, k, RipMode::Exact, 200_000) {
            Ok(t) => t,
            Err(Error::BudgetExceeded { .. }) => {
                rip_constants_with_budget(d0, k, RipMode::CoherenceBound, 0)?
            }
            Err(e) => return Err(e),
        };

    let e_alpha_sq = model.e_alpha_sq();
    let e_abs_alpha = model.e_abs_alpha();
    let kappa = model.kappa_alpha();
    let (alpha_min, m_alpha, m_eps) = (model.alpha_min(), model.m_alpha(), model.m_eps());
    let lambda_bar = lambda / e_abs_alpha;
    let b1 = op_norm + 1.0;
    let ratio = k as f64 / p as f64;

    let c_min = 24.0 * kappa * kappa * b1 * ratio * gram_residual;
    let c_max = 2.0 / 7.0 * (e_abs_alpha / m_alpha) * (1.0 - 2.0 * mu_k);

    let range_rhs = if mu_k < 0.5 {
        84.0 * b1 * ratio * gram_residual / (1.0 - 2.0 * mu_k)
    } else {
        f64::INFINITY
    };

    let conditions = vec![
        ConditionRow::new("cumulative_coherence_max", mu_k, 0.25, false),
        ConditionRow::new(
            "sparsity_vs_operator_norm",
            k as f64,
            p as f64 / (16.0 * b1 * b1),
            false,
        ),
        ConditionRow::new(
            "moment_range",
            range_rhs,
            e_alpha_sq / (m_alpha * e_abs_alpha),
            true,
        ),
        ConditionRow::new("penalty_max", lambda, alpha_min / 4.0, false),
        ConditionRow::new(
            "relative_noise_max",
            m_eps / m_alpha,
            3.5 * (c_max - c_min) * lambda_bar,
            true,
        ),
    ];
    let all_satisfied = conditions.iter().all(|c| c.satisfied);

    // informational: the crude coherence-only relaxation of the range factor
    let mut informational = Vec::new();
    let exact_factor = ratio * gram_residual / (1.0 - 2.0 * mu_k).max(f64::MIN_POSITIVE);
    if k as f64 * mu_1 < 0.5 {
        informational.push(ConditionRow::new(
            "range_factor_coherence_relaxation",
            exact_factor,
            k as f64 * mu_1 / (1.0 - 2.0 * k as f64 * mu_1),
            false,
        ));
    }

    let radius_interval = (c_min * lambda_bar, c_max * lambda_bar);
    Ok(TheoremReport {
        m,
        p,
        k,
        mu_1,
        mu_k,
        op_norm,
        gram_residual,
        frame_lower,
        delta_lower_k,
        delta_upper_k,
        rip_exact,
        e_alpha_sq,
        e_abs_alpha,
        kappa_alpha: kappa,
        alpha_min,
        m_alpha,
        m_eps,
        lambda,
        lambda_bar,
        c_min,
        c_max,
        radius_interval,
        interval_nonempty: radius_interval.0 < radius_interval.1,
        conditions,
        all_satisfied,
        informational,
        notes: vec![
            "finite-sample sizes and outlier thresholds are derived from explicit deviation \
             constants; no unspecified universal constants are used"
                .to_string(),
            "the energy-ratio outlier condition is evaluated through the eta_n route"
                .to_string(),
        ],
    })
}

/// Sufficient number of inlier samples for the guarantee at radius `r` and
/// confidence parameter `x` (failure probability `2 exp(-x)`):
/// `ceil[(sqrt(2x) + 12 sqrt(pi m p))^2 (16/E[a^2] * (p/k) * (L + M_a^2 r)/(r - c_min lambda_bar))^2]`
/// with `L + M_a^2 r` bounded by
/// `sqrt(20) M_a^2 (r + M_e/M_a + lambda_bar + (M_e/M_a + lambda_bar)^2)`.
pub fn finite_sample_n(report: &TheoremReport, r: f64, x: f64) -> Result<f64> {
    let (lo, hi) = report.radius_interval;
    if !(r > lo && r < hi) {
        return Err(Error::RadiusOutsideInterval { radius: r, lo, hi });
    }
    let noise_ratio = report.m_eps / report.m_alpha;
    let lip_plus = 20.0f64.sqrt()
        * report.m_alpha
        * report.m_alpha
        * (r + noise_ratio
            + report.lambda_bar
            + (noise_ratio + report.lambda_bar) * (noise_ratio + report.lambda_bar));
    let front =
        (2.0 * x).sqrt() + 12.0 * (std::f64::consts::PI * report.m as f64 * report.p as f64).sqrt();
    let inner = 16.0 / report.e_alpha_sq * (report.p as f64 / report.k as f64) * lip_plus
        / (r - report.c_min * report.lambda_bar);
    Ok((front * front * inner * inner).ceil())
}

/// Admissible outlier budgets at radius `r` for `n_in` inliers.
#[derive(Debug, Clone, Serialize)]
pub struct OutlierThresholds {
    /// Max admissible `||X_out||_F^2` by the energy argument:
    /// `2 n_in (delta_f_lower - 2 eta_n)`, floored at zero.
    pub naive: f64,
    /// Max admissible `||X_out||_{1,2}` by the Lipschitz/completeness
    /// argument; `None` when the completeness hypotheses fail.
    pub refined: Option<f64>,
    /// The certified inlier margin was nonpositive: both budgets collapse.
    pub zero_budget: bool,
    pub delta_f_lower: f64,
    pub eta_n: f64,
    pub diagnostics: Vec<String>,
}

/// Conservative outlier budgets from the proven expectation bound and
/// deviation constant (not from empirical margins).
pub fn outlier_thresholds(
    report: &TheoremReport,
    r: f64,
    x: f64,
    n_in: usize,
    frame_lower: f64,
) -> OutlierThresholds {
    let mut diagnostics = Vec::new();
    let delta_f_lower = report.expectation_lower_bound(r);
    let uniform_valid = report.lambda_bar <= 0.25
        && r > 0.0
        && r <= 0.15
        && report.delta_lower_k <= 0.25
        && (report.k as f64) <= report.p as f64 / (16.0 * (report.op_norm + 1.0).powi(2));
    if !uniform_valid {
        diagnostics.push("uniform expectation bound preconditions fail at this radius".into());
    }
    let eta_n = match report.eta_n(r, n_in, x) {
        Ok(v) => v,
        Err(e) => {
            diagnostics.push(format!("deviation constant unavailable: {e}"));
            f64::INFINITY
        }
    };
    let margin = delta_f_lower - 2.0 * eta_n;
    let zero_budget = !(uniform_valid && margin > 0.0);
    if margin <= 0.0 {
        diagnostics.push(format!(
            "certified margin nonpositive: delta_f_lower={delta_f_lower:.3e} <= 2 eta_n={:.3e}; \
             increase n_in",
            2.0 * eta_n
        ));
    }
    let naive = if zero_budget {
        0.0
    } else {
        2.0 * n_in as f64 * margin
    };

    let delta_cap = (1.0 - report.delta_lower_k).max(0.0).sqrt();
    let refined = if frame_lower <= 0.0 {
        diagnostics.push("refined budget unavailable: dictionary is not a frame".into());
        None
    } else if r > (frame_lower.sqrt() / 2.0).min(delta_cap) {
        diagnostics.push(
            "refined budget unavailable: radius exceeds the completeness-transfer cap".into(),
        );
        None
    } else if zero_budget {
        Some(0.0)
    } else {
        let denom = report.e_abs_alpha * 18.0 * (report.p as f64).powf(1.5)
            / (report.k as f64).sqrt()
            * r
            * report.lambda_bar
            / frame_lower.powf(1.5);
        Some(n_in as f64 * margin / denom)
    };

    OutlierThresholds {
        naive,
        refined,
        zero_budget,
        delta_f_lower,
        eta_n,
        diagnostics,
    }
}
