//! Objective differences under the sign-restricted surrogate: the six-term
//! decomposition of `phi_x(D|s) - phi_x(D'|s)`, its exact expectation over
//! the signal model, lower bounds on that expectation (fixed pair and
//! uniform over Frobenius spheres), and the Lipschitz/deviation constants
//! controlling finite-sample fluctuations.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::analysis::{rip_constants_with_budget, spectral_profile, RipMode};
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::manifold::decompose;
use crate::model::CoefficientModel;
use crate::rng::substream;
use crate::support::{binomial, for_each_support};

/// Supports enumerated exactly when their count does not exceed this.
pub const DEFAULT_TRACE_BUDGET: u128 = 100_000;

/// The six components of `phi_x(D|s) - phi_x(D'|s)` for a signal
/// `x = D' a + e` supported on `J` with signs `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaPhiTerms {
    pub t_aa: f64,
    pub t_ae: f64,
    pub t_ee: f64,
    pub t_sa: f64,
    pub t_se: f64,
    pub t_ss: f64,
}

impl DeltaPhiTerms {
    pub fn sum(&self) -> f64 {
        self.t_aa + self.t_ae + self.t_ee + self.t_sa + self.t_se + self.t_ss
    }
}

struct SupportOps {
    atoms: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl SupportOps {
    fn new(d: &Dictionary, support: &[usize]) -> Result<Self> {
        let atoms = d.atoms(support);
        let gram = atoms.tr_mul(&atoms);
        let chol = nalgebra::Cholesky::new(gram).ok_or_else(|| Error::RankDeficientGram {
            support: support.to_vec(),
            smallest_eig: 0.0,
        })?;
        Ok(Self { atoms, chol })
    }

    /// `D_J^+ v` for an ambient vector `v`.
    fn pinv_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut b = self.atoms.tr_mul(v);
        self.chol.solve_mut(&mut b);
        b
    }

    /// `Theta_J w` for a support-sized vector `w`.
    fn theta_apply(&self, w: &DVector<f64>) -> DVector<f64> {
        let mut b = w.clone();
        self.chol.solve_mut(&mut b);
        b
    }
}

/// Evaluates the six decomposition terms for the signal `x = d_prime a + e`.
///
/// The reference dictionary `d_prime` is also the generator of the clean
/// signal, which is exactly the configuration whose sum telescopes to
/// `phi_x(d|s) - phi_x(d_prime|s)`.
pub fn delta_phi_terms(
    alpha0: &DVector<f64>,
    eps: &DVector<f64>,
    support: &[usize],
    d: &Dictionary,
    d_prime: &Dictionary,
    lambda: f64,
) -> Result<DeltaPhiTerms> {
    if alpha0.len() != d.ncols() {
        return Err(Error::InvalidParameter(
            "coefficient length must match the atom count".into(),
        ));
    }
    for &j in support {
        if alpha0[j] == 0.0 {
            return Err(Error::InvalidParameter(format!(
                "support atom {j} has zero coefficient"
            )));
        }
    }
    let ops = SupportOps::new(d, support)?;
    let ops_p = SupportOps::new(d_prime, support)?;

    // clean signal y = D'_J a_J
    let mut y = DVector::zeros(d.nrows());
    for &j in support {
        y.axpy(alpha0[j], &d_prime.atom(j).clone_owned(), 1.0);
    }
    let s_j = DVector::from_iterator(support.len(), support.iter().map(|&j| alpha0[j].signum()));

    let a = ops.pinv_apply(&y);
    let a_p = ops_p.pinv_apply(&y);
    let b = ops.pinv_apply(eps);
    let b_p = ops_p.pinv_apply(eps);

    let py_y = y.dot(&(&ops.atoms * &a));
    let py_y_p = y.dot(&(&ops_p.atoms * &a_p));
    let pe_y = eps.dot(&(&ops.atoms * &a));
    let pe_y_p = eps.dot(&(&ops_p.atoms * &a_p));
    let pe_e = eps.dot(&(&ops.atoms * &b));
    let pe_e_p = eps.dot(&(&ops_p.atoms * &b_p));

    let theta_s = ops.theta_apply(&s_j);
    let theta_s_p = ops_p.theta_apply(&s_j);

    Ok(DeltaPhiTerms {
        t_aa: 0.5 * (py_y_p - py_y),
        t_ae: pe_y_p - pe_y,
        t_ee: 0.5 * (pe_e_p - pe_e),
        t_sa: -lambda * s_j.dot(&(&a_p - &a)),
        t_se: -lambda * s_j.dot(&(&b_p - &b)),
        t_ss: 0.5 * lambda * lambda * (s_j.dot(&theta_s_p) - s_j.dot(&theta_s)),
    })
}

/// How support expectations are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TraceMode {
    /// Average over every size-k support.
    Exact,
    /// Average over `n_supports` uniformly drawn supports.
    MonteCarlo { n_supports: usize, seed: u64 },
}

impl TraceMode {
    /// Exact when the enumeration fits the default budget, Monte Carlo
    /// otherwise.
    pub fn auto(p: usize, k: usize, seed: u64) -> Self {
        if binomial(p, k) <= DEFAULT_TRACE_BUDGET {
            TraceMode::Exact
        } else {
            TraceMode::MonteCarlo {
                n_supports: 20_000,
                seed,
            }
        }
    }
}

/// Upper/lower bounds on the three expected traces, evaluated from pairwise
/// Frobenius/spectral/RIP constants `a`, `b`, `delta_lower` and the angle
/// norm of the pair.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TraceBounds {
    pub lead_lower: f64,
    pub bias_sa_abs_upper: f64,
    pub bias_ss_abs_upper: f64,
    pub a: f64,
    pub b: f64,
    pub delta_lower: f64,
    pub theta_norm: f64,
}

/// Expected traces driving the expected objective difference.
#[derive(Debug, Clone, Serialize)]
pub struct ExpectationTraces {
    /// `E_J Tr[D0_J^T (I - P_J) D0_J]` — the leading alignment energy.
    pub lead: f64,
    /// `E_J Tr(I - D_J^+ D0_J)` — signed bias of the sign/coefficient term.
    pub bias_sa: f64,
    /// `E_J Tr(Theta0_J - Theta_J)` — bias of the sign/sign term.
    pub bias_ss: f64,
    pub method: TraceMode,
    /// Standard errors `[lead, bias_sa, bias_ss]` in Monte Carlo mode.
    pub std_errors: Option<[f64; 3]>,
    /// Proven bounds on the traces; `None` when the pairwise RIP constant
    /// reaches 1 and the bounding hypotheses fail.
    pub bounds: Option<TraceBounds>,
}

struct TraceAccumulator {
    n: f64,
    sums: [f64; 3],
    sq: [f64; 3],
}

impl TraceAccumulator {
    fn new() -> Self {
        Self {
            n: 0.0,
            sums: [0.0; 3],
            sq: [0.0; 3],
        }
    }

    fn push(&mut self, v: [f64; 3]) {
        self.n += 1.0;
        for i in 0..3 {
            self.sums[i] += v[i];
            self.sq[i] += v[i] * v[i];
        }
    }

    fn means(&self) -> [f64; 3] {
        [
            self.sums[0] / self.n,
            self.sums[1] / self.n,
            self.sums[2] / self.n,
        ]
    }

    fn std_errors(&self) -> [f64; 3] {
        let mut out = [0.0; 3];
        let means = self.means();
        for i in 0..3 {
            let var = (self.sq[i] / self.n - means[i] * means[i]).max(0.0);
            out[i] = (var / self.n).sqrt();
        }
        out
    }
}

/// Row-major in-place Cholesky; returns false on a nonpositive pivot.
fn factor_small(g: &mut [f64], k: usize) -> bool {
    for i in 0..k {
        for j in 0..=i {
            let mut sum = g[i * k + j];
            for l in 0..j {
                sum -= g[i * k + l] * g[j * k + l];
            }
            if i == j {
                if sum <= 1e-14 {
                    return false;
                }
                g[i * k + i] = sum.sqrt();
            } else {
                g[i * k + j] = sum / g[j * k + j];
            }
        }
    }
    true
}

/// Solves `L L^T y = rhs` in place given the factor from `factor_small`.
fn solve_small(l: &[f64], rhs: &mut [f64], k: usize) {
    for i in 0..k {
        let mut sum = rhs[i];
        for j in 0..i {
            sum -= l[i * k + j] * rhs[j];
        }
        rhs[i] = sum / l[i * k + i];
    }
    for i in (0..k).rev() {
        let mut sum = rhs[i];
        for j in (i + 1)..k {
            sum -= l[j * k + i] * rhs[j];
        }
        rhs[i] = sum / l[i * k + i];
    }
}

/// Trace of the inverse from the Cholesky factor: `||L^{-1}||_F^2`.
fn trace_inverse_small(l: &[f64], k: usize, col: &mut [f64]) -> f64 {
    let mut acc = 0.0;
    for c in 0..k {
        for i in 0..k {
            col[i] = 0.0;
        }
        col[c] = 1.0;
        for i in c..k {
            let mut sum = col[i];
            for j in c..i {
                sum -= l[i * k + j] * col[j];
            }
            col[i] = sum / l[i * k + i];
        }
        for i in c..k {
            acc += col[i] * col[i];
        }
    }
    acc
}

struct TraceWorkspace {
    g: Vec<f64>,
    g0: Vec<f64>,
    h: Vec<f64>,
    y: Vec<f64>,
    col: Vec<f64>,
}

impl TraceWorkspace {
    fn new(k: usize) -> Self {
        Self {
            g: vec![0.0; k * k],
            g0: vec![0.0; k * k],
            h: vec![0.0; k * k],
            y: vec![0.0; k * k],
            col: vec![0.0; k],
        }
    }
}

/// Per-support traces `[lead, bias_sa, bias_ss]` from precomputed full Grams.
fn support_traces(
    support: &[usize],
    gram_d: &DMatrix<f64>,
    gram_d0: &DMatrix<f64>,
    cross: &DMatrix<f64>,
    ws: &mut TraceWorkspace,
) -> Result<[f64; 3]> {
    let k = support.len();
    let mut trace_g0 = 0.0;
    for a in 0..k {
        trace_g0 += gram_d0[(support[a], support[a])];
        for b in 0..k {
            ws.g[a * k + b] = gram_d[(support[a], support[b])];
            ws.g0[a * k + b] = gram_d0[(support[a], support[b])];
            ws.h[a * k + b] = cross[(support[a], support[b])];
        }
    }
    if !factor_small(&mut ws.g, k) {
        return Err(Error::RankDeficientGram {
            support: support.to_vec(),
            smallest_eig: 0.0,
        });
    }
    // Y = Theta_J H_J, solved column by column
    for c in 0..k {
        for i in 0..k {
            ws.col[i] = ws.h[i * k + c];
        }
        solve_small(&ws.g, &mut ws.col[..k], k);
        for i in 0..k {
            ws.y[i * k + c] = ws.col[i];
        }
    }
    let mut tr_theta_h = 0.0;
    let mut tr_ht_theta_h = 0.0;
    for i in 0..k {
        tr_theta_h += ws.y[i * k + i];
        for j in 0..k {
            tr_ht_theta_h += ws.h[i * k + j] * ws.y[i * k + j];
        }
    }
    let tr_theta = trace_inverse_small(&ws.g, k, &mut ws.col);
    if !factor_small(&mut ws.g0, k) {
        return Err(Error::RankDeficientGram {
            support: support.to_vec(),
            smallest_eig: 0.0,
        });
    }
    let tr_theta0 = trace_inverse_small(&ws.g0, k, &mut ws.col);
    Ok([
        trace_g0 - tr_ht_theta_h,
        k as f64 - tr_theta_h,
        tr_theta0 - tr_theta,
    ])
}

/// Exact pairwise constants `(a, b, delta_lower)` for the trace bounds.
fn pairwise_constants(d: &Dictionary, d0: &Dictionary, k: usize) -> (f64, f64, f64) {
    let (op_d, res_d, _) = spectral_profile(d);
    let (op_d0, res_d0, _) = spectral_profile(d0);
    let a = res_d.max(res_d0);
    let b = op_d.max(op_d0);
    let delta = |dict: &Dictionary| -> f64 {
        match rip_constants_with_budget(dict, k, RipMode::Exact, 200_000) {
            Ok((lo, _, _)) => lo,
            // conservative: the coherence bound dominates the exact constant
            Err(_) => rip_constants_with_budget(dict, k, RipMode::CoherenceBound, 0)
                .map(|(lo, _, _)| lo)
                .unwrap_or(1.0),
        }
    };
    (a, b, delta(d).max(delta(d0)))
}

/// Expected traces of the objective-difference decomposition over the
/// uniform support law, with proven bounds evaluated alongside.
pub fn expectation_traces(
    d: &Dictionary,
    d0: &Dictionary,
    k: usize,
    mode: TraceMode,
) -> Result<ExpectationTraces> {
    if d.nrows() != d0.nrows() || d.ncols() != d0.ncols() {
        return Err(Error::InvalidInput("dictionaries must share a shape".into()));
    }
    let p = d.ncols();
    if k == 0 || k > p {
        return Err(Error::InvalidParameter(format!(
            "trace expectation needs 1 <= k <= p, got k={k}"
        )));
    }
    let gram_d = d.gram();
    let gram_d0 = d0.gram();
    let cross = d.entries().tr_mul(d0.entries());
    let mut ws = TraceWorkspace::new(k);
    let mut acc = TraceAccumulator::new();
    let mut first_error: Option<Error> = None;
    match mode {
        TraceMode::Exact => {
            let count = binomial(p, k);
            if count > DEFAULT_TRACE_BUDGET {
                return Err(Error::BudgetExceeded {
                    supports: count,
                    budget: DEFAULT_TRACE_BUDGET,
                });
            }
            for_each_support(p, k, |j_set| {
                if first_error.is_some() {
                    return;
                }
                match support_traces(j_set, &gram_d, &gram_d0, &cross, &mut ws) {
                    Ok(v) => acc.push(v),
                    Err(e) => first_error = Some(e),
                }
            });
        }
        TraceMode::MonteCarlo { n_supports, seed } => {
            for i in 0..n_supports {
                let mut rng = substream(seed, i as u64);
                let j_set = crate::model::draw_support(p, k, &mut rng)?;
                match support_traces(&j_set, &gram_d, &gram_d0, &cross, &mut ws) {
                    Ok(v) => acc.push(v),
                    Err(e) => {
                        first_error = Some(e);
                        break;
                    }
                }
            }
        }
    }
    if let Some(e) = first_error {
        return Err(e);
    }
    let means = acc.means();
    let std_errors = match mode {
        TraceMode::Exact => None,
        TraceMode::MonteCarlo { .. } => Some(acc.std_errors()),
    };

    let (a, b, delta_lower) = pairwise_constants(d, d0, k);
    let bounds = if delta_lower < 1.0 {
        let theta_norm = decompose(d0, d)?.theta_norm();
        let kf = k as f64;
        let pf = p as f64;
        let ratio = kf / pf;
        Some(TraceBounds {
            lead_lower: ratio * theta_norm * theta_norm * (1.0 - ratio * b * b / (1.0 - delta_lower)),
            bias_sa_abs_upper: ratio * theta_norm * theta_norm / 2.0
                + ratio * ratio * a * b / (1.0 - delta_lower) * theta_norm,
            bias_ss_abs_upper: ratio * ratio * 4.0 * a * b
                / ((1.0 - delta_lower) * (1.0 - delta_lower))
                * theta_norm,
            a,
            b,
            delta_lower,
            theta_norm,
        })
    } else {
        None
    };

    Ok(ExpectationTraces {
        lead: means[0],
        bias_sa: means[1],
        bias_ss: means[2],
        method: mode,
        std_errors,
        bounds,
    })
}

/// Exact expectation of the objective difference
/// `E[phi_x(d|s) - phi_x(d0|s)]` under the signal model:
/// `(E[a^2]/2) lead - lambda E|a| bias_sa + (lambda^2/2) bias_ss`.
/// The noise/noise term has zero expectation because same-size projectors
/// share a trace.
pub fn expected_delta_phi(
    d: &Dictionary,
    d0: &Dictionary,
    model: &CoefficientModel,
    lambda: f64,
) -> Result<f64> {
    let traces = expectation_traces(d, d0, model.k, TraceMode::auto(d.ncols(), model.k, 0))?;
    Ok(expected_delta_phi_from_traces(&traces, model, lambda))
}

/// Same combination from precomputed traces.
pub fn expected_delta_phi_from_traces(
    traces: &ExpectationTraces,
    model: &CoefficientModel,
    lambda: f64,
) -> f64 {
    0.5 * model.e_alpha_sq() * traces.lead - lambda * model.e_abs_alpha() * traces.bias_sa
        + 0.5 * lambda * lambda * traces.bias_ss
}

/// Lower bound on the expected objective difference for one pair `(d, d0)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FixedPairBound {
    pub bound: f64,
    /// Radius offset below which the bound is negative.
    pub r0: f64,
    /// Whether `(k/p) B^2/(1-delta) + lambda_bar kappa^2 <= 1/2` holds.
    pub assumptions_ok: bool,
    pub frobenius: f64,
}

/// Fixed-pair lower bound with the sphere-proof instantiation
/// `B = |||d0|||_2 + 1`, `A = ||d0^T d0 - I||_F + 2 B r`, `delta = 1/2`:
/// `bound = (E[a^2]/4) (k/p) ||d-d0||_F (||d-d0||_F - r0)`.
pub fn lower_bound_fixed_pair(
    d: &Dictionary,
    d0: &Dictionary,
    model: &CoefficientModel,
    lambda_bar: f64,
) -> Result<FixedPairBound> {
    if d.nrows() != d0.nrows() || d.ncols() != d0.ncols() {
        return Err(Error::InvalidInput("dictionaries must share a shape".into()));
    }
    let r = d.frobenius_distance(d0);
    let (op_d0, res_d0, _) = spectral_profile(d0);
    let b = op_d0 + 1.0;
    let a = res_d0 + 2.0 * b * r;
    let delta = 0.5;
    let kf = model.k as f64;
    let pf = d.ncols() as f64;
    let kappa_sq = model.kappa_alpha() * model.kappa_alpha();
    let assumptions_ok = kf / pf * b * b / (1.0 - delta) + lambda_bar * kappa_sq <= 0.5;
    let r0 = (1.0 + 2.0 * lambda_bar) * lambda_bar * kappa_sq * (kf / pf) * 2.0 * a * b
        / ((1.0 - delta) * (1.0 - delta));
    let bound = 0.25 * model.e_alpha_sq() * (kf / pf) * r * (r - r0);
    Ok(FixedPairBound {
        bound,
        r0,
        assumptions_ok,
        frobenius: r,
    })
}

/// Uniform lower bound over the radius-`r` sphere around `d0`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct UniformBound {
    /// `(E[a^2]/8) (k/p) r (r - r_min)`.
    pub bound: f64,
    pub r_min: f64,
    pub c_min: f64,
    pub lambda_ok: bool,
    pub radius_ok: bool,
    pub rip_ok: bool,
    pub k_ok: bool,
    /// All preconditions hold and the bound is certified.
    pub valid: bool,
}

/// Uniform lower bound `(E[a^2]/8)(k/p) r (r - r_min(lambda_bar))` valid for
/// every unit-norm dictionary at Frobenius distance `r <= 0.15` from `d0`,
/// under `lambda_bar <= 1/4`, a lower RIP constant at most 1/4, and
/// `k <= p / (16 (|||d0|||_2 + 1)^2)`.
pub fn uniform_lower_bound(
    d0: &Dictionary,
    model: &CoefficientModel,
    lambda_bar: f64,
    r: f64,
) -> Result<UniformBound> {
    let (op_d0, res_d0, _) = spectral_profile(d0);
    let b = op_d0 + 1.0;
    let kf = model.k as f64;
    let pf = d0.ncols() as f64;
    let kappa_sq = model.kappa_alpha() * model.kappa_alpha();
    let c_min = 24.0 * kappa_sq * b * (kf / pf) * res_d0;
    let r_min = 2.0 / 3.0 * c_min * lambda_bar * (1.0 + 2.0 * lambda_bar);
    let bound = model.e_alpha_sq() / 8.0 * (kf / pf) * r * (r - r_min);

    let lambda_ok = lambda_bar <= 0.25;
    let radius_ok = r > 0.0 && r <= 0.15;
    let delta_lower = match rip_constants_with_budget(d0, model.k, RipMode::Exact, 200_000) {
        Ok((lo, _, _)) => lo,
        Err(_) => {
            rip_constants_with_budget(d0, model.k, RipMode::CoherenceBound, 0)
                .map(|(lo, _, _)| lo)
                .unwrap_or(1.0)
        }
    };
    let rip_ok = delta_lower <= 0.25;
    let k_ok = kf <= pf / (16.0 * b * b);
    Ok(UniformBound {
        bound,
        r_min,
        c_min,
        lambda_ok,
        radius_ok,
        rip_ok,
        k_ok,
        valid: lambda_ok && radius_ok && rip_ok && k_ok,
    })
}

/// Lipschitz constant of the non-quadratic part of the objective difference
/// on the radius-`r` ball, and the uniform deviation bound at sample size `n`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DeviationConstants {
    pub lipschitz: f64,
    pub eta_n: f64,
}

/// `L = (1/s)(M_e + lambda sqrt(k)/s)(2 sqrt(1+delta_upper) M_a + M_e + lambda sqrt(k)/s)`
/// with `s = sqrt(1 - delta_lower(d0)) - r`, and
/// `eta_n = r (L + M_a^2 r)(sqrt(2x/n) + 12 sqrt(pi m p / n))`.
pub fn deviation_constants(
    d0: &Dictionary,
    model: &CoefficientModel,
    lambda: f64,
    r: f64,
    n: usize,
    x: f64,
) -> Result<DeviationConstants> {
    let (delta_lower, delta_upper) =
        match rip_constants_with_budget(d0, model.k, RipMode::Exact, 200_000) {
            Ok((lo, hi, _)) => (lo, hi),
            Err(_) => {
                let (lo, hi, _) = rip_constants_with_budget(d0, model.k, RipMode::CoherenceBound, 0)?;
                (lo.min(1.0), hi)
            }
        };
    let s = (1.0 - delta_lower).max(0.0).sqrt() - r;
    if s <= 0.0 {
        return Err(Error::InfeasibleRadius {
            radius: r,
            reason: format!(
                "radius must stay below sqrt(1 - delta_lower) = {:.6}",
                (1.0 - delta_lower).max(0.0).sqrt()
            ),
        });
    }
    let m_eps = model.m_eps();
    let m_alpha = model.m_alpha();
    let lk = lambda * (model.k as f64).sqrt() / s;
    let lipschitz = (m_eps + lk) / s * (2.0 * (1.0 + delta_upper).sqrt() * m_alpha + m_eps + lk);
    let m = d0.nrows() as f64;
    let p = d0.ncols() as f64;
    let n_f = n as f64;
    let eta_n = r
        * (lipschitz + m_alpha * m_alpha * r)
        * ((2.0 * x / n_f).sqrt() + 12.0 * (std::f64::consts::PI * m * p / n_f).sqrt());
    Ok(DeviationConstants { lipschitz, eta_n })
}
