//! Closed-form limits of the misclassification rates.
//!
//! Every rule's error rate concentrates, as p and the sample sizes grow
//! proportionally, around `1 - [Phi(T/psi) + Phi(Tt/psit)] / 2`: a drift
//! term per class direction divided by a spread term. The drift depends
//! only on the population parameters; the spread additionally picks up the
//! dimension ratios and the fourth moment of the noise. This module
//! evaluates both for the optimal, sample, generalized, and sample-split
//! rules at the actual finite (p, n1, n2); the limit statements replace
//! those plug-ins with their limits, and the plug-in is the only
//! computable stand-in.
//!
//! All matrix functionals reduce to traces and diagonals of whitened
//! products, computed through Cholesky solves; nothing here inverts a
//! matrix explicitly.

use nalgebra::{DMatrix, DVector};
use statrs::function::erf::erfc;

use crate::la::{cholesky, quad_form, sqrt_spd, CholFactor, SpdMatrix};
use crate::qda::CorrectionConstants;
use crate::{Error, Result};

/// Standard normal CDF.
fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Trace moments of the whitened covariance pair, plus the dimension ratios
/// and the standardized fourth moment they are always consumed with.
///
/// With A = Sigma1 Sigma2^{-1} and B its symmetrized version
/// Sigma1^{1/2} Sigma2^{-1} Sigma1^{1/2}:
/// m1 = tr(A)/p, m2 = sum_i B_ii^2 / p, m5 = tr(A^2)/p. m3, m4, m6 are the
/// same with the class roles swapped. `kurtosis` is E[X^4] of the
/// standardized component law (the m4 of the variance formulas).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentSet {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
    pub m5: f64,
    pub m6: f64,
    pub c1: f64,
    pub c2: f64,
    pub kurtosis: f64,
}

/// Drift terms of the generalized and optimal rules.
///
/// t2 collects the covariance mismatch, t3 the mean separation, both scaled
/// by 1/sqrt(p); the tilde versions swap the class roles. Both are <= 0,
/// vanishing exactly when the corresponding parameters coincide, so the
/// combined drifts t and tt are >= 0 and larger means easier.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriftTerms {
    pub t2: f64,
    pub t3: f64,
    pub t2t: f64,
    pub t3t: f64,
    pub t: f64,
    pub tt: f64,
}

/// Which classification rule a rate limit describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RuleKind {
    Optimal,
    Sample,
    Generalized,
    DncSamples(usize),
}

/// Asymptotic misclassification rate of one rule.
///
/// `psi` and `psit` are standard deviations. When either falls to zero the
/// ratio T/psi loses meaning; `degenerate` is set (threshold: variance at or
/// below 1e-12) and `rate` holds the limiting step value of that side
/// instead of pretending the formula applied.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateLimit {
    pub rule: RuleKind,
    pub t: f64,
    pub tt: f64,
    pub psi: f64,
    pub psit: f64,
    pub rate: f64,
    pub degenerate: bool,
}

/// Drift and variance of the sample rule, which has no clean split into a
/// shared drift and a rule-specific spread: the correction constants enter
/// both.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleRuleTerms {
    pub t: f64,
    pub tt: f64,
    pub psi2: f64,
    pub psit2: f64,
}

/// How far apart the two populations are, on the scale that decides the
/// regime.
///
/// `s` counts eigenvalues of Sigma1 Sigma2^{-1} away from 1 (tolerance
/// 1e-10), `s_eps` those further than `eps`; the zetas divide by sqrt(p),
/// the order at which the rate limit transitions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeparationDiagnostics {
    pub zeta1: f64,
    pub zeta2: f64,
    pub zeta_eps: f64,
    pub eps: f64,
    pub s: usize,
    pub s_eps: usize,
}

/// Outcome of the regime classifier.
///
/// Separable: some diagnostic diverges and the rate limit is 0 for both the
/// generalized and optimal rules. Degenerate: the populations coincide on
/// the relevant scale and every rule is random guessing. Hard: the rates
/// converge to constants in (0, 1/2) and the generalized rule pays a real
/// premium over the optimal one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    EasySeparable,
    EasyDegenerate,
    Hard,
}

fn check_pair(sigma1: &SpdMatrix, sigma2: &SpdMatrix, p: usize) -> Result<()> {
    if sigma1.dim() != p {
        return Err(Error::DimMismatch {
            expected: p,
            got: sigma1.dim(),
        });
    }
    if sigma2.dim() != p {
        return Err(Error::DimMismatch {
            expected: p,
            got: sigma2.dim(),
        });
    }
    Ok(())
}

/// tr(Sigma_num Sigma_den^{-1}) via the factor of the denominator.
fn trace_ratio(num: &SpdMatrix, den: &CholFactor) -> f64 {
    den.solve_mat(num.as_matrix()).trace()
}

/// Mean squared diagonal of Sigma_num^{1/2} Sigma_den^{-1} Sigma_num^{1/2}.
///
/// With W = L^{-1} G (G the symmetric root of the numerator, L the factor
/// of the denominator), the matrix is W^T W, whose diagonal is the squared
/// column norms of W.
fn mean_sq_whitened_diagonal(root_num: &DMatrix<f64>, den: &CholFactor) -> f64 {
    let w = den.solve_lower_mat(root_num);
    let p = w.ncols();
    (0..p)
        .map(|j| w.column(j).norm_squared().powi(2))
        .sum::<f64>()
        / p as f64
}

/// Mean of tr((Sigma_num Sigma_den^{-1})^2): the product A = L^{-1} * num
/// applied twice, using tr(A^2) = sum_ij A_ij A_ji.
fn mean_trace_square(num: &SpdMatrix, den: &CholFactor) -> f64 {
    let a = den.solve_mat(num.as_matrix());
    let p = a.nrows();
    let mut acc = 0.0;
    for i in 0..p {
        for j in 0..p {
            acc += a[(i, j)] * a[(j, i)];
        }
    }
    acc / p as f64
}

/// Evaluates the six trace moments at the actual (p, n1, n2).
///
/// `m4` is the fourth moment of the standardized component law: 3 for
/// normal noise, 3 + 6/(df-4) for standardized t.
pub fn moment_set(
    sigma1: &SpdMatrix,
    sigma2: &SpdMatrix,
    p: usize,
    n1: usize,
    n2: usize,
    m4: f64,
) -> Result<MomentSet> {
    check_pair(sigma1, sigma2, p)?;
    let c1 = p as f64 / n1 as f64;
    let c2 = p as f64 / n2 as f64;
    for c in [c1, c2] {
        if !(c > 0.0 && c < 1.0) {
            return Err(Error::RatioOutOfRange { c });
        }
    }
    if !(m4 >= 1.0) {
        return Err(Error::NonFinite);
    }

    let chol1 = cholesky(sigma1)?;
    let chol2 = cholesky(sigma2)?;
    let root1 = sqrt_spd(sigma1)?;
    let root2 = sqrt_spd(sigma2)?;
    let pf = p as f64;

    Ok(MomentSet {
        m1: trace_ratio(sigma1, &chol2) / pf,
        m2: mean_sq_whitened_diagonal(root1.as_matrix(), &chol2),
        m3: trace_ratio(sigma2, &chol1) / pf,
        m4: mean_sq_whitened_diagonal(root2.as_matrix(), &chol1),
        m5: mean_trace_square(sigma1, &chol2),
        m6: mean_trace_square(sigma2, &chol1),
        c1,
        c2,
        kurtosis: m4,
    })
}

/// Evaluates the drift terms at the actual p.
pub fn drift_terms(
    mu1: &DVector<f64>,
    mu2: &DVector<f64>,
    sigma1: &SpdMatrix,
    sigma2: &SpdMatrix,
    p: usize,
) -> Result<DriftTerms> {
    check_pair(sigma1, sigma2, p)?;
    if mu1.len() != p || mu2.len() != p {
        return Err(Error::DimMismatch {
            expected: p,
            got: if mu1.len() != p { mu1.len() } else { mu2.len() },
        });
    }
    let chol1 = cholesky(sigma1)?;
    let chol2 = cholesky(sigma2)?;
    let root_p = (p as f64).sqrt();
    let diff = mu1 - mu2;

    let log_ratio = chol1.log_det() - chol2.log_det();
    let t2 = ((p as f64 - trace_ratio(sigma1, &chol2)) + log_ratio) / root_p;
    let t2t = ((p as f64 - trace_ratio(sigma2, &chol1)) - log_ratio) / root_p;
    let t3 = -quad_form(&diff, &chol2)? / root_p;
    let t3t = -quad_form(&diff, &chol1)? / root_p;

    Ok(DriftTerms {
        t2,
        t3,
        t2t,
        t3t,
        t: -t2 - t3,
        tt: -t2t - t3t,
    })
}

fn check_ratios(m: &MomentSet) -> Result<()> {
    for c in [m.c1, m.c2] {
        if !(c > 0.0 && c < 1.0) {
            return Err(Error::RatioOutOfRange { c });
        }
    }
    Ok(())
}

/// Spread of the generalized rule: `(psi^2, psit^2)`.
pub fn psi_generalized(m: &MomentSet) -> Result<(f64, f64)> {
    check_ratios(m)?;
    let psi2 = (m.kurtosis - 3.0) * (1.0 - 2.0 * m.m1 + m.m2)
        + 2.0 * (1.0 / (1.0 - m.c1) - 2.0 * m.m1 + m.m5 + m.c2 / (1.0 - m.c2) * m.m1 * m.m1);
    let psit2 = (m.kurtosis - 3.0) * (1.0 - 2.0 * m.m3 + m.m4)
        + 2.0 * (1.0 / (1.0 - m.c2) - 2.0 * m.m3 + m.m6 + m.c1 / (1.0 - m.c1) * m.m3 * m.m3);
    Ok((psi2, psit2))
}

/// Spread of the optimal rule: `(psi0^2, psit0^2)`.
///
/// Identical to the generalized spread with the two ratio terms dropped;
/// the gap is exactly `2(c1/(1-c1) + c2/(1-c2) M1^2)`, the price of
/// estimating the covariances.
pub fn psi_optimal(m: &MomentSet) -> Result<(f64, f64)> {
    check_ratios(m)?;
    let psi02 = (m.kurtosis - 3.0) * (1.0 - 2.0 * m.m1 + m.m2) + 2.0 * (1.0 - 2.0 * m.m1 + m.m5);
    let psit02 = (m.kurtosis - 3.0) * (1.0 - 2.0 * m.m3 + m.m4) + 2.0 * (1.0 - 2.0 * m.m3 + m.m6);
    Ok((psi02, psit02))
}

/// Drift and spread of the plain sample rule.
///
/// The uncorrected rule keeps the correction constants inside its limit, so
/// this takes the fitted constants and the population parameters together.
/// Plug-in convention: s0' = s0n^3 stands in for 1/(1-c1)^3, and the drift
/// is evaluated at the actual p.
pub fn psi_sample(
    m: &MomentSet,
    constants: &CorrectionConstants,
    mu1: &DVector<f64>,
    mu2: &DVector<f64>,
    sigma1: &SpdMatrix,
    sigma2: &SpdMatrix,
    p: usize,
) -> Result<SampleRuleTerms> {
    check_ratios(m)?;
    check_pair(sigma1, sigma2, p)?;
    let chol1 = cholesky(sigma1)?;
    let chol2 = cholesky(sigma2)?;
    let root_p = (p as f64).sqrt();
    let diff = mu1 - mu2;
    let (s0, m0) = (constants.s0n, constants.m0n);

    let log_ratio = chol1.log_det() - chol2.log_det();
    let t = -(s0 * p as f64 - m0 * trace_ratio(sigma1, &chol2)) / root_p - log_ratio / root_p
        + root_p * (constants.l2n - constants.l1n)
        + m0 / root_p * quad_form(&diff, &chol2)?;
    let tt = -(m0 * p as f64 - s0 * trace_ratio(sigma2, &chol1)) / root_p
        + log_ratio / root_p
        + root_p * (constants.l1n - constants.l2n)
        + s0 / root_p * quad_form(&diff, &chol1)?;

    let psi2 = (m.kurtosis - 3.0) * (s0 * s0 - 2.0 * s0 * m0 * m.m1 + m0 * m0 * m.m2)
        + 2.0
            * (s0.powi(3) - 2.0 * s0 * m0 * m.m1
                + m0 * m0 * (m.m5 + m.c2 / (1.0 - m.c2) * m.m1 * m.m1));
    let psit2 = (m.kurtosis - 3.0) * (m0 * m0 - 2.0 * s0 * m0 * m.m3 + s0 * s0 * m.m4)
        + 2.0
            * (m0.powi(3) - 2.0 * s0 * m0 * m.m3
                + s0 * s0 * (m.m6 + m.c1 / (1.0 - m.c1) * m.m3 * m.m3));

    Ok(SampleRuleTerms { t, tt, psi2, psit2 })
}

/// Spread of the weighted sample-splitting rule at H groups:
/// `(psiD^2, psitD^2)`.
///
/// Splitting into H groups multiplies each group's dimension ratio by H and
/// averaging the group scores divides the extra spread by H, which still
/// loses: the ratio terms grow in H, so the spread exceeds the plain
/// generalized one for every H > 1. The drift is unchanged.
pub fn psi_dnc_samples(m: &MomentSet, h: usize) -> Result<(f64, f64)> {
    check_ratios(m)?;
    let c1h = m.c1 * h as f64;
    let c2h = m.c2 * h as f64;
    if h == 0 || c1h >= 1.0 || c2h >= 1.0 {
        return Err(Error::GroupsTooSmall { c1h, c2h });
    }
    let (psi02, psit02) = psi_optimal(m)?;
    let hf = h as f64;
    let psi_d2 = psi02 + 2.0 / hf * (c1h / (1.0 - c1h) + c2h / (1.0 - c2h) * m.m1 * m.m1);
    let psit_d2 = psit02 + 2.0 / hf * (c2h / (1.0 - c2h) + c1h / (1.0 - c1h) * m.m3 * m.m3);
    Ok((psi_d2, psit_d2))
}

const DEGENERATE_VARIANCE: f64 = 1e-12;

/// One side's contribution Phi(t/psi), stepping to the limit when the
/// variance degenerates.
fn side(t: f64, psi2: f64) -> (f64, bool) {
    if psi2 <= DEGENERATE_VARIANCE {
        let limit = if t > 0.0 {
            1.0
        } else if t < 0.0 {
            0.0
        } else {
            0.5
        };
        (limit, true)
    } else {
        (normal_cdf(t / psi2.sqrt()), false)
    }
}

/// Combines drifts and variances into the limiting misclassification rate.
pub fn rate_limit(rule: RuleKind, t: f64, tt: f64, psi2: f64, psit2: f64) -> Result<RateLimit> {
    for v in [psi2, psit2] {
        if v < -DEGENERATE_VARIANCE {
            return Err(Error::NegativeVariance { value: v });
        }
    }
    let (side1, degenerate1) = side(t, psi2);
    let (side2, degenerate2) = side(tt, psit2);
    Ok(RateLimit {
        rule,
        t,
        tt,
        psi: psi2.max(0.0).sqrt(),
        psit: psit2.max(0.0).sqrt(),
        rate: 1.0 - 0.5 * (side1 + side2),
        degenerate: degenerate1 || degenerate2,
    })
}

/// Evaluates the separation diagnostics at the actual p.
///
/// The eigenvalues of Sigma1 Sigma2^{-1} are computed from the similar
/// symmetric matrix L2^{-1} Sigma1 L2^{-T}, which shares its spectrum.
pub fn separation_diagnostics(
    mu1: &DVector<f64>,
    mu2: &DVector<f64>,
    sigma1: &SpdMatrix,
    sigma2: &SpdMatrix,
    p: usize,
    eps: f64,
) -> Result<SeparationDiagnostics> {
    check_pair(sigma1, sigma2, p)?;
    if !(eps > 0.0) {
        return Err(Error::NonFinite);
    }
    let chol2 = cholesky(sigma2)?;
    let half = chol2.solve_lower_mat(sigma1.as_matrix());
    let whitened = chol2.solve_lower_mat(&half.transpose());
    // Exactly symmetric by construction up to rounding; fold the halves.
    let symmetric = (&whitened + whitened.transpose()) * 0.5;
    let eigen = symmetric.symmetric_eigen();

    let s = eigen
        .eigenvalues
        .iter()
        .filter(|l| (*l - 1.0).abs() > 1e-10)
        .count();
    let s_eps = eigen
        .eigenvalues
        .iter()
        .filter(|l| (*l - 1.0).abs() > eps)
        .count();
    let root_p = (p as f64).sqrt();
    Ok(SeparationDiagnostics {
        zeta1: (mu1 - mu2).norm_squared() / root_p,
        zeta2: s as f64 / root_p,
        zeta_eps: s_eps as f64 / root_p,
        eps,
        s,
        s_eps,
    })
}

/// Buckets the diagnostics into a regime.
///
/// The regimes are limit statements (a diagnostic diverges or vanishes),
/// unobservable at finite p; `thresholds = (low, high)` draws the explicit
/// line, defaulting to (0.1, 10).
pub fn classify_regime(diag: &SeparationDiagnostics, thresholds: (f64, f64)) -> Regime {
    let (low, high) = thresholds;
    if diag.zeta1 > high || diag.zeta_eps > high {
        Regime::EasySeparable
    } else if diag.zeta1 < low && diag.zeta2 < low {
        Regime::EasyDegenerate
    } else {
        Regime::Hard
    }
}

/// Default regime thresholds.
pub const DEFAULT_THRESHOLDS: (f64, f64) = (0.1, 10.0);

/// Default eigenvalue deviation for the s(eps) count.
pub const DEFAULT_EPS: f64 = 0.05;
