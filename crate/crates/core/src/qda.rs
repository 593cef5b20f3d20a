//! The three two-class quadratic discriminant rules.
//!
//! All rules score a point z with a difference of per-class quadratic forms
//! plus log-determinant penalties and classify to class 1 exactly when the
//! score is strictly negative (ties go to class 2; they have measure zero but
//! must be deterministic):
//!
//! * **optimal** - evaluated with the true population parameters; the
//!   benchmark every fitted rule is compared against.
//! * **sample** - the naive plug-in: population means and covariances
//!   replaced by their sample estimates. Consistent for fixed p, badly biased
//!   when p grows with n.
//! * **generalized** - the plug-in with its quadratic terms rescaled by
//!   1/s0n, 1/m0n and its log-determinants recentered by p*l_in. The
//!   correction constants depend only on (p, n1, n2) and remove the
//!   moderate-dimension bias of the sample rule.
//!
//! The sample rule is exactly the generalized rule with constants forced to
//! (1, 1, 0, 0); both variants share the same fitted moments, so a fitted
//! model can be re-viewed under the other rule without refitting.
//!
//! Constants are computed at fit time and stored with the model: a serialized
//! model must classify identically after reload, so nothing is recomputed at
//! prediction time.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::la::{
    cholesky, quad_form, sample_covariance, sample_mean, CholFactor, DataMatrix, SpdMatrix,
};

/// Component law of the standardized noise driving each observation.
///
/// Observations are generated as mu + Sigma^{1/2} x0 where x0 has i.i.d.
/// components with mean 0 and variance 1; the fourth moment of that component
/// law enters every variance formula downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Noise {
    /// Standard normal components; fourth moment 3.
    StandardNormal,
    /// Student t with df >= 5 degrees of freedom, divided by
    /// sqrt(df/(df-2)) so each component has unit variance.
    StandardizedT { df: u32 },
}

impl Noise {
    /// Standardized t noise; df below 5 is rejected because the fourth
    /// moment must be finite.
    pub fn standardized_t(df: u32) -> Result<Self> {
        if df < 5 {
            return Err(Error::DfTooSmall { df });
        }
        Ok(Self::StandardizedT { df })
    }

    /// Fourth moment of the standardized component law: 3 for the normal,
    /// 3 + 6/(df - 4) for the standardized t.
    pub fn m4(&self) -> f64 {
        match self {
            Self::StandardNormal => 3.0,
            Self::StandardizedT { df } => 3.0 + 6.0 / (*df as f64 - 4.0),
        }
    }
}

/// A class's generative truth: mean vector, SPD covariance, component law.
#[derive(Debug, Clone)]
pub struct PopulationSpec {
    pub mu: DVector<f64>,
    pub sigma: SpdMatrix,
    pub noise: Noise,
}

impl PopulationSpec {
    pub fn new(mu: DVector<f64>, sigma: SpdMatrix, noise: Noise) -> Result<Self> {
        if mu.len() != sigma.dim() {
            return Err(Error::DimMismatch {
                expected: sigma.dim(),
                got: mu.len(),
            });
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { mu, sigma, noise })
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }
}

/// Which rule a fitted model evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Sample,
    Generalized,
}

/// Two-valued class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassLabel {
    Class1,
    Class2,
}

impl ClassLabel {
    /// 1 or 2, for human-facing output.
    pub fn as_u8(self) -> u8 {
        match self {
            Self::Class1 => 1,
            Self::Class2 => 2,
        }
    }
}

/// The four dimension-correction constants, exact closed forms in (p, n1, n2):
///
/// * s0n = 1/(1 - p/n1), m0n = 1/(1 - p/n2) - rescale the quadratic terms;
/// * l_in = ((p/n_i - 1)/(p/n_i)) * log(1 - p/n_i) - 1 - recenter the
///   log-determinants; always in (-1, 0) for p/n_i in (0, 1).
///
/// All four tend to the classical values (1, 1, 0, 0) as p/n -> 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionConstants {
    pub s0n: f64,
    pub m0n: f64,
    pub l1n: f64,
    pub l2n: f64,
}

/// Evaluates the correction constants.
///
/// Requires 0 < p < min(n1, n2) - 1; outside that range the sample
/// covariances stop being invertible and none of the corrections are defined.
pub fn correction_constants(p: usize, n1: usize, n2: usize) -> Result<CorrectionConstants> {
    let limit = n1.min(n2) as isize - 1;
    if p == 0 || (p as isize) >= limit {
        return Err(Error::ModerateDimension { p, limit });
    }
    // n/(n-p) and (n-p)/n are exact in integers; going through p/n first
    // would leak a rounding ulp into 1 - c.
    let centering = |p: usize, n: usize| {
        let c = p as f64 / n as f64;
        ((c - 1.0) / c) * ((n - p) as f64 / n as f64).ln() - 1.0
    };
    Ok(CorrectionConstants {
        s0n: n1 as f64 / (n1 - p) as f64,
        m0n: n2 as f64 / (n2 - p) as f64,
        l1n: centering(p, n1),
        l2n: centering(p, n2),
    })
}

impl CorrectionConstants {
    /// The classical values the sample rule uses implicitly.
    pub fn classical() -> Self {
        Self {
            s0n: 1.0,
            m0n: 1.0,
            l1n: 0.0,
            l2n: 0.0,
        }
    }
}

/// A fitted two-class quadratic rule: per-class sample means, covariance
/// Cholesky factors with log-determinants, sample sizes, the correction
/// constants, and which variant the model evaluates.
///
/// Immutable after fitting; scoring is lock-free and safe to run from many
/// threads at once.
#[derive(Debug, Clone)]
pub struct FittedQda {
    p: usize,
    n1: usize,
    n2: usize,
    mean1: DVector<f64>,
    mean2: DVector<f64>,
    chol1: CholFactor,
    chol2: CholFactor,
    constants: CorrectionConstants,
    variant: Variant,
}

/// Fits the rule: sample means and covariances per class, Cholesky factors,
/// and the correction constants at (p, n1, n2).
///
/// Deterministic function of its inputs. A covariance that cannot be
/// factored is reported with the offending class, which almost always means
/// that class has n <= p + 1 observations.
pub fn fit(train1: &DataMatrix, train2: &DataMatrix, variant: Variant) -> Result<FittedQda> {
    let p = train1.dim();
    if train2.dim() != p {
        return Err(Error::DimMismatch {
            expected: p,
            got: train2.dim(),
        });
    }
    let (n1, n2) = (train1.count(), train2.count());
    let constants = correction_constants(p, n1, n2)?;

    let mean1 = sample_mean(train1)?;
    let mean2 = sample_mean(train2)?;
    let chol1 = cholesky(&sample_covariance(train1)?).map_err(|e| wrap_class(1, e))?;
    let chol2 = cholesky(&sample_covariance(train2)?).map_err(|e| wrap_class(2, e))?;

    Ok(FittedQda {
        p,
        n1,
        n2,
        mean1,
        mean2,
        chol1,
        chol2,
        constants,
        variant,
    })
}

fn wrap_class(class: u8, e: Error) -> Error {
    match e {
        Error::NotPositiveDefinite { pivot } => Error::ClassCovarianceSingular { class, pivot },
        other => other,
    }
}

impl FittedQda {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn constants(&self) -> CorrectionConstants {
        self.constants
    }

    pub fn mean1(&self) -> &DVector<f64> {
        &self.mean1
    }

    pub fn mean2(&self) -> &DVector<f64> {
        &self.mean2
    }

    pub fn chol1(&self) -> &CholFactor {
        &self.chol1
    }

    pub fn chol2(&self) -> &CholFactor {
        &self.chol2
    }

    /// The same fitted moments viewed under another variant. No refit: the
    /// two rules differ only in the constants applied at scoring time.
    pub fn to_variant(&self, variant: Variant) -> Self {
        let mut m = self.clone();
        m.variant = variant;
        m
    }

    /// Constants as actually applied by `discriminant` for this variant.
    fn effective_constants(&self) -> CorrectionConstants {
        match self.variant {
            Variant::Sample => CorrectionConstants::classical(),
            Variant::Generalized => self.constants,
        }
    }

    /// The score
    /// `[D1(z)/s0n + log|S1| - p*l1n] - [D2(z)/m0n + log|S2| - p*l2n]`
    /// with `D_i(z) = (z - mean_i)' S_i^{-1} (z - mean_i)` computed through
    /// triangular solves. The sample variant applies (1, 1, 0, 0) instead of
    /// the stored constants.
    pub fn discriminant(&self, z: &DVector<f64>) -> Result<f64> {
        if z.len() != self.p {
            return Err(Error::DimMismatch {
                expected: self.p,
                got: z.len(),
            });
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let k = self.effective_constants();
        let d1 = quad_form(&(z - &self.mean1), &self.chol1)?;
        let d2 = quad_form(&(z - &self.mean2), &self.chol2)?;
        let p = self.p as f64;
        let side1 = d1 / k.s0n + self.chol1.log_det() - p * k.l1n;
        let side2 = d2 / k.m0n + self.chol2.log_det() - p * k.l2n;
        Ok(side1 - side2)
    }

    /// Class 1 iff the discriminant is strictly negative; a zero score goes
    /// to class 2.
    pub fn classify(&self, z: &DVector<f64>) -> Result<ClassLabel> {
        Ok(label_from_score(self.discriminant(z)?))
    }
}

pub(crate) fn label_from_score(delta: f64) -> ClassLabel {
    if delta < 0.0 {
        ClassLabel::Class1
    } else {
        ClassLabel::Class2
    }
}

/// The optimal rule prepared for repeated scoring: true means plus Cholesky
/// factors of the true covariances.
#[derive(Debug, Clone)]
pub struct OptimalQda {
    mu1: DVector<f64>,
    mu2: DVector<f64>,
    chol1: CholFactor,
    chol2: CholFactor,
}

impl OptimalQda {
    pub fn new(pop1: &PopulationSpec, pop2: &PopulationSpec) -> Result<Self> {
        if pop1.dim() != pop2.dim() {
            return Err(Error::DimMismatch {
                expected: pop1.dim(),
                got: pop2.dim(),
            });
        }
        Ok(Self {
            mu1: pop1.mu.clone(),
            mu2: pop2.mu.clone(),
            chol1: cholesky(&pop1.sigma)?,
            chol2: cholesky(&pop2.sigma)?,
        })
    }

    pub fn from_parameters(
        mu1: &DVector<f64>,
        mu2: &DVector<f64>,
        sigma1: &SpdMatrix,
        sigma2: &SpdMatrix,
    ) -> Result<Self> {
        if mu1.len() != sigma1.dim() || mu2.len() != sigma2.dim() || sigma1.dim() != sigma2.dim() {
            return Err(Error::DimMismatch {
                expected: sigma1.dim(),
                got: sigma1.dim().min(mu1.len()).min(mu2.len()).min(sigma2.dim()),
            });
        }
        Ok(Self {
            mu1: mu1.clone(),
            mu2: mu2.clone(),
            chol1: cholesky(sigma1)?,
            chol2: cholesky(sigma2)?,
        })
    }

    /// `[d1(z) + log|Sigma1|] - [d2(z) + log|Sigma2|]` with true parameters.
    pub fn discriminant(&self, z: &DVector<f64>) -> Result<f64> {
        if z.len() != self.mu1.len() {
            return Err(Error::DimMismatch {
                expected: self.mu1.len(),
                got: z.len(),
            });
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let d1 = quad_form(&(z - &self.mu1), &self.chol1)?;
        let d2 = quad_form(&(z - &self.mu2), &self.chol2)?;
        Ok(d1 + self.chol1.log_det() - (d2 + self.chol2.log_det()))
    }

    pub fn classify(&self, z: &DVector<f64>) -> Result<ClassLabel> {
        Ok(label_from_score(self.discriminant(z)?))
    }
}

/// One-shot scoring with true population parameters; same tie rule as the
/// fitted rules (class 1 iff strictly negative).
pub fn optimal_discriminant(
    pop1: &PopulationSpec,
    pop2: &PopulationSpec,
    z: &DVector<f64>,
) -> Result<f64> {
    OptimalQda::new(pop1, pop2)?.discriminant(z)
}

const MODEL_FORMAT_VERSION: u32 = 1;

/// On-disk model document. Cholesky factors are stored as their lower
/// triangles in row-major order ((0,0), (1,0), (1,1), (2,0), ...), and the
/// log-determinants are stored rather than recomputed so a reloaded model
/// scores bit-identically.
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    p: usize,
    n1: usize,
    n2: usize,
    variant: Variant,
    mean1: Vec<f64>,
    mean2: Vec<f64>,
    chol1: Vec<f64>,
    chol2: Vec<f64>,
    logdet1: f64,
    logdet2: f64,
    s0n: f64,
    m0n: f64,
    l1n: f64,
    l2n: f64,
}

fn pack_lower(l: &DMatrix<f64>) -> Vec<f64> {
    let p = l.nrows();
    let mut out = Vec::with_capacity(p * (p + 1) / 2);
    for i in 0..p {
        for j in 0..=i {
            out.push(l[(i, j)]);
        }
    }
    out
}

fn unpack_lower(packed: &[f64], p: usize) -> Result<DMatrix<f64>> {
    if packed.len() != p * (p + 1) / 2 {
        return Err(Error::ModelFormat(format!(
            "triangle length {} does not match dimension {}",
            packed.len(),
            p
        )));
    }
    let mut l = DMatrix::zeros(p, p);
    let mut k = 0;
    for i in 0..p {
        for j in 0..=i {
            l[(i, j)] = packed[k];
            k += 1;
        }
    }
    Ok(l)
}

impl FittedQda {
    /// Serializes the model as a self-describing JSON document.
    pub fn to_json(&self) -> String {
        let doc = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            p: self.p,
            n1: self.n1,
            n2: self.n2,
            variant: self.variant,
            mean1: self.mean1.iter().cloned().collect(),
            mean2: self.mean2.iter().cloned().collect(),
            chol1: pack_lower(self.chol1.lower()),
            chol2: pack_lower(self.chol2.lower()),
            logdet1: self.chol1.log_det(),
            logdet2: self.chol2.log_det(),
            s0n: self.constants.s0n,
            m0n: self.constants.m0n,
            l1n: self.constants.l1n,
            l2n: self.constants.l2n,
        };
        serde_json::to_string_pretty(&doc).expect("model serialization cannot fail")
    }

    /// Parses a model document, validating version, shapes, and finiteness.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported format_version {} (expected {})",
                doc.format_version, MODEL_FORMAT_VERSION
            )));
        }
        if doc.mean1.len() != doc.p || doc.mean2.len() != doc.p {
            return Err(Error::ModelFormat(format!(
                "mean length ({}, {}) does not match p = {}",
                doc.mean1.len(),
                doc.mean2.len(),
                doc.p
            )));
        }
        let all = doc
            .mean1
            .iter()
            .chain(&doc.mean2)
            .chain(&doc.chol1)
            .chain(&doc.chol2)
            .chain([
                &doc.logdet1,
                &doc.logdet2,
                &doc.s0n,
                &doc.m0n,
                &doc.l1n,
                &doc.l2n,
            ]);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let chol1 = CholFactor::from_parts(unpack_lower(&doc.chol1, doc.p)?, doc.logdet1)?;
        let chol2 = CholFactor::from_parts(unpack_lower(&doc.chol2, doc.p)?, doc.logdet2)?;
        Ok(Self {
            p: doc.p,
            n1: doc.n1,
            n2: doc.n2,
            mean1: DVector::from_vec(doc.mean1),
            mean2: DVector::from_vec(doc.mean2),
            chol1,
            chol2,
            constants: CorrectionConstants {
                s0n: doc.s0n,
                m0n: doc.m0n,
                l1n: doc.l1n,
                l2n: doc.l2n,
            },
            variant: doc.variant,
        })
    }
}
