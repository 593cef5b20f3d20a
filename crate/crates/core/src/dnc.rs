//! Divide-and-conquer refinements of the generalized rule.
//!
//! Two families, with opposite outcomes:
//!
//! * Screening over dimension keeps only the coordinates whose per-block (or
//!   per-coordinate) corrected scores separate the classes most strongly at
//!   the query point, then classifies in that reduced space. Narrows the gap
//!   to the optimal rule when the covariance difference is concentrated on a
//!   small set of coordinates.
//! * Splitting over samples refits the rule on disjoint subsample groups and
//!   combines the group scores by averaging or voting. Included because it is
//!   the obvious thing to try and it does not help: each group sees a harsher
//!   dimension-to-sample ratio, which inflates the score variance. The
//!   simulation harness reproduces that failure.
//!
//! Screening is per-query: the selected coordinates depend on the test point,
//! so there is no cached global selection to reuse across queries.

use nalgebra::DVector;

use crate::la::DataMatrix;
use crate::qda::{fit, label_from_score, ClassLabel, FittedQda, Variant};
use crate::{Error, Result};

/// Which screening procedure produced a selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScreenMethod {
    Subgroup,
    Componentwise,
}

/// Coordinates kept by a screening pass.
///
/// Indices are zero-based row indices into the training matrices, strictly
/// increasing. For the subgroup method they are one contiguous block of the
/// partition; for the componentwise method any subset of size `p0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScreenSelection {
    method: ScreenMethod,
    p0: usize,
    indices: Vec<usize>,
}

impl ScreenSelection {
    pub fn method(&self) -> ScreenMethod {
        self.method
    }

    pub fn p0(&self) -> usize {
        self.p0
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

/// Default screening size `3*floor(sqrt(p))`, capped at `p`.
///
/// The hard regime arises when order sqrt(p) coordinates carry the covariance
/// difference, so the default keeps a small multiple of that.
pub fn default_p0(p: usize) -> usize {
    (3 * (p as f64).sqrt().floor() as usize).min(p)
}

/// The generalized score restricted to a coordinate subset, with correction
/// constants computed at the subset's size.
fn restricted_fit(train1: &DataMatrix, train2: &DataMatrix, rows: &[usize]) -> Result<FittedQda> {
    fit(
        &train1.select_rows(rows)?,
        &train2.select_rows(rows)?,
        Variant::Generalized,
    )
}

fn restrict_point(z: &DVector<f64>, rows: &[usize]) -> DVector<f64> {
    DVector::from_fn(rows.len(), |r, _| z[rows[r]])
}

fn common_dim(train1: &DataMatrix, train2: &DataMatrix, z: &DVector<f64>) -> Result<usize> {
    let p = train1.dim();
    if train2.dim() != p {
        return Err(Error::DimMismatch {
            expected: p,
            got: train2.dim(),
        });
    }
    if z.len() != p {
        return Err(Error::DimMismatch {
            expected: p,
            got: z.len(),
        });
    }
    Ok(p)
}

fn validate_p0(p0: usize, p: usize, n1: usize, n2: usize) -> Result<()> {
    if p0 == 0 || p0 > p {
        return Err(Error::P0ExceedsDim { p0, p });
    }
    // Every restricted fit runs at dimension p0 (or 1), so the usual
    // moderate-dimension bound must hold at p0.
    if p0 + 1 >= n1.min(n2) {
        return Err(Error::P0TooLarge { p0, n1, n2 });
    }
    Ok(())
}

/// Screens contiguous coordinate blocks and classifies inside the winner.
///
/// The dimension is cut into `H = floor(p/p0)` blocks of `p0` consecutive
/// coordinates (trailing remainder dropped). Each block gets its own
/// generalized fit, and the block whose score at `z` has the largest
/// magnitude wins; ties go to the earliest block.
pub fn subgroup_screen(
    train1: &DataMatrix,
    train2: &DataMatrix,
    z: &DVector<f64>,
    p0: usize,
) -> Result<(ScreenSelection, ClassLabel)> {
    let p = common_dim(train1, train2, z)?;
    validate_p0(p0, p, train1.count(), train2.count())?;

    let h = p / p0;
    let mut best: Option<(f64, usize, f64)> = None;
    for i in 0..h {
        let rows: Vec<usize> = (i * p0..(i + 1) * p0).collect();
        let model = restricted_fit(train1, train2, &rows)?;
        let delta = model.discriminant(&restrict_point(z, &rows))?;
        // Strict > keeps the earliest block on ties.
        if best.map_or(true, |(gap, _, _)| delta.abs() > gap) {
            best = Some((delta.abs(), i, delta));
        }
    }
    let (_, winner, delta) = best.expect("h >= 1 because p0 <= p");
    let selection = ScreenSelection {
        method: ScreenMethod::Subgroup,
        p0,
        indices: (winner * p0..(winner + 1) * p0).collect(),
    };
    Ok((selection, label_from_score(delta)))
}

/// Screens single coordinates, then refits on the strongest `p0` of them.
///
/// Each coordinate is scored by a one-dimensional generalized fit (constants
/// at dimension 1); the `p0` coordinates with the largest score magnitudes at
/// `z` are kept, ties going to smaller indices, and a fresh fit at dimension
/// `p0` classifies the point.
pub fn componentwise_screen(
    train1: &DataMatrix,
    train2: &DataMatrix,
    z: &DVector<f64>,
    p0: usize,
) -> Result<(ScreenSelection, ClassLabel)> {
    let p = common_dim(train1, train2, z)?;
    validate_p0(p0, p, train1.count(), train2.count())?;

    let mut gaps = Vec::with_capacity(p);
    for j in 0..p {
        let rows = [j];
        let model = restricted_fit(train1, train2, &rows)?;
        let delta = model.discriminant(&restrict_point(z, &rows))?;
        gaps.push((delta.abs(), j));
    }
    // Scores are finite, so the comparison is total.
    gaps.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let mut indices: Vec<usize> = gaps[..p0].iter().map(|&(_, j)| j).collect();
    indices.sort_unstable();

    let model = restricted_fit(train1, train2, &indices)?;
    let delta = model.discriminant(&restrict_point(z, &indices))?;
    let selection = ScreenSelection {
        method: ScreenMethod::Componentwise,
        p0,
        indices,
    };
    Ok((selection, label_from_score(delta)))
}

/// Equal-size contiguous grouping used by the sample-splitting rules.
///
/// Groups are consecutive column blocks in input order; the trailing
/// `n_i - H*m_i` observations are discarded, never reused. Callers wanting
/// random groups shuffle their columns first.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitPlan {
    h: usize,
    m1: usize,
    m2: usize,
}

impl SplitPlan {
    /// Plans `h` groups of `floor(n_i/h)` observations per class.
    ///
    /// Each group must itself satisfy the moderate-dimension bound
    /// `p < min(m1, m2) - 1`, which is what makes splitting costly: the
    /// constraint binds at `h` times the full-sample ratio.
    pub fn new(h: usize, n1: usize, n2: usize, p: usize) -> Result<Self> {
        let (m1, m2) = if h == 0 { (0, 0) } else { (n1 / h, n2 / h) };
        if h == 0 || p + 1 >= m1.min(m2) {
            return Err(Error::GroupTooSmall { p, m1, m2 });
        }
        Ok(Self { h, m1, m2 })
    }

    pub fn h(&self) -> usize {
        self.h
    }

    /// Per-class group sizes `(m1, m2)`.
    pub fn group_sizes(&self) -> (usize, usize) {
        (self.m1, self.m2)
    }

    /// Column range of group `k` in class 1 input order.
    pub fn group1(&self, k: usize) -> std::ops::Range<usize> {
        k * self.m1..(k + 1) * self.m1
    }

    /// Column range of group `k` in class 2 input order.
    pub fn group2(&self, k: usize) -> std::ops::Range<usize> {
        k * self.m2..(k + 1) * self.m2
    }
}

/// One generalized score per group, in group order.
fn group_scores(
    train1: &DataMatrix,
    train2: &DataMatrix,
    z: &DVector<f64>,
    h: usize,
) -> Result<Vec<f64>> {
    let p = common_dim(train1, train2, z)?;
    let plan = SplitPlan::new(h, train1.count(), train2.count(), p)?;
    (0..h)
        .map(|k| {
            let r1 = plan.group1(k);
            let r2 = plan.group2(k);
            let g1 = train1.slice_columns(r1.start, r1.end);
            let g2 = train2.slice_columns(r2.start, r2.end);
            fit(&g1, &g2, Variant::Generalized)?.discriminant(z)
        })
        .collect()
}

/// Mean of the per-group generalized scores; classify to class 1 iff it is
/// negative.
pub fn sample_split_weighted(
    train1: &DataMatrix,
    train2: &DataMatrix,
    z: &DVector<f64>,
    h: usize,
) -> Result<f64> {
    let scores = group_scores(train1, train2, z, h)?;
    Ok(scores.iter().sum::<f64>() / h as f64)
}

/// Majority vote over the per-group scores: class 1 iff strictly more than
/// half the groups score negative, so an even split goes to class 2.
pub fn sample_split_majority(
    train1: &DataMatrix,
    train2: &DataMatrix,
    z: &DVector<f64>,
    h: usize,
) -> Result<ClassLabel> {
    let scores = group_scores(train1, train2, z, h)?;
    let votes = scores.iter().filter(|d| **d < 0.0).count();
    Ok(if 2 * votes > h {
        ClassLabel::Class1
    } else {
        ClassLabel::Class2
    })
}
