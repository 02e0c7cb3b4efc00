//! One-parameter families of initial laws, grid classification and boundary bisection.

use rayon::prelude::*;
use serde::Serialize;

use crate::criteria::{classify_law, CriterionLaw, PhaseVerdict, Verdict};
use crate::error::{ModelError, ScanError};
use crate::model::ModelSpec;
use crate::offspring::OffspringLaw;
use crate::pmf::{FinitePmf, TruncatedGeometric, DEFAULT_SUPPORT_CAP};
use crate::scalar::Scalar;

/// Distance kept from the endpoints of `(0, 1)`, where `X_0` degenerates.
pub const PARAM_EPS: f64 = 1e-6;
/// Tail tolerance of the geometric family.
pub const GEOMETRIC_X0_TAIL: f64 = 1e-14;
const MAX_BISECTIONS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FamilyKind {
    /// `P(X_0 = high) = p`, `P(X_0 = 0) = 1 - p`.
    TwoPoint { high: usize },
    /// `P(X_0 = k) proportional to p (1 - p)^k`, cut at a `1e-14` tail.
    GeometricX0,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Family<T> {
    kind: FamilyKind,
    tax: usize,
    offspring: OffspringLaw<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Super,
    Sub,
}

impl<T: Scalar> Family<T> {
    pub fn new(kind: FamilyKind, tax: usize, offspring: OffspringLaw<T>) -> Result<Self, ModelError> {
        if tax == 0 {
            return Err(ModelError::NonPositiveTax(0));
        }
        if kind == (FamilyKind::TwoPoint { high: 0 }) {
            return Err(ModelError::ConstantInitial(1));
        }
        Ok(Self { kind, tax, offspring })
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn tax(&self) -> usize {
        self.tax
    }

    pub fn offspring(&self) -> &OffspringLaw<T> {
        &self.offspring
    }

    /// The model at parameter `p` in `(0, 1)`.
    ///
    /// Geometric laws are materialized renormalized, so the model is leak-free.
    pub fn model_at(&self, p: T) -> Result<ModelSpec<T>, ModelError> {
        let x0 = match self.kind {
            FamilyKind::TwoPoint { high } => two_point(high, p)?,
            FamilyKind::GeometricX0 => geometric(p)?
                .to_pmf(DEFAULT_SUPPORT_CAP)
                .map_err(|source| ModelError::Dist { path: "x0", source })?,
        };
        ModelSpec::new(self.tax, x0, self.offspring.clone())
    }

    /// Both criteria at `p`, without materializing geometric supports.
    pub fn classify_at(&self, p: T) -> Result<PhaseVerdict<T>, ModelError> {
        Ok(match self.kind {
            FamilyKind::TwoPoint { high } => classify_law(&two_point(high, p)?, self.tax, &self.offspring),
            FamilyKind::GeometricX0 => classify_law(&geometric(p)?, self.tax, &self.offspring),
        })
    }

    /// Value of one criterion at `p`.
    pub fn criterion_at(&self, which: Criterion, p: T) -> Result<T, ScanError> {
        let en = self.offspring.mean_n();
        let (s, m) = match which {
            Criterion::Super => (en.powf(T::one() / T::from_count(self.tax)), en),
            Criterion::Sub => {
                let m = self.offspring.bound_m().ok_or(ScanError::CriterionUnavailable)?;
                (T::one() + T::from_count(m - 1) / T::from_count(self.tax), T::from_count(m))
            }
        };
        Ok(match self.kind {
            FamilyKind::TwoPoint { high } => two_point(high, p)?.d0(self.tax, s, m),
            FamilyKind::GeometricX0 => geometric(p)?.d0(self.tax, s, m),
        })
    }
}

fn two_point<T: Scalar>(high: usize, p: T) -> Result<FinitePmf<T>, ModelError> {
    FinitePmf::from_pairs([(0, T::one() - p), (high, p)]).map_err(|source| ModelError::Dist { path: "family.p", source })
}

fn geometric<T: Scalar>(p: T) -> Result<TruncatedGeometric<T>, ModelError> {
    TruncatedGeometric::new(p, T::lit(GEOMETRIC_X0_TAIL)).map_err(|source| ModelError::Dist { path: "family.p", source })
}

/// Closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> Interval<T> {
    pub fn width(&self) -> T {
        self.hi - self.lo
    }

    pub fn contains(&self, x: T) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn midpoint(&self) -> T {
        self.lo + (self.hi - self.lo) / T::lit(2.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridPoint<T> {
    pub parameter: T,
    pub verdict: PhaseVerdict<T>,
}

/// `n` evenly spaced points from `PARAM_EPS` to `1 - PARAM_EPS`, both included.
pub fn parameter_grid<T: Scalar>(n: usize) -> Result<Vec<T>, ScanError> {
    if n < 2 {
        return Err(ScanError::GridTooSmall(n));
    }
    let lo = T::lit(PARAM_EPS);
    let hi = T::one() - lo;
    let step = (hi - lo) / T::from_count(n - 1);
    Ok((0..n).map(|i| if i == n - 1 { hi } else { lo + step * T::from_count(i) }).collect())
}

pub fn scan<T: Scalar>(family: &Family<T>, grid_points: usize) -> Result<Vec<GridPoint<T>>, ScanError> {
    scan_points(family, &parameter_grid(grid_points)?)
}

/// Classifies each parameter independently (in parallel); output keeps input order.
pub fn scan_points<T: Scalar>(family: &Family<T>, params: &[T]) -> Result<Vec<GridPoint<T>>, ScanError> {
    params
        .par_iter()
        .map(|&p| {
            Ok(GridPoint {
                parameter: p,
                verdict: family.classify_at(p)?,
            })
        })
        .collect()
}

/// Brackets the sign change of one criterion on `[PARAM_EPS, 1 - PARAM_EPS]`.
pub fn bisect_boundary<T: Scalar>(family: &Family<T>, which: Criterion, tol: T) -> Result<Interval<T>, ScanError> {
    if !(tol > T::zero()) {
        return Err(ScanError::BadTolerance(tol.to_f64().unwrap_or(f64::NAN)));
    }
    let mut lo = T::lit(PARAM_EPS);
    let mut hi = T::one() - lo;
    let f_lo = family.criterion_at(which, lo)?;
    let f_hi = family.criterion_at(which, hi)?;
    if f_lo == T::zero() {
        return Ok(Interval { lo, hi: lo });
    }
    if f_hi == T::zero() {
        return Ok(Interval { lo: hi, hi });
    }
    if (f_lo > T::zero()) == (f_hi > T::zero()) || f_lo.is_nan() || f_hi.is_nan() {
        return Err(ScanError::NoSignChange {
            lo: PARAM_EPS,
            hi: 1.0 - PARAM_EPS,
        });
    }
    let lo_positive = f_lo > T::zero();
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= tol {
            break;
        }
        let mid = lo + (hi - lo) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        let f = family.criterion_at(which, mid)?;
        if f == T::zero() {
            return Ok(Interval { lo: mid, hi: mid });
        }
        if (f > T::zero()) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Interval { lo, hi })
}

/// Result of one bisection inside a report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "status", content = "interval", rename_all = "snake_case")]
pub enum Boundary<T> {
    Found(Interval<T>),
    NoSignChange,
    Unavailable,
}

impl<T: Copy> Boundary<T> {
    pub fn interval(&self) -> Option<Interval<T>> {
        match self {
            Boundary::Found(i) => Some(*i),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundaryReport<T> {
    pub super_boundary: Boundary<T>,
    pub sub_boundary: Boundary<T>,
    /// Parameters strictly between the two brackets, where neither criterion
    /// applies. `None` when a bracket is missing; an empty band has `lo >= hi`.
    pub undetermined_band: Option<Interval<T>>,
    pub tolerance: T,
    pub grid: Vec<GridPoint<T>>,
}

impl<T: Scalar> BoundaryReport<T> {
    pub fn band_is_empty(&self) -> bool {
        self.undetermined_band.is_none_or(|b| b.lo >= b.hi)
    }

    pub fn count(&self, verdict: Verdict) -> usize {
        self.grid.iter().filter(|g| g.verdict.verdict == verdict).count()
    }
}

/// Grid scan plus both bisections.
pub fn boundary_report<T: Scalar>(family: &Family<T>, grid_points: usize, tol: T) -> Result<BoundaryReport<T>, ScanError> {
    boundary_report_on(family, scan(family, grid_points)?, tol)
}

/// Both bisections, attached to an already classified grid.
pub fn boundary_report_on<T: Scalar>(family: &Family<T>, grid: Vec<GridPoint<T>>, tol: T) -> Result<BoundaryReport<T>, ScanError> {
    let run = |which| match bisect_boundary(family, which, tol) {
        Ok(i) => Ok(Boundary::Found(i)),
        Err(ScanError::NoSignChange { .. }) => Ok(Boundary::NoSignChange),
        Err(ScanError::CriterionUnavailable) => Ok(Boundary::Unavailable),
        Err(e) => Err(e),
    };
    let super_boundary = run(Criterion::Super)?;
    let sub_boundary = run(Criterion::Sub)?;
    let undetermined_band = match (super_boundary, sub_boundary) {
        (Boundary::Found(sup), Boundary::Found(sub)) => Some(if sub.hi <= sup.lo {
            Interval { lo: sub.hi, hi: sup.lo }
        } else if sup.hi <= sub.lo {
            Interval { lo: sup.hi, hi: sub.lo }
        } else {
            // overlapping brackets
            Interval {
                lo: sub.lo.max(sup.lo),
                hi: sub.lo.max(sup.lo),
            }
        }),
        _ => None,
    };
    Ok(BoundaryReport {
        super_boundary,
        sub_boundary,
        undetermined_band,
        tolerance: tol,
        grid,
    })
}
