//! Law of the number of terms `N`.

use serde::Serialize;

use crate::error::{DistError, ModelError};
use crate::pmf::{FinitePmf, PgfPoint, PgfView};
use crate::scalar::Scalar;

/// Upper tail below which a geometric offspring law is cut.
pub const GEOMETRIC_TAIL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum OffspringKind<T> {
    Deterministic(usize),
    FiniteSupport,
    /// `P(N = k) = p (1 - p)^(k - 1)` on `{1, 2, ...}`.
    Geometric {
        success: T,
    },
}

/// Law of `N` on `{1, 2, ...}` with `P(N > 1) > 0`.
///
/// Geometric laws are stored cut at the smallest `K` whose tail is below
/// [`GEOMETRIC_TAIL`]; the cut mass is `truncation_leak` and is carried into
/// the leak ledger of every evolution step. `mean_n` is always the exact mean
/// of the untruncated law.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OffspringLaw<T> {
    kind: OffspringKind<T>,
    probs: FinitePmf<T>,
    mean_n: T,
}

impl<T: Scalar> OffspringLaw<T> {
    pub fn deterministic(n: usize) -> Result<Self, ModelError> {
        if n == 0 {
            return Err(ModelError::ZeroTerms(0));
        }
        if n == 1 {
            return Err(ModelError::NoBranching);
        }
        Ok(Self {
            kind: OffspringKind::Deterministic(n),
            probs: FinitePmf::point(n),
            mean_n: T::from_count(n),
        })
    }

    pub fn finite<I>(pairs: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (usize, T)>,
    {
        let probs = FinitePmf::from_pairs(pairs).map_err(|source| ModelError::Dist { path: "N.pmf", source })?;
        if probs.prob(0) > T::zero() {
            return Err(ModelError::ZeroTerms(0));
        }
        if probs.tail_prob(2) <= T::zero() {
            return Err(ModelError::NoBranching);
        }
        let mean_n = probs.mean();
        Ok(Self {
            kind: OffspringKind::FiniteSupport,
            probs,
            mean_n,
        })
    }

    pub fn geometric(success: T) -> Result<Self, ModelError> {
        Self::geometric_with_tail(success, T::lit(GEOMETRIC_TAIL))
    }

    pub fn geometric_with_tail(success: T, tail: T) -> Result<Self, ModelError> {
        if !(success > T::zero() && success <= T::one()) {
            return Err(ModelError::Dist {
                path: "N.p",
                source: DistError::InvalidParameter {
                    name: "p",
                    value: success.to_f64().unwrap_or(f64::NAN),
                    expected: "0 < p < 1",
                },
            });
        }
        if success == T::one() {
            return Err(ModelError::NoBranching);
        }
        let q = T::one() - success;
        // smallest K with P(N > K) = q^K < tail
        let cutoff = (tail.ln() / q.ln()).floor().to_usize().unwrap_or(usize::MAX).saturating_add(1);
        if cutoff > crate::pmf::DEFAULT_SUPPORT_CAP {
            return Err(ModelError::Dist {
                path: "N.p",
                source: DistError::SupportTooLarge {
                    needed: cutoff + 1,
                    cap: crate::pmf::DEFAULT_SUPPORT_CAP,
                },
            });
        }
        let mut weights = vec![T::zero(); cutoff + 1];
        let mut w = success;
        for slot in weights.iter_mut().skip(1) {
            *slot = w;
            w *= q;
        }
        let leak = q.powi(cutoff as i32);
        Ok(Self {
            kind: OffspringKind::Geometric { success },
            probs: FinitePmf::from_raw(weights, leak),
            mean_n: T::one() / success,
        })
    }

    pub fn kind(&self) -> OffspringKind<T> {
        self.kind
    }

    /// `EN`, exact for every supported kind.
    pub fn mean_n(&self) -> T {
        self.mean_n
    }

    /// `M` with `P(N <= M) = 1`, when the law is genuinely bounded.
    pub fn bound_m(&self) -> Option<usize> {
        match self.kind {
            OffspringKind::Geometric { .. } => None,
            _ => Some(self.probs.support_max()),
        }
    }

    /// Largest value kept in the stored table (`M`, or the geometric cutoff).
    pub fn cutoff(&self) -> usize {
        self.probs.support_max()
    }

    /// Probability mass beyond the stored table.
    pub fn truncation_leak(&self) -> T {
        self.probs.leaked_mass()
    }

    /// Stored `P(N = k)` as a dense table (index 0 is always zero).
    pub fn probs(&self) -> &FinitePmf<T> {
        &self.probs
    }

    pub fn prob(&self, k: usize) -> T {
        self.probs.prob(k)
    }

    /// `G(v) = E v^N` over the stored table.
    pub fn g_eval(&self, v: T) -> T {
        self.probs.pgf_eval(v)
    }

    /// `G'(v)`.
    pub fn g_deriv(&self, v: T) -> T {
        self.probs.pgf_deriv(v)
    }

    /// `ln G(v)` and `v G'(v) / G(v)` for `v > 0`, stable for huge `v`.
    pub fn g_point_ln(&self, ln_v: T) -> PgfPoint<T> {
        let mut max = T::neg_infinity();
        for (k, w) in self.probs.iter() {
            max = max.max(w.ln() + T::from_count(k) * ln_v);
        }
        let mut total = T::zero();
        let mut first = T::zero();
        for (k, w) in self.probs.iter() {
            let e = (w.ln() + T::from_count(k) * ln_v - max).exp();
            total += e;
            first += T::from_count(k) * e;
        }
        PgfPoint {
            ln_value: max + total.ln(),
            tilted_mean: first / total,
        }
    }
}

impl<T: Scalar> PgfView<T> for OffspringLaw<T> {
    fn pgf_point(&self, s: T) -> PgfPoint<T> {
        self.g_point_ln(s.ln())
    }
}
