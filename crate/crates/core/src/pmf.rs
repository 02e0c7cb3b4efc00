//! Finite-support distributions on the nonnegative integers.
//!
//! Weights live in a dense vector indexed by value. Mass removed by
//! truncation (or by dropping sub-denormal entries after a convolution) is
//! never renormalized back: it is booked in `leaked_mass`, so every mean or
//! generating-function value computed from the retained weights is a lower
//! bound for the untruncated quantity at `s >= 1`.

use serde::Serialize;

use crate::error::DistError;
use crate::scalar::Scalar;

/// Tolerance on `sum(weights) + leaked_mass` for user-supplied laws.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Default upper limit on the dense support length (`support_max + 1`).
pub const DEFAULT_SUPPORT_CAP: usize = 1 << 22;

/// Generating function of a law evaluated at one point `s > 0`, kept in a
/// scale-free form so that astronomically large values stay representable.
///
/// `F(s) = exp(ln_value)` and `s F'(s) = F(s) * tilted_mean`, where
/// `tilted_mean = E[X s^X] / E[s^X]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PgfPoint<T> {
    pub ln_value: T,
    pub tilted_mean: T,
}

impl<T: Scalar> PgfPoint<T> {
    /// `F(s)`; may overflow to infinity.
    pub fn value(&self) -> T {
        self.ln_value.exp()
    }

    /// `F'(s)`; may overflow to infinity.
    pub fn derivative(&self, s: T) -> T {
        if self.tilted_mean == T::zero() {
            return T::zero();
        }
        (self.ln_value + (self.tilted_mean / s).ln()).exp()
    }

    /// `|F_self(s) / F_other(s) - 1|`, computed in log space.
    pub fn value_rel_diff(&self, other: &Self) -> T {
        (self.ln_value - other.ln_value).exp_m1().abs()
    }

    /// `|F'_self(s) / F'_other(s) - 1|`, computed in log space.
    pub fn derivative_rel_diff(&self, other: &Self) -> T {
        if self.tilted_mean == T::zero() && other.tilted_mean == T::zero() {
            return T::zero();
        }
        let ratio = (self.ln_value - other.ln_value).exp() * self.tilted_mean / other.tilted_mean;
        (ratio - T::one()).abs()
    }
}

/// Anything whose generating function can be evaluated at a point.
pub trait PgfView<T: Scalar> {
    fn pgf_point(&self, s: T) -> PgfPoint<T>;
}

/// Exact law of a nonnegative integer random variable with finite support.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FinitePmf<T> {
    weights: Vec<T>,
    leaked_mass: T,
}

impl<T: Scalar> FinitePmf<T> {
    /// Point mass at `value`.
    pub fn point(value: usize) -> Self {
        let mut weights = vec![T::zero(); value + 1];
        weights[value] = T::one();
        Self {
            weights,
            leaked_mass: T::zero(),
        }
    }

    /// Builds a law from `(value, probability)` pairs.
    pub fn from_pairs<I>(pairs: I) -> Result<Self, DistError>
    where
        I: IntoIterator<Item = (usize, T)>,
    {
        let mut weights: Vec<T> = Vec::new();
        let mut seen: Vec<bool> = Vec::new();
        for (value, prob) in pairs {
            check_weight(value, prob)?;
            if value >= weights.len() {
                weights.resize(value + 1, T::zero());
                seen.resize(value + 1, false);
            }
            if seen[value] {
                return Err(DistError::DuplicateValue(value));
            }
            seen[value] = true;
            weights[value] = prob;
        }
        Self::from_dense(weights)
    }

    /// Builds a law from dense weights indexed by value; zeros mark absent values.
    pub fn from_dense(weights: Vec<T>) -> Result<Self, DistError> {
        for (value, &w) in weights.iter().enumerate() {
            if w != T::zero() {
                check_weight(value, w)?;
            }
        }
        let pmf = Self::from_raw(weights, T::zero());
        if pmf.weights.is_empty() {
            return Err(DistError::Empty);
        }
        let total = pmf.total_mass().to_f64().unwrap_or(f64::NAN);
        if !((1.0 - total).abs() <= NORMALIZATION_TOL) {
            return Err(DistError::NotNormalized {
                total,
                tol: NORMALIZATION_TOL,
            });
        }
        Ok(pmf)
    }

    /// Trims trailing zeros; no validation.
    pub(crate) fn from_raw(mut weights: Vec<T>, leaked_mass: T) -> Self {
        while weights.last().is_some_and(|w| *w == T::zero()) {
            weights.pop();
        }
        Self { weights, leaked_mass }
    }

    /// Dense weights, index = value. Interior zeros are values outside the support.
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn leaked_mass(&self) -> T {
        self.leaked_mass
    }

    /// Largest value carrying positive weight.
    pub fn support_max(&self) -> usize {
        self.weights.len().saturating_sub(1)
    }

    /// Number of values carrying positive weight.
    pub fn support_size(&self) -> usize {
        self.weights.iter().filter(|w| **w > T::zero()).count()
    }

    pub fn prob(&self, value: usize) -> T {
        self.weights.get(value).copied().unwrap_or_else(T::zero)
    }

    /// `(value, weight)` over the support, ascending.
    pub fn iter(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > T::zero())
            .map(|(k, w)| (k, *w))
    }

    /// Sum of retained weights.
    pub fn total_mass(&self) -> T {
        self.weights.iter().copied().sum()
    }

    /// `P(X >= threshold)` over retained weights.
    pub fn tail_prob(&self, threshold: usize) -> T {
        self.weights.iter().skip(threshold).copied().sum()
    }

    /// `sum_k w_k s^k`. Leaked mass contributes nothing.
    pub fn pgf_eval(&self, s: T) -> T {
        debug_assert!(s > T::zero());
        self.weights.iter().rev().fold(T::zero(), |acc, &w| acc * s + w)
    }

    /// `sum_k k w_k s^(k-1)`.
    pub fn pgf_deriv(&self, s: T) -> T {
        debug_assert!(s > T::zero());
        self.weights
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(T::zero(), |acc, (k, &w)| acc * s + T::from_count(k) * w)
    }

    /// Mean over retained weights (lower bound when `leaked_mass > 0`).
    pub fn mean(&self) -> T {
        self.pgf_deriv(T::one())
    }

    /// `E[X s^X]`, the left side of the association inequality.
    pub fn tilted_first_moment(&self, s: T) -> T {
        s * self.pgf_deriv(s)
    }

    /// Independent sum. Leaks combine as `1 - (1 - l_p)(1 - l_q)`; entries
    /// under [`Scalar::drop_floor`] are moved to the leak.
    pub fn convolve(&self, other: &Self) -> Result<Self, DistError> {
        self.convolve_capped(other, DEFAULT_SUPPORT_CAP)
    }

    pub fn convolve_capped(&self, other: &Self, cap: usize) -> Result<Self, DistError> {
        if self.weights.is_empty() || other.weights.is_empty() {
            let leak = combine_leaks(self.leaked_mass, other.leaked_mass);
            return Ok(Self::from_raw(Vec::new(), leak));
        }
        let needed = self.weights.len() + other.weights.len() - 1;
        if needed > cap {
            return Err(DistError::SupportTooLarge { needed, cap });
        }
        let mut out = convolve_dense(&self.weights, &other.weights);
        let dropped = drop_tiny(&mut out);
        let leak = combine_leaks(self.leaked_mass, other.leaked_mass) + dropped;
        Ok(Self::from_raw(out, leak))
    }

    /// Removes the largest upper tail whose mass is at most `tail_eps`.
    /// The removed mass goes to `leaked_mass`; nothing is renormalized.
    pub fn truncate(&self, tail_eps: T) -> Result<Self, DistError> {
        if !(tail_eps >= T::zero() && tail_eps < T::one()) {
            return Err(DistError::InvalidTailEps(tail_eps.to_f64().unwrap_or(f64::NAN)));
        }
        if tail_eps == T::zero() || self.weights.is_empty() {
            return Ok(self.clone());
        }
        let lowest = self.weights.iter().position(|w| *w > T::zero()).unwrap_or(0);
        let mut removed = T::zero();
        let mut keep = self.weights.len();
        while keep > lowest + 1 {
            let next = removed + self.weights[keep - 1];
            if next > tail_eps {
                break;
            }
            removed = next;
            keep -= 1;
        }
        let weights = self.weights[..keep].to_vec();
        Ok(Self::from_raw(weights, self.leaked_mass + removed))
    }

    /// Law of `(X - a)^+`.
    pub(crate) fn shift_clip(&self, a: usize) -> Vec<T> {
        if self.weights.len() <= a {
            let total = self.total_mass();
            return if total > T::zero() { vec![total] } else { Vec::new() };
        }
        let mut out = self.weights[a..].to_vec();
        out[0] = self.weights[..=a].iter().copied().sum();
        out
    }

    /// First `len` dense weights (zero padded).
    pub fn low_window(&self, len: usize) -> Vec<T> {
        let mut w: Vec<T> = self.weights.iter().take(len).copied().collect();
        w.resize(len, T::zero());
        w
    }
}

impl<T: Scalar> PgfView<T> for FinitePmf<T> {
    /// Log-sum-exp evaluation; exact to rounding for any `s > 0`.
    fn pgf_point(&self, s: T) -> PgfPoint<T> {
        debug_assert!(s > T::zero());
        let ln_s = s.ln();
        let mut max = T::neg_infinity();
        for (k, w) in self.iter() {
            let t = w.ln() + T::from_count(k) * ln_s;
            if t > max {
                max = t;
            }
        }
        let mut total = T::zero();
        let mut first = T::zero();
        for (k, w) in self.iter() {
            let e = (w.ln() + T::from_count(k) * ln_s - max).exp();
            total += e;
            first += T::from_count(k) * e;
        }
        PgfPoint {
            ln_value: max + total.ln(),
            tilted_mean: first / total,
        }
    }
}

/// Geometric law `P(X = k) = p (1 - p)^k` on `{0, 1, ...}`, conditioned on
/// `X <= cutoff` where `cutoff` is the smallest value whose upper tail is
/// below the requested tolerance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TruncatedGeometric<T> {
    pub success: T,
    pub cutoff: usize,
}

impl<T: Scalar> TruncatedGeometric<T> {
    pub fn new(success: T, tail_tol: T) -> Result<Self, DistError> {
        if !(success > T::zero() && success < T::one()) {
            return Err(DistError::InvalidParameter {
                name: "p",
                value: success.to_f64().unwrap_or(f64::NAN),
                expected: "0 < p < 1",
            });
        }
        // P(X > K) = q^(K+1) < tol
        let q = T::one() - success;
        let k = ((tail_tol.ln() / q.ln()).floor()).to_f64().unwrap_or(f64::INFINITY);
        let cutoff = if k.is_finite() && k >= 0.0 { k as usize } else { usize::MAX };
        Ok(Self { success, cutoff })
    }

    /// Materializes the renormalized truncated law.
    pub fn to_pmf(&self, cap: usize) -> Result<FinitePmf<T>, DistError> {
        let len = self.cutoff.saturating_add(1);
        if len > cap {
            return Err(DistError::SupportTooLarge { needed: len, cap });
        }
        let q = T::one() - self.success;
        let norm = T::one() - q.powi(len as i32);
        let mut weights = Vec::with_capacity(len);
        let mut w = self.success / norm;
        for _ in 0..len {
            weights.push(w);
            w *= q;
        }
        let dropped = drop_tiny(&mut weights);
        Ok(FinitePmf::from_raw(weights, dropped))
    }
}

impl<T: Scalar> PgfView<T> for TruncatedGeometric<T> {
    /// Closed-form geometric sums; never materializes the support.
    fn pgf_point(&self, s: T) -> PgfPoint<T> {
        let q = T::one() - self.success;
        let k = T::from_count(self.cutoff);
        let n = k + T::one();
        let norm_ln = (-(q.ln() * n).exp()).ln_1p();
        let r = q * s;
        let one = T::one();
        let (ln_sum, tilted) = if (r - one).abs() < T::lit(1e-12) {
            (n.ln(), k / T::lit(2.0))
        } else if r < one {
            // sum_{j<=K} r^j = (1 - r^(K+1)) / (1 - r)
            let rn = (r.ln() * n).exp();
            let ln_sum = (-rn).ln_1p() - (-r).ln_1p();
            let tilted = r / (one - r) - n * rn / (one - rn);
            (ln_sum, tilted)
        } else {
            let u = one / r;
            let un = (u.ln() * n).exp();
            let ln_sum = k * r.ln() + (-un).ln_1p() - (-u).ln_1p();
            let tilted = k - (u / (one - u) - n * un / (one - un));
            (ln_sum, tilted)
        };
        PgfPoint {
            ln_value: self.success.ln() - norm_ln + ln_sum,
            tilted_mean: tilted,
        }
    }
}

fn check_weight<T: Scalar>(value: usize, prob: T) -> Result<(), DistError> {
    if !(prob > T::zero() && prob <= T::one()) {
        return Err(DistError::InvalidWeight {
            value,
            prob: prob.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(())
}

pub(crate) fn combine_leaks<T: Scalar>(a: T, b: T) -> T {
    a + b - a * b
}

/// Direct `O(|p| |q|)` product. Every output is a sum of nonnegative terms,
/// so each weight keeps full relative precision.
pub(crate) fn convolve_dense<T: Scalar>(p: &[T], q: &[T]) -> Vec<T> {
    let (p, q) = if p.len() <= q.len() { (p, q) } else { (q, p) };
    let mut out = vec![T::zero(); p.len() + q.len() - 1];
    for (i, &a) in p.iter().enumerate() {
        if a == T::zero() {
            continue;
        }
        for (o, &b) in out[i..i + q.len()].iter_mut().zip(q) {
            *o += a * b;
        }
    }
    out
}

/// Convolution restricted to the first `len` coefficients.
pub(crate) fn convolve_prefix<T: Scalar>(p: &[T], q: &[T], len: usize) -> Vec<T> {
    let mut out = vec![T::zero(); len];
    for (i, &a) in p.iter().enumerate().take(len) {
        if a == T::zero() {
            continue;
        }
        for (o, &b) in out[i..].iter_mut().zip(q) {
            *o += a * b;
        }
    }
    out
}

/// Zeroes entries below the drop floor and returns their total.
pub(crate) fn drop_tiny<T: Scalar>(weights: &mut [T]) -> T {
    let floor = T::drop_floor();
    let mut dropped = T::zero();
    for w in weights.iter_mut() {
        if *w > T::zero() && *w < floor {
            dropped += *w;
            *w = T::zero();
        }
    }
    dropped
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pmf(pairs: &[(usize, f64)]) -> FinitePmf<f64> {
        FinitePmf::from_pairs(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn pgf_eval_examples() {
        let p = pmf(&[(0, 0.5), (2, 0.5)]);
        assert_eq!(p.pgf_eval(1.0), 1.0);
        assert_eq!(p.pgf_eval(2.0), 2.5);
        let c = pmf(&[(0, 1.0)]);
        for s in [0.3, 1.0, 7.0] {
            assert_eq!(c.pgf_eval(s), 1.0);
        }
    }

    #[test]
    fn pgf_deriv_examples() {
        assert_eq!(pmf(&[(0, 0.5), (2, 0.5)]).pgf_deriv(2.0), 2.0);
        assert_eq!(pmf(&[(0, 1.0)]).pgf_deriv(3.0), 0.0);
        assert_eq!(pmf(&[(1, 1.0)]).pgf_deriv(5.0), 1.0);
    }

    #[test]
    fn mean_examples() {
        assert_eq!(pmf(&[(0, 0.5), (2, 0.5)]).mean(), 1.0);
        assert_eq!(pmf(&[(0, 1.0)]).mean(), 0.0);
        assert_eq!(pmf(&[(0, 0.25), (1, 0.5), (3, 0.25)]).mean(), 1.25);
    }

    #[test]
    fn convolve_examples() {
        let p = pmf(&[(0, 0.5), (2, 0.5)]);
        let pp = p.convolve(&p).unwrap();
        assert_eq!(pp.weights(), &[0.25, 0.0, 0.5, 0.0, 0.25]);
        assert_eq!(pp.leaked_mass(), 0.0);
        assert_eq!(p.convolve(&pmf(&[(0, 1.0)])).unwrap(), p);
        let one = pmf(&[(1, 1.0)]);
        assert_eq!(one.convolve(&one).unwrap(), pmf(&[(2, 1.0)]));
    }

    #[test]
    fn convolve_combines_leaks() {
        let p = FinitePmf::from_raw(vec![0.5, 0.4], 0.1);
        let q = FinitePmf::from_raw(vec![0.8], 0.2);
        let r = p.convolve(&q).unwrap();
        assert_relative_eq!(r.leaked_mass(), 0.1 + 0.2 - 0.02, epsilon = 1e-15);
        assert_relative_eq!(r.total_mass() + r.leaked_mass(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn convolve_respects_cap() {
        let p = pmf(&[(0, 0.5), (9, 0.5)]);
        let err = p.convolve_capped(&p, 10).unwrap_err();
        assert!(matches!(err, DistError::SupportTooLarge { needed: 19, cap: 10 }));
    }

    #[test]
    fn truncate_examples() {
        let p = pmf(&[(0, 0.5), (1, 0.3), (2, 0.15), (3, 0.05)]);
        assert_eq!(p.truncate(0.0).unwrap(), p);

        let t = p.truncate(0.06).unwrap();
        assert_eq!(t.weights(), &[0.5, 0.3, 0.15]);
        assert_eq!(t.leaked_mass(), 0.05);

        let q = pmf(&[(0, 0.9), (10, 0.1)]);
        let t = q.truncate(0.1).unwrap();
        assert_eq!(t.weights(), &[0.9]);
        assert_eq!(t.leaked_mass(), 0.1);
    }

    #[test]
    fn truncate_keeps_lowest_point() {
        let p = FinitePmf::from_raw(vec![0.0, 1e-3], 1.0 - 1e-3);
        let t = p.truncate(0.5).unwrap();
        assert_eq!(t.support_max(), 1);
    }

    #[test]
    fn truncate_rejects_bad_eps() {
        let p = pmf(&[(0, 0.5), (1, 0.5)]);
        assert!(p.truncate(1.0).is_err());
        assert!(p.truncate(-1e-3).is_err());
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(
            FinitePmf::<f64>::from_pairs([(0, 0.5), (0, 0.5)]),
            Err(DistError::DuplicateValue(0))
        ));
        assert!(matches!(
            FinitePmf::<f64>::from_pairs([(0, 0.5), (1, 0.4)]),
            Err(DistError::NotNormalized { .. })
        ));
        assert!(matches!(
            FinitePmf::<f64>::from_pairs([(0, 1.5)]),
            Err(DistError::InvalidWeight { value: 0, .. })
        ));
        assert!(matches!(FinitePmf::<f64>::from_pairs([]), Err(DistError::Empty)));
    }

    #[test]
    fn shift_clip_lumps_nonpositive_values() {
        let p = pmf(&[(0, 0.25), (1, 0.5), (3, 0.25)]);
        assert_eq!(p.shift_clip(1), vec![0.75, 0.0, 0.25]);
        assert_eq!(p.shift_clip(5), vec![1.0]);
    }

    #[test]
    fn pgf_point_agrees_with_horner() {
        let p = pmf(&[(0, 0.1), (1, 0.2), (4, 0.3), (7, 0.4)]);
        for s in [0.5, 1.0, 1.5, 3.0] {
            let pt = p.pgf_point(s);
            assert_relative_eq!(pt.value(), p.pgf_eval(s), max_relative = 1e-14);
            assert_relative_eq!(pt.derivative(s), p.pgf_deriv(s), max_relative = 1e-14);
        }
    }

    #[test]
    fn pgf_point_survives_overflow() {
        let p = pmf(&[(0, 0.5), (2000, 0.5)]);
        assert!(p.pgf_eval(3.0).is_infinite());
        let pt = p.pgf_point(3.0);
        assert_relative_eq!(pt.ln_value, 0.5f64.ln() + 2000.0 * 3f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(pt.tilted_mean, 2000.0, max_relative = 1e-12);
    }

    #[test]
    fn truncated_geometric_closed_form_matches_pmf() {
        for p in [0.05, 0.3, 0.7] {
            let g = TruncatedGeometric::new(p, 1e-14).unwrap();
            let dense = g.to_pmf(DEFAULT_SUPPORT_CAP).unwrap();
            assert!(dense.leaked_mass() < 1e-200);
            assert_relative_eq!(dense.total_mass(), 1.0, epsilon = 1e-12);
            for s in [0.5, 1.0, 1.2, 2.0, 1.0 / (1.0 - p)] {
                let a = g.pgf_point(s);
                let b = dense.pgf_point(s);
                assert_relative_eq!(a.ln_value, b.ln_value, epsilon = 1e-9, max_relative = 1e-10);
                assert_relative_eq!(a.tilted_mean, b.tilted_mean, epsilon = 1e-9, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn truncated_geometric_cutoff_is_minimal() {
        let g = TruncatedGeometric::new(0.5f64, 1e-14).unwrap();
        // 2^-(K+1) < 1e-14 first at K + 1 = 47
        assert_eq!(g.cutoff, 46);
        assert!(0.5f64.powi(g.cutoff as i32 + 1) < 1e-14);
        assert!(0.5f64.powi(g.cutoff as i32) >= 1e-14);
    }

    #[test]
    fn generic_over_f32() {
        let p = FinitePmf::<f32>::from_pairs([(0, 0.5), (2, 0.5)]).unwrap();
        assert_eq!(p.pgf_eval(2.0), 2.5);
        assert_eq!(p.mean(), 1.0);
    }
}
