//! Exact evolution of the law of `X_n` and the free-energy bracket.
//!
//! Two routes compute the same objects:
//!
//! * [`step`] builds the law of `(X^(1) + ... + X^(N) - a)^+` by mixing
//!   convolution powers of `X_n` over the law of `N`;
//! * [`gf_step_point`] evaluates `F_{n+1}(s)` and `F'_{n+1}(s)` at a single
//!   point from the values of `X_n`, `G` and the first `a + 1` coefficients
//!   of the compound law, without materializing it.
//!
//! When the dense support of `X_n` outgrows the configured cap, [`Evolution`]
//! continues on a finite low window of the law. The window is exact: the
//! probabilities of the values below `W - a` at step `n + 1` only involve
//! values below `W` at step `n`, and the mean obeys
//! `E X_{n+1} = EN E X_n - a + E (a - S)^+`, whose last term only sees
//! `P(S < a)`.

use serde::Serialize;

use crate::error::{DistError, EvolveError};
use crate::model::ModelSpec;
use crate::offspring::OffspringLaw;
use crate::pmf::{convolve_prefix, drop_tiny, FinitePmf, PgfPoint, PgfView};
use crate::scalar::{log_add_exp, Scalar};

/// Default number of generations.
pub const DEFAULT_STEPS: usize = 30;
/// Default per-step tail truncation.
pub const DEFAULT_TAIL_EPS: f64 = 1e-14;
/// Default leak budget for a whole run.
pub const DEFAULT_LEAK_BUDGET: f64 = 1e-9;
/// Full-law support size beyond which evolution moves to the low window.
pub const DEFAULT_EVOLVE_SUPPORT_CAP: usize = 1 << 14;

/// `(EN)^n` beyond this is handled in log space.
const POW_LOG_SWITCH: f64 = 1e280;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EvolveOptions<T> {
    pub tail_eps: T,
    pub leak_budget: T,
    pub support_cap: usize,
    /// Continue on the exact low window once the dense support exceeds the cap.
    pub window_fallback: bool,
}

impl<T: Scalar> Default for EvolveOptions<T> {
    fn default() -> Self {
        Self {
            tail_eps: T::lit(DEFAULT_TAIL_EPS),
            leak_budget: T::lit(DEFAULT_LEAK_BUDGET),
            support_cap: DEFAULT_EVOLVE_SUPPORT_CAP,
            window_fallback: true,
        }
    }
}

impl<T: Scalar> EvolveOptions<T> {
    /// No tail truncation; only sub-denormal drops can leak.
    pub fn leak_free() -> Self {
        Self {
            tail_eps: T::zero(),
            ..Self::default()
        }
    }

    pub fn with_support_cap(mut self, cap: usize) -> Self {
        self.support_cap = cap;
        self
    }

    pub fn with_tail_eps(mut self, tail_eps: T) -> Self {
        self.tail_eps = tail_eps;
        self
    }

    pub fn with_leak_budget(mut self, budget: T) -> Self {
        self.leak_budget = budget;
        self
    }

    pub fn without_window(mut self) -> Self {
        self.window_fallback = false;
        self
    }
}

/// One generation of the recursion on the full law.
///
/// Returns the law of `(sum_{j<=N} X^(j) - a)^+` computed as
/// `sum_k P(N = k) shift_clip(x^{*k}, a)`, then tail-truncated with
/// `opts.tail_eps`. Leak from the input, from a truncated geometric `N` and
/// from truncation all end up in `leaked_mass`.
pub fn step<T: Scalar>(x: &FinitePmf<T>, model: &ModelSpec<T>, opts: &EvolveOptions<T>) -> Result<FinitePmf<T>, EvolveError> {
    let a = model.tax();
    let law = model.offspring();
    let k_max = law.cutoff();
    let dist = |source: DistError| EvolveError::Dist { step: 0, source };

    let mut acc: Vec<T> = Vec::new();
    let mut leak = law.truncation_leak();
    let mut power = x.clone();
    for k in 1..=k_max {
        let pk = law.prob(k);
        if pk > T::zero() {
            let clipped = power.shift_clip(a);
            if clipped.len() > acc.len() {
                acc.resize(clipped.len(), T::zero());
            }
            for (slot, w) in acc.iter_mut().zip(&clipped) {
                *slot += pk * *w;
            }
            leak += pk * power.leaked_mass();
        }
        if k < k_max {
            power = power.convolve_capped(x, opts.support_cap).map_err(dist)?;
        }
    }
    leak += drop_tiny(&mut acc);
    let out = FinitePmf::from_raw(acc, leak).truncate(opts.tail_eps).map_err(dist)?;
    check_budget(out.leaked_mass(), opts, 0)?;
    Ok(out)
}

fn check_budget<T: Scalar>(leak: T, opts: &EvolveOptions<T>, step: usize) -> Result<(), EvolveError> {
    if leak > opts.leak_budget {
        return Err(EvolveError::LeakBudgetExceeded {
            step,
            leak: leak.to_f64().unwrap_or(f64::NAN),
            budget: opts.leak_budget.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(())
}

impl EvolveError {
    /// Relabels the failing step.
    pub fn at_step(self, n: usize) -> Self {
        match self {
            EvolveError::LeakBudgetExceeded { leak, budget, .. } => EvolveError::LeakBudgetExceeded { step: n, leak, budget },
            EvolveError::Dist { source, .. } => EvolveError::Dist { step: n, source },
            EvolveError::WindowExhausted { window, tax, .. } => EvolveError::WindowExhausted { step: n, window, tax },
            other => other,
        }
    }
}

/// First `len` coefficients of the law of `S = X^(1) + ... + X^(N)`, given the
/// first `len` probabilities of `X`. These are `(G o F)^{(p)}(0) / p!`.
pub fn compound_low_coeffs<T: Scalar>(x_low: &[T], law: &OffspringLaw<T>, len: usize) -> Vec<T> {
    let mut out = vec![T::zero(); len];
    if len == 0 {
        return out;
    }
    let base: Vec<T> = x_low.iter().take(len).copied().collect();
    let mut power = base.clone();
    let k_max = law.cutoff();
    for k in 1..=k_max {
        let pk = law.prob(k);
        if pk > T::zero() {
            for (o, w) in out.iter_mut().zip(&power) {
                *o += pk * *w;
            }
        }
        if k < k_max {
            power = convolve_prefix(&power, &base, len);
        }
    }
    out
}

/// Advances a generating-function point one generation.
///
/// With `A = G(F_n(s)) / s^a`, `c_p = P(S = p)` for `p < a`:
/// `F_{n+1}(s) = A + sum_p c_p (1 - s^{p-a})` and
/// `s F'_{n+1}(s) = A (t R_n - a) + sum_p c_p (a - p) s^{p-a}`,
/// where `R_n = s F'_n / F_n` and `t = v G'(v) / G(v)` at `v = F_n(s)`.
pub fn gf_advance<T: Scalar>(current: PgfPoint<T>, low: &[T], law: &OffspringLaw<T>, tax: usize, s: T) -> PgfPoint<T> {
    let g = law.g_point_ln(current.ln_value);
    let ln_s = s.ln();
    let ln_a = g.ln_value - T::from_count(tax) * ln_s;
    let mut c0 = T::zero();
    let mut c1 = T::zero();
    for (p, &c) in low.iter().enumerate().take(tax) {
        let inv = (T::from_count(tax - p) * ln_s).neg().exp();
        c0 += c * (T::one() - inv);
        c1 += c * T::from_count(tax - p) * inv;
    }
    let slope = g.tilted_mean * current.tilted_mean - T::from_count(tax);
    if c0 >= T::zero() {
        let ln_value = if c0 > T::zero() { log_add_exp(ln_a, c0.ln()) } else { ln_a };
        let tilted_mean = if ln_a >= T::zero() {
            let w = ln_a.neg().exp();
            (slope + c1 * w) / (T::one() + c0 * w)
        } else {
            let big_a = ln_a.exp();
            (big_a * slope + c1) / (big_a + c0)
        };
        PgfPoint { ln_value, tilted_mean }
    } else {
        // s < 1: everything is O(1)
        let big_a = ln_a.exp();
        let f = big_a + c0;
        PgfPoint {
            ln_value: f.ln(),
            tilted_mean: (big_a * slope + c1) / f,
        }
    }
}

/// `F_{n+1}(s)` and `F'_{n+1}(s)` from the generating-function recursion.
///
/// The part of `G(F_n(s))` above `s^a` is accumulated as a sum of nonnegative
/// terms, so the derivative keeps its relative accuracy when `X_{n+1}` is
/// nearly a point mass at 0.
pub fn gf_step_point<T: Scalar>(x: &FinitePmf<T>, model: &ModelSpec<T>, s: T) -> Result<PgfPoint<T>, EvolveError> {
    if !(s > T::zero()) {
        return Err(EvolveError::NonPositivePoint(s.to_f64().unwrap_or(f64::NAN)));
    }
    let a = model.tax();
    let law = model.offspring();
    let j = a + 1;
    let ln_s = s.ln();

    // tails of F at s, divided by F(s): tau[i] = sum_{k>=i} p_k s^k / F, ups[i] = sum_{k>=i} k p_k s^k / F
    let pt = x.pgf_point(s);
    let ln_f = pt.ln_value;
    let mut tau = vec![T::zero(); j + 1];
    let mut ups = vec![T::zero(); j + 1];
    let (mut t_acc, mut u_acc) = (T::zero(), T::zero());
    let weights = x.weights();
    for k in (0..weights.len()).rev() {
        if weights[k] > T::zero() {
            let e = (weights[k].ln() + T::from_count(k) * ln_s - ln_f).exp();
            t_acc += e;
            u_acc += T::from_count(k) * e;
        }
        if k <= j {
            tau[k] = t_acc;
            ups[k] = u_acc;
        }
    }

    // T_j(F^n) / F^n and its s d/ds counterpart, built up through
    // T_j(F B) = F T_j(B) + sum_{k<j} b_k s^k T_{j-k}(F), all terms nonnegative
    let base = x.low_window(j);
    let mut power = base.clone();
    let (mut tau_n, mut ups_n) = (tau[j], ups[j]);
    let mut terms: Vec<(T, T, T)> = Vec::new();
    for n in 1..=law.cutoff() {
        if n > 1 {
            let m = T::from_count(n - 1);
            let (mut t_next, mut u_next) = (tau_n, ups[0] * tau_n + ups_n);
            for (k, &b) in power.iter().enumerate().take(j) {
                if b > T::zero() {
                    let ell = (b.ln() + T::from_count(k) * ln_s - m * ln_f).exp();
                    t_next += ell * tau[j - k];
                    u_next += ell * (T::from_count(k) * tau[j - k] + ups[j - k]);
                }
            }
            tau_n = t_next;
            ups_n = u_next;
            power = convolve_prefix(&power, &base, j);
        }
        let g = law.prob(n);
        if g > T::zero() {
            terms.push((g.ln() + T::from_count(n) * ln_f, tau_n, ups_n));
        }
    }

    // F_{n+1}(s) = P(S <= a) + s^{-a} T_{a+1}(G o F), s F'_{n+1}(s) = s^{-a} (U_{a+1} - a T_{a+1})(G o F)
    let low = compound_low_coeffs(&base, law, j);
    let head: T = low.iter().copied().fold(T::zero(), |acc, c| acc + c);
    let top = terms.iter().map(|t| t.0).fold(T::neg_infinity(), T::max);
    let (mut t_sum, mut u_sum) = (T::zero(), T::zero());
    for &(ln_w, t, u) in &terms {
        let w = (ln_w - top).exp();
        t_sum += w * t;
        u_sum += w * u;
    }
    let slope = u_sum - T::from_count(a) * t_sum;
    let ln_scale = top - T::from_count(a) * ln_s;
    let ln_value = match (head > T::zero(), t_sum > T::zero()) {
        (true, true) => log_add_exp(head.ln(), ln_scale + t_sum.ln()),
        (true, false) => head.ln(),
        (false, true) => ln_scale + t_sum.ln(),
        (false, false) => T::neg_infinity(),
    };
    let tilted_mean = if slope > T::zero() {
        (ln_scale + slope.ln() - ln_value).exp()
    } else {
        T::zero()
    };
    Ok(PgfPoint { ln_value, tilted_mean })
}

/// `F_{n+1}(s)` via the generating-function recursion; may overflow to infinity.
pub fn gf_step_eval<T: Scalar>(x: &FinitePmf<T>, model: &ModelSpec<T>, s: T) -> Result<T, EvolveError> {
    Ok(gf_step_point(x, model, s)?.value())
}

/// `F'_{n+1}(s)` via the differentiated recursion.
pub fn gf_step_deriv<T: Scalar>(x: &FinitePmf<T>, model: &ModelSpec<T>, s: T) -> Result<T, EvolveError> {
    Ok(gf_step_point(x, model, s)?.derivative(s))
}

/// `(E X_n / EN^n, (E X_n - a/(EN-1)) / EN^n)`.
pub fn q_bounds<T: Scalar>(mean_xn: T, n: usize, model: &ModelSpec<T>) -> (T, T) {
    let en = model.offspring().mean_n();
    let shifted = mean_xn - model.mean_offset();
    let ln_scale = T::from_count(n) * en.ln();
    if ln_scale < T::lit(POW_LOG_SWITCH.ln()) {
        let scale = ln_scale.exp();
        (mean_xn / scale, shifted / scale)
    } else {
        let div = |v: T| {
            if v == T::zero() {
                T::zero()
            } else {
                v.signum() * (v.abs().ln() - ln_scale).exp()
            }
        };
        (div(mean_xn), div(shifted))
    }
}

/// Exact low part of a law whose full support is no longer stored.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowState<T> {
    /// `P(X_n = j)` for `j < low.len()`.
    pub low: Vec<T>,
    /// Lower bound for `E X_n` (exact when `leak == 0`).
    pub mean: T,
    pub leak: T,
    /// Upper bound on the largest value of `X_n`.
    pub support_bound: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum PathState<T> {
    Full(FinitePmf<T>),
    Window(WindowState<T>),
}

impl<T: Scalar> PathState<T> {
    pub fn mean(&self) -> T {
        match self {
            PathState::Full(p) => p.mean(),
            PathState::Window(w) => w.mean,
        }
    }

    pub fn leaked_mass(&self) -> T {
        match self {
            PathState::Full(p) => p.leaked_mass(),
            PathState::Window(w) => w.leak,
        }
    }

    pub fn support_max(&self) -> usize {
        match self {
            PathState::Full(p) => p.support_max(),
            PathState::Window(w) => w.support_bound,
        }
    }

    /// Known prefix of the law; `None` if the window is shorter than `len`.
    pub fn low_window(&self, len: usize) -> Option<Vec<T>> {
        match self {
            PathState::Full(p) => Some(p.low_window(len)),
            PathState::Window(w) if w.low.len() >= len => Some(w.low[..len].to_vec()),
            PathState::Window(_) => None,
        }
    }

    pub fn as_full(&self) -> Option<&FinitePmf<T>> {
        match self {
            PathState::Full(p) => Some(p),
            PathState::Window(_) => None,
        }
    }

    pub fn is_full(&self) -> bool {
        matches!(self, PathState::Full(_))
    }
}

/// Driver for `X_0, X_1, ...` up to a fixed horizon.
#[derive(Clone, Debug)]
pub struct Evolution<'m, T> {
    model: &'m ModelSpec<T>,
    opts: EvolveOptions<T>,
    horizon: usize,
    n: usize,
    state: PathState<T>,
}

impl<'m, T: Scalar> Evolution<'m, T> {
    pub fn new(model: &'m ModelSpec<T>, horizon: usize, opts: EvolveOptions<T>) -> Self {
        Self {
            model,
            opts,
            horizon,
            n: 0,
            state: PathState::Full(model.x0().clone()),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn state(&self) -> &PathState<T> {
        &self.state
    }

    pub fn model(&self) -> &ModelSpec<T> {
        self.model
    }

    /// First `a` coefficients of the compound law feeding the next step.
    pub fn next_low_coeffs(&self) -> Result<Vec<T>, EvolveError> {
        let a = self.model.tax();
        let low = self.state.low_window(a).ok_or(EvolveError::WindowExhausted {
            step: self.n,
            window: 0,
            tax: a,
        })?;
        Ok(compound_low_coeffs(&low, self.model.offspring(), a))
    }

    /// Moves to generation `n + 1`.
    pub fn advance(&mut self) -> Result<(), EvolveError> {
        let next_n = self.n + 1;
        let next = match &self.state {
            PathState::Full(x) => match step(x, self.model, &self.opts) {
                Ok(p) => PathState::Full(p),
                Err(EvolveError::Dist {
                    source: DistError::SupportTooLarge { .. },
                    ..
                }) if self.opts.window_fallback => {
                    let remaining = self.horizon.saturating_sub(self.n).max(1);
                    let len = self.model.tax() * (remaining + 1);
                    let window = WindowState {
                        low: x.low_window(len),
                        mean: x.mean(),
                        leak: x.leaked_mass(),
                        support_bound: x.support_max(),
                    };
                    PathState::Window(window_step(&window, self.model))
                }
                Err(e) => return Err(e.at_step(next_n)),
            },
            PathState::Window(w) => {
                if w.low.len() < self.model.tax() {
                    return Err(EvolveError::WindowExhausted {
                        step: next_n,
                        window: w.low.len(),
                        tax: self.model.tax(),
                    });
                }
                PathState::Window(window_step(w, self.model))
            }
        };
        check_budget(next.leaked_mass(), &self.opts, next_n)?;
        self.state = next;
        self.n = next_n;
        Ok(())
    }
}

fn window_step<T: Scalar>(w: &WindowState<T>, model: &ModelSpec<T>) -> WindowState<T> {
    let a = model.tax();
    let law = model.offspring();
    let len = w.low.len();
    let s_low = compound_low_coeffs(&w.low, law, len);
    let out_len = len - a;
    let mut low = vec![T::zero(); out_len];
    if out_len > 0 {
        low[0] = s_low[..=a.min(len - 1)].iter().copied().sum();
        for (j, slot) in low.iter_mut().enumerate().skip(1) {
            *slot = s_low[j + a];
        }
    }
    let correction: T = s_low.iter().take(a).enumerate().map(|(k, &p)| T::from_count(a - k) * p).sum();
    let mean = law.mean_n() * w.mean - T::from_count(a) + correction;
    let retained = T::one() - w.leak;
    let mut leak = law.truncation_leak();
    for (k, pk) in law.probs().iter() {
        leak += pk * (T::one() - retained.powi(k as i32));
    }
    let support_bound = law.cutoff().saturating_mul(w.support_bound).saturating_sub(a);
    WindowState {
        low,
        mean,
        leak,
        support_bound,
    }
}

/// Where a trace row came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowSource {
    /// Full law available.
    Full,
    /// Mean from the exact low-window recursion.
    Window,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceRow<T> {
    pub n: usize,
    pub mean_xn: T,
    pub q_upper: T,
    pub q_lower: T,
    pub support_max: usize,
    pub cumulative_leak: T,
    pub source: RowSource,
}

/// Per-generation means and free-energy bracket.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EvolutionTrace<T> {
    pub rows: Vec<TraceRow<T>>,
}

impl<T: Scalar> EvolutionTrace<T> {
    pub fn last(&self) -> Option<&TraceRow<T>> {
        self.rows.last()
    }

    /// First generation whose lower bound is strictly positive.
    pub fn first_positive_lower(&self) -> Option<usize> {
        self.rows.iter().find(|r| r.q_lower > T::zero()).map(|r| r.n)
    }

    /// Largest increase of `q_upper` and largest decrease of `q_lower`
    /// between consecutive rows (both `<= 0` when the bracket is monotone).
    pub fn monotonicity_violation(&self) -> (T, T) {
        let mut up = T::neg_infinity();
        let mut low = T::neg_infinity();
        for w in self.rows.windows(2) {
            up = up.max(w[1].q_upper - w[0].q_upper);
            low = low.max(w[0].q_lower - w[1].q_lower);
        }
        (up, low)
    }
}

fn row_for<T: Scalar>(n: usize, state: &PathState<T>, model: &ModelSpec<T>) -> TraceRow<T> {
    let mean = state.mean();
    let (q_upper, q_lower) = q_bounds(mean, n, model);
    TraceRow {
        n,
        mean_xn: mean,
        q_upper,
        q_lower,
        support_max: state.support_max(),
        cumulative_leak: state.leaked_mass(),
        source: if state.is_full() { RowSource::Full } else { RowSource::Window },
    }
}

/// Evolution that stopped early; `partial` holds every completed row.
#[derive(Clone, Debug, PartialEq)]
pub struct EvolveFailure<T> {
    pub partial: EvolutionTrace<T>,
    pub error: EvolveError,
}

impl<T> std::fmt::Display for EvolveFailure<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({} rows completed)", self.error, self.partial.rows.len())
    }
}

impl<T: std::fmt::Debug> std::error::Error for EvolveFailure<T> {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Runs `steps` generations from `x0` and records the bracket at each.
pub fn evolve<T: Scalar>(model: &ModelSpec<T>, steps: usize, opts: &EvolveOptions<T>) -> Result<EvolutionTrace<T>, EvolveFailure<T>> {
    let mut evo = Evolution::new(model, steps, *opts);
    let mut trace = EvolutionTrace {
        rows: vec![row_for(0, evo.state(), model)],
    };
    while evo.n() < steps {
        if let Err(error) = evo.advance() {
            return Err(EvolveFailure { partial: trace, error });
        }
        trace.rows.push(row_for(evo.n(), evo.state(), model));
    }
    Ok(trace)
}

/// Generating-function values at `s` along the evolution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PathPoint<T> {
    pub n: usize,
    pub point: PgfPoint<T>,
    pub source: RowSource,
}

/// `F_n(s)` for `n = 0..=steps` and every requested `s`, taken from the full
/// law while it is stored and continued with [`gf_advance`] afterwards.
pub fn pgf_trajectories<T: Scalar>(
    model: &ModelSpec<T>,
    points: &[T],
    steps: usize,
    opts: &EvolveOptions<T>,
) -> Result<Vec<Vec<PathPoint<T>>>, EvolveError> {
    if let Some(bad) = points.iter().find(|s| !(**s > T::zero())) {
        return Err(EvolveError::NonPositivePoint(bad.to_f64().unwrap_or(f64::NAN)));
    }
    let mut evo = Evolution::new(model, steps, *opts);
    let mut out: Vec<Vec<PathPoint<T>>> = points
        .iter()
        .map(|&s| {
            vec![PathPoint {
                n: 0,
                point: model.x0().pgf_point(s),
                source: RowSource::Full,
            }]
        })
        .collect();
    while evo.n() < steps {
        let low = evo.next_low_coeffs()?;
        evo.advance()?;
        let n = evo.n();
        for (traj, &s) in out.iter_mut().zip(points) {
            let entry = match evo.state() {
                PathState::Full(p) => PathPoint {
                    n,
                    point: p.pgf_point(s),
                    source: RowSource::Full,
                },
                PathState::Window(_) => {
                    let prev = traj.last().expect("trajectory starts at n = 0").point;
                    let point = gf_advance(prev, &low, model.offspring(), model.tax(), s);
                    PathPoint {
                        n,
                        point,
                        source: RowSource::Window,
                    }
                }
            };
            traj.push(entry);
        }
    }
    Ok(out)
}
