//! Sufficient phase criteria and the inequalities behind them, as runnable checks.
//!
//! The criterion functional is `D_0(s, m) = (m - 1) s F_0'(s) - a F_0(s)`.
//! A model is supercritical when `D_0((EN)^{1/a}, EN) > 0`, and subcritical
//! when `N <= M` almost surely and `D_0(1 + (M - 1)/a, M) < 0`. Everything
//! else is reported as undetermined.

use serde::Serialize;

use crate::error::{CheckError, EvolveError};
use crate::evolution::{pgf_trajectories, Evolution, EvolveOptions, PathState, RowSource};
use crate::model::ModelSpec;
use crate::offspring::OffspringLaw;
use crate::pmf::{FinitePmf, PgfPoint, PgfView, TruncatedGeometric};
use crate::scalar::Scalar;

/// Half-width of the band around zero inside which no strict sign is claimed.
pub const STRICT_BAND: f64 = 1e-12;
/// Absolute slack for the growth and contraction checks.
pub const CHECK_SLACK: f64 = 1e-9;
/// Slack for the association inequality.
pub const ASSOCIATION_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Supercritical,
    Subcritical,
    Undetermined,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Supercritical => "supercritical",
            Verdict::Subcritical => "subcritical",
            Verdict::Undetermined => "undetermined",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where the two criteria were evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EvaluationPoints<T> {
    /// `(EN)^{1/a}`
    pub s_super: T,
    /// `EN`
    pub m_super: T,
    /// `1 + (M - 1)/a`, when `N` is bounded
    pub s_sub: Option<T>,
    pub m_sub: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhaseVerdict<T> {
    pub verdict: Verdict,
    pub d_super: T,
    pub d_sub: Option<T>,
    pub points: EvaluationPoints<T>,
}

impl<T: Scalar> PhaseVerdict<T> {
    /// Why `d_sub` is missing, if it is.
    pub fn sub_unavailable_reason(&self) -> Option<&'static str> {
        self.d_sub.is_none().then_some("criterion 2 requires bounded N")
    }
}

/// An initial law on which `D_0` can be evaluated.
pub trait CriterionLaw<T: Scalar> {
    fn d0(&self, tax: usize, s: T, m: T) -> T;
}

impl<T: Scalar> CriterionLaw<T> for FinitePmf<T> {
    fn d0(&self, tax: usize, s: T, m: T) -> T {
        let direct = (m - T::one()) * s * self.pgf_deriv(s) - T::from_count(tax) * self.pgf_eval(s);
        if direct.is_finite() {
            direct
        } else {
            d0_from_point(self.pgf_point(s), tax, m)
        }
    }
}

impl<T: Scalar> CriterionLaw<T> for TruncatedGeometric<T> {
    fn d0(&self, tax: usize, s: T, m: T) -> T {
        d0_from_point(self.pgf_point(s), tax, m)
    }
}

/// `F(s) ((m - 1) R - a)` with `R = s F'(s) / F(s)`.
pub fn d0_from_point<T: Scalar>(point: PgfPoint<T>, tax: usize, m: T) -> T {
    let factor = (m - T::one()) * point.tilted_mean - T::from_count(tax);
    if factor == T::zero() {
        return T::zero();
    }
    factor.signum() * (point.ln_value + factor.abs().ln()).exp()
}

/// `D_0(s, m)` for the model's initial law.
pub fn d0<T: Scalar>(model: &ModelSpec<T>, s: T, m: T) -> T {
    model.x0().d0(model.tax(), s, m)
}

/// Applies both criteria to an initial law.
pub fn classify_law<T: Scalar, L: CriterionLaw<T>>(x0: &L, tax: usize, offspring: &OffspringLaw<T>) -> PhaseVerdict<T> {
    let en = offspring.mean_n();
    let s_super = en.powf(T::one() / T::from_count(tax));
    let d_super = x0.d0(tax, s_super, en);
    let (s_sub, m_sub, d_sub) = match offspring.bound_m() {
        Some(m) => {
            let s = T::one() + T::from_count(m - 1) / T::from_count(tax);
            (Some(s), Some(m), Some(x0.d0(tax, s, T::from_count(m))))
        }
        None => (None, None, None),
    };
    let band = T::lit(STRICT_BAND);
    let verdict = if d_super > band {
        Verdict::Supercritical
    } else if d_sub.is_some_and(|d| d < -band) {
        Verdict::Subcritical
    } else {
        Verdict::Undetermined
    };
    PhaseVerdict {
        verdict,
        d_super,
        d_sub,
        points: EvaluationPoints {
            s_super,
            m_super: en,
            s_sub,
            m_sub,
        },
    }
}

pub fn classify<T: Scalar>(model: &ModelSpec<T>) -> PhaseVerdict<T> {
    classify_law(model.x0(), model.tax(), model.offspring())
}

/// One generation of the growth check, in units of `F_n(s)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GrowthRow<T> {
    pub n: usize,
    /// `(EN - 1) R_n - a`, so that `lhs(n) = F_n(s) * lhs_scaled`.
    pub lhs_scaled: T,
    /// `(EN / s^a)^n lhs(0) / F_n(s)`.
    pub floor_scaled: T,
    /// `ln F_n(s)`.
    pub ln_scale: T,
    pub source: RowSource,
}

impl<T: Scalar> GrowthRow<T> {
    /// `(EN - 1) s F_n'(s) - a F_n(s)`; may overflow.
    pub fn lhs(&self) -> T {
        self.lhs_scaled * self.ln_scale.exp()
    }

    /// `(EN / s^a)^n lhs(0)`; may overflow.
    pub fn floor(&self) -> T {
        self.floor_scaled * self.ln_scale.exp()
    }

    /// `lhs >= floor - slack`.
    pub fn holds(&self, slack: T) -> bool {
        self.lhs_scaled >= self.floor_scaled - slack * (-self.ln_scale).exp()
    }

    /// `lhs / floor - 1`.
    pub fn relative_margin(&self) -> T {
        self.lhs_scaled / self.floor_scaled - T::one()
    }
}

/// Geometric growth of `(EN - 1) s F_n'(s) - a F_n(s)` for `1 < s < (EN)^{1/a}`.
///
/// Requires `lhs(0) = D_0(s, EN) > 0`; the growth chain only propagates a
/// positive starting value.
pub fn lemma1_growth_check<T: Scalar>(
    model: &ModelSpec<T>,
    s: T,
    steps: usize,
    opts: &EvolveOptions<T>,
) -> Result<Vec<GrowthRow<T>>, CheckError> {
    let en = model.offspring().mean_n();
    let a = T::from_count(model.tax());
    let s_max = en.powf(T::one() / a);
    if !(s > T::one() && s < s_max) {
        return Err(CheckError::Precondition(format!(
            "s = {s} must lie in (1, (EN)^(1/a)) = (1, {s_max})"
        )));
    }
    let trajectory = pgf_trajectories(model, &[s], steps, opts)?.remove(0);
    let first = trajectory[0].point;
    let lhs0_scaled = (en - T::one()) * first.tilted_mean - a;
    if !(lhs0_scaled > T::zero()) {
        return Err(CheckError::Precondition(format!("D_0(s, EN) must be positive at s = {s}")));
    }
    let ln_rate = en.ln() - a * s.ln();
    Ok(trajectory
        .iter()
        .map(|p| GrowthRow {
            n: p.n,
            lhs_scaled: (en - T::one()) * p.point.tilted_mean - a,
            floor_scaled: if p.n == 0 {
                lhs0_scaled
            } else {
                lhs0_scaled * (T::from_count(p.n) * ln_rate + first.ln_value - p.point.ln_value).exp()
            },
            ln_scale: p.point.ln_value,
            source: p.source,
        })
        .collect())
}

/// Worst value of `P(X_n >= ak + 1) (EN - 1) (EN)^k / a`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailReport<T> {
    pub worst_ratio: T,
    pub worst_n: usize,
    pub worst_k: usize,
    /// Number of `(n, k)` pairs inspected.
    pub pairs: usize,
}

/// Tail bound `P(X_n >= ak + 1) <= a / ((EN - 1) (EN)^k)`, valid when `Q = 0`.
/// Refuses models that are not classified subcritical.
pub fn lemma2_tail_check<T: Scalar>(model: &ModelSpec<T>, steps: usize, opts: &EvolveOptions<T>) -> Result<TailReport<T>, CheckError> {
    let verdict = classify(model);
    if verdict.verdict != Verdict::Subcritical {
        return Err(CheckError::Precondition(format!(
            "tail bound needs a subcritical model, got {}",
            verdict.verdict
        )));
    }
    let a = model.tax();
    let en = model.offspring().mean_n();
    let ln_const = (en - T::one()).ln() - T::from_count(a).ln();
    let ln_en = en.ln();
    let mut report = TailReport {
        worst_ratio: T::zero(),
        worst_n: 0,
        worst_k: 0,
        pairs: 0,
    };
    let mut evo = Evolution::new(model, steps, *opts);
    loop {
        let n = evo.n();
        let tails = match evo.state() {
            PathState::Full(p) => suffix_sums(p.weights()),
            PathState::Window(w) => {
                // only thresholds inside the window are known
                let total = T::one() - w.leak;
                let mut below = T::zero();
                w.low
                    .iter()
                    .map(|&pj| {
                        let t = (total - below).max(T::zero());
                        below += pj;
                        t
                    })
                    .collect()
            }
        };
        let mut k = 1;
        while a * k + 1 < tails.len() {
            let tail = tails[a * k + 1];
            report.pairs += 1;
            if tail > T::zero() {
                let ratio = (tail.ln() + T::from_count(k) * ln_en + ln_const).exp();
                if ratio > report.worst_ratio {
                    report.worst_ratio = ratio;
                    report.worst_n = n;
                    report.worst_k = k;
                }
            }
            k += 1;
        }
        if n >= steps {
            break;
        }
        evo.advance()?;
    }
    Ok(report)
}

/// `tails[t] = sum_{j >= t} w_j`, accumulated from the top.
fn suffix_sums<T: Scalar>(w: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); w.len()];
    let mut acc = T::zero();
    for (slot, &wj) in out.iter_mut().zip(w).rev() {
        acc += wj;
        *slot = acc;
    }
    out
}

/// One generation of the contraction check, in units of `F_{n+1}(s)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ContractionRow<T> {
    pub n: usize,
    /// Sign-carrying `D_n(s) / F_n(s)`.
    pub d_current_scaled: T,
    /// `D_{n+1}(s) / F_{n+1}(s)`.
    pub d_next_scaled: T,
    /// `M G(F_n(s)) / (F_n(s) s^a) D_n(s) / F_{n+1}(s)`.
    pub bound_scaled: T,
    /// `ln F_{n+1}(s)`.
    pub ln_scale: T,
}

impl<T: Scalar> ContractionRow<T> {
    /// `D_{n+1}(s)`; may overflow.
    pub fn d_next(&self) -> T {
        self.d_next_scaled * self.ln_scale.exp()
    }

    /// `M G(F_n(s)) / (F_n(s) s^a) D_n(s)`; may overflow.
    pub fn contraction_bound(&self) -> T {
        self.bound_scaled * self.ln_scale.exp()
    }

    /// `d_next <= bound + rel |bound|`.
    pub fn holds(&self, rel: T) -> bool {
        self.d_next_scaled <= self.bound_scaled + rel * self.bound_scaled.abs()
    }

    pub fn relative_margin(&self) -> T {
        (self.bound_scaled - self.d_next_scaled) / self.bound_scaled.abs()
    }
}

/// Contraction `D_{n+1}(s) <= M G(F_n(s)) / (F_n(s) s^a) D_n(s)` with
/// `D_n(s) = (M - 1) s F_n'(s) - a F_n(s)`, for bounded `N` and
/// `s >= 1 + (M - 1)/a`.
pub fn lemma3_contraction_check<T: Scalar>(
    model: &ModelSpec<T>,
    s: T,
    steps: usize,
    opts: &EvolveOptions<T>,
) -> Result<Vec<ContractionRow<T>>, CheckError> {
    let Some(m) = model.offspring().bound_m() else {
        return Err(CheckError::Precondition("requires bounded N".into()));
    };
    let a = model.tax();
    let threshold = T::one() + T::from_count(m - 1) / T::from_count(a);
    if s < threshold * (T::one() - T::lit(1e-15)) {
        return Err(CheckError::Precondition(format!("s = {s} is below 1 + (M - 1)/a = {threshold}")));
    }
    let trajectory = pgf_trajectories(model, &[s], steps, opts)?.remove(0);
    let mf = T::from_count(m);
    let scaled_d = |p: &PgfPoint<T>| (mf - T::one()) * p.tilted_mean - T::from_count(a);
    let law = model.offspring();
    Ok(trajectory
        .windows(2)
        .map(|w| {
            let (cur, next) = (&w[0].point, &w[1].point);
            let d_cur = scaled_d(cur);
            let ln_g = law.g_point_ln(cur.ln_value).ln_value;
            let factor = mf * (ln_g - T::from_count(a) * s.ln() - next.ln_value).exp();
            ContractionRow {
                n: w[0].n,
                d_current_scaled: d_cur,
                d_next_scaled: scaled_d(next),
                bound_scaled: factor * d_cur,
                ln_scale: next.ln_value,
            }
        })
        .collect())
}

/// `(E[X s^X], E X E s^X)` for `s > 1`.
pub fn lemma4_association_check<T: Scalar>(p: &FinitePmf<T>, s: T) -> Result<(T, T), CheckError> {
    if !(s > T::one()) {
        return Err(CheckError::Precondition(format!("s = {s} must exceed 1")));
    }
    Ok((p.tilted_first_moment(s), p.mean() * p.pgf_eval(s)))
}

/// `v G'(v)` next to its bounds `EN G(v)` and (bounded `N`) `M G(v)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AssociationBounds<T> {
    pub vgprime: T,
    pub lower: T,
    pub upper: Option<T>,
}

impl<T: Scalar> AssociationBounds<T> {
    pub fn holds(&self, rel: T) -> bool {
        let tol = rel * self.vgprime.abs();
        self.lower <= self.vgprime + tol && self.upper.is_none_or(|u| self.vgprime <= u + tol)
    }
}

pub fn offspring_association_check<T: Scalar>(law: &OffspringLaw<T>, v: T) -> Result<AssociationBounds<T>, CheckError> {
    if !(v >= T::one()) {
        return Err(CheckError::Precondition(format!("v = {v} must be at least 1")));
    }
    let g = law.g_eval(v);
    Ok(AssociationBounds {
        vgprime: v * law.g_deriv(v),
        lower: law.mean_n() * g,
        upper: law.bound_m().map(|m| T::from_count(m) * g),
    })
}

/// `min_{1<=y<=a} [y (EN - 1) + a - a s^y]`; nonnegative for `s <= (EN)^{1/a}`.
pub fn supercritical_tax_margin<T: Scalar>(tax: usize, en: T, s: T) -> T {
    let a = T::from_count(tax);
    (1..=tax)
        .map(|y| T::from_count(y) * (en - T::one()) + a - a * s.powi(y as i32))
        .fold(T::infinity(), T::min)
}

/// `max_{1<=y<=a} [y (M - 1) + a - a s^y]`; nonpositive for `s >= 1 + (M - 1)/a`.
pub fn subcritical_tax_margin<T: Scalar>(tax: usize, m: usize, s: T) -> T {
    let a = T::from_count(tax);
    (1..=tax)
        .map(|y| T::from_count(y * (m - 1)) + a - a * s.powi(y as i32))
        .fold(T::neg_infinity(), T::max)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", content = "reason", rename_all = "UPPERCASE")]
pub enum LemmaStatus {
    Pass,
    Fail,
    Skipped(String),
}

/// One line of the lemma audit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaOutcome {
    pub lemma: &'static str,
    pub status: LemmaStatus,
    /// Smallest margin seen (positive means slack to spare).
    pub worst_margin: Option<f64>,
    pub detail: String,
}

impl LemmaOutcome {
    fn skipped(lemma: &'static str, reason: impl Into<String>) -> Self {
        Self {
            lemma,
            status: LemmaStatus::Skipped(reason.into()),
            worst_margin: None,
            detail: String::new(),
        }
    }

    fn judged(lemma: &'static str, ok: bool, margin: f64, detail: String) -> Self {
        Self {
            lemma,
            status: if ok { LemmaStatus::Pass } else { LemmaStatus::Fail },
            worst_margin: Some(margin),
            detail,
        }
    }
}

/// Settings for [`lemma_audit`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditConfig<T> {
    /// Multipliers of `(EN)^{1/a}` for the growth check; points outside `(1, (EN)^{1/a})` are dropped.
    pub growth_fractions: Vec<T>,
    pub growth_steps: usize,
    pub tail_steps: usize,
    /// Multipliers of `1 + (M - 1)/a` for the contraction check.
    pub contraction_multipliers: Vec<T>,
    pub contraction_steps: usize,
    /// Points `s > 1` for the association inequality on `X_0..X_{steps}`.
    pub association_points: Vec<T>,
    pub association_steps: usize,
    /// Points `v >= 1` for the offspring inequalities.
    pub offspring_points: Vec<T>,
    pub evolve: EvolveOptions<T>,
}

impl<T: Scalar> Default for AuditConfig<T> {
    fn default() -> Self {
        Self {
            growth_fractions: vec![T::lit(0.9), T::lit(0.95), T::lit(0.99)],
            growth_steps: 8,
            tail_steps: 20,
            contraction_multipliers: vec![T::one(), T::lit(2.0)],
            contraction_steps: 10,
            association_points: vec![T::lit(1.5), T::lit(2.0), T::lit(4.0)],
            association_steps: 8,
            offspring_points: vec![T::one(), T::lit(1.5), T::lit(2.0)],
            evolve: EvolveOptions::leak_free(),
        }
    }
}

/// Runs every check whose hypotheses the model satisfies.
pub fn lemma_audit<T: Scalar>(model: &ModelSpec<T>, cfg: &AuditConfig<T>) -> Result<Vec<LemmaOutcome>, EvolveError> {
    let verdict = classify(model);
    let law = model.offspring();
    let en = law.mean_n();
    let a = model.tax();
    let to_f = |v: T| v.to_f64().unwrap_or(f64::NAN);
    let mut out = Vec::new();

    // growth
    let s_max = en.powf(T::one() / T::from_count(a));
    let grid: Vec<T> = cfg
        .growth_fractions
        .iter()
        .map(|f| *f * s_max)
        .filter(|s| *s > T::one() && *s < s_max)
        .collect();
    let usable: Vec<T> = grid.iter().copied().filter(|&s| model.x0().d0(a, s, en) > T::zero()).collect();
    if usable.is_empty() {
        out.push(LemmaOutcome::skipped("lemma1_growth", "D_0(s, EN) <= 0 at every grid point"));
    } else {
        let mut ok = true;
        let mut worst = f64::INFINITY;
        for &s in &usable {
            let rows = lemma1_growth_check(model, s, cfg.growth_steps, &cfg.evolve).map_err(unwrap_evolve)?;
            for r in &rows {
                ok &= r.holds(T::lit(CHECK_SLACK));
                worst = worst.min(to_f(r.relative_margin()));
            }
        }
        out.push(LemmaOutcome::judged(
            "lemma1_growth",
            ok,
            worst,
            format!("{} point(s), n <= {}", usable.len(), cfg.growth_steps),
        ));
    }

    // tail bound
    if verdict.verdict == Verdict::Subcritical {
        let rep = lemma2_tail_check(model, cfg.tail_steps, &cfg.evolve).map_err(unwrap_evolve)?;
        let ok = rep.worst_ratio <= T::one() + T::lit(CHECK_SLACK);
        out.push(LemmaOutcome::judged(
            "lemma2_tail",
            ok,
            1.0 - to_f(rep.worst_ratio),
            format!(
                "worst ratio {:.6e} at n = {}, k = {}",
                to_f(rep.worst_ratio),
                rep.worst_n,
                rep.worst_k
            ),
        ));
    } else {
        out.push(LemmaOutcome::skipped(
            "lemma2_tail",
            format!("requires a subcritical verdict (got {})", verdict.verdict),
        ));
    }

    // contraction
    match law.bound_m() {
        None => out.push(LemmaOutcome::skipped("lemma3_contraction", "requires bounded N")),
        Some(m) => {
            let base = T::one() + T::from_count(m - 1) / T::from_count(a);
            let mut ok = true;
            let mut worst = f64::INFINITY;
            let mut sign_ok = true;
            for &mult in &cfg.contraction_multipliers {
                let s = base * mult;
                let rows = lemma3_contraction_check(model, s, cfg.contraction_steps, &cfg.evolve).map_err(unwrap_evolve)?;
                for r in &rows {
                    ok &= r.holds(T::lit(CHECK_SLACK));
                    if r.bound_scaled != T::zero() {
                        worst = worst.min(to_f(r.relative_margin()));
                    }
                }
                if rows.first().is_some_and(|r| r.d_current_scaled < T::zero()) {
                    sign_ok &= rows.iter().all(|r| r.d_next_scaled < T::zero());
                }
            }
            out.push(LemmaOutcome::judged(
                "lemma3_contraction",
                ok && sign_ok,
                worst,
                format!(
                    "s in {{{}}} x (1 + (M - 1)/a), n <= {}; sign persistence {}",
                    fmt_list(&cfg.contraction_multipliers),
                    cfg.contraction_steps,
                    if sign_ok { "ok" } else { "violated" }
                ),
            ));
        }
    }

    // association on X_0..X_steps
    let mut ok = true;
    let mut worst = f64::INFINITY;
    let mut evo = Evolution::new(model, cfg.association_steps, cfg.evolve);
    loop {
        if let PathState::Full(p) = evo.state() {
            for &s in &cfg.association_points {
                if let Ok((lhs, rhs)) = lemma4_association_check(p, s) {
                    if lhs.is_finite() && rhs.is_finite() {
                        ok &= lhs >= rhs - T::lit(ASSOCIATION_SLACK);
                        worst = worst.min(to_f(lhs - rhs));
                    }
                }
            }
        }
        if evo.n() >= cfg.association_steps {
            break;
        }
        evo.advance()?;
    }
    out.push(LemmaOutcome::judged(
        "lemma4_association",
        ok,
        worst,
        format!("s in {{{}}}, n <= {}", fmt_list(&cfg.association_points), cfg.association_steps),
    ));

    // offspring inequalities
    let mut ok = true;
    let mut worst = f64::INFINITY;
    for &v in &cfg.offspring_points {
        if let Ok(b) = offspring_association_check(law, v) {
            ok &= b.holds(T::lit(ASSOCIATION_SLACK));
            worst = worst.min(to_f(b.vgprime - b.lower));
            if let Some(u) = b.upper {
                worst = worst.min(to_f(u - b.vgprime));
            }
        }
    }
    out.push(LemmaOutcome::judged(
        "offspring_association",
        ok,
        worst,
        format!("v in {{{}}}", fmt_list(&cfg.offspring_points)),
    ));

    Ok(out)
}

fn unwrap_evolve(e: CheckError) -> EvolveError {
    match e {
        CheckError::Evolve(e) => e,
        CheckError::Precondition(msg) => unreachable!("audit filtered preconditions: {msg}"),
    }
}

fn fmt_list<T: Scalar>(v: &[T]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn model(a: usize, x0: &[(usize, f64)], n: OffspringLaw<f64>) -> ModelSpec<f64> {
        ModelSpec::new(a, FinitePmf::from_pairs(x0.iter().copied()).unwrap(), n).unwrap()
    }

    fn two_point(a: usize, high: usize, p: f64) -> ModelSpec<f64> {
        model(a, &[(0, 1.0 - p), (high, p)], OffspringLaw::deterministic(2).unwrap())
    }

    #[test]
    fn d0_examples() {
        // 5p - 1
        assert_relative_eq!(d0(&two_point(1, 2, 0.5), 2.0, 2.0), 1.5, max_relative = 1e-15);
        let r2 = 2f64.sqrt();
        // (2 sqrt 2 + 2) p - 2
        assert_relative_eq!(
            d0(&two_point(2, 3, 0.5), r2, 2.0),
            (2.0 * r2 + 2.0) * 0.5 - 2.0,
            max_relative = 1e-14
        );
        let m = two_point(2, 3, 0.3);
        for s in [0.5, 1.2, 3.0] {
            assert_relative_eq!(d0(&m, s, 1.0), -2.0 * m.x0().pgf_eval(s), max_relative = 1e-15);
        }
    }

    #[test]
    fn classify_examples() {
        let v = classify(&two_point(1, 2, 0.5));
        assert_eq!(v.verdict, Verdict::Supercritical);
        assert_relative_eq!(v.d_super, 1.5, max_relative = 1e-15);

        let v = classify(&two_point(1, 2, 0.1));
        assert_eq!(v.verdict, Verdict::Subcritical);
        assert_relative_eq!(v.d_sub.unwrap(), -0.5, max_relative = 1e-14);
        assert_eq!(v.points.s_sub, Some(2.0));
        assert_eq!(v.points.s_super, 2.0);

        let v = classify(&model(2, &[(0, 0.6), (3, 0.4)], OffspringLaw::deterministic(2).unwrap()));
        assert_eq!(v.verdict, Verdict::Undetermined);
        assert_relative_eq!(v.d_super, (2.0 * 2f64.sqrt() + 2.0) * 0.4 - 2.0, max_relative = 1e-13);
        assert_relative_eq!(v.d_sub.unwrap(), 5.375 * 0.4 - 2.0, max_relative = 1e-13);
    }

    #[test]
    fn unbounded_offspring_never_subcritical() {
        let m = model(1, &[(0, 0.99), (1, 0.01)], OffspringLaw::geometric(0.5).unwrap());
        let v = classify(&m);
        assert_eq!(v.d_sub, None);
        assert_eq!(v.verdict, Verdict::Undetermined);
        assert_eq!(v.sub_unavailable_reason(), Some("criterion 2 requires bounded N"));
    }

    #[test]
    fn growth_check_example() {
        let m = two_point(1, 2, 0.5);
        let rows = lemma1_growth_check(&m, 1.9, 8, &EvolveOptions::leak_free()).unwrap();
        assert_eq!(rows.len(), 9);
        assert_relative_eq!(rows[0].lhs(), 1.305, max_relative = 1e-13);
        assert_eq!(rows[0].lhs_scaled, rows[0].floor_scaled);
        assert!(rows.iter().all(|r| r.holds(1e-9)));
        assert!(lemma1_growth_check(&m, 2.0, 3, &EvolveOptions::leak_free()).is_err());
        assert!(lemma1_growth_check(&m, 1.0, 3, &EvolveOptions::leak_free()).is_err());
    }

    #[test]
    fn tail_check_example() {
        let m = two_point(1, 2, 0.1);
        let rep = lemma2_tail_check(&m, 20, &EvolveOptions::leak_free()).unwrap();
        assert!(rep.worst_ratio <= 1.0);
        assert!(rep.pairs > 0);
        // n = 0: P(X_0 >= 2) (EN - 1) EN / a = 0.2
        assert!(rep.worst_ratio >= 0.2 - 1e-15);
        assert!(lemma2_tail_check(&two_point(1, 2, 0.5), 3, &EvolveOptions::leak_free()).is_err());
    }

    #[test]
    fn tail_check_vacuous_below_tax() {
        let m = model(3, &[(0, 0.5), (3, 0.5)], OffspringLaw::deterministic(2).unwrap());
        assert_eq!(classify(&m).verdict, Verdict::Subcritical);
        let rep = lemma2_tail_check(&m, 0, &EvolveOptions::leak_free()).unwrap();
        assert_eq!(rep.worst_ratio, 0.0);
        assert_eq!(rep.pairs, 0);
    }

    #[test]
    fn contraction_check_example() {
        let m = two_point(1, 2, 0.1);
        let rows = lemma3_contraction_check(&m, 2.0, 10, &EvolveOptions::leak_free()).unwrap();
        assert_eq!(rows.len(), 10);
        assert!(rows.iter().all(|r| r.holds(1e-9)));
        assert!(rows[0].d_current_scaled < 0.0);
        assert!(rows.iter().all(|r| r.d_next_scaled < 0.0));
        assert!(lemma3_contraction_check(&m, 1.5, 3, &EvolveOptions::leak_free()).is_err());
        let unbounded = model(1, &[(0, 0.9), (2, 0.1)], OffspringLaw::geometric(0.5).unwrap());
        assert!(lemma3_contraction_check(&unbounded, 3.0, 3, &EvolveOptions::leak_free()).is_err());
    }

    #[test]
    fn association_examples() {
        let p = FinitePmf::from_pairs([(0, 0.5), (1, 0.5)]).unwrap();
        assert_eq!(lemma4_association_check(&p, 2.0).unwrap(), (1.0, 0.75));
        let c = FinitePmf::<f64>::point(4);
        let (l, r) = lemma4_association_check(&c, 3.0).unwrap();
        assert_eq!(l, r);
        let q = FinitePmf::from_pairs([(0, 0.9), (2, 0.1)]).unwrap();
        let (l, r) = lemma4_association_check(&q, 2.0).unwrap();
        assert_relative_eq!(l, 0.8, max_relative = 1e-15);
        assert_relative_eq!(r, 0.26, max_relative = 1e-15);
        assert!(lemma4_association_check(&q, 1.0).is_err());
    }

    #[test]
    fn offspring_association_examples() {
        let det = OffspringLaw::<f64>::deterministic(2).unwrap();
        let b = offspring_association_check(&det, 3.0).unwrap();
        assert_eq!((b.vgprime, b.lower), (18.0, 18.0));
        let uni = OffspringLaw::finite([(1, 0.5), (3, 0.5)]).unwrap();
        let b = offspring_association_check(&uni, 2.0).unwrap();
        assert_eq!((b.vgprime, b.lower, b.upper), (13.0, 10.0, Some(15.0)));
        let b = offspring_association_check(&uni, 1.0).unwrap();
        assert_eq!(b.vgprime, uni.mean_n());
        assert_eq!(b.lower, uni.mean_n());
        assert!(offspring_association_check(&uni, 0.5).is_err());
    }

    #[test]
    fn tax_margins_on_grid() {
        for a in 1..=4usize {
            for en in [1.2, 2.0, 3.5] {
                let s_max: f64 = f64::powf(en, 1.0 / a as f64);
                for i in 0..=20 {
                    let s = 1.0 + (s_max - 1.0) * i as f64 / 20.0;
                    assert!(supercritical_tax_margin(a, en, s) >= -1e-12, "a={a} en={en} s={s}");
                }
            }
            for m in 2..=5usize {
                let s0 = 1.0 + (m - 1) as f64 / a as f64;
                for i in 0..=20 {
                    let s = s0 + i as f64 * 0.25;
                    assert!(subcritical_tax_margin(a, m, s) <= 1e-12, "a={a} m={m} s={s}");
                }
            }
        }
    }

    #[test]
    fn audit_on_subcritical_bounded_instance() {
        let m = two_point(1, 2, 0.1);
        let out = lemma_audit(&m, &AuditConfig::default()).unwrap();
        let status = |name: &str| out.iter().find(|o| o.lemma == name).unwrap().status.clone();
        assert!(matches!(status("lemma1_growth"), LemmaStatus::Skipped(_)));
        assert_eq!(status("lemma2_tail"), LemmaStatus::Pass);
        assert_eq!(status("lemma3_contraction"), LemmaStatus::Pass);
        assert_eq!(status("lemma4_association"), LemmaStatus::Pass);
        assert_eq!(status("offspring_association"), LemmaStatus::Pass);
    }

    #[test]
    fn audit_on_unbounded_instance_skips_contraction() {
        let m = model(1, &[(0, 0.5), (2, 0.5)], OffspringLaw::geometric(0.6).unwrap());
        let out = lemma_audit(
            &m,
            &AuditConfig {
                growth_steps: 4,
                association_steps: 3,
                ..AuditConfig::default()
            },
        )
        .unwrap();
        let l3 = out.iter().find(|o| o.lemma == "lemma3_contraction").unwrap();
        assert_eq!(l3.status, LemmaStatus::Skipped("requires bounded N".into()));
        let l4 = out.iter().find(|o| o.lemma == "lemma4_association").unwrap();
        assert_eq!(l4.status, LemmaStatus::Pass);
    }
}
