//! JSON run configuration: parsed into raw structs, then validated field by field.

use std::path::Path;

use drphase_core::criteria::AuditConfig;
use drphase_core::evolution::{EvolveOptions, DEFAULT_EVOLVE_SUPPORT_CAP, DEFAULT_LEAK_BUDGET, DEFAULT_STEPS, DEFAULT_TAIL_EPS};
use drphase_core::offspring::OffspringLaw;
use drphase_core::pmf::{FinitePmf, TruncatedGeometric, DEFAULT_SUPPORT_CAP};
use drphase_core::scan::{FamilyKind, GEOMETRIC_X0_TAIL};
use drphase_core::{Family, ModelError, ModelSpec};
use serde::Deserialize;
use thiserror::Error;

pub const DEFAULT_POP_SIZE: usize = 100_000;
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_GRID_POINTS: usize = 101;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {message}")]
    Field { path: String, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn field(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    a: f64,
    x0: Option<RawInitial>,
    #[serde(rename = "N")]
    terms: RawTerms,
    #[serde(default)]
    evolve: RawEvolve,
    #[serde(default)]
    simulate: RawSimulate,
    scan: Option<RawScan>,
    #[serde(default)]
    lemmas: RawLemmas,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum RawInitial {
    Finite { pmf: Vec<(f64, f64)> },
    Geometric { p: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum RawTerms {
    Deterministic { n: f64 },
    Finite { pmf: Vec<(f64, f64)> },
    Geometric { p: f64 },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvolve {
    steps: Option<f64>,
    tail_eps: Option<f64>,
    leak_budget: Option<f64>,
    support_cap: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulate {
    pop_size: Option<f64>,
    steps: Option<f64>,
    seed: Option<u64>,
    exact: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScan {
    family: RawFamily,
    grid_points: Option<f64>,
    params: Option<Vec<f64>>,
    tolerance: Option<f64>,
    slow: Option<bool>,
    slow_steps: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum RawFamily {
    TwoPoint { high: f64 },
    GeometricX0,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLemmas {
    growth_fractions: Option<Vec<f64>>,
    growth_steps: Option<f64>,
    tail_steps: Option<f64>,
    contraction_multipliers: Option<Vec<f64>>,
    contraction_steps: Option<f64>,
    association_points: Option<Vec<f64>>,
    association_steps: Option<f64>,
    offspring_points: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolveSettings {
    pub steps: usize,
    pub options: EvolveOptions<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulateSettings {
    pub pop_size: usize,
    pub steps: usize,
    pub seed: Option<u64>,
    /// Also run the exact engine for comparison.
    pub exact: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanSettings {
    pub family: FamilyKind,
    pub grid_points: usize,
    pub params: Option<Vec<f64>>,
    pub tolerance: f64,
    pub slow: bool,
    pub slow_steps: usize,
}

/// A validated configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub tax: usize,
    pub offspring: OffspringLaw<f64>,
    x0: Option<FinitePmf<f64>>,
    pub evolve: EvolveSettings,
    pub simulate: SimulateSettings,
    pub scan: Option<ScanSettings>,
    pub audit: AuditConfig<f64>,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = serde_json::from_str(text)?;
        raw.validate()
    }

    /// The model; fails when `x0` is absent.
    pub fn model(&self) -> Result<ModelSpec, ConfigError> {
        let x0 = self.x0.clone().ok_or_else(|| field("x0", "required for this command"))?;
        Ok(ModelSpec::new(self.tax, x0, self.offspring.clone())?)
    }

    pub fn family(&self) -> Result<Family, ConfigError> {
        let scan = self.scan.as_ref().ok_or_else(|| field("scan", "required for this command"))?;
        Ok(Family::new(scan.family, self.tax, self.offspring.clone())?)
    }

    /// Applies `--steps` to every step count.
    pub fn override_steps(&mut self, steps: usize) {
        self.evolve.steps = steps;
        self.simulate.steps = steps;
        self.audit.growth_steps = steps;
        self.audit.tail_steps = steps;
        self.audit.contraction_steps = steps;
        self.audit.association_steps = steps;
    }
}

fn count(path: &str, v: f64) -> Result<usize, ConfigError> {
    if v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(field(path, format!("expected a nonnegative integer, got {v}")))
    }
}

fn count_or(path: &str, v: Option<f64>, default: usize) -> Result<usize, ConfigError> {
    v.map_or(Ok(default), |v| count(path, v))
}

fn pairs(path: &str, pmf: &[(f64, f64)]) -> Result<Vec<(usize, f64)>, ConfigError> {
    pmf.iter()
        .enumerate()
        .map(|(i, &(v, p))| Ok((count(&format!("{path}[{i}][0]"), v)?, p)))
        .collect()
}

fn positive_list(path: &str, v: Option<Vec<f64>>, default: Vec<f64>) -> Result<Vec<f64>, ConfigError> {
    let v = v.unwrap_or(default);
    for (i, x) in v.iter().enumerate() {
        if !(x.is_finite() && *x > 0.0) {
            return Err(field(format!("{path}[{i}]"), format!("expected a positive number, got {x}")));
        }
    }
    Ok(v)
}

impl RawConfig {
    fn validate(self) -> Result<RunConfig, ConfigError> {
        if !(self.a.is_finite() && self.a.fract() == 0.0) {
            return Err(field("a", format!("tax must be a positive integer, got {}", self.a)));
        }
        if self.a < 1.0 {
            return Err(ModelError::NonPositiveTax(self.a as i64).into());
        }
        let tax = count("a", self.a)?;

        let offspring = match self.terms {
            RawTerms::Deterministic { n } => OffspringLaw::deterministic(count("N.n", n)?)?,
            RawTerms::Finite { pmf } => OffspringLaw::finite(pairs("N.pmf", &pmf)?)?,
            RawTerms::Geometric { p } => OffspringLaw::geometric(p)?,
        };

        let x0 = match self.x0 {
            None => None,
            Some(RawInitial::Finite { pmf }) => {
                Some(FinitePmf::from_pairs(pairs("x0.pmf", &pmf)?).map_err(|e| field("x0.pmf", e.to_string()))?)
            }
            Some(RawInitial::Geometric { p }) => Some(
                TruncatedGeometric::new(p, GEOMETRIC_X0_TAIL)
                    .and_then(|g| g.to_pmf(DEFAULT_SUPPORT_CAP))
                    .map_err(|e| field("x0.p", e.to_string()))?,
            ),
        };
        if let Some(x0) = &x0 {
            ModelSpec::new(tax, x0.clone(), offspring.clone())?;
        }

        let e = self.evolve;
        let tail_eps = e.tail_eps.unwrap_or(DEFAULT_TAIL_EPS);
        if !(0.0..1.0).contains(&tail_eps) {
            return Err(field("evolve.tail_eps", format!("must lie in [0, 1), got {tail_eps}")));
        }
        let leak_budget = e.leak_budget.unwrap_or(DEFAULT_LEAK_BUDGET);
        if !(leak_budget >= 0.0) {
            return Err(field("evolve.leak_budget", format!("must be nonnegative, got {leak_budget}")));
        }
        let cap = count_or("evolve.support_cap", e.support_cap, DEFAULT_EVOLVE_SUPPORT_CAP)?;
        if cap < 2 {
            return Err(field("evolve.support_cap", "must be at least 2"));
        }
        let options = EvolveOptions::default()
            .with_tail_eps(tail_eps)
            .with_leak_budget(leak_budget)
            .with_support_cap(cap);
        let evolve = EvolveSettings {
            steps: count_or("evolve.steps", e.steps, DEFAULT_STEPS)?,
            options,
        };

        let s = self.simulate;
        let pop_size = count_or("simulate.pop_size", s.pop_size, DEFAULT_POP_SIZE)?;
        if pop_size == 0 {
            return Err(field("simulate.pop_size", "must be positive"));
        }
        let simulate = SimulateSettings {
            pop_size,
            steps: count_or("simulate.steps", s.steps, DEFAULT_STEPS)?,
            seed: s.seed,
            exact: s.exact.unwrap_or(true),
        };

        let scan = self
            .scan
            .map(|sc| -> Result<ScanSettings, ConfigError> {
                let family = match sc.family {
                    RawFamily::TwoPoint { high } => {
                        let high = count("scan.family.high", high)?;
                        if high == 0 {
                            return Err(field("scan.family.high", "must be at least 1"));
                        }
                        FamilyKind::TwoPoint { high }
                    }
                    RawFamily::GeometricX0 => FamilyKind::GeometricX0,
                };
                let grid_points = count_or("scan.grid_points", sc.grid_points, DEFAULT_GRID_POINTS)?;
                if grid_points < 2 {
                    return Err(field("scan.grid_points", format!("must be at least 2, got {grid_points}")));
                }
                if let Some(ps) = &sc.params {
                    if ps.is_empty() {
                        return Err(field("scan.params", "must not be empty"));
                    }
                    for (i, p) in ps.iter().enumerate() {
                        if !(*p > 0.0 && *p < 1.0) {
                            return Err(field(format!("scan.params[{i}]"), format!("must lie in (0, 1), got {p}")));
                        }
                    }
                }
                let tolerance = sc.tolerance.unwrap_or(DEFAULT_TOLERANCE);
                if !(tolerance > 0.0) {
                    return Err(field("scan.tolerance", format!("must be positive, got {tolerance}")));
                }
                Ok(ScanSettings {
                    family,
                    grid_points,
                    params: sc.params,
                    tolerance,
                    slow: sc.slow.unwrap_or(false),
                    slow_steps: count_or("scan.slow_steps", sc.slow_steps, DEFAULT_STEPS)?,
                })
            })
            .transpose()?;

        let l = self.lemmas;
        let d = AuditConfig::<f64>::default();
        let audit = AuditConfig {
            growth_fractions: positive_list("lemmas.growth_fractions", l.growth_fractions, d.growth_fractions)?,
            growth_steps: count_or("lemmas.growth_steps", l.growth_steps, d.growth_steps)?,
            tail_steps: count_or("lemmas.tail_steps", l.tail_steps, d.tail_steps)?,
            contraction_multipliers: positive_list(
                "lemmas.contraction_multipliers",
                l.contraction_multipliers,
                d.contraction_multipliers,
            )?,
            contraction_steps: count_or("lemmas.contraction_steps", l.contraction_steps, d.contraction_steps)?,
            association_points: positive_list("lemmas.association_points", l.association_points, d.association_points)?,
            association_steps: count_or("lemmas.association_steps", l.association_steps, d.association_steps)?,
            offspring_points: positive_list("lemmas.offspring_points", l.offspring_points, d.offspring_points)?,
            evolve: d.evolve,
        };

        Ok(RunConfig {
            tax,
            offspring,
            x0,
            evolve,
            simulate,
            scan,
            audit,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_config() {
        let cfg = RunConfig::from_json(
            r#"{"a": 1, "x0": {"type": "finite", "pmf": [[0, 0.5], [2, 0.5]]}, "N": {"type": "deterministic", "n": 2}}"#,
        )
        .unwrap();
        assert_eq!(cfg.tax, 1);
        assert_eq!(cfg.evolve.steps, 30);
        assert_eq!(cfg.simulate.pop_size, 100_000);
        assert_eq!(cfg.simulate.seed, None);
        assert_eq!(cfg.model().unwrap().x0().mean(), 1.0);
    }

    #[test]
    fn errors_name_the_field() {
        let err = RunConfig::from_json(r#"{"a": 1, "x0": {"type": "finite", "pmf": [[3, 1.0]]}, "N": {"type": "deterministic", "n": 2}}"#)
            .unwrap_err();
        assert!(err.to_string().contains("is not a constant"), "{err}");
        let err = RunConfig::from_json(r#"{"a": 0, "N": {"type": "deterministic", "n": 2}}"#).unwrap_err();
        assert!(err.to_string().starts_with("a:"), "{err}");
        let err = RunConfig::from_json(
            r#"{"a": 1, "x0": {"type": "finite", "pmf": [[-1, 0.5], [2, 0.5]]}, "N": {"type": "deterministic", "n": 2}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().starts_with("x0.pmf[0][0]:"), "{err}");
        let err = RunConfig::from_json(r#"{"a": 1, "N": {"type": "finite", "pmf": [[1, 0.5], [2, 0.4]]}}"#).unwrap_err();
        assert!(err.to_string().starts_with("N.pmf:"), "{err}");
        let err = RunConfig::from_json(r#"{"a": 1, "N": {"type": "deterministic", "n": 2}, "evolve": {"tail_eps": 2}}"#).unwrap_err();
        assert!(err.to_string().starts_with("evolve.tail_eps:"), "{err}");
    }

    #[test]
    fn geometric_initial_law_is_leak_free() {
        let cfg = RunConfig::from_json(r#"{"a": 1, "x0": {"type": "geometric", "p": 0.5}, "N": {"type": "geometric", "p": 0.5}}"#).unwrap();
        let m = cfg.model().unwrap();
        assert_eq!(m.x0().leaked_mass(), 0.0);
        assert_eq!(m.offspring().bound_m(), None);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(RunConfig::from_json(r#"{"a": 1, "N": {"type": "deterministic", "n": 2}, "stpes": 3}"#).is_err());
    }
}
