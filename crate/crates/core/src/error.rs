use thiserror::Error;

/// Errors from constructing or transforming finite laws.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistError {
    #[error("value {value}: probability {prob} is outside (0, 1]")]
    InvalidWeight { value: usize, prob: f64 },
    #[error("value {0} is listed more than once")]
    DuplicateValue(usize),
    #[error("distribution has no support points")]
    Empty,
    #[error("total probability {total} differs from 1 by more than {tol:e}")]
    NotNormalized { total: f64, tol: f64 },
    #[error("support would need {needed} entries, cap is {cap}")]
    SupportTooLarge { needed: usize, cap: usize },
    #[error("tail_eps {0} is outside [0, 1)")]
    InvalidTailEps(f64),
    #[error("parameter {name} = {value} violates {expected}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
}

/// Violations of the model assumptions. `path` names the offending config field.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{path}: {source}")]
    Dist {
        path: &'static str,
        #[source]
        source: DistError,
    },
    #[error("a: tax must be a positive integer, got {0}")]
    NonPositiveTax(i64),
    #[error("x0: violates the assumption that X_0 is not a constant (support has {0} point)")]
    ConstantInitial(usize),
    #[error("x0: initial law must not carry leaked mass at construction (leak {0:e})")]
    LeakyInitial(f64),
    #[error("N: number of terms must satisfy N >= 1, got value {0}")]
    ZeroTerms(usize),
    #[error("N: P(N > 1) must be positive")]
    NoBranching,
}

/// Failures of the exact evolution engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvolveError {
    #[error("cumulative leaked mass {leak:e} exceeds budget {budget:e} at step {step}")]
    LeakBudgetExceeded { step: usize, leak: f64, budget: f64 },
    #[error("step {step}: {source}")]
    Dist {
        step: usize,
        #[source]
        source: DistError,
    },
    #[error("step {step}: window of {window} values is too short for tax {tax}")]
    WindowExhausted { step: usize, window: usize, tax: usize },
    #[error("evaluation point s = {0} must be positive")]
    NonPositivePoint(f64),
}

/// A lemma check was asked for outside its hypotheses.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CheckError {
    #[error("precondition not met: {0}")]
    Precondition(String),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
}

/// Failures of the boundary search.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScanError {
    #[error("criterion does not change sign on ({lo}, {hi})")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("criterion 2 requires bounded N")]
    CriterionUnavailable,
    #[error("grid needs at least 2 points, got {0}")]
    GridTooSmall(usize),
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Invalid Monte Carlo settings.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("population size {got} is below the minimum {min}")]
    PopulationTooSmall { got: usize, min: usize },
    #[error("tree recursion is limited to depth {max}, got {got}")]
    TreeTooDeep { got: usize, max: usize },
    #[error("cannot sample from weights: {0}")]
    Sampler(String),
}
