use serde::Serialize;

use crate::error::ModelError;
use crate::offspring::OffspringLaw;
use crate::pmf::FinitePmf;
use crate::scalar::Scalar;

/// Full parameterization of the recursion `X_{n+1} = (X^(1) + ... + X^(N) - a)^+`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelSpec<T> {
    tax: usize,
    x0: FinitePmf<T>,
    offspring: OffspringLaw<T>,
}

impl<T: Scalar> ModelSpec<T> {
    pub fn new(tax: usize, x0: FinitePmf<T>, offspring: OffspringLaw<T>) -> Result<Self, ModelError> {
        if tax == 0 {
            return Err(ModelError::NonPositiveTax(0));
        }
        let support = x0.support_size();
        if support < 2 {
            return Err(ModelError::ConstantInitial(support));
        }
        if x0.leaked_mass() != T::zero() {
            return Err(ModelError::LeakyInitial(x0.leaked_mass().to_f64().unwrap_or(f64::NAN)));
        }
        Ok(Self { tax, x0, offspring })
    }

    /// The tax `a`.
    pub fn tax(&self) -> usize {
        self.tax
    }

    pub fn x0(&self) -> &FinitePmf<T> {
        &self.x0
    }

    pub fn offspring(&self) -> &OffspringLaw<T> {
        &self.offspring
    }

    /// `a / (EN - 1)`, the offset in the lower free-energy bound.
    pub fn mean_offset(&self) -> T {
        T::from_count(self.tax) / (self.offspring.mean_n() - T::one())
    }
}
