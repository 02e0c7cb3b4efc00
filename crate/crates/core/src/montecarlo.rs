//! Seeded population Monte Carlo for the recursion, and Galton–Watson ancestor counts.
//!
//! Every random draw for sample `i` of generation `n` comes from its own
//! ChaCha8 stream keyed by `(master seed, n, i)`, so results do not depend on
//! how the work is split across threads.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Geometric;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::SimError;
use crate::model::ModelSpec;
use crate::offspring::{OffspringKind, OffspringLaw};
use crate::pmf::FinitePmf;
use crate::scalar::Scalar;

/// Smallest population accepted by [`mc_estimate_q`].
pub const MIN_POPULATION: usize = 1000;
/// Deepest tree accepted by [`tree_estimate`].
pub const MAX_TREE_DEPTH: usize = 12;

const INIT_STREAM: u64 = u64::MAX;
const TREE_STREAM: u64 = u64::MAX - 1;
const ANCESTOR_STREAM: u64 = u64::MAX - 2;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the stream for sample `index` of generation `generation`.
pub fn derive_seed(master: u64, generation: u64, index: u64) -> u64 {
    splitmix(splitmix(splitmix(master) ^ generation) ^ index)
}

fn stream(master: u64, generation: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, generation, index))
}

/// Draws from a finite law on `{0, 1, ...}`.
#[derive(Clone, Debug)]
struct TableSampler {
    index: WeightedIndex<f64>,
}

impl TableSampler {
    fn new<T: Scalar>(p: &FinitePmf<T>) -> Result<Self, SimError> {
        let w: Vec<f64> = p.weights().iter().map(|w| w.to_f64().unwrap_or(0.0)).collect();
        WeightedIndex::new(w)
            .map(|index| Self { index })
            .map_err(|e| SimError::Sampler(e.to_string()))
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> u64 {
        self.index.sample(rng) as u64
    }
}

#[derive(Clone, Debug)]
enum TermsSampler {
    Fixed(u64),
    Table(TableSampler),
    /// `1 + Geometric(p)`, drawn without truncation.
    Geometric(Geometric),
}

impl TermsSampler {
    fn new<T: Scalar>(law: &OffspringLaw<T>) -> Result<Self, SimError> {
        Ok(match law.kind() {
            OffspringKind::Deterministic(n) => Self::Fixed(n as u64),
            OffspringKind::FiniteSupport => Self::Table(TableSampler::new(law.probs())?),
            OffspringKind::Geometric { success } => {
                Self::Geometric(Geometric::new(success.to_f64().unwrap_or(f64::NAN)).map_err(|e| SimError::Sampler(e.to_string()))?)
            }
        })
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> u64 {
        match self {
            Self::Fixed(n) => *n,
            Self::Table(t) => t.draw(rng),
            Self::Geometric(g) => 1 + g.sample(rng),
        }
    }
}

/// Empirical stand-in for the law of `X_n`: a fixed-size sample and its seed lineage.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Population {
    samples: Vec<u64>,
    generation: usize,
    master_seed: u64,
}

impl Population {
    /// Quantile-stratified draw of `size` values from `x0`.
    ///
    /// Sample `i` sits at quantile `(i + u) / size` for one uniform `u`, so
    /// each value `k` appears `floor(size P(X_0 = k))` or one more times.
    pub fn stratified<T: Scalar>(x0: &FinitePmf<T>, size: usize, seed: u64) -> Self {
        let u: f64 = stream(seed, INIT_STREAM, 0).random();
        let cdf: Vec<f64> = x0
            .weights()
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w.to_f64().unwrap_or(0.0);
                Some(*acc)
            })
            .collect();
        let total = *cdf.last().unwrap_or(&1.0);
        let mut samples = Vec::with_capacity(size);
        let mut k = 0usize;
        for i in 0..size {
            let q = (i as f64 + u) / size as f64 * total;
            while k + 1 < cdf.len() && cdf[k] <= q {
                k += 1;
            }
            samples.push(k as u64);
        }
        Self {
            samples,
            generation: 0,
            master_seed: seed,
        }
    }

    pub fn from_samples(samples: Vec<u64>, generation: usize, master_seed: u64) -> Self {
        Self {
            samples,
            generation,
            master_seed,
        }
    }

    pub fn samples(&self) -> &[u64] {
        &self.samples
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn stats(&self) -> SampleStats {
        SampleStats::of(&self.samples)
    }
}

/// Mean, sample standard deviation and standard error of the mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SampleStats {
    pub mean: f64,
    pub std: f64,
    pub stderr: f64,
    pub count: usize,
}

impl SampleStats {
    pub fn of(xs: &[u64]) -> Self {
        let count = xs.len();
        if count == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                stderr: f64::NAN,
                count,
            };
        }
        let total: u128 = xs.iter().map(|&x| x as u128).sum();
        let mean = total as f64 / count as f64;
        let var = if count > 1 {
            xs.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / (count - 1) as f64
        } else {
            0.0
        };
        let std = var.sqrt();
        Self {
            mean,
            std,
            stderr: std / (count as f64).sqrt(),
            count,
        }
    }
}

/// A model prepared for repeated sampling.
#[derive(Clone, Debug)]
pub struct Simulator<'m, T> {
    model: &'m ModelSpec<T>,
    terms: TermsSampler,
    x0: TableSampler,
}

impl<'m, T: Scalar> Simulator<'m, T> {
    pub fn new(model: &'m ModelSpec<T>) -> Result<Self, SimError> {
        Ok(Self {
            model,
            terms: TermsSampler::new(model.offspring())?,
            x0: TableSampler::new(model.x0())?,
        })
    }

    pub fn model(&self) -> &ModelSpec<T> {
        self.model
    }

    pub fn initial(&self, size: usize, seed: u64) -> Population {
        Population::stratified(self.model.x0(), size, seed)
    }

    /// One generation of resampling; sample `i` uses stream `(seed, n + 1, i)`.
    pub fn step(&self, pop: &Population) -> Population {
        let next_gen = pop.generation + 1;
        let tax = self.model.tax() as u64;
        let parents = &pop.samples;
        let samples = (0..parents.len())
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(pop.master_seed, next_gen as u64, i as u64);
                let n = self.terms.draw(&mut rng);
                let mut sum = 0u64;
                for _ in 0..n {
                    sum = sum.saturating_add(parents[rng.random_range(0..parents.len())]);
                }
                sum.saturating_sub(tax)
            })
            .collect();
        Population {
            samples,
            generation: next_gen,
            master_seed: pop.master_seed,
        }
    }

    /// Exact tree recursion: one draw of `X_depth` from independent copies.
    fn tree_draw<R: Rng>(&self, depth: usize, rng: &mut R) -> u64 {
        if depth == 0 {
            return self.x0.draw(rng);
        }
        let n = self.terms.draw(rng);
        let mut sum = 0u64;
        for _ in 0..n {
            sum = sum.saturating_add(self.tree_draw(depth - 1, rng));
        }
        sum.saturating_sub(self.model.tax() as u64)
    }
}

/// One generation of resampling (see [`Simulator::step`]).
pub fn mc_step<T: Scalar>(pop: &Population, model: &ModelSpec<T>) -> Result<Population, SimError> {
    Ok(Simulator::new(model)?.step(pop))
}

/// Per-generation statistics of a population run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GenerationStats {
    pub n: usize,
    pub stats: SampleStats,
}

/// Runs `steps` generations from a stratified start and records each one.
pub fn simulate<T: Scalar>(model: &ModelSpec<T>, pop_size: usize, steps: usize, seed: u64) -> Result<Vec<GenerationStats>, SimError> {
    if pop_size == 0 {
        return Err(SimError::PopulationTooSmall { got: 0, min: 1 });
    }
    let sim = Simulator::new(model)?;
    let mut pop = sim.initial(pop_size, seed);
    let mut out = vec![GenerationStats { n: 0, stats: pop.stats() }];
    for n in 1..=steps {
        pop = sim.step(&pop);
        out.push(GenerationStats { n, stats: pop.stats() });
    }
    Ok(out)
}

/// Plug-in estimates of the free-energy bracket at generation `steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QEstimate {
    pub q_upper_hat: f64,
    pub q_lower_hat: f64,
    /// `std / (sqrt(P) (EN)^steps)`.
    pub stderr: f64,
    pub mean: f64,
}

pub fn mc_estimate_q<T: Scalar>(model: &ModelSpec<T>, pop_size: usize, steps: usize, seed: u64) -> Result<QEstimate, SimError> {
    if pop_size < MIN_POPULATION {
        return Err(SimError::PopulationTooSmall {
            got: pop_size,
            min: MIN_POPULATION,
        });
    }
    let last = simulate(model, pop_size, steps, seed)?
        .pop()
        .expect("generation 0 is always present")
        .stats;
    let en = model.offspring().mean_n().to_f64().unwrap_or(f64::NAN);
    let scale = en.powi(steps as i32);
    let offset = model.mean_offset().to_f64().unwrap_or(f64::NAN);
    Ok(QEstimate {
        q_upper_hat: last.mean / scale,
        q_lower_hat: (last.mean - offset) / scale,
        stderr: last.stderr / scale,
        mean: last.mean,
    })
}

/// Mean of `samples` exact tree draws of `X_depth`; cost grows like `(EN)^depth`.
pub fn tree_estimate<T: Scalar>(model: &ModelSpec<T>, depth: usize, samples: usize, seed: u64) -> Result<SampleStats, SimError> {
    if depth > MAX_TREE_DEPTH {
        return Err(SimError::TreeTooDeep {
            got: depth,
            max: MAX_TREE_DEPTH,
        });
    }
    let sim = Simulator::new(model)?;
    let draws: Vec<u64> = (0..samples)
        .into_par_iter()
        .map(|i| sim.tree_draw(depth, &mut stream(seed, TREE_STREAM, i as u64)))
        .collect();
    Ok(SampleStats::of(&draws))
}

/// Size of generation `depth` of a Galton–Watson tree with offspring law `N`.
pub fn ancestor_count<T: Scalar>(offspring: &OffspringLaw<T>, depth: usize, seed: u64) -> Result<u64, SimError> {
    let terms = TermsSampler::new(offspring)?;
    if let TermsSampler::Fixed(n) = terms {
        return Ok((0..depth).fold(1u64, |acc, _| acc.saturating_mul(n)));
    }
    let mut rng = stream(seed, ANCESTOR_STREAM, 0);
    let mut size = 1u64;
    for _ in 0..depth {
        let mut next = 0u64;
        for _ in 0..size {
            next = next.saturating_add(terms.draw(&mut rng));
        }
        size = next;
    }
    Ok(size)
}
