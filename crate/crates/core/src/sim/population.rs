use rand::seq::index;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::model::{
    Address, ComputeProfile, DomainCode, PerfCounters, TaskType, WorkerProfile, WorkerStatus,
    RATING_SCALE_MAX,
};

/// Inclusive range `[min, max]` sampled uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span<T> {
    pub min: T,
    pub max: T,
}

impl<T: PartialOrd + Copy + std::fmt::Display> Span<T> {
    pub const fn new(min: T, max: T) -> Self {
        Span { min, max }
    }

    fn check(&self, name: &str) -> Result<(), SimError> {
        if self.min > self.max {
            return Err(SimError::InvalidSpec(format!(
                "{name}: min {} exceeds max {}",
                self.min, self.max
            )));
        }
        Ok(())
    }
}

impl Span<u32> {
    fn sample(&self, rng: &mut impl Rng) -> u32 {
        rng.random_range(self.min..=self.max)
    }
}

impl Span<u64> {
    fn sample(&self, rng: &mut impl Rng) -> u64 {
        rng.random_range(self.min..=self.max)
    }
}

impl Span<f64> {
    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.random_range(self.min..=self.max)
        }
    }

    fn check_unit(&self, name: &str) -> Result<(), SimError> {
        self.check(name)?;
        if !(0.0..=1.0).contains(&self.min) || !(0.0..=1.0).contains(&self.max) {
            return Err(SimError::InvalidSpec(format!("{name} must lie in [0, 1]")));
        }
        Ok(())
    }
}

/// Distributions a synthetic population is drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationSpec {
    pub n_workers: usize,
    pub seed: u64,
    pub cpu_cores: Span<u32>,
    pub ram_gb: Span<u32>,
    /// Probability that a worker has a GPU at all.
    pub gpu_probability: f64,
    /// Series a GPU-equipped worker draws from uniformly.
    pub gpu_catalog: Vec<String>,
    pub p_accept: Span<f64>,
    pub p_complete: Span<f64>,
    pub quality_mean: Span<f64>,
    /// Half-width of the uniform noise added to each quality sample.
    pub quality_noise: f64,
    /// Domain codes are `0..domain_count`.
    pub domain_count: u32,
    pub domains_per_worker: Span<u32>,
    /// Offers seen before the simulation starts, per (domain, type) cell.
    pub prior_assigned: Span<u64>,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        PopulationSpec {
            n_workers: 600,
            seed: 42,
            cpu_cores: Span::new(1, 32),
            ram_gb: Span::new(4, 128),
            gpu_probability: 0.5,
            gpu_catalog: ["gtx-1080", "rtx-2080", "rtx-3090", "a100"]
                .map(String::from)
                .to_vec(),
            p_accept: Span::new(0.3, 1.0),
            p_complete: Span::new(0.3, 1.0),
            quality_mean: Span::new(0.3, 1.0),
            quality_noise: 0.1,
            domain_count: 1,
            domains_per_worker: Span::new(1, 1),
            prior_assigned: Span::new(0, 50),
        }
    }
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        self.cpu_cores.check("cpu_cores")?;
        self.ram_gb.check("ram_gb")?;
        self.p_accept.check_unit("p_accept")?;
        self.p_complete.check_unit("p_complete")?;
        self.quality_mean.check_unit("quality_mean")?;
        self.domains_per_worker.check("domains_per_worker")?;
        self.prior_assigned.check("prior_assigned")?;
        let bad = |m: &str| Err(SimError::InvalidSpec(m.into()));
        if !(0.0..=1.0).contains(&self.gpu_probability) {
            return bad("gpu_probability must lie in [0, 1]");
        }
        if self.gpu_probability > 0.0 && self.gpu_catalog.is_empty() {
            return bad("gpu_catalog is empty but gpu_probability is positive");
        }
        if !(self.quality_noise >= 0.0 && self.quality_noise.is_finite()) {
            return bad("quality_noise must be finite and non-negative");
        }
        if self.domain_count == 0 {
            return bad("domain_count must be positive");
        }
        if self.domains_per_worker.min == 0 || self.domains_per_worker.max > self.domain_count {
            return bad("domains_per_worker must lie in 1..=domain_count");
        }
        Ok(())
    }
}

/// Simulator-side propensities of one worker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentBehavior {
    pub p_accept: f64,
    pub p_complete: f64,
    pub quality_mean: f64,
    pub quality_noise: f64,
}

impl LatentBehavior {
    pub const PERFECT: LatentBehavior = LatentBehavior {
        p_accept: 1.0,
        p_complete: 1.0,
        quality_mean: 1.0,
        quality_noise: 0.0,
    };

    /// One rating draw in points: the quality sample clamped to `[0, 1]`
    /// and scaled to the rating scale.
    pub fn rating_points(&self, rng: &mut impl Rng) -> u32 {
        let noise = if self.quality_noise > 0.0 {
            rng.random_range(-self.quality_noise..=self.quality_noise)
        } else {
            0.0
        };
        let q = (self.quality_mean + noise).clamp(0.0, 1.0);
        (q * RATING_SCALE_MAX as f64).round() as u32
    }
}

/// A generated population: profiles and the behavior behind them, index
/// aligned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub spec: PopulationSpec,
    pub workers: Vec<WorkerProfile>,
    pub behavior: Vec<LatentBehavior>,
}

impl Population {
    pub fn len(&self) -> usize {
        self.workers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.workers.is_empty()
    }

    pub fn behavior_of(&self, worker: &Address) -> Option<&LatentBehavior> {
        self.workers
            .iter()
            .position(|w| &w.worker_id == worker)
            .map(|i| &self.behavior[i])
    }
}

fn binomial(rng: &mut impl Rng, n: u64, p: f64) -> u64 {
    if n == 0 {
        return 0;
    }
    Binomial::new(n, p)
        .expect("probability validated")
        .sample(rng)
}

/// Draws `spec.n_workers` active workers. Prior counters follow the latent
/// propensities: accepted ~ Bin(assigned, p_accept), completed ~
/// Bin(accepted, p_complete), and every completion carries one rating.
pub fn generate_population(spec: &PopulationSpec) -> Result<Population, SimError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut workers = Vec::with_capacity(spec.n_workers);
    let mut behavior = Vec::with_capacity(spec.n_workers);
    for i in 0..spec.n_workers {
        let cpu_cores = spec.cpu_cores.sample(&mut rng);
        let ram_gb = spec.ram_gb.sample(&mut rng);
        let gpu_series = if rng.random_bool(spec.gpu_probability) {
            let k = rng.random_range(0..spec.gpu_catalog.len());
            Some(spec.gpu_catalog[k].clone())
        } else {
            None
        };
        let k = spec.domains_per_worker.sample(&mut rng) as usize;
        let domains = index::sample(&mut rng, spec.domain_count as usize, k)
            .into_iter()
            .map(|d| DomainCode(d as u32));
        let latent = LatentBehavior {
            p_accept: spec.p_accept.sample(&mut rng),
            p_complete: spec.p_complete.sample(&mut rng),
            quality_mean: spec.quality_mean.sample(&mut rng),
            quality_noise: spec.quality_noise,
        };
        let mut profile = WorkerProfile::new(
            Address::derive("worker", i as u64),
            domains,
            ComputeProfile {
                cpu_cores,
                ram_gb,
                gpu_series,
            },
        );
        let cells: Vec<(DomainCode, TaskType)> = profile.stats.keys().copied().collect();
        for cell in cells {
            let assigned = spec.prior_assigned.sample(&mut rng);
            let accepted = binomial(&mut rng, assigned, latent.p_accept);
            let completed = binomial(&mut rng, accepted, latent.p_complete);
            let mut c = PerfCounters::new(assigned, accepted, completed);
            for _ in 0..completed {
                c.rating_sum += u64::from(latent.rating_points(&mut rng));
            }
            c.rating_count = completed;
            profile.stats.insert(cell, c);
        }
        profile.status = WorkerStatus::Active;
        workers.push(profile);
        behavior.push(latent);
    }
    Ok(Population {
        spec: spec.clone(),
        workers,
        behavior,
    })
}
