//! Baseline recruiters that search over size-`NW` groups instead of ranking
//! workers independently: a genetic algorithm, particle swarm, ant colony,
//! and three single-criterion selectors (reputation only, compute only,
//! uniform random).
//!
//! All of them pick from an already constraint-filtered pool, so every
//! returned group satisfies the task constraints. The fitness of a group is
//! its mean QoS.

mod aco;
mod baselines;
mod ga;
mod pso;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::{rank, Eligible, Method, Selected, SelectionReport};
use crate::model::TaskSpec;

pub use aco::aco_select;
pub use baselines::{cpu_select, random_select, reputation_select};
pub use ga::ga_select;
pub use pso::pso_select;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizerError {
    #[error("invalid optimizer config: {0}")]
    ConfigInvalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaParams {
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub tournament_size: usize,
    pub elitism: usize,
}

impl Default for GaParams {
    fn default() -> Self {
        GaParams {
            crossover_rate: 0.9,
            mutation_rate: 0.2,
            tournament_size: 3,
            elitism: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoParams {
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Velocity clamp as a fraction of the coordinate range.
    pub max_velocity: f64,
    pub encoding: PsoEncoding,
}

/// How a particle position maps to a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsoEncoding {
    /// `NW` coordinates, each a continuous candidate index rounded to the
    /// nearest unused one.
    IndexVector,
    /// One priority key per candidate; the group is the `NW` largest keys.
    RandomKey,
}

impl Default for PsoParams {
    fn default() -> Self {
        PsoParams {
            inertia: 0.7,
            cognitive: 1.5,
            social: 1.5,
            max_velocity: 0.5,
            encoding: PsoEncoding::IndexVector,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcoParams {
    pub evaporation: f64,
    /// Pheromone deposited per unit of solution fitness.
    pub deposit: f64,
    /// Exponent on pheromone.
    pub alpha: f64,
    /// Exponent on the QoS heuristic.
    pub beta: f64,
}

impl Default for AcoParams {
    fn default() -> Self {
        AcoParams {
            evaporation: 0.1,
            deposit: 1.0,
            alpha: 1.0,
            beta: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub population_size: usize,
    pub iterations: usize,
    pub seed: u64,
    pub ga: GaParams,
    pub pso: PsoParams,
    pub aco: AcoParams,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            population_size: 50,
            iterations: 200,
            seed: 0,
            ga: GaParams::default(),
            pso: PsoParams::default(),
            aco: AcoParams::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn with_seed(seed: u64) -> Self {
        OptimizerConfig {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |m: String| Err(OptimizerError::ConfigInvalid(m));
        if self.population_size == 0 {
            return bad("population_size must be positive".into());
        }
        if self.iterations == 0 {
            return bad("iterations must be positive".into());
        }
        for (name, v) in [
            ("ga.crossover_rate", self.ga.crossover_rate),
            ("ga.mutation_rate", self.ga.mutation_rate),
            ("pso.inertia", self.pso.inertia),
            ("aco.evaporation", self.aco.evaporation),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} outside [0, 1]"));
            }
        }
        if self.ga.tournament_size == 0 {
            return bad("ga.tournament_size must be positive".into());
        }
        if self.ga.elitism >= self.population_size {
            return bad("ga.elitism must be below population_size".into());
        }
        for (name, v) in [
            ("pso.cognitive", self.pso.cognitive),
            ("pso.social", self.pso.social),
            ("pso.max_velocity", self.pso.max_velocity),
            ("aco.deposit", self.aco.deposit),
            ("aco.alpha", self.aco.alpha),
            ("aco.beta", self.aco.beta),
        ] {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("{name} = {v} must be finite and non-negative"));
            }
        }
        Ok(())
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Best fitness after each iteration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory(pub Vec<f64>);

impl Trajectory {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "best_fitness"])?;
        for (i, f) in self.0.iter().enumerate() {
            w.write_record([(i + 1).to_string(), f.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerRun {
    pub report: SelectionReport,
    pub trajectory: Trajectory,
}

/// Mean QoS of the group `members` (indices into `qos`).
fn fitness(qos: &[f64], members: &[usize]) -> f64 {
    if members.is_empty() {
        return 0.0;
    }
    members.iter().map(|&i| qos[i]).sum::<f64>() / members.len() as f64
}

/// Builds a report for the group `members` of `eligible`. Candidates are
/// listed in QoS rank order and the selection in rank order too, so reports
/// are independent of how the optimizer ordered its chromosome.
fn subset_report(
    task: &TaskSpec,
    eligible: &[Eligible],
    method: Method,
    members: &[usize],
) -> SelectionReport {
    let (ranked, _) = rank(eligible);
    let chosen: std::collections::BTreeSet<_> =
        members.iter().map(|&i| &eligible[i].worker_id).collect();
    let selected = ranked
        .iter()
        .filter(|c| chosen.contains(&c.worker_id))
        .map(|c| Selected {
            worker_id: c.worker_id.clone(),
            cid: c.cid,
        })
        .collect::<Vec<_>>();
    SelectionReport {
        task_id: task.task_id.clone(),
        method,
        requested: task.num_workers,
        shortfall: selected.len() < task.num_workers as usize,
        ranked_candidates: ranked,
        selected,
        rejected: Vec::new(),
        retractions: Vec::new(),
    }
}

/// When the group must contain the whole pool there is nothing to search.
fn degenerate(
    task: &TaskSpec,
    eligible: &[Eligible],
    method: Method,
    iterations: usize,
) -> Option<OptimizerRun> {
    let nw = task.num_workers as usize;
    if nw < eligible.len() && nw > 0 {
        return None;
    }
    let members: Vec<usize> = (0..eligible.len().min(nw)).collect();
    let qos: Vec<f64> = eligible.iter().map(|e| e.scores.qos).collect();
    let f = fitness(&qos, &members);
    Some(OptimizerRun {
        report: subset_report(task, eligible, method, &members),
        trajectory: Trajectory(vec![f; iterations]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::default().validate().is_ok());
        let c = OptimizerConfig {
            iterations: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let mut c = OptimizerConfig::default();
        c.ga.mutation_rate = 1.5;
        assert!(c.validate().is_err());
        let mut c = OptimizerConfig::default();
        c.aco.evaporation = -0.1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn trajectory_csv() {
        let mut buf = Vec::new();
        Trajectory(vec![0.25, 0.5]).write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "iteration,best_fitness\n1,0.25\n2,0.5\n"
        );
    }
}
