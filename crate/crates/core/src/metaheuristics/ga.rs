use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{
    degenerate, fitness, subset_report, OptimizerConfig, OptimizerError, OptimizerRun, Trajectory,
};
use crate::allocation::{Eligible, Method};
use crate::model::TaskSpec;

/// A chromosome is a sorted list of `NW` distinct pool indices.
#[derive(Clone)]
struct Individual {
    genes: Vec<usize>,
    fitness: f64,
}

fn random_outsider(rng: &mut ChaCha8Rng, n: usize, taken: &[bool]) -> usize {
    loop {
        let i = rng.random_range(0..n);
        if !taken[i] {
            return i;
        }
    }
}

fn tournament<'a>(rng: &mut ChaCha8Rng, pop: &'a [Individual], k: usize) -> &'a Individual {
    let mut best = &pop[rng.random_range(0..pop.len())];
    for _ in 1..k {
        let c = &pop[rng.random_range(0..pop.len())];
        if c.fitness > best.fitness {
            best = c;
        }
    }
    best
}

/// One-point crossover on the sorted gene lists; duplicates introduced by
/// the cut are replaced by random outsiders.
fn crossover(
    rng: &mut ChaCha8Rng,
    a: &[usize],
    b: &[usize],
    n: usize,
    taken: &mut [bool],
) -> Vec<usize> {
    let nw = a.len();
    let cut = if nw > 1 { rng.random_range(1..nw) } else { 0 };
    let mut child = Vec::with_capacity(nw);
    for &g in a[..cut].iter().chain(&b[cut..]) {
        if taken[g] {
            let r = random_outsider(rng, n, taken);
            taken[r] = true;
            child.push(r);
        } else {
            taken[g] = true;
            child.push(g);
        }
    }
    child
}

/// Genetic recruiter: tournament selection, one-point crossover with
/// repair, swap mutation and elitism.
pub fn ga_select(
    task: &TaskSpec,
    eligible: &[Eligible],
    config: &OptimizerConfig,
) -> Result<OptimizerRun, OptimizerError> {
    config.validate()?;
    if let Some(run) = degenerate(task, eligible, Method::Genetic, config.iterations) {
        return Ok(run);
    }
    let params = &config.ga;
    let n = eligible.len();
    let nw = task.num_workers as usize;
    let qos: Vec<f64> = eligible.iter().map(|e| e.scores.qos).collect();
    let mut rng = config.rng();

    let evaluate = |mut genes: Vec<usize>| {
        genes.sort_unstable();
        let fitness = fitness(&qos, &genes);
        Individual { genes, fitness }
    };

    let mut pop: Vec<Individual> = (0..config.population_size)
        .map(|_| evaluate(index::sample(&mut rng, n, nw).into_vec()))
        .collect();
    let mut taken = vec![false; n];
    let mut trajectory = Vec::with_capacity(config.iterations);

    for _ in 0..config.iterations {
        pop.sort_by(|a, b| b.fitness.total_cmp(&a.fitness));
        let mut next: Vec<Individual> = pop[..params.elitism].to_vec();
        while next.len() < config.population_size {
            let a = tournament(&mut rng, &pop, params.tournament_size);
            let b = tournament(&mut rng, &pop, params.tournament_size);
            taken.iter_mut().for_each(|t| *t = false);
            let mut genes = if rng.random_bool(params.crossover_rate) {
                crossover(&mut rng, &a.genes, &b.genes, n, &mut taken)
            } else {
                for &g in &a.genes {
                    taken[g] = true;
                }
                a.genes.clone()
            };
            if rng.random_bool(params.mutation_rate) {
                let slot = rng.random_range(0..nw);
                let r = random_outsider(&mut rng, n, &taken);
                taken[genes[slot]] = false;
                taken[r] = true;
                genes[slot] = r;
            }
            next.push(evaluate(genes));
        }
        pop = next;
        let best = pop.iter().map(|i| i.fitness).fold(f64::MIN, f64::max);
        trajectory.push(best);
    }

    let best = pop
        .iter()
        .max_by(|a, b| a.fitness.total_cmp(&b.fitness))
        .expect("population is non-empty");
    Ok(OptimizerRun {
        report: subset_report(task, eligible, Method::Genetic, &best.genes),
        trajectory: Trajectory(trajectory),
    })
}
