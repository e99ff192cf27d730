use rand::Rng;

use super::{
    degenerate, fitness, subset_report, OptimizerConfig, OptimizerError, OptimizerRun, PsoEncoding,
    Trajectory,
};
use crate::allocation::{Eligible, Method};
use crate::model::TaskSpec;

/// Random-key decode: the `nw` coordinates with the largest values (ties to
/// the lower index).
fn decode_keys(position: &[f64], nw: usize, scratch: &mut Vec<usize>) -> Vec<usize> {
    scratch.clear();
    scratch.extend(0..position.len());
    let by_key = |a: &usize, b: &usize| position[*b].total_cmp(&position[*a]).then(a.cmp(b));
    scratch.select_nth_unstable_by(nw - 1, by_key);
    let mut group = scratch[..nw].to_vec();
    group.sort_unstable();
    group
}

/// Index-vector decode: each coordinate rounds to a candidate index; a
/// coordinate landing on an index already taken moves to the nearest free
/// one, preferring the higher index on equal distance.
fn decode_indices(position: &[f64], n: usize, used: &mut Vec<bool>) -> Vec<usize> {
    used.clear();
    used.resize(n, false);
    let mut group = Vec::with_capacity(position.len());
    for &x in position {
        let base = (x.round().max(0.0) as usize).min(n - 1);
        let mut pick = None;
        for d in 0..n {
            if base + d < n && !used[base + d] {
                pick = Some(base + d);
                break;
            }
            if d <= base && !used[base - d] {
                pick = Some(base - d);
                break;
            }
        }
        let i = pick.expect("fewer coordinates than candidates");
        used[i] = true;
        group.push(i);
    }
    group.sort_unstable();
    group
}

struct Particle {
    position: Vec<f64>,
    velocity: Vec<f64>,
    best_position: Vec<f64>,
    best_fitness: f64,
}

/// Particle-swarm recruiter. Positions are continuous relaxations of a
/// group, decoded per [`PsoEncoding`]; velocities follow the standard
/// inertia / personal-best / global-best update, clamped to
/// `max_velocity` times the coordinate range.
pub fn pso_select(
    task: &TaskSpec,
    eligible: &[Eligible],
    config: &OptimizerConfig,
) -> Result<OptimizerRun, OptimizerError> {
    config.validate()?;
    if let Some(run) = degenerate(task, eligible, Method::ParticleSwarm, config.iterations) {
        return Ok(run);
    }
    let p = &config.pso;
    let n = eligible.len();
    let nw = task.num_workers as usize;
    let (dims, upper) = match p.encoding {
        PsoEncoding::IndexVector => (nw, (n - 1) as f64),
        PsoEncoding::RandomKey => (n, 1.0),
    };
    let vmax = p.max_velocity * upper;
    let qos: Vec<f64> = eligible.iter().map(|e| e.scores.qos).collect();
    let mut rng = config.rng();
    let mut scratch = Vec::with_capacity(n);
    let mut used = Vec::with_capacity(n);
    let mut decode = |x: &[f64]| match p.encoding {
        PsoEncoding::IndexVector => decode_indices(x, n, &mut used),
        PsoEncoding::RandomKey => decode_keys(x, nw, &mut scratch),
    };

    let mut swarm: Vec<Particle> = (0..config.population_size)
        .map(|_| {
            let position: Vec<f64> = (0..dims).map(|_| rng.random_range(0.0..=upper)).collect();
            let velocity: Vec<f64> = (0..dims).map(|_| rng.random_range(-vmax..=vmax)).collect();
            let f = fitness(&qos, &decode(&position));
            Particle {
                best_position: position.clone(),
                position,
                velocity,
                best_fitness: f,
            }
        })
        .collect();
    let mut global = swarm
        .iter()
        .max_by(|a, b| a.best_fitness.total_cmp(&b.best_fitness))
        .map(|s| (s.best_position.clone(), s.best_fitness))
        .expect("swarm is non-empty");
    let mut trajectory = Vec::with_capacity(config.iterations);

    for _ in 0..config.iterations {
        for particle in swarm.iter_mut() {
            for d in 0..dims {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let v = p.inertia * particle.velocity[d]
                    + p.cognitive * r1 * (particle.best_position[d] - particle.position[d])
                    + p.social * r2 * (global.0[d] - particle.position[d]);
                let v = v.clamp(-vmax, vmax);
                particle.velocity[d] = v;
                particle.position[d] = (particle.position[d] + v).clamp(0.0, upper);
            }
            let f = fitness(&qos, &decode(&particle.position));
            if f > particle.best_fitness {
                particle.best_fitness = f;
                particle.best_position.copy_from_slice(&particle.position);
            }
        }
        for particle in &swarm {
            if particle.best_fitness > global.1 {
                global = (particle.best_position.clone(), particle.best_fitness);
            }
        }
        trajectory.push(global.1);
    }

    let best = decode(&global.0);
    Ok(OptimizerRun {
        report: subset_report(task, eligible, Method::ParticleSwarm, &best),
        trajectory: Trajectory(trajectory),
    })
}

#[cfg(test)]
mod tests {
    use super::{decode_indices, decode_keys};

    #[test]
    fn key_decode_takes_largest_keys() {
        let mut scratch = Vec::new();
        assert_eq!(
            decode_keys(&[0.1, 0.9, 0.5, 0.9], 2, &mut scratch),
            vec![1, 3]
        );
        assert_eq!(
            decode_keys(&[0.1, 0.9, 0.5, 0.9], 3, &mut scratch),
            vec![1, 2, 3]
        );
    }

    #[test]
    fn index_decode_rounds_and_repairs() {
        let mut used = Vec::new();
        assert_eq!(decode_indices(&[1.2, 3.6], 5, &mut used), vec![1, 4]);
        assert_eq!(
            decode_indices(&[2.0, 2.4, 1.9], 5, &mut used),
            vec![1, 2, 3]
        );
        assert_eq!(
            decode_indices(&[4.0, 4.0, 9.0], 5, &mut used),
            vec![2, 3, 4]
        );
        assert_eq!(decode_indices(&[-3.0, 0.0], 3, &mut used), vec![0, 1]);
    }
}
