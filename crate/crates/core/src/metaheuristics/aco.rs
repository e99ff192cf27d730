use rand::Rng;

use super::{
    degenerate, fitness, subset_report, OptimizerConfig, OptimizerError, OptimizerRun, Trajectory,
};
use crate::allocation::{Eligible, Method};
use crate::model::TaskSpec;

const TAU_MIN: f64 = 1e-6;
const ETA_FLOOR: f64 = 1e-9;

/// Ant-colony recruiter on the complete candidate graph with pheromone kept
/// on worker nodes. Each ant builds a group by sampling workers without
/// replacement with probability proportional to `tau^alpha * qos^beta`;
/// after every iteration pheromone evaporates and each ant deposits in
/// proportion to its group's fitness.
pub fn aco_select(
    task: &TaskSpec,
    eligible: &[Eligible],
    config: &OptimizerConfig,
) -> Result<OptimizerRun, OptimizerError> {
    config.validate()?;
    if let Some(run) = degenerate(task, eligible, Method::AntColony, config.iterations) {
        return Ok(run);
    }
    let p = &config.aco;
    let n = eligible.len();
    let nw = task.num_workers as usize;
    let qos: Vec<f64> = eligible.iter().map(|e| e.scores.qos).collect();
    let eta: Vec<f64> = qos.iter().map(|q| q.max(ETA_FLOOR).powf(p.beta)).collect();
    let mut tau = vec![1.0_f64; n];
    let mut rng = config.rng();

    let mut best: (Vec<usize>, f64) = (Vec::new(), f64::MIN);
    let mut trajectory = Vec::with_capacity(config.iterations);
    let mut weights = vec![0.0; n];
    let mut ants: Vec<(Vec<usize>, f64)> = Vec::with_capacity(config.population_size);

    for _ in 0..config.iterations {
        ants.clear();
        for _ in 0..config.population_size {
            for i in 0..n {
                weights[i] = tau[i].powf(p.alpha) * eta[i];
            }
            let mut group = Vec::with_capacity(nw);
            for _ in 0..nw {
                let total: f64 = weights.iter().sum();
                let mut pick = None;
                if total > 0.0 {
                    let mut r = rng.random::<f64>() * total;
                    for (i, &w) in weights.iter().enumerate() {
                        if w <= 0.0 {
                            continue;
                        }
                        pick = Some(i);
                        if r < w {
                            break;
                        }
                        r -= w;
                    }
                }
                // all remaining weight underflowed: fall back to a uniform pick
                let i = pick.unwrap_or_else(|| loop {
                    let i = rng.random_range(0..n);
                    if !group.contains(&i) {
                        break i;
                    }
                });
                weights[i] = 0.0;
                group.push(i);
            }
            group.sort_unstable();
            let f = fitness(&qos, &group);
            if f > best.1 {
                best = (group.clone(), f);
            }
            ants.push((group, f));
        }
        for t in tau.iter_mut() {
            *t = (*t * (1.0 - p.evaporation)).max(TAU_MIN);
        }
        for (group, f) in &ants {
            for &i in group {
                tau[i] += p.deposit * f;
            }
        }
        trajectory.push(best.1);
    }

    Ok(OptimizerRun {
        report: subset_report(task, eligible, Method::AntColony, &best.0),
        trajectory: Trajectory(trajectory),
    })
}
