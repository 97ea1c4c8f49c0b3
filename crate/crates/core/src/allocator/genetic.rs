use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_budget, Allocation};
use crate::error::{invalid_param, Error, Result};
use crate::objective::TteObjective;
use crate::par::map_indices;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaConfig {
    pub population: usize,
    pub elites: usize,
    pub parents: usize,
    pub genes_mutated: usize,
    /// Overrides the budget-dependent generation rule.
    pub generations: Option<usize>,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self { population: 40, elites: 5, parents: 15, genes_mutated: 1, generations: None }
    }
}

impl GaConfig {
    /// 37·k + 300 generations up to k = 100, 5000 beyond.
    pub fn generations_for(&self, k: usize) -> usize {
        self.generations.unwrap_or(if k <= 100 { 37 * k + 300 } else { 5000 })
    }

    pub fn validate(&self) -> Result<()> {
        if self.elites >= self.population {
            return Err(invalid_param!("elites ({}) must be fewer than the population ({})", self.elites, self.population));
        }
        if self.parents == 0 || self.parents > self.population {
            return Err(invalid_param!("parents must be in 1..={}", self.population));
        }
        Ok(())
    }
}

/// Objective value when the budget holds, exactly zero otherwise.
pub fn fitness<O: TteObjective + ?Sized>(objective: &O, t: &[bool], k: usize) -> f64 {
    if t.iter().filter(|&&b| b).count() > k {
        0.0
    } else {
        objective.evaluate(t)
    }
}

#[derive(Debug, Clone)]
pub struct GaOutcome {
    pub allocation: Allocation,
    pub value: f64,
    /// Best feasible fitness after each generation (index 0 is the initial
    /// population).
    pub history: Vec<f64>,
}

fn random_subset<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<bool> {
    let mut t = alloc::vec![false; n];
    for i in index::sample(rng, n, k) {
        t[i] = true;
    }
    t
}

/// Elitist genetic search over binary chromosomes.
///
/// The initial population holds `seeds` followed by random k-subsets.
/// Each generation ranks by fitness, keeps the elites unchanged and fills
/// the rest with children of consecutive pairs among the top `parents`
/// (uniform crossover, then `genes_mutated` bit flips).
pub fn genetic<O, R>(
    objective: &O,
    k: usize,
    config: &GaConfig,
    seeds: &[Allocation],
    rng: &mut R,
) -> Result<GaOutcome>
where
    O: TteObjective + ?Sized,
    R: Rng + ?Sized,
{
    config.validate()?;
    let n = objective.len();
    check_budget(n, k)?;
    if seeds.len() > config.population {
        return Err(invalid_param!("{} seed solutions exceed the population size", seeds.len()));
    }
    let mut population: Vec<Vec<bool>> = Vec::with_capacity(config.population);
    for s in seeds {
        if s.n() != n || s.count() > k {
            return Err(invalid_param!("seed solutions must have length {n} and respect budget {k}"));
        }
        population.push(s.treatments().to_vec());
    }
    while population.len() < config.population {
        population.push(random_subset(n, k, rng));
    }
    let mut scores: Vec<Option<f64>> = alloc::vec![None; population.len()];

    let mut best: Option<(Vec<bool>, f64)> = None;
    let mut history = Vec::new();
    let generations = config.generations_for(k);
    let offspring = config.population - config.elites;

    for generation in 0..=generations {
        let fresh = map_indices(population.len(), |i| match scores[i] {
            Some(f) => f,
            None => fitness(objective, &population[i], k),
        });
        let mut ranked: Vec<usize> = (0..population.len()).collect();
        ranked.sort_by(|&a, &b| fresh[b].total_cmp(&fresh[a]));

        for &i in &ranked {
            if population[i].iter().filter(|&&b| b).count() <= k {
                if best.as_ref().map_or(true, |(_, v)| fresh[i] > *v) {
                    best = Some((population[i].clone(), fresh[i]));
                }
                break;
            }
        }
        history.push(best.as_ref().map_or(f64::NAN, |b| b.1));
        if generation == generations {
            break;
        }

        let parents: Vec<&Vec<bool>> = ranked[..config.parents].iter().map(|&i| &population[i]).collect();
        let mut next: Vec<Vec<bool>> = Vec::with_capacity(config.population);
        let mut next_scores: Vec<Option<f64>> = Vec::with_capacity(config.population);
        for &i in &ranked[..config.elites] {
            next.push(population[i].clone());
            next_scores.push(Some(fresh[i]));
        }
        for c in 0..offspring {
            let a = parents[c % parents.len()];
            let b = parents[(c + 1) % parents.len()];
            let mut child: Vec<bool> = a.iter().zip(b).map(|(&x, &y)| if rng.random_bool(0.5) { x } else { y }).collect();
            for g in index::sample(rng, n, config.genes_mutated.min(n)) {
                child[g] = !child[g];
            }
            next.push(child);
            next_scores.push(None);
        }
        population = next;
        scores = next_scores;
    }

    let (t, value) = best.ok_or(Error::InfeasibleSearch)?;
    Ok(GaOutcome { allocation: Allocation::new(t, k)?, value, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::Additive;
    use crate::rng::stream;

    #[test]
    fn generation_rule() {
        let c = GaConfig::default();
        assert_eq!(c.generations_for(100), 4000);
        assert_eq!(c.generations_for(101), 5000);
        assert_eq!(c.generations_for(0), 300);
    }

    #[test]
    fn infeasible_fitness_is_zero() {
        let obj = Additive(vec![1.0; 6]);
        assert_eq!(fitness(&obj, &[true, true, true, false, false, false], 2), 0.0);
        assert_eq!(fitness(&obj, &[true, true, false, false, false, false], 2), 2.0);
    }

    #[test]
    fn finds_modular_optimum_and_respects_seeds() {
        let obj = Additive((0..12).map(|i| i as f64).collect());
        let seed = Allocation::from_selected(12, 3, &[0, 1, 2]).unwrap();
        let cfg = GaConfig { generations: Some(200), ..GaConfig::default() };
        let out = genetic(&obj, 3, &cfg, &[seed], &mut stream(1, 0)).unwrap();
        assert_eq!(out.allocation.selected(), vec![9, 10, 11]);
        assert!(out.history.windows(2).all(|w| w[1] >= w[0]));
        assert!(out.history[0] >= 3.0);
    }

    #[test]
    fn rejects_bad_config() {
        let obj = Additive(vec![1.0; 4]);
        let cfg = GaConfig { elites: 40, ..GaConfig::default() };
        assert!(genetic(&obj, 1, &cfg, &[], &mut stream(0, 0)).is_err());
        let bad = Allocation::new(alloc::vec![true, true, false, false], 2).unwrap();
        assert!(genetic(&obj, 1, &GaConfig::default(), &[bad], &mut stream(0, 0)).is_err());
    }
}
