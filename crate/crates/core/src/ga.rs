//! Genetic search over reconfiguration orders: truncation selection, PMX
//! crossover, swap mutation and single-individual elitism.

use std::collections::HashMap;
use std::io::Write;

use itertools::Itertools;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reconfig::{fitness, is_permutation, trajectory, QualityModel, ReconfigOrder, TransitionScenario};
use crate::scalar::Scalar;

/// Exhaustive search refuses anything with more steps than this.
pub const BRUTE_FORCE_LIMIT: usize = 8;

/// Best-fitness changes below this count as a stalled generation.
pub const STALL_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaParams {
    pub population_size: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    /// Stop after this many consecutive generations without improvement.
    pub patience: usize,
    /// Hard cap on generations, counting the initial population.
    pub max_generations: usize,
    pub elitism: usize,
    pub seed: u64,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            population_size: 64,
            crossover_prob: 0.8,
            mutation_prob: 0.1,
            patience: 20,
            max_generations: 500,
            elitism: 1,
            seed: 0,
        }
    }
}

impl GaParams {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 4 || !self.population_size.is_multiple_of(2) {
            return Err(Error::param("population_size", "must be even and >= 4"));
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) {
            return Err(Error::param("crossover_prob", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.mutation_prob) {
            return Err(Error::param("mutation_prob", "must lie in [0, 1]"));
        }
        if self.patience == 0 {
            return Err(Error::param("patience", "must be >= 1"));
        }
        if self.max_generations == 0 {
            return Err(Error::param("max_generations", "must be >= 1"));
        }
        if self.elitism >= self.population_size {
            return Err(Error::param("elitism", "must be smaller than population_size"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Individual<T> {
    pub order: ReconfigOrder,
    pub fitness: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats<T> {
    pub generation: usize,
    pub best: T,
    pub mean: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaResult<T> {
    pub best: Individual<T>,
    pub generations_run: usize,
    /// Distinct orders evaluated (cache misses).
    pub evaluations: usize,
    pub progress: Vec<GenerationStats<T>>,
}

impl<T: Scalar> GaResult<T> {
    pub fn best_history(&self) -> Vec<T> {
        self.progress.iter().map(|g| g.best).collect()
    }

    /// `generation, best_fitness, mean_fitness`.
    pub fn write_progress_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["generation", "best_fitness", "mean_fitness"])?;
        for g in &self.progress {
            wtr.write_record([
                g.generation.to_string(),
                format!("{:?}", g.best.as_f64()),
                format!("{:?}", g.mean.as_f64()),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn init_population<R: Rng + ?Sized>(size: usize, n_steps: usize, rng: &mut R) -> Vec<ReconfigOrder> {
    (0..size).map(|_| ReconfigOrder::random(n_steps, rng)).collect()
}

/// Indices of the top half by fitness, best first; ties keep the earlier index.
pub fn select_parents<T: Scalar>(fitnesses: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..fitnesses.len()).collect();
    idx.sort_by(|&a, &b| fitnesses[b].partial_cmp(&fitnesses[a]).expect("finite fitness"));
    idx.truncate(fitnesses.len().div_ceil(2));
    idx
}

/// Partially mapped crossover on the half-open segment `[cut1, cut2)`.
///
/// Each child keeps its own parent's segment and fills the rest from the
/// other parent, following the segment mapping on conflicts.
pub fn pmx(a: &ReconfigOrder, b: &ReconfigOrder, cut1: usize, cut2: usize) -> Result<(ReconfigOrder, ReconfigOrder)> {
    let n = a.len();
    if b.len() != n {
        return Err(Error::InvalidOrder(format!(
            "parents differ in length: {n} vs {}",
            b.len()
        )));
    }
    if cut1 >= cut2 || cut2 > n {
        return Err(Error::InvalidCuts { cut1, cut2, len: n });
    }
    let child_a = pmx_child(a.steps(), b.steps(), cut1, cut2);
    let child_b = pmx_child(b.steps(), a.steps(), cut1, cut2);
    Ok((ReconfigOrder::new(child_a)?, ReconfigOrder::new(child_b)?))
}

fn pmx_child(keep: &[usize], fill: &[usize], cut1: usize, cut2: usize) -> Vec<usize> {
    let n = keep.len();
    // pos_in_keep[v] = index of value v in `keep`
    let mut pos_in_keep = vec![0; n + 1];
    for (i, &v) in keep.iter().enumerate() {
        pos_in_keep[v] = i;
    }
    let in_segment = |v: usize| (cut1..cut2).contains(&pos_in_keep[v]);
    let mut child = fill.to_vec();
    child[cut1..cut2].copy_from_slice(&keep[cut1..cut2]);
    for i in (0..cut1).chain(cut2..n) {
        let mut v = fill[i];
        while in_segment(v) {
            v = fill[pos_in_keep[v]];
        }
        child[i] = v;
    }
    child
}

/// Random cuts with `cut1 < cut2` drawn from `0..=n`.
pub fn random_cuts<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (usize, usize) {
    let x = rng.random_range(0..=n);
    let mut y = rng.random_range(0..n);
    if y >= x {
        y += 1;
    }
    (x.min(y), x.max(y))
}

/// With probability `prob`, swaps two distinct random positions.
pub fn mutate<R: Rng + ?Sized>(order: &mut ReconfigOrder, prob: f64, rng: &mut R) {
    let n = order.len();
    if n < 2 || !rng.random_bool(prob) {
        return;
    }
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    order.swap(i, j);
}

/// Fitness function scoring an order by its trajectory under `model`.
pub fn order_fitness<'a, T: Scalar, M: QualityModel<T> + ?Sized>(
    model: &'a M,
    scenario: &'a TransitionScenario,
) -> impl Fn(&ReconfigOrder) -> Result<T> + Sync + 'a {
    move |order| Ok(fitness(&trajectory(model, scenario, order)?).value)
}

struct Evaluator<'f, T, F> {
    f: &'f F,
    cache: HashMap<ReconfigOrder, T>,
}

impl<T: Scalar, F: Fn(&ReconfigOrder) -> Result<T> + Sync> Evaluator<'_, T, F> {
    fn evaluate(&mut self, pop: &[ReconfigOrder]) -> Result<Vec<T>> {
        let fresh: Vec<&ReconfigOrder> = pop.iter().filter(|o| !self.cache.contains_key(o)).unique().collect();
        let scored: Vec<T> = fresh.par_iter().map(|o| (self.f)(o)).collect::<Result<_>>()?;
        for (o, v) in fresh.into_iter().zip(scored) {
            if !v.is_finite() {
                return Err(Error::Fitness(format!("non-finite fitness {v} for order {o}")));
            }
            self.cache.insert(o.clone(), v);
        }
        Ok(pop.iter().map(|o| self.cache[o]).collect())
    }
}

/// Maximizes `fitness_fn` over permutations of `1..=n_steps`.
pub fn optimize<T, F>(fitness_fn: &F, params: &GaParams, n_steps: usize) -> Result<GaResult<T>>
where
    T: Scalar,
    F: Fn(&ReconfigOrder) -> Result<T> + Sync,
{
    params.validate()?;
    if n_steps < 1 {
        return Err(Error::param("n_steps", "must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut eval = Evaluator {
        f: fitness_fn,
        cache: HashMap::new(),
    };
    let mut pop = init_population(params.population_size, n_steps, &mut rng);
    let mut fit = eval.evaluate(&pop)?;
    let mut progress = Vec::new();
    let mut stall = 0;
    let mut prev_best: Option<T> = None;

    for generation in 0.. {
        let ranked = select_parents(&fit);
        let best = fit[ranked[0]];
        let mean = fit.iter().copied().sum::<T>() / T::lit(fit.len() as f64);
        progress.push(GenerationStats { generation, best, mean });
        if let Some(p) = prev_best {
            if (best - p).abs().as_f64() < STALL_TOLERANCE {
                stall += 1;
            } else {
                stall = 0;
            }
        }
        prev_best = Some(best);
        if stall >= params.patience || progress.len() >= params.max_generations {
            break;
        }

        let mut next: Vec<ReconfigOrder> = ranked[..params.elitism].iter().map(|&i| pop[i].clone()).collect();
        let mut children = Vec::with_capacity(params.population_size);
        while next.len() + children.len() < params.population_size {
            let pa = &pop[*ranked.choose(&mut rng).expect("non-empty")];
            let pb = &pop[*ranked.choose(&mut rng).expect("non-empty")];
            let (ca, cb) = if n_steps >= 2 && rng.random_bool(params.crossover_prob) {
                let (c1, c2) = random_cuts(n_steps, &mut rng);
                pmx(pa, pb, c1, c2)?
            } else {
                (pa.clone(), pb.clone())
            };
            children.push(ca);
            children.push(cb);
        }
        children.truncate(params.population_size - next.len());
        for c in &mut children {
            mutate(c, params.mutation_prob, &mut rng);
        }
        next.extend(children);
        pop = next;
        fit = eval.evaluate(&pop)?;
    }

    let ranked = select_parents(&fit);
    Ok(GaResult {
        best: Individual {
            order: pop[ranked[0]].clone(),
            fitness: fit[ranked[0]],
        },
        generations_run: progress.len(),
        evaluations: eval.cache.len(),
        progress,
    })
}

/// Exhaustive maximum; the lexicographically first order wins ties.
pub fn brute_force_best<T, F>(fitness_fn: &F, n_steps: usize) -> Result<Individual<T>>
where
    T: Scalar,
    F: Fn(&ReconfigOrder) -> Result<T>,
{
    if n_steps == 0 {
        return Err(Error::param("n_steps", "must be >= 1"));
    }
    if n_steps > BRUTE_FORCE_LIMIT {
        return Err(Error::SearchTooLarge {
            n_steps,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let mut best: Option<Individual<T>> = None;
    for perm in (1..=n_steps).permutations(n_steps) {
        debug_assert!(is_permutation(&perm));
        let order = ReconfigOrder::new(perm)?;
        let f = fitness_fn(&order)?;
        if best.as_ref().is_none_or(|b| f > b.fitness) {
            best = Some(Individual { order, fitness: f });
        }
    }
    Ok(best.expect("at least one permutation"))
}
