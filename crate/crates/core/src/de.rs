//! Differential evolution over flat parameter vectors, and its use for
//! fitting the parameters of a fixed tree structure.
//!
//! Two trial-vector rules are available. [`DeVariant::PaperEq7`] builds
//! `r1 + F (r1 - g) + F (r2 - r3)` where `g` is the population best, and
//! falls back to `r1` (not the target member) for components whose uniform
//! draw is at least `C`. [`DeVariant::RandOne`] uses the conventional
//! `r1 + F (r2 - r3)` under the same mask. Replacement is greedy and
//! synchronous: trials are built from the generation's population, evaluated
//! (in parallel), then each replaces its target member when not worse.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::seed::{self, stream};
use crate::tree::{FntModel, OutputMap, ParamRole, TreeError, MIN_WIDTH};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeError {
    #[error("invalid DE config: {0}")]
    InvalidConfig(String),
    #[error("bounds dimension {found} does not match problem dimension {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("evaluation budget exhausted")]
    BudgetExhausted,
    #[error("dataset has {found} features, model expects {expected}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("dataset is empty")]
    EmptyData,
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeVariant {
    #[default]
    PaperEq7,
    RandOne,
}

impl std::str::FromStr for DeVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "paper_eq7" => Ok(DeVariant::PaperEq7),
            "rand_one" => Ok(DeVariant::RandOne),
            other => Err(format!("unknown DE variant `{other}` (paper_eq7|rand_one)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeConfig {
    pub population_size: usize,
    /// F, broadcast to every component.
    pub mutation_factor: f64,
    /// C, broadcast to every component.
    pub crossover_prob: f64,
    /// Objective evaluations, initial population included.
    pub max_evaluations: usize,
    pub variant: DeVariant,
    /// Compose the tree with a fitted `scale * y + offset` output map.
    pub fit_output_map: bool,
    pub seed: u64,
}

impl Default for DeConfig {
    fn default() -> Self {
        Self {
            population_size: 50,
            mutation_factor: 0.5,
            crossover_prob: 0.9,
            max_evaluations: 10_000,
            variant: DeVariant::PaperEq7,
            fit_output_map: true,
            seed: 0,
        }
    }
}

impl DeConfig {
    pub fn validate(&self) -> Result<(), DeError> {
        let bad = |m: String| Err(DeError::InvalidConfig(m));
        if self.population_size < 4 {
            return bad(format!("population_size {} < 4", self.population_size));
        }
        if !(self.mutation_factor > 0.0 && self.mutation_factor.is_finite()) {
            return bad(format!("mutation_factor {} must be > 0", self.mutation_factor));
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) {
            return bad(format!("crossover_prob {} outside [0, 1]", self.crossover_prob));
        }
        if self.max_evaluations < self.population_size {
            return bad(format!(
                "max_evaluations {} below population_size {}",
                self.max_evaluations, self.population_size
            ));
        }
        Ok(())
    }
}

/// Box bound for one dimension.
pub type Bound = (f64, f64);

/// Folds `x` back into `[lo, hi]` by mirror reflection at the walls.
pub fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    if (lo..=hi).contains(&x) {
        return x;
    }
    let w = hi - lo;
    if w <= 0.0 || !x.is_finite() {
        return lo;
    }
    let mut y = (x - lo) % (2.0 * w);
    if y < 0.0 {
        y += 2.0 * w;
    }
    if y > w {
        y = 2.0 * w - y;
    }
    (lo + y).clamp(lo, hi)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeState {
    pub population: Vec<Vec<f64>>,
    pub fitness: Vec<f64>,
    pub best_index: usize,
    pub best_fitness: f64,
    pub evaluations_used: usize,
    pub generation: u64,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &f) in v.iter().enumerate() {
        if f < v[best] {
            best = i;
        }
    }
    best
}

impl DeState {
    /// Uniform initial population; `seeds` replace the first members after
    /// being folded into bounds.
    pub fn init<F>(
        objective: &F,
        bounds: &[Bound],
        config: &DeConfig,
        seeds: &[Vec<f64>],
    ) -> Result<Self, DeError>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        config.validate()?;
        if bounds.is_empty() {
            return Err(DeError::Dimension {
                expected: 1,
                found: 0,
            });
        }
        if let Some(&(lo, hi)) = bounds.iter().find(|(lo, hi)| !(lo <= hi)) {
            return Err(DeError::InvalidConfig(format!("unordered bound [{lo}, {hi}]")));
        }
        let mut rng = seed::rng(config.seed, &[stream::DE_INIT]);
        let mut population: Vec<Vec<f64>> = (0..config.population_size)
            .map(|_| {
                bounds
                    .iter()
                    .map(|&(lo, hi)| if hi > lo { rng.random_range(lo..hi) } else { lo })
                    .collect()
            })
            .collect();
        for (slot, s) in population.iter_mut().zip(seeds) {
            if s.len() != bounds.len() {
                return Err(DeError::Dimension {
                    expected: bounds.len(),
                    found: s.len(),
                });
            }
            *slot = s
                .iter()
                .zip(bounds)
                .map(|(&x, &(lo, hi))| reflect(x, lo, hi))
                .collect();
        }
        let fitness: Vec<f64> = population
            .par_iter()
            .map(|p| sanitize(objective(p)))
            .collect();
        let best_index = argmin(&fitness);
        Ok(Self {
            best_fitness: fitness[best_index],
            best_index,
            evaluations_used: population.len(),
            population,
            fitness,
            generation: 0,
        })
    }

    pub fn best(&self) -> &[f64] {
        &self.population[self.best_index]
    }
}

/// Three distinct member indices, none equal to `target`.
pub fn pick_donors<R: rand::Rng>(rng: &mut R, n: usize, target: usize) -> [usize; 3] {
    debug_assert!(n >= 4);
    let mut out = [usize::MAX; 3];
    let mut k = 0;
    while k < 3 {
        let c = rng.random_range(0..n);
        if c != target && !out[..k].contains(&c) {
            out[k] = c;
            k += 1;
        }
    }
    out
}

/// Builds the trial vector for member `target`, already folded into bounds.
pub fn trial_vector<R: rand::Rng>(
    population: &[Vec<f64>],
    best: &[f64],
    target: usize,
    bounds: &[Bound],
    config: &DeConfig,
    rng: &mut R,
) -> (Vec<f64>, [usize; 3]) {
    let donors = pick_donors(rng, population.len(), target);
    let [r1, r2, r3] = donors.map(|i| &population[i]);
    let f = config.mutation_factor;
    let trial = (0..bounds.len())
        .map(|k| {
            let u: f64 = rng.random();
            let v = if u < config.crossover_prob {
                match config.variant {
                    DeVariant::PaperEq7 => r1[k] + f * (r1[k] - best[k]) + f * (r2[k] - r3[k]),
                    DeVariant::RandOne => r1[k] + f * (r2[k] - r3[k]),
                }
            } else {
                r1[k]
            };
            reflect(v, bounds[k].0, bounds[k].1)
        })
        .collect();
    (trial, donors)
}

/// One synchronous generation. Members beyond the remaining budget keep
/// their place untried.
pub fn de_step<F>(
    state: &mut DeState,
    objective: &F,
    bounds: &[Bound],
    config: &DeConfig,
) -> Result<(), DeError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let remaining = config.max_evaluations.saturating_sub(state.evaluations_used);
    if remaining == 0 {
        return Err(DeError::BudgetExhausted);
    }
    let n = state.population.len().min(remaining);
    let gen = state.generation;
    let best = state.best().to_vec();
    let trials: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut rng = seed::rng(config.seed, &[stream::DE_MEMBER, gen, i as u64]);
            trial_vector(&state.population, &best, i, bounds, config, &mut rng).0
        })
        .collect();
    let scores: Vec<f64> = trials.par_iter().map(|t| sanitize(objective(t))).collect();
    for (i, (trial, score)) in trials.into_iter().zip(scores).enumerate() {
        if score <= state.fitness[i] {
            state.population[i] = trial;
            state.fitness[i] = score;
        }
    }
    state.evaluations_used += n;
    state.generation += 1;
    state.best_index = argmin(&state.fitness);
    state.best_fitness = state.fitness[state.best_index];
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeResult {
    pub best: Vec<f64>,
    pub best_fitness: f64,
    pub evaluations: usize,
    /// `(evaluation_count, best_fitness)` after initialization and each step.
    pub history: Vec<(usize, f64)>,
}

/// Runs until the evaluation budget is spent.
pub fn minimize<F>(
    objective: &F,
    bounds: &[Bound],
    config: &DeConfig,
    seeds: &[Vec<f64>],
) -> Result<DeResult, DeError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut state = DeState::init(objective, bounds, config, seeds)?;
    let mut history = vec![(state.evaluations_used, state.best_fitness)];
    while de_step(&mut state, objective, bounds, config).is_ok() {
        history.push((state.evaluations_used, state.best_fitness));
    }
    Ok(DeResult {
        best: state.best().to_vec(),
        best_fitness: state.best_fitness,
        evaluations: state.evaluations_used,
        history,
    })
}

/// Search ranges for node arguments `a`, `b` and edge weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchRanges {
    pub node_arg: (f64, f64),
    pub edge: (f64, f64),
}

impl Default for SearchRanges {
    fn default() -> Self {
        Self {
            node_arg: (0.0, 1.0),
            edge: (-1.0, 1.0),
        }
    }
}

impl SearchRanges {
    pub fn validate(&self) -> Result<(), String> {
        for (name, (lo, hi)) in [("node_arg", self.node_arg), ("edge", self.edge)] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(format!("{name} range [{lo}, {hi}] must be finite and ordered"));
            }
        }
        if self.node_arg.1 < MIN_WIDTH {
            return Err(format!("node_arg range must admit widths >= {MIN_WIDTH}"));
        }
        Ok(())
    }

    /// Bound for `b`: the node-argument range with the near-zero band cut
    /// away when the range starts at or above zero.
    pub fn width_bound(&self) -> Bound {
        let (lo, hi) = self.node_arg;
        if lo >= -MIN_WIDTH {
            (lo.max(MIN_WIDTH), hi)
        } else {
            (lo, hi)
        }
    }

    pub fn bound_for(&self, role: ParamRole) -> Bound {
        match role {
            ParamRole::Center => self.node_arg,
            ParamRole::Width => self.width_bound(),
            ParamRole::Weight => self.edge,
        }
    }
}

/// Bounds for the output map given the training targets.
pub fn output_map_bounds(targets: &[f64]) -> [Bound; 2] {
    let lo = targets.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = targets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut span = hi - lo;
    if !(span > 0.0) {
        span = lo.abs().max(1.0);
    }
    [(-2.0 * span, 2.0 * span), (lo - span, hi + span)]
}

/// Training RMSE of `model` with substitute parameters (tree parameters,
/// then `scale, offset` when `with_map`). Infinite for inadmissible widths.
pub fn param_rmse(
    model: &FntModel,
    width_slots: &[usize],
    params: &[f64],
    with_map: bool,
    data: &Dataset,
) -> f64 {
    if width_slots.iter().any(|&k| params[k].abs() < MIN_WIDTH) {
        return f64::INFINITY;
    }
    let n_tree = model.param_count();
    let (tree, map) = params.split_at(n_tree);
    let (scale, offset) = if with_map {
        (map[0], map[1])
    } else {
        model.output_map().map_or((1.0, 0.0), |m| (m.scale, m.offset))
    };
    let mut sse = 0.0;
    for row in data.rows() {
        let y = scale * model.evaluate_with(tree, &row.features) + offset;
        let e = y - row.target;
        sse += e * e;
    }
    (sse / data.len() as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamFit {
    pub model: FntModel,
    pub rmse: f64,
    pub evaluations: usize,
    pub history: Vec<(usize, f64)>,
}

/// Fits all node arguments and edge weights of `model`'s fixed structure
/// (plus the output map when enabled) to minimize training RMSE. The current
/// parameters seed one population member, so the result never regresses.
pub fn optimize_parameters(
    model: &FntModel,
    data: &Dataset,
    config: &DeConfig,
    ranges: &SearchRanges,
) -> Result<ParamFit, DeError> {
    if data.n_features() != model.input_arity() {
        return Err(DeError::ArityMismatch {
            expected: model.input_arity(),
            found: data.n_features(),
        });
    }
    if data.is_empty() {
        return Err(DeError::EmptyData);
    }
    ranges.validate().map_err(DeError::InvalidConfig)?;
    let roles = model.param_roles();
    let width_slots: Vec<usize> = roles
        .iter()
        .enumerate()
        .filter(|(_, r)| **r == ParamRole::Width)
        .map(|(k, _)| k)
        .collect();
    let mut bounds: Vec<Bound> = roles.iter().map(|&r| ranges.bound_for(r)).collect();
    let mut start = model.flatten().0;
    let with_map = config.fit_output_map;
    if with_map {
        bounds.extend(output_map_bounds(&data.targets()));
        let map = model.output_map().unwrap_or(OutputMap {
            scale: 1.0,
            offset: 0.0,
        });
        start.extend([map.scale, map.offset]);
    }
    // widen so the seeded member is representable exactly
    for (b, &x) in bounds.iter_mut().zip(&start) {
        b.0 = b.0.min(x);
        b.1 = b.1.max(x);
    }
    let objective = |p: &[f64]| param_rmse(model, &width_slots, p, with_map, data);
    let result = minimize(&objective, &bounds, config, &[start])?;
    let n_tree = model.param_count();
    let mut fitted = model.unflatten_slice(&result.best[..n_tree])?;
    if with_map {
        fitted = fitted.with_output_map(Some(OutputMap {
            scale: result.best[n_tree],
            offset: result.best[n_tree + 1],
        }));
    }
    Ok(ParamFit {
        model: fitted,
        rmse: result.best_fitness,
        evaluations: result.evaluations,
        history: result.history,
    })
}
