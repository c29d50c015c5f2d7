//! Structure search: genetic programming over tree topologies.
//!
//! Each generation keeps the best individual, fills the rest of the
//! population with tournament-selected parents recombined by subtree
//! crossover and perturbed by one of four mutation operators, and scores every
//! new structure by its training RMSE after a short DE refinement of its
//! parameters.

use std::io::Write;

use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::de::{optimize_parameters, DeConfig, DeError, SearchRanges};
use crate::seed::{self, stream, Rng};
use crate::tree::{Activation, CompNode, Edge, FntModel, Node, TreeError};

#[derive(Debug, Error)]
pub enum GpError {
    #[error("invalid GP config: {0}")]
    InvalidConfig(String),
    #[error("input arity must be at least 1")]
    NoInputs,
    #[error("dataset has {found} features, expected {expected}")]
    ArityMismatch { expected: usize, found: usize },
    #[error(transparent)]
    De(#[from] DeError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("writing generation log: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    pub population_size: usize,
    pub tournament_size: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    /// Maximum tree levels; a root with leaf children has height 2.
    pub max_height: usize,
    /// Maximum children of a computational node.
    pub max_arity: usize,
    pub max_generations: usize,
    pub ranges: SearchRanges,
    /// DE evaluations spent refining each new structure before scoring.
    pub inner_de_budget: usize,
    /// DE population used for that refinement.
    pub inner_de_population: usize,
    /// Generations without improvement of the best RMSE before stopping.
    pub stagnation_patience: usize,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            population_size: 30,
            tournament_size: 15,
            crossover_prob: 0.8,
            mutation_prob: 0.2,
            max_height: 5,
            max_arity: 4,
            max_generations: 100_000,
            ranges: SearchRanges::default(),
            inner_de_budget: 500,
            inner_de_population: 20,
            stagnation_patience: 200,
            activation: Activation::Squared,
            seed: 0,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<(), GpError> {
        let bad = |m: String| Err(GpError::InvalidConfig(m));
        if self.population_size < 2 {
            return bad(format!("population_size {} < 2", self.population_size));
        }
        if self.tournament_size < 2 || self.tournament_size > self.population_size {
            return bad(format!(
                "tournament_size {} outside [2, population_size]",
                self.tournament_size
            ));
        }
        for (name, p) in [
            ("crossover_prob", self.crossover_prob),
            ("mutation_prob", self.mutation_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} {p} outside [0, 1]"));
            }
        }
        if self.max_height < 2 {
            return bad(format!("max_height {} < 2", self.max_height));
        }
        if self.max_arity < 2 {
            return bad(format!("max_arity {} < 2", self.max_arity));
        }
        if self.max_generations == 0 || self.stagnation_patience == 0 {
            return bad("generation and patience budgets must be positive".into());
        }
        if self.inner_de_population < 4 || self.inner_de_budget < self.inner_de_population {
            return bad(format!(
                "inner DE needs population >= 4 and budget >= population, got {} and {}",
                self.inner_de_population, self.inner_de_budget
            ));
        }
        self.ranges.validate().map_err(GpError::InvalidConfig)?;
        Ok(())
    }
}

/// Probability that a non-root node above the height limit is grown as a leaf.
const GROW_LEAF_PROB: f64 = 0.5;
const CROSSOVER_ATTEMPTS: usize = 8;

fn random_comp(
    config: &GpConfig,
    input_arity: usize,
    levels: usize,
    rng: &mut Rng,
) -> Node {
    let (alo, ahi) = config.ranges.node_arg;
    let (blo, bhi) = config.ranges.width_bound();
    let (wlo, whi) = config.ranges.edge;
    let a = rng.random_range(alo..ahi);
    let b = if bhi > blo { rng.random_range(blo..bhi) } else { blo };
    let n = rng.random_range(2..=config.max_arity);
    let edges = (0..n)
        .map(|_| {
            let weight = rng.random_range(wlo..whi);
            let child = random_subtree(config, input_arity, levels - 1, rng);
            Edge { weight, child }
        })
        .collect();
    Node::Comp(CompNode { a, b, edges })
}

/// Grown subtree spanning at most `levels` levels.
fn random_subtree(config: &GpConfig, input_arity: usize, levels: usize, rng: &mut Rng) -> Node {
    if levels <= 1 || rng.random_bool(GROW_LEAF_PROB) {
        Node::leaf(rng.random_range(0..input_arity))
    } else {
        random_comp(config, input_arity, levels, rng)
    }
}

/// Random valid tree respecting the height and arity limits.
pub fn random_tree(
    config: &GpConfig,
    input_arity: usize,
    rng: &mut Rng,
) -> Result<FntModel, GpError> {
    if input_arity == 0 {
        return Err(GpError::NoInputs);
    }
    config.validate()?;
    let root = random_comp(config, input_arity, config.max_height, rng);
    Ok(FntModel::new(root, input_arity)?.with_activation(config.activation))
}

fn offspring_ok(root: &Node, max_height: usize) -> bool {
    !root.is_leaf() && root.height() <= max_height
}

/// Swaps one uniformly chosen subtree of each parent. Cut points are redrawn
/// when an offspring would exceed the height limit or end up with a leaf
/// root; after a bounded number of attempts the parents are returned as is.
pub fn crossover(
    parent_a: &FntModel,
    parent_b: &FntModel,
    config: &GpConfig,
    rng: &mut Rng,
) -> (FntModel, FntModel) {
    let (na, nb) = (parent_a.complexity(), parent_b.complexity());
    for _ in 0..CROSSOVER_ATTEMPTS {
        let ia = rng.random_range(0..na);
        let ib = rng.random_range(0..nb);
        let mut ra = parent_a.root().clone();
        let mut rb = parent_b.root().clone();
        let sa = ra.get(ia).cloned().expect("index within tree");
        let sb = rb.get(ib).cloned().expect("index within tree");
        *ra.get_mut(ia).expect("index within tree") = sb;
        *rb.get_mut(ib).expect("index within tree") = sa;
        if offspring_ok(&ra, config.max_height) && offspring_ok(&rb, config.max_height) {
            let ca = parent_a.with_root(ra).expect("swap preserves validity");
            let cb = parent_b.with_root(rb).expect("swap preserves validity");
            return (ca, cb);
        }
    }
    (parent_a.clone(), parent_b.clone())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MutationOp {
    /// Re-draw the feature of one leaf.
    ReplaceOneLeaf,
    /// Re-draw the feature of every leaf.
    ReplaceAllLeaves,
    /// Replace a computational node with a freshly grown subtree.
    GrowSubtree,
    /// Collapse a non-root computational node into a leaf.
    PruneToLeaf,
}

impl MutationOp {
    pub const ALL: [MutationOp; 4] = [
        MutationOp::ReplaceOneLeaf,
        MutationOp::ReplaceAllLeaves,
        MutationOp::GrowSubtree,
        MutationOp::PruneToLeaf,
    ];
}

struct NodeSite {
    index: usize,
    depth: usize,
    leaf: bool,
}

fn sites(root: &Node) -> Vec<NodeSite> {
    let mut out = Vec::new();
    root.walk(&mut |index, depth, n| {
        out.push(NodeSite {
            index,
            depth,
            leaf: n.is_leaf(),
        })
    });
    out
}

fn relabel_leaves(node: &mut Node, input_arity: usize, rng: &mut Rng) {
    match node {
        Node::Leaf { feature } => *feature = rng.random_range(0..input_arity),
        Node::Comp(c) => c
            .edges
            .iter_mut()
            .for_each(|e| relabel_leaves(&mut e.child, input_arity, rng)),
    }
}

/// Whether `op` can change `model` (pruning needs a non-root internal node).
pub fn applicable(op: MutationOp, model: &FntModel) -> bool {
    match op {
        MutationOp::PruneToLeaf => model.root().comp_count() > 1,
        _ => true,
    }
}

/// Applies a specific operator to a copy of `model`.
pub fn mutate_with(
    model: &FntModel,
    op: MutationOp,
    config: &GpConfig,
    rng: &mut Rng,
) -> FntModel {
    let arity = model.input_arity();
    let mut root = model.root().clone();
    let all = sites(&root);
    match op {
        MutationOp::ReplaceOneLeaf => {
            let leaves: Vec<&NodeSite> = all.iter().filter(|s| s.leaf).collect();
            let pick = leaves[rng.random_range(0..leaves.len())].index;
            *root.get_mut(pick).expect("leaf index") = Node::leaf(rng.random_range(0..arity));
        }
        MutationOp::ReplaceAllLeaves => relabel_leaves(&mut root, arity, rng),
        MutationOp::GrowSubtree => {
            let comps: Vec<&NodeSite> = all.iter().filter(|s| !s.leaf).collect();
            let site = comps[rng.random_range(0..comps.len())];
            let levels = config.max_height + 1 - site.depth;
            *root.get_mut(site.index).expect("node index") =
                random_comp(config, arity, levels.max(2), rng);
        }
        MutationOp::PruneToLeaf => {
            let inner: Vec<&NodeSite> = all.iter().filter(|s| !s.leaf && s.depth > 1).collect();
            if inner.is_empty() {
                return model.clone();
            }
            let pick = inner[rng.random_range(0..inner.len())].index;
            *root.get_mut(pick).expect("node index") = Node::leaf(rng.random_range(0..arity));
        }
    }
    model.with_root(root).expect("mutation preserves validity")
}

/// Applies one operator drawn uniformly from those applicable to `model`.
pub fn mutate(model: &FntModel, config: &GpConfig, rng: &mut Rng) -> FntModel {
    let ops: Vec<MutationOp> = MutationOp::ALL
        .into_iter()
        .filter(|&op| applicable(op, model))
        .collect();
    let op = ops[rng.random_range(0..ops.len())];
    mutate_with(model, op, config, rng)
}

/// Index of the lowest-fitness member of a random tournament.
pub fn tournament(fitness: &[f64], size: usize, rng: &mut Rng) -> usize {
    sample(rng, fitness.len(), size.min(fitness.len()))
        .into_iter()
        .min_by(|&a, &b| fitness[a].total_cmp(&fitness[b]).then(a.cmp(&b)))
        .expect("non-empty tournament")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    /// Best-so-far training RMSE.
    pub best_rmse: f64,
    pub mean_rmse: f64,
    pub best_complexity: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evolution {
    pub best: FntModel,
    pub best_rmse: f64,
    pub history: Vec<GenerationStats>,
}

#[derive(Clone, Debug)]
struct Individual {
    model: FntModel,
    rmse: f64,
}

fn refine(
    model: &FntModel,
    data: &Dataset,
    gp: &GpConfig,
    de: &DeConfig,
    seed_: u64,
) -> Result<Individual, GpError> {
    let cfg = DeConfig {
        max_evaluations: gp.inner_de_budget,
        population_size: gp.inner_de_population,
        seed: seed_,
        ..de.clone()
    };
    let fit = optimize_parameters(model, data, &cfg, &gp.ranges)?;
    Ok(Individual {
        model: fit.model,
        rmse: fit.rmse,
    })
}

fn stats(generation: usize, pop: &[Individual], best: &Individual) -> GenerationStats {
    let finite: Vec<f64> = pop.iter().map(|i| i.rmse).filter(|v| v.is_finite()).collect();
    GenerationStats {
        generation,
        best_rmse: best.rmse,
        mean_rmse: finite.iter().sum::<f64>() / finite.len().max(1) as f64,
        best_complexity: best.model.complexity(),
    }
}

/// Runs the structure search on (already normalized) training data.
pub fn evolve_structure(
    data: &Dataset,
    gp: &GpConfig,
    de: &DeConfig,
) -> Result<Evolution, GpError> {
    gp.validate()?;
    de.validate()?;
    let arity = data.n_features();
    let refine_seed = |gen: u64, i: u64| seed::derive(gp.seed, &[stream::GP_REFINE, gen, i]);

    let mut init_rng = seed::rng(gp.seed, &[stream::GP_INIT]);
    let initial: Vec<FntModel> = (0..gp.population_size)
        .map(|_| random_tree(gp, arity, &mut init_rng))
        .collect::<Result<_, _>>()?;
    let mut population: Vec<Individual> = initial
        .par_iter()
        .enumerate()
        .map(|(i, m)| refine(m, data, gp, de, refine_seed(0, i as u64)))
        .collect::<Result<_, _>>()?;

    let fitness: Vec<f64> = population.iter().map(|i| i.rmse).collect();
    let mut best = population[best_index(&fitness)].clone();
    let mut history = vec![stats(0, &population, &best)];
    let mut stale = 0;

    for gen in 1..=gp.max_generations {
        let fitness: Vec<f64> = population.iter().map(|i| i.rmse).collect();
        let elite = population[best_index(&fitness)].clone();
        let mut rng = seed::rng(gp.seed, &[stream::GP_VARIATION, gen as u64]);
        let mut children: Vec<FntModel> = Vec::with_capacity(gp.population_size);
        while children.len() < gp.population_size - 1 {
            let pa = &population[tournament(&fitness, gp.tournament_size, &mut rng)].model;
            let pb = &population[tournament(&fitness, gp.tournament_size, &mut rng)].model;
            let (mut ca, mut cb) = if rng.random_bool(gp.crossover_prob) {
                crossover(pa, pb, gp, &mut rng)
            } else {
                (pa.clone(), pb.clone())
            };
            if rng.random_bool(gp.mutation_prob) {
                ca = mutate(&ca, gp, &mut rng);
            }
            if rng.random_bool(gp.mutation_prob) {
                cb = mutate(&cb, gp, &mut rng);
            }
            children.push(ca);
            if children.len() < gp.population_size - 1 {
                children.push(cb);
            }
        }
        let scored: Vec<Individual> = children
            .par_iter()
            .enumerate()
            .map(|(i, m)| refine(m, data, gp, de, refine_seed(gen as u64, i as u64)))
            .collect::<Result<_, _>>()?;

        population = std::iter::once(elite).chain(scored).collect();
        let fitness: Vec<f64> = population.iter().map(|i| i.rmse).collect();
        let gen_best = &population[best_index(&fitness)];
        if gen_best.rmse < best.rmse {
            best = gen_best.clone();
            stale = 0;
        } else {
            stale += 1;
        }
        history.push(stats(gen, &population, &best));
        if stale >= gp.stagnation_patience {
            break;
        }
    }

    Ok(Evolution {
        best_rmse: best.rmse,
        best: best.model,
        history,
    })
}

fn best_index(fitness: &[f64]) -> usize {
    let mut b = 0;
    for (i, f) in fitness.iter().enumerate() {
        if f < &fitness[b] {
            b = i;
        }
    }
    b
}

/// Result of structure search followed by a full parameter fit.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedFnt {
    pub model: FntModel,
    pub train_rmse: f64,
    pub history: Vec<GenerationStats>,
}

/// Structure search, then a full-budget DE fit of the winning structure.
pub fn train_fnt(data: &Dataset, gp: &GpConfig, de: &DeConfig) -> Result<TrainedFnt, GpError> {
    let evo = evolve_structure(data, gp, de)?;
    let fit = optimize_parameters(&evo.best, data, de, &gp.ranges)?;
    Ok(TrainedFnt {
        model: fit.model,
        train_rmse: fit.rmse,
        history: evo.history,
    })
}

pub fn write_generation_log<W: Write>(
    history: &[GenerationStats],
    mut out: W,
) -> Result<(), GpError> {
    writeln!(out, "generation,best_rmse,mean_rmse,best_complexity")?;
    for h in history {
        writeln!(
            out,
            "{},{},{},{}",
            h.generation, h.best_rmse, h.mean_rmse, h.best_complexity
        )?;
    }
    Ok(())
}
