//! The memetic search: 13 agents on a ternary tree, each holding a `pocket`
//! (best model it has kept) and a `current` model that gets mutated,
//! recombined and locally optimised every generation.
//!
//! Two invariants hold after every generation:
//! - inside each agent, `pocket.score <= current.score`;
//! - along every tree edge, the parent's pocket scores no worse than the child's.
//!
//! Scores are the guiding function (adjusted MSE on the training set); lower
//! is better and ties always keep the incumbent.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::ops::Range;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::data::{guiding, Dataset, Metrics};
use crate::error::{CfrError, Result};
use crate::model::{ContinuedFraction, LinearTerm, RandomInit};
use crate::nelder_mead::{LocalSearch, NmConfig};

pub const POPULATION_SIZE: usize = 13;
const ARITY: usize = 3;

/// Leaders of the four subpopulations, visited top-down.
const LEADERS: [usize; 4] = [0, 1, 2, 3];

#[derive(Clone, Debug, PartialEq)]
pub struct Scored {
    pub model: ContinuedFraction,
    pub score: f64,
}

impl Scored {
    pub fn new(model: ContinuedFraction, train: &Dataset, delta: f64) -> Self {
        let score = guiding(&model, train, delta);
        Self { model, score }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Agent {
    pub pocket: Scored,
    pub current: Scored,
}

impl Agent {
    /// Swaps pocket and current when current is strictly better. Returns whether it swapped.
    pub fn maintain_invariant(&mut self) -> bool {
        if self.current.score < self.pocket.score {
            std::mem::swap(&mut self.pocket, &mut self.current);
            true
        } else {
            false
        }
    }
}

/// Agents laid out as a complete ternary tree in breadth-first order:
/// agent 0 is the root and the children of agent `i` are `3i+1 ..= 3i+3`.
#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    agents: Vec<Agent>,
}

impl Population {
    pub fn new(agents: Vec<Agent>) -> Result<Self> {
        if agents.len() != POPULATION_SIZE {
            return Err(CfrError::invalid(format!(
                "population needs {POPULATION_SIZE} agents, got {}",
                agents.len()
            )));
        }
        Ok(Self { agents })
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn agent_mut(&mut self, i: usize) -> &mut Agent {
        &mut self.agents[i]
    }

    pub fn root(&self) -> &Agent {
        &self.agents[0]
    }

    pub fn parent(i: usize) -> Option<usize> {
        (i > 0).then(|| (i - 1) / ARITY)
    }

    /// Children of agent `i`; empty for leaves.
    pub fn children(i: usize) -> Range<usize> {
        let first = ARITY * i + 1;
        first.min(POPULATION_SIZE)..(first + ARITY).min(POPULATION_SIZE)
    }

    /// Moves better pockets towards the root until no child pocket is
    /// strictly better than its parent's. Returns the number of swaps.
    pub fn propagate_pockets(&mut self) -> usize {
        let mut swaps = 0;
        loop {
            let mut changed = false;
            for child in 1..POPULATION_SIZE {
                let parent = (child - 1) / ARITY;
                if self.agents[child].pocket.score < self.agents[parent].pocket.score {
                    let (lo, hi) = self.agents.split_at_mut(child);
                    std::mem::swap(&mut lo[parent].pocket, &mut hi[0].pocket);
                    changed = true;
                    swaps += 1;
                }
            }
            if !changed {
                return swaps;
            }
        }
    }

    /// Re-establishes both invariants. Moving a pocket down the tree can leave
    /// it worse than that agent's current, so the two passes alternate until
    /// neither changes anything.
    pub fn restore_invariants(&mut self) {
        loop {
            let mut changed = false;
            for a in &mut self.agents {
                changed |= a.maintain_invariant();
            }
            changed |= self.propagate_pockets() > 0;
            if !changed {
                break;
            }
        }
    }

    /// Describes the first violated invariant, if any.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for (i, a) in self.agents.iter().enumerate() {
            if a.current.score < a.pocket.score {
                return Err(format!("agent {i}: current {} beats pocket {}", a.current.score, a.pocket.score));
            }
            for c in Self::children(i) {
                if self.agents[c].pocket.score < a.pocket.score {
                    return Err(format!(
                        "edge {i}->{c}: child pocket {} beats parent pocket {}",
                        self.agents[c].pocket.score, a.pocket.score
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Run parameters. Defaults are the standard settings used in benchmarking.
#[derive(Clone, Debug, PartialEq)]
pub struct MaConfig {
    /// Complexity penalty per used variable in the guiding function.
    pub delta: f64,
    pub depth: usize,
    /// Generations without a new best before the root pocket is replaced.
    pub reset_stagnation: usize,
    pub generations: usize,
    /// Probability that an agent's current solution is mutated in a generation.
    pub mutation_rate: f64,
    pub nm_instances: usize,
    pub nm: NmConfig,
    pub subsample_fraction: f64,
    pub subsample_above: usize,
    pub init: RandomInit,
    pub seed: u64,
}

impl Default for MaConfig {
    fn default() -> Self {
        Self {
            delta: 0.10,
            depth: 4,
            reset_stagnation: 5,
            generations: 200,
            mutation_rate: 0.10,
            nm_instances: 4,
            nm: NmConfig::default(),
            subsample_fraction: 0.20,
            subsample_above: 200,
            init: RandomInit::default(),
            seed: 0,
        }
    }
}

impl MaConfig {
    pub fn validate(&self) -> Result<()> {
        self.nm.validate()?;
        let bad = |m: &str| Err(CfrError::invalid(m.to_string()));
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return bad("mutation rate must be in [0, 1]");
        }
        if !(self.delta >= 0.0) {
            return bad("delta must be non-negative");
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return bad("subsample fraction must be in (0, 1]");
        }
        if self.nm_instances == 0 {
            return bad("at least one Nelder-Mead instance is required");
        }
        if self.reset_stagnation == 0 {
            return bad("reset stagnation must be at least 1");
        }
        if !(self.init.coeff_lo < self.init.coeff_hi) || !(0.0..=1.0).contains(&self.init.whitelist_p) {
            return bad("invalid initial coefficient range or whitelist probability");
        }
        Ok(())
    }

    pub fn local_search(&self) -> LocalSearch {
        LocalSearch {
            nm: self.nm,
            instances: self.nm_instances,
            subsample_fraction: self.subsample_fraction,
            subsample_above: self.subsample_above,
            delta: self.delta,
        }
    }

    /// Stable one-line `key=value` description of every setting except the seed.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "delta={:?} depth={} generations={} mutation-rate={:?} reset-stagnation={} \
             nm-instances={} nm-iterations={} nm-stagnation={} nm-tolerance={:?} \
             subsample={:?} subsample-above={} coeff-range=[{:?},{:?}] whitelist-p={:?}",
            self.delta,
            self.depth,
            self.generations,
            self.mutation_rate,
            self.reset_stagnation,
            self.nm_instances,
            self.nm.max_iterations,
            self.nm.stagnation_limit,
            self.nm.tolerance,
            self.subsample_fraction,
            self.subsample_above,
            self.init.coeff_lo,
            self.init.coeff_hi,
            self.init.whitelist_p,
        );
        s
    }

    /// Short hash of [`describe`](Self::describe).
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.describe().as_bytes());
        hex::encode(&digest[..8])
    }
}

/// Set operator applied to the parents' variable sets during recombination.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SetOp {
    Union,
    Intersection,
    SymmetricDifference,
}

impl SetOp {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        match rng.gen_range(0..3) {
            0 => SetOp::Union,
            1 => SetOp::Intersection,
            _ => SetOp::SymmetricDifference,
        }
    }

    pub fn apply(self, a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> BTreeSet<usize> {
        match self {
            SetOp::Union => a.union(b).copied().collect(),
            SetOp::Intersection => a.intersection(b).copied().collect(),
            SetOp::SymmetricDifference => a.symmetric_difference(b).copied().collect(),
        }
    }
}

/// `a + r (b - a) / 3`; with `r` in `[-1, 4]` this samples the segment
/// through `a` and `b` a third of the way short of `a` up to a third past `b`.
#[inline]
pub fn blend(a: f64, b: f64, r: f64) -> f64 {
    a + r * (b - a) / 3.0
}

fn blend_factor<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.gen_range(-1.0..=4.0)
}

/// Recombines two models with a randomly chosen set operator.
pub fn recombine<R: Rng + ?Sized>(p1: &ContinuedFraction, p2: &ContinuedFraction, rng: &mut R) -> Result<ContinuedFraction> {
    let op = SetOp::random(rng);
    recombine_with(p1, p2, op, rng)
}

/// Child variables are `op` applied to the parents' used variables. In every
/// term a variable active in both parents gets a blended coefficient, one
/// active in a single parent is copied, and constants are always blended.
pub fn recombine_with<R: Rng + ?Sized>(
    p1: &ContinuedFraction,
    p2: &ContinuedFraction,
    op: SetOp,
    rng: &mut R,
) -> Result<ContinuedFraction> {
    if p1.n_vars() != p2.n_vars() || p1.depth() != p2.depth() {
        return Err(CfrError::invalid(format!(
            "cannot recombine a {}-variable depth-{} model with a {}-variable depth-{} model",
            p1.n_vars(),
            p1.depth(),
            p2.n_vars(),
            p2.depth()
        )));
    }
    let n = p1.n_vars();
    let vars = op.apply(&p1.used_variables(), &p2.used_variables());
    let whitelist: Vec<bool> = (0..n).map(|j| vars.contains(&j)).collect();

    let terms = p1
        .terms()
        .iter()
        .zip(p2.terms())
        .map(|(ta, tb)| {
            let mut child = LinearTerm::constant(n, 0.0);
            for &v in &vars {
                match (ta.active[v], tb.active[v]) {
                    (true, true) => {
                        let r = blend_factor(rng);
                        child.coefficients[v] = blend(ta.coefficients[v], tb.coefficients[v], r);
                        child.active[v] = true;
                    }
                    (true, false) => {
                        child.coefficients[v] = ta.coefficients[v];
                        child.active[v] = true;
                    }
                    (false, true) => {
                        child.coefficients[v] = tb.coefficients[v];
                        child.active[v] = true;
                    }
                    (false, false) => {}
                }
            }
            let r = blend_factor(rng);
            child.constant = blend(ta.constant, tb.constant, r);
            child
        })
        .collect();
    ContinuedFraction::new(n, terms, whitelist)
}

/// Major mutation: flips one variable in or out of the whole model.
///
/// Switching off deactivates the variable in every term and, per term, either
/// zeroes the stored coefficient or keeps it for later. Switching on
/// activates it in every term where it was off, with either zero or a fresh
/// uniform coefficient.
pub fn toggle_variables<R: Rng + ?Sized>(cf: &mut ContinuedFraction, init: &RandomInit, rng: &mut R) {
    let v = rng.gen_range(0..cf.n_vars);
    if cf.whitelist[v] {
        for term in &mut cf.terms {
            term.active[v] = false;
            let remember = rng.gen_bool(0.5);
            if !remember {
                term.coefficients[v] = 0.0;
            }
        }
    } else {
        for term in &mut cf.terms {
            if !term.active[v] {
                term.active[v] = true;
                let replace = rng.gen_bool(0.5);
                term.coefficients[v] = if replace { rng.gen_range(init.coeff_lo..=init.coeff_hi) } else { 0.0 };
            }
        }
    }
    cf.whitelist[v] = !cf.whitelist[v];
}

/// Soft mutation: flips one (term, variable) slot for a whitelisted variable.
/// An active slot is zeroed and switched off; an inactive one gets a fresh
/// uniform coefficient and is switched on. No-op without whitelisted variables.
pub fn modify_variable<R: Rng + ?Sized>(cf: &mut ContinuedFraction, init: &RandomInit, rng: &mut R) {
    let candidates: Vec<usize> = (0..cf.n_vars).filter(|&j| cf.whitelist[j]).collect();
    if candidates.is_empty() {
        return;
    }
    let v = candidates[rng.gen_range(0..candidates.len())];
    let t = rng.gen_range(0..cf.terms.len());
    let term = &mut cf.terms[t];
    term.coefficients[v] = if term.active[v] { 0.0 } else { rng.gen_range(init.coeff_lo..=init.coeff_hi) };
    term.active[v] = !term.active[v];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MutationKind {
    Major,
    Soft,
}

/// Major when current is within 120% of the pocket or more than twice it;
/// soft in between.
pub fn mutation_kind(current: f64, pocket: f64) -> MutationKind {
    if current < 1.2 * pocket || current > 2.0 * pocket {
        MutationKind::Major
    } else {
        MutationKind::Soft
    }
}

/// Thirteen agents, each with two freshly drawn and scored models.
pub fn init_population<R: Rng + ?Sized>(train: &Dataset, config: &MaConfig, rng: &mut R) -> Population {
    let n_vars = train.n_cols();
    let agents = (0..POPULATION_SIZE)
        .map(|_| {
            let current = ContinuedFraction::random(n_vars, config.depth, &config.init, rng);
            let pocket = ContinuedFraction::random(n_vars, config.depth, &config.init, rng);
            let mut agent = Agent {
                pocket: Scored::new(pocket, train, config.delta),
                current: Scored::new(current, train, config.delta),
            };
            agent.maintain_invariant();
            agent
        })
        .collect();
    Population { agents }
}

/// Mutates each current solution with probability `config.mutation_rate`.
/// Pockets are never touched.
pub fn mutate_population<R: Rng + ?Sized>(pop: &mut Population, train: &Dataset, config: &MaConfig, rng: &mut R) {
    for agent in &mut pop.agents {
        if rng.gen::<f64>() >= config.mutation_rate {
            continue;
        }
        let model = &mut agent.current.model;
        match mutation_kind(agent.current.score, agent.pocket.score) {
            MutationKind::Major => toggle_variables(model, &config.init, rng),
            MutationKind::Soft => modify_variable(model, &config.init, rng),
        }
        agent.current.score = guiding(model, train, config.delta);
    }
}

/// Within each subpopulation (leader plus its three supporters), top-down:
///
/// 1. `current(l)  <- recombine(pocket(l),  current(s1))`
/// 2. `current(s3) <- recombine(pocket(s3), current(l))`
/// 3. `current(s1) <- recombine(pocket(s1), current(s2))`
/// 4. `current(s2) <- recombine(pocket(s2), current(s3))`
///
/// Each step sees the updates made by the steps before it.
pub fn recombine_population<R: Rng + ?Sized>(
    pop: &mut Population,
    train: &Dataset,
    config: &MaConfig,
    rng: &mut R,
) -> Result<()> {
    for leader in LEADERS {
        let s = Population::children(leader);
        let (s1, s2, s3) = (s.start, s.start + 1, s.start + 2);
        for (target, other) in [(leader, s1), (s3, leader), (s1, s2), (s2, s3)] {
            let child = recombine(&pop.agents[target].pocket.model, &pop.agents[other].current.model, rng)?;
            pop.agents[target].current = Scored::new(child, train, config.delta);
        }
    }
    Ok(())
}

/// Local search on every current solution. Each agent gets its own RNG
/// stream seeded from `rng`, so the result does not depend on scheduling.
pub fn local_search_population<R: Rng + ?Sized>(pop: &mut Population, train: &Dataset, config: &MaConfig, rng: &mut R) {
    let ls = config.local_search();
    let seeds: Vec<u64> = (0..POPULATION_SIZE).map(|_| rng.gen()).collect();
    pop.agents.par_iter_mut().zip(seeds).for_each(|(agent, seed)| {
        let mut agent_rng = ChaCha8Rng::seed_from_u64(seed);
        let (model, score) = ls.run(&agent.current.model, train, &mut agent_rng);
        agent.current = Scored { model, score };
    });
}

/// Points in a run where an observer gets to inspect the population.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Stage {
    Initialized,
    BeforeMutation { generation: usize },
    AfterMutation { generation: usize },
    GenerationEnd { generation: usize, best_score: f64, reset: bool },
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub best: ContinuedFraction,
    /// Guiding value of `best` on the training set.
    pub best_score: f64,
    /// Best-so-far guiding value after each generation.
    pub trace: Vec<f64>,
    pub train: Metrics,
    pub test: Metrics,
    pub seed: u64,
    pub wall_seconds: f64,
}

pub fn run(train: &Dataset, test: &Dataset, config: &MaConfig) -> Result<RunResult> {
    run_observed(train, test, config, |_, _| {})
}

/// [`run`] with a callback invoked at each [`Stage`].
pub fn run_observed<F>(train: &Dataset, test: &Dataset, config: &MaConfig, mut observe: F) -> Result<RunResult>
where
    F: FnMut(Stage, &Population),
{
    config.validate()?;
    if train.n_cols() != test.n_cols() {
        return Err(CfrError::DimensionMismatch { expected: train.n_cols(), got: test.n_cols() });
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut pop = init_population(train, config, &mut rng);
    pop.restore_invariants();
    observe(Stage::Initialized, &pop);

    let mut best = pop.root().pocket.clone();
    let mut trace = Vec::with_capacity(config.generations);
    let mut stagnant = 0;

    for generation in 0..config.generations {
        observe(Stage::BeforeMutation { generation }, &pop);
        mutate_population(&mut pop, train, config, &mut rng);
        observe(Stage::AfterMutation { generation }, &pop);
        recombine_population(&mut pop, train, config, &mut rng)?;
        local_search_population(&mut pop, train, config, &mut rng);
        pop.restore_invariants();

        if pop.root().pocket.score < best.score {
            best = pop.root().pocket.clone();
            stagnant = 0;
        } else {
            stagnant += 1;
        }

        let reset = stagnant >= config.reset_stagnation;
        if reset {
            let fresh = ContinuedFraction::random(train.n_cols(), config.depth, &config.init, &mut rng);
            pop.agents[0].pocket = Scored::new(fresh, train, config.delta);
            pop.restore_invariants();
            stagnant = 0;
        }

        trace.push(best.score);
        observe(Stage::GenerationEnd { generation, best_score: best.score, reset }, &pop);
    }

    let model = best.model.with_seed(Some(config.seed));
    Ok(RunResult {
        train: Metrics::compute(&model, train, config.delta)?,
        test: Metrics::compute(&model, test, config.delta)?,
        best: model,
        best_score: best.score,
        trace,
        seed: config.seed,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}
