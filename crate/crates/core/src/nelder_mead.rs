//! Downhill simplex minimisation and the coefficient local search built on it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{guiding, subsample, Dataset};
use crate::error::{CfrError, Result};
use crate::model::ContinuedFraction;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NmConfig {
    /// Stop once `|f_worst - f_best|` drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Stop after this many consecutive iterations without a strictly better best vertex.
    pub stagnation_limit: usize,
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
}

impl Default for NmConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-3,
            max_iterations: 250,
            stagnation_limit: 10,
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
        }
    }
}

impl NmConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.tolerance > 0.0
            && self.max_iterations >= 1
            && self.reflection > 0.0
            && 0.0 < self.contraction
            && self.contraction < 1.0
            && self.expansion > 1.0
            && 0.0 < self.shrink
            && self.shrink < 1.0;
        if ok {
            Ok(())
        } else {
            Err(CfrError::invalid(format!("invalid Nelder-Mead configuration: {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
}

/// Minimises `objective` starting from the simplex `{x0} U {x0 + e_j}`.
///
/// NaN objective values are treated as `+inf`. The returned vertex is the best
/// of the final simplex, which is never worse than `x0`.
pub fn minimize<F>(mut objective: F, x0: &[f64], config: &NmConfig) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    if n == 0 {
        return Err(CfrError::invalid("Nelder-Mead needs a non-empty starting point"));
    }
    let mut eval = |x: &[f64]| {
        let v = objective(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for j in 0..n {
        let mut v = x0.to_vec();
        v[j] += 1.0;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();

    let mut order: Vec<usize> = (0..=n).collect();
    let mut best_seen = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut stagnant = 0;
    let mut iterations = 0;
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial2 = vec![0.0; n];

    loop {
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let (best, second, worst) = (order[0], order[n - 1], order[n]);
        if (values[worst] - values[best]).abs() < config.tolerance
            || iterations >= config.max_iterations
            || stagnant >= config.stagnation_limit
        {
            break;
        }

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for &i in &order[..n] {
            for (c, v) in centroid.iter_mut().zip(&simplex[i]) {
                *c += v;
            }
        }
        centroid.iter_mut().for_each(|c| *c /= n as f64);

        let along = |from: &[f64], to: &[f64], t: f64, out: &mut [f64]| {
            for ((o, a), b) in out.iter_mut().zip(from).zip(to) {
                *o = a + t * (b - a);
            }
        };

        // reflection: c + alpha (c - worst)
        along(&centroid, &simplex[worst], -config.reflection, &mut trial);
        let f_r = eval(&trial);

        if f_r < values[best] {
            along(&centroid, &trial, config.expansion, &mut trial2);
            let f_e = eval(&trial2);
            if f_e < f_r {
                simplex[worst].copy_from_slice(&trial2);
                values[worst] = f_e;
            } else {
                simplex[worst].copy_from_slice(&trial);
                values[worst] = f_r;
            }
        } else if f_r < values[second] {
            simplex[worst].copy_from_slice(&trial);
            values[worst] = f_r;
        } else {
            let accepted = if f_r < values[worst] {
                // outside contraction
                along(&centroid, &trial, config.contraction, &mut trial2);
                let f_c = eval(&trial2);
                (f_c <= f_r).then_some(f_c)
            } else {
                // inside contraction
                along(&centroid, &simplex[worst], config.contraction, &mut trial2);
                let f_c = eval(&trial2);
                (f_c < values[worst]).then_some(f_c)
            };
            match accepted {
                Some(f_c) => {
                    simplex[worst].copy_from_slice(&trial2);
                    values[worst] = f_c;
                }
                None => {
                    let anchor = simplex[best].clone();
                    for i in 0..=n {
                        if i == best {
                            continue;
                        }
                        for (x, a) in simplex[i].iter_mut().zip(&anchor) {
                            *x = a + config.shrink * (*x - a);
                        }
                        values[i] = eval(&simplex[i]);
                    }
                }
            }
        }

        iterations += 1;
        let current_best = values.iter().copied().fold(f64::INFINITY, f64::min);
        if current_best < best_seen {
            best_seen = current_best;
            stagnant = 0;
        } else {
            stagnant += 1;
        }
    }

    // `order` was refreshed right before the loop exited
    let best = order[0];
    Ok(Minimum { x: simplex[best].clone(), f: values[best], iterations })
}

/// Where a packed parameter lives inside a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Coefficient { term: usize, var: usize },
    Constant { term: usize },
}

/// Mapping between a model's free parameters and a flat vector: terms in
/// order, and within a term the active coefficients by ascending variable
/// index followed by the constant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParameterPacking {
    pub slots: Vec<Slot>,
}

pub fn pack(cf: &ContinuedFraction) -> (Vec<f64>, ParameterPacking) {
    let mut values = Vec::new();
    let mut slots = Vec::new();
    for (t, term) in cf.terms.iter().enumerate() {
        for (j, (&c, &on)) in term.coefficients.iter().zip(&term.active).enumerate() {
            if on {
                values.push(c);
                slots.push(Slot::Coefficient { term: t, var: j });
            }
        }
        values.push(term.constant);
        slots.push(Slot::Constant { term: t });
    }
    (values, ParameterPacking { slots })
}

pub fn unpack(cf: &ContinuedFraction, values: &[f64], packing: &ParameterPacking) -> Result<ContinuedFraction> {
    let mut out = cf.clone();
    unpack_into(&mut out, values, packing)?;
    Ok(out)
}

pub(crate) fn unpack_into(cf: &mut ContinuedFraction, values: &[f64], packing: &ParameterPacking) -> Result<()> {
    if values.len() != packing.slots.len() {
        return Err(CfrError::DimensionMismatch { expected: packing.slots.len(), got: values.len() });
    }
    for (&v, slot) in values.iter().zip(&packing.slots) {
        match *slot {
            Slot::Coefficient { term, var } => cf.terms[term].coefficients[var] = v,
            Slot::Constant { term } => cf.terms[term].constant = v,
        }
    }
    Ok(())
}

/// Settings for the coefficient local search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalSearch {
    pub nm: NmConfig,
    /// Independent simplex runs per call.
    pub instances: usize,
    pub subsample_fraction: f64,
    /// Training sets larger than this are subsampled inside each run.
    pub subsample_above: usize,
    pub delta: f64,
}

impl Default for LocalSearch {
    fn default() -> Self {
        Self { nm: NmConfig::default(), instances: 4, subsample_fraction: 0.20, subsample_above: 200, delta: 0.10 }
    }
}

impl LocalSearch {
    /// Runs the independent searches from `cf`'s coefficients and returns the
    /// best result by guiding value on the full training set, together with
    /// that value. Falls back to `cf` when nothing strictly improves on it.
    pub fn run<R: Rng + ?Sized>(&self, cf: &ContinuedFraction, train: &Dataset, rng: &mut R) -> (ContinuedFraction, f64) {
        let (x0, packing) = pack(cf);
        let seeds: Vec<u64> = (0..self.instances).map(|_| rng.gen()).collect();
        let mut best = cf.clone();
        let mut best_score = guiding(cf, train, self.delta);

        for seed in seeds {
            let mut inst_rng = ChaCha8Rng::seed_from_u64(seed);
            let sample;
            let objective_data = if train.n_rows() > self.subsample_above {
                sample = subsample(train, self.subsample_fraction, &mut inst_rng);
                &sample
            } else {
                train
            };
            let mut scratch = cf.clone();
            let found = minimize(
                |x| {
                    unpack_into(&mut scratch, x, &packing).expect("packing length is fixed");
                    guiding(&scratch, objective_data, self.delta)
                },
                &x0,
                &self.nm,
            )
            .expect("packed vector always holds the constants");
            let candidate = unpack(cf, &found.x, &packing).expect("packing length is fixed");
            let score = guiding(&candidate, train, self.delta);
            if score < best_score {
                best = candidate;
                best_score = score;
            }
        }
        (best, best_score)
    }
}
