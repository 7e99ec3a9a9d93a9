//! Closed-form reference problems: the Gamma function and its sampled
//! dataset, Euler's sum/fraction identity, and continued fraction forms of
//! `sin` and `tanh`.

use std::f64::consts::PI;

use crate::data::Dataset;
use crate::error::{CfrError, Result};
use crate::model::{ContinuedFraction, LinearTerm};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function via the Lanczos approximation (g = 7, 9 terms), with the
/// reflection formula below 0.5.
pub fn gamma(x: f64) -> Result<f64> {
    if x <= 0.0 && x == x.round() {
        return Err(CfrError::Pole(x));
    }
    if x < 0.5 {
        return Ok(PI / ((PI * x).sin() * gamma(1.0 - x)?));
    }
    let x = x - 1.0;
    let t = x + LANCZOS_G + 0.5;
    let series = LANCZOS_COEFFS[1..]
        .iter()
        .enumerate()
        .fold(LANCZOS_COEFFS[0], |acc, (i, c)| acc + c / (x + i as f64 + 1.0));
    Ok((2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * series)
}

/// Grid used for the Gamma regression problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaDatasetSpec {
    pub lo: f64,
    pub hi: f64,
    pub n_samples: usize,
    pub max_power: u32,
}

impl Default for GammaDatasetSpec {
    fn default() -> Self {
        Self { lo: -2.683, hi: 4.5, n_samples: 873, max_power: 6 }
    }
}

impl GammaDatasetSpec {
    /// Grid points, both endpoints included.
    pub fn grid(&self) -> Vec<f64> {
        let step = (self.hi - self.lo) / (self.n_samples - 1) as f64;
        (0..self.n_samples).map(|k| self.lo + k as f64 * step).collect()
    }
}

/// Samples Gamma on a uniform grid with features `[1, x, x^2, ..., x^max_power]`.
pub fn make_gamma_dataset(spec: &GammaDatasetSpec) -> Result<Dataset> {
    if !(spec.lo < spec.hi) || spec.n_samples < 2 {
        return Err(CfrError::invalid(format!("bad Gamma grid {spec:?}")));
    }
    let mut features = Vec::with_capacity(spec.n_samples * (spec.max_power as usize + 1));
    let mut targets = Vec::with_capacity(spec.n_samples);
    for x in spec.grid() {
        if x <= 0.0 && (x - x.round()).abs() < 1e-9 {
            return Err(CfrError::Pole(x));
        }
        features.extend((0..=spec.max_power).map(|p| x.powi(p as i32)));
        targets.push(gamma(x)?);
    }
    let names = (0..=spec.max_power)
        .map(|p| match p {
            0 => "one".to_string(),
            1 => "x".to_string(),
            _ => format!("x{p}"),
        })
        .collect();
    Dataset::from_flat(features, targets, names, "gamma")
}

/// `a0 + a0 a1 + ... + a0 a1 ... an`.
pub fn euler_sum(a: &[f64]) -> f64 {
    let mut prod = 1.0;
    a.iter()
        .map(|&v| {
            prod *= v;
            prod
        })
        .sum()
}

const EULER_POLE: f64 = 1e-9;

/// Right-hand side of Euler's identity,
/// `a0 / (1 - a1 / (1 + a1 - a2 / (1 + a2 - ... an / (1 + an))))`,
/// evaluated bottom-up.
pub fn euler_cf(a: &[f64]) -> Result<f64> {
    let Some((&a0, rest)) = a.split_first() else {
        return Err(CfrError::invalid("euler_cf needs at least one value"));
    };
    if rest.is_empty() {
        return Ok(a0);
    }
    let n = rest.len();
    let mut r = 1.0 + rest[n - 1];
    for k in (0..n - 1).rev() {
        if r.abs() < EULER_POLE {
            return Err(CfrError::Pole(r));
        }
        r = 1.0 + rest[k] - rest[k + 1] / r;
    }
    if r.abs() < EULER_POLE {
        return Err(CfrError::Pole(r));
    }
    let denom = 1.0 - rest[0] / r;
    if denom.abs() < EULER_POLE {
        return Err(CfrError::Pole(denom));
    }
    Ok(a0 / denom)
}

/// Euler's fraction written as a constant-only [`ContinuedFraction`]:
/// `0 + a0 / (1 + (-a1) / ((1 + a1) + (-a2) / (... (1 + an))))`.
pub fn euler_fraction(a: &[f64]) -> Result<ContinuedFraction> {
    let Some((&a0, rest)) = a.split_first() else {
        return Err(CfrError::invalid("euler_fraction needs at least one value"));
    };
    let c = |v: f64| LinearTerm::constant(1, v);
    let mut terms = vec![c(0.0), c(a0), c(1.0)];
    for &ak in rest {
        terms.push(c(-ak));
        terms.push(c(1.0 + ak));
    }
    ContinuedFraction::from_terms(1, terms)
}

/// A rational constant stored exactly as numerator / denominator.
#[derive(Clone, Copy, Debug)]
struct Ratio(i64, i64);

impl Ratio {
    fn value(self) -> f64 {
        self.0 as f64 / self.1 as f64
    }
}

// [5/6] Padé approximant of sin about 0.
const PADE_SIN_NUM: [(Ratio, i32); 3] = [(Ratio(12671, 4363920), 5), (Ratio(-2363, 18183), 3), (Ratio(1, 1), 1)];
const PADE_SIN_DEN: [(Ratio, i32); 4] =
    [(Ratio(121, 16662240), 6), (Ratio(601, 872784), 4), (Ratio(445, 12122), 2), (Ratio(1, 1), 0)];

// Partial numerators of the same approximant as a continued fraction:
// sin x ~ x + K_{k=1..6} (c_k x^p_k / 1).
const CF_SIN_NUMERATORS: [(Ratio, i32); 6] = [
    (Ratio(-1, 6), 3),
    (Ratio(1, 20), 2),
    (Ratio(-11, 420), 2),
    (Ratio(25, 2772), 2),
    (Ratio(-11, 900), 2),
    (Ratio(1331, 82650), 2),
];

fn poly(x: f64, terms: &[(Ratio, i32)]) -> f64 {
    terms.iter().map(|&(c, p)| c.value() * x.powi(p)).sum()
}

/// The explicit numerator/denominator form of the sine approximant.
pub fn pade_sin(x: f64) -> f64 {
    poly(x, &PADE_SIN_NUM) / poly(x, &PADE_SIN_DEN)
}

/// The six-level continued fraction form of the sine approximant.
pub fn cf_sin(x: f64) -> f64 {
    let mut r = 1.0;
    for &(c, p) in CF_SIN_NUMERATORS[1..].iter().rev() {
        r = 1.0 + c.value() * x.powi(p) / r;
    }
    let (c0, p0) = CF_SIN_NUMERATORS[0];
    x + c0.value() * x.powi(p0) / r
}

/// The sine approximant as a depth-6 model over the features `[x, x^2, x^3]`.
pub fn sin_fraction_model() -> ContinuedFraction {
    let mut terms = Vec::with_capacity(13);
    terms.push(LinearTerm { coefficients: vec![1.0, 0.0, 0.0], constant: 0.0, active: vec![true, false, false] });
    for &(c, p) in &CF_SIN_NUMERATORS {
        let mut h = LinearTerm::constant(3, 0.0);
        h.coefficients[p as usize - 1] = c.value();
        h.active[p as usize - 1] = true;
        terms.push(h);
        terms.push(LinearTerm::constant(3, 1.0));
    }
    ContinuedFraction::from_terms(3, terms).expect("fixed shape")
}

/// Leading constant of the printed tanh fraction.
pub const TANH_CF_OFFSET: f64 = 1.0;

/// `alpha0 + f0 / (alpha1 + f1 / (alpha2 + ... f_{L-1} / alpha_L))` with
/// `alpha0 = 1`, `alpha_i = 2i - 1`, `f0 = u`, `f_i = u^2`, `u = x1 + 5 x2`.
///
/// The tail after `alpha0` is Lambert's fraction for `tanh(u)`, so the whole
/// expression converges to `1 + tanh(u)`.
pub fn tanh_cf(x1: f64, x2: f64, levels: usize) -> Result<f64> {
    if levels == 0 {
        return Err(CfrError::invalid("tanh_cf needs at least one level"));
    }
    let u = x1 + 5.0 * x2;
    let alpha = |i: usize| (2 * i - 1) as f64;
    let mut r = alpha(levels);
    for i in (1..levels).rev() {
        if r.abs() < EULER_POLE {
            return Err(CfrError::Pole(u));
        }
        r = alpha(i) + u * u / r;
    }
    if r.abs() < EULER_POLE {
        return Err(CfrError::Pole(u));
    }
    Ok(TANH_CF_OFFSET + u / r)
}
