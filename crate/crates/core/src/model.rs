//! Analytic continued fraction models.
//!
//! A model of depth `d` stores `2d + 1` affine terms in one flat array. Even
//! slots are the partial denominators `g_i` and odd slots the partial
//! numerators `h_i`:
//!
//! ```text
//! f(x) = g_0(x) + h_0(x) / (g_1(x) + h_1(x) / (... + h_{d-1}(x) / g_d(x)))
//! ```
//!
//! Each term keeps a per-variable activation mask. Inactive coefficients stay
//! in storage so that a variable switched off by mutation can come back with
//! its previous value.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CfrError, Result};

/// Partial denominators smaller than this in magnitude are treated as poles.
pub const POLE_THRESHOLD: f64 = 1e-12;

const FORMAT_TAG: &str = "cfr-model/1";

/// One affine function `a . x + alpha` with a per-variable activation mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearTerm {
    pub coefficients: Vec<f64>,
    pub constant: f64,
    pub active: Vec<bool>,
}

impl LinearTerm {
    /// A term with no active variables and the given constant.
    pub fn constant(n_vars: usize, constant: f64) -> Self {
        Self { coefficients: vec![0.0; n_vars], constant, active: vec![false; n_vars] }
    }

    /// A term where every variable is active.
    pub fn dense(coefficients: Vec<f64>, constant: f64) -> Self {
        let active = vec![true; coefficients.len()];
        Self { coefficients, constant, active }
    }

    pub fn n_vars(&self) -> usize {
        self.coefficients.len()
    }

    /// Coefficient that actually contributes to evaluation: zero when inactive.
    #[inline]
    pub fn effective(&self, var: usize) -> f64 {
        if self.active[var] {
            self.coefficients[var]
        } else {
            0.0
        }
    }

    /// `sum_j active[j] * coefficients[j] * x[j] + constant`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_vars() {
            return Err(CfrError::DimensionMismatch { expected: self.n_vars(), got: x.len() });
        }
        Ok(self.eval_unchecked(x))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        let mut acc = self.constant;
        for ((&c, &on), &xi) in self.coefficients.iter().zip(&self.active).zip(x) {
            if on {
                acc += c * xi;
            }
        }
        acc
    }

    fn uses(&self, var: usize) -> bool {
        self.active[var] && self.coefficients[var] != 0.0
    }
}

/// Result of evaluating a model at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EvalOutcome {
    Finite(f64),
    /// The point sits on (or numerically next to) a pole, or overflowed.
    NonFinite,
}

impl EvalOutcome {
    pub fn is_finite(&self) -> bool {
        matches!(self, EvalOutcome::Finite(_))
    }

    pub fn value(&self) -> Option<f64> {
        match *self {
            EvalOutcome::Finite(v) => Some(v),
            EvalOutcome::NonFinite => None,
        }
    }
}

/// Parameters for drawing random models.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomInit {
    pub coeff_lo: f64,
    pub coeff_hi: f64,
    /// Probability that each variable enters the model's whitelist.
    pub whitelist_p: f64,
}

impl Default for RandomInit {
    fn default() -> Self {
        Self { coeff_lo: -3.0, coeff_hi: 3.0, whitelist_p: 1.0 / 3.0 }
    }
}

/// An analytic continued fraction over `n_vars` input features.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuedFraction {
    pub(crate) n_vars: usize,
    pub(crate) terms: Vec<LinearTerm>,
    pub(crate) whitelist: Vec<bool>,
    pub(crate) seed: Option<u64>,
}

impl ContinuedFraction {
    /// Builds a model from its flat term array, checking every structural invariant.
    pub fn new(n_vars: usize, terms: Vec<LinearTerm>, whitelist: Vec<bool>) -> Result<Self> {
        if n_vars == 0 {
            return Err(CfrError::invalid("a model needs at least one variable"));
        }
        if terms.len() % 2 != 1 {
            return Err(CfrError::invalid(format!(
                "term count must be 2*depth+1, got {}",
                terms.len()
            )));
        }
        if whitelist.len() != n_vars {
            return Err(CfrError::DimensionMismatch { expected: n_vars, got: whitelist.len() });
        }
        for (i, t) in terms.iter().enumerate() {
            if t.coefficients.len() != n_vars || t.active.len() != n_vars {
                return Err(CfrError::invalid(format!(
                    "term {i} has {} coefficients and {} flags, expected {n_vars}",
                    t.coefficients.len(),
                    t.active.len()
                )));
            }
            if let Some(j) = (0..n_vars).find(|&j| t.active[j] && !whitelist[j]) {
                return Err(CfrError::invalid(format!(
                    "variable {j} is active in term {i} but not whitelisted"
                )));
            }
        }
        Ok(Self { n_vars, terms, whitelist, seed: None })
    }

    /// Builds a model where the whitelist is exactly the set of variables active in some term.
    pub fn from_terms(n_vars: usize, terms: Vec<LinearTerm>) -> Result<Self> {
        let whitelist = (0..n_vars)
            .map(|j| terms.iter().any(|t| t.active.get(j).copied().unwrap_or(false)))
            .collect();
        Self::new(n_vars, terms, whitelist)
    }

    /// The depth-0 model `f(x) = c`.
    pub fn constant(n_vars: usize, c: f64) -> Self {
        Self {
            n_vars,
            terms: vec![LinearTerm::constant(n_vars, c)],
            whitelist: vec![false; n_vars],
            seed: None,
        }
    }

    /// Draws a random model: each variable joins the whitelist with probability
    /// `init.whitelist_p`; whitelisted variables are active in every term with a
    /// uniform coefficient, and every constant is uniform on the same range.
    pub fn random<R: Rng + ?Sized>(n_vars: usize, depth: usize, init: &RandomInit, rng: &mut R) -> Self {
        assert!(n_vars >= 1, "random model needs at least one variable");
        let whitelist: Vec<bool> = (0..n_vars).map(|_| rng.gen_bool(init.whitelist_p)).collect();
        let terms = (0..2 * depth + 1)
            .map(|_| {
                let mut term = LinearTerm::constant(n_vars, 0.0);
                for j in 0..n_vars {
                    if whitelist[j] {
                        term.coefficients[j] = rng.gen_range(init.coeff_lo..=init.coeff_hi);
                        term.active[j] = true;
                    }
                }
                term.constant = rng.gen_range(init.coeff_lo..=init.coeff_hi);
                term
            })
            .collect();
        Self { n_vars, terms, whitelist, seed: None }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn depth(&self) -> usize {
        self.terms.len() / 2
    }

    pub fn terms(&self) -> &[LinearTerm] {
        &self.terms
    }

    pub fn whitelist(&self) -> &[bool] {
        &self.whitelist
    }

    /// Seed recorded by whoever created this model, if any.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    /// Partial denominator `g_i`.
    pub fn g(&self, i: usize) -> &LinearTerm {
        &self.terms[2 * i]
    }

    /// Partial numerator `h_i`.
    pub fn h(&self, i: usize) -> &LinearTerm {
        &self.terms[2 * i + 1]
    }

    /// Evaluates the fraction bottom-up at `x`.
    pub fn evaluate(&self, x: &[f64]) -> Result<EvalOutcome> {
        if x.len() != self.n_vars {
            return Err(CfrError::DimensionMismatch { expected: self.n_vars, got: x.len() });
        }
        Ok(match self.eval_unchecked(x) {
            Some(v) => EvalOutcome::Finite(v),
            None => EvalOutcome::NonFinite,
        })
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> Option<f64> {
        let depth = self.depth();
        let mut r = self.terms[2 * depth].eval_unchecked(x);
        for i in (0..depth).rev() {
            if !r.is_finite() || r.abs() < POLE_THRESHOLD {
                return None;
            }
            r = self.terms[2 * i].eval_unchecked(x) + self.terms[2 * i + 1].eval_unchecked(x) / r;
        }
        r.is_finite().then_some(r)
    }

    /// The `k`-th convergent: the fraction cut off after `g_k`.
    pub fn convergent(&self, k: usize) -> Result<Self> {
        if k > self.depth() {
            return Err(CfrError::invalid(format!(
                "convergent {k} requested from a depth-{} model",
                self.depth()
            )));
        }
        let mut out = self.clone();
        out.terms.truncate(2 * k + 1);
        Ok(out)
    }

    /// Variables with an active, nonzero coefficient in at least one term.
    pub fn used_variables(&self) -> BTreeSet<usize> {
        (0..self.n_vars).filter(|&j| self.terms.iter().any(|t| t.uses(j))).collect()
    }

    pub fn n_used_variables(&self) -> usize {
        (0..self.n_vars).filter(|&j| self.terms.iter().any(|t| t.uses(j))).count()
    }

    /// Serialises to the model document format.
    pub fn to_text(&self) -> String {
        let doc = ModelDocument {
            format: FORMAT_TAG.to_string(),
            n_vars: self.n_vars,
            depth: self.depth(),
            seed: self.seed.map(|s| s.to_string()),
            whitelist: self.whitelist.clone(),
            terms: self.terms.clone(),
        };
        toml::to_string(&doc).expect("model document is always representable")
    }

    /// Parses a model document and re-checks every invariant.
    pub fn from_text(text: &str) -> Result<Self> {
        let doc: ModelDocument = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((0, 0));
            CfrError::Parse { line, column, message: e.message().to_string() }
        })?;
        let fail = |message: String| CfrError::Parse { line: 0, column: 0, message };
        if doc.format != FORMAT_TAG {
            return Err(fail(format!("unsupported format {:?}", doc.format)));
        }
        if doc.terms.len() != 2 * doc.depth + 1 {
            return Err(fail(format!(
                "depth {} needs {} terms, found {}",
                doc.depth,
                2 * doc.depth + 1,
                doc.terms.len()
            )));
        }
        let seed = doc
            .seed
            .map(|s| s.parse::<u64>().map_err(|e| fail(format!("bad seed {s:?}: {e}"))))
            .transpose()?;
        let cf = Self::new(doc.n_vars, doc.terms, doc.whitelist)
            .map_err(|e| fail(e.to_string()))?;
        Ok(cf.with_seed(seed))
    }

    /// Plain-text nested-fraction rendering. Variables default to `x0, x1, ...`.
    pub fn render(&self, names: Option<&[String]>) -> String {
        self.render_with(names, Style::Plain)
    }

    /// LaTeX rendering using `\cfrac`.
    pub fn render_latex(&self, names: Option<&[String]>) -> String {
        self.render_with(names, Style::Latex)
    }

    fn render_with(&self, names: Option<&[String]>, style: Style) -> String {
        let default: Vec<String>;
        let names = match names {
            Some(n) if n.len() == self.n_vars => n,
            _ => {
                default = (0..self.n_vars).map(|j| format!("x{j}")).collect();
                &default
            }
        };
        let depth = self.depth();
        let mut out = render_term(&self.terms[2 * depth], names, style);
        for i in (0..depth).rev() {
            let g = render_term(&self.terms[2 * i], names, style);
            let h = render_term(&self.terms[2 * i + 1], names, style);
            out = match style {
                Style::Plain => format!("{g} + ({h}) / ({out})"),
                Style::Latex => format!("{g} + \\cfrac{{{h}}}{{{out}}}"),
            };
        }
        out
    }
}

#[derive(Clone, Copy)]
enum Style {
    Plain,
    Latex,
}

fn render_term(term: &LinearTerm, names: &[String], style: Style) -> String {
    let mut parts: Vec<(f64, Option<String>)> = (0..term.n_vars())
        .filter(|&j| term.uses(j))
        .map(|j| {
            let name = match style {
                Style::Plain => names[j].clone(),
                Style::Latex => names[j].replace('_', "\\_"),
            };
            (term.coefficients[j], Some(name))
        })
        .collect();
    if term.constant != 0.0 || parts.is_empty() {
        parts.push((term.constant, None));
    }
    let mut s = String::new();
    for (k, (c, name)) in parts.iter().enumerate() {
        let mag = c.abs();
        if k == 0 {
            if c.is_sign_negative() && *c != 0.0 {
                s.push('-');
            }
        } else {
            s.push_str(if c.is_sign_negative() { " - " } else { " + " });
        }
        match (name, style) {
            (None, _) => {
                let _ = write!(s, "{mag}");
            }
            (Some(n), Style::Plain) => {
                let _ = write!(s, "{mag}*{n}");
            }
            (Some(n), Style::Latex) => {
                let _ = write!(s, "{mag}\\,{n}");
            }
        }
    }
    s
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |p| before.len() - p - 1) + 1;
    (line, column)
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    n_vars: usize,
    depth: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<String>,
    whitelist: Vec<bool>,
    terms: Vec<LinearTerm>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// f(w, x, y, z) = 2.1 w + (4.7 x + w + 1.01) / (x + (1.3 + 5.7 y) / (3.9 x))
    fn four_var_example() -> ContinuedFraction {
        let t = |c: [f64; 4], k: f64| LinearTerm {
            coefficients: c.to_vec(),
            constant: k,
            active: c.iter().map(|&v| v != 0.0).collect(),
        };
        ContinuedFraction::from_terms(
            4,
            vec![
                t([2.1, 0.0, 0.0, 0.0], 0.0),
                t([1.0, 4.7, 0.0, 0.0], 1.01),
                t([0.0, 1.0, 0.0, 0.0], 0.0),
                t([0.0, 0.0, 5.7, 0.0], 1.3),
                t([0.0, 3.9, 0.0, 0.0], 0.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn linear_eval_cases() {
        let t = LinearTerm { coefficients: vec![0.0, 0.0], constant: 4.5, active: vec![true, true] };
        assert_eq!(t.eval(&[10.0, -3.0]).unwrap(), 4.5);

        let t = LinearTerm::dense(vec![2.1, 0.0, 0.0, 0.0], 0.0);
        assert_eq!(t.eval(&[2.0, 5.0, 6.0, 7.0]).unwrap(), 2.1 * 2.0);

        let t = LinearTerm::dense(vec![1.0, 5.0], 0.0);
        assert!((t.eval(&[0.3, 0.1]).unwrap() - 0.8).abs() < 1e-15);

        assert!(matches!(t.eval(&[1.0]), Err(CfrError::DimensionMismatch { expected: 2, got: 1 })));
    }

    #[test]
    fn inactive_coefficients_do_not_contribute() {
        let t = LinearTerm { coefficients: vec![7.0, 2.0], constant: 1.0, active: vec![false, true] };
        assert_eq!(t.eval(&[100.0, 3.0]).unwrap(), 7.0);
        assert_eq!(t.effective(0), 0.0);
    }

    #[test]
    fn constant_model_evaluates_to_constant() {
        let cf = ContinuedFraction::constant(3, 5.0);
        assert_eq!(cf.depth(), 0);
        assert_eq!(cf.evaluate(&[1.0, 2.0, 3.0]).unwrap(), EvalOutcome::Finite(5.0));
        assert!(cf.evaluate(&[1.0]).is_err());
    }

    #[test]
    fn four_var_example_values() {
        let cf = four_var_example();
        assert_eq!(cf.depth(), 2);
        let (w, x, y, z) = (0.5, 1.5, -0.7, 9.0);
        let want = 2.1 * w + (4.7 * x + w + 1.01) / (x + (1.3 + 5.7 * y) / (3.9 * x));
        let got = cf.evaluate(&[w, x, y, z]).unwrap().value().unwrap();
        assert!((got - want).abs() < 1e-12);
        assert_eq!(cf.used_variables().into_iter().collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn pole_gives_non_finite() {
        // 1 + 1 / x at x = 0
        let cf = ContinuedFraction::from_terms(
            1,
            vec![LinearTerm::constant(1, 1.0), LinearTerm::constant(1, 1.0), LinearTerm::dense(vec![1.0], 0.0)],
        )
        .unwrap();
        assert_eq!(cf.evaluate(&[0.0]).unwrap(), EvalOutcome::NonFinite);
        assert_eq!(cf.evaluate(&[1e-13]).unwrap(), EvalOutcome::NonFinite);
        assert_eq!(cf.evaluate(&[2.0]).unwrap(), EvalOutcome::Finite(1.5));
    }

    #[test]
    fn used_variables_ignores_zero_coefficients() {
        let mut cf = ContinuedFraction::constant(2, 1.0);
        assert!(cf.used_variables().is_empty());
        cf.whitelist[1] = true;
        cf.terms[0].active[1] = true;
        assert!(cf.used_variables().is_empty());
        cf.terms[0].coefficients[1] = 0.5;
        assert_eq!(cf.n_used_variables(), 1);
    }

    #[test]
    fn convergent_truncates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cf = ContinuedFraction::random(3, 4, &RandomInit { whitelist_p: 1.0, ..Default::default() }, &mut rng);
        assert_eq!(cf.convergent(4).unwrap(), cf);
        let c0 = cf.convergent(0).unwrap();
        assert_eq!(c0.terms(), &cf.terms()[..1]);
        assert_eq!(cf.convergent(2).unwrap().terms().len(), 5);
        assert!(cf.convergent(5).is_err());
    }

    #[test]
    fn random_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cf = ContinuedFraction::random(5, 8, &RandomInit::default(), &mut rng);
        assert_eq!(cf.terms().len(), 17);
        for t in cf.terms() {
            assert!((-3.0..=3.0).contains(&t.constant));
            for j in 0..5 {
                assert_eq!(t.active[j], cf.whitelist()[j]);
                assert!((-3.0..=3.0).contains(&t.coefficients[j]));
            }
        }

        let none = RandomInit { whitelist_p: 0.0, ..Default::default() };
        let cf = ContinuedFraction::random(4, 2, &none, &mut rng);
        assert!(cf.whitelist().iter().all(|&w| !w));
        assert!(cf.terms().iter().all(|t| t.active.iter().all(|&a| !a)));
    }

    #[test]
    fn whitelist_inclusion_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let draws = 10_000;
        let hits = (0..draws)
            .filter(|_| ContinuedFraction::random(1, 0, &RandomInit::default(), &mut rng).whitelist()[0])
            .count();
        let freq = hits as f64 / draws as f64;
        assert!((freq - 1.0 / 3.0).abs() < 0.02, "freq = {freq}");
    }

    #[test]
    fn new_rejects_broken_invariants() {
        let t = LinearTerm::dense(vec![1.0], 0.0);
        assert!(ContinuedFraction::new(1, vec![t.clone(), t.clone()], vec![true]).is_err());
        assert!(ContinuedFraction::new(1, vec![t.clone()], vec![false]).is_err());
        assert!(ContinuedFraction::new(2, vec![t], vec![true, true]).is_err());
    }

    #[test]
    fn render_constant_and_nested() {
        assert_eq!(ContinuedFraction::constant(2, 5.0).render(None), "5");
        assert_eq!(ContinuedFraction::constant(2, -0.25).render(None), "-0.25");

        let names: Vec<String> = ["w", "x", "y", "z"].iter().map(|s| s.to_string()).collect();
        let s = four_var_example().render(Some(&names));
        assert_eq!(s, "2.1*w + (1*w + 4.7*x + 1.01) / (1*x + (5.7*y + 1.3) / (3.9*x))");
        let latex = four_var_example().render_latex(Some(&names));
        assert_eq!(latex.matches("\\cfrac").count(), 2);
        assert!(latex.starts_with("2.1\\,w + \\cfrac{"));
    }

    #[test]
    fn text_round_trip_keeps_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cf = ContinuedFraction::random(3, 4, &RandomInit::default(), &mut rng).with_seed(Some(u64::MAX));
        let back = ContinuedFraction::from_text(&cf.to_text()).unwrap();
        assert_eq!(back, cf);
        assert_eq!(back.seed(), Some(u64::MAX));
    }

    #[test]
    fn malformed_document_reports_position() {
        let mut text = ContinuedFraction::constant(1, 1.0).to_text();
        text.push_str("\nwhitelist = [oops]\n");
        match ContinuedFraction::from_text(&text) {
            Err(CfrError::Parse { line, .. }) => assert!(line > 1),
            other => panic!("expected parse error, got {other:?}"),
        }
        let bad_depth = ContinuedFraction::constant(1, 1.0).to_text().replace("depth = 0", "depth = 2");
        assert!(matches!(ContinuedFraction::from_text(&bad_depth), Err(CfrError::Parse { .. })));
    }
}
