//! Finitely supported distributions and ambiguity sets.
//!
//! An [`AmbiguitySet`] is a nonempty finite family of [`DiscreteDistribution`]s.
//! The upper expectation is the maximum of the member expectations and the
//! conjugate (lower) expectation is the minimum. Upper and lower capacities are
//! the corresponding extremes of event probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a distribution.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Two support points closer than this are treated as the same atom.
const POINT_MERGE_TOLERANCE: f64 = 1e-12;

/// A probability measure with finitely many atoms on the real line.
///
/// Atoms are stored sorted by point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionDoc", into = "DistributionDoc")]
pub struct DiscreteDistribution {
    points: Vec<f64>,
    probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionDoc {
    pub points: Vec<f64>,
    pub probs: Vec<f64>,
}

impl TryFrom<DistributionDoc> for DiscreteDistribution {
    type Error = Error;

    fn try_from(doc: DistributionDoc) -> Result<Self> {
        DiscreteDistribution::new(doc.points, doc.probs)
    }
}

impl From<DiscreteDistribution> for DistributionDoc {
    fn from(d: DiscreteDistribution) -> Self {
        DistributionDoc {
            points: d.points,
            probs: d.probs,
        }
    }
}

impl DiscreteDistribution {
    pub fn new(points: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if points.len() != probs.len() {
            return Err(Error::InvalidDistribution(format!(
                "{} points but {} probabilities",
                points.len(),
                probs.len()
            )));
        }
        if points.is_empty() {
            return Err(Error::InvalidDistribution("no atoms".into()));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidDistribution(format!("non-finite point {p}")));
        }
        if let Some(q) = probs.iter().find(|q| !(q.is_finite() && **q >= 0.0 && **q <= 1.0)) {
            return Err(Error::InvalidDistribution(format!(
                "probability {q} outside [0, 1]"
            )));
        }
        let mass: f64 = probs.iter().sum();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {mass}, expected 1"
            )));
        }

        let mut atoms: Vec<(f64, f64)> = points.into_iter().zip(probs).collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(w) = atoms
            .windows(2)
            .find(|w| (w[1].0 - w[0].0).abs() <= POINT_MERGE_TOLERANCE)
        {
            return Err(Error::InvalidDistribution(format!(
                "duplicate support point {}",
                w[0].0
            )));
        }
        let (points, probs) = atoms.into_iter().unzip();
        Ok(Self { points, probs })
    }

    /// Point mass at `c`.
    pub fn dirac(c: f64) -> Self {
        Self {
            points: vec![c],
            probs: vec![1.0],
        }
    }

    /// Uniform distribution over the given distinct points.
    pub fn uniform(points: Vec<f64>) -> Result<Self> {
        let w = 1.0 / points.len() as f64;
        let probs = vec![w; points.len()];
        Self::new(points, probs)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().copied().zip(self.probs.iter().copied())
    }

    /// Classical expectation of `f`.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms().map(|(x, p)| p * f(x)).sum()
    }

    pub fn probability(&self, event: impl Fn(f64) -> bool) -> f64 {
        self.atoms().filter(|(x, _)| event(*x)).map(|(_, p)| p).sum()
    }

    /// Law of `-X` when `X` has this law.
    pub fn negated(&self) -> Self {
        let mut atoms: Vec<(f64, f64)> = self.atoms().map(|(x, p)| (-x, p)).collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (points, probs) = atoms.into_iter().unzip();
        Self { points, probs }
    }
}

/// A nonempty finite family of distributions, the measure set behind an upper
/// expectation.
///
/// All members are viewed on the sorted union of their supports; a member puts
/// zero mass on union points outside its own support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AmbiguitySetDoc", into = "AmbiguitySetDoc")]
pub struct AmbiguitySet {
    label: String,
    members: Vec<DiscreteDistribution>,
    support: Vec<f64>,
    /// `aligned[m][j]` is the mass member `m` puts on `support[j]`.
    aligned: Vec<Vec<f64>>,
}

/// Serialized form: `{ "label": ..., "members": [ {"points": [...], "probs": [...]} ] }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AmbiguitySetDoc {
    pub label: String,
    pub members: Vec<DiscreteDistribution>,
}

impl TryFrom<AmbiguitySetDoc> for AmbiguitySet {
    type Error = Error;

    fn try_from(doc: AmbiguitySetDoc) -> Result<Self> {
        AmbiguitySet::new(doc.label, doc.members)
    }
}

impl From<AmbiguitySet> for AmbiguitySetDoc {
    fn from(a: AmbiguitySet) -> Self {
        AmbiguitySetDoc {
            label: a.label,
            members: a.members,
        }
    }
}

/// Upper and lower probability of an event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capacities {
    pub upper: f64,
    pub lower: f64,
}

/// Upper/lower mean and upper/lower second moment of an ambiguity set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub upper_mean: f64,
    pub lower_mean: f64,
    pub upper_sq: f64,
    pub lower_sq: f64,
}

impl MomentSummary {
    /// True when both the upper and lower mean vanish within `tol`.
    pub fn is_mean_zero(&self, tol: f64) -> bool {
        self.upper_mean.abs() <= tol && self.lower_mean.abs() <= tol
    }

    /// Upper standard deviation `sqrt(upper_sq)`.
    pub fn sigma_hi(&self) -> f64 {
        self.upper_sq.sqrt()
    }
}

impl AmbiguitySet {
    pub fn new(label: impl Into<String>, members: Vec<DiscreteDistribution>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidDistribution(
                "ambiguity set needs at least one member".into(),
            ));
        }
        let mut support: Vec<f64> = members.iter().flat_map(|m| m.points.iter().copied()).collect();
        support.sort_by(f64::total_cmp);
        support.dedup_by(|a, b| (*a - *b).abs() <= POINT_MERGE_TOLERANCE);

        let aligned = members
            .iter()
            .map(|m| {
                let mut row = vec![0.0; support.len()];
                for (x, p) in m.atoms() {
                    let j = support
                        .iter()
                        .position(|s| (s - x).abs() <= POINT_MERGE_TOLERANCE)
                        .expect("support contains every member point");
                    row[j] += p;
                }
                row
            })
            .collect();

        Ok(Self {
            label: label.into(),
            members,
            support,
            aligned,
        })
    }

    pub fn singleton(label: impl Into<String>, dist: DiscreteDistribution) -> Self {
        Self::new(label, vec![dist]).expect("one member is always valid")
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn members(&self) -> &[DiscreteDistribution] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Sorted union of all member supports.
    pub fn support(&self) -> &[f64] {
        &self.support
    }

    /// Mass of member `m` on each point of [`support`](Self::support).
    pub fn member_weights(&self, m: usize) -> &[f64] {
        &self.aligned[m]
    }

    /// Evaluates `f` on the support, rejecting non-finite values.
    pub fn tabulate(&self, f: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
        self.support
            .iter()
            .map(|&x| {
                let y = f(x);
                if y.is_finite() {
                    Ok(y)
                } else {
                    Err(Error::Domain(format!(
                        "function undefined at support point {x} of '{}'",
                        self.label
                    )))
                }
            })
            .collect()
    }

    /// Classical expectations of tabulated values under every member.
    fn member_expectations<'a>(&'a self, values: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
        self.aligned
            .iter()
            .map(move |w| w.iter().zip(values).map(|(p, v)| p * v).sum())
    }

    /// Upper expectation: the largest member expectation of `f`.
    pub fn sublinear_expect(&self, f: impl Fn(f64) -> f64) -> Result<f64> {
        Ok(self.argmax_expect(f)?.0)
    }

    /// Upper expectation together with the lowest-index maximizing member.
    pub fn argmax_expect(&self, f: impl Fn(f64) -> f64) -> Result<(f64, usize)> {
        let values = self.tabulate(f)?;
        let mut best = (f64::NEG_INFINITY, 0);
        for (m, e) in self.member_expectations(&values).enumerate() {
            if e > best.0 {
                best = (e, m);
            }
        }
        Ok(best)
    }

    /// Conjugate expectation `-E[-f]`.
    pub fn lower_expect(&self, f: impl Fn(f64) -> f64) -> Result<f64> {
        Ok(-self.sublinear_expect(|x| -f(x))?)
    }

    pub fn capacities(&self, event: impl Fn(f64) -> bool) -> Capacities {
        let indicator: Vec<f64> = self
            .support
            .iter()
            .map(|&x| if event(x) { 1.0 } else { 0.0 })
            .collect();
        let (mut upper, mut lower) = (f64::NEG_INFINITY, f64::INFINITY);
        for p in self.member_expectations(&indicator) {
            upper = upper.max(p);
            lower = lower.min(p);
        }
        Capacities {
            upper: upper.clamp(0.0, 1.0),
            lower: lower.clamp(0.0, 1.0),
        }
    }

    pub fn moment_summary(&self) -> MomentSummary {
        let e = |f: fn(f64) -> f64| self.sublinear_expect(f).expect("polynomials are finite");
        MomentSummary {
            upper_mean: e(|x| x),
            lower_mean: -e(|x| -x),
            upper_sq: e(|x| x * x),
            lower_sq: -e(|x| -x * x),
        }
    }

    /// The family of laws of `-X`.
    pub fn negated(&self) -> Self {
        let members = self.members.iter().map(DiscreteDistribution::negated).collect();
        Self::new(format!("-({})", self.label), members).expect("negation preserves validity")
    }
}

/// Ambiguity sets used throughout the examples and tests.
pub mod fixtures {
    use super::*;

    fn coin(p_up: f64) -> DiscreteDistribution {
        DiscreteDistribution::new(vec![-1.0, 1.0], vec![1.0 - p_up, p_up]).unwrap()
    }

    /// `{P_p : p in {0.4, 0.6}}` on `{-1, +1}` with `P_p(+1) = p`.
    pub fn mean_uncertain_coin() -> AmbiguitySet {
        AmbiguitySet::new("mean-uncertain coin", vec![coin(0.4), coin(0.6)]).unwrap()
    }

    /// Uniform on `{-s, +s}` for `s in {1, 2}`.
    pub fn variance_uncertain_rademacher() -> AmbiguitySet {
        let members = [1.0, 2.0]
            .iter()
            .map(|&s| DiscreteDistribution::uniform(vec![-s, s]).unwrap())
            .collect();
        AmbiguitySet::new("variance-uncertain rademacher", members).unwrap()
    }

    /// Classical fair coin on `{-1, +1}`.
    pub fn fair_rademacher() -> AmbiguitySet {
        AmbiguitySet::singleton("fair rademacher", coin(0.5))
    }

    pub fn dirac(c: f64) -> AmbiguitySet {
        AmbiguitySet::singleton(format!("dirac({c})"), DiscreteDistribution::dirac(c))
    }
}
