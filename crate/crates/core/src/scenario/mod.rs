//! Finite product scenario spaces and adapted measure-selection strategies.
//!
//! A [`ScenarioSpace`] stacks one [`AmbiguitySet`] per coordinate. Its nested
//! upper expectation ([`ScenarioSpace::product_expect`]) evaluates the last
//! coordinate innermost. A [`KernelStrategy`] picks, for every history of atom
//! indices, which member drives the next coordinate; every strategy induces an
//! ordinary probability measure on the product. [`ScenarioSpace::strategy_sup`]
//! maximizes over all of them by brute force and is the reference the lattice
//! recursion in [`crate::convolution`] is checked against.

mod identity;
mod occupation;

pub use identity::{check_identity, IdentityKind, IdentityReport, IdentityRow, IdentitySuite, JointFamily};

use crate::error::{Error, Result};
use crate::measure::AmbiguitySet;

/// Largest number of strategies [`ScenarioSpace::strategy_sup`] will enumerate.
pub const STRATEGY_GUARD: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpace {
    steps: Vec<AmbiguitySet>,
}

/// One member index per (step, history). `choices[k][h]` is the member used
/// for coordinate `k` after the history with mixed-radix index `h`.
///
/// History indices are lexicographic in the atom indices of the earlier
/// coordinates: the history `(i_0, .., i_{k-1})` has index
/// `((i_0 * s_1 + i_1) * s_2 + ..) + i_{k-1}` where `s_j` is the support size of
/// coordinate `j`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KernelStrategy {
    choices: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategySup {
    pub value: f64,
    pub argmax: KernelStrategy,
}

impl KernelStrategy {
    pub fn new(choices: Vec<Vec<usize>>) -> Self {
        Self { choices }
    }

    /// Strategy ignoring the history: member `members[k]` at every step `k`.
    pub fn constant(space: &ScenarioSpace, members: &[usize]) -> Self {
        let choices = (0..space.horizon())
            .map(|k| vec![members[k]; space.history_count(k)])
            .collect();
        Self { choices }
    }

    /// Builds a strategy from a rule `(k, history atom indices) -> member`.
    pub fn from_fn(space: &ScenarioSpace, rule: impl Fn(usize, &[usize]) -> usize) -> Self {
        let choices = (0..space.horizon())
            .map(|k| {
                (0..space.history_count(k))
                    .map(|h| rule(k, &space.decode_history(k, h)))
                    .collect()
            })
            .collect();
        Self { choices }
    }

    pub fn choices(&self) -> &[Vec<usize>] {
        &self.choices
    }

    /// Flattened encoding in enumeration order (step-major, then history).
    pub fn encoding(&self) -> Vec<usize> {
        self.choices.iter().flatten().copied().collect()
    }
}

impl ScenarioSpace {
    pub fn new(steps: Vec<AmbiguitySet>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::Contract("scenario space needs at least one step".into()));
        }
        Ok(Self { steps })
    }

    /// `n` copies of the same step.
    pub fn iid(step: &AmbiguitySet, n: usize) -> Result<Self> {
        Self::new(vec![step.clone(); n])
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn steps(&self) -> &[AmbiguitySet] {
        &self.steps
    }

    /// Number of histories preceding coordinate `k`.
    pub fn history_count(&self, k: usize) -> usize {
        self.steps[..k].iter().map(|s| s.support().len()).product()
    }

    fn decode_history(&self, k: usize, mut h: usize) -> Vec<usize> {
        let mut idx = vec![0; k];
        for j in (0..k).rev() {
            let s = self.steps[j].support().len();
            idx[j] = h % s;
            h /= s;
        }
        idx
    }

    /// Number of adapted deterministic strategies, saturating at `u128::MAX`.
    pub fn strategy_count(&self) -> u128 {
        let mut total: u128 = 1;
        for k in 0..self.horizon() {
            let m = self.steps[k].len() as u128;
            for _ in 0..self.history_count(k) {
                total = total.saturating_mul(m);
                if total == u128::MAX {
                    return total;
                }
            }
        }
        total
    }

    fn eval_leaf(f: &impl Fn(&[f64]) -> f64, point: &[f64]) -> Result<f64> {
        let v = f(point);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain(format!("function undefined at scenario {point:?}")))
        }
    }

    /// Nested upper expectation, innermost coordinate first.
    pub fn product_expect(&self, f: impl Fn(&[f64]) -> f64) -> Result<f64> {
        let mut path = Vec::with_capacity(self.horizon());
        self.nested(0, &mut path, &f)
    }

    fn nested(&self, k: usize, path: &mut Vec<f64>, f: &impl Fn(&[f64]) -> f64) -> Result<f64> {
        if k == self.horizon() {
            return Self::eval_leaf(f, path);
        }
        let step = &self.steps[k];
        let mut child = Vec::with_capacity(step.support().len());
        for &x in step.support() {
            path.push(x);
            let v = self.nested(k + 1, path, f);
            path.pop();
            child.push(v?);
        }
        Ok((0..step.len())
            .map(|m| step.member_weights(m).iter().zip(&child).map(|(p, v)| p * v).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max))
    }

    fn check_strategy(&self, strat: &KernelStrategy) -> Result<()> {
        if strat.choices.len() != self.horizon() {
            return Err(Error::Contract(format!(
                "strategy covers {} steps, space has {}",
                strat.choices.len(),
                self.horizon()
            )));
        }
        for (k, level) in strat.choices.iter().enumerate() {
            if level.len() != self.history_count(k) {
                return Err(Error::Contract(format!(
                    "strategy defines {} histories at step {k}, expected {}",
                    level.len(),
                    self.history_count(k)
                )));
            }
            if let Some(&m) = level.iter().find(|&&m| m >= self.steps[k].len()) {
                return Err(Error::Contract(format!(
                    "member index {m} out of range at step {k}"
                )));
            }
        }
        Ok(())
    }

    /// Classical expectation under the product measure a strategy induces.
    /// Only histories with positive probability are visited.
    pub fn strategy_expect(&self, f: impl Fn(&[f64]) -> f64, strat: &KernelStrategy) -> Result<f64> {
        self.check_strategy(strat)?;
        let mut path = Vec::with_capacity(self.horizon());
        self.forward(0, 0, &mut path, strat, &f)
    }

    fn forward(
        &self,
        k: usize,
        h: usize,
        path: &mut Vec<f64>,
        strat: &KernelStrategy,
        f: &impl Fn(&[f64]) -> f64,
    ) -> Result<f64> {
        if k == self.horizon() {
            return Self::eval_leaf(f, path);
        }
        let step = &self.steps[k];
        let weights = step.member_weights(strat.choices[k][h]);
        let s = step.support().len();
        let mut acc = 0.0;
        for (j, (&x, &p)) in step.support().iter().zip(weights).enumerate() {
            if p == 0.0 {
                continue;
            }
            path.push(x);
            let v = self.forward(k + 1, h * s + j, path, strat, f);
            path.pop();
            acc += p * v?;
        }
        Ok(acc)
    }

    /// Maximum of [`strategy_expect`](Self::strategy_expect) over every adapted
    /// deterministic strategy, by exhaustive enumeration.
    ///
    /// Strategies are visited in lexicographic order of their
    /// [`encoding`](KernelStrategy::encoding) and only a strictly larger value
    /// replaces the incumbent, so exact ties resolve to the smallest encoding.
    pub fn strategy_sup(&self, f: impl Fn(&[f64]) -> f64) -> Result<StrategySup> {
        let count = self.strategy_count();
        if count > STRATEGY_GUARD {
            return Err(Error::SizeGuard(format!(
                "{count} strategies exceed the enumeration guard of {STRATEGY_GUARD}; \
                 use the convolution engine for partial sums"
            )));
        }
        let n = self.horizon();
        let last = n - 1;

        // Value of the final coordinate's expectation for each (history, member).
        let leaves = self.leaf_table(&f)?;
        let s_last = self.steps[last].support().len();
        let m_last = self.steps[last].len();
        let tail: Vec<Vec<f64>> = (0..self.history_count(last))
            .map(|h| {
                (0..m_last)
                    .map(|m| {
                        let w = self.steps[last].member_weights(m);
                        let vals = &leaves[h * s_last..(h + 1) * s_last];
                        w.iter().zip(vals).map(|(p, v)| p * v).sum()
                    })
                    .collect()
            })
            .collect();

        // Odometer over (level, history) slots.
        let slots: Vec<(usize, usize)> = (0..n)
            .flat_map(|k| (0..self.history_count(k)).map(move |h| (k, h)))
            .collect();
        let radix: Vec<usize> = slots.iter().map(|&(k, _)| self.steps[k].len()).collect();
        let level_start: Vec<usize> = (0..n)
            .map(|k| slots.iter().position(|&(kk, _)| kk == k).unwrap())
            .collect();

        let mut digits = vec![0usize; slots.len()];
        // mass[k][h]: probability of history h before coordinate k.
        let mut mass: Vec<Vec<f64>> = (0..n).map(|k| vec![0.0; self.history_count(k)]).collect();
        mass[0][0] = 1.0;
        let mut dirty_from = 0usize;

        let mut best_value = f64::NEG_INFINITY;
        let mut best_digits = digits.clone();
        loop {
            for k in dirty_from..last {
                let step = &self.steps[k];
                let s = step.support().len();
                let (lo, hi) = mass.split_at_mut(k + 1);
                let (cur, next) = (&lo[k], &mut hi[0]);
                for h in 0..cur.len() {
                    let w = step.member_weights(digits[level_start[k] + h]);
                    for j in 0..s {
                        next[h * s + j] = cur[h] * w[j];
                    }
                }
            }
            let base = level_start[last];
            let value: f64 = mass[last]
                .iter()
                .enumerate()
                .map(|(h, q)| q * tail[h][digits[base + h]])
                .sum();
            if value > best_value {
                best_value = value;
                best_digits.copy_from_slice(&digits);
            }

            // advance: last slot fastest
            let mut pos = slots.len();
            loop {
                if pos == 0 {
                    let argmax = self.strategy_from_digits(&best_digits);
                    return Ok(StrategySup {
                        value: best_value,
                        argmax,
                    });
                }
                pos -= 1;
                digits[pos] += 1;
                if digits[pos] < radix[pos] {
                    break;
                }
                digits[pos] = 0;
            }
            dirty_from = slots[pos].0;
        }
    }

    fn strategy_from_digits(&self, digits: &[usize]) -> KernelStrategy {
        let mut it = digits.iter().copied();
        let choices = (0..self.horizon())
            .map(|k| it.by_ref().take(self.history_count(k)).collect())
            .collect();
        KernelStrategy { choices }
    }

    /// `f` on every point of the full product support, lexicographic order.
    fn leaf_table(&self, f: &impl Fn(&[f64]) -> f64) -> Result<Vec<f64>> {
        let n = self.horizon();
        let total = self.history_count(n);
        let mut out = Vec::with_capacity(total);
        let mut point = vec![0.0; n];
        for idx in 0..total {
            let mut rem = idx;
            for k in (0..n).rev() {
                let sup = self.steps[k].support();
                point[k] = sup[rem % sup.len()];
                rem /= sup.len();
            }
            out.push(Self::eval_leaf(f, &point)?);
        }
        Ok(out)
    }
}
