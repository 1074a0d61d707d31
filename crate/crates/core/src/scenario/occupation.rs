//! Linear-programming search over adapted strategies.
//!
//! Exhaustive enumeration stops being feasible quickly: `m^(1 + s + .. + s^(n-1))`
//! strategies for `m` members and `s` support points. A randomized adapted
//! strategy is described by its occupation weights `y[k][h][m]`, the probability
//! of reaching history `h` before coordinate `k` and then drawing from member `m`.
//! Those weights form a polytope cut out by flow-conservation equalities, the
//! induced expectation is linear in them, and the polytope's vertices are the
//! deterministic strategies. The simplex method therefore lands on an optimal
//! deterministic strategy, which is then re-evaluated exactly by forward
//! enumeration.
//!
//! Near-ties can make the solver's rounding pick a slightly worse member. A
//! final pass switches one history at a time while the forward value strictly
//! improves; in a finite-horizon problem a strategy with no improving single
//! switch is optimal.

use minilp::{ComparisonOp, OptimizationDirection, Problem, Variable};

use super::{KernelStrategy, ScenarioSpace, StrategySup};
use crate::error::{Error, Result};

/// Upper limit on LP variables.
pub const OCCUPATION_VAR_GUARD: usize = 200_000;

/// Improvement pass budget in (history, member) forward evaluations times leaves.
const POLISH_BUDGET: u128 = 500_000_000;

impl ScenarioSpace {
    /// Supremum of [`strategy_expect`](Self::strategy_expect) over all adapted
    /// strategies, found by the simplex method on occupation weights.
    ///
    /// The reported value is the exact forward expectation of the extracted
    /// deterministic strategy.
    pub fn occupation_sup(&self, f: impl Fn(&[f64]) -> f64) -> Result<StrategySup> {
        let n = self.horizon();
        let vars: usize = (0..n).map(|k| self.history_count(k) * self.steps[k].len()).sum();
        if vars > OCCUPATION_VAR_GUARD {
            return Err(Error::SizeGuard(format!(
                "{vars} occupation variables exceed the guard of {OCCUPATION_VAR_GUARD}"
            )));
        }

        let last = n - 1;
        let leaves = self.leaf_table(&f)?;
        let s_last = self.steps[last].support().len();

        let mut problem = Problem::new(OptimizationDirection::Maximize);
        let mut y: Vec<Vec<Vec<Variable>>> = Vec::with_capacity(n);
        for k in 0..n {
            let step = &self.steps[k];
            let level = (0..self.history_count(k))
                .map(|h| {
                    (0..step.len())
                        .map(|m| {
                            let gain = if k == last {
                                let vals = &leaves[h * s_last..(h + 1) * s_last];
                                step.member_weights(m).iter().zip(vals).map(|(p, v)| p * v).sum()
                            } else {
                                0.0
                            };
                            problem.add_var(gain, (0.0, f64::INFINITY))
                        })
                        .collect()
                })
                .collect();
            y.push(level);
        }

        let root: Vec<(Variable, f64)> = y[0][0].iter().map(|&v| (v, 1.0)).collect();
        problem.add_constraint(root.as_slice(), ComparisonOp::Eq, 1.0);
        for k in 1..n {
            let prev = &self.steps[k - 1];
            let s = prev.support().len();
            for (h, parent) in y[k - 1].iter().enumerate() {
                for j in 0..s {
                    let mut row: Vec<(Variable, f64)> = y[k][h * s + j].iter().map(|&v| (v, 1.0)).collect();
                    for (m, &v) in parent.iter().enumerate() {
                        let p = prev.member_weights(m)[j];
                        if p != 0.0 {
                            row.push((v, -p));
                        }
                    }
                    problem.add_constraint(row.as_slice(), ComparisonOp::Eq, 0.0);
                }
            }
        }

        let solution = problem
            .solve()
            .map_err(|e| Error::Contract(format!("occupation LP failed: {e}")))?;

        let choices = y
            .iter()
            .map(|level| {
                level
                    .iter()
                    .map(|vars| {
                        let mut best = 0;
                        for (m, &v) in vars.iter().enumerate() {
                            if solution[v] > solution[vars[best]] {
                                best = m;
                            }
                        }
                        best
                    })
                    .collect()
            })
            .collect();
        let mut argmax = KernelStrategy::new(choices);
        let mut value = self.strategy_expect(&f, &argmax)?;

        let moves: u128 = (0..n).map(|k| (self.history_count(k) * self.steps[k].len()) as u128).sum();
        if moves * leaves.len() as u128 <= POLISH_BUDGET {
            let mut improved = true;
            while improved {
                improved = false;
                for k in 0..n {
                    for h in 0..self.history_count(k) {
                        for m in 0..self.steps[k].len() {
                            if argmax.choices[k][h] == m {
                                continue;
                            }
                            let mut trial = argmax.clone();
                            trial.choices[k][h] = m;
                            let v = self.strategy_expect(&f, &trial)?;
                            if v > value {
                                argmax = trial;
                                value = v;
                                improved = true;
                            }
                        }
                    }
                }
            }
        }
        Ok(StrategySup { value, argmax })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::fixtures::*;

    #[test]
    fn agrees_with_enumeration_on_small_spaces() {
        for step in [mean_uncertain_coin(), variance_uncertain_rademacher()] {
            let space = ScenarioSpace::iid(&step, 3).unwrap();
            let f = |w: &[f64]| {
                let s: f64 = w.iter().sum();
                (s - 0.5).abs() + 0.3 * w[0] * w[2]
            };
            let lp = space.occupation_sup(f).unwrap();
            let brute = space.strategy_sup(f).unwrap();
            assert!((lp.value - brute.value).abs() < 1e-12, "{} vs {}", lp.value, brute.value);
        }
    }

    #[test]
    fn handles_spaces_beyond_the_enumeration_guard() {
        let space = ScenarioSpace::iid(&variance_uncertain_rademacher(), 4).unwrap();
        assert!(space.strategy_count() > crate::scenario::STRATEGY_GUARD);
        let sup = space.occupation_sup(|w| w.iter().sum::<f64>().powi(2)).unwrap();
        assert!((sup.value - 16.0).abs() < 1e-12);
    }
}
