//! Backward sup-convolution on an integer lattice.
//!
//! For steps `X_{m+1}, .., X_{m+n}` the upper expectation of `phi` of their sum
//! is obtained by peeling off one step at a time, last step first:
//!
//! ```text
//! phi_{n}(x)   = phi(x)
//! phi_{k-1}(x) = max_P  sum_j P(v_j) phi_k(x + v_j)
//! E[phi(S)]    = phi_0(0)
//! ```
//!
//! All support points are exact multiples of a lattice spacing `h`, so sums stay
//! on the lattice and the reachable range of the partial sum is known up front.
//! Nothing is interpolated and nothing is extrapolated: reading outside a grid
//! is an error.

use crate::error::{Error, Result};
use crate::measure::{AmbiguitySet, MomentSummary};

/// Maximum distance of a support point from the lattice, in units of `h`.
pub const ALIGNMENT_TOLERANCE: f64 = 1e-9;

/// Per-level state guard for [`max_augmented_expect`].
pub const AUGMENTED_STATE_GUARD: usize = 10_000_000;

/// Integer lattice `{ i * spacing : lo <= i <= hi }`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeGrid {
    spacing: f64,
    lo: i64,
    hi: i64,
}

impl LatticeGrid {
    /// A single-point grid (`lo == hi`) is allowed; the recursion ends on one.
    pub fn new(spacing: f64, lo: i64, hi: i64) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::Contract(format!("lattice spacing {spacing} must be positive")));
        }
        if lo > hi {
            return Err(Error::Contract(format!("empty index range [{lo}, {hi}]")));
        }
        Ok(Self { spacing, lo, hi })
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, i: i64) -> f64 {
        i as f64 * self.spacing
    }

    pub fn contains(&self, i: i64) -> bool {
        self.lo <= i && i <= self.hi
    }

    fn same_spacing(&self, h: f64) -> bool {
        (self.spacing - h).abs() <= 1e-12 * self.spacing.max(h)
    }
}

/// A function tabulated on a [`LatticeGrid`], with optional Lipschitz and sup
/// bounds carried through the recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: LatticeGrid,
    values: Vec<f64>,
    lip_bound: Option<f64>,
    sup_bound: Option<f64>,
}

impl GridFunction {
    pub fn new(grid: LatticeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Contract(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            values,
            lip_bound: None,
            sup_bound: None,
        })
    }

    /// Samples `phi` at every grid point.
    pub fn sample(grid: LatticeGrid, phi: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (grid.lo..=grid.hi)
            .map(|i| {
                let x = grid.point(i);
                let v = phi(x);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Domain(format!("function undefined at lattice point {x}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, values)
    }

    pub fn with_lip_bound(mut self, lip: f64) -> Result<Self> {
        self.lip_bound = Some(lip);
        if !self.satisfies_lip_bound() {
            return Err(Error::Contract(format!("values violate Lipschitz bound {lip}")));
        }
        Ok(self)
    }

    pub fn with_sup_bound(mut self, bound: f64) -> Result<Self> {
        if let Some(v) = self.values.iter().find(|v| v.abs() > bound + 1e-9) {
            return Err(Error::Contract(format!("value {v} exceeds sup bound {bound}")));
        }
        self.sup_bound = Some(bound);
        Ok(self)
    }

    pub fn grid(&self) -> &LatticeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn lip_bound(&self) -> Option<f64> {
        self.lip_bound
    }

    pub fn sup_bound(&self) -> Option<f64> {
        self.sup_bound
    }

    pub fn at(&self, i: i64) -> Option<f64> {
        self.grid
            .contains(i)
            .then(|| self.values[(i - self.grid.lo) as usize])
    }

    /// `|v_{i+1} - v_i| <= L h + 1e-9` for consecutive points; vacuous without a bound.
    pub fn satisfies_lip_bound(&self) -> bool {
        match self.lip_bound {
            None => true,
            Some(lip) => {
                let slack = lip * self.grid.spacing + 1e-9;
                self.values.windows(2).all(|w| (w[1] - w[0]).abs() <= slack)
            }
        }
    }

    /// Restriction to the sub-range `[lo, hi]`.
    fn restrict(&self, lo: i64, hi: i64) -> Result<Self> {
        if !(self.grid.contains(lo) && self.grid.contains(hi)) {
            return Err(Error::GridSize(format!(
                "needed indices [{lo}, {hi}] but grid covers [{}, {}]",
                self.grid.lo, self.grid.hi
            )));
        }
        let a = (lo - self.grid.lo) as usize;
        let b = (hi - self.grid.lo) as usize;
        Ok(Self {
            grid: LatticeGrid::new(self.grid.spacing, lo, hi)?,
            values: self.values[a..=b].to_vec(),
            lip_bound: self.lip_bound,
            sup_bound: self.sup_bound,
        })
    }
}

/// An ambiguity set whose support lies on the lattice `h Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepModel {
    ambiguity: AmbiguitySet,
    spacing: f64,
    /// Per member: (lattice offset, probability), sorted by offset.
    members: Vec<Vec<(i64, f64)>>,
    min_offset: i64,
    max_offset: i64,
}

impl StepModel {
    pub fn new(ambiguity: AmbiguitySet, spacing: f64) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::Contract(format!("lattice spacing {spacing} must be positive")));
        }
        let to_index = |x: f64| -> Result<i64> {
            let q = x / spacing;
            let i = q.round();
            if (q - i).abs() > ALIGNMENT_TOLERANCE {
                return Err(Error::Alignment(format!(
                    "support point {x} of '{}' is not a multiple of spacing {spacing}",
                    ambiguity.label()
                )));
            }
            Ok(i as i64)
        };
        let members = ambiguity
            .members()
            .iter()
            .map(|d| d.atoms().map(|(x, p)| Ok((to_index(x)?, p))).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let offsets = members.iter().flatten().map(|&(o, _)| o);
        let min_offset = offsets.clone().min().expect("nonempty");
        let max_offset = offsets.max().expect("nonempty");
        Ok(Self {
            ambiguity,
            spacing,
            members,
            min_offset,
            max_offset,
        })
    }

    pub fn ambiguity(&self) -> &AmbiguitySet {
        &self.ambiguity
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn label(&self) -> &str {
        self.ambiguity.label()
    }

    /// Smallest and largest lattice offset of any member atom.
    pub fn offset_range(&self) -> (i64, i64) {
        (self.min_offset, self.max_offset)
    }

    pub fn moment_summary(&self) -> MomentSummary {
        self.ambiguity.moment_summary()
    }

    /// Step model of `-X`.
    pub fn negated(&self) -> Self {
        Self::new(self.ambiguity.negated(), self.spacing).expect("negation keeps alignment")
    }

    fn member_value(&self, m: usize, psi: &GridFunction, x: i64) -> f64 {
        let base = psi.grid.lo;
        self.members[m]
            .iter()
            .map(|&(o, p)| p * psi.values[(x + o - base) as usize])
            .sum()
    }
}

fn backstep_impl(psi: &GridFunction, step: &StepModel, trace: Option<&mut Vec<usize>>) -> Result<GridFunction> {
    if !psi.grid.same_spacing(step.spacing) {
        return Err(Error::Alignment(format!(
            "grid spacing {} differs from step spacing {}",
            psi.grid.spacing, step.spacing
        )));
    }
    let lo = psi.grid.lo - step.min_offset;
    let hi = psi.grid.hi - step.max_offset;
    if lo > hi {
        return Err(Error::GridSize(format!(
            "grid [{}, {}] too narrow for step offsets [{}, {}]",
            psi.grid.lo, psi.grid.hi, step.min_offset, step.max_offset
        )));
    }
    let mut values = Vec::with_capacity((hi - lo + 1) as usize);
    let mut picks = Vec::new();
    for x in lo..=hi {
        let mut best = (f64::NEG_INFINITY, 0);
        for m in 0..step.members.len() {
            let v = step.member_value(m, psi, x);
            if v > best.0 {
                best = (v, m);
            }
        }
        values.push(best.0);
        picks.push(best.1);
    }
    if let Some(t) = trace {
        *t = picks;
    }
    Ok(GridFunction {
        grid: LatticeGrid::new(psi.grid.spacing, lo, hi)?,
        values,
        lip_bound: psi.lip_bound,
        sup_bound: psi.sup_bound,
    })
}

/// One application of the recursion: `out(x) = max_P sum_j P(v_j) psi(x + v_j)`
/// on every `x` whose shifted points all lie inside `psi`'s grid.
pub fn backstep(psi: &GridFunction, step: &StepModel) -> Result<GridFunction> {
    backstep_impl(psi, step, None)
}

/// [`backstep`] plus the maximizing member at every output point (lowest index
/// on ties).
pub fn backstep_traced(psi: &GridFunction, step: &StepModel) -> Result<(GridFunction, Vec<usize>)> {
    let mut trace = Vec::new();
    let out = backstep_impl(psi, step, Some(&mut trace))?;
    Ok((out, trace))
}

/// Steps `m+1 ..= m+n` (1-based). A single-element slice stands for an
/// identically distributed sequence; otherwise the slice must be long enough.
fn select_steps(steps: &[StepModel], m: usize, n: usize) -> Result<Vec<&StepModel>> {
    if n == 0 {
        return Err(Error::Contract("number of summands must be positive".into()));
    }
    match steps {
        [] => Err(Error::Contract("no step models given".into())),
        [only] => Ok(vec![only; n]),
        _ if steps.len() < m + n => Err(Error::Contract(format!(
            "{} step models cannot cover indices {}..={}",
            steps.len(),
            m + 1,
            m + n
        ))),
        _ => {
            let h = steps[0].spacing;
            if let Some(bad) = steps.iter().find(|s| (s.spacing - h).abs() > 1e-12 * h) {
                return Err(Error::Alignment(format!(
                    "step '{}' uses spacing {}, expected {h}",
                    bad.label(),
                    bad.spacing
                )));
            }
            Ok(steps[m..m + n].iter().collect())
        }
    }
}

/// Lattice index range reachable by the sum of the given steps.
pub fn reachable_range<'a>(steps: impl IntoIterator<Item = &'a StepModel>) -> (i64, i64) {
    steps
        .into_iter()
        .fold((0, 0), |(lo, hi), s| (lo + s.min_offset, hi + s.max_offset))
}

/// Number of (point, member, atom) multiply-adds the recursion performs for
/// `n` summands.
pub fn partial_sum_cost(steps: &[StepModel], n: usize) -> u128 {
    let Ok(sel) = select_steps(steps, 0, n) else {
        return 0;
    };
    let (lo, hi) = reachable_range(sel.iter().copied());
    let width = (hi - lo + 1) as u128;
    sel.iter()
        .map(|s| width * s.members.iter().map(|m| m.len() as u128).sum::<u128>())
        .sum()
}

fn fold_steps(phi: GridFunction, sel: &[&StepModel]) -> Result<f64> {
    let mut cur = phi;
    for step in sel.iter().rev() {
        cur = backstep(&cur, step)?;
    }
    cur.at(0)
        .ok_or_else(|| Error::GridSize("recursion did not reach the origin".into()))
}

/// Upper expectation of `phi(X_{m+1} + .. + X_{m+n})`, sampling `phi` exactly
/// on the reachable lattice range.
pub fn expect_partial_sum(phi: impl Fn(f64) -> f64, steps: &[StepModel], m: usize, n: usize) -> Result<f64> {
    let sel = select_steps(steps, m, n)?;
    let (lo, hi) = reachable_range(sel.iter().copied());
    let grid = LatticeGrid::new(sel[0].spacing, lo, hi)?;
    fold_steps(GridFunction::sample(grid, phi)?, &sel)
}

/// As [`expect_partial_sum`] for an already tabulated `phi`, which must cover
/// the reachable range.
pub fn expect_partial_sum_grid(phi: &GridFunction, steps: &[StepModel], m: usize, n: usize) -> Result<f64> {
    let sel = select_steps(steps, m, n)?;
    if !phi.grid.same_spacing(sel[0].spacing) {
        return Err(Error::Alignment(format!(
            "grid spacing {} differs from step spacing {}",
            phi.grid.spacing, sel[0].spacing
        )));
    }
    let (lo, hi) = reachable_range(sel.iter().copied());
    fold_steps(phi.restrict(lo, hi)?, &sel)
}

/// Upper expectation of `phi(S_n / c)`.
pub fn expect_scaled_sum(phi: impl Fn(f64) -> f64, steps: &[StepModel], n: usize, c: f64) -> Result<f64> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::Contract(format!("scale {c} must be positive")));
    }
    expect_partial_sum(|x| phi(x / c), steps, 0, n)
}

/// `x^r` using exact repeated multiplication when `r` is a small integer.
pub fn pow_abs(x: f64, r: f64) -> f64 {
    let x = x.abs();
    if r.fract() == 0.0 && r.abs() <= 64.0 {
        x.powi(r as i32)
    } else {
        x.powf(r)
    }
}

/// Upper expectation of `max_{i <= n} |S_i|^r` by a recursion over
/// (current sum, running maximum of `|S_i|`).
pub fn max_augmented_expect(r: f64, steps: &[StepModel], n: usize) -> Result<f64> {
    if !(r.is_finite() && r > 2.0) {
        return Err(Error::Contract(format!("moment order {r} must exceed 2")));
    }
    let sel = select_steps(steps, 0, n)?;
    let h = sel[0].spacing;

    // ranges[k] = reachable sum indices after k increments
    let mut ranges = Vec::with_capacity(n + 1);
    ranges.push((0i64, 0i64));
    for s in &sel {
        let (lo, hi) = *ranges.last().unwrap();
        ranges.push((lo + s.min_offset, hi + s.max_offset));
    }
    let cap = |k: usize| -> i64 {
        let (lo, hi) = ranges[k];
        lo.abs().max(hi.abs())
    };
    let states = |k: usize| -> usize {
        let (lo, hi) = ranges[k];
        (hi - lo + 1) as usize * (cap(k) + 1) as usize
    };
    if let Some(k) = (0..=n).find(|&k| states(k) > AUGMENTED_STATE_GUARD) {
        return Err(Error::SizeGuard(format!(
            "{} augmented states after {k} steps exceed the guard of {AUGMENTED_STATE_GUARD}",
            states(k)
        )));
    }

    // value[(s - lo) * (cap + 1) + max]
    let (lo_n, hi_n) = ranges[n];
    let width_n = (cap(n) + 1) as usize;
    let mut next = vec![0.0; states(n)];
    for s in lo_n..=hi_n {
        for mx in s.abs()..=cap(n) {
            next[(s - lo_n) as usize * width_n + mx as usize] = pow_abs(mx as f64 * h, r);
        }
    }

    for k in (0..n).rev() {
        let step = sel[k];
        let (lo, hi) = ranges[k];
        let (nlo, _) = ranges[k + 1];
        let width = (cap(k) + 1) as usize;
        let nwidth = (cap(k + 1) + 1) as usize;
        let mut cur = vec![0.0; states(k)];
        for s in lo..=hi {
            for mx in s.abs()..=cap(k) {
                let mut best = f64::NEG_INFINITY;
                for member in &step.members {
                    let v: f64 = member
                        .iter()
                        .map(|&(o, p)| {
                            let s2 = s + o;
                            let m2 = mx.max(s2.abs());
                            p * next[(s2 - nlo) as usize * nwidth + m2 as usize]
                        })
                        .sum();
                    best = best.max(v);
                }
                cur[(s - lo) as usize * width + mx as usize] = best;
            }
        }
        next = cur;
    }
    Ok(next[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::fixtures::*;
    use crate::scenario::ScenarioSpace;
    use proptest::prelude::*;

    const EPS: f64 = 1e-12;

    fn rad() -> StepModel {
        StepModel::new(variance_uncertain_rademacher(), 1.0).unwrap()
    }

    fn coin() -> StepModel {
        StepModel::new(mean_uncertain_coin(), 1.0).unwrap()
    }

    fn grid_fn(lo: i64, hi: i64, phi: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction::sample(LatticeGrid::new(1.0, lo, hi).unwrap(), phi).unwrap()
    }

    #[test]
    fn identity_step_restricts() {
        let zero = StepModel::new(dirac(0.0), 1.0).unwrap();
        let psi = grid_fn(-3, 3, |x| x * x);
        let out = backstep(&psi, &zero).unwrap();
        assert_eq!(out, psi);
    }

    #[test]
    fn backstep_square_and_abs() {
        let psi = grid_fn(-6, 6, |x| x * x);
        let out = backstep(&psi, &rad()).unwrap();
        assert_eq!((out.grid().lo(), out.grid().hi()), (-4, 4));
        for i in -4..=4 {
            let x = i as f64;
            assert_eq!(out.at(i).unwrap(), x * x + 4.0);
        }
        let psi = grid_fn(-6, 6, f64::abs);
        let out = backstep(&psi, &rad()).unwrap();
        for i in -4..=4 {
            let x = i as f64;
            assert_eq!(out.at(i).unwrap(), x.abs().max(2.0));
        }
    }

    #[test]
    fn backstep_traced_reports_lowest_maximizer() {
        let psi = grid_fn(-6, 6, f64::abs);
        let (_, trace) = backstep_traced(&psi, &rad()).unwrap();
        // |x| >= 2 gives a tie between the two members; |x| < 2 prefers sigma = 2
        assert_eq!(trace, vec![0, 0, 0, 1, 1, 1, 0, 0, 0]);
    }

    #[test]
    fn narrow_grid_is_an_error() {
        let psi = grid_fn(-1, 1, |x| x);
        assert!(matches!(backstep(&psi, &rad()), Err(Error::GridSize(_))));
        let phi = grid_fn(-2, 2, |x| x);
        assert!(matches!(
            expect_partial_sum_grid(&phi, &[rad()], 0, 2),
            Err(Error::GridSize(_))
        ));
    }

    #[test]
    fn misaligned_step_is_rejected() {
        let err = StepModel::new(mean_uncertain_coin(), 0.3).unwrap_err();
        assert!(matches!(err, Error::Alignment(_)));
        let half = StepModel::new(mean_uncertain_coin(), 0.5).unwrap();
        let psi = grid_fn(-4, 4, |x| x);
        assert!(matches!(backstep(&psi, &half), Err(Error::Alignment(_))));
    }

    #[test]
    fn partial_sum_examples() {
        let a = variance_uncertain_rademacher();
        let one = expect_partial_sum(|x| x.abs(), &[rad()], 0, 1).unwrap();
        assert_eq!(one, a.sublinear_expect(f64::abs).unwrap());
        assert_eq!(expect_partial_sum(|x| x * x, &[rad()], 0, 2).unwrap(), 8.0);
        let v = expect_partial_sum(|x| x, &[coin()], 0, 3).unwrap();
        assert!((v - 0.6).abs() < EPS);
    }

    #[test]
    fn scaled_sum_examples() {
        for n in [1usize, 2, 3, 4, 7, 16] {
            let v = expect_scaled_sum(|x| x * x, &[rad()], n, (n as f64).sqrt()).unwrap();
            assert!((v - 4.0).abs() < EPS, "n = {n}: {v}");
            let v = expect_scaled_sum(|x| x, &[coin()], n, n as f64).unwrap();
            assert!((v - 0.2).abs() < EPS);
        }
        let v = expect_scaled_sum(f64::abs, &[rad()], 2, 2f64.sqrt()).unwrap();
        assert!((v - 2f64.sqrt()).abs() < EPS);
        assert!(expect_scaled_sum(f64::abs, &[rad()], 2, 0.0).is_err());
    }

    #[test]
    fn explicit_step_sequences() {
        let seq = vec![coin(), rad(), coin()];
        let v = expect_partial_sum(|x| x, &seq, 0, 3).unwrap();
        assert!((v - 0.4).abs() < EPS);
        assert!(expect_partial_sum(|x| x, &seq, 1, 3).is_err());
    }

    #[test]
    fn max_augmented_examples() {
        let a = variance_uncertain_rademacher();
        let v = max_augmented_expect(3.0, &[rad()], 1).unwrap();
        assert_eq!(v, a.sublinear_expect(|x| x.abs().powi(3)).unwrap());

        let zero = StepModel::new(dirac(0.0), 1.0).unwrap();
        assert_eq!(max_augmented_expect(4.5, &[zero], 10).unwrap(), 0.0);

        let dp = max_augmented_expect(3.0, &[rad()], 2).unwrap();
        let space = ScenarioSpace::iid(&a, 2).unwrap();
        let oracle = space
            .strategy_sup(|w| w[0].abs().max((w[0] + w[1]).abs()).powi(3))
            .unwrap()
            .value;
        assert!((dp - oracle).abs() < EPS);

        assert!(max_augmented_expect(2.0, &[rad()], 2).is_err());
    }

    #[test]
    fn augmented_state_guard() {
        let wide = StepModel::new(
            crate::measure::AmbiguitySet::singleton(
                "wide",
                crate::measure::DiscreteDistribution::uniform(vec![-500.0, 500.0]).unwrap(),
            ),
            1.0,
        )
        .unwrap();
        assert!(matches!(
            max_augmented_expect(3.0, &[wide], 10),
            Err(Error::SizeGuard(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn lipschitz_bound_propagates(
            vals in prop::collection::vec(-1.0f64..1.0, 21),
            use_coin in any::<bool>(),
        ) {
            // random walk values with increments in [-1, 1] -> Lipschitz 1
            let mut acc = 0.0;
            let values: Vec<f64> = vals.iter().map(|d| { acc += d; acc }).collect();
            let grid = LatticeGrid::new(1.0, -10, 10).unwrap();
            let mut psi = GridFunction::new(grid, values).unwrap().with_lip_bound(1.0).unwrap();
            let step = if use_coin { coin() } else { rad() };
            while psi.grid().len() > 4 {
                psi = backstep(&psi, &step).unwrap();
                prop_assert!(psi.satisfies_lip_bound());
                prop_assert_eq!(psi.lip_bound(), Some(1.0));
            }
        }

        #[test]
        fn monotone_subadditive_constant(
            c in prop::collection::vec(-2.0f64..2.0, 4),
            d in prop::collection::vec(-2.0f64..2.0, 4),
            k in -3.0f64..3.0,
            n in 1usize..6,
        ) {
            let f = |x: f64| c[0] * x + c[1] * x.abs() + c[2] * (x * 0.5).sin() + c[3] * x * x;
            let g = |x: f64| d[0] * x + d[1] * x.abs() + d[2] * (x * 0.5).sin() + d[3] * x * x;
            let steps = [rad()];
            let ef = expect_partial_sum(f, &steps, 0, n).unwrap();
            let eg = expect_partial_sum(g, &steps, 0, n).unwrap();
            let efg = expect_partial_sum(|x| f(x) + g(x), &steps, 0, n).unwrap();
            prop_assert!(efg <= ef + eg + 1e-9);
            let bigger = expect_partial_sum(|x| f(x) + x * x + 1.0, &steps, 0, n).unwrap();
            prop_assert!(bigger >= ef);
            prop_assert_eq!(expect_partial_sum(|_| k, &steps, 0, n).unwrap(), k);
        }
    }
}
