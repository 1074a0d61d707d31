//! Checkers for the identical-distribution, independence and convolution
//! identities on two-coordinate joint families.

use super::{ScenarioSpace, STRATEGY_GUARD};
use crate::error::{Error, Result};
use crate::phi::cutoff;

/// A family of joint laws on a two-coordinate product, with upper expectation
/// the supremum over the family.
#[derive(Debug, Clone)]
pub enum JointFamily {
    /// All adapted kernel strategies: the second coordinate's member may depend
    /// on the first outcome. Its upper expectation is the nested product one.
    Kernel(ScenarioSpace),
    /// Only product measures `P_1 x P_2` with each factor drawn from its step.
    ProductOnly(ScenarioSpace),
}

impl JointFamily {
    pub fn space(&self) -> &ScenarioSpace {
        match self {
            JointFamily::Kernel(s) | JointFamily::ProductOnly(s) => s,
        }
    }

    pub fn expect(&self, f: impl Fn(&[f64]) -> f64) -> Result<f64> {
        match self {
            JointFamily::Kernel(s) => s.product_expect(f),
            JointFamily::ProductOnly(s) => {
                let count: u128 = s.steps().iter().map(|a| a.len() as u128).product();
                if count > STRATEGY_GUARD {
                    return Err(Error::SizeGuard(format!(
                        "{count} product measures exceed the guard"
                    )));
                }
                let members: Vec<usize> = s.steps().iter().map(|a| a.len()).collect();
                let mut pick = vec![0usize; members.len()];
                let mut best = f64::NEG_INFINITY;
                loop {
                    let strat = super::KernelStrategy::constant(s, &pick);
                    best = best.max(s.strategy_expect(&f, &strat)?);
                    let mut k = pick.len();
                    loop {
                        if k == 0 {
                            return Ok(best);
                        }
                        k -= 1;
                        pick[k] += 1;
                        if pick[k] < members[k] {
                            break;
                        }
                        pick[k] = 0;
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentityKind {
    /// `E[phi(X_1)] = E[phi(X_2)]`.
    IdenticalDistribution,
    /// `E[f(X, Y)] = E[E[f(x, Y)]_{x=X}]`.
    Independence,
    /// `E[phi(X + Y)] = E[E[phi(x + Y)]_{x=X}]`.
    Convolution,
    /// `E[XY] = E[X] E[Y]` under `X >= 0` and `E[Y] >= 0`.
    RemarkProduct,
}

type Univariate = Box<dyn Fn(f64) -> f64 + Send + Sync>;
type Bivariate = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Named test functions. Bivariate entries drive the independence check,
/// univariate ones the identical-distribution and convolution checks.
pub struct IdentitySuite {
    pub bivariate: Vec<(String, Bivariate)>,
    pub univariate: Vec<(String, Univariate)>,
}

impl IdentitySuite {
    /// Monomials `x^a y^b` with `a + b <= 3`, `|x+y|`, `max(x,y)`, and the
    /// piecewise-linear cutoff (eps = 1, sigma = 1) of `x+y`; univariate powers
    /// up to 3, `|s|` and the cutoff.
    pub fn default_suite() -> Self {
        let mut bivariate: Vec<(String, Bivariate)> = Vec::new();
        for deg in 0..=3i32 {
            for a in (0..=deg).rev() {
                let b = deg - a;
                bivariate.push((
                    format!("x^{a}y^{b}"),
                    Box::new(move |x: f64, y: f64| x.powi(a) * y.powi(b)),
                ));
            }
        }
        bivariate.push(("|x+y|".into(), Box::new(|x: f64, y: f64| (x + y).abs())));
        bivariate.push(("max(x,y)".into(), Box::new(|x: f64, y: f64| x.max(y))));
        bivariate.push(("cutoff(x+y)".into(), Box::new(|x: f64, y: f64| cutoff(x + y, 1.0, 1.0))));

        let univariate: Vec<(String, Univariate)> = vec![
            ("s".into(), Box::new(|s: f64| s)),
            ("s^2".into(), Box::new(|s: f64| s * s)),
            ("s^3".into(), Box::new(|s: f64| s * s * s)),
            ("|s|".into(), Box::new(f64::abs)),
            ("cutoff(s)".into(), Box::new(|s: f64| cutoff(s, 1.0, 1.0))),
        ];
        Self {
            bivariate,
            univariate,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityRow {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    pub kind: IdentityKind,
    pub rows: Vec<IdentityRow>,
}

impl IdentityReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn row(&self, name: &str) -> Option<&IdentityRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

/// `E[g(x, Y)]` for every support point `x` of the first coordinate, then the
/// outer expectation of that table as a function of `X`.
fn nested_two(family: &JointFamily, g: impl Fn(f64, f64) -> f64) -> Result<f64> {
    let first = family.space().steps()[0].support().to_vec();
    let inner = first
        .iter()
        .map(|&x| family.expect(|w| g(x, w[1])))
        .collect::<Result<Vec<f64>>>()?;
    family.expect(|w| {
        let i = first
            .iter()
            .position(|&x| x == w[0])
            .expect("first coordinate ranges over its support");
        inner[i]
    })
}

/// Evaluates both sides of a defining identity for every suite function.
pub fn check_identity(
    kind: IdentityKind,
    family: &JointFamily,
    suite: &IdentitySuite,
    tol: f64,
) -> Result<IdentityReport> {
    if family.space().horizon() != 2 {
        return Err(Error::Contract(format!(
            "identity checks need a two-coordinate space, got {}",
            family.space().horizon()
        )));
    }
    let row = |name: &str, lhs: f64, rhs: f64| IdentityRow {
        name: name.to_string(),
        lhs,
        rhs,
        pass: (lhs - rhs).abs() <= tol,
    };

    let mut rows = Vec::new();
    match kind {
        IdentityKind::IdenticalDistribution => {
            for (name, phi) in &suite.univariate {
                let lhs = family.expect(|w| phi(w[0]))?;
                let rhs = family.expect(|w| phi(w[1]))?;
                rows.push(row(name, lhs, rhs));
            }
        }
        IdentityKind::Independence => {
            for (name, f) in &suite.bivariate {
                let lhs = family.expect(|w| f(w[0], w[1]))?;
                let rhs = nested_two(family, f)?;
                rows.push(row(name, lhs, rhs));
            }
        }
        IdentityKind::Convolution => {
            for (name, phi) in &suite.univariate {
                let lhs = family.expect(|w| phi(w[0] + w[1]))?;
                let rhs = nested_two(family, |x, y| phi(x + y))?;
                rows.push(row(name, lhs, rhs));
            }
        }
        IdentityKind::RemarkProduct => {
            let first = &family.space().steps()[0];
            if let Some(x) = first.support().iter().find(|&&x| x < 0.0) {
                return Err(Error::Precondition(format!(
                    "X >= 0 fails: support point {x} of the first coordinate is negative"
                )));
            }
            let mean_y = family.expect(|w| w[1])?;
            if mean_y < 0.0 {
                return Err(Error::Precondition(format!(
                    "E[Y] >= 0 fails: upper mean of the second coordinate is {mean_y}"
                )));
            }
            let lhs = family.expect(|w| w[0] * w[1])?;
            let rhs = family.expect(|w| w[0])? * mean_y;
            rows.push(row("xy", lhs, rhs));
        }
    }
    Ok(IdentityReport { kind, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::fixtures::*;
    use crate::measure::{AmbiguitySet, DiscreteDistribution};

    const TOL: f64 = 1e-12;

    fn coin_space() -> ScenarioSpace {
        ScenarioSpace::iid(&mean_uncertain_coin(), 2).unwrap()
    }

    #[test]
    fn kernel_family_passes_everything() {
        let fam = JointFamily::Kernel(coin_space());
        let suite = IdentitySuite::default_suite();
        for kind in [
            IdentityKind::IdenticalDistribution,
            IdentityKind::Independence,
            IdentityKind::Convolution,
        ] {
            let rep = check_identity(kind, &fam, &suite, TOL).unwrap();
            assert!(rep.all_pass(), "{kind:?}: {:?}", rep.rows);
        }
    }

    #[test]
    fn product_only_family_fails_independence_and_convolution() {
        let fam = JointFamily::ProductOnly(coin_space());
        let suite = IdentitySuite::default_suite();

        let rep = check_identity(IdentityKind::Independence, &fam, &suite, TOL).unwrap();
        let xy = rep.row("x^1y^1").unwrap();
        assert!((xy.lhs - 0.04).abs() < TOL && (xy.rhs - 0.2).abs() < TOL && !xy.pass);

        let rep = check_identity(IdentityKind::Convolution, &fam, &suite, TOL).unwrap();
        let abs = rep.row("|s|").unwrap();
        assert!((abs.lhs - 1.04).abs() < TOL && (abs.rhs - 1.2).abs() < TOL && !abs.pass);

        // the marginals still agree
        let rep = check_identity(IdentityKind::IdenticalDistribution, &fam, &suite, TOL).unwrap();
        assert!(rep.all_pass());
    }

    #[test]
    fn remark_product_checks_hypotheses() {
        let suite = IdentitySuite::default_suite();
        let fam = JointFamily::Kernel(coin_space());
        let err = check_identity(IdentityKind::RemarkProduct, &fam, &suite, TOL).unwrap_err();
        assert!(matches!(err, Error::Precondition(ref m) if m.contains("X >= 0")));

        let pos = AmbiguitySet::new(
            "pos",
            vec![
                DiscreteDistribution::new(vec![0.0, 1.0], vec![0.3, 0.7]).unwrap(),
                DiscreteDistribution::new(vec![0.0, 1.0], vec![0.8, 0.2]).unwrap(),
            ],
        )
        .unwrap();
        let space = ScenarioSpace::new(vec![pos, mean_uncertain_coin()]).unwrap();
        let rep = check_identity(IdentityKind::RemarkProduct, &JointFamily::Kernel(space.clone()), &suite, TOL)
            .unwrap();
        assert!(rep.all_pass(), "{:?}", rep.rows);
        assert!((rep.rows[0].rhs - 0.7 * 0.2).abs() < TOL);

        let neg_mean = ScenarioSpace::new(vec![space.steps()[0].clone(), mean_uncertain_coin().negated()])
            .unwrap();
        let shifted = AmbiguitySet::new(
            "down",
            vec![DiscreteDistribution::new(vec![-1.0, 1.0], vec![0.7, 0.3]).unwrap()],
        )
        .unwrap();
        let neg = ScenarioSpace::new(vec![neg_mean.steps()[0].clone(), shifted]).unwrap();
        let err = check_identity(IdentityKind::RemarkProduct, &JointFamily::Kernel(neg), &suite, TOL)
            .unwrap_err();
        assert!(matches!(err, Error::Precondition(ref m) if m.contains("E[Y]")));
    }

    #[test]
    fn needs_two_coordinates() {
        let fam = JointFamily::Kernel(ScenarioSpace::iid(&mean_uncertain_coin(), 3).unwrap());
        let suite = IdentitySuite::default_suite();
        assert!(check_identity(IdentityKind::Convolution, &fam, &suite, TOL).is_err());
    }
}
