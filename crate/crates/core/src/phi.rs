//! Named test functions with their regularity class.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionClass {
    /// Bounded and globally Lipschitz.
    BoundedLipschitz,
    /// Continuous with `|phi(x)| <= C (1 + |x|)`.
    LinearGrowth,
    /// Polynomial growth beyond linear, e.g. `x^2`. Fine on finite lattices,
    /// outside the class the truncation argument covers.
    PolynomialGrowth,
}

#[derive(Clone)]
pub struct TestFunction {
    name: String,
    class: FunctionClass,
    lip_bound: Option<f64>,
    sup_bound: Option<f64>,
    eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("class", &self.class)
            .field("lip_bound", &self.lip_bound)
            .field("sup_bound", &self.sup_bound)
            .finish()
    }
}

impl TestFunction {
    pub fn bounded_lipschitz(
        name: impl Into<String>,
        lip: f64,
        sup: f64,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            class: FunctionClass::BoundedLipschitz,
            lip_bound: Some(lip),
            sup_bound: Some(sup),
            eval: Arc::new(f),
        }
    }

    pub fn linear_growth(name: impl Into<String>, lip: Option<f64>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            class: FunctionClass::LinearGrowth,
            lip_bound: lip,
            sup_bound: None,
            eval: Arc::new(f),
        }
    }

    pub fn polynomial(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            class: FunctionClass::PolynomialGrowth,
            lip_bound: None,
            sup_bound: None,
            eval: Arc::new(f),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn class(&self) -> FunctionClass {
        self.class
    }

    pub fn lip_bound(&self) -> Option<f64> {
        self.lip_bound
    }

    pub fn sup_bound(&self) -> Option<f64> {
        self.sup_bound
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    /// Borrowable closure form.
    pub fn as_fn(&self) -> impl Fn(f64) -> f64 + '_ {
        move |x| (self.eval)(x)
    }

    /// `max(-m, min(phi, m))`, bounded with the same Lipschitz constant.
    pub fn clamped(&self, m: f64) -> Result<Self> {
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::Contract(format!("cutoff level {m} must be positive")));
        }
        let inner = Arc::clone(&self.eval);
        Ok(Self {
            name: format!("clamp({}, {m})", self.name),
            class: FunctionClass::BoundedLipschitz,
            lip_bound: self.lip_bound,
            sup_bound: Some(self.sup_bound.map_or(m, |s| s.min(m))),
            eval: Arc::new(move |x| inner(x).clamp(-m, m)),
        })
    }
}

/// Piecewise-linear cutoff: 0 up to `(1 + eps/2) sigma`, 1 beyond
/// `(1 + eps) sigma`, linear with slope `2 / (eps sigma)` in between.
pub fn cutoff(x: f64, eps: f64, sigma: f64) -> f64 {
    let lo = (1.0 + eps / 2.0) * sigma;
    let hi = (1.0 + eps) * sigma;
    if x <= lo {
        0.0
    } else if x <= hi {
        2.0 / (eps * sigma) * (x - lo)
    } else {
        1.0
    }
}

/// Distance from `x` to `[lo, hi]`, capped at 1.
pub fn band_distance(x: f64, lo: f64, hi: f64) -> f64 {
    (lo - x).max(x - hi).clamp(0.0, 1.0)
}

/// Functions that need no parameters, by name.
///
/// `x`, `x^2`, `-x^2`, `x^4`, `|x|`, `(x-1)^2`, `exp(-x^2)`, `clamp(x^3)`,
/// `clip(x)`, `min(|x|,1)`, `sin(x)`, `cos(x)`.
pub fn standard(name: &str) -> Option<TestFunction> {
    let f = match name {
        "x" => TestFunction::linear_growth(name, Some(1.0), |x| x),
        "x^2" => TestFunction::polynomial(name, |x| x * x),
        "-x^2" => TestFunction::polynomial(name, |x| -x * x),
        "x^4" => TestFunction::polynomial(name, |x| x.powi(4)),
        "|x|" => TestFunction::linear_growth(name, Some(1.0), f64::abs),
        "(x-1)^2" => TestFunction::polynomial(name, |x| (x - 1.0) * (x - 1.0)),
        "exp(-x^2)" => TestFunction::bounded_lipschitz(name, (2.0 / std::f64::consts::E).sqrt(), 1.0, |x| {
            (-x * x).exp()
        }),
        "clamp(x^3)" => TestFunction::bounded_lipschitz(name, 3.0, 1.0, |x| (x * x * x).clamp(-1.0, 1.0)),
        "clip(x)" => TestFunction::bounded_lipschitz(name, 1.0, 1.0, |x| x.clamp(-1.0, 1.0)),
        "min(|x|,1)" => TestFunction::bounded_lipschitz(name, 1.0, 1.0, |x| x.abs().min(1.0)),
        "sin(x)" => TestFunction::bounded_lipschitz(name, 1.0, 1.0, f64::sin),
        "cos(x)" => TestFunction::bounded_lipschitz(name, 1.0, 1.0, f64::cos),
        _ => return None,
    };
    Some(f)
}

/// Names accepted by [`standard`].
pub const STANDARD_NAMES: &[&str] = &[
    "x",
    "x^2",
    "-x^2",
    "x^4",
    "|x|",
    "(x-1)^2",
    "exp(-x^2)",
    "clamp(x^3)",
    "clip(x)",
    "min(|x|,1)",
    "sin(x)",
    "cos(x)",
];

/// The cutoff as a bounded Lipschitz test function.
pub fn cutoff_fn(eps: f64, sigma: f64) -> Result<TestFunction> {
    if !(eps.is_finite() && eps > 0.0 && sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Contract(format!(
            "cutoff needs eps > 0 and sigma > 0, got eps = {eps}, sigma = {sigma}"
        )));
    }
    Ok(TestFunction::bounded_lipschitz(
        format!("cutoff(eps={eps},sigma={sigma})"),
        2.0 / (eps * sigma),
        1.0,
        move |x| cutoff(x, eps, sigma),
    ))
}

/// `min(dist(x, [lo, hi]), 1)`.
pub fn band_distance_fn(lo: f64, hi: f64) -> TestFunction {
    TestFunction::bounded_lipschitz(format!("dist(x,[{lo},{hi}])"), 1.0, 1.0, move |x| band_distance(x, lo, hi))
}

/// `x`, `x^2`, `|x|`, `(x-1)^2`, `exp(-x^2)`, the cutoff with `eps = 1` at the
/// given `sigma`, and `clamp(x^3)`.
pub fn default_suite(sigma_hi: f64) -> Vec<TestFunction> {
    let mut suite: Vec<TestFunction> = ["x", "x^2", "|x|", "(x-1)^2", "exp(-x^2)"]
        .iter()
        .map(|n| standard(n).unwrap())
        .collect();
    if sigma_hi > 0.0 {
        suite.push(cutoff_fn(1.0, sigma_hi).expect("positive parameters"));
    }
    suite.push(standard("clamp(x^3)").unwrap());
    suite
}
