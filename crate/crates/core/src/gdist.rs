//! The two limit laws: maximal distributions and one-dimensional G-normal
//! distributions.
//!
//! A maximal law over a bounded convex set `Gamma` has upper expectation
//! `max_{x in Gamma} phi(x)`. A G-normal law with variance bounds
//! `[sigma_lo^2, sigma_hi^2]` has `E[phi(X)] = u(1, 0)` where
//! `u_t = G(u_xx)`, `u(0, .) = phi` and `G(a) = (sigma_hi^2 a^+ - sigma_lo^2 a^-) / 2`.
//! That PDE is solved here with an explicit finite-difference scheme.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::MomentSummary;

/// Number of subintervals in the coarse scan of an interval.
const MAXIMAL_SCAN_INTERVALS: usize = 10_000;

/// Agreement tolerance for [`characterize_match`].
pub const MATCH_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MaximalParams {
    /// `Gamma = [lo, hi]` on the real line.
    Interval { lo: f64, hi: f64 },
    /// Convex hull of finitely many points in `R^d`.
    Points(Vec<Vec<f64>>),
}

impl MaximalParams {
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Contract(format!("invalid interval [{lo}, {hi}]")));
        }
        Ok(Self::Interval { lo, hi })
    }

    pub fn points(points: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::Contract("empty point set".into()));
        };
        let d = first.len();
        if d == 0 || points.iter().any(|p| p.len() != d) {
            return Err(Error::Contract("points must share a positive dimension".into()));
        }
        Ok(Self::Points(points))
    }

    /// `Gamma = [lower mean, upper mean]`.
    pub fn from_moments(m: &MomentSummary) -> Self {
        Self::Interval {
            lo: m.lower_mean,
            hi: m.upper_mean,
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Self::Interval { .. } => 1,
            Self::Points(p) => p[0].len(),
        }
    }

    fn support_function(&self, dir: &[f64]) -> f64 {
        match self {
            Self::Interval { lo, hi } => (dir[0] * lo).max(dir[0] * hi),
            Self::Points(pts) => pts
                .iter()
                .map(|p| p.iter().zip(dir).map(|(a, b)| a * b).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// `max_{x in Gamma} phi(x)`.
///
/// Intervals are scanned on a uniform grid of `10^4 + 1` points and the best
/// grid point is refined by golden-section search on its two neighbouring
/// cells. Point sets are maximized exactly over their points, which is exact
/// for the convex-hull maximum whenever `phi` is convex.
pub fn maximal_expect(phi: impl Fn(&[f64]) -> f64, params: &MaximalParams) -> f64 {
    match params {
        MaximalParams::Interval { lo, hi } => maximize_interval(|x| phi(&[x]), *lo, *hi),
        MaximalParams::Points(pts) => pts.iter().map(|p| phi(p)).fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Scalar form of [`maximal_expect`] for one-dimensional parameters.
pub fn maximal_expect_1d(phi: impl Fn(f64) -> f64, params: &MaximalParams) -> Result<f64> {
    if params.dimension() != 1 {
        return Err(Error::Contract(format!(
            "scalar function on a {}-dimensional maximal law",
            params.dimension()
        )));
    }
    Ok(maximal_expect(|x| phi(x[0]), params))
}

fn maximize_interval(phi: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        return phi(lo);
    }
    let n = MAXIMAL_SCAN_INTERVALS;
    let at = |i: usize| if i == n { hi } else { lo + (hi - lo) * i as f64 / n as f64 };
    let (mut best_i, mut best) = (0, phi(lo));
    for i in 1..=n {
        let v = phi(at(i));
        if v > best {
            best = v;
            best_i = i;
        }
    }

    let (mut a, mut b) = (at(best_i.saturating_sub(1)), at((best_i + 1).min(n)));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (phi(c), phi(d));
    for _ in 0..80 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = phi(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = phi(d);
        }
    }
    best.max(fc).max(fd)
}

/// Variance bounds of a one-dimensional G-normal law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GNormalParams {
    sigma_lo_sq: f64,
    sigma_hi_sq: f64,
}

impl GNormalParams {
    pub fn new(sigma_lo_sq: f64, sigma_hi_sq: f64) -> Result<Self> {
        if !(sigma_lo_sq.is_finite() && sigma_hi_sq.is_finite() && 0.0 <= sigma_lo_sq && sigma_lo_sq <= sigma_hi_sq) {
            return Err(Error::Contract(format!(
                "need 0 <= sigma_lo^2 <= sigma_hi^2, got [{sigma_lo_sq}, {sigma_hi_sq}]"
            )));
        }
        Ok(Self {
            sigma_lo_sq,
            sigma_hi_sq,
        })
    }

    /// `[lower second moment, upper second moment]`.
    pub fn from_moments(m: &MomentSummary) -> Result<Self> {
        Self::new(m.lower_sq, m.upper_sq)
    }

    pub fn sigma_lo_sq(&self) -> f64 {
        self.sigma_lo_sq
    }

    pub fn sigma_hi_sq(&self) -> f64 {
        self.sigma_hi_sq
    }

    pub fn sigma_hi(&self) -> f64 {
        self.sigma_hi_sq.sqrt()
    }

    /// `G(a) = (sigma_hi^2 a^+ - sigma_lo^2 a^-) / 2`.
    pub fn g(&self, a: f64) -> f64 {
        0.5 * (self.sigma_hi_sq * a.max(0.0) - self.sigma_lo_sq * (-a).max(0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// Edge nodes keep their initial values for all time.
    #[default]
    ClampToInitial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatSolveConfig {
    pub half_width: f64,
    pub dx: f64,
    pub dt: f64,
    #[serde(default)]
    pub boundary: Boundary,
    pub horizon: f64,
}

impl HeatSolveConfig {
    /// `L = 8 sigma_hi`, `dx = sigma_hi / 100`, `dt = 0.4 dx^2 / sigma_hi^2`, `T = 1`.
    pub fn default_for(params: &GNormalParams) -> Self {
        let s = if params.sigma_hi_sq > 0.0 { params.sigma_hi() } else { 1.0 };
        let dx = s / 100.0;
        Self {
            half_width: 8.0 * s,
            dx,
            dt: 0.4 * dx * dx / (s * s),
            boundary: Boundary::ClampToInitial,
            horizon: 1.0,
        }
    }

    /// Same grid with the half-width widened to cover a longer horizon.
    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.half_width *= horizon.sqrt().max(1.0);
        self.horizon = horizon;
        self
    }

    pub fn validate(&self, params: &GNormalParams) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("dx", self.dx)?;
        positive("dt", self.dt)?;
        positive("half_width", self.half_width)?;
        positive("horizon", self.horizon)?;
        let s2 = params.sigma_hi_sq;
        if s2 > 0.0 && self.dt > self.dx * self.dx / s2 {
            return Err(Error::Config(format!(
                "explicit scheme unstable: dt = {} exceeds dx^2 / sigma_hi^2 = {}",
                self.dt,
                self.dx * self.dx / s2
            )));
        }
        let need = 6.0 * s2.sqrt() * self.horizon.sqrt();
        if self.half_width < need {
            return Err(Error::Config(format!(
                "half_width {} below 6 sigma_hi sqrt(T) = {need}",
                self.half_width
            )));
        }
        if self.dx > self.half_width {
            return Err(Error::Config("dx larger than half_width".into()));
        }
        Ok(())
    }
}

/// `E[phi(X)]` for `X` G-normal with the given parameters, i.e. `u(T, 0)`.
///
/// Explicit scheme `u <- u + dt G(D2 u)` on the nodes `i dx`, `|i| <= ceil(L/dx)`,
/// with the edge nodes held at their initial values. The time step is shrunk so
/// that a whole number of steps lands exactly on `T`.
pub fn g_normal_expect(phi: impl Fn(f64) -> f64, params: &GNormalParams, cfg: &HeatSolveConfig) -> Result<f64> {
    cfg.validate(params)?;
    let eval = |x: f64| {
        let v = phi(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain(format!("initial condition undefined at {x}")))
        }
    };
    if params.sigma_hi_sq == 0.0 {
        return eval(0.0);
    }

    let half = (cfg.half_width / cfg.dx).ceil() as usize;
    let mut u = (0..=2 * half)
        .map(|i| eval((i as f64 - half as f64) * cfg.dx))
        .collect::<Result<Vec<f64>>>()?;
    let steps = (cfg.horizon / cfg.dt - 1e-9).ceil().max(1.0) as usize;
    let dt = cfg.horizon / steps as f64;
    let inv_dx2 = 1.0 / (cfg.dx * cfg.dx);

    let mut next = u.clone();
    for _ in 0..steps {
        for i in 1..u.len() - 1 {
            let d2 = (u[i + 1] - 2.0 * u[i] + u[i - 1]) * inv_dx2;
            next[i] = u[i] + dt * params.g(d2);
        }
        std::mem::swap(&mut u, &mut next);
    }
    Ok(u[half])
}

/// Limit-law parameters compared by [`characterize_match`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LimitLaw {
    GNormal(GNormalParams),
    Maximal(MaximalParams),
}

/// Directions `+-e_i`, `(+-e_i +- e_j)/sqrt 2` for `i < j`, and `+-(1,..,1)/sqrt d`.
pub fn direction_set(d: usize) -> Vec<Vec<f64>> {
    let unit = |i: usize, s: f64| {
        let mut v = vec![0.0; d];
        v[i] = s;
        v
    };
    let mut dirs = Vec::new();
    for i in 0..d {
        dirs.push(unit(i, 1.0));
        dirs.push(unit(i, -1.0));
    }
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..d {
        for j in i + 1..d {
            for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut v = vec![0.0; d];
                v[i] = si * r;
                v[j] = sj * r;
                dirs.push(v);
            }
        }
    }
    if d > 2 {
        let c = 1.0 / (d as f64).sqrt();
        dirs.push(vec![c; d]);
        dirs.push(vec![-c; d]);
    }
    dirs
}

/// Whether two limit laws are identically distributed, judged by `G` on
/// `{-1, +1}` (G-normal) or by support functions (maximal). For point sets in
/// more than one dimension the finite direction set can only under-approximate
/// the full comparison.
pub fn characterize_match(a: &LimitLaw, b: &LimitLaw) -> Result<bool> {
    let close = |x: f64, y: f64| (x - y).abs() <= MATCH_TOLERANCE;
    match (a, b) {
        (LimitLaw::GNormal(a), LimitLaw::GNormal(b)) => {
            Ok([-1.0, 1.0].iter().all(|&t| close(a.g(t), b.g(t))))
        }
        (LimitLaw::Maximal(a), LimitLaw::Maximal(b)) => {
            if a.dimension() != b.dimension() {
                return Err(Error::Contract(format!(
                    "dimension mismatch: {} vs {}",
                    a.dimension(),
                    b.dimension()
                )));
            }
            if let (MaximalParams::Interval { lo: a0, hi: a1 }, MaximalParams::Interval { lo: b0, hi: b1 }) = (a, b) {
                return Ok(close(*a0, *b0) && close(*a1, *b1));
            }
            Ok(direction_set(a.dimension())
                .iter()
                .all(|p| close(a.support_function(p), b.support_function(p))))
        }
        _ => Err(Error::Contract("cannot compare a G-normal law with a maximal law".into())),
    }
}
