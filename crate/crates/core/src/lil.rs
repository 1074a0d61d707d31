//! Finite-scale ingredients of the law of the iterated logarithm: the
//! normalizer `a_n`, the geometric schedule `n_k`, smoothed capacity tails,
//! block-maximum moments and Borel–Cantelli tail sums.

use serde::{Deserialize, Serialize};

use crate::convolution::{expect_scaled_sum, max_augmented_expect, partial_sum_cost, reachable_range, StepModel};
use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::harness::{clt_params, HARNESS_COST_GUARD};
use crate::phi::{cutoff, cutoff_fn, TestFunction};

pub const TAIL_CSV_HEADER: &str = "k,n_k,a_nk,smoothed_cap,chebyshev_bound,partial_sum";
pub const BLOCK_CSV_HEADER: &str = "k,block_len,mk_moment,cheb_term";

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_P: f64 = 4.0;
pub const DEFAULT_EPS_GRID: &[f64] = &[0.25, 0.5, 1.0];

/// `sqrt(2 n ln ln n)`.
pub fn a_n(n: u64) -> Result<f64> {
    if n < 3 {
        return Err(Error::Domain(format!("a_n needs n >= 3, got {n}")));
    }
    let n = n as f64;
    Ok((2.0 * n * n.ln().ln()).sqrt())
}

/// `cutoff(x)` with parameters `eps` and `sigma`, see [`crate::phi::cutoff`].
pub fn cutoff_phi(eps: f64, sigma: f64) -> Result<TestFunction> {
    cutoff_fn(eps, sigma)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LilSchedule {
    pub alpha: f64,
    pub k_min: u32,
    pub k_max: u32,
    /// `(k, n_k)` with repeated `n_k` removed, keeping the first `k`.
    pub entries: Vec<(u32, u64)>,
    pub warnings: Vec<String>,
}

impl LilSchedule {
    pub fn n_values(&self) -> Vec<u64> {
        self.entries.iter().map(|&(_, n)| n).collect()
    }

    pub fn a(&self, n: u64) -> Result<f64> {
        a_n(n)
    }

    /// `a_{n_k} / a_{n_{k+1}}` for consecutive entries.
    pub fn a_ratios(&self) -> Vec<f64> {
        self.entries
            .windows(2)
            .map(|w| a_n(w[0].1).unwrap() / a_n(w[1].1).unwrap())
            .collect()
    }
}

/// `n_k = floor(e^{k^alpha})` for `k_min <= k <= k_max`.
pub fn nk_schedule(alpha: f64, k_min: u32, k_max: u32) -> Result<LilSchedule> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if k_min > k_max {
        return Err(Error::Domain(format!("empty k range [{k_min}, {k_max}]")));
    }
    let mut entries: Vec<(u32, u64)> = Vec::new();
    let mut warnings = Vec::new();
    for k in k_min..=k_max {
        let v = (k as f64).powf(alpha).exp().floor();
        if v >= u64::MAX as f64 {
            return Err(Error::Domain(format!("n_k overflows at k = {k}")));
        }
        let n = v as u64;
        if n < 3 {
            warnings.push(format!("k = {k}: n_k = {n} is below 3 and dropped"));
            continue;
        }
        if entries.last().is_some_and(|&(_, last)| last == n) {
            continue;
        }
        entries.push((k, n));
    }
    Ok(LilSchedule {
        alpha,
        k_min,
        k_max,
        entries,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub k: u32,
    pub n_k: u64,
    pub a_nk: f64,
    /// `E[cutoff(S_{n_k} / a_{n_k})]`.
    pub smoothed_cap: f64,
    /// `E[(S_{n_k} / a_{n_k})^2] / ((1 + eps/2) sigma_hi)^2`.
    pub chebyshev_bound: f64,
    pub partial_sum: f64,
    /// Upper capacity of `S/a > (1 + eps) sigma_hi`.
    pub capacity_outer: f64,
    /// Upper capacity of `S/a > (1 + eps/2) sigma_hi`.
    pub capacity_inner: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub fixture: String,
    pub eps: f64,
    pub sigma_hi: f64,
    pub rows: Vec<TailRow>,
    pub warnings: Vec<String>,
    pub truncated: bool,
}

impl TailReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{TAIL_CSV_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.k,
                r.n_k,
                fmt_f64(r.a_nk),
                fmt_f64(r.smoothed_cap),
                fmt_f64(r.chebyshev_bound),
                fmt_f64(r.partial_sum)
            ));
        }
        out
    }

    pub fn series(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.smoothed_cap).collect()
    }

    /// `capacity_outer <= smoothed_cap <= capacity_inner` on every row.
    pub fn sandwich_holds(&self, tol: f64) -> bool {
        self.rows
            .iter()
            .all(|r| r.capacity_outer <= r.smoothed_cap + tol && r.smoothed_cap <= r.capacity_inner + tol)
    }
}

fn tail_run(steps: &[StepModel], sched: &LilSchedule, eps: f64, reflect: bool) -> Result<TailReport> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    let params = clt_params(steps)?;
    let sigma = params.sigma_hi();
    let sign = if reflect { -1.0 } else { 1.0 };
    let outer = (1.0 + eps) * sigma;
    let inner = (1.0 + eps / 2.0) * sigma;

    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    let mut partial = 0.0;
    for &(k, n) in &sched.entries {
        let nu = n as usize;
        if steps.len() > 1 && nu > steps.len() {
            warnings.push(format!("k = {k}: n_k = {n} exceeds the explicit steps; stopped"));
            break;
        }
        let cost = partial_sum_cost(steps, nu);
        if cost > HARNESS_COST_GUARD {
            warnings.push(format!("k = {k}: n_k = {n} needs {cost} operations; stopped"));
            break;
        }
        let a = a_n(n)?;
        let e = |f: &dyn Fn(f64) -> f64| expect_scaled_sum(|x| f(sign * x), steps, nu, a);
        let (smoothed, cheb, cap_outer, cap_inner) = if sigma == 0.0 {
            (0.0, 0.0, 0.0, 0.0)
        } else {
            (
                e(&|x| cutoff(x, eps, sigma))?,
                e(&|x| x * x)? / (inner * inner),
                e(&|x| if x > outer { 1.0 } else { 0.0 })?,
                e(&|x| if x > inner { 1.0 } else { 0.0 })?,
            )
        };
        partial += smoothed;
        rows.push(TailRow {
            k,
            n_k: n,
            a_nk: a,
            smoothed_cap: smoothed,
            chebyshev_bound: cheb,
            partial_sum: partial,
            capacity_outer: cap_outer,
            capacity_inner: cap_inner,
        });
    }
    Ok(TailReport {
        fixture: steps[0].label().to_string(),
        eps,
        sigma_hi: sigma,
        rows,
        truncated: !warnings.is_empty(),
        warnings,
    })
}

/// Smoothed upper tails `E[cutoff(S_{n_k} / a_{n_k})]` along the schedule,
/// with their partial sums, a Chebyshev bound and the two indicator
/// capacities that sandwich each value. Requires zero upper and lower mean.
///
/// Stops at the first `k` whose recursion exceeds the harness cost guard.
pub fn capacity_tail_run(steps: &[StepModel], sched: &LilSchedule, eps: f64) -> Result<TailReport> {
    tail_run(steps, sched, eps, false)
}

/// [`capacity_tail_run`] with the cutoff reflected, `x -> cutoff(-x)`.
pub fn capacity_tail_run_reflected(steps: &[StepModel], sched: &LilSchedule, eps: f64) -> Result<TailReport> {
    tail_run(steps, sched, eps, true)
}

/// Number of reachable lattice points `x` where `S/a = x` breaks
/// `1{x > (1+eps) sigma} <= cutoff(x) <= 1{x > (1+eps/2) sigma}`, summed over
/// the schedule entries `n_k <= max_n`.
pub fn pointwise_sandwich_violations(
    steps: &[StepModel],
    sched: &LilSchedule,
    eps: f64,
    sigma: f64,
    max_n: u64,
) -> Result<usize> {
    let mut bad = 0;
    for &(_, n) in sched.entries.iter().filter(|e| e.1 <= max_n) {
        let a = a_n(n)?;
        let nu = n as usize;
        let (lo, hi) = if steps.len() == 1 {
            let (l, h) = reachable_range(std::iter::once(&steps[0]));
            (l * nu as i64, h * nu as i64)
        } else {
            reachable_range(steps.iter().take(nu))
        };
        let h = steps[0].spacing();
        for i in lo..=hi {
            let x = i as f64 * h / a;
            let v = cutoff(x, eps, sigma);
            let below = if x > (1.0 + eps) * sigma { 1.0 } else { 0.0 };
            let above = if x > (1.0 + eps / 2.0) * sigma { 1.0 } else { 0.0 };
            if !(below <= v && v <= above) {
                bad += 1;
            }
        }
    }
    Ok(bad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRow {
    pub k: u32,
    pub block_len: u64,
    /// `E[max_{i <= block_len} |S_i|^p] / a_{n_k}^p`.
    pub mk_moment: f64,
    /// `mk_moment / eps^p`.
    pub cheb_term: f64,
    pub partial_sum: f64,
    /// `mk_moment / (block_len^{p/2} / a_{n_k}^p)`, the empirical constant.
    pub bound_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub fixture: String,
    pub p: f64,
    pub eps: f64,
    pub rows: Vec<BlockRow>,
    pub warnings: Vec<String>,
    pub truncated: bool,
}

impl BlockReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{BLOCK_CSV_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.k,
                r.block_len,
                fmt_f64(r.mk_moment),
                fmt_f64(r.cheb_term)
            ));
        }
        out
    }

    pub fn moment_series(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.mk_moment).collect()
    }
}

/// Block-maximum moments over consecutive schedule entries.
///
/// The block after `n_k` has `n_{k+1} - n_k` increments. Starting the block at
/// the origin is exact for identically distributed steps and used for any
/// step model.
pub fn block_max_report(steps: &[StepModel], sched: &LilSchedule, p: f64, eps: f64) -> Result<BlockReport> {
    if !(p.is_finite() && p > 2.0) {
        return Err(Error::Precondition(format!("p must exceed 2, got {p}")));
    }
    if p * (1.0 - sched.alpha) < 2.0 {
        return Err(Error::Precondition(format!(
            "p (1 - alpha) >= 2 fails: p = {p}, alpha = {}",
            sched.alpha
        )));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    if steps.is_empty() {
        return Err(Error::Contract("no step models given".into()));
    }
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    let mut partial = 0.0;
    for w in sched.entries.windows(2) {
        let ((k, n), (_, next)) = (w[0], w[1]);
        let len = next - n;
        let a = a_n(n)?;
        let raw = match max_augmented_expect(p, steps, len as usize) {
            Ok(v) => v,
            Err(e @ (Error::SizeGuard(_) | Error::Contract(_))) => {
                warnings.push(format!("k = {k}: {e}; stopped"));
                break;
            }
            Err(e) => return Err(e),
        };
        let mk = raw / a.powf(p);
        partial += mk;
        let scaled = (len as f64).powf(p / 2.0) / a.powf(p);
        rows.push(BlockRow {
            k,
            block_len: len,
            mk_moment: mk,
            cheb_term: mk / eps.powf(p),
            partial_sum: partial,
            bound_ratio: mk / scaled,
        });
    }
    Ok(BlockReport {
        fixture: steps[0].label().to_string(),
        p,
        eps,
        rows,
        truncated: !warnings.is_empty(),
        warnings,
    })
}

/// `sum_{i >= from_index} series[i]`, 0-based.
pub fn borel_cantelli_tail(series: &[f64], from_index: usize) -> Result<f64> {
    if let Some((i, v)) = series.iter().enumerate().find(|(_, v)| v.is_nan() || **v < 0.0) {
        return Err(Error::Domain(format!("entry {i} is {v}, expected a nonnegative number")));
    }
    Ok(series.iter().skip(from_index).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::fixtures::*;
    use crate::measure::{AmbiguitySet, DiscreteDistribution};

    fn model(set: AmbiguitySet) -> Vec<StepModel> {
        vec![StepModel::new(set, 1.0).unwrap()]
    }

    #[test]
    fn a_n_values() {
        assert!((a_n(16).unwrap() - 5.7125).abs() < 1e-4);
        assert!((a_n(100).unwrap() - 17.477).abs() < 1e-3);
        assert!((a_n(3).unwrap() - 0.7512).abs() < 1e-4);
        assert!(matches!(a_n(2), Err(Error::Domain(_))));
    }

    #[test]
    fn schedule_values() {
        let s = nk_schedule(0.5, 1, 9).unwrap();
        assert!(s.entries.contains(&(4, 7)));
        assert!(s.entries.contains(&(9, 20)));
        assert!(!s.entries.iter().any(|&(k, _)| k == 1));
        assert_eq!(s.warnings.len(), 1);
        let n = s.n_values();
        assert!(n.windows(2).all(|w| w[0] < w[1]));
        assert!(nk_schedule(1.0, 1, 3).is_err());
        assert!(nk_schedule(0.0, 1, 3).is_err());
    }

    #[test]
    fn a_ratio_approaches_one() {
        let s = nk_schedule(0.5, 12, 48).unwrap();
        let r = s.a_ratios();
        assert!(*r.last().unwrap() > 0.9);
        // flooring makes single steps jitter; block means rise
        let means: Vec<f64> = r.chunks(6).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        assert!(means.windows(2).all(|w| w[1] > w[0]), "{means:?}");
    }

    #[test]
    fn dirac_zero_has_no_tail() {
        let s = nk_schedule(0.5, 4, 12).unwrap();
        let rep = capacity_tail_run(&model(dirac(0.0)), &s, 1.0).unwrap();
        assert!(rep.rows.iter().all(|r| r.smoothed_cap == 0.0));
        let blocks = block_max_report(&model(dirac(0.0)), &s, 4.0, 1.0).unwrap();
        assert!(blocks.rows.iter().all(|r| r.mk_moment == 0.0));
    }

    #[test]
    fn tail_sandwich_and_chebyshev() {
        let s = nk_schedule(0.5, 4, 30).unwrap();
        let rep = capacity_tail_run(&model(fair_rademacher()), &s, 1.0).unwrap();
        assert!(rep.sandwich_holds(1e-12));
        for r in &rep.rows {
            assert!(r.smoothed_cap <= r.chebyshev_bound + 1e-12);
        }
        assert!(rep.rows.windows(2).all(|w| w[1].partial_sum >= w[0].partial_sum));
    }

    #[test]
    fn tail_rejects_nonzero_mean() {
        let s = nk_schedule(0.5, 4, 8).unwrap();
        let err = capacity_tail_run(&model(mean_uncertain_coin()), &s, 1.0).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn negation_symmetry() {
        let s = nk_schedule(0.5, 4, 20).unwrap();
        let sym = model(variance_uncertain_rademacher());
        let neg: Vec<StepModel> = sym.iter().map(StepModel::negated).collect();
        assert_eq!(
            capacity_tail_run(&sym, &s, 0.5).unwrap().series(),
            capacity_tail_run(&neg, &s, 0.5).unwrap().series()
        );

        let skew = AmbiguitySet::new(
            "skew",
            vec![
                DiscreteDistribution::new(vec![-1.0, 2.0], vec![2.0 / 3.0, 1.0 / 3.0]).unwrap(),
                DiscreteDistribution::new(vec![-2.0, 1.0], vec![1.0 / 3.0, 2.0 / 3.0]).unwrap(),
            ],
        )
        .unwrap();
        let skew = model(skew);
        let neg: Vec<StepModel> = skew.iter().map(StepModel::negated).collect();
        let a = capacity_tail_run(&neg, &s, 0.5).unwrap().series();
        let b = capacity_tail_run_reflected(&skew, &s, 0.5).unwrap().series();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn block_preconditions_and_single_increment() {
        let s = nk_schedule(0.5, 12, 20).unwrap();
        let err = block_max_report(&model(fair_rademacher()), &s, 3.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::Precondition(ref m) if m.contains("p (1 - alpha) >= 2")));

        // consecutive n_k one apart: the block is a single increment
        let one = LilSchedule {
            alpha: 0.5,
            k_min: 0,
            k_max: 1,
            entries: vec![(0, 10), (1, 11)],
            warnings: vec![],
        };
        let steps = model(variance_uncertain_rademacher());
        let rep = block_max_report(&steps, &one, 4.0, 1.0).unwrap();
        let direct = variance_uncertain_rademacher().sublinear_expect(|x| x.powi(4)).unwrap() / a_n(10).unwrap().powi(4);
        assert!((rep.rows[0].mk_moment - direct).abs() < 1e-12);
    }

    #[test]
    fn borel_cantelli() {
        assert_eq!(borel_cantelli_tail(&[0.0; 5], 0).unwrap(), 0.0);
        let s: Vec<f64> = (1..=100).map(|k| 1.0 / (k * k) as f64).collect();
        let full = borel_cantelli_tail(&s, 0).unwrap();
        assert!((full - s.iter().sum::<f64>()).abs() < 1e-15);
        assert!(borel_cantelli_tail(&s, 10).unwrap() <= full);
        assert!(borel_cantelli_tail(&[1.0, -0.5], 0).is_err());
    }
}
