//! Convergence experiments: finite-`n` upper expectations of scaled partial
//! sums against their maximal and G-normal limits.

use serde::{Deserialize, Serialize};

use crate::convolution::{expect_scaled_sum, partial_sum_cost, StepModel};
use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::gdist::{g_normal_expect, maximal_expect_1d, GNormalParams, HeatSolveConfig, MaximalParams};
use crate::measure::MomentSummary;
use crate::phi::{FunctionClass, TestFunction};

/// Recursion cost (multiply-adds) above which a schedule entry is dropped.
pub const HARNESS_COST_GUARD: u128 = 2_000_000_000;

/// Tolerance on the upper and lower means for the zero-mean hypothesis.
pub const ZERO_MEAN_TOLERANCE: f64 = 1e-12;

pub const DEFAULT_LLN_SCHEDULE: &[usize] = &[4, 16, 64, 256, 1024];
pub const DEFAULT_CLT_SCHEDULE: &[usize] = &[4, 16, 64, 256];

pub const CONVERGENCE_CSV_HEADER: &str = "fixture,phi,n,finite_value,limit_value,abs_error";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub finite_value: f64,
    pub limit_value: f64,
    pub abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub fixture: String,
    pub phi: String,
    pub schedule: Vec<usize>,
    pub rows: Vec<ConvergenceRow>,
    pub warnings: Vec<String>,
    pub truncated: bool,
}

impl ConvergenceReport {
    /// Data rows without the header, one line per `n`.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                csv_field(&self.fixture),
                csv_field(&self.phi),
                r.n,
                fmt_f64(r.finite_value),
                fmt_f64(r.limit_value),
                fmt_f64(r.abs_error)
            ));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{CONVERGENCE_CSV_HEADER}\n{}", self.csv_rows())
    }

    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.abs_error).collect()
    }

    pub fn row(&self, n: usize) -> Option<&ConvergenceRow> {
        self.rows.iter().find(|r| r.n == n)
    }
}

/// Quotes a CSV field when it contains a comma, quote or newline.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Sorted, deduplicated schedule split into the entries within the cost guard
/// and warnings for the rest.
fn admissible_schedule(steps: &[StepModel], schedule: &[usize]) -> Result<(Vec<usize>, Vec<String>)> {
    if steps.is_empty() {
        return Err(Error::Contract("no step models given".into()));
    }
    if schedule.is_empty() || schedule.contains(&0) {
        return Err(Error::Contract("schedule needs positive entries".into()));
    }
    let mut sorted = schedule.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut kept = Vec::new();
    let mut warnings = Vec::new();
    for n in sorted {
        if steps.len() > 1 && n > steps.len() {
            warnings.push(format!("n = {n} exceeds the {} explicit steps; dropped", steps.len()));
            continue;
        }
        let cost = partial_sum_cost(steps, n);
        if cost > HARNESS_COST_GUARD {
            warnings.push(format!(
                "n = {n} needs {cost} operations, above the guard of {HARNESS_COST_GUARD}; dropped"
            ));
        } else {
            kept.push(n);
        }
    }
    Ok((kept, warnings))
}

/// Envelope of the per-step moment summaries: extreme means and second moments.
pub fn combined_moments(steps: &[StepModel]) -> MomentSummary {
    steps.iter().map(StepModel::moment_summary).fold(
        MomentSummary {
            upper_mean: f64::NEG_INFINITY,
            lower_mean: f64::INFINITY,
            upper_sq: f64::NEG_INFINITY,
            lower_sq: f64::INFINITY,
        },
        |acc, m| MomentSummary {
            upper_mean: acc.upper_mean.max(m.upper_mean),
            lower_mean: acc.lower_mean.min(m.lower_mean),
            upper_sq: acc.upper_sq.max(m.upper_sq),
            lower_sq: acc.lower_sq.min(m.lower_sq),
        },
    )
}

fn build_reports(
    steps: &[StepModel],
    suite: &[TestFunction],
    schedule: &[usize],
    limit: impl Fn(&TestFunction) -> Result<f64>,
    scale: impl Fn(usize) -> f64,
) -> Result<Vec<ConvergenceReport>> {
    let (kept, warnings) = admissible_schedule(steps, schedule)?;
    let fixture = steps[0].label().to_string();
    suite
        .iter()
        .map(|phi| {
            let limit_value = limit(phi)?;
            let rows = kept
                .iter()
                .map(|&n| {
                    let finite_value = expect_scaled_sum(phi.as_fn(), steps, n, scale(n))?;
                    Ok(ConvergenceRow {
                        n,
                        finite_value,
                        limit_value,
                        abs_error: (finite_value - limit_value).abs(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ConvergenceReport {
                fixture: fixture.clone(),
                phi: phi.name().to_string(),
                schedule: schedule.to_vec(),
                rows,
                truncated: !warnings.is_empty(),
                warnings: warnings.clone(),
            })
        })
        .collect()
}

/// `E[phi(S_n / n)]` against the maximal law on `[lower mean, upper mean]`.
///
/// Schedule entries whose recursion exceeds [`HARNESS_COST_GUARD`] are dropped
/// and recorded as warnings, with the report marked truncated.
pub fn lln_run(steps: &[StepModel], suite: &[TestFunction], schedule: &[usize]) -> Result<Vec<ConvergenceReport>> {
    let gamma = MaximalParams::from_moments(&combined_moments(steps));
    build_reports(steps, suite, schedule, |phi| maximal_expect_1d(phi.as_fn(), &gamma), |n| n as f64)
}

/// `E[phi(S_n / sqrt(n))]` against the G-normal law with the steps' variance
/// bounds. Requires zero upper and lower mean.
pub fn clt_run(
    steps: &[StepModel],
    suite: &[TestFunction],
    schedule: &[usize],
    cfg: Option<&HeatSolveConfig>,
) -> Result<Vec<ConvergenceReport>> {
    let params = clt_params(steps)?;
    let cfg = cfg.copied().unwrap_or_else(|| HeatSolveConfig::default_for(&params));
    build_reports(
        steps,
        suite,
        schedule,
        |phi| g_normal_expect(phi.as_fn(), &params, &cfg),
        |n| (n as f64).sqrt(),
    )
}

/// G-normal parameters of the steps, after checking the zero-mean hypothesis.
pub fn clt_params(steps: &[StepModel]) -> Result<GNormalParams> {
    for s in steps {
        let m = s.moment_summary();
        if !m.is_mean_zero(ZERO_MEAN_TOLERANCE) {
            return Err(Error::Precondition(format!(
                "zero mean required: '{}' has upper mean {} and lower mean {}",
                s.label(),
                m.upper_mean,
                m.lower_mean
            )));
        }
    }
    GNormalParams::from_moments(&combined_moments(steps))
}

#[derive(Debug, Clone, Copy)]
pub enum Runner<'a> {
    /// `E[phi(S_n / n)]`.
    Lln { steps: &'a [StepModel], n: usize },
    /// `E[phi(S_n / sqrt(n))]`, zero-mean steps only.
    Clt { steps: &'a [StepModel], n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizationReport {
    pub phi: String,
    pub cutoffs: Vec<f64>,
    pub values: Vec<f64>,
    /// `|values[i + 1] - values[i]|`.
    pub differences: Vec<f64>,
    pub stabilized: bool,
}

/// Difference below which the last two truncated values count as stable.
pub const STABILIZATION_TOLERANCE: f64 = 1e-6;

/// Finite-`n` values of `phi` clamped to `[-M, M]` for each cutoff `M`.
pub fn truncation_stabilization(phi: &TestFunction, runner: Runner<'_>, cutoffs: &[f64]) -> Result<StabilizationReport> {
    if phi.class() == FunctionClass::PolynomialGrowth {
        return Err(Error::Contract(format!(
            "'{}' grows faster than linearly; truncation check needs linear growth",
            phi.name()
        )));
    }
    let (steps, n, scale) = match runner {
        Runner::Lln { steps, n } => (steps, n, n as f64),
        Runner::Clt { steps, n } => {
            clt_params(steps)?;
            (steps, n, (n as f64).sqrt())
        }
    };
    if n == 0 {
        return Err(Error::Contract("n must be positive".into()));
    }
    let values = cutoffs
        .iter()
        .map(|&m| {
            let clamped = phi.clamped(m)?;
            expect_scaled_sum(clamped.as_fn(), steps, n, scale)
        })
        .collect::<Result<Vec<f64>>>()?;
    let differences: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let stabilized = differences.last().is_some_and(|&d| d < STABILIZATION_TOLERANCE);
    Ok(StabilizationReport {
        phi: phi.name().to_string(),
        cutoffs: cutoffs.to_vec(),
        values,
        differences,
        stabilized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::fixtures::*;
    use crate::phi::{band_distance_fn, standard};

    fn model(set: crate::measure::AmbiguitySet) -> Vec<StepModel> {
        vec![StepModel::new(set, 1.0).unwrap()]
    }

    #[test]
    fn lln_linear_is_exact() {
        let steps = model(mean_uncertain_coin());
        let reps = lln_run(&steps, &[standard("x").unwrap()], &[1, 5, 64]).unwrap();
        for r in &reps[0].rows {
            assert!((r.finite_value - 0.2).abs() < 1e-12 && (r.limit_value - 0.2).abs() < 1e-12);
            assert!(r.abs_error < 1e-12);
        }
    }

    #[test]
    fn lln_band_distance_errors_fall() {
        let steps = model(mean_uncertain_coin());
        let phi = band_distance_fn(-0.2, 0.2);
        let rep = &lln_run(&steps, &[phi], &[1024, 16, 256, 64]).unwrap()[0];
        assert_eq!(rep.rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![16, 64, 256, 1024]);
        assert_eq!(rep.rows[0].limit_value, 0.0);
        let e = rep.errors();
        assert!(e.windows(2).all(|w| w[1] < w[0]), "{e:?}");
    }

    #[test]
    fn deterministic_steps_have_no_error() {
        let steps = vec![StepModel::new(dirac(0.5), 0.5).unwrap()];
        let suite = [standard("x^2").unwrap(), standard("sin(x)").unwrap()];
        for rep in lln_run(&steps, &suite, &[3, 10]).unwrap() {
            assert!(rep.rows.iter().all(|r| r.abs_error == 0.0), "{rep:?}");
        }
    }

    #[test]
    fn clt_square_is_exact_at_every_n() {
        let steps = model(variance_uncertain_rademacher());
        let reps = clt_run(&steps, &[standard("x^2").unwrap()], &[4, 16, 64], None).unwrap();
        for r in &reps[0].rows {
            assert!((r.finite_value - 4.0).abs() < 1e-12);
            assert!(r.abs_error < 1e-3);
        }
    }

    #[test]
    fn clt_rejects_nonzero_mean() {
        let steps = model(mean_uncertain_coin());
        let err = clt_run(&steps, &[standard("x").unwrap()], &[4], None).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn schedule_truncation_is_reported() {
        let steps = model(variance_uncertain_rademacher());
        let rep = &lln_run(&steps, &[standard("x").unwrap()], &[4, 1_000_000]).unwrap()[0];
        assert!(rep.truncated);
        assert_eq!(rep.rows.len(), 1);
        assert!(rep.warnings[0].contains("1000000"));
    }

    #[test]
    fn stabilization_examples() {
        let coin = model(mean_uncertain_coin());
        let rep = truncation_stabilization(&standard("x").unwrap(), Runner::Lln { steps: &coin, n: 8 }, &[1.0, 2.0])
            .unwrap();
        assert!(rep.values.iter().all(|v| (v - 0.2).abs() < 1e-12));
        assert!(rep.stabilized);

        let rad = model(variance_uncertain_rademacher());
        let rep =
            truncation_stabilization(&standard("|x|").unwrap(), Runner::Clt { steps: &rad, n: 16 }, &[8.0, 16.0, 32.0])
                .unwrap();
        assert!(rep.differences.windows(2).all(|w| w[1] <= w[0]));
        assert!(rep.stabilized);

        let bounded = standard("sin(x)").unwrap();
        let rep = truncation_stabilization(&bounded, Runner::Lln { steps: &coin, n: 8 }, &[1.0, 3.0, 9.0]).unwrap();
        assert!(rep.values.windows(2).all(|w| w[0] == w[1]));

        assert!(truncation_stabilization(&standard("x^2").unwrap(), Runner::Lln { steps: &coin, n: 4 }, &[1.0]).is_err());
    }

    #[test]
    fn csv_layout() {
        let steps = model(mean_uncertain_coin());
        let rep = &lln_run(&steps, &[standard("x").unwrap()], &[2]).unwrap()[0];
        let csv = rep.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CONVERGENCE_CSV_HEADER));
        let row = lines.next().unwrap();
        assert!(row.starts_with("mean-uncertain coin,x,2,"));
        assert_eq!(csv_field("max(x,y)"), "\"max(x,y)\"");
    }
}
