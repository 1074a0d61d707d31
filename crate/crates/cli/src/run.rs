//! Experiment execution, report serialization and the output manifest.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use sublinear_core::convolution::{expect_partial_sum, StepModel};
use sublinear_core::fmt_f64;
use sublinear_core::gdist::{g_normal_expect, GNormalParams};
use sublinear_core::harness::{clt_run, combined_moments, csv_field, lln_run, ConvergenceReport, CONVERGENCE_CSV_HEADER};
use sublinear_core::lil::{block_max_report, capacity_tail_run, nk_schedule};
use sublinear_core::phi::TestFunction;
use sublinear_core::scenario::ScenarioSpace;
use sublinear_core::Error;

use crate::config::{ExperimentConfig, ExperimentKind, OutputFormat, Plan};
use crate::CliError;

pub const COMPARE_CSV_HEADER: &str = "fixture,phi,n,dp_value,oracle_value,diff";
pub const GHEAT_CSV_HEADER: &str = "fixture,phi,sigma_lo_sq,sigma_hi_sq,value";
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub fixture: String,
    pub phi: String,
    pub n: usize,
    pub dp_value: f64,
    pub oracle_value: f64,
    pub diff: f64,
}

impl CompareRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}\n",
            csv_field(&self.fixture),
            csv_field(&self.phi),
            self.n,
            fmt_f64(self.dp_value),
            fmt_f64(self.oracle_value),
            fmt_f64(self.diff)
        )
    }
}

/// Convolution value of `phi(S_n)` against the strategy-enumeration oracle.
pub fn compare(steps: &[StepModel], phi: &TestFunction, n: usize) -> Result<CompareRow, Error> {
    let dp_value = expect_partial_sum(phi.as_fn(), steps, 0, n)?;
    let space = if steps.len() == 1 {
        ScenarioSpace::iid(steps[0].ambiguity(), n)?
    } else {
        ScenarioSpace::new(steps[..n.min(steps.len())].iter().map(|s| s.ambiguity().clone()).collect())?
    };
    let oracle_value = space.strategy_sup(|w| phi.eval(w.iter().sum()))?.value;
    Ok(CompareRow {
        fixture: steps[0].label().to_string(),
        phi: phi.name().to_string(),
        n,
        dp_value,
        oracle_value,
        diff: (dp_value - oracle_value).abs(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Truncated,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub name: String,
    pub kind: ExperimentKind,
    pub fixture: String,
    pub parameters: Value,
    pub files: Vec<OutputFile>,
    pub warnings: Vec<String>,
    pub status: Status,
    pub error: Option<String>,
}

fn parameters(plan: &Plan) -> Value {
    let phis: Vec<&str> = plan.phis.iter().map(|f| f.name()).collect();
    match plan.def.kind {
        ExperimentKind::Lln | ExperimentKind::Compare => json!({"phi": phis, "n_schedule": plan.n_schedule}),
        ExperimentKind::Clt => json!({"phi": phis, "n_schedule": plan.n_schedule, "solver": plan.solver}),
        ExperimentKind::Gheat => json!({"phi": phis, "solver": plan.solver}),
        ExperimentKind::Lil => json!({
            "eps": plan.eps, "alpha": plan.alpha, "p": plan.p, "k_min": plan.k_min, "k_max": plan.k_max
        }),
    }
}

struct Produced {
    files: Vec<OutputFile>,
    warnings: Vec<String>,
    truncated: bool,
}

fn emit(files: &mut Vec<OutputFile>, format: OutputFormat, stem: &str, csv: String, json: impl Serialize) -> Result<(), CliError> {
    if format.csv() {
        files.push(OutputFile {
            name: format!("{stem}.csv"),
            contents: csv,
        });
    }
    if format.json() {
        files.push(OutputFile {
            name: format!("{stem}.json"),
            contents: serde_json::to_string_pretty(&json)? + "\n",
        });
    }
    Ok(())
}

fn convergence_csv(reports: &[ConvergenceReport]) -> String {
    let mut out = format!("{CONVERGENCE_CSV_HEADER}\n");
    for r in reports {
        out.push_str(&r.csv_rows());
    }
    out
}

fn produce(plan: &Plan, format: OutputFormat) -> Result<Produced, CliError> {
    let steps = &plan.fixture.steps;
    let name = &plan.def.name;
    let mut files = Vec::new();
    let mut warnings = Vec::new();
    let mut truncated = false;
    match plan.def.kind {
        ExperimentKind::Lln | ExperimentKind::Clt => {
            let reports = if plan.def.kind == ExperimentKind::Lln {
                lln_run(steps, &plan.phis, &plan.n_schedule)?
            } else {
                clt_run(steps, &plan.phis, &plan.n_schedule, plan.solver.as_ref())?
            };
            if let Some(r) = reports.first() {
                warnings.extend(r.warnings.iter().cloned());
                truncated = r.truncated;
            }
            emit(&mut files, format, name, convergence_csv(&reports), &reports)?;
        }
        ExperimentKind::Compare => {
            let mut rows = Vec::new();
            for phi in &plan.phis {
                for &n in &plan.n_schedule {
                    match compare(steps, phi, n) {
                        Ok(row) => rows.push(row),
                        Err(e @ Error::SizeGuard(_)) => {
                            warnings.push(format!("{} at n = {n}: {e}", phi.name()));
                            truncated = true;
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
            }
            let mut csv = format!("{COMPARE_CSV_HEADER}\n");
            rows.iter().for_each(|r| csv.push_str(&r.csv_line()));
            emit(&mut files, format, name, csv, &rows)?;
        }
        ExperimentKind::Lil => {
            let sched = nk_schedule(plan.alpha, plan.k_min, plan.k_max)?;
            warnings.extend(sched.warnings.iter().cloned());
            for &eps in &plan.eps {
                let tail = capacity_tail_run(steps, &sched, eps)?;
                let blocks = block_max_report(steps, &sched, plan.p, eps)?;
                truncated |= tail.truncated || blocks.truncated;
                warnings.extend(tail.warnings.iter().map(|w| format!("tail eps = {eps}: {w}")));
                warnings.extend(blocks.warnings.iter().map(|w| format!("blocks eps = {eps}: {w}")));
                let tag = fmt_f64(eps);
                emit(&mut files, format, &format!("{name}_tail_eps{tag}"), tail.to_csv(), &tail)?;
                emit(&mut files, format, &format!("{name}_blocks_eps{tag}"), blocks.to_csv(), &blocks)?;
            }
        }
        ExperimentKind::Gheat => {
            let params = GNormalParams::from_moments(&combined_moments(steps))?;
            let cfg = plan.solver.expect("validated gheat plans carry a solver config");
            let mut csv = format!("{GHEAT_CSV_HEADER}\n");
            let mut rows = Vec::new();
            for phi in &plan.phis {
                let value = g_normal_expect(phi.as_fn(), &params, &cfg)?;
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    csv_field(plan.fixture.label()),
                    csv_field(phi.name()),
                    fmt_f64(params.sigma_lo_sq()),
                    fmt_f64(params.sigma_hi_sq()),
                    fmt_f64(value)
                ));
                rows.push(json!({"phi": phi.name(), "value": value}));
            }
            let doc = json!({
                "fixture": plan.fixture.label(),
                "sigma_lo_sq": params.sigma_lo_sq(),
                "sigma_hi_sq": params.sigma_hi_sq(),
                "solver": cfg,
                "rows": rows,
            });
            emit(&mut files, format, name, csv, doc)?;
        }
    }
    Ok(Produced {
        files,
        warnings,
        truncated,
    })
}

/// Runs one validated experiment. Errors are captured in the outcome.
pub fn execute(plan: &Plan, format: OutputFormat) -> Outcome {
    let base = Outcome {
        name: plan.def.name.clone(),
        kind: plan.def.kind,
        fixture: plan.fixture.name.clone(),
        parameters: parameters(plan),
        files: Vec::new(),
        warnings: Vec::new(),
        status: Status::Ok,
        error: None,
    };
    match produce(plan, format) {
        Ok(p) => Outcome {
            files: p.files,
            warnings: p.warnings,
            status: if p.truncated { Status::Truncated } else { Status::Ok },
            ..base
        },
        Err(e) => Outcome {
            status: Status::Failed,
            error: Some(e.to_string()),
            ..base
        },
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<std::path::PathBuf>,
    pub format: Option<OutputFormat>,
    pub jobs: Option<usize>,
    pub strict: bool,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub outcomes: Vec<Outcome>,
    pub out_dir: std::path::PathBuf,
    pub exit_code: i32,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Validates, runs every experiment and writes the reports followed by the
/// manifest. Nothing is written when validation fails.
pub fn run(config_path: &Path, opts: &RunOptions) -> Result<RunSummary, CliError> {
    let (cfg, text) = ExperimentConfig::load(config_path)?;
    let plans = crate::config::validate(&cfg)?;
    let format = opts.format.unwrap_or(cfg.output.format);
    let out_dir = opts.out_dir.clone().unwrap_or_else(|| cfg.output.dir.clone());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Validation(format!("--jobs: {e}")))?;
    let outcomes: Vec<Outcome> = pool.install(|| plans.par_iter().map(|p| execute(p, format)).collect());

    std::fs::create_dir_all(&out_dir)?;
    let mut entries = Vec::new();
    for o in &outcomes {
        let mut outputs = Vec::new();
        for f in &o.files {
            std::fs::write(out_dir.join(&f.name), &f.contents)?;
            outputs.push(json!({"file": f.name, "sha256": sha256_hex(f.contents.as_bytes())}));
        }
        entries.push(json!({
            "name": o.name,
            "kind": o.kind,
            "fixture": o.fixture,
            "parameters": o.parameters,
            "status": o.status,
            "warnings": o.warnings,
            "error": o.error,
            "outputs": outputs,
        }));
    }
    let manifest = json!({
        "config": {"path": config_path.display().to_string(), "sha256": sha256_hex(text.as_bytes())},
        "format": format,
        "experiments": entries,
    });
    std::fs::write(out_dir.join(MANIFEST_NAME), serde_json::to_string_pretty(&manifest)? + "\n")?;

    let exit_code = if outcomes.iter().any(|o| o.status == Status::Failed) {
        1
    } else if opts.strict && outcomes.iter().any(|o| o.status == Status::Truncated) {
        3
    } else {
        0
    };
    Ok(RunSummary {
        outcomes,
        out_dir,
        exit_code,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use sublinear_core::measure::fixtures::*;
    use sublinear_core::phi::standard;

    fn model(set: sublinear_core::measure::AmbiguitySet) -> Vec<StepModel> {
        vec![StepModel::new(set, 1.0).unwrap()]
    }

    #[test]
    fn compare_examples() {
        let rad = model(variance_uncertain_rademacher());
        let row = compare(&rad, &standard("x^2").unwrap(), 3).unwrap();
        assert_eq!((row.dp_value, row.oracle_value, row.diff), (12.0, 12.0, 0.0));
        assert_eq!(row.csv_line(), "variance-uncertain rademacher,x^2,3,12.0,12.0,0.0\n");
        let row = compare(&rad, &standard("|x|").unwrap(), 2).unwrap();
        assert_eq!((row.dp_value, row.oracle_value, row.diff), (2.0, 2.0, 0.0));

        let coin = model(mean_uncertain_coin());
        let row = compare(&coin, &standard("x").unwrap(), 3).unwrap();
        assert!((row.dp_value - 0.6).abs() < 1e-12 && row.diff < 1e-12);
        for phi in ["x^4", "sin(x)", "(x-1)^2"] {
            assert!(compare(&coin, &standard(phi).unwrap(), 1).unwrap().diff < 1e-15);
        }
    }

    #[test]
    fn compare_beyond_guard_is_a_size_error() {
        let rad = model(variance_uncertain_rademacher());
        assert!(matches!(compare(&rad, &standard("x").unwrap(), 5), Err(Error::SizeGuard(_))));
    }
}
