//! Experiment configuration: schema, parsing and fail-fast validation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sublinear_core::convolution::StepModel;
use sublinear_core::gdist::{GNormalParams, HeatSolveConfig};
use sublinear_core::harness::{clt_params, combined_moments, DEFAULT_CLT_SCHEDULE, DEFAULT_LLN_SCHEDULE};
use sublinear_core::lil::{DEFAULT_ALPHA, DEFAULT_EPS_GRID, DEFAULT_P};
use sublinear_core::measure::{AmbiguitySet, DiscreteDistribution, DistributionDoc};
use sublinear_core::phi::{band_distance_fn, cutoff_fn, default_suite, standard, TestFunction};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureDef {
    #[serde(default)]
    pub label: Option<String>,
    /// Lattice spacing; defaults to 1.
    #[serde(default)]
    pub spacing: Option<f64>,
    pub members: Vec<DistributionDoc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Lln,
    Clt,
    Compare,
    Lil,
    Gheat,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    pub half_width: Option<f64>,
    pub dx: Option<f64>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
}

impl SolverOverrides {
    pub fn apply(&self, params: &GNormalParams) -> HeatSolveConfig {
        let mut cfg = HeatSolveConfig::default_for(params);
        if let Some(t) = self.horizon {
            cfg = cfg.with_horizon(t);
        }
        if let Some(v) = self.half_width {
            cfg.half_width = v;
        }
        if let Some(v) = self.dx {
            cfg.dx = v;
            if self.dt.is_none() {
                let s2 = if params.sigma_hi_sq() > 0.0 { params.sigma_hi_sq() } else { 1.0 };
                cfg.dt = 0.4 * v * v / s2;
            }
        }
        if let Some(v) = self.dt {
            cfg.dt = v;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentDef {
    pub name: String,
    pub kind: ExperimentKind,
    pub fixture: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_schedule: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_min: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverOverrides>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
    Both,
}

impl OutputFormat {
    pub fn csv(self) -> bool {
        matches!(self, Self::Csv | Self::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, Self::Json | Self::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputDef {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputDef {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            format: OutputFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub fixtures: BTreeMap<String, FixtureDef>,
    pub experiments: Vec<ExperimentDef>,
    #[serde(default)]
    pub output: OutputDef,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| {
            CliError::Validation(format!("line {}, column {}: {e}", e.line(), e.column()))
        })
    }

    pub fn load(path: &Path) -> Result<(Self, String), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        Ok((Self::from_json(&text)?, text))
    }
}

/// A fixture resolved into step models.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: String,
    pub steps: Vec<StepModel>,
}

impl Fixture {
    pub fn label(&self) -> &str {
        self.steps[0].label()
    }

    pub fn sigma_hi(&self) -> f64 {
        combined_moments(&self.steps).sigma_hi()
    }
}

fn build_fixture(name: &str, def: &FixtureDef) -> Result<Fixture, CliError> {
    let field = |msg: String| CliError::Validation(format!("fixtures.{name}: {msg}"));
    let members = def
        .members
        .iter()
        .enumerate()
        .map(|(i, d)| DiscreteDistribution::try_from(d.clone()).map_err(|e| field(format!("members[{i}]: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let label = def.label.clone().unwrap_or_else(|| name.to_string());
    let set = AmbiguitySet::new(label, members).map_err(|e| field(e.to_string()))?;
    let step = StepModel::new(set, def.spacing.unwrap_or(1.0)).map_err(|e| field(e.to_string()))?;
    Ok(Fixture {
        name: name.to_string(),
        steps: vec![step],
    })
}

/// Resolves a test-function name: the standard registry, `cutoff`
/// (eps = 1 at the fixture's upper standard deviation), `cutoff(eps)` and
/// `dist(x,[lo,hi])`.
pub fn resolve_phi(name: &str, sigma_hi: f64) -> Option<TestFunction> {
    if let Some(f) = standard(name) {
        return Some(f);
    }
    if name == "cutoff" {
        return cutoff_fn(1.0, sigma_hi).ok();
    }
    if let Some(eps) = name.strip_prefix("cutoff(").and_then(|r| r.strip_suffix(')')) {
        return cutoff_fn(eps.trim().parse().ok()?, sigma_hi).ok();
    }
    let inner = name.strip_prefix("dist(x,[")?.strip_suffix("])")?;
    let (lo, hi) = inner.split_once(',')?;
    let (lo, hi): (f64, f64) = (lo.trim().parse().ok()?, hi.trim().parse().ok()?);
    (lo <= hi).then(|| band_distance_fn(lo, hi))
}

/// A validated experiment with all defaults filled in.
#[derive(Debug, Clone)]
pub struct Plan {
    pub def: ExperimentDef,
    pub fixture: Fixture,
    pub phis: Vec<TestFunction>,
    pub n_schedule: Vec<usize>,
    pub eps: Vec<f64>,
    pub alpha: f64,
    pub p: f64,
    pub k_min: u32,
    pub k_max: u32,
    pub solver: Option<HeatSolveConfig>,
}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

/// Checks every experiment before anything runs.
pub fn validate(cfg: &ExperimentConfig) -> Result<Vec<Plan>, CliError> {
    if cfg.experiments.is_empty() {
        return Err(CliError::Validation("experiments: at least one experiment is required".into()));
    }
    let mut fixtures = BTreeMap::new();
    for (name, def) in &cfg.fixtures {
        fixtures.insert(name.clone(), build_fixture(name, def)?);
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut plans = Vec::new();
    for (i, e) in cfg.experiments.iter().enumerate() {
        let at = |msg: String| CliError::Validation(format!("experiments[{i}] ({}): {msg}", e.name));
        if e.name.is_empty() || !e.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
            return Err(at("name must be non-empty and use only letters, digits, '-', '_' or '.'".into()));
        }
        if !seen.insert(e.name.clone()) {
            return Err(at("duplicate experiment name".into()));
        }
        let fixture = fixtures
            .get(&e.fixture)
            .cloned()
            .ok_or_else(|| at(format!("undeclared fixture '{}'", e.fixture)))?;
        let sigma = fixture.sigma_hi();

        let default_phis: Vec<String> = match e.kind {
            ExperimentKind::Compare => vec!["x^2".into()],
            ExperimentKind::Lil => vec![],
            _ => default_suite(sigma).iter().map(|f| f.name().to_string()).collect(),
        };
        let phi_names = e.phi.clone().unwrap_or(default_phis);
        let mut phis = Vec::new();
        for n in &phi_names {
            let f = if n.starts_with("cutoff(eps=") {
                default_suite(sigma).into_iter().find(|f| f.name() == n)
            } else {
                resolve_phi(n, sigma)
            };
            phis.push(f.ok_or_else(|| at(format!("phi: unknown test function '{n}'")))?);
        }

        let n_schedule = e.n_schedule.clone().unwrap_or_else(|| match e.kind {
            ExperimentKind::Clt => DEFAULT_CLT_SCHEDULE.to_vec(),
            ExperimentKind::Compare => vec![1, 2, 3],
            _ => DEFAULT_LLN_SCHEDULE.to_vec(),
        });
        if n_schedule.is_empty() || n_schedule.contains(&0) {
            return Err(at("n_schedule: entries must be positive integers".into()));
        }
        let eps = e.eps.clone().unwrap_or_else(|| DEFAULT_EPS_GRID.to_vec());
        if eps.is_empty() || !eps.iter().all(|&v| positive(v)) {
            return Err(at("eps: values must be positive".into()));
        }
        let alpha = e.alpha.unwrap_or(DEFAULT_ALPHA);
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(at(format!("alpha: {alpha} is outside (0, 1)")));
        }
        let p = e.p.unwrap_or(DEFAULT_P);
        if !(p.is_finite() && p > 2.0) || p * (1.0 - alpha) < 2.0 {
            return Err(at(format!("p: {p} must exceed 2 with p (1 - alpha) >= 2")));
        }
        let k_min = e.k_min.unwrap_or(12);
        let k_max = e.k_max.unwrap_or(40);
        if k_min > k_max {
            return Err(at(format!("k_min {k_min} exceeds k_max {k_max}")));
        }

        let needs_zero_mean = matches!(e.kind, ExperimentKind::Clt | ExperimentKind::Lil);
        if needs_zero_mean {
            clt_params(&fixture.steps).map_err(|err| at(err.to_string()))?;
        }
        let solver = match e.kind {
            ExperimentKind::Clt | ExperimentKind::Gheat => {
                let params = GNormalParams::from_moments(&combined_moments(&fixture.steps))
                    .map_err(|err| at(err.to_string()))?;
                let cfg = e.solver.unwrap_or_default().apply(&params);
                cfg.validate(&params).map_err(|err| at(format!("solver: {err}")))?;
                Some(cfg)
            }
            _ => {
                if e.solver.is_some() {
                    return Err(at("solver: only clt and gheat experiments take solver settings".into()));
                }
                None
            }
        };

        plans.push(Plan {
            def: e.clone(),
            fixture,
            phis,
            n_schedule,
            eps,
            alpha,
            p,
            k_min,
            k_max,
            solver,
        });
    }
    Ok(plans)
}

#[cfg(test)]
mod tests {
    use super::*;

    const COIN: &str = r#"{
        "fixtures": {"coin": {"label": "mean-uncertain coin", "members": [
            {"points": [-1, 1], "probs": [0.6, 0.4]},
            {"points": [-1, 1], "probs": [0.4, 0.6]}]}},
        "experiments": [{"name": "lln", "kind": "lln", "fixture": "coin", "phi": ["x"]}]
    }"#;

    #[test]
    fn parses_and_validates() {
        let cfg = ExperimentConfig::from_json(COIN).unwrap();
        let plans = validate(&cfg).unwrap();
        assert_eq!(plans[0].n_schedule, DEFAULT_LLN_SCHEDULE);
        assert_eq!(cfg.output.format, OutputFormat::Csv);
    }

    #[test]
    fn missing_fixture_is_named() {
        let text = COIN.replace("\"fixture\": \"coin\"", "\"fixture\": \"dice\"");
        let err = validate(&ExperimentConfig::from_json(&text).unwrap()).unwrap_err();
        assert!(err.to_string().contains("'dice'"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn schema_errors_carry_position() {
        let text = COIN.replace("\"kind\": \"lln\"", "\"kind\": \"lln\", \"bogus\": 1");
        let err = ExperimentConfig::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("line 5"), "{err}");
    }

    #[test]
    fn domain_checks() {
        for (from, to) in [
            ("\"phi\": [\"x\"]", "\"phi\": [\"x\"], \"alpha\": 1.5"),
            ("\"phi\": [\"x\"]", "\"phi\": [\"nope\"]"),
            ("\"phi\": [\"x\"]", "\"phi\": [\"x\"], \"n_schedule\": [0]"),
            ("\"kind\": \"lln\"", "\"kind\": \"clt\""),
        ] {
            let text = COIN.replace(from, to);
            assert!(validate(&ExperimentConfig::from_json(&text).unwrap()).is_err(), "{to}");
        }
    }

    #[test]
    fn phi_names() {
        assert!(resolve_phi("dist(x,[-0.2,0.2])", 1.0).is_some());
        assert_eq!(resolve_phi("cutoff(0.5)", 2.0).unwrap().eval(2.75), 0.5);
        assert!(resolve_phi("dist(x,[1,0])", 1.0).is_none());
    }
}
