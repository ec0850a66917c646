//! Experiment configuration: `key = value` lines grouped under `[section]` headers.
//! `#` starts a comment.
//!
//! ```text
//! [case]
//! name = slit
//! degree = 1
//! initial_grid = 8
//!
//! [goal]
//! center = 0.25, 0.75
//! radius = 0.0625
//!
//! [run]
//! refinement = adaptive
//! estimators = rho_varpi, second_star, rho_tau
//! fraction = 0.33
//! steps = 8
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use hypercircle::adapt::FluxMode;
use hypercircle::cases::{case_by_name, GoalFunctional, TestCase};
use hypercircle::estimate::EstimatorKind;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Refinement {
    Uniform,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalSpec {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSpec {
    pub target_dofs: Option<usize>,
    /// Cache directory; defaults to `reference-cache` inside the output directory.
    pub cache: Option<PathBuf>,
}

/// A validated experiment. `estimators` empty means an energy experiment driven by
/// `flux`; otherwise a goal experiment with these indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub case: String,
    pub degree: usize,
    pub flux: FluxMode,
    pub estimators: Vec<EstimatorKind>,
    pub refinement: Refinement,
    pub fraction: f64,
    pub steps: usize,
    pub initial_grid: Option<usize>,
    pub goal: Option<GoalSpec>,
    pub output: PathBuf,
    pub seed: u64,
    pub export_mesh: bool,
    pub reference: ReferenceSpec,
}

const GOAL_INDICATORS: [EstimatorKind; 5] = [
    EstimatorKind::RhoVarpi,
    EstimatorKind::RhoTau,
    EstimatorKind::FirstStar,
    EstimatorKind::SecondStar,
    EstimatorKind::DwrStar,
];

const KNOWN_KEYS: [(&str, &[&str]); 5] = [
    ("case", &["name", "degree", "initial_grid"]),
    ("goal", &["center", "radius"]),
    ("run", &["refinement", "flux", "estimators", "fraction", "steps", "seed", "export_mesh"]),
    ("output", &["directory"]),
    ("reference", &["target_dofs", "cache"]),
];

/// Raw `section -> key -> value` table; duplicate keys and unknown entries are errors.
pub fn parse_sections(text: &str) -> Result<BTreeMap<String, BTreeMap<String, String>>, ConfigError> {
    let mut out: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    let mut section: Option<String> = None;
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let no = no + 1;
        if let Some(name) = line.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                return err(format!("line {no}: unterminated section header"));
            };
            let name = name.trim().to_string();
            if !KNOWN_KEYS.iter().any(|(s, _)| *s == name) {
                return err(format!("line {no}: unknown section [{name}]"));
            }
            out.entry(name.clone()).or_default();
            section = Some(name);
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return err(format!("line {no}: expected `key = value`"));
        };
        let Some(sec) = &section else {
            return err(format!("line {no}: entry outside of any section"));
        };
        let key = key.trim();
        let keys = KNOWN_KEYS.iter().find(|(s, _)| s == sec).map(|(_, k)| *k).unwrap_or(&[]);
        if !keys.contains(&key) {
            return err(format!("line {no}: unknown key `{key}` in [{sec}]"));
        }
        let table = out.entry(sec.clone()).or_default();
        if table.insert(key.to_string(), value.trim().to_string()).is_some() {
            return err(format!("line {no}: duplicate key `{key}` in [{sec}]"));
        }
    }
    Ok(out)
}

fn number<T: std::str::FromStr>(sec: &str, key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError(format!("[{sec}] {key}: cannot parse `{v}`")))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let t = parse_sections(text)?;
        let get = |sec: &str, key: &str| t.get(sec).and_then(|m| m.get(key)).map(String::as_str);

        let Some(case) = get("case", "name") else {
            return err("[case] name is required");
        };
        let degree: usize = match get("case", "degree") {
            Some(v) => number("case", "degree", v)?,
            None => 1,
        };
        let initial_grid = get("case", "initial_grid").map(|v| number("case", "initial_grid", v)).transpose()?;

        let flux = match get("run", "flux") {
            Some(v) => FluxMode::parse(v).ok_or_else(|| ConfigError(format!("[run] flux: unknown mode `{v}`")))?,
            None => FluxMode::Both,
        };
        let mut estimators = Vec::new();
        for name in get("run", "estimators").unwrap_or("").split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let kind = EstimatorKind::parse(name)
                .filter(|k| GOAL_INDICATORS.contains(k))
                .ok_or_else(|| ConfigError(format!("[run] estimators: `{name}` is not a goal indicator")))?;
            if estimators.contains(&kind) {
                return err(format!("[run] estimators: `{name}` listed twice"));
            }
            estimators.push(kind);
        }
        let refinement = match get("run", "refinement").unwrap_or("uniform") {
            "uniform" => Refinement::Uniform,
            "adaptive" => Refinement::Adaptive,
            v => return err(format!("[run] refinement: expected uniform or adaptive, got `{v}`")),
        };
        let fraction: f64 = match get("run", "fraction") {
            Some(v) => number("run", "fraction", v)?,
            None => 0.33,
        };
        let steps: usize = match get("run", "steps") {
            Some(v) => number("run", "steps", v)?,
            None => 5,
        };
        let seed: u64 = match get("run", "seed") {
            Some(v) => number("run", "seed", v)?,
            None => 0,
        };
        let export_mesh = match get("run", "export_mesh").unwrap_or("false") {
            "true" => true,
            "false" => false,
            v => return err(format!("[run] export_mesh: expected true or false, got `{v}`")),
        };

        let goal = match (get("goal", "center"), get("goal", "radius")) {
            (None, None) => None,
            (Some(c), Some(r)) => {
                let parts: Vec<&str> = c.split(',').map(str::trim).collect();
                if parts.len() != 2 {
                    return err("[goal] center: expected `x, y`");
                }
                let center = [number("goal", "center", parts[0])?, number("goal", "center", parts[1])?];
                Some(GoalSpec { center, radius: number("goal", "radius", r)? })
            }
            _ => return err("[goal] needs both center and radius"),
        };

        let reference = ReferenceSpec {
            target_dofs: get("reference", "target_dofs").map(|v| number("reference", "target_dofs", v)).transpose()?,
            cache: get("reference", "cache").map(PathBuf::from),
        };
        let output = PathBuf::from(get("output", "directory").unwrap_or("out"));

        let cfg = ExperimentConfig {
            case: case.to_string(),
            degree,
            flux,
            estimators,
            refinement,
            fraction,
            steps,
            initial_grid,
            goal,
            output,
            seed,
            export_mesh,
            reference,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if !(1..=4).contains(&self.degree) {
            return err(format!("[case] degree {} outside 1..=4", self.degree));
        }
        self.test_case()?;
        if let Some(n) = self.initial_grid {
            // Uniform studies also solve on the grid of half this size.
            if n < 2 || n % 2 != 0 {
                return err(format!("[case] initial_grid {n} must be even and at least 2"));
            }
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return err(format!("[run] fraction {} outside (0, 1]", self.fraction));
        }
        if self.is_goal() && self.goal.is_none() {
            return err("goal indicators need a [goal] section");
        }
        if let Some(t) = self.reference.target_dofs {
            if t == 0 {
                return err("[reference] target_dofs must be positive");
            }
        }
        Ok(())
    }

    pub fn is_goal(&self) -> bool {
        !self.estimators.is_empty()
    }

    /// Catalog case with the configured grid, goal and reference overrides applied.
    pub fn test_case(&self) -> Result<TestCase, ConfigError> {
        let mut case = case_by_name(&self.case, self.degree)
            .ok_or_else(|| ConfigError(format!("[case] name: unknown case `{}`", self.case)))?;
        if let Some(n) = self.initial_grid {
            case.n_initial = n;
            case.n_uniform = n;
        }
        if let Some(g) = self.goal {
            case.goal = GoalFunctional::regularized_point(case.domain, g.center, g.radius)
                .map_err(|e| ConfigError(format!("[goal]: {e}")))?;
        }
        if let Some(t) = self.reference.target_dofs {
            case.reference.target_dofs = t;
        }
        Ok(case)
    }
}
