//! Scenario configuration, read from a single JSON document.
//!
//! Quantities are in resource units unless noted; `kappa`, `p_bar` and
//! `p_forward` are prices per resource unit. Players are indexed from 0.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use slack_clearing::policy::{CollarConfig, GovernanceTolerances, ScenarioDistribution};
use slack_clearing::strategy::SEARCH_CAP;

use crate::generate::{Family, GeneratorSpec};
use crate::Command;

/// Invalid configuration, with the JSON path of the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

type Check = Result<(), ConfigError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Master seed. Required by every randomized experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub entitlements: Vec<f64>,
    /// Common action bound `M`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clear: Option<ClearSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dominance: Option<DominanceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coalition: Option<CoalitionSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<BoundarySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareSection>,
}

fn default_alphas() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Absolute band on `X - I` treated as the boundary.
    #[serde(default = "default_boundary_tol")]
    pub boundary: f64,
    /// Relative tolerance for budget and identity checks.
    #[serde(default = "default_numeric_tol")]
    pub numeric: f64,
}

fn default_boundary_tol() -> f64 {
    slack_clearing::DEFAULT_BOUNDARY_TOL
}

fn default_numeric_tol() -> f64 {
    1e-9
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            boundary: default_boundary_tol(),
            numeric: default_numeric_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClearSection {
    #[serde(default)]
    pub profiles: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DominanceSection {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_best_response_grid")]
    pub grid_size: usize,
    /// Also check unilateral deviations from `C = L`.
    #[serde(default = "yes")]
    pub nash_check: bool,
}

fn default_trials() -> usize {
    1000
}

fn default_best_response_grid() -> usize {
    201
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoalitionSection {
    #[serde(default = "default_coalition_grid")]
    pub grid_size: usize,
    /// Coalitions to search; every nonempty coalition when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coalitions: Option<Vec<Vec<usize>>>,
    #[serde(default = "default_cap")]
    pub cap: u64,
    /// Fixed profiles to account for, each with one coalition.
    #[serde(default)]
    pub accounting: Vec<AccountingSpec>,
}

fn default_coalition_grid() -> usize {
    11
}

fn default_cap() -> u64 {
    SEARCH_CAP as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccountingSpec {
    pub claims: Vec<f64>,
    pub coalition: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySection {
    /// Random overage vectors for the jump scan.
    #[serde(default = "default_scan_samples")]
    pub samples: usize,
    #[serde(default = "default_scan_players")]
    pub players: usize,
    #[serde(default)]
    pub noise: Vec<NoiseSpec>,
}

fn default_scan_samples() -> usize {
    10_000
}

fn default_scan_players() -> usize {
    3
}

/// A boundary profile and the noise scales to perturb it with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entitlements: Option<Vec<f64>>,
    pub claims: Vec<f64>,
    pub epsilons: Vec<f64>,
    #[serde(default = "default_noise_samples")]
    pub samples: usize,
}

fn default_noise_samples() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub collar: CollarConfig,
    #[serde(default)]
    pub periods: Vec<PeriodSpec>,
    /// Generates one profile per collar period instead of listing them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    pub governance: GovernanceTolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waiting_cost: Option<WaitingCostSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entitlements: Option<Vec<f64>>,
    pub claims: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaitingCostSpec {
    pub distribution: ScenarioDistribution,
    #[serde(default = "default_noise_samples")]
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    #[serde(default)]
    pub problems: Vec<ProblemSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stressed: Option<StressedSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub claims: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entitlements: Option<Vec<f64>>,
    pub estate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StressedSpec {
    #[serde(default = "default_stressed_problems")]
    pub problems: usize,
    #[serde(default = "default_stressed_players")]
    pub players: usize,
}

fn default_stressed_problems() -> usize {
    10_000
}

fn default_stressed_players() -> usize {
    4
}

/// Parse a config document, reporting the field path of any type error.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "$".to_string() } else { format!("$.{path}") };
        ConfigError::new(path, e.into_inner().to_string())
    })
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, crate::CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(parse_config(&text)?)
}

fn finite_nonneg(path: &str, x: f64) -> Check {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(ConfigError::new(path, format!("must be finite and nonnegative, got {x}")))
    }
}

fn positive(path: &str, x: f64) -> Check {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::new(path, format!("must be positive and finite, got {x}")))
    }
}

fn entitlement_vector(path: &str, ent: &[f64]) -> Check {
    if ent.is_empty() {
        return Err(ConfigError::new(path, "at least one entitlement is required"));
    }
    for (i, &l) in ent.iter().enumerate() {
        positive(&format!("{path}[{i}]"), l)?;
    }
    Ok(())
}

fn claim_vector(path: &str, claims: &[f64], players: usize, bound: Option<f64>) -> Check {
    if claims.is_empty() {
        return Err(ConfigError::new(path, "claim list is empty"));
    }
    if claims.len() != players {
        return Err(ConfigError::new(
            path,
            format!("{} claims for {players} entitlements", claims.len()),
        ));
    }
    for (i, &c) in claims.iter().enumerate() {
        let p = format!("{path}[{i}]");
        finite_nonneg(&p, c)?;
        if let Some(m) = bound {
            if c > m {
                return Err(ConfigError::new(p, format!("claim {c} exceeds the bound {m}")));
            }
        }
    }
    Ok(())
}

fn nonzero(path: &str, n: usize) -> Check {
    if n == 0 {
        Err(ConfigError::new(path, "must be positive"))
    } else {
        Ok(())
    }
}

impl ScenarioConfig {
    pub fn players(&self) -> usize {
        self.entitlements.len()
    }

    fn require_seed(&self, why: &str) -> Check {
        match self.seed {
            Some(_) => Ok(()),
            None => Err(ConfigError::new("$.seed", format!("a seed is required for {why}"))),
        }
    }

    fn require_entitlements(&self) -> Check {
        entitlement_vector("$.entitlements", &self.entitlements)
    }

    /// Finite bound strictly above every entitlement.
    fn require_strategic_bound(&self) -> Result<f64, ConfigError> {
        let m = self
            .bound
            .ok_or_else(|| ConfigError::new("$.bound", "an action bound is required"))?;
        positive("$.bound", m)?;
        let max_l = self.entitlements.iter().copied().fold(0.0, f64::max);
        if m <= max_l {
            return Err(ConfigError::new(
                "$.bound",
                format!("bound {m} must exceed the largest entitlement {max_l}"),
            ));
        }
        Ok(m)
    }

    fn check_alphas(&self) -> Check {
        if self.alphas.is_empty() {
            return Err(ConfigError::new("$.alphas", "at least one alpha is required"));
        }
        for (i, &a) in self.alphas.iter().enumerate() {
            positive(&format!("$.alphas[{i}]"), a)?;
        }
        Ok(())
    }

    fn check_common(&self) -> Check {
        finite_nonneg("$.tolerances.boundary", self.tolerances.boundary)?;
        positive("$.tolerances.numeric", self.tolerances.numeric)?;
        if let Some(m) = self.bound {
            positive("$.bound", m)?;
        }
        Ok(())
    }

    fn check_generator(&self, path: &str, g: &GeneratorSpec) -> Check {
        self.require_seed("generated profiles")?;
        self.require_entitlements()?;
        self.require_strategic_bound()
            .map_err(|e| ConfigError::new(e.path, format!("{} (needed by {path})", e.message)))?;
        nonzero(&format!("{path}.profiles"), g.profiles)?;
        let p = g.defection_probability;
        if !(0.0..=1.0).contains(&p) {
            return Err(ConfigError::new(
                format!("{path}.defection_probability"),
                format!("must lie in [0, 1], got {p}"),
            ));
        }
        Ok(())
    }

    pub fn validate(&self, command: Command) -> Check {
        self.check_common()?;
        match command {
            Command::Clear => self.validate_clear(),
            Command::Dominance => self.validate_dominance(),
            Command::Coalition => self.validate_coalition(),
            Command::Boundary => self.validate_boundary(),
            Command::Policy => self.validate_policy(),
            Command::Compare => self.validate_compare(),
        }
    }

    fn validate_clear(&self) -> Check {
        let sec = self
            .clear
            .as_ref()
            .ok_or_else(|| ConfigError::new("$.clear", "section is required by `clear`"))?;
        self.require_entitlements()?;
        self.check_alphas()?;
        if sec.profiles.is_empty() && sec.generator.is_none() {
            return Err(ConfigError::new("$.clear.profiles", "no profiles given and no generator"));
        }
        for (k, claims) in sec.profiles.iter().enumerate() {
            claim_vector(&format!("$.clear.profiles[{k}]"), claims, self.players(), self.bound)?;
        }
        if let Some(g) = &sec.generator {
            self.check_generator("$.clear.generator", g)?;
        }
        Ok(())
    }

    fn validate_dominance(&self) -> Check {
        let sec = self
            .dominance
            .as_ref()
            .ok_or_else(|| ConfigError::new("$.dominance", "section is required by `dominance`"))?;
        self.require_entitlements()?;
        self.require_strategic_bound()?;
        self.check_alphas()?;
        self.require_seed("the dominance sweep")?;
        nonzero("$.dominance.trials", sec.trials)?;
        if sec.grid_size < 2 {
            return Err(ConfigError::new("$.dominance.grid_size", "needs at least 2 points"));
        }
        Ok(())
    }

    fn validate_coalition(&self) -> Check {
        let sec = self
            .coalition
            .as_ref()
            .ok_or_else(|| ConfigError::new("$.coalition", "section is required by `coalition`"))?;
        self.require_entitlements()?;
        self.require_strategic_bound()?;
        let n = self.players();
        if sec.grid_size < 2 {
            return Err(ConfigError::new("$.coalition.grid_size", "needs at least 2 points"));
        }
        match &sec.coalitions {
            Some(list) => {
                for (k, members) in list.iter().enumerate() {
                    coalition_members(&format!("$.coalition.coalitions[{k}]"), members, n)?;
                }
            }
            None if n > 16 => {
                return Err(ConfigError::new(
                    "$.coalition.coalitions",
                    format!("list coalitions explicitly for {n} players"),
                ))
            }
            None => {}
        }
        for (k, a) in sec.accounting.iter().enumerate() {
            let path = format!("$.coalition.accounting[{k}]");
            claim_vector(&format!("{path}.claims"), &a.claims, n, self.bound)?;
            coalition_members(&format!("{path}.coalition"), &a.coalition, n)?;
        }
        Ok(())
    }

    fn validate_boundary(&self) -> Check {
        let sec = self
            .boundary
            .as_ref()
            .ok_or_else(|| ConfigError::new("$.boundary", "section is required by `boundary`"))?;
        self.check_alphas()?;
        self.require_seed("boundary sampling")?;
        nonzero("$.boundary.samples", sec.samples)?;
        nonzero("$.boundary.players", sec.players)?;
        for (k, spec) in sec.noise.iter().enumerate() {
            let path = format!("$.boundary.noise[{k}]");
            let ent = self.period_entitlements(&path, spec.entitlements.as_deref())?;
            claim_vector(&format!("{path}.claims"), &spec.claims, ent.len(), self.bound)?;
            if spec.epsilons.is_empty() {
                return Err(ConfigError::new(format!("{path}.epsilons"), "at least one noise scale is required"));
            }
            for (i, &e) in spec.epsilons.iter().enumerate() {
                positive(&format!("{path}.epsilons[{i}]"), e)?;
            }
            nonzero(&format!("{path}.samples"), spec.samples)?;
        }
        Ok(())
    }

    /// Entitlements of a sub-entry, falling back to the top-level vector.
    fn period_entitlements<'a>(&'a self, path: &str, own: Option<&'a [f64]>) -> Result<&'a [f64], ConfigError> {
        match own {
            Some(ent) => {
                entitlement_vector(&format!("{path}.entitlements"), ent)?;
                Ok(ent)
            }
            None => {
                self.require_entitlements()?;
                Ok(&self.entitlements)
            }
        }
    }

    fn validate_policy(&self) -> Check {
        let sec = self
            .policy
            .as_ref()
            .ok_or_else(|| ConfigError::new("$.policy", "section is required by `policy`"))?;
        sec.collar
            .validate()
            .map_err(|e| ConfigError::new("$.policy.collar", e.to_string()))?;
        sec.governance
            .validate()
            .map_err(|e| ConfigError::new("$.policy.governance", e.to_string()))?;
        let periods = sec.collar.periods();
        nonzero("$.policy.collar.kappa_schedule", periods)?;
        match (&sec.generator, sec.periods.is_empty()) {
            (Some(_), false) => {
                return Err(ConfigError::new("$.policy", "give either `periods` or `generator`, not both"))
            }
            (None, true) => return Err(ConfigError::new("$.policy.periods", "no periods given and no generator")),
            (Some(g), true) => {
                self.check_generator("$.policy.generator", g)?;
                if g.family == Family::Boundary {
                    return Err(ConfigError::new(
                        "$.policy.generator.family",
                        "the boundary family may skip profiles; use uniform or mixture",
                    ));
                }
                if g.profiles != periods {
                    return Err(ConfigError::new(
                        "$.policy.generator.profiles",
                        format!("{} profiles for {periods} collar periods", g.profiles),
                    ));
                }
            }
            (None, false) => {
                if sec.periods.len() != periods {
                    return Err(ConfigError::new(
                        "$.policy.periods",
                        format!("{} periods for {periods} collar periods", sec.periods.len()),
                    ));
                }
                for (t, p) in sec.periods.iter().enumerate() {
                    let path = format!("$.policy.periods[{t}]");
                    let ent = self.period_entitlements(&path, p.entitlements.as_deref())?;
                    claim_vector(&format!("{path}.claims"), &p.claims, ent.len(), self.bound)?;
                }
            }
        }
        if let Some(w) = &sec.waiting_cost {
            self.require_seed("the waiting-cost estimate")?;
            w.distribution
                .validate()
                .map_err(|e| ConfigError::new("$.policy.waiting_cost.distribution", e.to_string()))?;
            nonzero("$.policy.waiting_cost.samples", w.samples)?;
        }
        Ok(())
    }

    fn validate_compare(&self) -> Check {
        let sec = self
            .compare
            .as_ref()
            .ok_or_else(|| ConfigError::new("$.compare", "section is required by `compare`"))?;
        if sec.problems.is_empty() && sec.stressed.is_none() {
            return Err(ConfigError::new("$.compare.problems", "no problems given and no stressed sweep"));
        }
        for (k, p) in sec.problems.iter().enumerate() {
            let path = format!("$.compare.problems[{k}]");
            let ent = self.period_entitlements(&path, p.entitlements.as_deref())?;
            claim_vector(&format!("{path}.claims"), &p.claims, ent.len(), None)?;
            finite_nonneg(&format!("{path}.estate"), p.estate)?;
        }
        if let Some(s) = &sec.stressed {
            self.require_seed("the stressed sweep")?;
            nonzero("$.compare.stressed.problems", s.problems)?;
            if s.players < 2 {
                return Err(ConfigError::new("$.compare.stressed.players", "needs at least 2 players"));
            }
        }
        Ok(())
    }
}

fn coalition_members(path: &str, members: &[usize], players: usize) -> Check {
    if members.is_empty() {
        return Err(ConfigError::new(path, "coalition is empty"));
    }
    if let Some(&i) = members.iter().find(|&&i| i >= players) {
        return Err(ConfigError::new(path, format!("player {i} out of range for {players} players")));
    }
    Ok(())
}
