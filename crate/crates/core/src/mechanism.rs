//! Overage/slack decomposition and end-of-period clearing.
//!
//! Every player `j` holds an entitlement `L_j > 0` and submits a claim
//! `C_j >= 0`. The claim splits into an overage `v_j = (C_j - L_j)_+` and a
//! slack `s_j = (L_j - C_j)_+`. Total slack `I` is handed to defectors
//! (players with `C_j > L_j`) in proportion to their overage, or to a power
//! `alpha` of it; cooperators always receive exactly their claim.

use serde::Serialize;

use crate::error::{Error, Result};

/// Default absolute tolerance on `X - I` used to tag the boundary regime.
pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-12;

#[inline]
fn positive_part(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Per-player entitlements `L`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Entitlements(Vec<f64>);

impl Entitlements {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::NoPlayers);
        }
        for (index, &value) in values.iter().enumerate() {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidEntitlement { index, value });
            }
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, player: usize) -> f64 {
        self.0[player]
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A claim vector together with the common action bound `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClaimProfile {
    claims: Vec<f64>,
    bound: f64,
}

impl ClaimProfile {
    /// Claims restricted to `[0, bound]`.
    pub fn new(claims: Vec<f64>, bound: f64) -> Result<Self> {
        if !(bound > 0.0) || bound.is_nan() {
            return Err(Error::InvalidBound(bound));
        }
        if claims.is_empty() {
            return Err(Error::NoPlayers);
        }
        for (index, &value) in claims.iter().enumerate() {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::InvalidClaim { index, value });
            }
            if value > bound {
                return Err(Error::ClaimAboveBound { index, value, bound });
            }
        }
        Ok(Self { claims, bound })
    }

    /// Claims with no upper bound (`M = +inf`). Clearing never looks at `M`.
    pub fn unbounded(claims: Vec<f64>) -> Result<Self> {
        Self::new(claims, f64::INFINITY)
    }

    pub fn claims(&self) -> &[f64] {
        &self.claims
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn len(&self) -> usize {
        self.claims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.claims.is_empty()
    }

    /// Copy of this profile with player `player` claiming `claim`.
    pub fn with_claim(&self, player: usize, claim: f64) -> Result<Self> {
        if player >= self.claims.len() {
            return Err(Error::PlayerOutOfRange {
                index: player,
                players: self.claims.len(),
            });
        }
        let mut claims = self.claims.clone();
        claims[player] = claim;
        Self::new(claims, self.bound)
    }
}

/// Result of splitting a claim profile into overages and slacks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverageSlack {
    pub overage: Vec<f64>,
    pub slack: Vec<f64>,
    pub total_overage: f64,
    pub total_slack: f64,
    /// Players with `C_j <= L_j`.
    pub cooperators: Vec<usize>,
    /// Players with `C_j > L_j`.
    pub defectors: Vec<usize>,
}

impl OverageSlack {
    pub fn is_defector(&self, player: usize) -> bool {
        self.overage[player] > 0.0
    }
}

pub fn decompose(profile: &ClaimProfile, ent: &Entitlements) -> Result<OverageSlack> {
    decompose_raw(profile.claims(), ent)
}

pub(crate) fn decompose_raw(claims: &[f64], ent: &Entitlements) -> Result<OverageSlack> {
    if claims.len() != ent.len() {
        return Err(Error::LengthMismatch {
            claims: claims.len(),
            entitlements: ent.len(),
        });
    }
    let n = claims.len();
    let mut overage = Vec::with_capacity(n);
    let mut slack = Vec::with_capacity(n);
    let mut cooperators = Vec::new();
    let mut defectors = Vec::new();
    for (j, (&c, &l)) in claims.iter().zip(ent.as_slice()).enumerate() {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::InvalidClaim { index: j, value: c });
        }
        overage.push(positive_part(c - l));
        slack.push(positive_part(l - c));
        if c <= l {
            cooperators.push(j);
        } else {
            defectors.push(j);
        }
    }
    Ok(OverageSlack {
        total_overage: overage.iter().sum(),
        total_slack: slack.iter().sum(),
        overage,
        slack,
        cooperators,
        defectors,
    })
}

/// Clearing exponent `alpha > 0`; `alpha = 1` is the linear rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaRule(f64);

impl AlphaRule {
    pub const LINEAR: AlphaRule = AlphaRule(1.0);

    pub fn new(alpha: f64) -> Result<Self> {
        if alpha.is_finite() && alpha > 0.0 {
            Ok(Self(alpha))
        } else {
            Err(Error::InvalidAlpha(alpha))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_linear(self) -> bool {
        self.0 == 1.0
    }

    /// `v^alpha` for a strictly positive overage.
    #[inline]
    pub fn weight(self, overage: f64) -> f64 {
        debug_assert!(overage > 0.0);
        overage.powf(self.0)
    }
}

impl Default for AlphaRule {
    fn default() -> Self {
        Self::LINEAR
    }
}

/// Which side of `X = I` a profile falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Regime {
    /// `X < I`: all overage is covered, `I - X` is left unused.
    Slack,
    /// `|X - I| <= tol`, cleared with the slack branch.
    Boundary,
    /// `X > I`: overage is rationed.
    Scarcity,
}

impl Regime {
    pub fn classify(total_overage: f64, total_slack: f64, tol: f64) -> Self {
        let gap = total_overage - total_slack;
        if gap.abs() <= tol {
            Regime::Boundary
        } else if gap < 0.0 {
            Regime::Slack
        } else {
            Regime::Scarcity
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Slack => "slack",
            Regime::Boundary => "boundary",
            Regime::Scarcity => "scarcity",
        }
    }
}

/// Tunables shared by the clearing functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClearingConfig {
    pub boundary_tol: f64,
}

impl ClearingConfig {
    pub fn new(boundary_tol: f64) -> Result<Self> {
        if boundary_tol.is_finite() && boundary_tol >= 0.0 {
            Ok(Self { boundary_tol })
        } else {
            Err(Error::InvalidTolerance(format!(
                "boundary tolerance must be finite and nonnegative, got {boundary_tol}"
            )))
        }
    }
}

impl Default for ClearingConfig {
    fn default() -> Self {
        Self {
            boundary_tol: DEFAULT_BOUNDARY_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClearingOutcome {
    /// Covered overage per player; zero for cooperators.
    pub covered: Vec<f64>,
    pub payoffs: Vec<f64>,
    pub regime: Regime,
    pub alpha: f64,
    /// `sum(payoffs) - (sum(L) - max(I - X, 0))`.
    pub budget_residual: f64,
}

impl ClearingOutcome {
    pub fn total_payoff(&self) -> f64 {
        self.payoffs.iter().sum()
    }

    pub fn total_covered(&self) -> f64 {
        self.covered.iter().sum()
    }
}

fn assemble(
    claims: &[f64],
    ent: &Entitlements,
    os: &OverageSlack,
    covered: Vec<f64>,
    regime: Regime,
    alpha: f64,
) -> ClearingOutcome {
    let payoffs: Vec<f64> = claims
        .iter()
        .zip(ent.as_slice())
        .zip(&covered)
        .map(|((&c, &l), &vh)| if c <= l { c } else { l + vh })
        .collect();
    let mut outcome = ClearingOutcome {
        covered,
        payoffs,
        regime,
        alpha,
        budget_residual: 0.0,
    };
    outcome.budget_residual = budget_identity_residual(&outcome, ent, os);
    outcome
}

/// Linear (`alpha = 1`) clearing with the default boundary tolerance.
pub fn clear_linear(profile: &ClaimProfile, ent: &Entitlements) -> Result<ClearingOutcome> {
    clear_linear_with(profile, ent, &ClearingConfig::default())
}

pub fn clear_linear_with(
    profile: &ClaimProfile,
    ent: &Entitlements,
    cfg: &ClearingConfig,
) -> Result<ClearingOutcome> {
    clear_linear_raw(profile.claims(), ent, cfg)
}

pub(crate) fn clear_linear_raw(
    claims: &[f64],
    ent: &Entitlements,
    cfg: &ClearingConfig,
) -> Result<ClearingOutcome> {
    let os = decompose_raw(claims, ent)?;
    let regime = Regime::classify(os.total_overage, os.total_slack, cfg.boundary_tol);
    let covered = match regime {
        Regime::Slack | Regime::Boundary => os.overage.clone(),
        Regime::Scarcity => {
            let ratio = os.total_slack / os.total_overage;
            os.overage.iter().map(|&v| ratio * v).collect()
        }
    };
    Ok(assemble(claims, ent, &os, covered, regime, 1.0))
}

/// Power-family clearing with the default boundary tolerance.
pub fn clear_alpha(
    profile: &ClaimProfile,
    ent: &Entitlements,
    rule: AlphaRule,
) -> Result<ClearingOutcome> {
    clear_alpha_with(profile, ent, rule, &ClearingConfig::default())
}

pub fn clear_alpha_with(
    profile: &ClaimProfile,
    ent: &Entitlements,
    rule: AlphaRule,
    cfg: &ClearingConfig,
) -> Result<ClearingOutcome> {
    clear_alpha_raw(profile.claims(), ent, rule, cfg)
}

pub(crate) fn clear_alpha_raw(
    claims: &[f64],
    ent: &Entitlements,
    rule: AlphaRule,
    cfg: &ClearingConfig,
) -> Result<ClearingOutcome> {
    let os = decompose_raw(claims, ent)?;
    let regime = Regime::classify(os.total_overage, os.total_slack, cfg.boundary_tol);
    let covered = match regime {
        Regime::Slack | Regime::Boundary => os.overage.clone(),
        Regime::Scarcity => {
            // Only strictly positive overages enter the weight sum.
            let weights: Vec<f64> = os
                .overage
                .iter()
                .map(|&v| if v > 0.0 { rule.weight(v) } else { 0.0 })
                .collect();
            let total: f64 = weights.iter().sum();
            assert!(total > 0.0, "scarcity regime without positive overage");
            weights
                .iter()
                .map(|&w| os.total_slack * w / total)
                .collect()
        }
    };
    Ok(assemble(claims, ent, &os, covered, regime, rule.value()))
}

/// `sum(pi) - (sum(L) - max(I - X, 0))`; zero for every alpha.
pub fn budget_identity_residual(
    outcome: &ClearingOutcome,
    ent: &Entitlements,
    os: &OverageSlack,
) -> f64 {
    let unused = positive_part(os.total_slack - os.total_overage);
    outcome.total_payoff() - (ent.total() - unused)
}

/// Uncovered fraction of total overage, `max(0, (X - I) / X)`, and `0` when `X = 0`.
pub fn scarcity_factor(total_overage: f64, total_slack: f64) -> Result<f64> {
    if !(total_overage.is_finite() && total_overage >= 0.0) {
        return Err(Error::NegativeQuantity {
            name: "total overage",
            value: total_overage,
        });
    }
    if !(total_slack.is_finite() && total_slack >= 0.0) {
        return Err(Error::NegativeQuantity {
            name: "total slack",
            value: total_slack,
        });
    }
    if total_overage == 0.0 {
        return Ok(0.0);
    }
    Ok(positive_part((total_overage - total_slack) / total_overage))
}
