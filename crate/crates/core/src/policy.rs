//! Cap-and-share settlement with a penalty collar.
//!
//! Each period clears with the linear rule. Overage left uncovered,
//! `r_i = (v_i - covered_i)_+`, is charged `kappa_t` per unit, where
//! `kappa_t` is an exogenous penalty inside the collar `[kappa_lo, kappa_hi]`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::{
    clear_linear_raw, decompose, scarcity_factor, ClaimProfile, ClearingConfig, Entitlements,
    Regime, DEFAULT_BOUNDARY_TOL,
};
use crate::sampling::{mean_and_se, shard_rng, shards};

/// Slack allowed in the lower-bound check `marginal >= kappa * lambda`.
pub const LOWER_BOUND_TOL: f64 = 1e-9;

/// Penalty collar and the prices it is calibrated against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollarConfig {
    pub kappa_lo: f64,
    pub kappa_hi: f64,
    /// Realized penalty per period.
    pub kappa_schedule: Vec<f64>,
    /// Announced spot-price upper bound per period.
    pub p_bar: Vec<f64>,
    /// Published lower bound on expected scarcity, in `(0, 1]`.
    pub lambda_floor: f64,
    /// Forward price at decision time.
    pub p_forward: f64,
}

impl CollarConfig {
    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !finite_nonneg(self.kappa_lo) || !finite_nonneg(self.kappa_hi) || self.kappa_lo > self.kappa_hi {
            return Err(Error::InvalidCollar(format!(
                "bounds must satisfy 0 <= kappa_lo <= kappa_hi, got [{}, {}]",
                self.kappa_lo, self.kappa_hi
            )));
        }
        if self.p_bar.len() != self.kappa_schedule.len() {
            return Err(Error::InvalidCollar(format!(
                "p_bar has {} entries for {} periods",
                self.p_bar.len(),
                self.kappa_schedule.len()
            )));
        }
        if let Some(p) = self.p_bar.iter().find(|&&p| !finite_nonneg(p)) {
            return Err(Error::InvalidCollar(format!("p_bar entries must be nonnegative, got {p}")));
        }
        if !finite_nonneg(self.p_forward) {
            return Err(Error::InvalidCollar(format!(
                "forward price must be nonnegative, got {}",
                self.p_forward
            )));
        }
        check_lambda_floor(self.lambda_floor)?;
        for t in 0..self.kappa_schedule.len() {
            self.kappa(t)?;
        }
        Ok(())
    }

    pub fn periods(&self) -> usize {
        self.kappa_schedule.len()
    }

    /// Penalty for period `t`, checked against the collar.
    pub fn kappa(&self, t: usize) -> Result<f64> {
        let kappa = *self.kappa_schedule.get(t).ok_or(Error::PeriodOutOfRange {
            period: t,
            periods: self.kappa_schedule.len(),
        })?;
        if !(kappa >= self.kappa_lo && kappa <= self.kappa_hi) {
            return Err(Error::PenaltyOutsideCollar {
                period: t,
                kappa,
                lo: self.kappa_lo,
                hi: self.kappa_hi,
            });
        }
        Ok(kappa)
    }
}

fn check_lambda_floor(floor: f64) -> Result<()> {
    if floor > 0.0 && floor <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidLambdaFloor(floor))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodRecord {
    pub period: usize,
    pub total_overage: f64,
    pub total_slack: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub regime: Regime,
    pub payoffs: Vec<f64>,
    pub residuals: Vec<f64>,
    pub penalties: Vec<f64>,
    pub total_penalty: f64,
    /// `sum(pi) - (sum(L) - max(I - X, 0))`.
    pub budget_residual: f64,
    /// `max_i |r_i - lambda * v_i|` in scarcity, `max_i |r_i|` otherwise.
    pub residual_identity_error: f64,
    pub suspended: bool,
}

pub fn settle_period(
    claims: &ClaimProfile,
    ent: &Entitlements,
    collar: &CollarConfig,
    t: usize,
) -> Result<PeriodRecord> {
    let kappa = collar.kappa(t)?;
    let os = decompose(claims, ent)?;
    let out = clear_linear_raw(claims.claims(), ent, &ClearingConfig::default())?;
    let lambda = scarcity_factor(os.total_overage, os.total_slack)?;
    let residuals: Vec<f64> = os
        .overage
        .iter()
        .zip(&out.covered)
        .map(|(&v, &c)| (v - c).max(0.0))
        .collect();
    let penalties: Vec<f64> = residuals.iter().map(|r| kappa * r).collect();
    let residual_identity_error = residuals
        .iter()
        .zip(&os.overage)
        .map(|(&r, &v)| {
            if out.regime == Regime::Scarcity {
                (r - lambda * v).abs()
            } else {
                r.abs()
            }
        })
        .fold(0.0, f64::max);
    Ok(PeriodRecord {
        period: t,
        total_overage: os.total_overage,
        total_slack: os.total_slack,
        lambda,
        kappa,
        regime: out.regime,
        total_penalty: penalties.iter().sum(),
        budget_residual: out.budget_residual,
        payoffs: out.payoffs,
        residuals,
        penalties,
        residual_identity_error,
        suspended: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PenaltyRegion {
    /// `X < I`: extra overage is still covered.
    Slack,
    /// `X = I`: value is the right derivative.
    Kink,
    Scarcity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginalPenalty {
    pub value: f64,
    pub region: PenaltyRegion,
    /// Scarcity factor at the evaluation point.
    pub lambda: f64,
}

fn check_nonneg(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::NegativeQuantity { name, value })
    }
}

/// Analytic marginal penalty `kappa * d r_j / d v_j` with others' overage and
/// total slack held fixed.
pub fn marginal_penalty(overage: f64, others_overage: f64, slack: f64, kappa: f64) -> Result<MarginalPenalty> {
    if !(overage.is_finite() && overage > 0.0) {
        return Err(Error::NonPositiveOverage { index: 0, value: overage });
    }
    check_nonneg("others' overage", others_overage)?;
    check_nonneg("slack", slack)?;
    check_nonneg("kappa", kappa)?;
    let total = overage + others_overage;
    let lambda = scarcity_factor(total, slack)?;
    let gap = total - slack;
    let (value, region) = if gap.abs() <= DEFAULT_BOUNDARY_TOL {
        (kappa * (1.0 - slack * others_overage / (total * total)), PenaltyRegion::Kink)
    } else if gap < 0.0 {
        (0.0, PenaltyRegion::Slack)
    } else {
        (kappa * (1.0 - slack * others_overage / (total * total)), PenaltyRegion::Scarcity)
    };
    Ok(MarginalPenalty { value, region, lambda })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DifferenceScheme {
    Central,
    /// Used when `[v - h, v + h]` straddles the kink.
    Forward,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiniteDifference {
    pub value: f64,
    pub scheme: DifferenceScheme,
}

/// Penalty of the first player in a three-player instance built to have the
/// given own overage, others' overage and total slack, computed by clearing.
fn penalty_by_clearing(overage: f64, others_overage: f64, slack: f64, kappa: f64) -> Result<f64> {
    let ent = Entitlements::new(vec![1.0, 1.0, 1.0 + slack])?;
    let claims = [1.0 + overage, 1.0 + others_overage, 1.0];
    let out = clear_linear_raw(&claims, &ent, &ClearingConfig::default())?;
    let v = claims[0] - 1.0;
    Ok(kappa * (v - out.covered[0]).max(0.0))
}

/// Finite-difference marginal penalty through the clearing code path.
pub fn marginal_penalty_fd(
    overage: f64,
    others_overage: f64,
    slack: f64,
    kappa: f64,
    h: f64,
) -> Result<FiniteDifference> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidStep(h));
    }
    if !(overage.is_finite() && overage > 0.0) {
        return Err(Error::NonPositiveOverage { index: 0, value: overage });
    }
    check_nonneg("others' overage", others_overage)?;
    check_nonneg("slack", slack)?;
    check_nonneg("kappa", kappa)?;
    let total = overage + others_overage;
    let p = |v: f64| penalty_by_clearing(v, others_overage, slack, kappa);
    let straddles = total - h <= slack + DEFAULT_BOUNDARY_TOL && total + h > slack;
    if straddles || overage - h <= 0.0 {
        Ok(FiniteDifference {
            value: (p(overage + h)? - p(overage)?) / h,
            scheme: DifferenceScheme::Forward,
        })
    } else {
        Ok(FiniteDifference {
            value: (p(overage + h)? - p(overage - h)?) / (2.0 * h),
            scheme: DifferenceScheme::Central,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    ForwardStrictlyCheaper,
    ForwardWeaklyCheaper,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum InconclusiveReason {
    /// `kappa_t < p_bar_t`: the calibration premise does not hold.
    PenaltyBelowPriceCap,
    /// `p_bar_t * lambda_floor < p_forward`: the bound is too weak.
    BoundBelowForward,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArbitrageDecision {
    pub period: usize,
    pub kappa: f64,
    pub p_bar: f64,
    pub lambda_floor: f64,
    pub p_forward: f64,
    /// `p_bar * lambda_floor`, a lower bound on the expected penalty of waiting.
    pub waiting_cost_bound: f64,
    pub verdict: Verdict,
    pub reason: Option<InconclusiveReason>,
}

/// Compare forward purchase against waiting for clearing in period `t`.
pub fn arbitrage_check(collar: &CollarConfig, t: usize) -> Result<ArbitrageDecision> {
    check_lambda_floor(collar.lambda_floor)?;
    let kappa = collar.kappa(t)?;
    let p_bar = collar.p_bar[t];
    let bound = p_bar * collar.lambda_floor;
    let (verdict, reason) = if kappa < p_bar {
        (Verdict::Inconclusive, Some(InconclusiveReason::PenaltyBelowPriceCap))
    } else if bound > collar.p_forward {
        (Verdict::ForwardStrictlyCheaper, None)
    } else if bound == collar.p_forward {
        (Verdict::ForwardWeaklyCheaper, None)
    } else {
        (Verdict::Inconclusive, Some(InconclusiveReason::BoundBelowForward))
    };
    Ok(ArbitrageDecision {
        period: t,
        kappa,
        p_bar,
        lambda_floor: collar.lambda_floor,
        p_forward: collar.p_forward,
        waiting_cost_bound: bound,
        verdict,
        reason,
    })
}

/// Aggregates and penalty for one clearing scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub total_overage: f64,
    pub total_slack: f64,
    pub kappa: f64,
}

impl Scenario {
    fn validate(&self) -> Result<()> {
        check_nonneg("total overage", self.total_overage)?;
        check_nonneg("total slack", self.total_slack)?;
        check_nonneg("kappa", self.kappa)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedScenario {
    pub weight: f64,
    pub scenario: Scenario,
}

/// Explicit stand-in for the decision-time information set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioDistribution {
    Point { scenario: Scenario },
    Mixture { components: Vec<WeightedScenario> },
    /// Independent uniforms on inclusive ranges.
    Uniform {
        total_overage: [f64; 2],
        total_slack: [f64; 2],
        kappa: [f64; 2],
    },
}

impl ScenarioDistribution {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Point { scenario } => scenario.validate(),
            Self::Mixture { components } => {
                if components.is_empty() {
                    return Err(Error::InvalidDistribution("mixture has no components".into()));
                }
                for c in components {
                    if !(c.weight.is_finite() && c.weight > 0.0) {
                        return Err(Error::InvalidDistribution(format!(
                            "mixture weights must be positive, got {}",
                            c.weight
                        )));
                    }
                    c.scenario.validate()?;
                }
                Ok(())
            }
            Self::Uniform {
                total_overage,
                total_slack,
                kappa,
            } => {
                for (name, r) in [("total_overage", total_overage), ("total_slack", total_slack), ("kappa", kappa)] {
                    if !(r[0].is_finite() && r[1].is_finite() && 0.0 <= r[0] && r[0] <= r[1]) {
                        return Err(Error::InvalidDistribution(format!(
                            "{name} range must satisfy 0 <= lo <= hi, got [{}, {}]",
                            r[0], r[1]
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Scenario {
        match self {
            Self::Point { scenario } => *scenario,
            Self::Mixture { components } => {
                let total: f64 = components.iter().map(|c| c.weight).sum();
                let mut u = rng.gen::<f64>() * total;
                for c in components {
                    if u < c.weight {
                        return c.scenario;
                    }
                    u -= c.weight;
                }
                components.last().expect("validated nonempty").scenario
            }
            Self::Uniform {
                total_overage,
                total_slack,
                kappa,
            } => Scenario {
                total_overage: rng.gen_range(total_overage[0]..=total_overage[1]),
                total_slack: rng.gen_range(total_slack[0]..=total_slack[1]),
                kappa: rng.gen_range(kappa[0]..=kappa[1]),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaitingCostEstimate {
    /// Monte Carlo mean of `kappa * lambda`.
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
    /// Scenarios in scarcity, where the marginal-penalty bound was checked.
    pub checked: usize,
    /// Draws where the analytic marginal penalty fell below `kappa * lambda`.
    pub bound_violations: usize,
    /// Smallest `marginal - kappa * lambda` seen; `None` if nothing was checked.
    pub min_margin: Option<f64>,
}

struct WaitingShard {
    sum: f64,
    sum_sq: f64,
    checked: usize,
    violations: usize,
    min_margin: f64,
}

/// Expected unit cost of waiting, `E[kappa * lambda]`, with a per-draw check
/// of the marginal-penalty lower bound at a random split of `X` into
/// own and others' overage.
pub fn expected_waiting_cost(dist: &ScenarioDistribution, samples: usize, seed: u64) -> Result<WaitingCostEstimate> {
    if samples == 0 {
        return Err(Error::NoSamples);
    }
    dist.validate()?;
    let plan: Vec<(usize, usize)> = shards(samples).collect();
    let parts: Vec<WaitingShard> = plan
        .into_par_iter()
        .map(|(shard, count)| {
            let mut rng = shard_rng(seed, shard);
            let mut acc = WaitingShard {
                sum: 0.0,
                sum_sq: 0.0,
                checked: 0,
                violations: 0,
                min_margin: f64::INFINITY,
            };
            for _ in 0..count {
                let s = dist.sample(&mut rng);
                let lambda = scarcity_factor(s.total_overage, s.total_slack)?;
                let cost = s.kappa * lambda;
                acc.sum += cost;
                acc.sum_sq += cost * cost;
                if s.total_overage > s.total_slack {
                    let own = s.total_overage * (1.0 - rng.gen::<f64>());
                    let others = (s.total_overage - own).max(0.0);
                    let mp = marginal_penalty(own, others, s.total_slack, s.kappa)?;
                    let margin = mp.value - cost;
                    acc.checked += 1;
                    acc.min_margin = acc.min_margin.min(margin);
                    if margin < -LOWER_BOUND_TOL {
                        acc.violations += 1;
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;

    let (mut sum, mut sum_sq, mut checked, mut violations, mut min_margin) = (0.0, 0.0, 0, 0, f64::INFINITY);
    for p in &parts {
        sum += p.sum;
        sum_sq += p.sum_sq;
        checked += p.checked;
        violations += p.violations;
        min_margin = min_margin.min(p.min_margin);
    }
    let (mean, std_error) = mean_and_se(sum, sum_sq, samples);
    Ok(WaitingCostEstimate {
        mean,
        std_error,
        samples,
        checked,
        bound_violations: violations,
        min_margin: (checked > 0).then_some(min_margin),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GovernanceTolerances {
    pub max_lambda: f64,
    pub max_consecutive_scarcity: usize,
    pub review_window: usize,
}

impl GovernanceTolerances {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.max_lambda) {
            return Err(Error::InvalidTolerance(format!(
                "max_lambda must lie in [0, 1], got {}",
                self.max_lambda
            )));
        }
        if self.max_consecutive_scarcity == 0 || self.review_window == 0 {
            return Err(Error::InvalidTolerance(
                "max_consecutive_scarcity and review_window must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlertKind {
    LambdaBreach { lambda: f64, threshold: f64 },
    ScarcityRun { start: usize, length: usize },
    Suspension,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GovernanceAlert {
    pub period: usize,
    pub kind: AlertKind,
    /// Last period covered by the triggered review.
    pub review_until: usize,
}

impl GovernanceAlert {
    pub fn describe(&self) -> String {
        match &self.kind {
            AlertKind::LambdaBreach { lambda, threshold } => format!(
                "period {}: scarcity factor {lambda} exceeds {threshold}; review through period {}",
                self.period, self.review_until
            ),
            AlertKind::ScarcityRun { start, length } => format!(
                "period {}: {length} consecutive scarcity periods since period {start}; review through period {}",
                self.period, self.review_until
            ),
            AlertKind::Suspension => format!("period {}: clearing suspended", self.period),
        }
    }
}

/// Threshold breaches over a settlement history. Breaches are strict; a
/// scarcity run is reported once, at its last period.
pub fn governance_monitor(history: &[PeriodRecord], tol: &GovernanceTolerances) -> Vec<GovernanceAlert> {
    let mut alerts = Vec::new();
    let mut run: Option<(usize, usize)> = None;
    let close_run = |run: &mut Option<(usize, usize)>, alerts: &mut Vec<GovernanceAlert>, last: usize| {
        if let Some((start, length)) = run.take() {
            if length >= tol.max_consecutive_scarcity {
                alerts.push(GovernanceAlert {
                    period: last,
                    kind: AlertKind::ScarcityRun { start, length },
                    review_until: last + tol.review_window,
                });
            }
        }
    };
    let mut prev_period = None;
    for rec in history {
        if rec.suspended {
            alerts.push(GovernanceAlert {
                period: rec.period,
                kind: AlertKind::Suspension,
                review_until: rec.period + tol.review_window,
            });
        }
        if rec.lambda > tol.max_lambda {
            alerts.push(GovernanceAlert {
                period: rec.period,
                kind: AlertKind::LambdaBreach {
                    lambda: rec.lambda,
                    threshold: tol.max_lambda,
                },
                review_until: rec.period + tol.review_window,
            });
        }
        if rec.lambda > 0.0 {
            run = Some(match run {
                Some((start, length)) => (start, length + 1),
                None => (rec.period, 1),
            });
        } else if let Some(last) = prev_period {
            close_run(&mut run, &mut alerts, last);
        }
        prev_period = Some(rec.period);
    }
    if let Some(last) = prev_period {
        close_run(&mut run, &mut alerts, last);
    }
    alerts
}

/// Hook consulted after each settlement. No rule is prescribed; the default never suspends.
pub trait SuspensionRule {
    fn suspend(&self, _record: &PeriodRecord) -> bool {
        false
    }
}

pub struct NeverSuspend;

impl SuspensionRule for NeverSuspend {}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyRun {
    pub records: Vec<PeriodRecord>,
    pub alerts: Vec<GovernanceAlert>,
    pub arbitrage: Vec<ArbitrageDecision>,
    /// Realized mean scarcity, for comparison with the published floor.
    pub empirical_mean_lambda: f64,
}

/// Settle every period in order, then monitor and check arbitrage per period.
pub fn simulate(
    periods: &[(Entitlements, ClaimProfile)],
    collar: &CollarConfig,
    tol: &GovernanceTolerances,
    suspension: &dyn SuspensionRule,
) -> Result<PolicyRun> {
    collar.validate()?;
    tol.validate()?;
    if periods.len() != collar.periods() {
        return Err(Error::InvalidCollar(format!(
            "collar schedule has {} periods, scenario has {}",
            collar.periods(),
            periods.len()
        )));
    }
    let mut records = Vec::with_capacity(periods.len());
    for (t, (ent, claims)) in periods.iter().enumerate() {
        let mut rec = settle_period(claims, ent, collar, t)?;
        rec.suspended = suspension.suspend(&rec);
        records.push(rec);
    }
    let alerts = governance_monitor(&records, tol);
    let arbitrage = (0..periods.len())
        .map(|t| arbitrage_check(collar, t))
        .collect::<Result<_>>()?;
    let empirical_mean_lambda = if records.is_empty() {
        0.0
    } else {
        records.iter().map(|r| r.lambda).sum::<f64>() / records.len() as f64
    };
    Ok(PolicyRun {
        records,
        alerts,
        arbitrage,
        empirical_mean_lambda,
    })
}
