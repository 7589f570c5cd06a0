//! One-player and coalition deviation checks.
//!
//! Best replies are scanned on grids that always contain the analytically
//! interesting claims: `0`, the player's entitlement, the kink where the
//! player's own overage closes the slack gap, a point just past the kink,
//! and the bound `M`. Coalition deviations are searched exhaustively on a
//! per-member grid against a complement that claims `M`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mechanism::{
    clear_alpha_raw, clear_linear_raw, decompose_raw, AlphaRule, ClaimProfile, ClearingConfig,
    Entitlements, Regime,
};

/// Relative tolerance for "nondecreasing" along a payoff curve.
pub const MONOTONE_TOL: f64 = 1e-12;
/// Absolute tolerance for coalition payoff comparisons.
pub const COALITION_TOL: f64 = 1e-9;
/// Largest coalition search accepted, measured as `|K| * prod(grid lengths)`.
pub const SEARCH_CAP: u128 = 10_000_000;

fn check_player(player: usize, n: usize) -> Result<()> {
    if player < n {
        Ok(())
    } else {
        Err(Error::PlayerOutOfRange {
            index: player,
            players: n,
        })
    }
}

/// Payoff of `player` when claiming `claim` while everyone else keeps their
/// entry in `others` (the player's own entry is ignored).
pub fn payoff_of(
    player: usize,
    claim: f64,
    others: &ClaimProfile,
    ent: &Entitlements,
    rule: AlphaRule,
) -> Result<f64> {
    payoff_of_with(player, claim, others, ent, rule, &ClearingConfig::default())
}

pub fn payoff_of_with(
    player: usize,
    claim: f64,
    others: &ClaimProfile,
    ent: &Entitlements,
    rule: AlphaRule,
    cfg: &ClearingConfig,
) -> Result<f64> {
    check_player(player, others.len())?;
    let profile = others.with_claim(player, claim)?;
    let out = clear_alpha_raw(profile.claims(), ent, rule, cfg)?;
    Ok(out.payoffs[player])
}

/// Aggregates of everyone except one player.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OthersAggregates {
    pub overage: f64,
    pub slack: f64,
    /// `sum_{m != j} v_m^alpha` over positive overages.
    pub weight: f64,
}

impl OthersAggregates {
    pub fn of(player: usize, others: &ClaimProfile, ent: &Entitlements, rule: AlphaRule) -> Result<Self> {
        check_player(player, others.len())?;
        let os = decompose_raw(others.claims(), ent)?;
        let mut agg = OthersAggregates {
            overage: 0.0,
            slack: 0.0,
            weight: 0.0,
        };
        for m in (0..os.overage.len()).filter(|&m| m != player) {
            agg.overage += os.overage[m];
            agg.slack += os.slack[m];
            if os.overage[m] > 0.0 {
                agg.weight += rule.weight(os.overage[m]);
            }
        }
        Ok(agg)
    }

    /// Own overage at which total overage meets total slack.
    pub fn kink(&self) -> f64 {
        (self.slack - self.overage).max(0.0)
    }
}

/// Payoff from the own-overage branch formula, independent of the clearing code path.
pub fn payoff_closed_form(
    player: usize,
    claim: f64,
    others: &ClaimProfile,
    ent: &Entitlements,
    rule: AlphaRule,
    cfg: &ClearingConfig,
) -> Result<f64> {
    let agg = OthersAggregates::of(player, others, ent, rule)?;
    let l = ent.get(player);
    if claim <= l {
        return Ok(claim);
    }
    let y = claim - l;
    match Regime::classify(agg.overage + y, agg.slack, cfg.boundary_tol) {
        Regime::Slack | Regime::Boundary => Ok(l + y),
        Regime::Scarcity => {
            let w = rule.weight(y);
            Ok(l + agg.slack * w / (agg.weight + w))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonotonicityViolation {
    pub from_claim: f64,
    pub to_claim: f64,
    pub drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestResponseReport {
    pub player: usize,
    pub grid: Vec<f64>,
    pub payoff_curve: Vec<f64>,
    /// Largest grid claim whose payoff is within tolerance of the maximum.
    pub argmax_claim: f64,
    pub monotone: bool,
    pub first_violation: Option<MonotonicityViolation>,
    pub worst_drop: f64,
}

fn uniform_grid(bound: f64, size: usize) -> Vec<f64> {
    let last = (size - 1) as f64;
    (0..size).map(|i| i as f64 * bound / last).collect()
}

fn sort_dedup(mut grid: Vec<f64>) -> Vec<f64> {
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Claim grid on `[0, M]` with the critical points of one player's payoff.
pub fn best_response_grid(entitlement: f64, kink: f64, bound: f64, size: usize) -> Vec<f64> {
    let mut grid = uniform_grid(bound, size);
    grid.push(0.0);
    grid.push(entitlement);
    grid.push(bound);
    let kink_claim = entitlement + kink;
    if kink_claim <= bound {
        grid.push(kink_claim);
        let past = kink_claim + 1e-9 * kink_claim.max(1.0);
        if past < bound {
            grid.push(past);
        }
    }
    sort_dedup(grid)
}

pub fn best_response(
    player: usize,
    others: &ClaimProfile,
    ent: &Entitlements,
    rule: AlphaRule,
    grid_size: usize,
) -> Result<BestResponseReport> {
    best_response_with(player, others, ent, rule, grid_size, &ClearingConfig::default())
}

pub fn best_response_with(
    player: usize,
    others: &ClaimProfile,
    ent: &Entitlements,
    rule: AlphaRule,
    grid_size: usize,
    cfg: &ClearingConfig,
) -> Result<BestResponseReport> {
    if grid_size < 2 {
        return Err(Error::GridTooSmall(grid_size));
    }
    let bound = others.bound();
    // An infinite bound also fails here. That is intended: no grid exists.
    if !(bound > ent.max()) || !bound.is_finite() {
        return Err(Error::BoundTooSmall {
            bound,
            max_entitlement: ent.max(),
        });
    }
    let agg = OthersAggregates::of(player, others, ent, rule)?;
    let grid = best_response_grid(ent.get(player), agg.kink(), bound, grid_size);

    let mut claims = others.claims().to_vec();
    let mut payoff_curve = Vec::with_capacity(grid.len());
    for &c in &grid {
        claims[player] = c;
        payoff_curve.push(clear_alpha_raw(&claims, ent, rule, cfg)?.payoffs[player]);
    }

    let mut first_violation = None;
    let mut worst_drop = 0.0_f64;
    for k in 1..grid.len() {
        let drop = payoff_curve[k - 1] - payoff_curve[k];
        if drop > MONOTONE_TOL * payoff_curve[k - 1].abs().max(1.0) {
            worst_drop = worst_drop.max(drop);
            first_violation.get_or_insert(MonotonicityViolation {
                from_claim: grid[k - 1],
                to_claim: grid[k],
                drop,
            });
        }
    }

    let best = payoff_curve.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tie_tol = MONOTONE_TOL * best.abs().max(1.0);
    let argmax = (0..grid.len())
        .rev()
        .find(|&k| payoff_curve[k] >= best - tie_tol)
        .expect("grid is nonempty");

    Ok(BestResponseReport {
        player,
        argmax_claim: grid[argmax],
        monotone: first_violation.is_none(),
        first_violation,
        worst_drop,
        grid,
        payoff_curve,
    })
}

/// Draw an opponent profile: each player cooperates (claim in `[0, L]`) or
/// defects (claim in `(L, M]`) with equal probability.
fn random_profile(rng: &mut ChaCha8Rng, ent: &Entitlements, bound: f64) -> Vec<f64> {
    ent.as_slice()
        .iter()
        .map(|&l| {
            if rng.gen_bool(0.5) {
                rng.gen_range(0.0..=l)
            } else {
                l + (bound - l) * (1.0 - rng.gen::<f64>())
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepWorst {
    pub trial: usize,
    pub player: usize,
    pub violation: MonotonicityViolation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceSummary {
    pub alpha: f64,
    /// True at alpha = 1, where zero violations is guaranteed; otherwise only reported.
    pub guaranteed: bool,
    pub trials: usize,
    pub players: usize,
    pub evaluations: usize,
    pub violations: usize,
    pub argmax_off_bound: usize,
    pub worst_drop: f64,
    pub worst: Option<SweepWorst>,
}

impl DominanceSummary {
    /// Failure only counts where the guarantee applies.
    pub fn guarantee_violated(&self) -> bool {
        self.guaranteed && (self.violations > 0 || self.argmax_off_bound > 0)
    }
}

/// Best-response scans for every player against `trials` random opponent profiles.
pub fn dominance_sweep(
    ent: &Entitlements,
    rule: AlphaRule,
    bound: f64,
    trials: usize,
    grid_size: usize,
    seed: u64,
) -> Result<DominanceSummary> {
    dominance_sweep_with(ent, rule, bound, trials, grid_size, seed, &ClearingConfig::default())
}

pub fn dominance_sweep_with(
    ent: &Entitlements,
    rule: AlphaRule,
    bound: f64,
    trials: usize,
    grid_size: usize,
    seed: u64,
    cfg: &ClearingConfig,
) -> Result<DominanceSummary> {
    let n = ent.len();
    let per_trial: Vec<Vec<BestResponseReport>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64);
            let others = ClaimProfile::new(random_profile(&mut rng, ent, bound), bound)?;
            (0..n)
                .map(|j| best_response_with(j, &others, ent, rule, grid_size, cfg))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut summary = DominanceSummary {
        alpha: rule.value(),
        guaranteed: rule.is_linear(),
        trials,
        players: n,
        evaluations: 0,
        violations: 0,
        argmax_off_bound: 0,
        worst_drop: 0.0,
        worst: None,
    };
    for (trial, reports) in per_trial.iter().enumerate() {
        for r in reports {
            summary.evaluations += r.grid.len();
            if r.argmax_claim != bound {
                summary.argmax_off_bound += 1;
            }
            if let Some(v) = r.first_violation {
                summary.violations += 1;
                if r.worst_drop > summary.worst_drop {
                    summary.worst_drop = r.worst_drop;
                    summary.worst = Some(SweepWorst {
                        trial,
                        player: r.player,
                        violation: v,
                    });
                }
            }
        }
    }
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NashWitness {
    pub player: usize,
    pub claim: f64,
    pub payoff: f64,
    pub baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NashCheck {
    pub holds: bool,
    pub deviations_checked: usize,
    pub witness: Option<NashWitness>,
}

/// Unilateral deviations from `C = L`: none may pay more than `L_j`, and any
/// claim at or above `L_j` must pay exactly `L_j`.
pub fn cooperative_nash_check(ent: &Entitlements, bound: f64, grid_size: usize) -> Result<NashCheck> {
    if grid_size < 2 {
        return Err(Error::GridTooSmall(grid_size));
    }
    if !(bound > ent.max()) || !bound.is_finite() {
        return Err(Error::BoundTooSmall {
            bound,
            max_entitlement: ent.max(),
        });
    }
    let cfg = ClearingConfig::default();
    let mut checked = 0;
    for j in 0..ent.len() {
        let l = ent.get(j);
        let grid = sort_dedup({
            let mut g = uniform_grid(bound, grid_size);
            g.push(l);
            g
        });
        let mut claims = ent.as_slice().to_vec();
        for &c in &grid {
            claims[j] = c;
            let payoff = clear_linear_raw(&claims, ent, &cfg)?.payoffs[j];
            checked += 1;
            let bad = payoff > l || (c >= l && payoff != l);
            if bad {
                return Ok(NashCheck {
                    holds: false,
                    deviations_checked: checked,
                    witness: Some(NashWitness {
                        player: j,
                        claim: c,
                        payoff,
                        baseline: l,
                    }),
                });
            }
        }
    }
    Ok(NashCheck {
        holds: true,
        deviations_checked: checked,
        witness: None,
    })
}

/// A nonempty set of player indices (0-based), kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Coalition(Vec<usize>);

impl Coalition {
    pub fn new(mut members: Vec<usize>, players: usize) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptyCoalition);
        }
        members.sort_unstable();
        members.dedup();
        if let Some(&bad) = members.iter().find(|&&m| m >= players) {
            return Err(Error::PlayerOutOfRange { index: bad, players });
        }
        Ok(Self(members))
    }

    pub fn from_mask(mask: u64, players: usize) -> Result<Self> {
        Self::new((0..players).filter(|&j| mask >> j & 1 == 1).collect(), players)
    }

    /// Every nonempty coalition of `players`, ordered by bitmask.
    pub fn all(players: usize) -> Vec<Coalition> {
        assert!(players < 64);
        (1..(1u64 << players))
            .map(|mask| Self::from_mask(mask, players).expect("mask is nonempty"))
            .collect()
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, player: usize) -> bool {
        self.0.binary_search(&player).is_ok()
    }

    pub fn label(&self) -> String {
        self.0
            .iter()
            .map(|m| m.to_string())
            .collect::<Vec<_>>()
            .join("+")
    }
}

fn check_coalition(coalition: &Coalition, n: usize) -> Result<()> {
    match coalition.members().last() {
        None => Err(Error::EmptyCoalition),
        Some(&m) if m >= n => Err(Error::PlayerOutOfRange { index: m, players: n }),
        _ => Ok(()),
    }
}

/// Coalition aggregate payoff computed from the linear clearing outcome.
pub fn coalition_payoff(profile: &ClaimProfile, ent: &Entitlements, coalition: &Coalition) -> Result<f64> {
    check_coalition(coalition, profile.len())?;
    let out = clear_linear_raw(profile.claims(), ent, &ClearingConfig::default())?;
    Ok(coalition.members().iter().map(|&i| out.payoffs[i]).sum())
}

/// Pieces of the coalition payoff identity
/// `sum_K pi = sum_K L - I_K + sum_{K and D} covered`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoalitionAccounting {
    pub direct: f64,
    /// Identity using the covered overage of coalition defectors.
    pub identity: f64,
    /// Prediction from aggregates alone: `X_K` covered when `X <= I`, else `I * X_K / X`.
    pub aggregate: f64,
    pub entitlement_sum: f64,
    pub coalition_overage: f64,
    pub coalition_slack: f64,
    pub complement_overage: f64,
    pub complement_slack: f64,
    pub regime: Regime,
}

impl CoalitionAccounting {
    pub fn closed_form_error(&self) -> f64 {
        (self.direct - self.identity)
            .abs()
            .max((self.direct - self.aggregate).abs())
    }
}

fn account(claims: &[f64], ent: &Entitlements, coalition: &Coalition, cfg: &ClearingConfig) -> Result<CoalitionAccounting> {
    let out = clear_linear_raw(claims, ent, cfg)?;
    let os = decompose_raw(claims, ent)?;
    let mut acc = CoalitionAccounting {
        direct: 0.0,
        identity: 0.0,
        aggregate: 0.0,
        entitlement_sum: 0.0,
        coalition_overage: 0.0,
        coalition_slack: 0.0,
        complement_overage: 0.0,
        complement_slack: 0.0,
        regime: out.regime,
    };
    let mut covered_in_k = 0.0;
    for j in 0..claims.len() {
        if coalition.contains(j) {
            acc.direct += out.payoffs[j];
            acc.entitlement_sum += ent.get(j);
            acc.coalition_overage += os.overage[j];
            acc.coalition_slack += os.slack[j];
            if os.is_defector(j) {
                covered_in_k += out.covered[j];
            }
        } else {
            acc.complement_overage += os.overage[j];
            acc.complement_slack += os.slack[j];
        }
    }
    acc.identity = acc.entitlement_sum - acc.coalition_slack + covered_in_k;
    let covered_pred = match out.regime {
        Regime::Slack | Regime::Boundary => acc.coalition_overage,
        Regime::Scarcity => os.total_slack * acc.coalition_overage / os.total_overage,
    };
    acc.aggregate = acc.entitlement_sum - acc.coalition_slack + covered_pred;
    Ok(acc)
}

pub fn coalition_accounting(profile: &ClaimProfile, ent: &Entitlements, coalition: &Coalition) -> Result<CoalitionAccounting> {
    check_coalition(coalition, profile.len())?;
    account(profile.claims(), ent, coalition, &ClearingConfig::default())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoalitionReport {
    pub coalition: Coalition,
    pub baseline_sum: f64,
    pub best_deviation_sum: f64,
    /// Claims of the coalition members at the best deviation, in member order.
    pub best_deviation: Vec<f64>,
    pub bound_satisfied: bool,
    pub closed_form_check: f64,
    pub evaluations: u64,
}

/// Exhaustive grid search over coalition claims with the complement fixed at `M`.
pub fn coalition_proofness_search(
    ent: &Entitlements,
    bound: f64,
    coalition: &Coalition,
    grid_size: usize,
) -> Result<CoalitionReport> {
    coalition_proofness_search_capped(ent, bound, coalition, grid_size, SEARCH_CAP)
}

pub fn coalition_proofness_search_capped(
    ent: &Entitlements,
    bound: f64,
    coalition: &Coalition,
    grid_size: usize,
    cap: u128,
) -> Result<CoalitionReport> {
    let n = ent.len();
    check_coalition(coalition, n)?;
    if grid_size < 2 {
        return Err(Error::GridTooSmall(grid_size));
    }
    if !(bound > ent.max()) || !bound.is_finite() {
        return Err(Error::BoundTooSmall {
            bound,
            max_entitlement: ent.max(),
        });
    }
    let grids: Vec<Vec<f64>> = coalition
        .members()
        .iter()
        .map(|&i| {
            let mut g = uniform_grid(bound, grid_size);
            g.extend([0.0, ent.get(i), bound]);
            sort_dedup(g)
        })
        .collect();
    let points: u128 = grids.iter().map(|g| g.len() as u128).product();
    let cost = points.saturating_mul(coalition.len() as u128);
    if cost > cap {
        return Err(Error::SearchSpaceTooLarge {
            evaluations: cost,
            cap,
        });
    }

    let cfg = ClearingConfig::default();
    let baseline_sum: f64 = coalition.members().iter().map(|&i| ent.get(i)).sum();
    let mut claims = vec![bound; n];
    let mut idx = vec![0usize; grids.len()];
    let mut best_sum = f64::NEG_INFINITY;
    let mut best_dev = Vec::new();
    let mut worst_err = 0.0_f64;
    let mut evaluations = 0u64;
    loop {
        for (k, &i) in coalition.members().iter().enumerate() {
            claims[i] = grids[k][idx[k]];
        }
        let acc = account(&claims, ent, coalition, &cfg)?;
        evaluations += 1;
        worst_err = worst_err.max(acc.closed_form_error());
        if acc.direct > best_sum {
            best_sum = acc.direct;
            best_dev = coalition.members().iter().map(|&i| claims[i]).collect();
        }
        // odometer
        let mut k = 0;
        loop {
            if k == idx.len() {
                return Ok(CoalitionReport {
                    coalition: coalition.clone(),
                    baseline_sum,
                    best_deviation_sum: best_sum,
                    best_deviation: best_dev,
                    bound_satisfied: best_sum <= baseline_sum + COALITION_TOL,
                    closed_form_check: worst_err,
                    evaluations,
                });
            }
            idx[k] += 1;
            if idx[k] < grids[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Coalition search for every nonempty coalition, in bitmask order.
pub fn coalition_sweep(ent: &Entitlements, bound: f64, grid_size: usize, cap: u128) -> Result<Vec<CoalitionReport>> {
    Coalition::all(ent.len())
        .par_iter()
        .map(|k| coalition_proofness_search_capped(ent, bound, k, grid_size, cap))
        .collect()
}
