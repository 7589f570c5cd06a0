//! Classic bankruptcy rules and a No-Sucker-Loss audit.
//!
//! A player with `C_j <= L_j` should receive exactly `C_j`. Proportional
//! rationing and constrained equal awards both break this once the estate
//! falls short of total claims.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mechanism::{clear_linear_raw, ClearingConfig, Entitlements};
use crate::sampling::{shard_rng, shards};

/// Tolerance for `award == claim` in the audit.
pub const NLS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClaimsProblem {
    pub claims: Vec<f64>,
    pub entitlements: Entitlements,
    pub estate: f64,
}

impl ClaimsProblem {
    pub fn new(claims: Vec<f64>, entitlements: Entitlements, estate: f64) -> Result<Self> {
        if claims.len() != entitlements.len() {
            return Err(Error::LengthMismatch {
                claims: claims.len(),
                entitlements: entitlements.len(),
            });
        }
        for (index, &value) in claims.iter().enumerate() {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::InvalidClaim { index, value });
            }
        }
        if !(estate.is_finite() && estate >= 0.0) {
            return Err(Error::NegativeQuantity { name: "estate", value: estate });
        }
        Ok(Self {
            claims,
            entitlements,
            estate,
        })
    }

    pub fn total_claims(&self) -> f64 {
        self.claims.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleTag {
    ProportionalOnClaims,
    ConstrainedEqualAwards,
    SlackClearing,
}

impl RuleTag {
    pub const ALL: [RuleTag; 3] = [
        RuleTag::ProportionalOnClaims,
        RuleTag::ConstrainedEqualAwards,
        RuleTag::SlackClearing,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ProportionalOnClaims => "proportional",
            Self::ConstrainedEqualAwards => "cea",
            Self::SlackClearing => "slack_clearing",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AwardVector {
    pub awards: Vec<f64>,
    pub rule: RuleTag,
    /// Rationing level: the fraction for proportional, the cap for CEA.
    pub lambda: f64,
    /// Estate left over when it exceeds total claims.
    pub unallocated: f64,
}

pub fn proportional_on_claims(p: &ClaimsProblem) -> AwardVector {
    let total = p.total_claims();
    if total == 0.0 {
        return AwardVector {
            awards: vec![0.0; p.claims.len()],
            rule: RuleTag::ProportionalOnClaims,
            lambda: 0.0,
            unallocated: p.estate,
        };
    }
    let lambda = (p.estate / total).min(1.0);
    AwardVector {
        awards: p.claims.iter().map(|c| lambda * c).collect(),
        rule: RuleTag::ProportionalOnClaims,
        lambda,
        unallocated: (p.estate - total).max(0.0),
    }
}

/// Constrained equal awards by water-filling over sorted claims.
pub fn cea(p: &ClaimsProblem) -> AwardVector {
    let total = p.total_claims();
    let n = p.claims.len();
    if p.estate >= total {
        return AwardVector {
            awards: p.claims.clone(),
            rule: RuleTag::ConstrainedEqualAwards,
            lambda: p.claims.iter().copied().fold(0.0, f64::max),
            unallocated: p.estate - total,
        };
    }
    let mut sorted = p.claims.clone();
    sorted.sort_by(f64::total_cmp);
    // Smallest claims are paid in full until the remainder, split evenly
    // among the rest, no longer reaches the next claim.
    let mut remaining = p.estate;
    let mut lambda = 0.0;
    for (k, &c) in sorted.iter().enumerate() {
        let rest = (n - k) as f64;
        if c * rest >= remaining {
            lambda = remaining / rest;
            break;
        }
        remaining -= c;
    }
    AwardVector {
        awards: p.claims.iter().map(|&c| c.min(lambda)).collect(),
        rule: RuleTag::ConstrainedEqualAwards,
        lambda,
        unallocated: 0.0,
    }
}

/// Payoffs of the linear slack-clearing rule. The estate is implied by the
/// entitlements, so `p.estate` is not used.
pub fn slack_clearing_awards(p: &ClaimsProblem) -> Result<AwardVector> {
    let out = clear_linear_raw(&p.claims, &p.entitlements, &ClearingConfig::default())?;
    let x: f64 = p
        .claims
        .iter()
        .zip(p.entitlements.as_slice())
        .map(|(c, l)| (c - l).max(0.0))
        .sum();
    let i: f64 = p
        .claims
        .iter()
        .zip(p.entitlements.as_slice())
        .map(|(c, l)| (l - c).max(0.0))
        .sum();
    Ok(AwardVector {
        awards: out.payoffs,
        rule: RuleTag::SlackClearing,
        lambda: if x > i { i / x } else { 1.0 },
        unallocated: (i - x).max(0.0),
    })
}

pub fn award(rule: RuleTag, p: &ClaimsProblem) -> Result<AwardVector> {
    match rule {
        RuleTag::ProportionalOnClaims => Ok(proportional_on_claims(p)),
        RuleTag::ConstrainedEqualAwards => Ok(cea(p)),
        RuleTag::SlackClearing => slack_clearing_awards(p),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NlsViolation {
    pub player: usize,
    pub claim: f64,
    pub entitlement: f64,
    pub award: f64,
}

pub fn nls_audit(rule: RuleTag, p: &ClaimsProblem) -> Result<Vec<NlsViolation>> {
    let a = award(rule, p)?;
    Ok(p.claims
        .iter()
        .zip(p.entitlements.as_slice())
        .zip(&a.awards)
        .enumerate()
        .filter(|(_, ((c, l), a))| c <= l && (*a - *c).abs() > NLS_TOL)
        .map(|(player, ((&claim, &entitlement), &award))| NlsViolation {
            player,
            claim,
            entitlement,
            award,
        })
        .collect())
}

/// A random problem with a real shortage and at least one cooperator with a
/// positive claim. Entitlements are U[1, 10]; claims are a cooperative
/// draw on (0, L] or a defecting draw on (L, 3L]. The estate is U(0, 0.9)
/// of total claims.
pub fn stressed_problem<R: Rng>(rng: &mut R, players: usize) -> ClaimsProblem {
    assert!(players >= 2, "a stressed problem needs at least two players");
    loop {
        let ent: Vec<f64> = (0..players).map(|_| rng.gen_range(1.0..=10.0)).collect();
        let claims: Vec<f64> = ent
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                // player 0 always cooperates; a coin flip for the rest
                if i == 0 || rng.gen_bool(0.5) {
                    l * (1.0 - rng.gen::<f64>())
                } else {
                    l * rng.gen_range(1.0..=3.0)
                }
            })
            .collect();
        let total: f64 = claims.iter().sum();
        let estate = total * rng.gen_range(0.0..0.9);
        if estate < total {
            let ent = Entitlements::new(ent).expect("entitlements drawn positive");
            return ClaimsProblem::new(claims, ent, estate).expect("valid draw");
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationRow {
    pub rule: RuleTag,
    pub problems: usize,
    /// Problems with at least one violation.
    pub violating_problems: usize,
    pub violation_rate: f64,
}

/// NLS violation rates for every rule over the same stressed problems.
pub fn nls_separation(problems: usize, players: usize, seed: u64) -> Result<Vec<SeparationRow>> {
    if problems == 0 {
        return Err(Error::NoSamples);
    }
    if players < 2 {
        return Err(Error::NoPlayers);
    }
    let plan: Vec<(usize, usize)> = shards(problems).collect();
    let counts: Vec<[usize; 3]> = plan
        .into_par_iter()
        .map(|(shard, count)| {
            let mut rng = shard_rng(seed, shard);
            let mut hits = [0usize; 3];
            for _ in 0..count {
                let p = stressed_problem(&mut rng, players);
                for (k, rule) in RuleTag::ALL.iter().enumerate() {
                    if !nls_audit(*rule, &p)?.is_empty() {
                        hits[k] += 1;
                    }
                }
            }
            Ok(hits)
        })
        .collect::<Result<_>>()?;
    Ok(RuleTag::ALL
        .iter()
        .enumerate()
        .map(|(k, &rule)| {
            let violating: usize = counts.iter().map(|h| h[k]).sum();
            SeparationRow {
                rule,
                problems,
                violating_problems: violating,
                violation_rate: violating as f64 / problems as f64,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(claims: &[f64], ent: &[f64], estate: f64) -> ClaimsProblem {
        ClaimsProblem::new(claims.to_vec(), Entitlements::new(ent.to_vec()).unwrap(), estate).unwrap()
    }

    #[test]
    fn cea_golden_instance() {
        let p = problem(&[1.0, 100.0, 100.0], &[10.0, 10.0, 10.0], 2.0);
        let a = cea(&p);
        assert_eq!(a.lambda, 2.0 / 3.0);
        assert_eq!(a.awards, vec![2.0 / 3.0; 3]);
        let v = nls_audit(RuleTag::ConstrainedEqualAwards, &p).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].player, 0);
        assert_eq!(v[0].award, 2.0 / 3.0);
    }

    #[test]
    fn cea_hand_cases() {
        let a = cea(&problem(&[1.0, 2.0, 3.0], &[5.0; 3], 3.0));
        assert_eq!(a.lambda, 1.0);
        assert_eq!(a.awards, vec![1.0, 1.0, 1.0]);

        let a = cea(&problem(&[1.0, 2.0, 3.0], &[5.0; 3], 6.0));
        assert_eq!(a.lambda, 3.0);
        assert_eq!(a.awards, vec![1.0, 2.0, 3.0]);

        let a = cea(&problem(&[1.0, 2.0, 3.0], &[5.0; 3], 0.0));
        assert_eq!(a.awards, vec![0.0; 3]);

        let a = cea(&problem(&[3.0, 1.0, 2.0], &[5.0; 3], 4.0));
        assert_eq!(a.lambda, 1.5);
        assert_eq!(a.awards, vec![1.5, 1.0, 1.5]);

        let a = cea(&problem(&[1.0, 2.0], &[5.0; 2], 5.0));
        assert_eq!(a.unallocated, 2.0);
    }

    #[test]
    fn proportional_cases() {
        let p = problem(&[1.0, 100.0, 100.0], &[10.0, 10.0, 10.0], 2.0);
        let a = proportional_on_claims(&p);
        assert_eq!(a.lambda, 2.0 / 201.0);
        assert!(a.awards[0] < 1.0);
        assert_eq!(nls_audit(RuleTag::ProportionalOnClaims, &p).unwrap()[0].player, 0);

        let full = problem(&[1.0, 2.0], &[5.0; 2], 4.0);
        assert_eq!(proportional_on_claims(&full).awards, vec![1.0, 2.0]);
        assert!(nls_audit(RuleTag::ProportionalOnClaims, &full).unwrap().is_empty());

        let single = problem(&[5.0], &[1.0], 3.0);
        assert_eq!(proportional_on_claims(&single).awards, vec![3.0]);

        let empty = problem(&[0.0, 0.0], &[1.0; 2], 3.0);
        let a = proportional_on_claims(&empty);
        assert_eq!(a.awards, vec![0.0, 0.0]);
        assert_eq!(a.unallocated, 3.0);
    }

    #[test]
    fn slack_clearing_passes_golden_instance() {
        let p = problem(&[1.0, 100.0, 100.0], &[10.0, 10.0, 10.0], 2.0);
        assert!(nls_audit(RuleTag::SlackClearing, &p).unwrap().is_empty());
        assert_eq!(slack_clearing_awards(&p).unwrap().awards[0], 1.0);
    }

    #[test]
    fn separation_rates() {
        let rows = nls_separation(2000, 4, 11).unwrap();
        let rate = |r: RuleTag| rows.iter().find(|x| x.rule == r).unwrap().violation_rate;
        assert_eq!(rate(RuleTag::SlackClearing), 0.0);
        assert!(rate(RuleTag::ProportionalOnClaims) > 0.0);
        assert!(rate(RuleTag::ConstrainedEqualAwards) > 0.0);
    }
}
