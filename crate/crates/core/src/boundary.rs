//! Behaviour of the power-family rule at `X = I`.
//!
//! At a boundary profile with positive overages `v` and `I = X = sum(v)`, the
//! slack side covers `v` exactly while the scarcity side covers
//! `X * v^alpha / sum(v^alpha)`. The two agree for every `v` only at
//! `alpha = 1`; otherwise claim noise around the boundary leaves a coverage
//! bias of about half the jump.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mechanism::{
    clear_alpha_raw, decompose, AlphaRule, ClaimProfile, ClearingConfig, Entitlements, Regime,
};
use crate::sampling::{mean_and_se, shard_rng, shards};

/// Minimum relative spread `(max - min) / max` of sampled overage vectors.
pub const MIN_SPREAD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryJump {
    pub overage_vector: Vec<f64>,
    pub alpha: f64,
    pub slack_limit: Vec<f64>,
    pub scarcity_limit: Vec<f64>,
    /// `slack_limit - scarcity_limit`.
    pub jump: Vec<f64>,
    pub sup_norm: f64,
}

pub fn boundary_jump(v: &[f64], rule: AlphaRule) -> Result<BoundaryJump> {
    if v.is_empty() {
        return Err(Error::NoPlayers);
    }
    for (index, &value) in v.iter().enumerate() {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::NonPositiveOverage { index, value });
        }
    }
    let total: f64 = v.iter().sum();
    let weights: Vec<f64> = v.iter().map(|&x| rule.weight(x)).collect();
    let weight_total: f64 = weights.iter().sum();
    let scarcity_limit: Vec<f64> = weights.iter().map(|&w| total * w / weight_total).collect();
    let jump: Vec<f64> = v.iter().zip(&scarcity_limit).map(|(a, b)| a - b).collect();
    let sup_norm = jump.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    Ok(BoundaryJump {
        overage_vector: v.to_vec(),
        alpha: rule.value(),
        slack_limit: v.to_vec(),
        scarcity_limit,
        jump,
        sup_norm,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuityRow {
    pub alpha: f64,
    pub samples: usize,
    pub players: usize,
    /// Largest sup-norm jump over the raw samples.
    pub max_sup_norm: f64,
    /// Smallest and largest sup-norm after scaling each sample to `sum(v) = 1`.
    pub min_normalized_sup_norm: f64,
    pub max_normalized_sup_norm: f64,
}

/// Random positive overage vectors. With two or more players every vector
/// has relative spread at least [`MIN_SPREAD`].
pub fn sample_overage_vectors(samples: usize, players: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| loop {
            let scale = rng.gen_range(0.1..10.0);
            let v: Vec<f64> = (0..players)
                .map(|_| scale * rng.gen_range(0.05..=1.0))
                .collect();
            let hi = v.iter().copied().fold(f64::MIN, f64::max);
            let lo = v.iter().copied().fold(f64::MAX, f64::min);
            if players < 2 || (hi - lo) >= MIN_SPREAD * hi {
                break v;
            }
        })
        .collect()
}

/// Jump norms per alpha over a shared set of random overage vectors.
pub fn continuity_scan(
    alphas: &[AlphaRule],
    samples: usize,
    players: usize,
    seed: u64,
) -> Result<Vec<ContinuityRow>> {
    if samples == 0 {
        return Err(Error::NoSamples);
    }
    if players == 0 {
        return Err(Error::NoPlayers);
    }
    let vectors = sample_overage_vectors(samples, players, seed);
    alphas
        .iter()
        .map(|&rule| {
            let mut row = ContinuityRow {
                alpha: rule.value(),
                samples,
                players,
                max_sup_norm: 0.0,
                min_normalized_sup_norm: f64::INFINITY,
                max_normalized_sup_norm: 0.0,
            };
            for v in &vectors {
                row.max_sup_norm = row.max_sup_norm.max(boundary_jump(v, rule)?.sup_norm);
                let total: f64 = v.iter().sum();
                let unit: Vec<f64> = v.iter().map(|x| x / total).collect();
                let norm = boundary_jump(&unit, rule)?.sup_norm;
                row.min_normalized_sup_norm = row.min_normalized_sup_norm.min(norm);
                row.max_normalized_sup_norm = row.max_normalized_sup_norm.max(norm);
            }
            Ok(row)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseBiasResult {
    pub alpha: f64,
    pub epsilon: f64,
    pub samples: usize,
    /// Mean of `covered(perturbed) - v` per player.
    pub bias: Vec<f64>,
    pub std_error: Vec<f64>,
    /// `max_j |bias_j|`.
    pub bias_norm: f64,
    /// Mean of `X * covered_j / sum(covered) - v_j`: bias in how coverage is
    /// split, with the total coverage effect removed.
    pub distribution_bias: Vec<f64>,
    pub distribution_std_error: Vec<f64>,
    /// Small-noise limit `-jump / 2` assuming each side of the boundary is
    /// hit with probability one half.
    pub half_jump_limit: Vec<f64>,
    /// Fraction of perturbed profiles that cleared on the scarcity side.
    pub scarcity_fraction: f64,
}

#[derive(Clone)]
struct Moments {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    dist_sum: Vec<f64>,
    dist_sum_sq: Vec<f64>,
    scarcity: usize,
    count: usize,
}

impl Moments {
    fn new(n: usize) -> Self {
        Self {
            sum: vec![0.0; n],
            sum_sq: vec![0.0; n],
            dist_sum: vec![0.0; n],
            dist_sum_sq: vec![0.0; n],
            scarcity: 0,
            count: 0,
        }
    }

    fn merge(mut self, other: &Moments) -> Self {
        for j in 0..self.sum.len() {
            self.sum[j] += other.sum[j];
            self.sum_sq[j] += other.sum_sq[j];
            self.dist_sum[j] += other.dist_sum[j];
            self.dist_sum_sq[j] += other.dist_sum_sq[j];
        }
        self.scarcity += other.scarcity;
        self.count += other.count;
        self
    }
}

/// Monte Carlo coverage bias under independent uniform claim noise on `[-eps, eps]`.
pub fn noise_bias(
    ent: &Entitlements,
    base: &ClaimProfile,
    rule: AlphaRule,
    epsilon: f64,
    samples: usize,
    seed: u64,
) -> Result<NoiseBiasResult> {
    noise_bias_with(ent, base, rule, epsilon, samples, seed, &ClearingConfig::default())
}

pub fn noise_bias_with(
    ent: &Entitlements,
    base: &ClaimProfile,
    rule: AlphaRule,
    epsilon: f64,
    samples: usize,
    seed: u64,
    cfg: &ClearingConfig,
) -> Result<NoiseBiasResult> {
    if samples == 0 {
        return Err(Error::NoSamples);
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidNoise(epsilon));
    }
    let os = decompose(base, ent)?;
    let gap = os.total_overage - os.total_slack;
    if gap.abs() > cfg.boundary_tol {
        return Err(Error::NotAtBoundary { gap: gap.abs() });
    }
    let n = ent.len();
    let v = &os.overage;
    let total = os.total_overage;
    let bound = base.bound();

    let plan: Vec<(usize, usize)> = shards(samples).collect();
    let parts: Vec<Moments> = plan
        .into_par_iter()
        .map(|(shard, count)| {
            let mut rng = shard_rng(seed, shard);
            let mut m = Moments::new(n);
            m.count = count;
            let mut claims = vec![0.0; n];
            for _ in 0..count {
                for (c, &b) in claims.iter_mut().zip(base.claims()) {
                    *c = (b + rng.gen_range(-epsilon..=epsilon)).clamp(0.0, bound);
                }
                let out = clear_alpha_raw(&claims, ent, rule, cfg)?;
                if out.regime == Regime::Scarcity {
                    m.scarcity += 1;
                }
                let covered_total = out.total_covered();
                for j in 0..n {
                    let d = out.covered[j] - v[j];
                    m.sum[j] += d;
                    m.sum_sq[j] += d * d;
                    let share = if covered_total > 0.0 {
                        total * out.covered[j] / covered_total
                    } else {
                        v[j]
                    };
                    let e = share - v[j];
                    m.dist_sum[j] += e;
                    m.dist_sum_sq[j] += e * e;
                }
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    let moments = parts.iter().fold(Moments::new(n), |acc, p| acc.merge(p));

    let mut bias = Vec::with_capacity(n);
    let mut std_error = Vec::with_capacity(n);
    let mut distribution_bias = Vec::with_capacity(n);
    let mut distribution_std_error = Vec::with_capacity(n);
    for j in 0..n {
        let (b, se) = mean_and_se(moments.sum[j], moments.sum_sq[j], samples);
        bias.push(b);
        std_error.push(se);
        let (b, se) = mean_and_se(moments.dist_sum[j], moments.dist_sum_sq[j], samples);
        distribution_bias.push(b);
        distribution_std_error.push(se);
    }

    let mut half_jump_limit = vec![0.0; n];
    if !os.defectors.is_empty() {
        let positive: Vec<f64> = os.defectors.iter().map(|&j| v[j]).collect();
        let jump = boundary_jump(&positive, rule)?;
        for (k, &j) in os.defectors.iter().enumerate() {
            half_jump_limit[j] = -0.5 * jump.jump[k];
        }
    }

    Ok(NoiseBiasResult {
        alpha: rule.value(),
        epsilon,
        samples,
        bias_norm: bias.iter().fold(0.0_f64, |m, x| m.max(x.abs())),
        bias,
        std_error,
        distribution_bias,
        distribution_std_error,
        half_jump_limit,
        scarcity_fraction: moments.scarcity as f64 / samples as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alpha(a: f64) -> AlphaRule {
        AlphaRule::new(a).unwrap()
    }

    #[test]
    fn linear_has_no_jump() {
        let j = boundary_jump(&[0.3, 1.7, 4.0], AlphaRule::LINEAR).unwrap();
        assert!(j.sup_norm <= 1e-12);
    }

    #[test]
    fn quadratic_jump_on_one_two() {
        let j = boundary_jump(&[1.0, 2.0], alpha(2.0)).unwrap();
        assert!((j.scarcity_limit[0] - 0.6).abs() < 1e-12);
        assert!((j.scarcity_limit[1] - 2.4).abs() < 1e-12);
        assert!((j.jump[0] - 0.4).abs() < 1e-12);
        assert!((j.jump[1] + 0.4).abs() < 1e-12);
        assert!((j.sup_norm - 0.4).abs() < 1e-12);
    }

    #[test]
    fn equal_components_have_no_jump() {
        let j = boundary_jump(&[2.5, 2.5, 2.5], alpha(3.0)).unwrap();
        assert!(j.sup_norm < 1e-12);
    }

    #[test]
    fn jump_rejects_nonpositive() {
        assert!(matches!(
            boundary_jump(&[1.0, 0.0], alpha(2.0)),
            Err(Error::NonPositiveOverage { index: 1, .. })
        ));
    }

    #[test]
    fn scan_separates_linear() {
        let rows = continuity_scan(&[alpha(0.5), AlphaRule::LINEAR, alpha(2.0)], 100, 4, 3).unwrap();
        assert!(rows[1].max_sup_norm <= 1e-12);
        assert!(rows[0].min_normalized_sup_norm > 0.0);
        assert!(rows[2].min_normalized_sup_norm > 0.0);
    }

    #[test]
    fn scan_single_player_is_zero() {
        let rows = continuity_scan(&[alpha(0.5), alpha(3.0)], 50, 1, 9).unwrap();
        for r in rows {
            assert!(r.max_sup_norm < 1e-12);
        }
    }

    #[test]
    fn noise_bias_requires_boundary() {
        let l = Entitlements::new(vec![10.0, 10.0, 10.0]).unwrap();
        let off = ClaimProfile::new(vec![12.0, 15.0, 4.0], 20.0).unwrap();
        assert!(matches!(
            noise_bias(&l, &off, AlphaRule::LINEAR, 1e-3, 10, 1),
            Err(Error::NotAtBoundary { .. })
        ));
        let on = ClaimProfile::new(vec![11.0, 12.0, 7.0], 20.0).unwrap();
        assert!(matches!(
            noise_bias(&l, &on, AlphaRule::LINEAR, 1e-3, 0, 1),
            Err(Error::NoSamples)
        ));
        assert!(noise_bias(&l, &on, AlphaRule::LINEAR, 0.0, 10, 1).is_err());
    }

    #[test]
    fn noise_bias_equal_overages_is_small_for_any_alpha() {
        let l = Entitlements::new(vec![10.0, 10.0, 10.0]).unwrap();
        let base = ClaimProfile::new(vec![11.0, 11.0, 8.0], 20.0).unwrap();
        for a in [0.5, 2.0] {
            let r = noise_bias(&l, &base, alpha(a), 1e-3, 20_000, 5).unwrap();
            for j in 0..3 {
                assert!(r.half_jump_limit[j].abs() < 1e-12);
                assert!(r.bias[j].abs() < 1e-3);
            }
        }
    }

    #[test]
    fn noise_bias_is_deterministic_and_shard_exact() {
        let l = Entitlements::new(vec![10.0, 10.0, 10.0]).unwrap();
        let base = ClaimProfile::new(vec![11.0, 12.0, 7.0], 20.0).unwrap();
        let a = noise_bias(&l, &base, alpha(2.0), 1e-2, 10_000, 77).unwrap();
        let b = noise_bias(&l, &base, alpha(2.0), 1e-2, 10_000, 77).unwrap();
        assert_eq!(a, b);
        assert!((a.half_jump_limit[0] + 0.2).abs() < 1e-12);
    }
}
