//! Random claim profiles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use slack_clearing::{decompose, ClaimProfile, Entitlements};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Each claim uniform on `[0, M]`.
    Uniform,
    /// Defect with the given probability by claiming `M`, else claim uniform on `[0, L]`.
    Mixture,
    /// Like `mixture` with defectors uniform on `(L, M]`, then the last
    /// player's claim is solved so that `X = I`.
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub family: Family,
    /// Profiles to draw. Boundary draws that cannot be closed are skipped.
    pub profiles: usize,
    #[serde(default = "half")]
    pub defection_probability: f64,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Generated {
    pub profiles: Vec<Vec<f64>>,
    pub skipped: usize,
}

fn cooperate(rng: &mut ChaCha8Rng, l: f64) -> f64 {
    rng.gen_range(0.0..=l)
}

/// Deterministic in `seed`. `bound` must be finite and above every entitlement.
pub fn generate_scenarios(
    spec: &GeneratorSpec,
    ent: &Entitlements,
    bound: f64,
    seed: u64,
    boundary_tol: f64,
) -> Generated {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = spec.defection_probability;
    let mut out = Generated {
        profiles: Vec::with_capacity(spec.profiles),
        skipped: 0,
    };
    for _ in 0..spec.profiles {
        match spec.family {
            Family::Uniform => out
                .profiles
                .push((0..ent.len()).map(|_| rng.gen_range(0.0..=bound)).collect()),
            Family::Mixture => out.profiles.push(
                ent.as_slice()
                    .iter()
                    .map(|&l| if rng.gen_bool(p) { bound } else { cooperate(&mut rng, l) })
                    .collect(),
            ),
            Family::Boundary => match boundary_profile(&mut rng, ent, bound, p, boundary_tol) {
                Some(c) => out.profiles.push(c),
                None => out.skipped += 1,
            },
        }
    }
    out
}

fn boundary_profile(rng: &mut ChaCha8Rng, ent: &Entitlements, bound: f64, p: f64, tol: f64) -> Option<Vec<f64>> {
    let l = ent.as_slice();
    let last = l.len() - 1;
    let mut claims: Vec<f64> = l[..last]
        .iter()
        .map(|&lj| {
            if rng.gen_bool(p) {
                lj + (bound - lj) * (1.0 - rng.gen::<f64>())
            } else {
                cooperate(rng, lj)
            }
        })
        .collect();
    let (x, i) = claims.iter().zip(l).fold((0.0, 0.0), |(x, i), (&c, &lj)| {
        (x + (c - lj).max(0.0), i + (lj - c).max(0.0))
    });
    // the closing player supplies slack x - i, or overage i - x
    let closing = l[last] - (x - i);
    if !(0.0..=bound).contains(&closing) {
        return None;
    }
    claims.push(closing);
    let profile = ClaimProfile::new(claims, bound).ok()?;
    let os = decompose(&profile, ent).ok()?;
    ((os.total_overage - os.total_slack).abs() <= tol).then(|| profile.claims().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ent() -> Entitlements {
        Entitlements::new(vec![10.0, 6.0, 8.0]).unwrap()
    }

    fn spec(family: Family, p: f64) -> GeneratorSpec {
        GeneratorSpec {
            family,
            profiles: 500,
            defection_probability: p,
        }
    }

    #[test]
    fn boundary_profiles_close_the_gap() {
        let e = ent();
        let g = generate_scenarios(&spec(Family::Boundary, 0.5), &e, 20.0, 3, 1e-12);
        assert!(!g.profiles.is_empty());
        assert_eq!(g.profiles.len() + g.skipped, 500);
        for c in &g.profiles {
            let os = decompose(&ClaimProfile::new(c.clone(), 20.0).unwrap(), &e).unwrap();
            assert!((os.total_overage - os.total_slack).abs() <= 1e-12);
        }
    }

    #[test]
    fn certain_defection_claims_bound() {
        let g = generate_scenarios(&spec(Family::Mixture, 1.0), &ent(), 20.0, 3, 1e-12);
        assert!(g.profiles.iter().flatten().all(|&c| c == 20.0));
    }

    #[test]
    fn same_seed_same_profiles() {
        for family in [Family::Uniform, Family::Mixture, Family::Boundary] {
            let a = generate_scenarios(&spec(family, 0.3), &ent(), 20.0, 9, 1e-12);
            let b = generate_scenarios(&spec(family, 0.3), &ent(), 20.0, 9, 1e-12);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn uniform_stays_in_range() {
        let g = generate_scenarios(&spec(Family::Uniform, 0.5), &ent(), 20.0, 1, 1e-12);
        assert!(g.profiles.iter().flatten().all(|&c| (0.0..=20.0).contains(&c)));
    }
}
