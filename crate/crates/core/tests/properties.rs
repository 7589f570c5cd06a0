use proptest::prelude::*;

use slack_clearing::boundary::boundary_jump;
use slack_clearing::classic::{cea, nls_audit, proportional_on_claims, ClaimsProblem, RuleTag};
use slack_clearing::policy::{marginal_penalty, marginal_penalty_fd, settle_period, CollarConfig, PenaltyRegion};
use slack_clearing::strategy::{coalition_accounting, payoff_closed_form, payoff_of, Coalition};
use slack_clearing::{
    budget_identity_residual, clear_alpha, clear_linear, decompose, scarcity_factor, AlphaRule, ClaimProfile,
    ClearingConfig, Entitlements, Regime,
};

/// Entitlements and claims for 1..=8 players, half of them defecting on average.
fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..=8).prop_flat_map(|n| {
        (
            prop::collection::vec(0.5f64..10.0, n),
            prop::collection::vec((any::<bool>(), 0.0f64..=1.0), n),
        )
            .prop_map(|(ent, draws)| {
                let claims = ent
                    .iter()
                    .zip(draws)
                    .map(|(&l, (defect, u))| if defect { l * (1.0 + 2.0 * u) } else { l * u })
                    .collect();
                (ent, claims)
            })
    })
}

fn alpha() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.5), Just(1.0), Just(2.0), Just(3.0), 0.2f64..4.0]
}

fn build(ent: &[f64], claims: &[f64]) -> (Entitlements, ClaimProfile) {
    (
        Entitlements::new(ent.to_vec()).unwrap(),
        ClaimProfile::unbounded(claims.to_vec()).unwrap(),
    )
}

/// Clearing written out directly from the definitions.
fn oracle_payoffs(ent: &[f64], claims: &[f64], alpha: f64) -> Vec<f64> {
    let v: Vec<f64> = claims.iter().zip(ent).map(|(c, l)| (c - l).max(0.0)).collect();
    let x: f64 = v.iter().sum();
    let i: f64 = claims.iter().zip(ent).map(|(c, l)| (l - c).max(0.0)).sum();
    let w: f64 = v.iter().filter(|&&y| y > 0.0).map(|y| y.powf(alpha)).sum();
    claims
        .iter()
        .zip(ent)
        .zip(&v)
        .map(|((&c, &l), &y)| {
            if c <= l {
                c
            } else if x - i <= 1e-12 {
                c
            } else {
                l + i * y.powf(alpha) / w
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2500))]

    #[test]
    fn no_sucker_loss((ent, claims) in instance(), a in alpha()) {
        let (e, p) = build(&ent, &claims);
        let out = clear_alpha(&p, &e, AlphaRule::new(a).unwrap()).unwrap();
        for j in 0..ent.len() {
            if claims[j] <= ent[j] {
                prop_assert_eq!(out.payoffs[j], claims[j]);
            }
        }
    }

    #[test]
    fn matches_oracle((ent, claims) in instance(), a in alpha()) {
        let (e, p) = build(&ent, &claims);
        let out = clear_alpha(&p, &e, AlphaRule::new(a).unwrap()).unwrap();
        for (got, want) in out.payoffs.iter().zip(oracle_payoffs(&ent, &claims, a)) {
            prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0));
        }
    }

    #[test]
    fn budget_identity_and_scarcity_balance((ent, claims) in instance(), a in alpha()) {
        let (e, p) = build(&ent, &claims);
        let os = decompose(&p, &e).unwrap();
        let out = clear_alpha(&p, &e, AlphaRule::new(a).unwrap()).unwrap();
        let scale = e.total();
        prop_assert!(budget_identity_residual(&out, &e, &os).abs() <= 1e-9 * scale);
        if os.total_overage >= os.total_slack {
            prop_assert!((out.total_payoff() - scale).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn feasibility((ent, claims) in instance(), a in alpha()) {
        let (e, p) = build(&ent, &claims);
        let os = decompose(&p, &e).unwrap();
        let out = clear_alpha(&p, &e, AlphaRule::new(a).unwrap()).unwrap();
        let target = os.total_overage.min(os.total_slack);
        prop_assert!((out.total_covered() - target).abs() <= 1e-9 * target.max(1.0));
        for (c, v) in out.covered.iter().zip(&os.overage) {
            prop_assert!(*c >= 0.0);
            if *v == 0.0 || a == 1.0 {
                prop_assert!(*c <= v * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn complementary_slackness((ent, claims) in instance()) {
        let (e, p) = build(&ent, &claims);
        let os = decompose(&p, &e).unwrap();
        for (v, s) in os.overage.iter().zip(&os.slack) {
            prop_assert_eq!(v * s, 0.0);
        }
    }

    #[test]
    fn alpha_one_equals_linear((ent, claims) in instance()) {
        let (e, p) = build(&ent, &claims);
        let lin = clear_linear(&p, &e).unwrap();
        let pow = clear_alpha(&p, &e, AlphaRule::LINEAR).unwrap();
        for (a, b) in lin.payoffs.iter().zip(&pow.payoffs) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn two_payoff_paths_agree((ent, claims) in instance(), a in alpha(), y in 0.0f64..=1.0) {
        let (e, p) = build(&ent, &claims);
        let rule = AlphaRule::new(a).unwrap();
        let c = 3.0 * ent[0] * y;
        let direct = payoff_of(0, c, &p, &e, rule).unwrap();
        let closed = payoff_closed_form(0, c, &p, &e, rule, &ClearingConfig::default()).unwrap();
        prop_assert!((direct - closed).abs() <= 1e-12 * direct.abs().max(1.0));
    }

    #[test]
    fn coalition_identity((ent, claims) in instance(), mask in 1u64..256) {
        let n = ent.len();
        let mask = mask & ((1u64 << n) - 1);
        prop_assume!(mask != 0);
        let (e, p) = build(&ent, &claims);
        let k = Coalition::from_mask(mask, n).unwrap();
        let acc = coalition_accounting(&p, &e, &k).unwrap();
        prop_assert!(acc.closed_form_error() <= 1e-9);
        if acc.regime == Regime::Scarcity {
            let x = acc.coalition_overage + acc.complement_overage;
            let case2 = acc.entitlement_sum - acc.coalition_slack * acc.complement_overage / x;
            let complement_defects = (0..n).filter(|i| !k.contains(*i)).all(|i| claims[i] > ent[i]);
            if complement_defects {
                prop_assert!((acc.direct - case2).abs() <= 1e-9 * acc.entitlement_sum.max(1.0));
            }
        }
    }

    #[test]
    fn jump_sums_to_zero(v in prop::collection::vec(0.01f64..10.0, 1..=8), a in alpha()) {
        let j = boundary_jump(&v, AlphaRule::new(a).unwrap()).unwrap();
        let total: f64 = v.iter().sum();
        prop_assert!(j.jump.iter().sum::<f64>().abs() <= 1e-12 * total.max(1.0));
        prop_assert!((j.scarcity_limit.iter().sum::<f64>() - total).abs() <= 1e-12 * total.max(1.0));
        if a == 1.0 {
            prop_assert!(j.sup_norm <= 1e-12 * total.max(1.0));
        }
    }

    #[test]
    fn residual_identity_in_scarcity((ent, claims) in instance(), kappa in 0.0f64..5.0) {
        let (e, p) = build(&ent, &claims);
        let collar = CollarConfig {
            kappa_lo: 0.0,
            kappa_hi: 5.0,
            kappa_schedule: vec![kappa],
            p_bar: vec![1.0],
            lambda_floor: 0.5,
            p_forward: 0.1,
        };
        let rec = settle_period(&p, &e, &collar, 0).unwrap();
        prop_assert!(rec.residual_identity_error <= 1e-9);
        if rec.total_overage >= rec.total_slack {
            prop_assert!(rec.budget_residual.abs() <= 1e-9 * e.total());
        }
    }

    #[test]
    fn marginal_penalty_bounds(own in 0.01f64..10.0, others in 0.0f64..10.0, frac in 0.0f64..0.99, kappa in 0.0f64..10.0) {
        let slack = frac * (own + others);
        let mp = marginal_penalty(own, others, slack, kappa).unwrap();
        prop_assert_eq!(mp.region, PenaltyRegion::Scarcity);
        prop_assert!(mp.value >= kappa * mp.lambda - 1e-9);
    }

    #[test]
    fn lambda_monotone_in_own_overage(own in 0.01f64..10.0, others in 0.0f64..10.0, frac in 0.0f64..0.99, d in 1e-6f64..5.0) {
        let slack = frac * (own + others);
        let a = scarcity_factor(own + others, slack).unwrap();
        let b = scarcity_factor(own + d + others, slack).unwrap();
        prop_assert!(b >= a);
    }

    #[test]
    fn classic_rules_are_bounded_and_cea_is_ordered(
        claims in prop::collection::vec(0.0f64..100.0, 1..=8),
        frac in 0.0f64..=1.2,
    ) {
        let n = claims.len();
        let total: f64 = claims.iter().sum();
        let p = ClaimsProblem::new(claims.clone(), Entitlements::new(vec![1.0; n]).unwrap(), frac * total).unwrap();
        for a in [proportional_on_claims(&p), cea(&p)] {
            for (x, c) in a.awards.iter().zip(&claims) {
                prop_assert!(*x >= 0.0 && *x <= c * (1.0 + 1e-12));
            }
            let paid: f64 = a.awards.iter().sum();
            prop_assert!((paid - p.estate.min(total)).abs() <= 1e-12 * total.max(1.0) * n as f64);
        }
        let a = cea(&p);
        for i in 0..n {
            for j in 0..n {
                if claims[i] <= claims[j] {
                    prop_assert!(a.awards[i] <= a.awards[j]);
                }
            }
        }
    }

    #[test]
    fn slack_clearing_never_shorts_cooperators((ent, claims) in instance(), frac in 0.0f64..1.0) {
        let total: f64 = claims.iter().sum();
        let p = ClaimsProblem::new(claims, Entitlements::new(ent).unwrap(), frac * total).unwrap();
        prop_assert!(nls_audit(RuleTag::SlackClearing, &p).unwrap().is_empty());
    }
}

// Power weights with alpha != 1 can hand a small defector more than its own overage.
#[test]
fn power_rule_can_overcover_small_overage() {
    let (e, p) = build(&[8.579453604525332, 2.339193694691177, 0.5], &[4.348102685938841, 6.78260764346987, 0.6523435181111821]);
    let out = clear_alpha(&p, &e, AlphaRule::new(0.5).unwrap()).unwrap();
    let os = decompose(&p, &e).unwrap();
    assert_eq!(out.regime, Regime::Scarcity);
    assert!(out.covered[2] > os.overage[2]);
    assert!((out.total_covered() - os.total_slack).abs() < 1e-12);
    let lin = clear_linear(&p, &e).unwrap();
    assert!(lin.covered[2] <= os.overage[2]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn derivative_matches_finite_difference(
        own in 0.1f64..10.0,
        others in 0.0f64..10.0,
        gap in prop_oneof![-0.9f64..-0.01, 0.01f64..0.9],
        kappa in 0.1f64..10.0,
    ) {
        // gap < 0 places the instance in the slack region, gap > 0 in scarcity
        let total = own + others;
        let slack = total * (1.0 - gap);
        let analytic = marginal_penalty(own, others, slack, kappa).unwrap();
        let fd = marginal_penalty_fd(own, others, slack, kappa, 1e-6).unwrap();
        prop_assert!((analytic.value - fd.value).abs() <= 1e-4, "{} vs {}", analytic.value, fd.value);
    }
}
