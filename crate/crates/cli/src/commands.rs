//! One function per subcommand. Each turns a validated config into a [`Report`].

use serde_json::json;
use slack_clearing::boundary::{continuity_scan, noise_bias_with};
use slack_clearing::classic::{award, nls_audit, nls_separation, ClaimsProblem, RuleTag};
use slack_clearing::policy::{expected_waiting_cost, simulate, NeverSuspend};
use slack_clearing::strategy::{
    coalition_accounting, coalition_proofness_search_capped, coalition_sweep, cooperative_nash_check,
    dominance_sweep_with, Coalition,
};
use slack_clearing::{
    clear_alpha_with, decompose, scarcity_factor, AlphaRule, ClaimProfile, ClearingConfig, Entitlements,
};

use crate::config::ScenarioConfig;
use crate::generate::generate_scenarios;
use crate::report::{num, opt_num, Report, Table};
use crate::CliError;

fn entitlements(values: &[f64]) -> Result<Entitlements, CliError> {
    Ok(Entitlements::new(values.to_vec())?)
}

fn profile(claims: &[f64], bound: Option<f64>) -> Result<ClaimProfile, CliError> {
    Ok(match bound {
        Some(m) => ClaimProfile::new(claims.to_vec(), m)?,
        None => ClaimProfile::unbounded(claims.to_vec())?,
    })
}

fn rules(config: &ScenarioConfig) -> Result<Vec<AlphaRule>, CliError> {
    Ok(config
        .alphas
        .iter()
        .map(|&a| AlphaRule::new(a))
        .collect::<slack_clearing::Result<_>>()?)
}

fn clearing_config(config: &ScenarioConfig) -> Result<ClearingConfig, CliError> {
    Ok(ClearingConfig::new(config.tolerances.boundary)?)
}

// Validation guarantees these are present for the commands that use them.
fn seed(config: &ScenarioConfig) -> u64 {
    config.seed.expect("validated seed")
}

fn bound(config: &ScenarioConfig) -> f64 {
    config.bound.expect("validated bound")
}

fn int(x: usize) -> String {
    x.to_string()
}

fn flag(b: bool) -> String {
    b.to_string()
}

pub fn clear(config: &ScenarioConfig) -> Result<Report, CliError> {
    let sec = config.clear.as_ref().expect("validated section");
    let ent = entitlements(&config.entitlements)?;
    let cfg = clearing_config(config)?;
    let mut profiles = sec.profiles.clone();
    let mut skipped = 0;
    if let Some(g) = &sec.generator {
        let generated = generate_scenarios(g, &ent, bound(config), seed(config), config.tolerances.boundary);
        skipped = generated.skipped;
        profiles.extend(generated.profiles);
    }

    let mut players = Table::new(
        "clear",
        &[
            "profile", "alpha", "player", "entitlement", "claim", "overage", "slack", "covered", "payoff",
        ],
    );
    let mut summary = Table::new(
        "clear_summary",
        &[
            "profile",
            "alpha",
            "total_overage",
            "total_slack",
            "regime",
            "lambda",
            "total_payoff",
            "budget_residual",
        ],
    );
    let mut findings = Vec::new();
    let scale = ent.total();
    for (k, claims) in profiles.iter().enumerate() {
        let p = profile(claims, config.bound)?;
        let os = decompose(&p, &ent)?;
        let lambda = scarcity_factor(os.total_overage, os.total_slack)?;
        for rule in rules(config)? {
            let out = clear_alpha_with(&p, &ent, rule, &cfg)?;
            for j in 0..ent.len() {
                players.push(vec![
                    int(k),
                    num(rule.value()),
                    int(j),
                    num(ent.get(j)),
                    num(claims[j]),
                    num(os.overage[j]),
                    num(os.slack[j]),
                    num(out.covered[j]),
                    num(out.payoffs[j]),
                ]);
                if claims[j] <= ent.get(j) && out.payoffs[j] != claims[j] {
                    findings.push(format!(
                        "profile {k}, alpha {}: cooperator {j} paid {} for claim {}",
                        rule.value(),
                        out.payoffs[j],
                        claims[j]
                    ));
                }
            }
            if out.budget_residual.abs() > config.tolerances.numeric * scale {
                findings.push(format!(
                    "profile {k}, alpha {}: budget residual {}",
                    rule.value(),
                    out.budget_residual
                ));
            }
            summary.push(vec![
                int(k),
                num(rule.value()),
                num(os.total_overage),
                num(os.total_slack),
                out.regime.as_str().into(),
                num(lambda),
                num(out.total_payoff()),
                num(out.budget_residual),
            ]);
        }
    }
    Ok(Report {
        results: json!({
            "profiles": profiles.len(),
            "skipped_profiles": skipped,
            "alphas": config.alphas,
        }),
        tables: vec![players, summary],
        alerts: None,
        findings,
    })
}

pub fn dominance(config: &ScenarioConfig) -> Result<Report, CliError> {
    let sec = config.dominance.as_ref().expect("validated section");
    let ent = entitlements(&config.entitlements)?;
    let cfg = clearing_config(config)?;
    let m = bound(config);
    let mut table = Table::new(
        "dominance",
        &[
            "alpha",
            "guaranteed",
            "trials",
            "players",
            "evaluations",
            "violations",
            "argmax_off_bound",
            "worst_drop",
            "worst_trial",
            "worst_player",
            "worst_from_claim",
            "worst_to_claim",
        ],
    );
    let mut findings = Vec::new();
    let mut summaries = Vec::new();
    for rule in rules(config)? {
        let s = dominance_sweep_with(&ent, rule, m, sec.trials, sec.grid_size, seed(config), &cfg)?;
        if s.guarantee_violated() {
            findings.push(format!(
                "alpha {}: {} monotonicity violations, {} best replies off the bound",
                s.alpha, s.violations, s.argmax_off_bound
            ));
        }
        table.push(vec![
            num(s.alpha),
            flag(s.guaranteed),
            int(s.trials),
            int(s.players),
            int(s.evaluations),
            int(s.violations),
            int(s.argmax_off_bound),
            num(s.worst_drop),
            s.worst.as_ref().map(|w| int(w.trial)).unwrap_or_default(),
            s.worst.as_ref().map(|w| int(w.player)).unwrap_or_default(),
            opt_num(s.worst.as_ref().map(|w| w.violation.from_claim)),
            opt_num(s.worst.as_ref().map(|w| w.violation.to_claim)),
        ]);
        summaries.push(s);
    }
    let nash = if sec.nash_check {
        let check = cooperative_nash_check(&ent, m, sec.grid_size)?;
        if !check.holds {
            findings.push(format!("cooperative profile is not a Nash equilibrium: {:?}", check.witness));
        }
        Some(check)
    } else {
        None
    };
    Ok(Report {
        results: json!({ "sweeps": summaries, "cooperative_nash": nash }),
        tables: vec![table],
        alerts: None,
        findings,
    })
}

pub fn coalition(config: &ScenarioConfig) -> Result<Report, CliError> {
    let sec = config.coalition.as_ref().expect("validated section");
    let ent = entitlements(&config.entitlements)?;
    let m = bound(config);
    let n = ent.len();
    let cap = sec.cap as u128;
    let reports = match &sec.coalitions {
        None => coalition_sweep(&ent, m, sec.grid_size, cap)?,
        Some(list) => list
            .iter()
            .map(|members| {
                let k = Coalition::new(members.clone(), n)?;
                coalition_proofness_search_capped(&ent, m, &k, sec.grid_size, cap)
            })
            .collect::<slack_clearing::Result<_>>()?,
    };
    let tol = config.tolerances.numeric;
    let mut table = Table::new(
        "coalition",
        &[
            "coalition",
            "size",
            "entitlement_sum",
            "best_deviation_sum",
            "margin",
            "bound_satisfied",
            "closed_form_error",
            "evaluations",
            "best_deviation",
        ],
    );
    let mut findings = Vec::new();
    for r in &reports {
        if !r.bound_satisfied {
            findings.push(format!(
                "coalition {}: deviation {:?} pays {} above {}",
                r.coalition.label(),
                r.best_deviation,
                r.best_deviation_sum,
                r.baseline_sum
            ));
        }
        if r.closed_form_check > tol {
            findings.push(format!(
                "coalition {}: closed form off by {}",
                r.coalition.label(),
                r.closed_form_check
            ));
        }
        table.push(vec![
            r.coalition.label(),
            int(r.coalition.len()),
            num(r.baseline_sum),
            num(r.best_deviation_sum),
            num(r.baseline_sum - r.best_deviation_sum),
            flag(r.bound_satisfied),
            num(r.closed_form_check),
            r.evaluations.to_string(),
            r.best_deviation.iter().map(|&c| num(c)).collect::<Vec<_>>().join(";"),
        ]);
    }

    let mut accounts = Table::new(
        "coalition_accounting",
        &[
            "case",
            "coalition",
            "regime",
            "direct",
            "identity",
            "aggregate",
            "entitlement_sum",
            "closed_form_error",
        ],
    );
    for (i, a) in sec.accounting.iter().enumerate() {
        let k = Coalition::new(a.coalition.clone(), n)?;
        let acc = coalition_accounting(&profile(&a.claims, config.bound)?, &ent, &k)?;
        if acc.closed_form_error() > tol {
            findings.push(format!("accounting case {i}: closed form off by {}", acc.closed_form_error()));
        }
        accounts.push(vec![
            int(i),
            k.label(),
            acc.regime.as_str().into(),
            num(acc.direct),
            num(acc.identity),
            num(acc.aggregate),
            num(acc.entitlement_sum),
            num(acc.closed_form_error()),
        ]);
    }
    let total_evaluations: u64 = reports.iter().map(|r| r.evaluations).sum();
    Ok(Report {
        results: json!({
            "coalitions": reports.len(),
            "evaluations": total_evaluations,
            "all_bounds_satisfied": reports.iter().all(|r| r.bound_satisfied),
            "max_closed_form_error": reports.iter().map(|r| r.closed_form_check).fold(0.0, f64::max),
        }),
        tables: vec![table, accounts],
        alerts: None,
        findings,
    })
}

pub fn boundary(config: &ScenarioConfig) -> Result<Report, CliError> {
    let sec = config.boundary.as_ref().expect("validated section");
    let cfg = clearing_config(config)?;
    let rules = rules(config)?;
    let rows = continuity_scan(&rules, sec.samples, sec.players, seed(config))?;
    let mut jumps = Table::new(
        "boundary_jump",
        &[
            "alpha",
            "samples",
            "players",
            "max_sup_norm",
            "min_normalized_sup_norm",
            "max_normalized_sup_norm",
        ],
    );
    let mut findings = Vec::new();
    for r in &rows {
        if r.alpha == 1.0 && r.max_sup_norm > 1e-12 {
            findings.push(format!("linear rule jumps by {} at the boundary", r.max_sup_norm));
        }
        if r.alpha != 1.0 && r.players >= 2 && r.min_normalized_sup_norm < 1e-6 {
            findings.push(format!(
                "alpha {}: normalized jump only {} on unequal overages",
                r.alpha, r.min_normalized_sup_norm
            ));
        }
        jumps.push(vec![
            num(r.alpha),
            int(r.samples),
            int(r.players),
            num(r.max_sup_norm),
            num(r.min_normalized_sup_norm),
            num(r.max_normalized_sup_norm),
        ]);
    }

    let mut bias = Table::new(
        "noise_bias",
        &[
            "case",
            "alpha",
            "epsilon",
            "player",
            "bias",
            "std_error",
            "within_3se",
            "distribution_bias",
            "distribution_std_error",
            "half_jump_limit",
            "scarcity_fraction",
        ],
    );
    let mut noise_results = Vec::new();
    for (case, spec) in sec.noise.iter().enumerate() {
        let ent = entitlements(spec.entitlements.as_deref().unwrap_or(&config.entitlements))?;
        let base = profile(&spec.claims, config.bound)?;
        for &rule in &rules {
            for &eps in &spec.epsilons {
                let r = noise_bias_with(&ent, &base, rule, eps, spec.samples, seed(config), &cfg)?;
                for j in 0..ent.len() {
                    bias.push(vec![
                        int(case),
                        num(r.alpha),
                        num(eps),
                        int(j),
                        num(r.bias[j]),
                        num(r.std_error[j]),
                        flag(r.bias[j].abs() <= 3.0 * r.std_error[j]),
                        num(r.distribution_bias[j]),
                        num(r.distribution_std_error[j]),
                        num(r.half_jump_limit[j]),
                        num(r.scarcity_fraction),
                    ]);
                }
                noise_results.push(json!({ "case": case, "result": r }));
            }
        }
    }
    Ok(Report {
        results: json!({ "continuity": rows, "noise_bias": noise_results }),
        tables: vec![jumps, bias],
        alerts: None,
        findings,
    })
}

pub fn policy(config: &ScenarioConfig) -> Result<Report, CliError> {
    let sec = config.policy.as_ref().expect("validated section");
    let mut periods = Vec::with_capacity(sec.collar.periods());
    if let Some(g) = &sec.generator {
        let ent = entitlements(&config.entitlements)?;
        let generated = generate_scenarios(g, &ent, bound(config), seed(config), config.tolerances.boundary);
        for claims in generated.profiles {
            periods.push((ent.clone(), profile(&claims, config.bound)?));
        }
    } else {
        for p in &sec.periods {
            let ent = entitlements(p.entitlements.as_deref().unwrap_or(&config.entitlements))?;
            periods.push((ent, profile(&p.claims, config.bound)?));
        }
    }
    let run = simulate(&periods, &sec.collar, &sec.governance, &NeverSuspend)?;

    let tol = config.tolerances.numeric;
    let mut findings = Vec::new();
    let mut period_table = Table::new(
        "policy_periods",
        &[
            "period",
            "total_overage",
            "total_slack",
            "lambda",
            "kappa",
            "regime",
            "total_penalty",
            "budget_residual",
            "residual_identity_error",
        ],
    );
    let mut player_table = Table::new(
        "policy_players",
        &["period", "player", "entitlement", "claim", "payoff", "residual", "penalty"],
    );
    for (rec, (ent, claims)) in run.records.iter().zip(&periods) {
        if rec.residual_identity_error > tol {
            findings.push(format!(
                "period {}: residuals differ from lambda * overage by {}",
                rec.period, rec.residual_identity_error
            ));
        }
        if rec.total_overage >= rec.total_slack && rec.budget_residual.abs() > tol * ent.total() {
            findings.push(format!("period {}: scarcity budget residual {}", rec.period, rec.budget_residual));
        }
        period_table.push(vec![
            int(rec.period),
            num(rec.total_overage),
            num(rec.total_slack),
            num(rec.lambda),
            num(rec.kappa),
            rec.regime.as_str().into(),
            num(rec.total_penalty),
            num(rec.budget_residual),
            num(rec.residual_identity_error),
        ]);
        for j in 0..ent.len() {
            player_table.push(vec![
                int(rec.period),
                int(j),
                num(ent.get(j)),
                num(claims.claims()[j]),
                num(rec.payoffs[j]),
                num(rec.residuals[j]),
                num(rec.penalties[j]),
            ]);
        }
    }

    let mut arbitrage = Table::new(
        "arbitrage",
        &[
            "period",
            "kappa",
            "p_bar",
            "lambda_floor",
            "p_forward",
            "waiting_cost_bound",
            "verdict",
            "reason",
        ],
    );
    for d in &run.arbitrage {
        arbitrage.push(vec![
            int(d.period),
            num(d.kappa),
            num(d.p_bar),
            num(d.lambda_floor),
            num(d.p_forward),
            num(d.waiting_cost_bound),
            format!("{:?}", d.verdict),
            d.reason.map(|r| format!("{r:?}")).unwrap_or_default(),
        ]);
    }
    let mut tables = vec![period_table, player_table, arbitrage];

    let waiting = match &sec.waiting_cost {
        Some(w) => {
            let e = expected_waiting_cost(&w.distribution, w.samples, seed(config))?;
            if e.bound_violations > 0 {
                findings.push(format!(
                    "marginal penalty fell below kappa * lambda in {} of {} checked draws",
                    e.bound_violations, e.checked
                ));
            }
            let mut t = Table::new(
                "waiting_cost",
                &["samples", "mean", "std_error", "checked", "bound_violations", "min_margin"],
            );
            t.push(vec![
                int(e.samples),
                num(e.mean),
                num(e.std_error),
                int(e.checked),
                int(e.bound_violations),
                opt_num(e.min_margin),
            ]);
            tables.push(t);
            Some(e)
        }
        None => None,
    };

    Ok(Report {
        results: json!({
            "periods": run.records.len(),
            "empirical_mean_lambda": run.empirical_mean_lambda,
            "lambda_floor": sec.collar.lambda_floor,
            "alerts": run.alerts,
            "arbitrage": run.arbitrage,
            "waiting_cost": waiting,
        }),
        alerts: Some(run.alerts.iter().map(|a| a.describe()).collect()),
        tables,
        findings,
    })
}

pub fn compare(config: &ScenarioConfig) -> Result<Report, CliError> {
    let sec = config.compare.as_ref().expect("validated section");
    let mut awards = Table::new(
        "awards",
        &[
            "problem",
            "rule",
            "player",
            "claim",
            "entitlement",
            "estate",
            "award",
            "lambda",
            "unallocated",
        ],
    );
    let mut violations = Table::new("nls_violations", &["problem", "rule", "player", "claim", "entitlement", "award"]);
    let mut findings = Vec::new();
    for (k, spec) in sec.problems.iter().enumerate() {
        let ent = entitlements(spec.entitlements.as_deref().unwrap_or(&config.entitlements))?;
        let p = ClaimsProblem::new(spec.claims.clone(), ent, spec.estate)?;
        for rule in RuleTag::ALL {
            let a = award(rule, &p)?;
            for j in 0..p.claims.len() {
                awards.push(vec![
                    int(k),
                    rule.as_str().into(),
                    int(j),
                    num(p.claims[j]),
                    num(p.entitlements.get(j)),
                    num(p.estate),
                    num(a.awards[j]),
                    num(a.lambda),
                    num(a.unallocated),
                ]);
            }
            for v in nls_audit(rule, &p)? {
                if rule == RuleTag::SlackClearing {
                    findings.push(format!("problem {k}: slack clearing shorts cooperator {}", v.player));
                }
                violations.push(vec![
                    int(k),
                    rule.as_str().into(),
                    int(v.player),
                    num(v.claim),
                    num(v.entitlement),
                    num(v.award),
                ]);
            }
        }
    }
    let mut tables = vec![awards, violations];
    let separation = match &sec.stressed {
        Some(s) => {
            let rows = nls_separation(s.problems, s.players, seed(config))?;
            let mut t = Table::new("nls_separation", &["rule", "problems", "violating_problems", "violation_rate"]);
            for r in &rows {
                let expected_clean = r.rule == RuleTag::SlackClearing;
                if expected_clean && r.violating_problems > 0 {
                    findings.push(format!("slack clearing failed on {} stressed problems", r.violating_problems));
                }
                if !expected_clean && r.violating_problems == 0 {
                    findings.push(format!("{} never shorted a cooperator", r.rule.as_str()));
                }
                t.push(vec![
                    r.rule.as_str().into(),
                    int(r.problems),
                    int(r.violating_problems),
                    num(r.violation_rate),
                ]);
            }
            tables.push(t);
            Some(rows)
        }
        None => None,
    };
    Ok(Report {
        results: json!({ "problems": sec.problems.len(), "separation": separation }),
        tables,
        alerts: None,
        findings,
    })
}
