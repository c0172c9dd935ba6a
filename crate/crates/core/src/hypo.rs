//! Sampling audit of the structural hypotheses on the raw problem data.
//!
//! `cutoff::ModifiedProblem::audit` checks the *modified* data the solver
//! actually runs on. This module asks the prior question: does the problem
//! as stated satisfy the structural conditions the multiplicity analysis
//! assumes? Concretely: oddness of forcing and impulses, sign and
//! strict-concavity conditions on the forcing antiderivative, its dyadic
//! divergence trend near the origin, the sublinear growth caps, sign and
//! domination conditions on the impulses, boundedness of the perturbation by
//! a radial envelope, and the coefficient inequality 2·exp(H₀)/T² > β.
//!
//! Everything is sampled: u ranges over [-δ, δ] with dyadic shells near the
//! origin (where the fractional powers live) and a seeded uniform fill, t
//! over a right-closed grid in each forcing interval. Strict inequalities
//! are accepted at zero tolerance and reported with their worst margin;
//! passing margins below 1e-12 are annotated as numerically marginal.
//! Continuity of the data on the half-open forcing intervals is assumed from
//! the expression forms and is not sampled — the corresponding entry is
//! informational.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::cutoff::ModifiedProblem;
use crate::problem::{ProblemSpec, WeightProfile};
use crate::report::{AuditReport, ConditionEntry, Gate};
use crate::rng::Rng;

/// Requested sample budgets below this are rounded up.
const MIN_SAMPLES: usize = 2000;
/// Divergence target for the F/u² trend on shrinking dyadic shells.
const RATIO_GOAL: f64 = 1e3;
/// Deepest dyadic shell δ·2⁻ʲ tried for the divergence target. Any ratio
/// diverging like a negative power of |u| crosses the target well before
/// j = 44; beyond that the antiderivatives drown in rounding.
const LAST_SHELL: usize = 44;
/// Dyadic shells whose consecutive ratios must increase strictly.
const TREND_SHELLS: core::ops::RangeInclusive<usize> = 2..=12;
/// Passing margins below this are annotated as numerically marginal.
const MARGINAL: f64 = 1e-12;
/// Relative slack over the grid envelope in the perturbation-bound check.
const ENV_SLACK: f64 = 1e-9;

/// Stable identifiers of the audited conditions, in report order.
const CONDITION_IDS: [&str; 11] = [
    "F0", "F1", "F2", "F3", "F4", "F5", "I1", "I2", "I3", "G", "H",
];

/// Samples the hypotheses on the raw data of `spec` and reports worst
/// margins with witnesses. Deterministic for a fixed `rng_seed`; sample
/// budgets below 2000 are rounded up. Failures never abort the audit — they
/// become failing entries.
pub fn audit(spec: &ProblemSpec, n_samples: usize, rng_seed: u64) -> AuditReport {
    let weights = match WeightProfile::build(spec, 256) {
        Ok(w) => w,
        Err(e) => {
            // Without the weight exponent nothing downstream is meaningful.
            let note = format!("weight profile failed to build: {e}");
            let entries = CONDITION_IDS
                .iter()
                .map(|id| ConditionEntry {
                    id: String::from(*id),
                    pass: false,
                    margin: f64::NAN,
                    witness_t: f64::NAN,
                    witness_u: f64::NAN,
                    note: note.clone(),
                    mandatory: *id != "F0" && *id != "F3",
                })
                .collect();
            return AuditReport::from_entries(entries);
        }
    };
    let mp = ModifiedProblem::new(spec, &weights);
    let d = spec.delta;
    let gw = &spec.growth;
    let n_active = spec.partition.n_active();
    let n_imp = spec.partition.n_impulses();
    let mut rng = Rng::new(rng_seed);

    let n_t = 8usize;
    let t_grid = |i: usize| -> Vec<f64> {
        let (a, b) = spec.partition.active_interval(i);
        (1..=n_t)
            .map(|j| a + (b - a) * j as f64 / n_t as f64)
            .collect()
    };

    let mut us: Vec<f64> = Vec::new();
    us.push(0.0);
    for s in [0.25, 0.5, 0.75, 1.0] {
        us.push(s * d);
        us.push(-s * d);
    }
    for j in 1..=14 {
        let v = d * libm::exp2(-(j as f64));
        us.push(v);
        us.push(-v);
    }
    let n_grid = 32;
    for k in 0..=n_grid {
        us.push(-d + 2.0 * d * k as f64 / n_grid as f64);
    }
    let per_u = (n_active.max(1) * n_t).max(1);
    let want_u = (n_samples.max(MIN_SAMPLES) + per_u - 1) / per_u;
    while us.len() < want_u {
        us.push(rng.range(-d, d));
    }

    let mut f1 = Gate::new();
    let mut f2pos = Gate::new();
    let mut f2str = Gate::new();
    let mut f3 = Gate::new();
    let mut f4 = Gate::new();
    let mut f5 = Gate::new();
    let mut i1 = Gate::new();
    let mut i2 = Gate::new();
    let mut i3i = Gate::new();
    let mut i3ii = Gate::new();
    let mut gp = Gate::new();

    // Radial envelope b(r) = max over intervals and sampled t of |g_i(t, ±r)|
    // on a uniform grid over [0, δ]. Its existence is the content of the
    // perturbation-bound condition; the sampling loop then checks |g| stays
    // under the per-cell node maximum, which only fails if g spikes between
    // adjacent grid radii.
    let nb = 512usize;
    let mut b_grid = Vec::with_capacity(nb + 1);
    for k in 0..=nb {
        let r = d * k as f64 / nb as f64;
        let mut worst = 0.0f64;
        for i in 0..n_active {
            for &t in &t_grid(i) {
                for v in [r, -r] {
                    match mp.perturbation(i, t, v) {
                        Ok(g) => worst = worst.max(g.abs()),
                        Err(e) => gp.flag(&e, t, v),
                    }
                }
            }
        }
        b_grid.push(worst);
    }
    let b_max = b_grid.iter().fold(0.0f64, |m, &v| m.max(v));
    let env_upper = |r: f64| -> f64 {
        let x = (r / d * nb as f64).max(0.0).min(nb as f64);
        let k = (x as usize).min(nb - 1);
        b_grid[k].max(b_grid[k + 1])
    };

    for i in 0..n_active {
        for &t in &t_grid(i) {
            for &u in &us {
                match (mp.forcing(i, t, u), mp.forcing(i, t, -u)) {
                    (Ok(p), Ok(q)) => f1.observe(1e-12 * (1.0 + p.abs()) - (p + q).abs(), t, u),
                    (Err(e), _) | (_, Err(e)) => f1.flag(&e, t, u),
                }
                match mp.perturbation(i, t, u) {
                    Ok(g) => {
                        gp.observe(env_upper(u.abs()) + ENV_SLACK * (1.0 + b_max) - g.abs(), t, u)
                    }
                    Err(e) => gp.flag(&e, t, u),
                }
                // At u = 0 the sign and growth conditions hold identically
                // for odd data and would only report a vacuous zero margin.
                if u == 0.0 {
                    continue;
                }
                match mp.forcing(i, t, u) {
                    Ok(ft) => {
                        let bound = gw.a1 * libm::pow(u.abs(), gw.theta1 - 1.0);
                        f4.observe(bound - ft.abs(), t, u);
                        match mp.forcing_anti(i, t, u) {
                            Ok(cf) => {
                                f2pos.observe(cf, t, u);
                                f2str.observe(2.0 * cf - u * ft, t, u);
                                f5.observe(cf - gw.a_star * libm::pow(u.abs(), gw.theta1), t, u);
                            }
                            Err(e) => {
                                f2pos.flag(&e, t, u);
                                f2str.flag(&e, t, u);
                                f5.flag(&e, t, u);
                            }
                        }
                    }
                    Err(e) => {
                        f4.flag(&e, t, u);
                        f2str.flag(&e, t, u);
                    }
                }
            }
        }
    }

    // Divergence trend of F/u² on shrinking dyadic shells: the infimum over
    // sampled t must increase strictly from shell to shell and pass the goal
    // ratio before the shells bottom out.
    let mut shortfall: Option<(usize, f64)> = None;
    let mut deepest_crossing = 0usize;
    for i in 0..n_active {
        let tg = t_grid(i);
        let mut prev: Option<f64> = None;
        let mut crossed: Option<usize> = None;
        let mut last = f64::NAN;
        let mut ok = true;
        for j in *TREND_SHELLS.start()..=LAST_SHELL {
            let u_j = d * libm::exp2(-(j as f64));
            let mut inf_t = f64::INFINITY;
            for &t in &tg {
                match mp.forcing_anti(i, t, u_j) {
                    Ok(cf) => inf_t = inf_t.min(cf / (u_j * u_j)),
                    Err(e) => {
                        f3.flag(&e, t, u_j);
                        ok = false;
                    }
                }
            }
            if !ok {
                break;
            }
            if j <= *TREND_SHELLS.end() {
                if let Some(p) = prev {
                    f3.observe(inf_t - p, f64::NAN, u_j);
                }
                prev = Some(inf_t);
            }
            last = inf_t;
            if crossed.is_none() && inf_t > RATIO_GOAL {
                crossed = Some(j);
            }
            if crossed.is_some() && j >= *TREND_SHELLS.end() {
                break;
            }
        }
        if !ok {
            continue;
        }
        match crossed {
            Some(j) => deepest_crossing = deepest_crossing.max(j),
            None => shortfall = Some((i, last)),
        }
    }

    if n_imp == 0 {
        for g in [&mut i1, &mut i2, &mut i3i, &mut i3ii] {
            g.vacuous = true;
        }
    }
    let mut wk = Vec::with_capacity(n_imp);
    for k in 0..n_imp {
        let tk = mp.impulse_time(k);
        match weights.weight(tk) {
            Ok(w) => wk.push(w),
            Err(e) => {
                i3ii.flag(&e, tk, f64::NAN);
                wk.push(f64::NAN);
            }
        }
    }
    for &u in &us {
        let mut anti_sum = 0.0f64;
        let mut lin_sum = 0.0f64;
        let mut sum_ok = n_imp > 0 && u != 0.0;
        for k in 0..n_imp {
            let tk = mp.impulse_time(k);
            match (mp.impulse(k, u), mp.impulse(k, -u)) {
                (Ok(p), Ok(q)) => i1.observe(1e-12 * (1.0 + p.abs()) - (p + q).abs(), tk, u),
                (Err(e), _) | (_, Err(e)) => i1.flag(&e, tk, u),
            }
            match mp.impulse(k, u) {
                Ok(v) => {
                    let bound = gw.a2 * (libm::pow(u.abs(), gw.theta2 - 1.0) + 1.0);
                    i2.observe(bound - v.abs(), tk, u);
                    if u > 0.0 {
                        i3i.observe(v, tk, u);
                    }
                    lin_sum += wk[k] * v * u;
                }
                Err(e) => {
                    i2.flag(&e, tk, u);
                    i3i.flag(&e, tk, u);
                    i3ii.flag(&e, tk, u);
                    sum_ok = false;
                }
            }
            match mp.impulse_anti(k, u) {
                Ok(anti) => anti_sum += wk[k] * anti,
                Err(e) => {
                    i3ii.flag(&e, tk, u);
                    sum_ok = false;
                }
            }
        }
        if sum_ok && wk.iter().all(|w| w.is_finite()) {
            i3ii.observe(2.0 * anti_sum - lin_sum, f64::NAN, u);
        }
    }

    let mut entries = Vec::new();
    entries.push(ConditionEntry {
        id: String::from("F0"),
        pass: true,
        margin: f64::INFINITY,
        witness_t: f64::NAN,
        witness_u: f64::NAN,
        note: String::from(
            "continuity on the half-open forcing intervals is assumed from the \
             expression forms and not sampled; finite evaluation is exercised \
             by every other entry",
        ),
        mandatory: false,
    });
    entries.push(f1.entry("F1", "forcing is odd in u", true, false));
    entries.push(merge(
        f2pos.entry("F2", "forcing antiderivative is nonnegative on [-δ, δ]", true, false),
        f2str.entry("F2", "u·f - 2F stays strictly negative off the origin", true, true),
    ));
    let f3_note = match shortfall {
        None => format!(
            "inf over t of F/u² increases along dyadic shells and passes \
             {RATIO_GOAL:.0e} by shell {deepest_crossing}; indicative trend, \
             not a proof of the limit"
        ),
        Some((i, last)) => format!(
            "inf over t of F/u² reached only {last:.3e} by shell {LAST_SHELL} \
             on interval {i} (goal {RATIO_GOAL:.0e})"
        ),
    };
    let mut e3 = f3.entry("F3", &f3_note, false, true);
    if shortfall.is_some() {
        e3.pass = false;
    }
    entries.push(e3);
    entries.push(f4.entry(
        "F4",
        &format!(
            "|f| stays below a1·|u|^(θ1-1) with a1 = {}, θ1 = {}",
            gw.a1, gw.theta1
        ),
        true,
        false,
    ));
    entries.push(f5.entry(
        "F5",
        &format!(
            "forcing antiderivative dominates a*·|u|^θ1 with a* = {}",
            gw.a_star
        ),
        true,
        false,
    ));
    entries.push(i1.entry("I1", "impulses are odd in u", true, false));
    entries.push(i2.entry(
        "I2",
        &format!(
            "impulses stay below a2·(|u|^(θ2-1) + 1) with a2 = {}, θ2 = {}",
            gw.a2, gw.theta2
        ),
        true,
        false,
    ));
    entries.push(merge(
        i3i.entry("I3", "impulses are nonnegative on [0, δ]", true, false),
        i3ii.entry(
            "I3",
            "doubled weighted antiderivative sum dominates the weighted increment sum",
            true,
            false,
        ),
    ));
    entries.push(gp.entry(
        "G",
        "perturbation is bounded by the radial grid envelope of its own samples",
        true,
        false,
    ));

    let total = spec.partition.total_time();
    let h_margin = 2.0 * libm::exp(weights.h_min()) / (total * total) - spec.beta;
    let mut hg = Gate::new();
    hg.observe(h_margin, f64::NAN, f64::NAN);
    entries.push(hg.entry(
        "H",
        &format!(
            "2·exp(H0)/T² exceeds beta = {} (H0 = {:.6}, T = {})",
            spec.beta,
            weights.h_min(),
            total
        ),
        true,
        true,
    ));

    for e in &mut entries {
        if e.pass && e.margin.is_finite() && e.margin < MARGINAL {
            e.note.push_str("; numerically marginal");
        }
    }
    AuditReport::from_entries(entries)
}

/// Folds the two halves of a two-part condition into one entry: the verdict
/// is the conjunction, the margin and witness come from the failing half if
/// there is one, otherwise from the smaller margin.
fn merge(a: ConditionEntry, b: ConditionEntry) -> ConditionEntry {
    let both = a.pass && b.pass;
    let mut e = if !a.pass {
        a
    } else if !b.pass {
        b
    } else if a.margin <= b.margin {
        a
    } else {
        b
    };
    e.pass = both;
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example;
    use crate::expr::Expr;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn reference_data_passes_every_condition() {
        let spec = example::reference();
        let r = audit(&spec, 4000, 42);
        for e in &r.entries {
            assert!(e.pass, "{} failed: {} (margin {:.3e})", e.id, e.note, e.margin);
        }
        assert!(r.pass);
    }

    #[test]
    fn concavity_margin_matches_closed_form_band() {
        // For the reference data u·f - 2F = -(1/3)|u|^{3/2} up to a correction
        // of order |u|^{5/2}, and F itself is (2/3)|u|^{3/2}; the crude
        // envelope bound (a1 - 2·0.6)|u|^{3/2} = 0.1|u|^{3/2} sits below both.
        let spec = example::reference();
        let r = audit(&spec, 4000, 42);
        let f2 = r.entry("F2").unwrap();
        let u = f2.witness_u.abs();
        assert!(u > 0.0 && u <= spec.delta);
        let scale = libm::pow(u, 1.5);
        assert!(
            f2.margin >= 0.1 * scale && f2.margin <= 0.34 * scale,
            "margin {:.6e} outside the closed-form band at |u| = {:.3e}",
            f2.margin,
            u
        );
    }

    #[test]
    fn growth_constants_echoed_in_notes() {
        let spec = example::reference();
        let r = audit(&spec, 2000, 7);
        assert!(r.entry("F4").unwrap().note.contains("a1 = 1.1"));
        assert!(r.entry("F4").unwrap().note.contains("θ1 = 1.5"));
        assert!(r.entry("F5").unwrap().note.contains("a* = 0.56"));
        assert!(r.entry("I2").unwrap().note.contains("a2 = 5"));
        assert!(r.entry("H").unwrap().note.contains("beta = 1.9"));
    }

    #[test]
    fn oversized_beta_fails_the_coefficient_inequality() {
        let mut spec = example::reference();
        spec.beta = 3.0;
        let r = audit(&spec, 2000, 7);
        let h = r.entry("H").unwrap();
        assert!(!h.pass);
        assert!((h.margin + 1.0).abs() < 1e-9, "margin {}", h.margin);
        assert!(!r.pass);
        // the other conditions do not involve beta
        assert!(r.entry("F2").unwrap().pass);
        assert!(r.entry("I3").unwrap().pass);
    }

    #[test]
    fn superquadratic_forcing_fails_concavity_and_trend() {
        let mut spec = example::reference();
        spec.f = vec![Expr::parse("u^3").unwrap(); 3];
        let r = audit(&spec, 2000, 7);
        // u·f - 2F = u⁴/2 > 0 and F = u⁴/4 falls below a*|u|^{3/2} near 0.
        assert!(!r.entry("F2").unwrap().pass);
        assert!(!r.entry("F5").unwrap().pass);
        assert!(!r.entry("F3").unwrap().pass);
        assert!(!r.pass);
        assert!(r.entry("F4").unwrap().pass, "|u|³ ≤ 1.1|u|^(1/2) on [-0.9, 0.9]");
    }

    #[test]
    fn even_impulse_fails_oddness_only() {
        let mut spec = example::reference();
        spec.impulses[0] = Expr::parse("abs(u)").unwrap();
        let r = audit(&spec, 2000, 7);
        assert!(!r.entry("I1").unwrap().pass);
        assert!(!r.pass);
        assert!(r.entry("I2").unwrap().pass);
        assert!(r.entry("I3").unwrap().pass, "|u| ≥ 0 and its antiderivative still dominates");
    }

    #[test]
    fn singular_perturbation_fails_the_envelope_check() {
        let spec = example::reference_with(0.1, "1/u");
        let r = audit(&spec, 2000, 7);
        let g = r.entry("G").unwrap();
        assert!(!g.pass);
        assert!(g.note.contains("evaluation failed"), "{}", g.note);
        assert!(!r.pass);
    }

    #[test]
    fn condition_ids_cover_the_hypothesis_list_once() {
        let r = audit(&example::reference(), 2000, 3);
        let ids: Vec<&str> = r.entries.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, CONDITION_IDS);
        for e in &r.entries {
            let informational = e.id == "F0" || e.id == "F3";
            assert_eq!(e.mandatory, !informational, "{}", e.id);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(6))]

        // Deterministic shells pin the worst margins, so reseeding the
        // uniform fill must not move any margin by 10x or flip a verdict
        // that had room.
        #[test]
        fn reseeding_keeps_margins_stable(seed in any::<u64>()) {
            let spec = example::reference();
            let a = audit(&spec, 2000, 1);
            let b = audit(&spec, 2000, seed);
            for (ea, eb) in a.entries.iter().zip(b.entries.iter()) {
                prop_assert_eq!(&ea.id, &eb.id);
                if ea.margin.abs() > 1e-3 {
                    prop_assert_eq!(ea.pass, eb.pass, "{} flipped", ea.id);
                }
                if ea.margin.is_finite() && eb.margin.is_finite()
                    && ea.margin > 0.0 && eb.margin > 0.0 {
                    let ratio = ea.margin / eb.margin;
                    prop_assert!((0.1..10.0).contains(&ratio),
                        "{}: margins {:.3e} vs {:.3e}", ea.id, ea.margin, eb.margin);
                }
            }
        }
    }
}
