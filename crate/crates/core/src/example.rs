//! The bundled reference configuration used across tests and the CLI: three
//! forcing intervals with square-root-type attractive forcing, two impulses
//! with fractional-power shapes, and a constant weight coefficient.
//!
//! Data on [0, 1], partition 0 < 1/5 < 2/5 < 3/5 < 4/5 < 1:
//! * f_0 = f_2 = |u|^(-1/2) u, f_1 = |u|^(-1/2) u (1 + 0.1 sin|u|)
//! * I_1 = |u|^(-1/2) u at t = 1/5, I_2 = |u|^(-2/3) u at t = 3/5
//! * h = 1, beta = 1.9, delta = 0.9
//! * growth constants a1 = 1.1, theta1 = 3/2, a2 = 5, theta2 = 4/3,
//!   a_star = 0.56
//!
//! `verify_closed_forms` cross-checks the quadrature machinery against the
//! hand-integrated antiderivatives of this data.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::cutoff::ModifiedProblem;
use crate::expr::Expr;
use crate::problem::{GrowthConstants, Partition, ProblemSpec, WeightProfile};

pub const F_OUTER: &str = "abs(u)^(-1/2)*u";
pub const F_MIDDLE: &str = "abs(u)^(-1/2)*u*(1 + 0.1*sin(abs(u)))";
pub const IMPULSE_1: &str = "abs(u)^(-1/2)*u";
pub const IMPULSE_2: &str = "abs(u)^(-2/3)*u";

pub fn growth() -> GrowthConstants {
    GrowthConstants {
        a1: 1.1,
        theta1: 1.5,
        a2: 5.0,
        theta2: 4.0 / 3.0,
        a_star: 0.56,
    }
}

/// The reference problem with g = 0 and epsilon = 0.
pub fn reference() -> ProblemSpec {
    reference_with(0.0, "0")
}

/// The reference problem with the given epsilon and a common perturbation
/// expression g used on every forcing interval.
pub fn reference_with(epsilon: f64, g: &str) -> ProblemSpec {
    let partition = Partition::new(vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]).unwrap();
    ProblemSpec::new(
        partition,
        Expr::parse("1").unwrap(),
        1.9,
        epsilon,
        0.9,
        growth(),
        vec![
            Expr::parse(F_OUTER).unwrap(),
            Expr::parse(F_MIDDLE).unwrap(),
            Expr::parse(F_OUTER).unwrap(),
        ],
        vec![Expr::parse(g).unwrap(); 3],
        vec![
            Expr::parse(IMPULSE_1).unwrap(),
            Expr::parse(IMPULSE_2).unwrap(),
        ],
    )
    .unwrap()
}

/// Closed-form identities of the reference data, checked against the
/// quadrature-based evaluations. Returns one line per identity with the
/// observed worst error, or an error string naming the first failure.
pub fn verify_closed_forms(
    mp: &ModifiedProblem<'_>,
    weights: &WeightProfile,
) -> Result<Vec<String>, String> {
    let mut lines = Vec::new();
    let delta = mp.spec.delta;

    // antiderivative of |s|^(-1/2) s is (2/3)|u|^(3/2)
    let mut worst = 0.0f64;
    for k in 1..=200 {
        let u = -delta + 2.0 * delta * k as f64 / 200.0;
        let got = mp
            .forcing_anti(0, 0.1, u)
            .map_err(|e| format!("F_0(0.1, {u}): {e}"))?;
        let want = 2.0 / 3.0 * libm::pow(u.abs(), 1.5);
        worst = worst.max((got - want).abs() / (1.0 + want));
    }
    if worst > 1e-10 {
        return Err(format!(
            "outer forcing antiderivative deviates from (2/3)|u|^(3/2) by {worst:e}"
        ));
    }
    lines.push(format!(
        "outer forcing antiderivative matches (2/3)|u|^(3/2), worst relative error {worst:.2e}"
    ));

    // the middle forcing dominates 0.6 |u|^(3/2)
    let mut worst_margin = f64::INFINITY;
    for k in 1..=200 {
        let u = -delta + 2.0 * delta * k as f64 / 200.0;
        if u == 0.0 {
            continue;
        }
        let got = mp
            .forcing_anti(1, 0.5, u)
            .map_err(|e| format!("F_1(0.5, {u}): {e}"))?;
        worst_margin = worst_margin.min(got - 0.6 * libm::pow(u.abs(), 1.5));
    }
    if worst_margin < 0.0 {
        return Err(format!(
            "middle forcing antiderivative drops below 0.6|u|^(3/2), margin {worst_margin:e}"
        ));
    }
    lines.push(format!(
        "middle forcing antiderivative stays above 0.6|u|^(3/2), worst margin {worst_margin:.3e}"
    ));

    // impulse antiderivatives: (2/3)|u|^(3/2) and (3/4)|u|^(4/3), times the
    // weight at the impulse time
    let times: Vec<f64> = mp.spec.partition.impulse_times().collect();
    for (k, power_coef) in [(0usize, (1.5f64, 2.0 / 3.0)), (1, (4.0 / 3.0, 0.75))] {
        let (power, coef) = power_coef;
        let w = weights
            .weight(times[k])
            .map_err(|e| format!("weight at impulse {}: {e}", k + 1))?;
        let mut worst = 0.0f64;
        for j in 1..=100 {
            let u = -0.5 * delta + delta * j as f64 / 100.0;
            let got = mp
                .impulse_anti_mod(k, u)
                .map_err(|e| format!("impulse antiderivative {}: {e}", k + 1))?;
            let want = w * coef * libm::pow(u.abs(), power);
            worst = worst.max((got - want).abs() / (1.0 + want));
        }
        if worst > 1e-10 {
            return Err(format!(
                "impulse {} antiderivative deviates from closed form by {worst:e}",
                k + 1
            ));
        }
        lines.push(format!(
            "impulse {} antiderivative matches {coef:.4}|u|^{power:.4} (weighted), worst relative error {worst:.2e}",
            k + 1
        ));
    }

    // doubled impulse antiderivatives dominate the impulse increments:
    // (4/3) e^(1/5) |u|^(3/2) + (3/2) e^(3/5) |u|^(4/3)
    //   >= e^(1/5) |u|^(3/2) + e^(3/5) |u|^(4/3)
    let w1 = weights.weight(times[0]).map_err(|e| format!("{e}"))?;
    let w2 = weights.weight(times[1]).map_err(|e| format!("{e}"))?;
    let mut worst_margin = f64::INFINITY;
    for j in 0..=100 {
        let u = -0.5 * delta + delta * j as f64 / 100.0;
        let lhs = 4.0 / 3.0 * w1 * libm::pow(u.abs(), 1.5)
            + 1.5 * w2 * libm::pow(u.abs(), 4.0 / 3.0);
        let rhs = w1 * libm::pow(u.abs(), 1.5) + w2 * libm::pow(u.abs(), 4.0 / 3.0);
        worst_margin = worst_margin.min(lhs - rhs);
    }
    if worst_margin < 0.0 {
        return Err(format!(
            "doubled impulse antiderivatives fail to dominate, margin {worst_margin:e}"
        ));
    }
    lines.push(format!(
        "doubled impulse antiderivatives dominate the increments, worst margin {worst_margin:.3e}"
    ));

    Ok(lines)
}
