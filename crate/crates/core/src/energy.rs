//! The modified energy functional on the discrete space: value, weak-form
//! gradient over the free dofs, finite-difference Hessian action, and the
//! perturbation gap |J̃_ε - J̃₀| with its a-priori bound.
//!
//! For a field u the functional splits as
//!
//! ```text
//!   J̃_ε(u) = ½ ∫ e^H |u''|²                 (quad_term)
//!          - (β/2) ∫ |u'|²                  (beta_term)
//!          - Σ_i ∫_{active i} e^H F̃_i(t,u)  (f_term)
//!          - Σ_k Î_k(u(t_k))                (impulse_term)
//!          - ε Σ_i ∫_{active i} e^H G̃_i    (g_term)
//! ```
//!
//! The quadratic pieces come from the precomputed banded forms; the data
//! pieces are summed element by element, points in ascending order, so every
//! energy is bitwise reproducible between calls. The forcing integrals only
//! run over active segments — rest segments carry the impulse conditions and
//! no forcing.
//!
//! The gradient is assembled analytically from the weak form (f̃, g̃, Ĩ are
//! available pointwise); second derivatives are not, since they would need
//! m'' and data derivatives the expression set does not provide, so Newton
//! steps use the central-difference `hessian_vec`.

use alloc::vec;
use alloc::vec::Vec;

use crate::cutoff::{DataError, ModifiedProblem};
use crate::problem::SegmentKind;
use crate::space::Field;

/// The terms of J̃_ε(u), each with the sign convention of the display above
/// (all five stored positively-oriented; `total` applies the minus signs).
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct EnergyBreakdown {
    pub quad_term: f64,
    pub beta_term: f64,
    pub f_term: f64,
    pub impulse_term: f64,
    pub g_term: f64,
    pub total: f64,
}

/// |J̃_ε(u) - J̃₀(u)| together with the bound |ε|·C₀ that the small-critical-
/// value argument needs, where C₀ sums the grid maxima of |G̃_i| over
/// [0,T]×[-δ,δ] times M₁·T. The max over the weight e^H (M₁) is included so
/// the bound genuinely dominates the weighted integral; it only widens C₀.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct PerturbationGap {
    pub gap: f64,
    pub bound: f64,
    pub c0: f64,
    pub within: bool,
}

/// J̃ at the epsilon stored in the problem spec.
pub fn energy(u: &Field, mp: &ModifiedProblem) -> Result<EnergyBreakdown, DataError> {
    energy_at(u, mp, mp.spec.epsilon)
}

/// J̃ at an explicit epsilon (the fibering map needs ε = 0 regardless of the
/// spec value).
pub fn energy_at(u: &Field, mp: &ModifiedProblem, epsilon: f64) -> Result<EnergyBreakdown, DataError> {
    let space = u.space();
    let x = u.coeffs();
    let quad_term = 0.5 * space.stiffness().quadratic_form(x, x);
    let beta_term = 0.5 * mp.spec.beta * space.first().quadratic_form(x, x);

    let mut f_term = 0.0;
    let mut g_raw = 0.0;
    for e in 0..space.n_elements() {
        let SegmentKind::Active(i) = space.elem_kind(e) else {
            continue;
        };
        let q = space.elem_quad(e);
        let dofs = space.elem_dofs(e);
        for k in 0..q.t.len() {
            let mut uq = 0.0;
            for (a, dof) in dofs.iter().enumerate() {
                if let Some(d) = dof {
                    uq += q.basis[k][a] * x[*d];
                }
            }
            let scale = q.w[k] * q.weight[k];
            f_term += scale * mp.forcing_anti_mod(i, q.t[k], uq)?;
            if epsilon != 0.0 {
                g_raw += scale * mp.perturbation_anti_mod(i, q.t[k], uq)?;
            }
        }
    }
    let g_term = epsilon * g_raw;

    let mut impulse_term = 0.0;
    for k in 0..space.n_impulses() {
        let uk = x[space.impulse_value_dof(k)];
        impulse_term += mp.impulse_anti_mod(k, uk)?;
    }

    Ok(EnergyBreakdown {
        quad_term,
        beta_term,
        f_term,
        impulse_term,
        g_term,
        total: quad_term - beta_term - f_term - impulse_term - g_term,
    })
}

/// Weak-form gradient at the spec epsilon: component k is ⟨J̃'_ε(u), φ_k⟩.
pub fn gradient(u: &Field, mp: &ModifiedProblem) -> Result<Vec<f64>, DataError> {
    gradient_at(u, mp, mp.spec.epsilon)
}

pub fn gradient_at(u: &Field, mp: &ModifiedProblem, epsilon: f64) -> Result<Vec<f64>, DataError> {
    let space = u.space();
    let x = u.coeffs();
    let mut g = vec![0.0; x.len()];
    space.stiffness().mul_vec(x, &mut g);
    if mp.spec.beta != 0.0 {
        let mut bx = vec![0.0; x.len()];
        space.first().mul_vec(x, &mut bx);
        for (gi, bi) in g.iter_mut().zip(&bx) {
            *gi -= mp.spec.beta * bi;
        }
    }

    for e in 0..space.n_elements() {
        let SegmentKind::Active(i) = space.elem_kind(e) else {
            continue;
        };
        let q = space.elem_quad(e);
        let dofs = space.elem_dofs(e);
        for k in 0..q.t.len() {
            let mut uq = 0.0;
            for (a, dof) in dofs.iter().enumerate() {
                if let Some(d) = dof {
                    uq += q.basis[k][a] * x[*d];
                }
            }
            let mut strength = mp.forcing_mod(i, q.t[k], uq)?;
            if epsilon != 0.0 {
                strength += epsilon * mp.perturbation_mod(i, q.t[k], uq)?;
            }
            let scale = q.w[k] * q.weight[k] * strength;
            for (a, dof) in dofs.iter().enumerate() {
                if let Some(d) = dof {
                    g[*d] -= scale * q.basis[k][a];
                }
            }
        }
    }

    for k in 0..space.n_impulses() {
        let uk = x[space.impulse_value_dof(k)];
        let ik = mp.impulse_mod(k, uk).map_err(DataError::Eval)?;
        g[space.impulse_value_dof(k)] -= space.impulse_weight(k) * ik;
    }

    Ok(g)
}

/// Central-difference action of the second derivative:
/// (∇J̃(u+τv) - ∇J̃(u-τv)) / 2τ. `tau` must lie in [1e-8, 1e-4].
pub fn hessian_vec(
    u: &Field,
    v: &[f64],
    mp: &ModifiedProblem,
    tau: f64,
) -> Result<Vec<f64>, DataError> {
    assert!(
        (1e-8..=1e-4).contains(&tau),
        "hessian_vec step {tau} outside [1e-8, 1e-4]"
    );
    let space = u.space();
    let x = u.coeffs();
    assert_eq!(v.len(), x.len(), "direction length mismatch");
    let shift = |s: f64| -> Vec<f64> {
        x.iter().zip(v).map(|(xi, vi)| xi + s * vi).collect()
    };
    let gp = gradient(&space.field(shift(tau)), mp)?;
    let gm = gradient(&space.field(shift(-tau)), mp)?;
    Ok(gp
        .into_iter()
        .zip(gm)
        .map(|(p, m)| (p - m) / (2.0 * tau))
        .collect())
}

/// Grid resolution for the C₀ maxima: t-points across [0,T] and s-points
/// across [-δ, δ].
const C0_T_GRID: usize = 65;
const C0_S_GRID: usize = 257;

/// |J̃_ε(u) - J̃₀(u)| against |ε|·C₀.
pub fn perturbation_gap(u: &Field, mp: &ModifiedProblem) -> Result<PerturbationGap, DataError> {
    let eps = mp.spec.epsilon;
    let full = energy_at(u, mp, eps)?;
    let base = energy_at(u, mp, 0.0)?;
    let gap = (full.total - base.total).abs();

    let t_end = mp.spec.partition.total_time();
    let delta = mp.cutoff.delta();
    let mut c0 = 0.0;
    for i in 0..mp.spec.partition.n_active() {
        let mut worst = 0.0f64;
        for a in 0..C0_T_GRID {
            let t = t_end * a as f64 / (C0_T_GRID - 1) as f64;
            for b in 0..C0_S_GRID {
                let s = delta * (2.0 * b as f64 / (C0_S_GRID - 1) as f64 - 1.0);
                worst = worst.max(mp.perturbation_anti_mod(i, t, s)?.abs());
            }
        }
        c0 += worst * t_end * mp.weights.weight_max();
    }
    let bound = eps.abs() * c0;
    let within = gap <= bound + 1e-12 * (1.0 + bound);
    debug_assert!(within, "perturbation gap {gap} exceeds bound {bound}");
    Ok(PerturbationGap {
        gap,
        bound,
        c0,
        within,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example;
    use crate::problem::{GrowthConstants, Partition, ProblemSpec, WeightProfile};
    use crate::rng::Rng;
    use crate::space::DiscreteSpace;
    use crate::Expr;

    fn reference_setup() -> (ProblemSpec, WeightProfile) {
        let spec = example::reference();
        let w = WeightProfile::build(&spec, 64).unwrap();
        (spec, w)
    }

    fn random_field<'a>(space: &'a DiscreteSpace, seed: u64, scale: f64) -> crate::space::Field<'a> {
        let mut rng = Rng::new(seed);
        space.field(
            (0..space.n_free())
                .map(|_| scale * rng.range(-1.0, 1.0))
                .collect(),
        )
    }

    #[test]
    fn zero_field_energy_vanishes() {
        let (spec, w) = reference_setup();
        let space = DiscreteSpace::build(&spec, &w, 4).unwrap();
        let mp = ModifiedProblem::new(&spec, &w);
        let e = energy(&space.zero_field(), &mp).unwrap();
        assert_eq!(e.total, 0.0);
        assert_eq!(e.quad_term, 0.0);
        assert_eq!(e.f_term, 0.0);
        assert_eq!(e.impulse_term, 0.0);
        assert_eq!(e.g_term, 0.0);
    }

    #[test]
    fn gradient_at_origin_is_zero() {
        let (spec, w) = reference_setup();
        let space = DiscreteSpace::build(&spec, &w, 4).unwrap();
        let mp = ModifiedProblem::new(&spec, &w);
        let g = gradient(&space.zero_field(), &mp).unwrap();
        assert!(g.iter().all(|&v| v == 0.0), "nonzero origin gradient {g:?}");
    }

    #[test]
    fn breakdown_total_is_signed_sum() {
        let (spec, w) = reference_setup();
        let space = DiscreteSpace::build(&spec, &w, 4).unwrap();
        let mp = ModifiedProblem::new(&spec, &w);
        let u = random_field(&space, 23, 0.4);
        let e = energy(&u, &mp).unwrap();
        let recon = e.quad_term - e.beta_term - e.f_term - e.impulse_term - e.g_term;
        assert!((e.total - recon).abs() <= 1e-14 * (1.0 + recon.abs()));
    }

    #[test]
    fn energy_even_and_gradient_odd_without_perturbation() {
        let (spec, w) = reference_setup();
        let space = DiscreteSpace::build(&spec, &w, 4).unwrap();
        let mp = ModifiedProblem::new(&spec, &w);
        for seed in [5u64, 6, 7] {
            let u = random_field(&space, seed, 0.8);
            let m = space.field(u.coeffs().iter().map(|c| -c).collect());
            let ep = energy_at(&u, &mp, 0.0).unwrap();
            let em = energy_at(&m, &mp, 0.0).unwrap();
            assert!(
                (ep.total - em.total).abs() <= 1e-13 * (1.0 + ep.total.abs()),
                "{} vs {}",
                ep.total,
                em.total
            );
            let gp = gradient_at(&u, &mp, 0.0).unwrap();
            let gm = gradient_at(&m, &mp, 0.0).unwrap();
            for (a, b) in gp.iter().zip(&gm) {
                assert!((a + b).abs() <= 1e-13 * (1.0 + a.abs()));
            }
        }
    }

    /// Independent dense-trapezoid oracle over all integral terms, on the
    /// interpolant of 0.1·t²(1-t)².
    #[test]
    fn energy_matches_trapezoid_oracle() {
        let (spec, w) = reference_setup();
        let space = DiscreteSpace::build(&spec, &w, 4).unwrap();
        let mp = ModifiedProblem::new(&spec, &w);
        let u = space.interpolate(|t| {
            (
                0.1 * t * t * (1.0 - t) * (1.0 - t),
                0.1 * 2.0 * t * (1.0 - t) * (1.0 - 2.0 * t),
            )
        });
        let e = energy(&u, &mp).unwrap();

        let n = 100_000usize;
        let dt = 1.0 / n as f64;
        let mut quad = 0.0;
        let mut first = 0.0;
        let mut f_int = 0.0;
        let points = spec.partition.points().to_vec();
        for k in 0..n {
            let t = (k as f64 + 0.5) * dt;
            let ew = w.weight(t).unwrap();
            let upp = u.second_deriv(t);
            quad += ew * upp * upp * dt;
            let du = u.deriv(t);
            first += du * du * dt;
            // active segments are the even-indexed ones
            let seg = points.partition_point(|&p| p <= t) - 1;
            if seg % 2 == 0 {
                f_int += ew * mp.forcing_anti_mod(seg / 2, t, u.eval(t)).unwrap() * dt;
            }
        }
        let mut imp = 0.0;
        for k in 0..space.n_impulses() {
            imp += mp
                .impulse_anti_mod(k, u.eval(space.impulse_time(k)))
                .unwrap();
        }
        let oracle = 0.5 * quad - 0.5 * spec.beta * first - f_int - imp;
        assert!(
            (e.total - oracle).abs() < 1e-7 * (1.0 + oracle.abs()),
            "energy {} vs oracle {}",
            e.total,
            oracle
        );
    }

    /// Impulse sums against the closed forms of the reference data: the
    /// sampled values stay below δ/2, so Î_1 = e^{H(t_1)}(2/3)|u|^{3/2} and
    /// Î_2 = e^{H(t_2)}(3/4)|u|^{4/3}.
    #[test]
    fn impulse_term_closed_form() {
        let (spec, w) = reference_setup();
        let space = DiscreteSpace::build(&spec, &w, 4).unwrap();
        let mp = ModifiedProblem::new(&spec, &w);
        let u = random_field(&space, 31, 0.2);
        let e = energy(&u, &mp).unwrap();
        let u1 = u.eval(0.2);
        let u2 = u.eval(0.6);
        assert!(u1.abs() < 0.45 && u2.abs() < 0.45);
        let w1 = w.weight(0.2).unwrap();
        let w2 = w.weight(0.6).unwrap();
        let want = w1 * (2.0 / 3.0) * u1.abs().powf(1.5) + w2 * 0.75 * u2.abs().powf(4.0 / 3.0);
        assert!(
            (e.impulse_term - want).abs() < 1e-9 * (1.0 + want.abs()),
            "{} vs {}",
            e.impulse_term,
            want
        );
    }

    #[test]
    fn gradient_matches_directional_difference() {
        let (spec, w) = reference_setup();
        let space = DiscreteSpace::build(&spec, &w, 4).unwrap();
        let mp = ModifiedProblem::new(&spec, &w).with_quad_tol(1e-12);
        let u = random_field(&space, 41, 0.5);
        let v = random_field(&space, 42, 1.0);
        let tau = 1e-6;
        let up = space.field(
            u.coeffs()
                .iter()
                .zip(v.coeffs())
                .map(|(a, b)| a + tau * b)
                .collect(),
        );
        let um = space.field(
            u.coeffs()
                .iter()
                .zip(v.coeffs())
                .map(|(a, b)| a - tau * b)
                .collect(),
        );
        let fd = (energy(&up, &mp).unwrap().total - energy(&um, &mp).unwrap().total) / (2.0 * tau);
        let g = gradient(&u, &mp).unwrap();
        let dot: f64 = g.iter().zip(v.coeffs()).map(|(a, b)| a * b).sum();
        assert!(
            (fd - dot).abs() < 1e-6 * (1.0 + dot.abs()),
            "directional derivative {dot} vs difference {fd}"
        );
    }

    fn quadratic_spec() -> ProblemSpec {
        ProblemSpec::new(
            Partition::new(vec![0.0, 1.0]).unwrap(),
            Expr::parse("1").unwrap(),
            0.0,
            0.0,
            0.9,
            GrowthConstants {
                a1: 1.1,
                theta1: 1.5,
                a2: 5.0,
                theta2: 4.0 / 3.0,
                a_star: 0.56,
            },
            vec![Expr::parse("0").unwrap()],
            vec![Expr::parse("0").unwrap()],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn pure_quadratic_energy_and_gradient() {
        let spec = quadratic_spec();
        let w = WeightProfile::build(&spec, 64).unwrap();
        let space = DiscreteSpace::build(&spec, &w, 6).unwrap();
        let mp = ModifiedProblem::new(&spec, &w);
        // Stay below δ/2 in sup norm: outside the window the modification
        // substitutes a*|u|^θ₁ for the zero forcing.
        let u = random_field(&space, 77, 0.3);
        assert!(u.norm_inf() < 0.45);
        let e = energy(&u, &mp).unwrap();
        let x = u.coeffs();
        assert_eq!(e.total, 0.5 * space.stiffness().quadratic_form(x, x));
        let g = gradient(&u, &mp).unwrap();
        let mut sx = vec![0.0; x.len()];
        space.stiffness().mul_vec(x, &mut sx);
        for (a, b) in g.iter().zip(&sx) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn hessian_exact_for_quadratic() {
        let spec = quadratic_spec();
        let w = WeightProfile::build(&spec, 64).unwrap();
        let space = DiscreteSpace::build(&spec, &w, 6).unwrap();
        let mp = ModifiedProblem::new(&spec, &w);
        let u = random_field(&space, 78, 0.2);
        let v = random_field(&space, 79, 0.2);
        assert!(u.norm_inf() + 1e-4 * v.norm_inf() < 0.45);
        for tau in [1e-8, 1e-6, 1e-4] {
            let hv = hessian_vec(&u, v.coeffs(), &mp, tau).unwrap();
            let mut sv = vec![0.0; hv.len()];
            space.stiffness().mul_vec(v.coeffs(), &mut sv);
            // No truncation error on a quadratic; what remains is the
            // cancellation floor of the difference quotient, ~ eps/tau.
            let tol = 100.0 * f64::EPSILON / tau;
            for (a, b) in hv.iter().zip(&sv) {
                assert!(
                    (a - b).abs() < tol * (1.0 + b.abs()),
                    "tau {tau}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn hessian_symmetric_and_linear() {
        let (spec, w) = reference_setup();
        let space = DiscreteSpace::build(&spec, &w, 3).unwrap();
        let mp = ModifiedProblem::new(&spec, &w).with_quad_tol(1e-12);
        let u = random_field(&space, 80, 0.3);
        let v = random_field(&space, 81, 1.0);
        let z = random_field(&space, 82, 1.0);
        let tau = 1e-5;
        let hv = hessian_vec(&u, v.coeffs(), &mp, tau).unwrap();
        let hz = hessian_vec(&u, z.coeffs(), &mp, tau).unwrap();
        let hv_z: f64 = hv.iter().zip(z.coeffs()).map(|(a, b)| a * b).sum();
        let hz_v: f64 = hz.iter().zip(v.coeffs()).map(|(a, b)| a * b).sum();
        assert!(
            (hv_z - hz_v).abs() < 1e-5 * (1.0 + hv_z.abs()),
            "asymmetry: {hv_z} vs {hz_v}"
        );

        let comb: Vec<f64> = v
            .coeffs()
            .iter()
            .zip(z.coeffs())
            .map(|(a, b)| 0.7 * a - 1.3 * b)
            .collect();
        let hc = hessian_vec(&u, &comb, &mp, tau).unwrap();
        for ((c, a), b) in hc.iter().zip(&hv).zip(&hz) {
            let want = 0.7 * a - 1.3 * b;
            assert!((c - want).abs() < 1e-5 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn perturbation_gap_trivial_without_g() {
        let (spec, w) = reference_setup();
        let space = DiscreteSpace::build(&spec, &w, 4).unwrap();
        let mp = ModifiedProblem::new(&spec, &w);
        let u = random_field(&space, 90, 0.4);
        let r = perturbation_gap(&u, &mp).unwrap();
        assert_eq!(r.gap, 0.0);
        assert_eq!(r.bound, 0.0);
        assert_eq!(r.c0, 0.0);
        assert!(r.within);

        // nonzero epsilon but g ≡ 0: still no gap
        let spec = example::reference_with(0.6, "0");
        let w = WeightProfile::build(&spec, 64).unwrap();
        let space = DiscreteSpace::build(&spec, &w, 4).unwrap();
        let mp = ModifiedProblem::new(&spec, &w);
        let u = random_field(&space, 91, 0.4);
        let r = perturbation_gap(&u, &mp).unwrap();
        assert_eq!(r.gap, 0.0);
        assert_eq!(r.c0, 0.0);
        assert!(r.within);
    }

    /// Constant perturbation g ≡ 1 on a flat weight: C₀ stays under the
    /// hand bound Σ_i max|s| · T = (N+1)·δ·T and dominates the actual gap.
    #[test]
    fn perturbation_gap_constant_g() {
        let spec = ProblemSpec::new(
            Partition::new(vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]).unwrap(),
            Expr::parse("0").unwrap(),
            1.9,
            0.37,
            1.0,
            GrowthConstants {
                a1: 1.1,
                theta1: 1.5,
                a2: 5.0,
                theta2: 4.0 / 3.0,
                a_star: 0.56,
            },
            vec![
                Expr::parse("abs(u)^(-1/2)*u").unwrap(),
                Expr::parse("abs(u)^(-1/2)*u").unwrap(),
                Expr::parse("abs(u)^(-1/2)*u").unwrap(),
            ],
            vec![
                Expr::parse("1").unwrap(),
                Expr::parse("1").unwrap(),
                Expr::parse("1").unwrap(),
            ],
            vec![
                Expr::parse("abs(u)^(-1/2)*u").unwrap(),
                Expr::parse("abs(u)^(-2/3)*u").unwrap(),
            ],
        )
        .unwrap();
        let w = WeightProfile::build(&spec, 64).unwrap();
        let space = DiscreteSpace::build(&spec, &w, 4).unwrap();
        let mp = ModifiedProblem::new(&spec, &w);
        for seed in [100u64, 101, 102] {
            let u = random_field(&space, seed, 1.5);
            let r = perturbation_gap(&u, &mp).unwrap();
            assert!(r.within, "gap {} above bound {}", r.gap, r.bound);
            assert!(r.gap > 0.0, "constant g must move the energy");
            // flat weight, |G̃_i| ≤ δ: C₀ ≤ 3·δ·T = 3, and ≤ 2 in fact
            // because the cutoff kills G̃ well before |s| = δ.
            assert!(r.c0 <= 2.0, "C0 {} above the hand bound", r.c0);
            assert!(r.bound <= 2.0 * 0.37 + 1e-12);
        }
    }

    /// Growth bounds: f_term ≤ M₁A₁Te*‖u‖_E^θ₁ and impulse_term ≤
    /// N·M₁a₂((θ₂+1)/θ₂)e*(‖u‖_E^θ₂+1), plus the coercivity floor for β>0:
    /// J̃ ≥ (½−βT²/(4e^{H₀}))‖u‖² − those two tails − the G̃ constant.
    #[test]
    fn growth_and_coercivity_floors() {
        let spec = example::reference_with(0.8, "cos(3*t)");
        let w = WeightProfile::build(&spec, 64).unwrap();
        let space = DiscreteSpace::build(&spec, &w, 4).unwrap();
        let mp = ModifiedProblem::new(&spec, &w);
        let growth = spec.growth;
        let m1 = w.weight_max();
        let e_star = w.embedding_factor(&growth);
        let a1_cap = mp.growth_cap();
        let t_end = spec.partition.total_time();
        let n_imp = spec.partition.n_impulses() as f64;
        let imp_coef = n_imp * m1 * growth.a2 * (growth.theta2 + 1.0) / growth.theta2 * e_star;

        // grid max of |G̃_i| over [0,T]x[-δ,δ], any i
        let delta = mp.cutoff.delta();
        let mut g_max = 0.0f64;
        for i in 0..spec.partition.n_active() {
            for a in 0..33 {
                let t = t_end * a as f64 / 32.0;
                for b in 0..129 {
                    let s = delta * (2.0 * b as f64 / 128.0 - 1.0);
                    g_max = g_max.max(mp.perturbation_anti_mod(i, t, s).unwrap().abs());
                }
            }
        }
        let h0 = w.h_min();
        let quad_coef = 0.5 - spec.beta * t_end * t_end / (4.0 * h0.exp());
        assert!(quad_coef > 0.0, "reference data violates the beta bound");
        let g_const = m1 * g_max * t_end * (spec.partition.n_active() as f64);

        for (k, scale) in [0.01, 0.1, 0.5, 1.0, 5.0, 20.0, 200.0, 1000.0]
            .into_iter()
            .enumerate()
        {
            let dir = random_field(&space, 300 + k as u64, 1.0);
            let ne = dir.norm_e();
            let u = space.field(dir.coeffs().iter().map(|c| c * scale / ne).collect());
            let nu = u.norm_e();
            let e = energy(&u, &mp).unwrap();

            let f_bound = m1 * a1_cap * t_end * e_star * nu.powf(growth.theta1);
            assert!(
                e.f_term <= f_bound + 1e-9 * (1.0 + f_bound),
                "forcing growth bound broken at ‖u‖={nu}: {} > {f_bound}",
                e.f_term
            );
            let i_bound = imp_coef * (nu.powf(growth.theta2) + 1.0);
            assert!(
                e.impulse_term <= i_bound + 1e-9 * (1.0 + i_bound),
                "impulse growth bound broken at ‖u‖={nu}"
            );

            let floor = quad_coef * nu * nu
                - m1 * a1_cap * t_end * e_star * nu.powf(growth.theta1)
                - imp_coef * nu.powf(growth.theta2)
                - imp_coef
                - g_const;
            assert!(
                e.total >= floor - 1e-9 * (1.0 + floor.abs()),
                "coercivity floor broken at ‖u‖={nu}: {} < {floor}",
                e.total
            );
        }
    }
}
