//! Problem data: interval partition, closed-form coefficients, growth
//! constants, and the accumulated weight profile exp(H(t)).
//!
//! A problem lives on [0, T] split by an alternating partition
//! `0 = s_0 < t_1 < s_1 < t_2 < .. < t_{N+1} = T`. Forcing acts on the
//! "active" intervals `(s_i, t_{i+1}]`; the complementary "rest" intervals
//! `(t_i, s_i]` carry no forcing. Instantaneous impulses sit at the interior
//! times `t_1 .. t_N`. The weight is `exp(H(t))` with `H(t)` the integral of
//! a given C^1 coefficient `h` from 0 to t.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::expr::{EvalError, Expr};
use crate::quad;

#[derive(Clone, Debug, PartialEq)]
pub enum ProblemError {
    Partition(String),
    DataShape {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    Constant {
        name: &'static str,
        detail: String,
    },
    Variable {
        field: String,
        detail: &'static str,
    },
}

impl fmt::Display for ProblemError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemError::Partition(d) => write!(f, "invalid partition: {d}"),
            ProblemError::DataShape {
                field,
                expected,
                got,
            } => write!(f, "{field}: expected {expected} entries, got {got}"),
            ProblemError::Constant { name, detail } => write!(f, "constant {name}: {detail}"),
            ProblemError::Variable { field, detail } => write!(f, "{field}: {detail}"),
        }
    }
}

/// Alternating partition `s_0 < t_1 < s_1 < .. < t_{N+1}`; always an even
/// number of points, starting at 0, with N interior impulse times.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    points: Vec<f64>,
}

/// Classification of one inter-point segment of the partition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegmentKind {
    /// `(s_i, t_{i+1}]`, forcing index i.
    Active(usize),
    /// `(t_i, s_i]`, no forcing.
    Rest(usize),
}

impl Partition {
    pub fn new(points: Vec<f64>) -> Result<Self, ProblemError> {
        if points.len() < 2 || points.len() % 2 != 0 {
            return Err(ProblemError::Partition(format!(
                "need an even number of points (s_0, t_1, .., t_(N+1)), got {}",
                points.len()
            )));
        }
        if points[0] != 0.0 {
            return Err(ProblemError::Partition(format!(
                "first point must be 0, got {}",
                points[0]
            )));
        }
        for w in points.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(ProblemError::Partition(format!(
                    "points must be finite and strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(Partition { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn total_time(&self) -> f64 {
        *self.points.last().unwrap()
    }

    /// Number of interior impulse times t_1 .. t_N.
    pub fn n_impulses(&self) -> usize {
        self.points.len() / 2 - 1
    }

    /// Number of forcing intervals (N + 1).
    pub fn n_active(&self) -> usize {
        self.points.len() / 2
    }

    pub fn impulse_times(&self) -> impl Iterator<Item = f64> + '_ {
        (1..self.points.len() - 1)
            .step_by(2)
            .map(move |k| self.points[k])
    }

    /// Endpoints of the i-th forcing interval `(s_i, t_{i+1}]`.
    pub fn active_interval(&self, i: usize) -> (f64, f64) {
        (self.points[2 * i], self.points[2 * i + 1])
    }

    /// All consecutive segments with their classification, in order.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, SegmentKind)> + '_ {
        self.points.windows(2).enumerate().map(|(p, w)| {
            let kind = if p % 2 == 0 {
                SegmentKind::Active(p / 2)
            } else {
                SegmentKind::Rest(p / 2 + 1)
            };
            (w[0], w[1], kind)
        })
    }
}

/// Constants of the growth conditions on the data: forcing satisfies
/// `u f <= a1 |u|^theta1` with `1 < theta1 < 2`, impulses satisfy
/// `|I| <= a2 (|u|^(theta2-1) + 1)` with `1 < theta2 < 2`, and `a_star > 0`
/// scales the sublinear continuation outside the cutoff window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthConstants {
    pub a1: f64,
    pub theta1: f64,
    pub a2: f64,
    pub theta2: f64,
    pub a_star: f64,
}

impl GrowthConstants {
    pub fn validate(&self) -> Result<(), ProblemError> {
        let bad = |name: &'static str, detail: String| ProblemError::Constant { name, detail };
        if !(self.a1 > 0.0) || !self.a1.is_finite() {
            return Err(bad("a1", format!("must be positive and finite, got {}", self.a1)));
        }
        if !(self.theta1 > 1.0 && self.theta1 < 2.0) {
            return Err(bad(
                "theta1",
                format!("must lie in (1, 2), got {}", self.theta1),
            ));
        }
        if !(self.a2 > 0.0) || !self.a2.is_finite() {
            return Err(bad("a2", format!("must be positive and finite, got {}", self.a2)));
        }
        if !(self.theta2 > 1.0 && self.theta2 < 2.0) {
            return Err(bad(
                "theta2",
                format!("must lie in (1, 2), got {}", self.theta2),
            ));
        }
        if !(self.a_star > 0.0) || !self.a_star.is_finite() {
            return Err(bad(
                "a_star",
                format!("must be positive and finite, got {}", self.a_star),
            ));
        }
        Ok(())
    }
}

/// A full problem: partition, weight coefficient, structural constants and
/// the closed-form data (per-interval forcing f_i and perturbation g_i, both
/// functions of (t, u), and impulse functions I_i of u alone).
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub partition: Partition,
    /// Weight derivative h(t); H(t) integrates it from 0.
    pub h: Expr,
    pub beta: f64,
    pub epsilon: f64,
    /// Cutoff radius for the modified problem; solutions are certified small
    /// when they stay below delta/2 in the sup norm.
    pub delta: f64,
    pub growth: GrowthConstants,
    pub f: Vec<Expr>,
    pub g: Vec<Expr>,
    pub impulses: Vec<Expr>,
}

impl ProblemSpec {
    pub fn new(
        partition: Partition,
        h: Expr,
        beta: f64,
        epsilon: f64,
        delta: f64,
        growth: GrowthConstants,
        f: Vec<Expr>,
        g: Vec<Expr>,
        impulses: Vec<Expr>,
    ) -> Result<Self, ProblemError> {
        let n_active = partition.n_active();
        let n_imp = partition.n_impulses();
        if f.len() != n_active {
            return Err(ProblemError::DataShape {
                field: "forcing f",
                expected: n_active,
                got: f.len(),
            });
        }
        if g.len() != n_active {
            return Err(ProblemError::DataShape {
                field: "perturbation g",
                expected: n_active,
                got: g.len(),
            });
        }
        if impulses.len() != n_imp {
            return Err(ProblemError::DataShape {
                field: "impulses",
                expected: n_imp,
                got: impulses.len(),
            });
        }
        if h.uses_u() {
            return Err(ProblemError::Variable {
                field: String::from("h"),
                detail: "weight coefficient must depend on t only",
            });
        }
        for (k, imp) in impulses.iter().enumerate() {
            if imp.uses_t() {
                return Err(ProblemError::Variable {
                    field: format!("impulse {}", k + 1),
                    detail: "impulse functions must depend on u only",
                });
            }
        }
        growth.validate()?;
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(ProblemError::Constant {
                name: "delta",
                detail: format!("must be positive and finite, got {delta}"),
            });
        }
        for (name, v) in [("beta", beta), ("epsilon", epsilon)] {
            if !v.is_finite() {
                return Err(ProblemError::Constant {
                    name,
                    detail: format!("must be finite, got {v}"),
                });
            }
        }
        Ok(ProblemSpec {
            partition,
            h,
            beta,
            epsilon,
            delta,
            growth,
            f,
            g,
            impulses,
        })
    }

    /// Data-level sanity report: shapes are enforced at construction, so this
    /// samples evaluability of the closed forms, including the u -> 0 limits
    /// the assembly relies on.
    pub fn validate(&self) -> ValidationReport {
        let mut entries = Vec::new();
        let t_grid = 33usize;

        let mut h_ok = true;
        let mut h_detail = String::from("finite on the sample grid");
        let total = self.partition.total_time();
        for k in 0..=128 {
            let t = total * k as f64 / 128.0;
            match self.h.eval(t, 0.0) {
                Ok(_) => {}
                Err(e) => {
                    h_ok = false;
                    h_detail = format!("h({t}) failed: {e}");
                    break;
                }
            }
        }
        entries.push(ValidationEntry {
            name: String::from("weight coefficient evaluable"),
            pass: h_ok,
            detail: h_detail,
        });

        for (label, exprs) in [("forcing f", &self.f), ("perturbation g", &self.g)] {
            let mut ok = true;
            let mut detail = String::from("evaluable on interval samples and at u = 0");
            'outer: for (i, e) in exprs.iter().enumerate() {
                let (a, b) = self.partition.active_interval(i);
                for k in 0..t_grid {
                    let t = a + (b - a) * (k as f64 + 0.5) / t_grid as f64;
                    for &u in &[self.delta, -self.delta, 0.5 * self.delta, 1e-9] {
                        if let Err(err) = e.eval(t, u) {
                            ok = false;
                            detail = format!("{label}[{i}] at (t,u)=({t},{u}): {err}");
                            break 'outer;
                        }
                    }
                    if let Err(err) = e.eval_zero_u(t) {
                        ok = false;
                        detail = format!("{label}[{i}] limit at u=0, t={t}: {err}");
                        break 'outer;
                    }
                }
            }
            entries.push(ValidationEntry {
                name: format!("{label} evaluable"),
                pass: ok,
                detail,
            });
        }

        let mut ok = true;
        let mut detail = String::from("evaluable on [-delta, delta] and at u = 0");
        'imp: for (k, e) in self.impulses.iter().enumerate() {
            for j in 0..=32 {
                let u = -self.delta + 2.0 * self.delta * j as f64 / 32.0;
                let r = if u == 0.0 {
                    e.eval_zero_u(0.0)
                } else {
                    e.eval(0.0, u)
                };
                if let Err(err) = r {
                    ok = false;
                    detail = format!("impulse {} at u={u}: {err}", k + 1);
                    break 'imp;
                }
            }
            if let Err(err) = e.eval_zero_u(0.0) {
                ok = false;
                detail = format!("impulse {} limit at u=0: {err}", k + 1);
                break 'imp;
            }
        }
        entries.push(ValidationEntry {
            name: String::from("impulses evaluable"),
            pass: ok,
            detail,
        });

        let pass = entries.iter().all(|e| e.pass);
        ValidationReport { entries, pass }
    }
}

#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ValidationEntry {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ValidationReport {
    pub entries: Vec<ValidationEntry>,
    pub pass: bool,
}

/// Error building the weight profile.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightError {
    Eval(EvalError),
    Quadrature { err_est: f64 },
}

impl fmt::Display for WeightError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightError::Eval(e) => write!(f, "weight coefficient: {e}"),
            WeightError::Quadrature { err_est } => {
                write!(f, "weight integration stalled at error estimate {err_est}")
            }
        }
    }
}

/// Cumulative integral H of the weight coefficient, with cached extrema.
///
/// H is accumulated over panels at every partition point and sample point,
/// so lookups are a binary search plus one short Kronrod application. The
/// extremes H_min and H_max are taken over a refinement of the sample grid
/// (4096 uniform points plus all partition points).
#[derive(Clone, Debug)]
pub struct WeightProfile {
    h: Expr,
    grid: Vec<f64>,
    cum: Vec<f64>,
    h_min: f64,
    h_max: f64,
}

const EXTREMA_GRID: usize = 4096;

impl WeightProfile {
    pub fn build(spec: &ProblemSpec, samples: usize) -> Result<Self, WeightError> {
        let samples = samples.max(64);
        let total = spec.partition.total_time();
        let mut grid: Vec<f64> = spec.partition.points().to_vec();
        for k in 0..=samples {
            grid.push(total * k as f64 / samples as f64);
        }
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid.dedup();

        let mut eval = |t: f64| spec.h.eval(t, 0.0);
        let mut cum = Vec::with_capacity(grid.len());
        cum.push(0.0);
        let mut acc = 0.0f64;
        for w in grid.windows(2) {
            let r = quad::integrate(&mut eval, w[0], w[1], 1e-14 * (1.0 + acc.abs()), 16)
                .map_err(|e| match e {
                    quad::QuadError::Eval(e) => WeightError::Eval(e),
                    quad::QuadError::ToleranceNotMet { err_est, .. } => {
                        WeightError::Quadrature { err_est }
                    }
                })?;
            acc += r.value;
            cum.push(acc);
        }

        let mut profile = WeightProfile {
            h: spec.h.clone(),
            grid,
            cum,
            h_min: 0.0,
            h_max: 0.0,
        };

        let mut h_min = f64::INFINITY;
        let mut h_max = f64::NEG_INFINITY;
        let mut extrema: Vec<f64> = spec.partition.points().to_vec();
        for k in 0..=EXTREMA_GRID {
            extrema.push(total * k as f64 / EXTREMA_GRID as f64);
        }
        for &t in &extrema {
            let v = profile.eval_h(t)?;
            h_min = h_min.min(v);
            h_max = h_max.max(v);
        }
        profile.h_min = h_min;
        profile.h_max = h_max;
        Ok(profile)
    }

    fn eval_h(&self, t: f64) -> Result<f64, WeightError> {
        let k = match self
            .grid
            .binary_search_by(|x| x.partial_cmp(&t).unwrap())
        {
            Ok(k) => return Ok(self.cum[k]),
            Err(k) => k.saturating_sub(1).min(self.grid.len() - 1),
        };
        let mut eval = |x: f64| self.h.eval(x, 0.0);
        let r = quad::integrate(&mut eval, self.grid[k], t, 1e-14, 16).map_err(|e| match e {
            quad::QuadError::Eval(e) => WeightError::Eval(e),
            quad::QuadError::ToleranceNotMet { err_est, .. } => {
                WeightError::Quadrature { err_est }
            }
        })?;
        Ok(self.cum[k] + r.value)
    }

    /// H(t), the accumulated weight exponent.
    pub fn exponent(&self, t: f64) -> Result<f64, WeightError> {
        self.eval_h(t)
    }

    /// The weight exp(H(t)).
    pub fn weight(&self, t: f64) -> Result<f64, WeightError> {
        Ok(libm::exp(self.eval_h(t)?))
    }

    /// min of H over [0, T] (H_0 in the coercivity estimates).
    pub fn h_min(&self) -> f64 {
        self.h_min
    }

    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    /// max of the weight, exp(max H).
    pub fn weight_max(&self) -> f64 {
        libm::exp(self.h_max)
    }

    /// max(exp(-H_0 theta1 / 2), exp(-H_0 theta2 / 2)); appears in the
    /// sup-norm growth estimates of the forcing and impulse terms.
    pub fn embedding_factor(&self, growth: &GrowthConstants) -> f64 {
        let a = libm::exp(-self.h_min * growth.theta1 / 2.0);
        let b = libm::exp(-self.h_min * growth.theta2 / 2.0);
        a.max(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn partition6() -> Partition {
        Partition::new(vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]).unwrap()
    }

    #[test]
    fn partition_classification() {
        let p = partition6();
        assert_eq!(p.n_impulses(), 2);
        assert_eq!(p.n_active(), 3);
        assert_eq!(p.total_time(), 1.0);
        let times: Vec<f64> = p.impulse_times().collect();
        assert_eq!(times, vec![0.2, 0.6]);
        let segs: Vec<_> = p.segments().collect();
        assert_eq!(segs.len(), 5);
        assert_eq!(segs[0].2, SegmentKind::Active(0));
        assert_eq!(segs[1].2, SegmentKind::Rest(1));
        assert_eq!(segs[2].2, SegmentKind::Active(1));
        assert_eq!(segs[3].2, SegmentKind::Rest(2));
        assert_eq!(segs[4].2, SegmentKind::Active(2));
        assert_eq!(p.active_interval(1), (0.4, 0.6));
    }

    #[test]
    fn partition_rejects_bad_input() {
        assert!(Partition::new(vec![0.0, 0.5, 1.0]).is_err()); // odd count
        assert!(Partition::new(vec![0.1, 0.5]).is_err()); // does not start at 0
        assert!(Partition::new(vec![0.0, 0.5, 0.5, 1.0]).is_err()); // not strict
        assert!(Partition::new(vec![0.0, 0.7, 0.4, 1.0]).is_err()); // decreasing
    }

    #[test]
    fn growth_constants_ranges() {
        let good = GrowthConstants {
            a1: 1.1,
            theta1: 1.5,
            a2: 5.0,
            theta2: 4.0 / 3.0,
            a_star: 0.56,
        };
        assert!(good.validate().is_ok());
        for (f, v) in [
            (0usize, 0.0),   // a1
            (1, 1.0),        // theta1 at boundary
            (1, 2.0),        // theta1 at boundary
            (2, -3.0),       // a2
            (3, 2.5),        // theta2
            (4, 0.0),        // a_star
        ] {
            let mut c = good;
            match f {
                0 => c.a1 = v,
                1 => c.theta1 = v,
                2 => c.a2 = v,
                3 => c.theta2 = v,
                _ => c.a_star = v,
            }
            assert!(c.validate().is_err(), "field {f} value {v}");
        }
    }

    #[test]
    fn weight_profile_matches_closed_form() {
        // h(t) = 2t gives H(t) = t^2
        let spec = ProblemSpec::new(
            partition6(),
            Expr::parse("2*t").unwrap(),
            0.0,
            0.0,
            1.0,
            GrowthConstants {
                a1: 1.1,
                theta1: 1.5,
                a2: 5.0,
                theta2: 4.0 / 3.0,
                a_star: 0.56,
            },
            vec![Expr::parse("0").unwrap(); 3],
            vec![Expr::parse("0").unwrap(); 3],
            vec![Expr::parse("0").unwrap(); 2],
        )
        .unwrap();
        let w = WeightProfile::build(&spec, 64).unwrap();
        for &t in &[0.0, 0.2, 0.37, 0.5, 0.891, 1.0] {
            let got = w.exponent(t).unwrap();
            assert!((got - t * t).abs() < 1e-12, "H({t}) = {got}");
        }
        assert!((w.h_min() - 0.0).abs() < 1e-12);
        assert!((w.h_max() - 1.0).abs() < 1e-12);
        assert!((w.weight(0.5).unwrap() - libm::exp(0.25)).abs() < 1e-12);
    }

    #[test]
    fn weight_profile_constant_coefficient() {
        // the reference configuration: h = 1, H(t) = t
        let spec = ProblemSpec::new(
            partition6(),
            Expr::parse("1").unwrap(),
            1.9,
            0.0,
            0.9,
            GrowthConstants {
                a1: 1.1,
                theta1: 1.5,
                a2: 5.0,
                theta2: 4.0 / 3.0,
                a_star: 0.56,
            },
            vec![Expr::parse("0").unwrap(); 3],
            vec![Expr::parse("0").unwrap(); 3],
            vec![Expr::parse("0").unwrap(); 2],
        )
        .unwrap();
        let w = WeightProfile::build(&spec, 128).unwrap();
        assert!((w.exponent(0.6).unwrap() - 0.6).abs() < 1e-13);
        assert_eq!(w.h_min(), 0.0);
        assert!((w.h_max() - 1.0).abs() < 1e-13);
        assert!((w.weight_max() - libm::exp(1.0)).abs() < 1e-12);
        // theta powers of exp(-H0/2) collapse to 1 when H0 = 0
        let g = GrowthConstants {
            a1: 1.1,
            theta1: 1.5,
            a2: 5.0,
            theta2: 4.0 / 3.0,
            a_star: 0.56,
        };
        assert_eq!(w.embedding_factor(&g), 1.0);
    }

    #[test]
    fn spec_shape_errors() {
        let g = GrowthConstants {
            a1: 1.0,
            theta1: 1.5,
            a2: 1.0,
            theta2: 1.5,
            a_star: 1.0,
        };
        let r = ProblemSpec::new(
            partition6(),
            Expr::parse("1").unwrap(),
            0.0,
            0.0,
            1.0,
            g,
            vec![Expr::parse("0").unwrap(); 2], // wrong: needs 3
            vec![Expr::parse("0").unwrap(); 3],
            vec![Expr::parse("0").unwrap(); 2],
        );
        assert!(matches!(r, Err(ProblemError::DataShape { .. })));

        let r = ProblemSpec::new(
            partition6(),
            Expr::parse("u").unwrap(), // h must not use u
            0.0,
            0.0,
            1.0,
            g,
            vec![Expr::parse("0").unwrap(); 3],
            vec![Expr::parse("0").unwrap(); 3],
            vec![Expr::parse("0").unwrap(); 2],
        );
        assert!(matches!(r, Err(ProblemError::Variable { .. })));

        let r = ProblemSpec::new(
            partition6(),
            Expr::parse("1").unwrap(),
            0.0,
            0.0,
            1.0,
            g,
            vec![Expr::parse("0").unwrap(); 3],
            vec![Expr::parse("0").unwrap(); 3],
            vec![Expr::parse("t*u").unwrap(); 2], // impulses must not use t
        );
        assert!(matches!(r, Err(ProblemError::Variable { .. })));
    }

    #[test]
    fn validation_flags_unevaluable_data() {
        let g = GrowthConstants {
            a1: 1.0,
            theta1: 1.5,
            a2: 1.0,
            theta2: 1.5,
            a_star: 1.0,
        };
        let spec = ProblemSpec::new(
            partition6(),
            Expr::parse("1").unwrap(),
            0.0,
            0.0,
            1.0,
            g,
            vec![
                // no two-sided limit at u = 0
                Expr::parse("sign(u)").unwrap(),
                Expr::parse("0").unwrap(),
                Expr::parse("0").unwrap(),
            ],
            vec![Expr::parse("0").unwrap(); 3],
            vec![Expr::parse("0").unwrap(); 2],
        )
        .unwrap();
        let report = spec.validate();
        assert!(!report.pass);
        assert!(report
            .entries
            .iter()
            .any(|e| !e.pass && e.name.contains("forcing")));
    }
}
