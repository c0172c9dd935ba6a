//! Fibering-map analysis: for a fixed direction u ≠ 0 the ray c ↦ J̃₀(cu)
//! factors as c²·Υ_u(c) with
//!
//! ```text
//!   Υ_u(c) = P(c) + Q(c)
//!   P(c)   = ½‖u‖_E² − (β/2)‖u'‖₂² − c⁻² Σ_i ∫ e^H F̃_i(t, cu)
//!   Q(c)   = −c⁻² Σ_k Î_k(c·u(t_k))
//! ```
//!
//! Under the structural hypotheses Υ_u is strictly increasing with
//! Υ_u(0⁺) = −∞ and Υ_u(+∞) > 0, so it has a unique zero c(u); every
//! c ∈ (0, c(u)) gives the negative energy J̃₀(cu) < 0 the multiplicity
//! argument feeds on. The solver seeds its descents at 0.5·c(u).
//!
//! Everything here is ε-independent: the perturbation term is excluded by
//! definition of J̃₀.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::cutoff::{DataError, ModifiedProblem};
use crate::energy;
use crate::problem::SegmentKind;
use crate::report::{AuditReport, ConditionEntry};
use crate::space::Field;

/// Zero-residual target: |Υ(c)| ≤ FIND_C_TOL·(1 + |P(c)|).
const FIND_C_TOL: f64 = 1e-10;
/// Geometric bracket expansions/contractions from c = 1 before giving up.
const MAX_BRACKET_STEPS: usize = 200;
const MAX_BISECTIONS: usize = 300;

#[derive(Clone, Debug)]
pub enum FiberError {
    /// The fibering map is defined along rays through nonzero u only.
    ZeroDirection,
    /// Υ is defined for positive scales.
    BadScale(f64),
    /// No sign change found; carries the scanned range and endpoint values,
    /// which usually signals a hypothesis violation or a degenerate u.
    Bracket {
        lo: f64,
        hi: f64,
        lo_val: f64,
        hi_val: f64,
    },
    /// Bisection interval collapsed before meeting the residual target.
    Stalled { c: f64, residual: f64 },
    Data(DataError),
}

impl From<DataError> for FiberError {
    fn from(e: DataError) -> Self {
        FiberError::Data(e)
    }
}

impl core::fmt::Display for FiberError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            FiberError::ZeroDirection => write!(f, "fibering direction is the zero field"),
            FiberError::BadScale(c) => write!(f, "fibering scale must be positive, got {c}"),
            FiberError::Bracket {
                lo,
                hi,
                lo_val,
                hi_val,
            } => write!(
                f,
                "no sign change of the fibering map on [{lo:.3e}, {hi:.3e}] \
                 (values {lo_val:.3e}, {hi_val:.3e})"
            ),
            FiberError::Stalled { c, residual } => write!(
                f,
                "fibering root stalled at c = {c} with residual {residual:.3e}"
            ),
            FiberError::Data(e) => write!(f, "fibering data evaluation failed: {e}"),
        }
    }
}

/// Log-spaced scan of Υ_u around its root.
pub struct FiberScan<'a> {
    pub direction: Field<'a>,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub root: f64,
    pub bracket: (f64, f64),
}

fn require_nonzero(u: &Field) -> Result<(), FiberError> {
    if u.coeffs().iter().all(|&c| c == 0.0) {
        Err(FiberError::ZeroDirection)
    } else {
        Ok(())
    }
}

/// (P(c), Q(c)). The quadratic part of P comes from the unscaled direction,
/// so the identity J̃₀(cu) = c²(P+Q) really crosses two assembly paths.
pub fn upsilon_split(
    u: &Field,
    mp: &ModifiedProblem,
    c: f64,
) -> Result<(f64, f64), FiberError> {
    require_nonzero(u)?;
    if !(c > 0.0) || !c.is_finite() {
        return Err(FiberError::BadScale(c));
    }
    let space = u.space();
    let x = u.coeffs();
    let quad = 0.5 * space.stiffness().quadratic_form(x, x)
        - 0.5 * mp.spec.beta * space.first().quadratic_form(x, x);

    let scaled = space.field(x.iter().map(|v| c * v).collect());
    let parts = energy::energy_at(&scaled, mp, 0.0)?;
    let inv_c2 = 1.0 / (c * c);
    Ok((quad - inv_c2 * parts.f_term, -inv_c2 * parts.impulse_term))
}

/// Υ_u(c) = P(c) + Q(c).
pub fn upsilon(u: &Field, mp: &ModifiedProblem, c: f64) -> Result<f64, FiberError> {
    let (p, q) = upsilon_split(u, mp, c)?;
    Ok(p + q)
}

/// The unique zero c(u) of Υ_u, by geometric bracketing from c = 1 and
/// bisection. Residual target |Υ| ≤ 1e-10·(1+|P|).
pub fn find_c(u: &Field, mp: &ModifiedProblem) -> Result<f64, FiberError> {
    let met = |p: f64, v: f64| v.abs() <= FIND_C_TOL * (1.0 + p.abs());

    let (p1, q1) = upsilon_split(u, mp, 1.0)?;
    let v1 = p1 + q1;
    if met(p1, v1) {
        return Ok(1.0);
    }

    // Walk geometrically in the direction of the sign change.
    let (mut lo, mut hi, mut lo_val, mut hi_val);
    if v1 < 0.0 {
        lo = 1.0;
        lo_val = v1;
        hi = 1.0;
        hi_val = v1;
        for _ in 0..MAX_BRACKET_STEPS {
            lo = hi;
            lo_val = hi_val;
            hi *= 2.0;
            let (p, q) = upsilon_split(u, mp, hi)?;
            hi_val = p + q;
            if met(p, hi_val) {
                return Ok(hi);
            }
            if hi_val > 0.0 {
                break;
            }
        }
    } else {
        hi = 1.0;
        hi_val = v1;
        lo = 1.0;
        lo_val = v1;
        for _ in 0..MAX_BRACKET_STEPS {
            hi = lo;
            hi_val = lo_val;
            lo *= 0.5;
            let (p, q) = upsilon_split(u, mp, lo)?;
            lo_val = p + q;
            if met(p, lo_val) {
                return Ok(lo);
            }
            if lo_val < 0.0 {
                break;
            }
        }
    }
    if !(lo_val < 0.0 && hi_val > 0.0) {
        return Err(FiberError::Bracket {
            lo,
            hi,
            lo_val,
            hi_val,
        });
    }

    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let (p, q) = upsilon_split(u, mp, mid)?;
        let v = p + q;
        if met(p, v) {
            return Ok(mid);
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            return Err(FiberError::Stalled {
                c: mid,
                residual: v,
            });
        }
    }
    Err(FiberError::Stalled {
        c: 0.5 * (lo + hi),
        residual: f64::NAN,
    })
}

/// Υ over a log grid spanning [root/100, 100·root].
pub fn scan<'a>(
    u: &Field<'a>,
    mp: &ModifiedProblem,
    grid_size: usize,
) -> Result<FiberScan<'a>, FiberError> {
    let n = grid_size.max(64);
    let root = find_c(u, mp)?;
    let lo = root / 100.0;
    let ratio = libm::pow(1e4, 1.0 / (n - 1) as f64);
    let mut grid = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    let mut c = lo;
    for _ in 0..n {
        grid.push(c);
        values.push(upsilon(u, mp, c)?);
        c *= ratio;
    }
    Ok(FiberScan {
        direction: u.clone(),
        grid,
        values,
        root,
        bracket: (lo, root * 100.0),
    })
}

/// Element-quadrature sum of e^H (cu·f̃(t,cu) − 2F̃(t,cu)) over the active
/// segments: the sign-carrying ingredient of P'(c) (up to the positive
/// factor −c⁻³, so increase of P needs this integral negative).
fn p_slope_ingredient(u: &Field, mp: &ModifiedProblem, c: f64) -> Result<f64, DataError> {
    let space = u.space();
    let x = u.coeffs();
    let mut acc = 0.0;
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
            let cu = c * uq;
            let val = cu * mp.forcing_mod(i, q.t[k], cu)? - 2.0 * mp.forcing_anti_mod(i, q.t[k], cu)?;
            acc += q.w[k] * q.weight[k] * val;
        }
    }
    Ok(acc)
}

/// 2 Σ Î_k(cu(t_k)) − Σ e^{H(t_k)} (cu(t_k)) Ĩ_k(cu(t_k)): the numerator of
/// c³·Q'(c), nonnegative exactly when the doubled-antiderivative domination
/// holds along the ray.
fn q_slope_ingredient(u: &Field, mp: &ModifiedProblem, c: f64) -> Result<f64, DataError> {
    let space = u.space();
    let x = u.coeffs();
    let mut acc = 0.0;
    for k in 0..space.n_impulses() {
        let cu = c * x[space.impulse_value_dof(k)];
        acc += 2.0 * mp.impulse_anti_mod(k, cu)?;
        acc -= space.impulse_weight(k)
            * cu
            * mp.impulse_mod(k, cu).map_err(DataError::Eval)?;
    }
    Ok(acc)
}

/// Certify strict increase of Υ on a log grid around the root, together with
/// the two sign ingredients behind it: the P' integral strictly negative and
/// the Q' combination nonnegative. Failures are entries with the witness c
/// in the u slot.
pub fn monotonicity_certificate(
    u: &Field,
    mp: &ModifiedProblem,
    grid_size: usize,
) -> Result<AuditReport, FiberError> {
    let sc = scan(u, mp, grid_size)?;
    let mut entries = Vec::new();

    let mut worst = f64::INFINITY;
    let mut at = f64::NAN;
    for (w, c) in sc.values.windows(2).zip(&sc.grid) {
        let d = w[1] - w[0];
        if d < worst {
            worst = d;
            at = *c;
        }
    }
    entries.push(ConditionEntry {
        id: String::from("upsilon_increasing"),
        pass: worst > 0.0,
        margin: worst,
        witness_t: f64::NAN,
        witness_u: at,
        note: format!(
            "strict increase of the fibering map over {} log-spaced scales",
            sc.grid.len()
        ),
        mandatory: true,
    });

    let mut worst = f64::INFINITY;
    let mut at = f64::NAN;
    for &c in &sc.grid {
        let margin = -p_slope_ingredient(u, mp, c)?;
        if margin < worst {
            worst = margin;
            at = c;
        }
    }
    entries.push(ConditionEntry {
        id: String::from("p_slope"),
        pass: worst > 0.0,
        margin: worst,
        witness_t: f64::NAN,
        witness_u: at,
        note: String::from("∫e^H (cu·f̃ − 2F̃) < 0 along the ray (P strictly increasing)"),
        mandatory: true,
    });

    let mut worst = f64::INFINITY;
    let mut at = f64::NAN;
    for &c in &sc.grid {
        let margin = q_slope_ingredient(u, mp, c)?;
        if margin < worst {
            worst = margin;
            at = c;
        }
    }
    entries.push(ConditionEntry {
        id: String::from("q_slope"),
        pass: worst >= 0.0,
        margin: worst,
        witness_t: f64::NAN,
        witness_u: at,
        note: String::from("2ΣÎ(cu) − Σe^H cu·Ĩ(cu) ≥ 0 along the ray (Q nondecreasing)"),
        mandatory: true,
    });

    Ok(AuditReport::from_entries(entries))
}
