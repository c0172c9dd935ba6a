//! Deflated quasi-Newton search for multiple distinct small critical points
//! of the modified energy.
//!
//! Strategy: seed descents along low-order bubbles scaled into the negative
//! energy region by the fibering map, then minimize. Once a critical point
//! is found it is *deflated*: subsequent descents minimize the barrier form
//!
//! ```text
//!   (J̃(u) − L) · Π_found (‖u − u_f‖_E^{−p} + σ)
//! ```
//!
//! with L a floor below every energy seen, so found points become poles that
//! repel the iteration while the shift σ keeps the landscape unchanged far
//! away. The trivial solution is deflated from the start. A point only
//! counts once it meets the undeflated gradient test, so deflation steers
//! but never certifies.
//!
//! Descents run in three phases: barrier minimization to escape a known
//! basin (only when the start sits on a found point — the poles dominate the
//! whole small-norm region, so a fresh descent is better off without them),
//! Armijo-backtracked L-BFGS on J̃ itself, and a damped Newton refinement of
//! ∇J̃ = 0 that accepts steps by gradient dual-norm decrease alone. The
//! refinement never compares energies, so it can push well below quadrature
//! noise on J̃, and it converges to critical points of every index — the
//! sign-changing saddles that monotone descent slides past included. All
//! linear algebra is preconditioned by the stiffness Cholesky factor, so
//! gradient dual norms and descent directions live in the energy inner
//! product.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::cutoff::{DataError, ModifiedProblem};
use crate::energy;
use crate::fiber;
use crate::linalg::lu_solve;
use crate::rng::Rng;
use crate::space::{DiscreteSpace, Field};

/// Fields numerically indistinguishable from zero (in ‖·‖_E).
const TRIVIAL_NORM: f64 = 1e-6;
/// Squared-distance clamp keeping the barrier finite at an exact collision.
const R2_FLOOR: f64 = 1e-24;
/// E-norm size of the deterministic kick applied to a start that coincides
/// with an already-found point.
const NUDGE_SCALE: f64 = 1e-3;
/// Leave the barrier phase once its own gradient is this small (relative).
const ESCAPE_REL: f64 = 1e-6;
/// Hand over from Armijo to the gradient polish at this relative dual norm;
/// below it the Armijo decrements drown in quadrature noise on J̃.
const ARMIJO_EXIT_REL: f64 = 1e-5;
/// Round-off slack added to the Armijo acceptance test.
const ARMIJO_SLACK: f64 = 1e-13;
/// Energy refresh cadence during the refinement phase (iterations).
const POLISH_REFRESH: usize = 40;
/// Required relative dual-norm reduction per accepted refinement step,
/// scaled by the step fraction actually taken.
const POLISH_SHRINK: f64 = 1e-4;
/// Jacobian rebuilds allowed per refinement call.
const POLISH_STEPS: usize = 160;
/// Forward-difference step scale for the Jacobian: √(machine epsilon).
const FD_EPS: f64 = 1.490_116_119_384_765_6e-8;

#[derive(Clone, Copy, Debug)]
pub struct SolverConfig {
    /// Converged when the undeflated gradient dual norm is below
    /// `grad_tol · (1 + |energy|)`.
    pub grad_tol: f64,
    /// Total iteration budget per descent, all phases combined.
    pub max_iters: usize,
    pub armijo_c1: f64,
    pub backtrack: f64,
    pub max_halvings: usize,
    /// Two points are the same solution when their ‖·‖_E distance is below
    /// `distinct_tol · max(‖u_a‖_E, ‖u_b‖_E, 1)`.
    pub distinct_tol: f64,
    /// Barrier exponent p ≥ 2.
    pub deflation_power: f64,
    /// Barrier shift σ > 0.
    pub deflation_shift: f64,
    /// L-BFGS memory length.
    pub memory: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            grad_tol: 1e-9,
            max_iters: 5000,
            armijo_c1: 1e-4,
            backtrack: 0.5,
            max_halvings: 60,
            distinct_tol: 1e-6,
            deflation_power: 2.0,
            deflation_shift: 1.0,
            memory: 8,
        }
    }
}

/// A converged descent endpoint with its certification data.
#[derive(Clone, Debug)]
pub struct CriticalPoint<'a> {
    pub field: Field<'a>,
    pub energy: f64,
    /// Dual norm √(gᵀ S⁻¹ g) of the undeflated gradient over the free dofs.
    pub grad_norm: f64,
    pub norm_e: f64,
    pub norm_inf: f64,
    /// ‖u‖_∞ < δ/2: the cutoff is inactive on u, so it solves the original,
    /// unmodified system.
    pub accepted: bool,
    /// Numerically the zero field; never counted toward the multiplicity
    /// target.
    pub trivial: bool,
    /// ‖u‖_E ≤ √(e^{H₀})·δ/2, the a-priori ball that already forces
    /// ‖u‖_∞ ≤ δ/2 through the embedding. Informational; acceptance uses
    /// the direct sup-norm test.
    pub within_energy_ball: bool,
}

/// The found-so-far set together with the barrier parameters.
pub struct DeflationState<'a> {
    pub found: Vec<CriticalPoint<'a>>,
    pub deflation_power: f64,
    pub shift: f64,
}

impl<'a> DeflationState<'a> {
    pub fn new(deflation_power: f64, shift: f64) -> Self {
        assert!(deflation_power >= 2.0, "deflation power must be at least 2");
        assert!(shift > 0.0, "deflation shift must be positive");
        DeflationState {
            found: Vec::new(),
            deflation_power,
            shift,
        }
    }

    fn is_duplicate(&self, space: &DiscreteSpace, x: &[f64], tol: f64) -> Option<(usize, f64)> {
        let nx = libm::sqrt(quad_form(space, x));
        for (i, p) in self.found.iter().enumerate() {
            let d = libm::sqrt(e_dist2(space, x, p.field.coeffs()));
            if d <= tol * nx.max(p.norm_e).max(1.0) {
                return Some((i, d));
            }
        }
        None
    }

    /// Insert a point, refusing duplicates. Returns whether it was inserted.
    pub fn push(&mut self, point: CriticalPoint<'a>, tol: f64) -> bool {
        if self
            .is_duplicate(point.field.space(), point.field.coeffs(), tol)
            .is_some()
        {
            return false;
        }
        self.found.push(point);
        true
    }
}

#[derive(Clone, Debug)]
pub enum DescendFailure {
    /// Neither line search nor polish could make progress.
    Stagnated { iters: usize, grad_norm: f64 },
    /// Iteration budget exhausted before the gradient test.
    MaxIters { grad_norm: f64 },
    /// Converged onto an already-found point.
    Duplicate { of: usize, distance: f64 },
    Data(DataError),
}

impl From<DataError> for DescendFailure {
    fn from(e: DataError) -> Self {
        DescendFailure::Data(e)
    }
}

impl core::fmt::Display for DescendFailure {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            DescendFailure::Stagnated { iters, grad_norm } => write!(
                f,
                "descent stagnated after {iters} iterations at gradient norm {grad_norm:.3e}"
            ),
            DescendFailure::MaxIters { grad_norm } => write!(
                f,
                "iteration budget exhausted at gradient norm {grad_norm:.3e}"
            ),
            DescendFailure::Duplicate { of, distance } => write!(
                f,
                "converged onto already-found point {of} (distance {distance:.3e})"
            ),
            DescendFailure::Data(e) => write!(f, "data evaluation failed: {e}"),
        }
    }
}

#[derive(Clone, Debug)]
pub enum SolveError {
    /// Every degree of freedom is constrained (single-element mesh).
    NoFreeDofs,
    Data(DataError),
}

impl From<DataError> for SolveError {
    fn from(e: DataError) -> Self {
        SolveError::Data(e)
    }
}

impl core::fmt::Display for SolveError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SolveError::NoFreeDofs => {
                write!(f, "mesh has no free degrees of freedom; refine it")
            }
            SolveError::Data(e) => write!(f, "data evaluation failed: {e}"),
        }
    }
}

pub struct SearchResult<'a> {
    /// Everything found (accepted or not), energy ascending. The pre-seeded
    /// trivial point is not listed.
    pub points: Vec<CriticalPoint<'a>>,
    pub requested: usize,
    /// One line per seed and per notable event, in deterministic order.
    pub log: Vec<String>,
}

impl SearchResult<'_> {
    pub fn accepted_count(&self) -> usize {
        self.points
            .iter()
            .filter(|p| p.accepted && !p.trivial)
            .count()
    }

    /// Present exactly when fewer than the requested number of accepted
    /// points were found.
    pub fn shortfall(&self) -> Option<String> {
        let got = self.accepted_count();
        (got < self.requested).then(|| {
            format!(
                "requested {} accepted critical points but only {got} were found",
                self.requested
            )
        })
    }
}

// ---- vector helpers over free coefficients ----

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

fn quad_form(space: &DiscreteSpace, x: &[f64]) -> f64 {
    space.stiffness().quadratic_form(x, x).max(0.0)
}

fn e_dist2(space: &DiscreteSpace, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    quad_form(space, &d)
}

/// √(gᵀ S⁻¹ g): the norm of the gradient in the dual of (E, ‖·‖_E).
pub fn dual_norm(space: &DiscreteSpace, g: &[f64]) -> f64 {
    let s = space.chol().solve(g);
    libm::sqrt(dot(g, &s).max(0.0))
}

// ---- L-BFGS with S⁻¹ preconditioning ----

struct Quasi {
    mem: Vec<(Vec<f64>, Vec<f64>, f64)>,
    cap: usize,
}

impl Quasi {
    fn new(cap: usize) -> Self {
        Quasi {
            mem: Vec::new(),
            cap: cap.max(1),
        }
    }

    fn reset(&mut self) {
        self.mem.clear();
    }

    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if sy <= 1e-12 * norm2(&s) * norm2(&y) {
            return; // not enough curvature to be useful
        }
        if self.mem.len() == self.cap {
            self.mem.remove(0);
        }
        self.mem.push((s, y, 1.0 / sy));
    }

    /// Two-loop recursion with H₀ = γ S⁻¹.
    fn direction(&self, space: &DiscreteSpace, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(self.mem.len());
        for (s, y, rho) in self.mem.iter().rev() {
            let a = rho * dot(s, &q);
            axpy(&mut q, -a, y);
            alphas.push(a);
        }
        let mut r = space.chol().solve(&q);
        if let Some((s, y, _)) = self.mem.last() {
            let y_sinv_y = dot(y, &space.chol().solve(y));
            if y_sinv_y > 0.0 {
                let gamma = dot(s, y) / y_sinv_y;
                for v in r.iter_mut() {
                    *v *= gamma;
                }
            }
        }
        for ((s, y, rho), a) in self.mem.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &r);
            axpy(&mut r, a - b, s);
        }
        for v in r.iter_mut() {
            *v = -*v;
        }
        r
    }
}

// ---- objective plumbing ----

struct Ctx<'s, 'p> {
    space: &'s DiscreteSpace,
    mp: &'p ModifiedProblem<'p>,
}

impl<'s> Ctx<'s, '_> {
    fn value(&self, x: &[f64]) -> Result<f64, DescendFailure> {
        Ok(energy::energy(&self.space.field(x.to_vec()), self.mp)?.total)
    }

    fn grad(&self, x: &[f64]) -> Result<Vec<f64>, DescendFailure> {
        Ok(energy::gradient(&self.space.field(x.to_vec()), self.mp)?)
    }
}

/// Π_found (r^{−p} + σ) with r clamped away from zero.
fn barrier(defl: &DeflationState, space: &DiscreteSpace, x: &[f64]) -> f64 {
    let mut d = 1.0;
    for p in &defl.found {
        let r2 = e_dist2(space, x, p.field.coeffs()).max(R2_FLOOR);
        d *= libm::pow(r2, -0.5 * defl.deflation_power) + defl.shift;
    }
    d
}

/// ∇[(J̃−L)·Π] given the plain value and gradient at x. The product rule
/// gives Π·[g − (J̃−L) Σ_f c_f S(x−x_f)] with c_f = p r^{−p}/(r²(r^{−p}+σ)).
fn deflated_grad(
    defl: &DeflationState,
    space: &DiscreteSpace,
    x: &[f64],
    jt: f64,
    floor: f64,
    g: &[f64],
) -> Vec<f64> {
    let mul = barrier(defl, space, x);
    let mut comb = vec![0.0; x.len()];
    for p in &defl.found {
        let r2 = e_dist2(space, x, p.field.coeffs()).max(R2_FLOOR);
        let rp = libm::pow(r2, -0.5 * defl.deflation_power);
        let c = defl.deflation_power * rp / (r2 * (rp + defl.shift));
        for (ci, (xi, fi)) in comb.iter_mut().zip(x.iter().zip(p.field.coeffs())) {
            *ci += c * (xi - fi);
        }
    }
    let mut s_comb = vec![0.0; x.len()];
    space.stiffness().mul_vec(&comb, &mut s_comb);
    g.iter()
        .zip(&s_comb)
        .map(|(gi, si)| mul * (gi - (jt - floor) * si))
        .collect()
}

/// Deterministic kick in a pseudo-random direction, sized in ‖·‖_E; applied
/// when a start coincides with a found point, where both the plain gradient
/// and the barrier gradient vanish by symmetry.
fn nudge(space: &DiscreteSpace, x: &mut [f64], salt: u64, scale: f64) {
    let mut rng = Rng::new(0x6e75_6467_u64 ^ salt.wrapping_mul(0x9e37_79b9));
    let v: Vec<f64> = (0..x.len()).map(|_| rng.range(-1.0, 1.0)).collect();
    let nv = libm::sqrt(quad_form(space, &v));
    if nv == 0.0 {
        return;
    }
    let nx = libm::sqrt(quad_form(space, x));
    axpy(x, scale * (1.0 + nx) / nv, &v);
}

/// Relaunch points for a descent that must leave a found point's basin:
/// the antipode first (critical whenever the functional is even), then a
/// fan of low-order bubbles at basin-scale radii, then seeded random
/// directions. Everything is deterministic and filtered to stay clear of
/// the found set. A local barrier step cannot cross an energy ridge, so
/// escapes hop instead of crawl.
fn escape_candidates(
    space: &DiscreteSpace,
    deflation: &DeflationState,
    cfg: &SolverConfig,
    from: &[f64],
) -> Vec<Vec<f64>> {
    let n = space.n_free();
    let nx = libm::sqrt(quad_form(space, from));
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    if nx > 0.0 {
        dirs.push(from.iter().map(|c| -c / nx).collect());
    }
    let t_total = space.total_time();
    for j in 1..=4 {
        let jf = j as f64;
        let b = space.interpolate(|t| {
            let s = t / t_total;
            let w = s * (1.0 - s);
            let angle = jf * core::f64::consts::PI * s;
            (
                libm::sin(angle) * w,
                (jf * core::f64::consts::PI * libm::cos(angle) * w
                    + libm::sin(angle) * (1.0 - 2.0 * s))
                    / t_total,
            )
        });
        let nb = b.norm_e();
        if nb == 0.0 {
            continue;
        }
        let unit: Vec<f64> = b.coeffs().iter().map(|c| c / nb).collect();
        dirs.push(unit.iter().map(|c| -c).collect());
        dirs.push(unit);
    }
    let mut rng = Rng::new(0xe5ca_9e ^ (deflation.found.len() as u64));
    for _ in 0..4 {
        let v: Vec<f64> = (0..n).map(|_| rng.range(-1.0, 1.0)).collect();
        let nv = libm::sqrt(quad_form(space, &v));
        if nv > 0.0 {
            dirs.push(v.iter().map(|c| c / nv).collect());
        }
    }

    // Hop at the scale the found set actually lives at; an O(1) hop from a
    // 1e-2-sized landscape just slides back down the quadratic bowl.
    let r_base = deflation
        .found
        .iter()
        .map(|p| p.norm_e)
        .fold(nx, f64::max)
        .max(1e3 * TRIVIAL_NORM);
    let mut out = Vec::new();
    for (di, d) in dirs.iter().enumerate() {
        let radii: &[f64] = if di == 0 {
            &[2.0 * nx, nx]
        } else {
            &[0.7 * r_base, 1.4 * r_base]
        };
        for &rho in radii {
            if rho <= 0.0 {
                continue;
            }
            let mut x = from.to_vec();
            axpy(&mut x, rho, d);
            if deflation
                .is_duplicate(space, &x, 1e3 * cfg.distinct_tol)
                .is_none()
            {
                out.push(x);
            }
        }
    }
    out
}

enum ArmijoEnd {
    /// Undeflated gradient test met.
    Converged,
    /// Phase-local gradient became small; move on.
    Small,
    /// Line search could not find an acceptable step.
    Stalled,
    Budget,
    /// The energy dropped to the barrier floor (deflated phase only).
    FloorBreach,
}

struct DescentState {
    x: Vec<f64>,
    spent: usize,
}

/// L-BFGS + Armijo backtracking. With `defl = Some((state, floor))` the
/// objective is the barrier form; the convergence test always uses the
/// plain gradient.
#[allow(clippy::too_many_arguments)]
fn armijo_phase(
    ctx: &Ctx,
    defl: Option<(&DeflationState, f64)>,
    st: &mut DescentState,
    budget: usize,
    cfg: &SolverConfig,
    exit_rel: f64,
) -> Result<ArmijoEnd, DescendFailure> {
    let space = ctx.space;
    let mut quasi = Quasi::new(cfg.memory);
    let mut jt = ctx.value(&st.x)?;

    while st.spent < budget {
        let g = ctx.grad(&st.x)?;
        if dual_norm(space, &g) <= cfg.grad_tol * (1.0 + jt.abs()) {
            return Ok(ArmijoEnd::Converged);
        }

        // Work objective: barrier form or J̃ itself.
        let (wval, wgrad) = match defl {
            Some((d, floor)) => (
                (jt - floor) * barrier(d, space, &st.x),
                deflated_grad(d, space, &st.x, jt, floor, &g),
            ),
            None => (jt, g.clone()),
        };
        if dual_norm(space, &wgrad) <= exit_rel * (1.0 + wval.abs()) {
            return Ok(ArmijoEnd::Small);
        }

        let mut d = quasi.direction(space, &wgrad);
        let mut slope = dot(&wgrad, &d);
        if !(slope < 0.0) {
            quasi.reset();
            d = space.chol().solve(&wgrad);
            for v in d.iter_mut() {
                *v = -*v;
            }
            slope = dot(&wgrad, &d);
            if !(slope < 0.0) {
                return Ok(ArmijoEnd::Stalled);
            }
        }

        // First step of a fresh memory can be wildly scaled; cap it.
        let mut alpha = 1.0;
        if quasi.mem.is_empty() {
            let nd = libm::sqrt(quad_form(space, &d));
            if nd > 0.0 {
                let nx = libm::sqrt(quad_form(space, &st.x));
                alpha = (0.5 * (1.0 + nx) / nd).min(1.0);
            }
        }

        let mut accepted = false;
        for _ in 0..=cfg.max_halvings {
            let mut xt = st.x.clone();
            axpy(&mut xt, alpha, &d);
            let jt_t = ctx.value(&xt)?;
            let wval_t = match defl {
                Some((dstate, floor)) => {
                    if jt_t <= floor {
                        return Ok(ArmijoEnd::FloorBreach);
                    }
                    (jt_t - floor) * barrier(dstate, space, &xt)
                }
                None => jt_t,
            };
            if wval_t <= wval + cfg.armijo_c1 * alpha * slope + ARMIJO_SLACK * (1.0 + wval.abs())
            {
                // accepted steps never raise J̃ beyond round-off
                debug_assert!(
                    defl.is_some() || jt_t <= jt + 1e-12 * (1.0 + jt.abs()),
                    "energy rose along an accepted step: {jt} -> {jt_t}"
                );
                let g_new = ctx.grad(&xt)?;
                let wg_new = match defl {
                    Some((dstate, floor)) => {
                        deflated_grad(dstate, space, &xt, jt_t, floor, &g_new)
                    }
                    None => g_new,
                };
                let s: Vec<f64> = d.iter().map(|v| alpha * v).collect();
                let y: Vec<f64> = wg_new.iter().zip(&wgrad).map(|(a, b)| a - b).collect();
                quasi.push(s, y);
                st.x = xt;
                jt = jt_t;
                accepted = true;
                break;
            }
            alpha *= cfg.backtrack;
        }
        if !accepted {
            return Ok(ArmijoEnd::Stalled);
        }
        st.spent += 1;
    }
    Ok(ArmijoEnd::Budget)
}

/// Forward-difference Jacobian of the gradient (the discrete Hessian of the
/// working energy), symmetrized. Row major n×n; `g0` is the gradient already
/// evaluated at `x`.
fn fd_jacobian(ctx: &Ctx, x: &[f64], g0: &[f64]) -> Result<Vec<f64>, DescendFailure> {
    let n = x.len();
    let mut jac = vec![0.0; n * n];
    let mut xt = x.to_vec();
    for j in 0..n {
        let h = FD_EPS * (1.0 + x[j].abs());
        let keep = xt[j];
        xt[j] = keep + h;
        let gj = ctx.grad(&xt)?;
        xt[j] = keep;
        for i in 0..n {
            jac[i * n + j] = (gj[i] - g0[i]) / h;
        }
    }
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (jac[i * n + j] + jac[j * n + i]);
            jac[i * n + j] = m;
            jac[j * n + i] = m;
        }
    }
    Ok(jac)
}

/// Damped Newton iteration on ∇J̃ = 0 accepting steps by gradient dual-norm
/// decrease only; no energy comparisons, so it can push well below the
/// quadrature noise on J̃. Unlike the monotone phases it converges to
/// critical points of every index, so it is also used to capture the
/// sign-changing saddles directly from their ray seeds.
fn polish(
    ctx: &Ctx,
    st: &mut DescentState,
    budget: usize,
    cfg: &SolverConfig,
) -> Result<(), DescendFailure> {
    let space = ctx.space;
    let n = st.x.len();
    let mut jref = ctx.value(&st.x)?;
    let mut since_refresh = 0usize;
    let mut g = ctx.grad(&st.x)?;
    let mut dual = dual_norm(space, &g);
    let mut steps = 0usize;

    loop {
        if dual <= 0.5 * cfg.grad_tol * (1.0 + jref.abs()) {
            return Ok(());
        }
        if st.spent >= budget || steps >= POLISH_STEPS {
            return Err(DescendFailure::MaxIters { grad_norm: dual });
        }
        if since_refresh >= POLISH_REFRESH {
            jref = ctx.value(&st.x)?;
            since_refresh = 0;
        }

        let jac = fd_jacobian(ctx, &st.x, &g)?;
        let mut stepped = false;
        for attempt in 0..2 {
            let mut d: Vec<f64> = if attempt == 0 {
                // Newton: solve H d = −g
                let mut a = jac.clone();
                let mut rhs: Vec<f64> = g.iter().map(|v| -v).collect();
                if !lu_solve(&mut a, &mut rhs) {
                    continue; // singular Hessian; fall through to steepest
                }
                rhs
            } else {
                // steepest descent on ½‖g‖²_{S⁻¹}: −Hᵀ S⁻¹ g, rescaled to
                // the length a Newton step would have
                let sg = space.chol().solve(&g);
                let mut sd: Vec<f64> = (0..n)
                    .map(|j| -(0..n).map(|i| jac[i * n + j] * sg[i]).sum::<f64>())
                    .collect();
                let nd = libm::sqrt(quad_form(space, &sd));
                if !(nd > 0.0) {
                    continue;
                }
                for v in sd.iter_mut() {
                    *v *= dual / nd;
                }
                sd
            };
            // keep any single hop at a sane length
            let nd = libm::sqrt(quad_form(space, &d));
            let nx = libm::sqrt(quad_form(space, &st.x));
            let cap = 10.0 * (1.0 + nx);
            if nd > cap {
                let s = cap / nd;
                for v in d.iter_mut() {
                    *v *= s;
                }
            }
            let mut alpha = 1.0;
            for _ in 0..=cfg.max_halvings {
                let mut xt = st.x.clone();
                axpy(&mut xt, alpha, &d);
                let g_t = ctx.grad(&xt)?;
                let dual_t = dual_norm(space, &g_t);
                if dual_t <= dual * (1.0 - POLISH_SHRINK * alpha) {
                    st.x = xt;
                    g = g_t;
                    dual = dual_t;
                    stepped = true;
                    break;
                }
                alpha *= cfg.backtrack;
            }
            if stepped {
                break;
            }
        }
        if !stepped {
            return Err(DescendFailure::Stagnated {
                iters: st.spent,
                grad_norm: dual,
            });
        }
        steps += 1;
        st.spent += 1;
        since_refresh += 1;
    }
}

fn classify(norm_e: f64, norm_inf: f64, mp: &ModifiedProblem) -> (bool, bool, bool) {
    let accepted = norm_inf < 0.5 * mp.spec.delta;
    let trivial = norm_e <= TRIVIAL_NORM;
    let ball = 0.5 * libm::exp(0.5 * mp.weights.h_min()) * mp.spec.delta;
    (accepted, trivial, norm_e <= ball)
}

fn critical_point<'a>(
    space: &'a DiscreteSpace,
    mp: &ModifiedProblem,
    coeffs: Vec<f64>,
) -> Result<CriticalPoint<'a>, DataError> {
    let field = space.field(coeffs);
    let e = energy::energy(&field, mp)?.total;
    let g = energy::gradient(&field, mp)?;
    let grad_norm = dual_norm(space, &g);
    let norm_e = field.norm_e();
    let norm_inf = field.norm_inf();
    let (accepted, trivial, within_energy_ball) = classify(norm_e, norm_inf, mp);
    Ok(CriticalPoint {
        field,
        energy: e,
        grad_norm,
        norm_e,
        norm_inf,
        accepted,
        trivial,
        within_energy_ball,
    })
}

/// Minimize from `start` under the given deflation. Success requires the
/// *undeflated* gradient dual norm to pass `grad_tol · (1 + |energy|)` and
/// the endpoint to be distinct from every deflated point.
pub fn descend<'a>(
    space: &'a DiscreteSpace,
    mp: &ModifiedProblem,
    start: &Field,
    deflation: &DeflationState,
    cfg: &SolverConfig,
) -> Result<CriticalPoint<'a>, DescendFailure> {
    let ctx = Ctx { space, mp };
    let start_coeffs = start.coeffs().to_vec();
    assert_eq!(start_coeffs.len(), space.n_free());

    // Floor for the barrier numerator J̃ − L: modestly below everything seen,
    // so the repulsion works at landscape scale instead of flattening it.
    let found_min = deflation
        .found
        .iter()
        .map(|p| p.energy)
        .fold(0.0f64, f64::min);

    // A start sitting on a found point has to hop out of that basin; a
    // fresh start only ever needs a kick when a retry asks for one.
    let on_found = deflation
        .is_duplicate(space, &start_coeffs, cfg.distinct_tol)
        .is_some();
    let hops = if on_found {
        escape_candidates(space, deflation, cfg, &start_coeffs)
    } else {
        Vec::new()
    };

    let mut st = DescentState {
        x: start_coeffs.clone(),
        spent: 0,
    };
    let mut retry = 0u64;
    loop {
        if on_found {
            match hops.get(retry as usize) {
                Some(h) => st.x = h.clone(),
                None => {
                    st.x = start_coeffs.clone();
                    nudge(space, &mut st.x, deflation.found.len() as u64 + 31 * retry, 0.1);
                }
            }
        } else if retry > 0 {
            st.x = start_coeffs.clone();
            let scale = NUDGE_SCALE * libm::pow(4.0, retry as f64);
            nudge(
                space,
                &mut st.x,
                deflation.found.len() as u64 + 31 * retry,
                scale,
            );
        }

        let mut converged = false;

        // The barrier poles dominate everywhere nearer than σ^{-1/p}, which
        // covers the whole small-norm region this problem lives in, so the
        // deflated phase runs only when the start must leave a found basin.
        if on_found {
            let escape_end = st.spent + (cfg.max_iters - st.spent.min(cfg.max_iters)) / 2;
            let mut attempts = 0;
            loop {
                let jt = ctx.value(&st.x)?;
                let base = jt.min(found_min);
                let floor = base - 0.25 * (1.0 + base.abs()) * libm::pow(10.0, attempts as f64);
                match armijo_phase(
                    &ctx,
                    Some((deflation, floor)),
                    &mut st,
                    escape_end,
                    cfg,
                    ESCAPE_REL,
                )? {
                    ArmijoEnd::Converged => {
                        converged = true;
                        break;
                    }
                    ArmijoEnd::FloorBreach if attempts < 3 => {
                        attempts += 1;
                        continue;
                    }
                    _ => break,
                }
            }
        }

        if !converged {
            match armijo_phase(&ctx, None, &mut st, cfg.max_iters, cfg, ARMIJO_EXIT_REL)? {
                ArmijoEnd::Converged => converged = true,
                ArmijoEnd::Budget => {
                    let g = ctx.grad(&st.x)?;
                    return Err(DescendFailure::MaxIters {
                        grad_norm: dual_norm(space, &g),
                    });
                }
                ArmijoEnd::Small | ArmijoEnd::Stalled | ArmijoEnd::FloorBreach => {}
            }
        }

        if !converged {
            polish(&ctx, &mut st, cfg.max_iters, cfg)?;
        }

        // Certify against the final energy, then reject duplicates.
        let jt = ctx.value(&st.x)?;
        let g = ctx.grad(&st.x)?;
        let dual = dual_norm(space, &g);
        if dual > cfg.grad_tol * (1.0 + jt.abs()) {
            return Err(DescendFailure::Stagnated {
                iters: st.spent,
                grad_norm: dual,
            });
        }
        let max_retries = if on_found { 6 } else { 2 };
        match deflation.is_duplicate(space, &st.x, cfg.distinct_tol) {
            // Slid back into a known basin: re-launch while the budget lasts.
            Some(_) if retry < max_retries && st.spent < cfg.max_iters => retry += 1,
            Some((of, distance)) => return Err(DescendFailure::Duplicate { of, distance }),
            None => return Ok(critical_point(space, mp, st.x)?),
        }
    }
}

/// Starting fields: sine bubbles sin(jπt/T)·(t/T)(1−t/T), j = 1..n,
/// interpolated, normalized in ‖·‖_E and scaled to half their fibering root
/// so every start has negative unperturbed energy. Both signs are produced
/// when ε ≠ 0 (the functional is even when ε = 0, so one sign suffices).
/// Directions whose fibering root cannot be located are skipped with a log
/// line.
pub fn seed_starts<'a>(
    space: &'a DiscreteSpace,
    mp: &ModifiedProblem,
    n_directions: usize,
) -> (Vec<Field<'a>>, Vec<String>) {
    let t_total = space.total_time();
    let mut seeds = Vec::new();
    let mut log = Vec::new();
    for j in 1..=n_directions {
        let jf = j as f64;
        let u = space.interpolate(|t| {
            let s = t / t_total;
            let w = s * (1.0 - s);
            let angle = jf * core::f64::consts::PI * s;
            let v = libm::sin(angle) * w;
            let dv = (jf * core::f64::consts::PI * libm::cos(angle) * w
                + libm::sin(angle) * (1.0 - 2.0 * s))
                / t_total;
            (v, dv)
        });
        let ne = u.norm_e();
        if ne == 0.0 {
            log.push(format!("direction {j}: interpolant vanished, skipped"));
            continue;
        }
        let unit = space.field(u.coeffs().iter().map(|c| c / ne).collect());
        let root = match fiber::find_c(&unit, mp) {
            Ok(r) => r,
            Err(e) => {
                log.push(format!("direction {j}: fibering failed ({e}), skipped"));
                continue;
            }
        };
        let scale = 0.5 * root;
        seeds.push(space.field(unit.coeffs().iter().map(|c| scale * c).collect()));
        if mp.spec.epsilon != 0.0 {
            seeds.push(space.field(unit.coeffs().iter().map(|c| -scale * c).collect()));
        }
    }
    (seeds, log)
}

/// Refine the gradient to zero straight from `start`, no monotone phases.
/// This captures the critical points whose unstable manifolds drain into the
/// ground pair — a gradient flow never stops at them, Newton does.
fn zero_hunt<'a>(
    space: &'a DiscreteSpace,
    mp: &ModifiedProblem,
    start: &Field,
    deflation: &DeflationState,
    cfg: &SolverConfig,
) -> Result<CriticalPoint<'a>, DescendFailure> {
    let ctx = Ctx { space, mp };
    let mut st = DescentState {
        x: start.coeffs().to_vec(),
        spent: 0,
    };
    polish(&ctx, &mut st, cfg.max_iters, cfg)?;
    let jt = ctx.value(&st.x)?;
    let g = ctx.grad(&st.x)?;
    let dual = dual_norm(space, &g);
    if dual > cfg.grad_tol * (1.0 + jt.abs()) {
        return Err(DescendFailure::Stagnated {
            iters: st.spent,
            grad_norm: dual,
        });
    }
    match deflation.is_duplicate(space, &st.x, cfg.distinct_tol) {
        Some((of, distance)) => Err(DescendFailure::Duplicate { of, distance }),
        None => Ok(critical_point(space, mp, st.x)?),
    }
}

/// Record a freshly certified point: log it, deflate it, and when the
/// functional is even verify and deflate its mirror too.
fn register_found<'a>(
    space: &'a DiscreteSpace,
    mp: &ModifiedProblem,
    defl: &mut DeflationState<'a>,
    log: &mut Vec<String>,
    cfg: &SolverConfig,
    even: bool,
    label: &str,
    p: CriticalPoint<'a>,
) {
    log.push(format!(
        "{label}: energy {:.6e}, |grad|' {:.2e}, |u|_E {:.4e}, |u|_inf {:.4e}{}",
        p.energy,
        p.grad_norm,
        p.norm_e,
        p.norm_inf,
        if p.accepted { "" } else { " (not small)" }
    ));
    let coeffs = p.field.coeffs().to_vec();
    let stored = defl.push(p, cfg.distinct_tol);
    debug_assert!(stored, "a certified duplicate reached registration");
    if even {
        // J̃₀ is even, so the mirror is critical with the same energy;
        // verify its gradient anyway before counting it.
        let mirrored: Vec<f64> = coeffs.iter().map(|c| -c).collect();
        match critical_point(space, mp, mirrored) {
            Ok(m) => {
                if m.grad_norm <= cfg.grad_tol * (1.0 + m.energy.abs()) {
                    if defl.push(m, cfg.distinct_tol) {
                        log.push(format!("{label}: mirrored point counted as distinct"));
                    }
                } else {
                    log.push(format!(
                        "{label}: mirror failed the gradient test ({:.2e})",
                        m.grad_norm
                    ));
                }
            }
            Err(e) => log.push(format!("{label}: mirror evaluation failed: {e}")),
        }
    }
}

/// Re-derive the acceptance flags of already-converged points: accepted iff
/// ‖u‖_∞ < δ/2 (so the cutoff never acts on them), trivial iff numerically
/// zero, plus the informational ‖·‖_E-ball record.
pub fn small_solution_filter<'a>(
    points: Vec<CriticalPoint<'a>>,
    mp: &ModifiedProblem,
) -> Vec<CriticalPoint<'a>> {
    points
        .into_iter()
        .map(|mut p| {
            let (accepted, trivial, ball) = classify(p.norm_e, p.norm_inf, mp);
            p.accepted = accepted;
            p.trivial = trivial;
            p.within_energy_ball = ball;
            p
        })
        .collect()
}

/// Run seeded, deflated descents until `k` accepted points are found or the
/// seeds run out. When ε = 0 every found point is mirrored: −u is verified
/// to pass the same gradient test and is counted as a distinct solution.
/// A shortfall is reported in the result, never as an error.
pub fn multiplicity_search<'a>(
    space: &'a DiscreteSpace,
    mp: &ModifiedProblem,
    k: usize,
    cfg: &SolverConfig,
) -> Result<SearchResult<'a>, SolveError> {
    if space.n_free() == 0 {
        return Err(SolveError::NoFreeDofs);
    }
    let mut defl = DeflationState::new(cfg.deflation_power, cfg.deflation_shift);
    let zero = critical_point(space, mp, vec![0.0; space.n_free()])?;
    defl.found.push(zero);

    let mut log = Vec::new();
    if k == 0 {
        return Ok(SearchResult {
            points: Vec::new(),
            requested: 0,
            log,
        });
    }

    let n_dirs = (k + 2).max(4);
    let (seeds, seed_log) = seed_starts(space, mp, n_dirs);
    log.extend(seed_log);

    let even = mp.spec.epsilon == 0.0;
    let accepted_in = |defl: &DeflationState| {
        defl.found
            .iter()
            .filter(|p| p.accepted && !p.trivial)
            .count()
    };
    for (si, seed) in seeds.iter().enumerate() {
        if accepted_in(&defl) >= k {
            break;
        }
        match descend(space, mp, seed, &defl, cfg) {
            Ok(p) => {
                let label = format!("seed {si}");
                register_found(space, mp, &mut defl, &mut log, cfg, even, &label, p);
            }
            Err(e) => log.push(format!("seed {si}: {e}")),
        }
        if accepted_in(&defl) >= k {
            break;
        }
        // The monotone descent slides past sign-changing saddles; hunt the
        // gradient zero straight from the ray seed as well.
        match zero_hunt(space, mp, seed, &defl, cfg) {
            Ok(p) => {
                let label = format!("seed {si} (ray)");
                register_found(space, mp, &mut defl, &mut log, cfg, even, &label, p);
            }
            Err(e) => log.push(format!("seed {si} (ray): {e}")),
        }
    }

    let mut points: Vec<CriticalPoint> = defl.found.drain(1..).collect();
    points.sort_by(|a, b| {
        a.energy
            .partial_cmp(&b.energy)
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    let result = SearchResult {
        points,
        requested: k,
        log,
    };
    if let Some(s) = result.shortfall() {
        // surfaced in the log as well so a bare log dump shows it
        let mut r = result;
        r.log.push(s);
        return Ok(r);
    }
    Ok(result)
}
