//! C¹-conforming discretization of the space of H² functions on [0, T] with
//! clamped ends: u(0) = u'(0) = u(T) = u'(T) = 0.
//!
//! Cubic Hermite elements on a mesh that refines each partition segment
//! uniformly, so every impulse time is a true node and segment boundaries
//! never fall inside an element. Each interior node carries a (value, slope)
//! dof pair; boundary dofs are constrained away rather than penalized, so the
//! end conditions hold exactly.
//!
//! Alongside the mesh the builder precomputes a fixed 15-point Kronrod rule
//! per element (exact through degree 22 — far beyond the degree-6 products of
//! cubic shapes), the weight e^{H(t)} at every quadrature point and impulse
//! node, and four banded symmetric forms:
//!
//! * `stiffness`  ∫ e^H u'' v''   (the E inner product)
//! * `second`     ∫ u'' v''       (unweighted seminorm)
//! * `first`      ∫ u' v'
//! * `mass`       ∫ u v
//!
//! plus the Cholesky factor of `stiffness` for preconditioning and dual
//! norms.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{BandedChol, BandedSym, FactorError};
use crate::problem::{ProblemSpec, SegmentKind, WeightError, WeightProfile};
use crate::quad::{GK15_NODES, GK15_WEIGHTS};
use crate::report::{AuditReport, MarginTracker};
use crate::rng::Rng;

/// Quadrature points per element.
pub const ELEM_QUAD: usize = 15;

/// Dof pairs couple only across one shared node, so global indices within an
/// element differ by at most 3.
const HALF_BANDWIDTH: usize = 3;

#[derive(Clone, Debug)]
pub enum SpaceError {
    Weight(WeightError),
    Factor(FactorError),
    /// elements_per_segment must be at least 1.
    NoElements,
}

impl core::fmt::Display for SpaceError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SpaceError::Weight(e) => write!(f, "weight evaluation failed: {e}"),
            SpaceError::Factor(e) => write!(f, "stiffness factorization failed: {e}"),
            SpaceError::NoElements => write!(f, "elements_per_segment must be >= 1"),
        }
    }
}

impl From<WeightError> for SpaceError {
    fn from(e: WeightError) -> Self {
        SpaceError::Weight(e)
    }
}

impl From<FactorError> for SpaceError {
    fn from(e: FactorError) -> Self {
        SpaceError::Factor(e)
    }
}

/// Hermite shape functions on the reference coordinate xi in [0, 1] of an
/// element of length `l`, ordered (value-left, slope-left, value-right,
/// slope-right). Returns (values, d/dt, d²/dt²). Slope dofs carry u' itself,
/// hence the `l` scalings.
fn shapes(xi: f64, l: f64) -> ([f64; 4], [f64; 4], [f64; 4]) {
    let x2 = xi * xi;
    let x3 = x2 * xi;
    let v = [
        1.0 - 3.0 * x2 + 2.0 * x3,
        l * (xi - 2.0 * x2 + x3),
        3.0 * x2 - 2.0 * x3,
        l * (x3 - x2),
    ];
    let d = [
        (6.0 * x2 - 6.0 * xi) / l,
        1.0 - 4.0 * xi + 3.0 * x2,
        (6.0 * xi - 6.0 * x2) / l,
        3.0 * x2 - 2.0 * xi,
    ];
    let s = [
        (12.0 * xi - 6.0) / (l * l),
        (6.0 * xi - 4.0) / l,
        (6.0 - 12.0 * xi) / (l * l),
        (6.0 * xi - 2.0) / l,
    ];
    (v, d, s)
}

/// The 15 Kronrod abscissae mapped to [0, 1], ascending, with their weights.
fn unit_rule() -> [(f64, f64); ELEM_QUAD] {
    let mut rule = [(0.0, 0.0); ELEM_QUAD];
    for k in 0..7 {
        rule[k] = (0.5 * (1.0 - GK15_NODES[k]), 0.5 * GK15_WEIGHTS[k]);
        rule[14 - k] = (0.5 * (1.0 + GK15_NODES[k]), 0.5 * GK15_WEIGHTS[k]);
    }
    rule[7] = (0.5, 0.5 * GK15_WEIGHTS[7]);
    rule
}

/// Per-element view of the precomputed quadrature data.
pub struct ElemQuad<'a> {
    /// Quadrature abscissae in [0, T].
    pub t: &'a [f64],
    /// Quadrature weights including the element jacobian.
    pub w: &'a [f64],
    /// e^{H(t)} at the abscissae.
    pub weight: &'a [f64],
    /// Shape-function values at the abscissae, one [4] row per point.
    pub basis: &'a [[f64; 4]],
}

pub struct DiscreteSpace {
    nodes: Vec<f64>,
    kinds: Vec<SegmentKind>,
    n_free: usize,
    quad_t: Vec<f64>,
    quad_w: Vec<f64>,
    quad_weight: Vec<f64>,
    quad_basis: Vec<[f64; 4]>,
    impulse_nodes: Vec<usize>,
    impulse_weights: Vec<f64>,
    stiffness: BandedSym,
    second: BandedSym,
    first: BandedSym,
    mass: BandedSym,
    chol: BandedChol,
    h_min: f64,
    total_time: f64,
}

impl DiscreteSpace {
    /// Mesh the partition of `spec` with `elements_per_segment` equal
    /// elements inside each segment and assemble all quadrature tables and
    /// operator matrices. `weights` must be the profile built from the same
    /// spec.
    pub fn build(
        spec: &ProblemSpec,
        weights: &WeightProfile,
        elements_per_segment: usize,
    ) -> Result<Self, SpaceError> {
        if elements_per_segment == 0 {
            return Err(SpaceError::NoElements);
        }
        let points = spec.partition.points();
        let mut nodes = Vec::with_capacity((points.len() - 1) * elements_per_segment + 1);
        let mut kinds = Vec::new();
        nodes.push(points[0]);
        for (seg, w) in points.windows(2).enumerate() {
            let kind = if seg % 2 == 0 {
                SegmentKind::Active(seg / 2)
            } else {
                SegmentKind::Rest(seg / 2 + 1)
            };
            for e in 1..=elements_per_segment {
                // Affine combination keeps the segment endpoints exact.
                let frac = e as f64 / elements_per_segment as f64;
                nodes.push(w[0] + frac * (w[1] - w[0]));
                kinds.push(kind);
            }
            // Snap the last node of the segment to the partition point so
            // impulse lookups can compare exactly.
            *nodes.last_mut().unwrap() = w[1];
        }

        let n_nodes = nodes.len();
        let n_elems = n_nodes - 1;
        let n_free = 2 * (n_nodes - 2);

        let rule = unit_rule();
        let mut quad_t = Vec::with_capacity(n_elems * ELEM_QUAD);
        let mut quad_w = Vec::with_capacity(n_elems * ELEM_QUAD);
        let mut quad_weight = Vec::with_capacity(n_elems * ELEM_QUAD);
        let mut quad_basis = Vec::with_capacity(n_elems * ELEM_QUAD);

        let mut stiffness = BandedSym::zeros(n_free, HALF_BANDWIDTH);
        let mut second = BandedSym::zeros(n_free, HALF_BANDWIDTH);
        let mut first = BandedSym::zeros(n_free, HALF_BANDWIDTH);
        let mut mass = BandedSym::zeros(n_free, HALF_BANDWIDTH);

        for e in 0..n_elems {
            let (a, b) = (nodes[e], nodes[e + 1]);
            let l = b - a;
            let dofs = elem_dofs_for(e, n_nodes);
            let mut loc_s = [[0.0f64; 4]; 4];
            let mut loc_d2 = [[0.0f64; 4]; 4];
            let mut loc_b = [[0.0f64; 4]; 4];
            let mut loc_m = [[0.0f64; 4]; 4];
            for &(xi, wq) in rule.iter() {
                let t = a + xi * l;
                let w = wq * l;
                let ew = weights.weight(t)?;
                let (v, d, s) = shapes(xi, l);
                quad_t.push(t);
                quad_w.push(w);
                quad_weight.push(ew);
                quad_basis.push(v);
                for i in 0..4 {
                    for j in 0..=i {
                        loc_s[i][j] += w * ew * s[i] * s[j];
                        loc_d2[i][j] += w * s[i] * s[j];
                        loc_b[i][j] += w * d[i] * d[j];
                        loc_m[i][j] += w * v[i] * v[j];
                    }
                }
            }
            for i in 0..4 {
                let Some(gi) = dofs[i] else { continue };
                for j in 0..=i {
                    let Some(gj) = dofs[j] else { continue };
                    stiffness.add(gi, gj, loc_s[i][j]);
                    second.add(gi, gj, loc_d2[i][j]);
                    first.add(gi, gj, loc_b[i][j]);
                    mass.add(gi, gj, loc_m[i][j]);
                }
            }
        }

        let mut impulse_nodes = Vec::new();
        let mut impulse_weights = Vec::new();
        for tk in spec.partition.impulse_times() {
            let j = nodes
                .iter()
                .position(|&x| x == tk)
                .expect("impulse times are partition points, hence mesh nodes");
            impulse_nodes.push(j);
            impulse_weights.push(weights.weight(tk)?);
        }

        let chol = stiffness.cholesky()?;

        Ok(DiscreteSpace {
            nodes,
            kinds,
            n_free,
            quad_t,
            quad_w,
            quad_weight,
            quad_basis,
            impulse_nodes,
            impulse_weights,
            stiffness,
            second,
            first,
            mass,
            chol,
            h_min: weights.h_min(),
            total_time: spec.partition.total_time(),
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn n_elements(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    /// Minimum of H over [0, T], from the weight profile.
    pub fn h_min(&self) -> f64 {
        self.h_min
    }

    pub fn elem_kind(&self, e: usize) -> SegmentKind {
        self.kinds[e]
    }

    /// Global dof index of each of the element's four local dofs; `None` for
    /// the constrained boundary dofs.
    pub fn elem_dofs(&self, e: usize) -> [Option<usize>; 4] {
        elem_dofs_for(e, self.nodes.len())
    }

    pub fn elem_quad(&self, e: usize) -> ElemQuad<'_> {
        let r = e * ELEM_QUAD..(e + 1) * ELEM_QUAD;
        ElemQuad {
            t: &self.quad_t[r.clone()],
            w: &self.quad_w[r.clone()],
            weight: &self.quad_weight[r.clone()],
            basis: &self.quad_basis[r],
        }
    }

    pub fn n_impulses(&self) -> usize {
        self.impulse_nodes.len()
    }

    pub fn impulse_time(&self, k: usize) -> f64 {
        self.nodes[self.impulse_nodes[k]]
    }

    /// Free-dof index holding the field value at the k-th impulse node.
    /// Impulse times are interior partition points, so the dof always exists.
    pub fn impulse_value_dof(&self, k: usize) -> usize {
        2 * (self.impulse_nodes[k] - 1)
    }

    /// e^{H(t_k)} at the k-th impulse time.
    pub fn impulse_weight(&self, k: usize) -> f64 {
        self.impulse_weights[k]
    }

    pub fn stiffness(&self) -> &BandedSym {
        &self.stiffness
    }

    pub fn second(&self) -> &BandedSym {
        &self.second
    }

    pub fn first(&self) -> &BandedSym {
        &self.first
    }

    pub fn mass(&self) -> &BandedSym {
        &self.mass
    }

    /// Cholesky factor of the stiffness form.
    pub fn chol(&self) -> &BandedChol {
        &self.chol
    }

    /// Field with all dofs zero.
    pub fn zero_field(&self) -> Field<'_> {
        Field {
            space: self,
            coeffs: vec![0.0; self.n_free],
        }
    }

    pub fn field(&self, coeffs: Vec<f64>) -> Field<'_> {
        assert_eq!(coeffs.len(), self.n_free, "coefficient count mismatch");
        Field {
            space: self,
            coeffs,
        }
    }

    /// Nodal Hermite interpolant of a function given as t -> (value, slope).
    /// Boundary dofs stay constrained regardless of what `f` returns there.
    pub fn interpolate<F>(&self, mut f: F) -> Field<'_>
    where
        F: FnMut(f64) -> (f64, f64),
    {
        let mut coeffs = vec![0.0; self.n_free];
        for j in 1..self.nodes.len() - 1 {
            let (v, d) = f(self.nodes[j]);
            coeffs[2 * (j - 1)] = v;
            coeffs[2 * (j - 1) + 1] = d;
        }
        Field {
            space: self,
            coeffs,
        }
    }

    /// Verify the five embedding inequalities on seeded random fields:
    /// sup|u| and sup|u'| against the unweighted seminorm, the seminorm
    /// against e^{-H_0/2} times the weighted norm, and the two L² Poincaré
    /// bounds with constants T²/(2√2) and T/√2. These are theorems for every
    /// member of the space, so a negative margin signals an assembly bug.
    /// Margins are relative: (rhs - lhs)/rhs, worst over all trials, with the
    /// trial index recorded in the witness u slot.
    pub fn check_embeddings(&self, trials: usize, seed: u64) -> AuditReport {
        let trials = trials.max(100);
        let mut rng = Rng::new(seed);
        let t = self.total_time;
        let emb = libm::exp(-0.5 * self.h_min);
        let c_l2 = t * t / (2.0 * core::f64::consts::SQRT_2);
        let c_l2p = t / core::f64::consts::SQRT_2;

        let mut tr: [MarginTracker; 5] = Default::default();
        for trial in 0..trials {
            let coeffs: Vec<f64> = (0..self.n_free).map(|_| rng.range(-1.0, 1.0)).collect();
            let u = self.field(coeffs);
            let semi = u.norm_h2semi();
            let pairs = [
                (u.norm_inf(), semi),
                (u.norm_inf_prime(), semi),
                (semi, emb * u.norm_e()),
                (u.norm_l2(), c_l2 * semi),
                (u.norm_l2_prime(), c_l2p * semi),
            ];
            for (k, &(lhs, rhs)) in pairs.iter().enumerate() {
                let ratio = if rhs == 0.0 { 0.0 } else { lhs / rhs };
                tr[k].observe(1.0 - ratio, f64::NAN, trial as f64);
            }
        }

        let notes = [
            "sup|u| <= ||u''||_2; margin = 1 - worst ratio, witness_u = trial",
            "sup|u'| <= ||u''||_2; margin = 1 - worst ratio, witness_u = trial",
            "||u''||_2 <= e^(-H0/2) ||u||_E; margin = 1 - worst ratio, witness_u = trial",
            "||u||_2 <= T^2/(2 sqrt 2) ||u''||_2; margin = 1 - worst ratio, witness_u = trial",
            "||u'||_2 <= T/sqrt(2) ||u''||_2; margin = 1 - worst ratio, witness_u = trial",
        ];
        let ids = ["sup_u", "sup_du", "semi_vs_weighted", "l2_u", "l2_du"];
        let mut entries = Vec::new();
        for ((tr, id), note) in tr.into_iter().zip(ids).zip(notes) {
            entries.push(tr.into_entry(id, note, true));
        }
        AuditReport::from_entries(entries)
    }
}

fn elem_dofs_for(e: usize, n_nodes: usize) -> [Option<usize>; 4] {
    let node_dofs = |j: usize| -> [Option<usize>; 2] {
        if j == 0 || j == n_nodes - 1 {
            [None, None]
        } else {
            [Some(2 * (j - 1)), Some(2 * (j - 1) + 1)]
        }
    };
    let [v0, d0] = node_dofs(e);
    let [v1, d1] = node_dofs(e + 1);
    [v0, d0, v1, d1]
}

/// A member of the discrete space: coefficients over the free dofs.
#[derive(Clone)]
pub struct Field<'a> {
    space: &'a DiscreteSpace,
    coeffs: Vec<f64>,
}

impl core::fmt::Debug for Field<'_> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Field").field("coeffs", &self.coeffs).finish()
    }
}

impl<'a> Field<'a> {
    pub fn space(&self) -> &'a DiscreteSpace {
        self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    fn elem_of(&self, t: f64) -> usize {
        let nodes = &self.space.nodes;
        let e = nodes.partition_point(|&x| x <= t);
        e.saturating_sub(1).min(nodes.len() - 2)
    }

    fn local(&self, e: usize) -> ([f64; 4], f64, f64) {
        let dofs = self.space.elem_dofs(e);
        let mut c = [0.0f64; 4];
        for (k, d) in dofs.iter().enumerate() {
            if let Some(i) = d {
                c[k] = self.coeffs[*i];
            }
        }
        let a = self.space.nodes[e];
        let l = self.space.nodes[e + 1] - a;
        (c, a, l)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let e = self.elem_of(t);
        let (c, a, l) = self.local(e);
        let (v, _, _) = shapes((t - a) / l, l);
        c[0] * v[0] + c[1] * v[1] + c[2] * v[2] + c[3] * v[3]
    }

    pub fn deriv(&self, t: f64) -> f64 {
        let e = self.elem_of(t);
        let (c, a, l) = self.local(e);
        let (_, d, _) = shapes((t - a) / l, l);
        c[0] * d[0] + c[1] * d[1] + c[2] * d[2] + c[3] * d[3]
    }

    /// u'' just inside the element containing t (one-sided at nodes).
    pub fn second_deriv(&self, t: f64) -> f64 {
        let e = self.elem_of(t);
        let (c, a, l) = self.local(e);
        let (_, _, s) = shapes((t - a) / l, l);
        c[0] * s[0] + c[1] * s[1] + c[2] * s[2] + c[3] * s[3]
    }

    pub fn norm_e(&self) -> f64 {
        libm::sqrt(
            self.space
                .stiffness
                .quadratic_form(&self.coeffs, &self.coeffs)
                .max(0.0),
        )
    }

    pub fn norm_h2semi(&self) -> f64 {
        libm::sqrt(
            self.space
                .second
                .quadratic_form(&self.coeffs, &self.coeffs)
                .max(0.0),
        )
    }

    pub fn norm_l2(&self) -> f64 {
        libm::sqrt(
            self.space
                .mass
                .quadratic_form(&self.coeffs, &self.coeffs)
                .max(0.0),
        )
    }

    pub fn norm_l2_prime(&self) -> f64 {
        libm::sqrt(
            self.space
                .first
                .quadratic_form(&self.coeffs, &self.coeffs)
                .max(0.0),
        )
    }

    /// Monomial coefficients of the element cubic in the reference
    /// coordinate: u(xi) = k0 + k1 xi + k2 xi² + k3 xi³.
    fn elem_monomial(&self, e: usize) -> [f64; 4] {
        let (c, _, l) = self.local(e);
        let (vl, dl, vr, dr) = (c[0], l * c[1], c[2], l * c[3]);
        [
            vl,
            dl,
            -3.0 * vl - 2.0 * dl + 3.0 * vr - dr,
            2.0 * vl + dl - 2.0 * vr + dr,
        ]
    }

    /// sup|u| over [0, T]: exact cubic extrema per element plus a dense
    /// sample sweep as a safety net.
    pub fn norm_inf(&self) -> f64 {
        let mut best = 0.0f64;
        for e in 0..self.space.n_elements() {
            let [k0, k1, k2, k3] = self.elem_monomial(e);
            let p = |x: f64| k0 + x * (k1 + x * (k2 + x * k3));
            best = best.max(p(0.0).abs()).max(p(1.0).abs());
            // Roots of u'(xi) = k1 + 2 k2 xi + 3 k3 xi².
            for x in quadratic_roots(3.0 * k3, 2.0 * k2, k1) {
                if x > 0.0 && x < 1.0 {
                    best = best.max(p(x).abs());
                }
            }
            for s in 1..33 {
                best = best.max(p(s as f64 / 33.0).abs());
            }
        }
        best
    }

    /// sup|u'| over [0, T]; u' is a quadratic per element, so its extremum
    /// is at an endpoint or the vertex.
    pub fn norm_inf_prime(&self) -> f64 {
        let mut best = 0.0f64;
        for e in 0..self.space.n_elements() {
            let [_, k1, k2, k3] = self.elem_monomial(e);
            let l = self.space.nodes[e + 1] - self.space.nodes[e];
            let q = |x: f64| (k1 + x * (2.0 * k2 + x * 3.0 * k3)) / l;
            best = best.max(q(0.0).abs()).max(q(1.0).abs());
            if k3 != 0.0 {
                let x = -k2 / (3.0 * k3);
                if x > 0.0 && x < 1.0 {
                    best = best.max(q(x).abs());
                }
            }
            for s in 1..33 {
                best = best.max(q(s as f64 / 33.0).abs());
            }
        }
        best
    }

    /// Uniform samples of (t, u, u') with `per_element` subdivisions per
    /// element; includes every node once.
    pub fn sample(&self, per_element: usize) -> Vec<(f64, f64, f64)> {
        let per = per_element.max(1);
        let mut rows = Vec::with_capacity(self.space.n_elements() * per + 1);
        for e in 0..self.space.n_elements() {
            let (c, a, l) = self.local(e);
            let lo = if e == 0 { 0 } else { 1 };
            for s in lo..=per {
                let xi = s as f64 / per as f64;
                let (v, d, _) = shapes(xi, l);
                rows.push((
                    a + xi * l,
                    c[0] * v[0] + c[1] * v[1] + c[2] * v[2] + c[3] * v[3],
                    c[0] * d[0] + c[1] * d[1] + c[2] * d[2] + c[3] * d[3],
                ));
            }
        }
        rows
    }
}

/// Real roots of a x² + b x + c, degenerating gracefully to the linear case.
fn quadratic_roots(a: f64, b: f64, c: f64) -> impl Iterator<Item = f64> {
    let mut out = [f64::NAN; 2];
    if a == 0.0 {
        if b != 0.0 {
            out[0] = -c / b;
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            // Citardauq pairing avoids cancellation in the small root.
            let q = -0.5 * (b + sign_of(b) * libm::sqrt(disc));
            out[0] = q / a;
            if q != 0.0 {
                out[1] = c / q;
            } else {
                out[1] = 0.0;
            }
        }
    }
    out.into_iter().filter(|x| x.is_finite())
}

fn sign_of(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}
