//! Spatial substrate: domains, lattices, coupled fields and sphere probes.
//!
//! Lattices are supported in one and two dimensions. Points are passed as
//! slices whose length equals the domain dimension; internally a point is a
//! `[f64; 2]` with an unused second coordinate in 1-D.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::ModeDistribution;

pub type Pt = [f64; 2];

/// Tolerance on `|v| = 1` for probe directions.
pub const UNIT_TOL: f64 = 1e-12;

/// Default probe direction count.
pub const DEFAULT_DIRECTIONS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DomainSpec {
    Interval { a: f64, b: f64 },
    Ball { center: Vec<f64>, radius: f64 },
    Box { min: Vec<f64>, max: Vec<f64> },
    /// Simple polygon, counterclockwise vertices. Corners make the boundary
    /// non-smooth; results near them carry no convergence guarantee.
    Polygon2d { vertices: Vec<[f64; 2]> },
}

impl DomainSpec {
    pub fn unit_disk() -> Self {
        DomainSpec::Ball { center: vec![0.0, 0.0], radius: 1.0 }
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::Interval { .. } => 1,
            DomainSpec::Ball { center, .. } => center.len(),
            DomainSpec::Box { min, .. } => min.len(),
            DomainSpec::Polygon2d { .. } => 2,
        }
    }

    /// True for domains whose boundary is not smooth.
    pub fn has_corners(&self) -> bool {
        matches!(self, DomainSpec::Polygon2d { .. } | DomainSpec::Box { .. })
            && self.dim() > 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::DegenerateDomain(m.to_string()));
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            DomainSpec::Interval { a, b } => {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return bad("interval needs finite a < b");
                }
            }
            DomainSpec::Ball { center, radius } => {
                if !(1..=2).contains(&center.len()) {
                    return bad("lattices support dimensions 1 and 2");
                }
                if !finite(center) || !(radius.is_finite() && *radius > 0.0) {
                    return bad("ball needs a finite center and positive radius");
                }
            }
            DomainSpec::Box { min, max } => {
                if min.len() != max.len() || !(1..=2).contains(&min.len()) {
                    return bad("box corners must both have dimension 1 or 2");
                }
                if !finite(min) || !finite(max) || min.iter().zip(max).any(|(lo, hi)| lo >= hi) {
                    return bad("box needs min < max in every coordinate");
                }
            }
            DomainSpec::Polygon2d { vertices } => {
                if vertices.len() < 3 {
                    return bad("polygon needs at least 3 vertices");
                }
                if vertices.iter().any(|v| !finite(v)) {
                    return bad("polygon vertices must be finite");
                }
                if polygon_area(vertices) <= 0.0 {
                    return bad("polygon vertices must be counterclockwise with positive area");
                }
                if !polygon_is_simple(vertices) {
                    return bad("polygon is not simple");
                }
            }
        }
        Ok(())
    }

    pub fn bounds(&self) -> (Pt, Pt) {
        match self {
            DomainSpec::Interval { a, b } => ([*a, 0.0], [*b, 0.0]),
            DomainSpec::Ball { center, radius } => {
                let c = pt(center);
                let r2 = if center.len() == 2 { *radius } else { 0.0 };
                ([c[0] - radius, c[1] - r2], [c[0] + radius, c[1] + r2])
            }
            DomainSpec::Box { min, max } => (pt(min), pt(max)),
            DomainSpec::Polygon2d { vertices } => {
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for v in vertices {
                    for k in 0..2 {
                        lo[k] = lo[k].min(v[k]);
                        hi[k] = hi[k].max(v[k]);
                    }
                }
                (lo, hi)
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            DomainSpec::Interval { a, b } => b - a,
            DomainSpec::Ball { radius, .. } => 2.0 * radius,
            DomainSpec::Box { .. } => {
                let (lo, hi) = self.bounds();
                dist(lo, hi)
            }
            DomainSpec::Polygon2d { vertices } => {
                let mut d: f64 = 0.0;
                for p in vertices {
                    for q in vertices {
                        d = d.max(dist(*p, *q));
                    }
                }
                d
            }
        }
    }

    /// Positive inside, zero on the boundary, negative outside.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        self.sdist(pt(x))
    }

    pub(crate) fn sdist(&self, x: Pt) -> f64 {
        match self {
            DomainSpec::Interval { a, b } => (x[0] - a).min(b - x[0]),
            DomainSpec::Ball { center, radius } => radius - dist(x, pt(center)),
            DomainSpec::Box { min, max } => {
                let n = min.len();
                let mut margin = f64::INFINITY;
                let mut outside = 0.0;
                for k in 0..n {
                    let m = (x[k] - min[k]).min(max[k] - x[k]);
                    margin = margin.min(m);
                    if m < 0.0 {
                        outside += m * m;
                    }
                }
                if margin >= 0.0 {
                    margin
                } else {
                    -outside.sqrt()
                }
            }
            DomainSpec::Polygon2d { vertices } => {
                let n = vertices.len();
                let d = (0..n)
                    .map(|e| seg_dist(x, vertices[e], vertices[(e + 1) % n]))
                    .fold(f64::INFINITY, f64::min);
                if point_in_polygon(x, vertices) {
                    d
                } else {
                    -d
                }
            }
        }
    }

    /// First parameter `t ∈ [0, len]` at which `x + t v` reaches the boundary,
    /// for `x` in the closed domain. `None` when the segment stays inside.
    pub(crate) fn exit_param(&self, x: Pt, v: Pt, len: f64) -> Option<f64> {
        let t = match self {
            DomainSpec::Interval { a, b } => {
                if v[0] > 0.0 {
                    (b - x[0]) / v[0]
                } else if v[0] < 0.0 {
                    (a - x[0]) / v[0]
                } else {
                    f64::INFINITY
                }
            }
            DomainSpec::Ball { center, radius } => {
                let c = pt(center);
                let d = [x[0] - c[0], x[1] - c[1]];
                let b = dot(d, v);
                let vv = dot(v, v);
                let cc = dot(d, d) - radius * radius;
                let disc = (b * b - vv * cc).max(0.0);
                (-b + disc.sqrt()) / vv
            }
            DomainSpec::Box { min, max } => {
                let mut t = f64::INFINITY;
                for k in 0..min.len() {
                    if v[k] > 0.0 {
                        t = t.min((max[k] - x[k]) / v[k]);
                    } else if v[k] < 0.0 {
                        t = t.min((min[k] - x[k]) / v[k]);
                    }
                }
                t
            }
            DomainSpec::Polygon2d { vertices } => {
                let n = vertices.len();
                let mut t = f64::INFINITY;
                for e in 0..n {
                    if let Some(te) = ray_segment(x, v, vertices[e], vertices[(e + 1) % n]) {
                        t = t.min(te);
                    }
                }
                t
            }
        };
        let t = t.max(0.0);
        (t <= len).then_some(t)
    }

    /// The boundary point `x + t v`, snapped onto the boundary where the
    /// geometry allows it exactly.
    pub(crate) fn boundary_point(&self, x: Pt, v: Pt, t: f64) -> Pt {
        let p = [x[0] + t * v[0], x[1] + t * v[1]];
        match self {
            DomainSpec::Interval { a, b } => {
                if (p[0] - b).abs() <= (p[0] - a).abs() {
                    [*b, 0.0]
                } else {
                    [*a, 0.0]
                }
            }
            DomainSpec::Ball { center, radius } => {
                let c = pt(center);
                let d = dist(p, c);
                if d == 0.0 {
                    return p;
                }
                let mut q = [c[0] + radius * (p[0] - c[0]) / d, c[1] + radius * (p[1] - c[1]) / d];
                if center.len() == 1 {
                    q[1] = 0.0;
                }
                q
            }
            DomainSpec::Box { min, max } => {
                let mut q = p;
                let mut best = (f64::INFINITY, 0usize, 0.0);
                for k in 0..min.len() {
                    for bound in [min[k], max[k]] {
                        let gap = (p[k] - bound).abs();
                        if gap < best.0 {
                            best = (gap, k, bound);
                        }
                    }
                    q[k] = q[k].clamp(min[k], max[k]);
                }
                q[best.1] = best.2;
                q
            }
            DomainSpec::Polygon2d { .. } => p,
        }
    }
}

fn pt(x: &[f64]) -> Pt {
    [x[0], if x.len() > 1 { x[1] } else { 0.0 }]
}

fn dot(a: Pt, b: Pt) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn dist(a: Pt, b: Pt) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn cross(a: Pt, b: Pt) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn sub(a: Pt, b: Pt) -> Pt {
    [a[0] - b[0], a[1] - b[1]]
}

fn seg_dist(x: Pt, p: Pt, q: Pt) -> f64 {
    let d = sub(q, p);
    let len2 = dot(d, d);
    let s = if len2 > 0.0 { (dot(sub(x, p), d) / len2).clamp(0.0, 1.0) } else { 0.0 };
    dist(x, [p[0] + s * d[0], p[1] + s * d[1]])
}

fn ray_segment(x: Pt, v: Pt, p: Pt, q: Pt) -> Option<f64> {
    let e = sub(q, p);
    let denom = cross(v, e);
    if denom == 0.0 {
        return None;
    }
    let w = sub(p, x);
    let t = cross(w, e) / denom;
    let s = cross(w, v) / denom;
    let tol = 1e-12;
    (t >= -tol && (-tol..=1.0 + tol).contains(&s)).then_some(t)
}

fn polygon_area(v: &[[f64; 2]]) -> f64 {
    let n = v.len();
    0.5 * (0..n).map(|i| cross(v[i], v[(i + 1) % n])).sum::<f64>()
}

fn point_in_polygon(x: Pt, v: &[[f64; 2]]) -> bool {
    let n = v.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (pi, pj) = (v[i], v[j]);
        if (pi[1] > x[1]) != (pj[1] > x[1]) {
            let xc = pj[0] + (x[1] - pj[1]) * (pi[0] - pj[0]) / (pi[1] - pj[1]);
            if x[0] < xc {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn segments_cross(a: Pt, b: Pt, c: Pt, d: Pt) -> bool {
    let o = |p: Pt, q: Pt, r: Pt| cross(sub(q, p), sub(r, p));
    let (d1, d2, d3, d4) = (o(c, d, a), o(c, d, b), o(a, b, c), o(a, b, d));
    ((d1 > 0.0) != (d2 > 0.0)) && ((d3 > 0.0) != (d4 > 0.0)) && d1 != 0.0 && d2 != 0.0
}

fn polygon_is_simple(v: &[[f64; 2]]) -> bool {
    let n = v.len();
    for i in 0..n {
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if !adjacent && segments_cross(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Interior,
    Ghost,
}

pub(crate) const GHOST: u32 = u32::MAX;

/// Regular grid over the bounding box with interior/ghost classification.
#[derive(Debug, Clone)]
pub struct Lattice {
    spec: DomainSpec,
    dim: usize,
    h: f64,
    origin: Pt,
    shape: [usize; 2],
    boundary_distance: Vec<f64>,
    slot: Vec<u32>,
    interior: Vec<usize>,
}

impl Lattice {
    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    pub fn grid_len(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    pub fn interior_len(&self) -> usize {
        self.interior.len()
    }

    pub fn grid_point(&self, g: usize) -> Pt {
        let i = g % self.shape[0];
        let j = g / self.shape[0];
        [self.origin[0] + i as f64 * self.h, self.origin[1] + j as f64 * self.h]
    }

    /// Coordinates of the `k`-th interior node (length = dimension).
    pub fn node(&self, k: usize) -> Vec<f64> {
        self.grid_point(self.interior[k])[..self.dim].to_vec()
    }

    pub(crate) fn node_pt(&self, k: usize) -> Pt {
        self.grid_point(self.interior[k])
    }

    pub fn kind(&self, g: usize) -> NodeKind {
        if self.slot[g] == GHOST {
            NodeKind::Ghost
        } else {
            NodeKind::Interior
        }
    }

    pub fn boundary_distance(&self, g: usize) -> f64 {
        self.boundary_distance[g]
    }

    /// Interior slot of grid node `g`, if interior.
    pub fn slot(&self, g: usize) -> Option<usize> {
        (self.slot[g] != GHOST).then_some(self.slot[g] as usize)
    }

    fn tol(&self) -> f64 {
        self.h * 1e-9
    }

    /// Index of the interior node closest to `x`.
    pub fn nearest_interior(&self, x: &[f64]) -> Option<usize> {
        let p = pt(x);
        (0..self.interior.len())
            .min_by(|&a, &b| dist(self.node_pt(a), p).total_cmp(&dist(self.node_pt(b), p)))
    }

    /// Bilinear (linear in 1-D) weights for `x`. Corners that are not interior
    /// nodes contribute through the boundary point where the segment from `x`
    /// toward that corner leaves the domain.
    pub(crate) fn stencil(&self, x: Pt) -> Stencil {
        let mut st = Stencil::default();
        if self.spec.sdist(x) <= self.tol() {
            st.ghosts.push((1.0, x));
            return st;
        }
        let mut base = [0usize; 2];
        let mut frac = [0.0f64; 2];
        for k in 0..self.dim {
            let s = (x[k] - self.origin[k]) / self.h;
            let i = (s.floor().max(0.0) as usize).min(self.shape[k].saturating_sub(2));
            base[k] = i;
            frac[k] = (s - i as f64).clamp(0.0, 1.0);
        }
        let corners: &[[usize; 2]] = if self.dim == 1 {
            &[[0, 0], [1, 0]]
        } else {
            &[[0, 0], [1, 0], [0, 1], [1, 1]]
        };
        for c in corners {
            let mut w = 1.0;
            for k in 0..self.dim {
                w *= if c[k] == 1 { frac[k] } else { 1.0 - frac[k] };
            }
            if w == 0.0 {
                continue;
            }
            let g = (base[0] + c[0]) + (base[1] + c[1]) * self.shape[0];
            if self.slot[g] != GHOST {
                st.nodes.push((self.slot[g], w));
            } else {
                let corner = self.grid_point(g);
                let d = sub(corner, x);
                let len = dist(corner, x);
                let v = [d[0] / len, d[1] / len];
                let clip = match self.spec.exit_param(x, v, len) {
                    Some(t) => self.spec.boundary_point(x, v, t),
                    None => corner,
                };
                st.ghosts.push((w, clip));
            }
        }
        st
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Stencil {
    pub nodes: Vec<(u32, f64)>,
    pub ghosts: Vec<(f64, Pt)>,
}

/// Lattice of spacing `h` over the domain; interior nodes have positive
/// distance to the boundary.
pub fn build_lattice(spec: &DomainSpec, h: f64) -> Result<Lattice> {
    spec.validate()?;
    let diameter = spec.diameter();
    if !(h > 0.0 && h.is_finite() && h <= diameter / 4.0) {
        return Err(Error::SpacingTooCoarse { h, diameter });
    }
    let dim = spec.dim();
    let (lo, hi) = spec.bounds();
    let mut shape = [1usize; 2];
    for k in 0..dim {
        shape[k] = ((hi[k] - lo[k]) / h - 1e-9).ceil() as usize + 1;
    }
    let mut lattice = Lattice {
        spec: spec.clone(),
        dim,
        h,
        origin: lo,
        shape,
        boundary_distance: Vec::with_capacity(shape[0] * shape[1]),
        slot: Vec::with_capacity(shape[0] * shape[1]),
        interior: Vec::new(),
    };
    let tol = lattice.tol();
    for g in 0..shape[0] * shape[1] {
        let d = spec.sdist(lattice.grid_point(g));
        lattice.boundary_distance.push(d);
        if d > tol {
            lattice.slot.push(lattice.interior.len() as u32);
            lattice.interior.push(g);
        } else {
            lattice.slot.push(GHOST);
        }
    }
    if lattice.interior.is_empty() {
        return Err(Error::DegenerateDomain("lattice has no interior nodes".into()));
    }
    Ok(lattice)
}

/// Boundary payoff for one mode.
pub trait BoundaryFn: Send + Sync {
    fn eval(&self, x: &[f64]) -> Result<f64>;
}

impl<F> BoundaryFn for F
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(self(x))
    }
}

/// Boundary payoffs `g_1, …, g_m`.
#[derive(Clone)]
pub struct BoundaryData {
    fns: Vec<Arc<dyn BoundaryFn>>,
}

impl fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BoundaryData({} modes)", self.fns.len())
    }
}

impl BoundaryData {
    pub fn new(fns: Vec<Arc<dyn BoundaryFn>>) -> Self {
        Self { fns }
    }

    pub fn constants(values: &[f64]) -> Self {
        Self {
            fns: values
                .iter()
                .map(|&c| Arc::new(move |_: &[f64]| c) as Arc<dyn BoundaryFn>)
                .collect(),
        }
    }

    pub fn modes(&self) -> usize {
        self.fns.len()
    }

    /// `g_mode(x)`; rejects non-finite values.
    pub fn eval(&self, mode: usize, x: &[f64]) -> Result<f64> {
        let f = self
            .fns
            .get(mode)
            .ok_or(Error::ModeOutOfRange { mode, modes: self.fns.len() })?;
        let v = f.eval(x)?;
        if !v.is_finite() {
            return Err(Error::NonFiniteBoundary(x.to_vec()));
        }
        Ok(v)
    }

    pub(crate) fn eval_pt(&self, mode: usize, x: Pt, dim: usize) -> Result<f64> {
        self.eval(mode, &x[..dim])
    }

    /// `a·g_i + b` for every mode.
    pub fn affine(&self, a: f64, b: f64) -> Self {
        Self {
            fns: self
                .fns
                .iter()
                .map(|f| Arc::new(AffineMap { inner: Arc::clone(f), a, b }) as Arc<dyn BoundaryFn>)
                .collect(),
        }
    }
}

struct AffineMap {
    inner: Arc<dyn BoundaryFn>,
    a: f64,
    b: f64,
}

impl BoundaryFn for AffineMap {
    fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(self.a * self.inner.eval(x)? + self.b)
    }
}

/// Values of `m` modes on the interior nodes of a lattice.
#[derive(Debug, Clone)]
pub struct CoupledField {
    lattice: Arc<Lattice>,
    boundary: BoundaryData,
    values: Vec<Vec<f64>>,
}

impl CoupledField {
    pub fn new(lattice: Arc<Lattice>, boundary: BoundaryData, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != boundary.modes() {
            return Err(Error::FieldMismatch(format!(
                "{} value arrays for {} boundary modes",
                values.len(),
                boundary.modes()
            )));
        }
        for v in &values {
            if v.len() != lattice.interior_len() {
                return Err(Error::FieldMismatch(format!(
                    "{} values for {} interior nodes",
                    v.len(),
                    lattice.interior_len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::FieldMismatch("non-finite field value".into()));
            }
        }
        Ok(Self { lattice, boundary, values })
    }

    /// Samples `f(mode, x)` at every interior node.
    pub fn from_fn(
        lattice: Arc<Lattice>,
        boundary: BoundaryData,
        f: impl Fn(usize, &[f64]) -> f64,
    ) -> Result<Self> {
        let values = (0..boundary.modes())
            .map(|i| (0..lattice.interior_len()).map(|k| f(i, &lattice.node(k))).collect())
            .collect();
        Self::new(lattice, boundary, values)
    }

    pub fn constant(lattice: Arc<Lattice>, boundary: BoundaryData, per_mode: &[f64]) -> Result<Self> {
        Self::from_fn(lattice, boundary, |i, _| per_mode[i])
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn boundary(&self) -> &BoundaryData {
        &self.boundary
    }

    pub fn modes(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self, mode: usize) -> &[f64] {
        &self.values[mode]
    }

    pub fn all_values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub(crate) fn with_values(&self, values: Vec<Vec<f64>>) -> Self {
        Self { lattice: Arc::clone(&self.lattice), boundary: self.boundary.clone(), values }
    }

    /// Value at interior node `k`.
    pub fn at_node(&self, mode: usize, k: usize) -> f64 {
        self.values[mode][k]
    }

    pub(crate) fn eval_stencil(&self, mode: usize, st: &Stencil) -> Result<f64> {
        let vals = &self.values[mode];
        let mut acc = 0.0;
        for &(slot, w) in &st.nodes {
            acc += w * vals[slot as usize];
        }
        for &(w, p) in &st.ghosts {
            acc += w * self.boundary.eval_pt(mode, p, self.lattice.dim)?;
        }
        Ok(acc)
    }

    pub(crate) fn interp_pt(&self, mode: usize, x: Pt) -> Result<f64> {
        let st = self.lattice.stencil(x);
        self.eval_stencil(mode, &st)
    }
}

/// Interpolated value of mode `mode` at `x ∈ Ū`.
pub fn interpolate(field: &CoupledField, mode: usize, x: &[f64]) -> Result<f64> {
    let lat = &field.lattice;
    if x.len() != lat.dim {
        return Err(Error::DimensionMismatch { expected: lat.dim, got: x.len() });
    }
    if mode >= field.modes() {
        return Err(Error::ModeOutOfRange { mode, modes: field.modes() });
    }
    let p = pt(x);
    if lat.spec.sdist(p) < -lat.tol() {
        return Err(Error::OutOfDomain(x.to_vec()));
    }
    field.interp_pt(mode, p)
}

/// Moves from interior `x` by `eps` along unit `v`, stopping at the first
/// boundary crossing. The flag reports whether the boundary was reached.
pub fn boundary_hit(spec: &DomainSpec, x: &[f64], v: &[f64], eps: f64) -> Result<(Vec<f64>, bool)> {
    let dim = spec.dim();
    if x.len() != dim || v.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: x.len().min(v.len()) });
    }
    let (p, hit) = hit_pt(spec, pt(x), pt(v), eps)?;
    Ok((p[..dim].to_vec(), hit))
}

pub(crate) fn hit_pt(spec: &DomainSpec, x: Pt, v: Pt, eps: f64) -> Result<(Pt, bool)> {
    if spec.sdist(x) <= 0.0 {
        return Err(Error::NotInterior(x[..spec.dim()].to_vec()));
    }
    let norm = dot(v, v).sqrt();
    if (norm - 1.0).abs() > UNIT_TOL {
        return Err(Error::NotUnit(norm));
    }
    Ok(match spec.exit_param(x, v, eps) {
        Some(t) => (spec.boundary_point(x, v, t), true),
        None => ([x[0] + eps * v[0], x[1] + eps * v[1]], false),
    })
}

/// Unit probe directions: `±1` in 1-D, otherwise `count` angles
/// `2π (d + ½) / count`.
pub fn probe_directions(dim: usize, count: usize) -> Vec<Pt> {
    if dim == 1 {
        return vec![[1.0, 0.0], [-1.0, 0.0]];
    }
    (0..count)
        .map(|d| {
            let theta = 2.0 * PI * (d as f64 + 0.5) / count as f64;
            [theta.cos(), theta.sin()]
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeResult {
    pub max: f64,
    pub min: f64,
    pub argmax: usize,
    pub argmin: usize,
}

/// Extremes of `Σ_k ρ_k u_k` over the probe points at distance `eps`.
/// Ties go to the lowest direction index.
pub fn sphere_probe(
    field: &CoupledField,
    weights: &ModeDistribution,
    x: &[f64],
    eps: f64,
    directions: usize,
) -> Result<ProbeResult> {
    let dirs = probe_directions(field.lattice.dim, directions);
    probe_with(field, &weights.probabilities, pt(x), eps, &dirs)
}

pub(crate) fn probe_with(
    field: &CoupledField,
    rho: &[f64],
    x: Pt,
    eps: f64,
    dirs: &[Pt],
) -> Result<ProbeResult> {
    if rho.len() != field.modes() {
        return Err(Error::FieldMismatch(format!(
            "{} weights for {} modes",
            rho.len(),
            field.modes()
        )));
    }
    if dirs.len() < 2 {
        return Err(Error::InvalidProblem("need at least two probe directions".into()));
    }
    let lat = &field.lattice;
    let mut out = ProbeResult { max: f64::NEG_INFINITY, min: f64::INFINITY, argmax: 0, argmin: 0 };
    for (d, v) in dirs.iter().enumerate() {
        let (y, on_boundary) = hit_pt(&lat.spec, x, *v, eps)?;
        let mut val = 0.0;
        if on_boundary {
            for (k, &r) in rho.iter().enumerate() {
                if r != 0.0 {
                    val += r * field.boundary.eval_pt(k, y, lat.dim)?;
                }
            }
        } else {
            let st = lat.stencil(y);
            for (k, &r) in rho.iter().enumerate() {
                if r != 0.0 {
                    val += r * field.eval_stencil(k, &st)?;
                }
            }
        }
        if val > out.max {
            out.max = val;
            out.argmax = d;
        }
        if val < out.min {
            out.min = val;
            out.argmin = d;
        }
    }
    Ok(out)
}

impl crate::exact::ModeFunction for CoupledField {
    fn dim(&self) -> usize {
        self.lattice.dim
    }
    fn modes(&self) -> usize {
        self.values.len()
    }
    fn value(&self, mode: usize, x: &[f64]) -> Result<f64> {
        interpolate(self, mode, x)
    }
    fn margin(&self, x: &[f64]) -> f64 {
        self.lattice.spec.signed_distance(x)
    }
    fn resolution(&self) -> Option<f64> {
        Some(self.lattice.h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn interior_coords(l: &Lattice) -> Vec<Vec<f64>> {
        (0..l.interior_len()).map(|k| l.node(k)).collect()
    }

    #[test]
    fn interval_lattice() {
        let l = build_lattice(&DomainSpec::Interval { a: -1.0, b: 1.0 }, 0.5).unwrap();
        assert_eq!(interior_coords(&l), vec![vec![-0.5], vec![0.0], vec![0.5]]);
    }

    #[test]
    fn unit_disk_lattice_excludes_boundary_nodes() {
        let l = build_lattice(&DomainSpec::unit_disk(), 0.5).unwrap();
        // brute-force enumeration of the 5x5 grid on [-1,1]^2 with |x| < 1
        let mut expect = 0;
        for i in -2i32..=2 {
            for j in -2i32..=2 {
                let (x, y) = (i as f64 * 0.5, j as f64 * 0.5);
                if (x * x + y * y).sqrt() < 1.0 {
                    expect += 1;
                }
            }
        }
        assert_eq!(expect, 9);
        assert_eq!(l.interior_len(), 9);
    }

    #[test]
    fn box_lattice() {
        let spec = DomainSpec::Box { min: vec![0.0, 0.0], max: vec![1.0, 1.0] };
        let l = build_lattice(&spec, 0.25).unwrap();
        assert_eq!(l.interior_len(), 9);
    }

    #[test]
    fn lattice_errors() {
        assert!(matches!(
            build_lattice(&DomainSpec::Interval { a: 1.0, b: -1.0 }, 0.1),
            Err(Error::DegenerateDomain(_))
        ));
        assert!(matches!(
            build_lattice(&DomainSpec::unit_disk(), 0.6),
            Err(Error::SpacingTooCoarse { .. })
        ));
        let bowtie = DomainSpec::Polygon2d {
            vertices: vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]],
        };
        assert!(bowtie.validate().is_err());
    }

    #[test]
    fn interpolation_examples() {
        let spec = DomainSpec::Box { min: vec![0.0, 0.0], max: vec![1.0, 1.0] };
        let lat = Arc::new(build_lattice(&spec, 0.1).unwrap());
        let f = CoupledField::constant(lat.clone(), BoundaryData::constants(&[7.0]), &[7.0]).unwrap();
        for x in [[0.01, 0.5], [0.33, 0.71], [0.999, 0.001]] {
            assert!((interpolate(&f, 0, &x).unwrap() - 7.0).abs() < 1e-12);
        }

        let g = BoundaryData::new(vec![Arc::new(|x: &[f64]| x[0])]);
        let f = CoupledField::from_fn(lat, g, |_, x| x[0]).unwrap();
        assert!((interpolate(&f, 0, &[0.3, 0.6]).unwrap() - 0.3).abs() < 1e-12);
        assert!(matches!(interpolate(&f, 0, &[1.2, 0.5]), Err(Error::OutOfDomain(_))));
    }

    #[test]
    fn interpolation_of_norm_on_disk() {
        let lat = Arc::new(build_lattice(&DomainSpec::unit_disk(), 0.05).unwrap());
        let g = BoundaryData::new(vec![Arc::new(|x: &[f64]| (x[0] * x[0] + x[1] * x[1]).sqrt())]);
        let f = CoupledField::from_fn(lat, g, |_, x| (x[0] * x[0] + x[1] * x[1]).sqrt()).unwrap();
        let exact = (0.32f64 * 0.32 + 0.11 * 0.11).sqrt();
        assert!((exact - 0.33838).abs() < 1e-5);
        let v = interpolate(&f, 0, &[0.32, 0.11]).unwrap();
        assert!((v - exact).abs() <= 2.0 * 0.05 * 0.05, "{v} vs {exact}");
    }

    #[test]
    fn interpolation_near_boundary_uses_boundary_data() {
        let lat = Arc::new(build_lattice(&DomainSpec::unit_disk(), 0.1).unwrap());
        let f = CoupledField::constant(lat, BoundaryData::constants(&[3.0]), &[3.0]).unwrap();
        assert!((interpolate(&f, 0, &[0.0, 0.995]).unwrap() - 3.0).abs() < 1e-12);
        assert!((interpolate(&f, 0, &[1.0, 0.0]).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn affine_exact_on_interior_cells() {
        let spec = DomainSpec::Polygon2d {
            vertices: vec![[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 2.0], [0.0, 1.0]],
        };
        let lat = Arc::new(build_lattice(&spec, 0.1).unwrap());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (a, b, c): (f64, f64, f64) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..1.0));
            let g = BoundaryData::new(vec![Arc::new(move |x: &[f64]| a * x[0] + b * x[1] + c)]);
            let f = CoupledField::from_fn(lat.clone(), g, |_, x| a * x[0] + b * x[1] + c).unwrap();
            for _ in 0..50 {
                let x = [rng.gen_range(0.3..1.7), rng.gen_range(0.3..0.9)];
                let v = interpolate(&f, 0, &x).unwrap();
                assert!((v - (a * x[0] + b * x[1] + c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn boundary_hit_examples() {
        let disk = DomainSpec::unit_disk();
        let (p, hit) = boundary_hit(&disk, &[0.0, 0.0], &[1.0, 0.0], 0.2).unwrap();
        assert!(!hit && (p[0] - 0.2).abs() < 1e-15 && p[1] == 0.0);
        let (p, hit) = boundary_hit(&disk, &[0.9, 0.0], &[1.0, 0.0], 0.2).unwrap();
        assert!(hit && (p[0] - 1.0).abs() < 1e-15 && p[1].abs() < 1e-15);
        let (p, hit) = boundary_hit(&disk, &[0.9, 0.0], &[0.0, 1.0], 0.2).unwrap();
        assert!(!hit && (p[0] - 0.9).abs() < 1e-15 && (p[1] - 0.2).abs() < 1e-15);
        assert!(((0.9f64 * 0.9 + 0.04).sqrt() - 0.921954).abs() < 1e-6);

        assert!(matches!(boundary_hit(&disk, &[1.0, 0.0], &[1.0, 0.0], 0.1), Err(Error::NotInterior(_))));
        assert!(matches!(boundary_hit(&disk, &[0.0, 0.0], &[1.0, 1.0], 0.1), Err(Error::NotUnit(_))));

        let tri = DomainSpec::Polygon2d { vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]] };
        let (p, hit) = boundary_hit(&tri, &[0.2, 0.2], &[0.0, -1.0], 0.5).unwrap();
        assert!(hit && (p[0] - 0.2).abs() < 1e-12 && p[1].abs() < 1e-12);
    }

    #[test]
    fn boundary_hit_stays_in_closed_ball() {
        let specs = [
            DomainSpec::unit_disk(),
            DomainSpec::Box { min: vec![-1.0, 0.0], max: vec![1.0, 0.5] },
            DomainSpec::Polygon2d { vertices: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.5, 0.4], [0.0, 1.0]] },
        ];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for spec in &specs {
            let (lo, hi) = spec.bounds();
            let mut tried = 0;
            while tried < 500 {
                let x = [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1])];
                if spec.sdist(x) <= 0.0 {
                    continue;
                }
                tried += 1;
                let th: f64 = rng.gen_range(0.0..2.0 * PI);
                let v = [th.cos(), th.sin()];
                let eps = rng.gen_range(0.01..0.6);
                let (p, _) = boundary_hit(spec, &x, &v, eps).unwrap();
                assert!(dist(pt(&p), x) <= eps + 1e-12);
                assert!(spec.sdist(pt(&p)) >= -1e-12, "{spec:?} {x:?} -> {p:?}");
            }
        }
    }

    #[test]
    fn sphere_probe_examples() {
        let lat = Arc::new(build_lattice(&DomainSpec::unit_disk(), 0.025).unwrap());
        let c = CoupledField::constant(lat.clone(), BoundaryData::constants(&[2.5, 2.5]), &[2.5, 2.5]).unwrap();
        let w = ModeDistribution { probabilities: vec![0.3, 0.7], time: 0.0 };
        let r = sphere_probe(&c, &w, &[0.1, 0.2], 0.1, 64).unwrap();
        assert!((r.max - 2.5).abs() < 1e-12 && (r.min - 2.5).abs() < 1e-12);

        let g = BoundaryData::new(vec![Arc::new(|x: &[f64]| x[0]), Arc::new(|x: &[f64]| x[0])]);
        let f = CoupledField::from_fn(lat, g, |_, x| x[0]).unwrap();
        let w = ModeDistribution::point_mass(2, 0);
        let r = sphere_probe(&f, &w, &[0.0, 0.0], 0.1, 64).unwrap();
        let bound = 2.0 * (1.0 - (PI / 64.0).cos()) * 0.1 + 1e-12;
        assert!((r.max - 0.1).abs() <= bound && (r.min + 0.1).abs() <= bound);
    }

    #[test]
    fn sphere_probe_one_dimensional() {
        let lat = Arc::new(build_lattice(&DomainSpec::Interval { a: -1.0, b: 1.0 }, 0.1).unwrap());
        let g = BoundaryData::constants(&[0.0]);
        let f = CoupledField::from_fn(lat, g, |_, x| (3.0 * x[0]).sin()).unwrap();
        let w = ModeDistribution::point_mass(1, 0);
        let r = sphere_probe(&f, &w, &[0.0], 0.1, 2).unwrap();
        let (a, b) = ((0.3f64).sin(), (-0.3f64).sin());
        assert!((r.max - a.max(b)).abs() < 1e-12 && (r.min - a.min(b)).abs() < 1e-12);
        assert_eq!((r.argmax, r.argmin), (0, 1));
    }
}
