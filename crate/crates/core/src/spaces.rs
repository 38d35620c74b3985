//! Hierarchical H(div) bases on the master elements.
//!
//! Every vector shape function is a constant direction times a hierarchical
//! scalar. Edge functions carry a normal trace equal to a 1D hierarchical
//! function on their own edge and vanish in normal component on the other
//! edges; internal functions have zero normal trace on the whole boundary.
//! The enriched space of order `(k, n)` keeps the edge functions of trace
//! degree `<= k` and the internal functions of the order-`k+n` space.

use crate::error::{Error, Result};
use crate::mesh::Shape;
use crate::poly;
use crate::quadrature::{gauss_square, gauss_triangle, QuadRule};
use nalgebra::{DMatrix, Point2, SymmetricEigen, Vector2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    RT,
    BDM,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::RT => "RT",
            Family::BDM => "BDM",
        }
    }

    pub fn shape(self) -> Shape {
        match self {
            Family::RT => Shape::Quadrilateral,
            Family::BDM => Shape::Triangle,
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "RT" | "rt" => Ok(Family::RT),
            "BDM" | "bdm" => Ok(Family::BDM),
            _ => Err(Error::Study(format!("unknown space family `{s}`"))),
        }
    }
}

/// Flux space `V_k^{n+}` with potential space `U_{k+n}`; `n = 0` is the
/// original `RT_k` / `BDM_k` pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SpaceConfig {
    pub family: Family,
    pub k: usize,
    pub n: usize,
}

impl SpaceConfig {
    pub fn new(family: Family, k: usize, n: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidConfig("edge degree k must be >= 1".into()));
        }
        if k + n > 12 {
            return Err(Error::InvalidConfig(format!(
                "order k + n = {} is above the supported 12",
                k + n
            )));
        }
        Ok(SpaceConfig { family, k, n })
    }

    pub fn shape(&self) -> Shape {
        self.family.shape()
    }

    /// Order `k + n` of the internal functions and the potential space.
    pub fn order(&self) -> usize {
        self.k + self.n
    }

    pub fn n_edges(&self) -> usize {
        self.shape().n_vertices()
    }

    pub fn n_edge_fns(&self) -> usize {
        self.n_edges() * (self.k + 1)
    }

    pub fn n_internal_fns(&self) -> usize {
        let m = self.order();
        match self.family {
            Family::RT => 2 * m * (m + 1),
            Family::BDM => (m + 1) * (m - 1),
        }
    }

    pub fn n_potential_fns(&self) -> usize {
        let m = self.order();
        match self.family {
            Family::RT => (m + 1) * (m + 1),
            Family::BDM => m * (m + 1) / 2,
        }
    }
}

/// Master-element edge `l`: start point and `dx̂/ds` for `s` in `[-1,1]`,
/// counterclockwise.
pub fn master_edge(shape: Shape, l: usize) -> (Point2<f64>, Vector2<f64>) {
    let v = master_vertices(shape);
    let nv = v.len();
    let (a, b) = (v[l], v[(l + 1) % nv]);
    (Point2::from((a.coords + b.coords) * 0.5), (b - a) * 0.5)
}

pub fn master_vertices(shape: Shape) -> Vec<Point2<f64>> {
    match shape {
        Shape::Triangle => vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        ],
        Shape::Quadrilateral => vec![
            Point2::new(-1.0, -1.0),
            Point2::new(1.0, -1.0),
            Point2::new(1.0, 1.0),
            Point2::new(-1.0, 1.0),
        ],
    }
}

/// Outward normal of master edge `l` scaled by `ds_hat/ds`, so that
/// `∫_ê v̂·n̂ dŝ = ∫_{-1}^{1} v̂·ñ ds`.
pub fn master_edge_normal(shape: Shape, l: usize) -> Vector2<f64> {
    let (_, t) = master_edge(shape, l);
    Vector2::new(t.y, -t.x)
}

pub fn master_edge_point(shape: Shape, l: usize, s: f64) -> Point2<f64> {
    let (mid, t) = master_edge(shape, l);
    mid + t * s
}

pub fn master_rule(shape: Shape, degree: usize) -> Result<QuadRule> {
    match shape {
        Shape::Triangle => gauss_triangle(degree),
        Shape::Quadrilateral => gauss_square(degree),
    }
}

/// One member of the 1D hierarchical `H^1` basis on `[-1,1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Hierarchical1d {
    pub index: usize,
}

impl Hierarchical1d {
    pub fn eval(&self, s: f64) -> f64 {
        poly::hierarchical_1d(self.index, s).0
    }

    pub fn degree(&self) -> usize {
        poly::hierarchical_degree(self.index)
    }
}

/// The two vertex functions followed by `k - 1` bubbles of degree `2..=k`.
pub fn scalar_hierarchical_1d(k: usize) -> Vec<Hierarchical1d> {
    (0..=k.max(1))
        .map(|index| Hierarchical1d { index })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FnClass {
    Edge { edge: usize, trace: usize },
    Internal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    SquareEdge {
        edge: usize,
        trace: usize,
    },
    /// `ℓ_a(x̂) P_b(ŷ)` in x̂ (component 0) or `P_b(x̂) ℓ_a(ŷ)` in ŷ.
    SquareInternal {
        component: usize,
        a: usize,
        b: usize,
    },
    TriEdge {
        edge: usize,
        trace: usize,
    },
    /// `λ_l λ_{l+1} t_l L_a(x̂) L_b(ŷ)` with `t_l` the tangent of edge `l`.
    TriInternal {
        edge: usize,
        a: usize,
        b: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeFn {
    pub id: usize,
    pub class: FnClass,
    pub degree: usize,
    kind: Kind,
}

impl ShapeFn {
    /// Master value and master divergence at `x̂`.
    pub fn eval(&self, p: &Point2<f64>) -> (Vector2<f64>, f64) {
        match self.kind {
            Kind::SquareEdge { edge, trace } => square_edge(edge, trace, p),
            Kind::SquareInternal { component, a, b } => square_internal(component, a, b, p),
            Kind::TriEdge { edge, trace } => tri_edge(edge, trace, p),
            Kind::TriInternal { edge, a, b } => tri_internal(edge, a, b, p),
        }
    }

    pub fn is_internal(&self) -> bool {
        matches!(self.class, FnClass::Internal)
    }
}

fn square_edge(edge: usize, j: usize, p: &Point2<f64>) -> (Vector2<f64>, f64) {
    let (x, y) = (p.x, p.y);
    match edge {
        0 => {
            let (f, _) = poly::hierarchical_1d(j, x);
            (Vector2::new(0.0, -0.5 * (1.0 - y) * f), 0.5 * f)
        }
        1 => {
            let (f, _) = poly::hierarchical_1d(j, y);
            (Vector2::new(0.5 * (1.0 + x) * f, 0.0), 0.5 * f)
        }
        2 => {
            let (f, _) = poly::hierarchical_1d(j, -x);
            (Vector2::new(0.0, 0.5 * (1.0 + y) * f), 0.5 * f)
        }
        _ => {
            let (f, _) = poly::hierarchical_1d(j, -y);
            (Vector2::new(-0.5 * (1.0 - x) * f, 0.0), 0.5 * f)
        }
    }
}

fn square_internal(component: usize, a: usize, b: usize, p: &Point2<f64>) -> (Vector2<f64>, f64) {
    let (s, t) = if component == 0 {
        (p.x, p.y)
    } else {
        (p.y, p.x)
    };
    let (l, dl) = poly::bubble_1d(a, s);
    let (leg, _, _) = poly::legendre(b, t);
    let v = l * leg[b];
    let div = dl * leg[b];
    if component == 0 {
        (Vector2::new(v, 0.0), div)
    } else {
        (Vector2::new(0.0, v), div)
    }
}

fn barycentric(p: &Point2<f64>) -> [f64; 3] {
    [1.0 - p.x - p.y, p.x, p.y]
}

const BARY_GRAD: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];

fn grad(i: usize) -> Vector2<f64> {
    Vector2::new(BARY_GRAD[i][0], BARY_GRAD[i][1])
}

fn tri_edge(edge: usize, j: usize, p: &Point2<f64>) -> (Vector2<f64>, f64) {
    let verts = master_vertices(Shape::Triangle);
    let (ia, ib, ic) = (edge, (edge + 1) % 3, (edge + 2) % 3);
    let nrm = master_edge_normal(Shape::Triangle, edge);
    let lam = barycentric(p);
    match j {
        0 | 1 => {
            let iv = if j == 0 { ia } else { ib };
            let d = verts[ic] - verts[iv];
            let w = d / d.dot(&nrm);
            (w * lam[iv], grad(iv).dot(&w))
        }
        _ => {
            let w = nrm / nrm.norm_squared();
            let (ka, kb) = (lam[ia], lam[ib]);
            let (kap, dkap) = poly::bubble_kernel(j, kb - ka);
            let phi = 4.0 * ka * kb * kap;
            let gphi = (grad(ia) * kb + grad(ib) * ka) * (4.0 * kap)
                + (grad(ib) - grad(ia)) * (4.0 * ka * kb * dkap);
            (w * phi, gphi.dot(&w))
        }
    }
}

fn tri_internal(edge: usize, a: usize, b: usize, p: &Point2<f64>) -> (Vector2<f64>, f64) {
    let verts = master_vertices(Shape::Triangle);
    let (i, j) = (edge, (edge + 1) % 3);
    let t = verts[j] - verts[i];
    let lam = barycentric(p);
    let (q, qx, qy) = poly::dubiner_grad(a, b, p.x, p.y);
    let gq = Vector2::new(qx, qy);
    let bub = lam[i] * lam[j];
    let gbub = grad(i) * lam[j] + grad(j) * lam[i];
    (t * (bub * q), (gbub * q + gq * bub).dot(&t))
}

#[derive(Clone, Debug)]
pub struct HDivBasis {
    pub config: SpaceConfig,
    /// Edge functions grouped by edge (trace index ascending), then internal
    /// functions by ascending level.
    pub shape_fns: Vec<ShapeFn>,
    pub n_edge: usize,
    pub n_internal: usize,
}

fn internal_kinds(family: Family, m: usize) -> Vec<(Kind, usize)> {
    let mut out = Vec::new();
    match family {
        Family::RT => {
            for level in 1..=m {
                for component in 0..2 {
                    for a in 2..=level + 1 {
                        for b in 0..=level {
                            if (a - 1).max(b) == level {
                                out.push((Kind::SquareInternal { component, a, b }, level));
                            }
                        }
                    }
                }
            }
        }
        Family::BDM => {
            for level in 2..=m {
                let d = level - 2;
                for edge in 0..2 {
                    for a in (0..=d).rev() {
                        out.push((Kind::TriInternal { edge, a, b: d - a }, level));
                    }
                }
                // modulo the x̂ multiples, which the other two groups span
                out.push((
                    Kind::TriInternal {
                        edge: 2,
                        a: 0,
                        b: d,
                    },
                    level,
                ));
            }
        }
    }
    out
}

/// Prunes the order-`k+n` basis to edge functions of trace degree `<= k`.
pub fn build_hdiv_basis(config: SpaceConfig) -> Result<HDivBasis> {
    let basis = assemble_basis(config);
    let ratio = gram_ratio(&basis)?;
    if ratio < 1e-12 {
        return Err(Error::DependentBasis(ratio));
    }
    Ok(basis)
}

fn assemble_basis(config: SpaceConfig) -> HDivBasis {
    let m = config.order();
    let shape = config.shape();
    let mut fns = Vec::new();
    for edge in 0..shape.n_vertices() {
        for trace in 0..=m {
            let degree = poly::hierarchical_degree(trace);
            if degree > config.k {
                continue;
            }
            let kind = match shape {
                Shape::Quadrilateral => Kind::SquareEdge { edge, trace },
                Shape::Triangle => Kind::TriEdge { edge, trace },
            };
            fns.push(ShapeFn {
                id: fns.len(),
                class: FnClass::Edge { edge, trace },
                degree,
                kind,
            });
        }
    }
    let n_edge = fns.len();
    for (kind, degree) in internal_kinds(config.family, m) {
        fns.push(ShapeFn {
            id: fns.len(),
            class: FnClass::Internal,
            degree,
            kind,
        });
    }
    HDivBasis {
        config,
        n_internal: fns.len() - n_edge,
        n_edge,
        shape_fns: fns,
    }
}

/// Smallest over largest eigenvalue of the Jacobi-scaled master Gram matrix.
fn gram_ratio(basis: &HDivBasis) -> Result<f64> {
    let rule = master_rule(basis.config.shape(), 2 * basis.config.order() + 2)?;
    let g = basis.gram(&rule);
    let d: Vec<f64> = (0..g.nrows()).map(|i| g[(i, i)].sqrt()).collect();
    let scaled = DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| g[(i, j)] / (d[i] * d[j]));
    let eig = SymmetricEigen::new(scaled).eigenvalues;
    let max = eig.max();
    let min = eig.min();
    Ok(if max > 0.0 { min / max } else { 0.0 })
}

impl HDivBasis {
    pub fn len(&self) -> usize {
        self.shape_fns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shape_fns.is_empty()
    }

    pub fn shape(&self) -> Shape {
        self.config.shape()
    }

    pub fn eval(&self, p: &Point2<f64>) -> Vec<(Vector2<f64>, f64)> {
        self.shape_fns.iter().map(|f| f.eval(p)).collect()
    }

    /// Indices of the edge functions attached to local edge `l`.
    pub fn edge_fns(&self, l: usize) -> std::ops::Range<usize> {
        let per = self.config.k + 1;
        l * per..(l + 1) * per
    }

    pub fn internal_fns(&self) -> std::ops::Range<usize> {
        self.n_edge..self.len()
    }

    /// `v̂·ñ` of function `i` on master edge `l` at parameter `s`.
    pub fn normal_trace(&self, i: usize, l: usize, s: f64) -> f64 {
        let p = master_edge_point(self.shape(), l, s);
        self.shape_fns[i]
            .eval(&p)
            .0
            .dot(&master_edge_normal(self.shape(), l))
    }

    /// Master mass matrix `∫ v̂_i·v̂_j`.
    pub fn gram(&self, rule: &QuadRule) -> DMatrix<f64> {
        let n = self.len();
        let mut g = DMatrix::zeros(n, n);
        for (p, w) in rule.iter() {
            let vals = self.eval(&p);
            for i in 0..n {
                for j in 0..=i {
                    g[(i, j)] += w * vals[i].0.dot(&vals[j].0);
                }
            }
        }
        g.fill_upper_triangle_with_lower_triangle();
        g
    }

    /// Removes internal function `i` (used to build negative controls).
    pub fn without(&self, i: usize) -> HDivBasis {
        let mut b = self.clone();
        b.shape_fns.remove(i);
        for (id, f) in b.shape_fns.iter_mut().enumerate() {
            f.id = id;
        }
        if i < b.n_edge {
            b.n_edge -= 1;
        } else {
            b.n_internal -= 1;
        }
        b
    }

    /// Appends a copy of internal function `i` (negative-control helper).
    pub fn with_duplicate(&self, i: usize) -> HDivBasis {
        let mut b = self.clone();
        let mut f = b.shape_fns[i];
        f.id = b.shape_fns.len();
        b.shape_fns.push(f);
        b.n_internal += 1;
        b
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalarSpace {
    /// `Q_{m,m}` on the master square.
    Q(usize),
    /// `P_m` on the master triangle.
    P(usize),
}

/// Orthogonal scalar basis on the master element: tensor Legendre on the
/// square, Dubiner on the triangle. Member 0 is the constant.
#[derive(Clone, Debug)]
pub struct ScalarBasis {
    pub space: ScalarSpace,
    members: Vec<(usize, usize)>,
}

impl ScalarBasis {
    pub fn new(space: ScalarSpace) -> Self {
        let mut members = Vec::new();
        match space {
            ScalarSpace::Q(m) => {
                for level in 0..=m {
                    for a in 0..=level {
                        for b in 0..=level {
                            if a.max(b) == level {
                                members.push((a, b));
                            }
                        }
                    }
                }
            }
            ScalarSpace::P(m) => {
                for d in 0..=m {
                    for p in (0..=d).rev() {
                        members.push((p, d - p));
                    }
                }
            }
        }
        ScalarBasis { space, members }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn shape(&self) -> Shape {
        match self.space {
            ScalarSpace::Q(_) => Shape::Quadrilateral,
            ScalarSpace::P(_) => Shape::Triangle,
        }
    }

    pub fn degree(&self) -> usize {
        match self.space {
            ScalarSpace::Q(m) | ScalarSpace::P(m) => m,
        }
    }

    pub fn eval(&self, p: &Point2<f64>) -> Vec<f64> {
        match self.space {
            ScalarSpace::Q(m) => {
                let (lx, _, _) = poly::legendre(m, p.x);
                let (ly, _, _) = poly::legendre(m, p.y);
                self.members.iter().map(|&(a, b)| lx[a] * ly[b]).collect()
            }
            ScalarSpace::P(_) => self
                .members
                .iter()
                .map(|&(a, b)| poly::dubiner(a, b, p.x, p.y))
                .collect(),
        }
    }

    pub fn gram(&self, rule: &QuadRule) -> DMatrix<f64> {
        let n = self.len();
        let mut g = DMatrix::zeros(n, n);
        for (p, w) in rule.iter() {
            let v = self.eval(&p);
            for i in 0..n {
                for j in 0..n {
                    g[(i, j)] += w * v[i] * v[j];
                }
            }
        }
        g
    }
}

/// `Q_{k+n,k+n}` for RT, `P_{k+n-1}` for BDM.
pub fn divergence_scalar_basis(config: SpaceConfig) -> ScalarBasis {
    let m = config.order();
    match config.family {
        Family::RT => ScalarBasis::new(ScalarSpace::Q(m)),
        Family::BDM => ScalarBasis::new(ScalarSpace::P(m - 1)),
    }
}

/// Orthonormal basis (as columns) of the range of `a`: Gram-Schmidt with
/// reorthogonalization, dropping columns whose remainder falls below
/// `1e-10` of the largest column norm.
pub(crate) fn range_basis(a: DMatrix<f64>) -> DMatrix<f64> {
    let scale = a.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut q: Vec<nalgebra::DVector<f64>> = Vec::new();
    for col in a.column_iter() {
        let mut v = col.into_owned();
        for _ in 0..2 {
            for u in &q {
                let d = u.dot(&v);
                v.axpy(-d, u, 1.0);
            }
        }
        let nv = v.norm();
        if nv > 1e-10 * scale {
            q.push(v / nv);
        }
    }
    if q.is_empty() {
        return DMatrix::zeros(a.nrows(), 0);
    }
    DMatrix::from_columns(&q)
}

fn residual_outside(q: &DMatrix<f64>, f: &nalgebra::DVector<f64>) -> f64 {
    let norm = f.norm();
    let r = f - q * (q.transpose() * f);
    r.norm() / norm.max(1.0)
}

/// Largest relative least-squares residual of (a) each member divergence
/// against the scalar space and (b) each scalar member against the span of
/// the divergences.
pub fn div_exactness_residual(basis: &HDivBasis, scalars: &ScalarBasis) -> Result<f64> {
    let rule = master_rule(basis.shape(), 2 * basis.config.order() + 4)?;
    let nq = rule.len();
    let mut divs = DMatrix::zeros(nq, basis.len());
    let mut sc = DMatrix::zeros(nq, scalars.len());
    for (q, (p, w)) in rule.iter().enumerate() {
        let sw = w.sqrt();
        for (j, (_, d)) in basis.eval(&p).into_iter().enumerate() {
            divs[(q, j)] = sw * d;
        }
        for (j, s) in scalars.eval(&p).into_iter().enumerate() {
            sc[(q, j)] = sw * s;
        }
    }
    let scalar_range = range_basis(sc.clone());
    let div_range = range_basis(divs.clone());
    let mut worst: f64 = 0.0;
    for j in 0..divs.ncols() {
        let r = residual_outside(&scalar_range, &divs.column(j).into_owned());
        worst = worst.max(r);
    }
    for j in 0..sc.ncols() {
        let r = residual_outside(&div_range, &sc.column(j).into_owned());
        worst = worst.max(r);
    }
    Ok(worst)
}

pub fn check_div_exactness(config: SpaceConfig) -> Result<f64> {
    let basis = build_hdiv_basis(config)?;
    div_exactness_residual(&basis, &divergence_scalar_basis(config))
}
