//! Commuting projections onto the enriched flux space and its potential
//! space.
//!
//! The flux projection splits into an edge part, fixed by matching normal
//! trace moments against `P_k` on each edge, and an internal part, fixed by
//! divergence moments against all internal functions plus value moments
//! against the divergence-free internal functions.

use crate::error::{Error, Result};
use crate::geometry::GeoMap;
use crate::quadrature::{gauss_interval, LineRule, QuadRule};
use crate::spaces::{
    build_hdiv_basis, divergence_scalar_basis, master_edge_normal, master_edge_point, master_rule,
    HDivBasis, ScalarBasis, SpaceConfig,
};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Point2, SymmetricEigen, Vector2, LU};

const NULLSPACE_TOL: f64 = 1e-10;
const UNIQUENESS_TOL: f64 = 1e-8;
/// Extra quadrature degrees for non-polynomial data.
pub const DATA_BUMP: usize = 4;

/// A vector field in physical coordinates with its divergence.
pub trait FluxField: Sync {
    fn value(&self, x: &Point2<f64>) -> Vector2<f64>;
    fn divergence(&self, x: &Point2<f64>) -> f64;
}

pub trait ScalarField: Sync {
    fn value(&self, x: &Point2<f64>) -> f64;
}

/// Flux field from a pair of closures.
pub struct FnFlux<V, D> {
    pub value: V,
    pub divergence: D,
}

impl<V, D> FluxField for FnFlux<V, D>
where
    V: Fn(&Point2<f64>) -> Vector2<f64> + Sync,
    D: Fn(&Point2<f64>) -> f64 + Sync,
{
    fn value(&self, x: &Point2<f64>) -> Vector2<f64> {
        (self.value)(x)
    }

    fn divergence(&self, x: &Point2<f64>) -> f64 {
        (self.divergence)(x)
    }
}

impl<F> ScalarField for F
where
    F: Fn(&Point2<f64>) -> f64 + Sync,
{
    fn value(&self, x: &Point2<f64>) -> f64 {
        self(x)
    }
}

/// Master field `q̂ = J DF^{-1} q∘F` and its master divergence `J (∇·q)∘F`.
pub fn pullback(q: &dyn FluxField, map: &GeoMap, xh: &Point2<f64>) -> Result<(Vector2<f64>, f64)> {
    let jac = map.jacobian(xh)?;
    let x = map.eval(xh);
    Ok((jac.piola_pull(&q.value(&x)), jac.det * q.divergence(&x)))
}

#[derive(Clone, Debug)]
pub struct ProjectionSystem {
    pub config: SpaceConfig,
    pub basis: HDivBasis,
    scalars: ScalarBasis,
    edge_rule: LineRule,
    vol_rule: QuadRule,
    /// Basis values and master divergences at `vol_rule` points.
    vol_vals: Vec<Vec<(Vector2<f64>, f64)>>,
    /// Normal traces of edge `l` functions at `edge_rule` points.
    edge_traces: Vec<Vec<Vec<f64>>>,
    edge_block: Vec<Option<Cholesky<f64, Dyn>>>,
    /// Coefficient vectors (columns) over the internal functions spanning a
    /// complement of the divergence-free subspace, and the subspace itself.
    range: DMatrix<f64>,
    nullspace: DMatrix<f64>,
    internal_block: Option<LU<f64, Dyn, Dyn>>,
}

impl ProjectionSystem {
    pub fn new(config: SpaceConfig) -> Result<Self> {
        Self::from_basis(build_hdiv_basis(config)?)
    }

    /// Builds and factors the constraint blocks. Singular blocks are kept as
    /// `None` so that [`uniqueness_probe`] can still inspect the system.
    pub fn from_basis(basis: HDivBasis) -> Result<Self> {
        let config = basis.config;
        let shape = basis.shape();
        let m = config.order();
        let edge_rule = gauss_interval(2 * m + 2 + DATA_BUMP)?;
        let vol_rule = master_rule(shape, 2 * m + 2 + DATA_BUMP)?;
        let vol_vals: Vec<_> = vol_rule.points.iter().map(|p| basis.eval(p)).collect();

        let n_edges = config.n_edges();
        let mut edge_traces = Vec::with_capacity(n_edges);
        let mut edge_block = Vec::with_capacity(n_edges);
        for l in 0..n_edges {
            let fns = basis.edge_fns(l);
            let traces: Vec<Vec<f64>> = fns
                .clone()
                .map(|i| {
                    edge_rule
                        .points
                        .iter()
                        .map(|&s| basis.normal_trace(i, l, s))
                        .collect()
                })
                .collect();
            let nf = traces.len();
            let g = DMatrix::from_fn(nf, nf, |a, b| {
                edge_rule
                    .weights
                    .iter()
                    .enumerate()
                    .map(|(q, w)| w * traces[a][q] * traces[b][q])
                    .sum::<f64>()
            });
            edge_block.push(g.cholesky());
            edge_traces.push(traces);
        }

        let int = basis.internal_fns();
        let ni = int.len();
        let mut div_div = DMatrix::zeros(ni, ni);
        let mut mass = DMatrix::zeros(ni, ni);
        for (vals, w) in vol_vals.iter().zip(&vol_rule.weights) {
            for a in 0..ni {
                let (va, da) = vals[int.start + a];
                for b in 0..ni {
                    let (vb, db) = vals[int.start + b];
                    div_div[(a, b)] += w * da * db;
                    mass[(a, b)] += w * va.dot(&vb);
                }
            }
        }
        let (range, nullspace) = split_divergence(&div_div, &mass);
        let c = constraint_rows(&range, &nullspace, &div_div, &mass);
        let internal_block = if ni == 0 {
            None
        } else {
            let lu = c.clone().lu();
            if is_well_posed(&c) {
                Some(lu)
            } else {
                None
            }
        };
        Ok(ProjectionSystem {
            config,
            scalars: divergence_scalar_basis(config),
            basis,
            edge_rule,
            vol_rule,
            vol_vals,
            edge_traces,
            edge_block,
            range,
            nullspace,
            internal_block,
        })
    }

    pub fn scalar_basis(&self) -> &ScalarBasis {
        &self.scalars
    }

    /// Dimension of the divergence-free internal subspace.
    pub fn nullity(&self) -> usize {
        self.nullspace.ncols()
    }

    /// Master values and divergence of the field with coefficients `c` at the
    /// cached volume points.
    fn combine(&self, c: &[f64], q: usize, fns: std::ops::Range<usize>) -> (Vector2<f64>, f64) {
        let mut v = Vector2::zeros();
        let mut d = 0.0;
        for i in fns {
            let (vi, di) = self.vol_vals[q][i];
            v += vi * c[i];
            d += di * c[i];
        }
        (v, d)
    }
}

/// Eigen-split of the internal div-div matrix after Jacobi scaling by the
/// mass diagonal: columns with eigenvalue above tolerance span a complement
/// of the divergence-free subspace, the rest span that subspace.
fn split_divergence(div_div: &DMatrix<f64>, mass: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = div_div.nrows();
    if n == 0 {
        return (DMatrix::zeros(0, 0), DMatrix::zeros(0, 0));
    }
    let s: Vec<f64> = (0..n).map(|i| mass[(i, i)].sqrt()).collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| div_div[(i, j)] / (s[i] * s[j]));
    let eig = SymmetricEigen::new(scaled);
    let max = eig.eigenvalues.amax();
    let mut range = Vec::new();
    let mut null = Vec::new();
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        let col = DVector::from_fn(n, |i, _| eig.eigenvectors[(i, j)] / s[i]);
        if lam > NULLSPACE_TOL * max {
            range.push(col);
        } else {
            null.push(col);
        }
    }
    let to_mat = |v: Vec<DVector<f64>>| {
        if v.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_columns(&v)
        }
    };
    (to_mat(range), to_mat(null))
}

/// `[Rᵀ D; Zᵀ M]` acting on internal coefficients.
fn constraint_rows(
    range: &DMatrix<f64>,
    null: &DMatrix<f64>,
    div_div: &DMatrix<f64>,
    mass: &DMatrix<f64>,
) -> DMatrix<f64> {
    let top = range.transpose() * div_div;
    let bottom = null.transpose() * mass;
    let mut c = DMatrix::zeros(top.nrows() + bottom.nrows(), div_div.ncols());
    c.rows_mut(0, top.nrows()).copy_from(&top);
    c.rows_mut(top.nrows(), bottom.nrows()).copy_from(&bottom);
    c
}

fn singular_ratio(c: &DMatrix<f64>) -> f64 {
    if c.is_empty() {
        return 1.0;
    }
    // column scaling leaves rank unchanged and removes the level-dependent
    // magnitudes of the hierarchical functions
    let mut c = c.clone();
    for mut row in c.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= n;
        }
    }
    for mut col in c.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        }
    }
    let sv = c.singular_values();
    let max = sv.max();
    if c.nrows() != c.ncols() || max <= 0.0 {
        return 0.0;
    }
    sv.min() / max
}

fn is_well_posed(c: &DMatrix<f64>) -> bool {
    singular_ratio(c) > UNIQUENESS_TOL
}

/// Coefficients of the projection of `q` (physical field on the element with
/// map `map`) over the basis of `sys`.
pub fn project_flux(sys: &ProjectionSystem, q: &dyn FluxField, map: &GeoMap) -> Result<Vec<f64>> {
    let basis = &sys.basis;
    let shape = basis.shape();
    let mut coef = vec![0.0; basis.len()];

    for l in 0..sys.config.n_edges() {
        let nrm = master_edge_normal(shape, l);
        let fns = basis.edge_fns(l);
        let mut rhs = DVector::zeros(fns.len());
        for (qi, (s, w)) in sys.edge_rule.iter().enumerate() {
            let (qh, _) = pullback(q, map, &master_edge_point(shape, l, s))?;
            let qn = qh.dot(&nrm);
            for a in 0..fns.len() {
                rhs[a] += w * qn * sys.edge_traces[l][a][qi];
            }
        }
        let chol = sys.edge_block[l]
            .as_ref()
            .ok_or(Error::SingularBlock("edge trace mass"))?;
        let sol = chol.solve(&rhs);
        for (a, i) in fns.enumerate() {
            coef[i] = sol[a];
        }
    }

    let int = basis.internal_fns();
    let ni = int.len();
    if ni == 0 {
        return Ok(coef);
    }
    let mut dq = DVector::zeros(ni);
    let mut mq = DVector::zeros(ni);
    for (qi, (p, w)) in sys.vol_rule.iter().enumerate() {
        let (qh, dh) = pullback(q, map, &p)?;
        let (vb, db) = sys.combine(&coef, qi, 0..basis.n_edge);
        let (rv, rd) = (qh - vb, dh - db);
        for a in 0..ni {
            let (va, da) = sys.vol_vals[qi][int.start + a];
            dq[a] += w * rd * da;
            mq[a] += w * rv.dot(&va);
        }
    }
    let rhs = {
        let top = sys.range.transpose() * dq;
        let bottom = sys.nullspace.transpose() * mq;
        let mut r = DVector::zeros(ni);
        r.rows_mut(0, top.len()).copy_from(&top);
        r.rows_mut(top.len(), bottom.len()).copy_from(&bottom);
        r
    };
    let lu = sys
        .internal_block
        .as_ref()
        .ok_or(Error::SingularBlock("internal constraint system"))?;
    let sol = lu
        .solve(&rhs)
        .ok_or(Error::SingularBlock("internal constraint system"))?;
    for a in 0..ni {
        coef[int.start + a] = sol[a];
    }
    Ok(coef)
}

/// `L²` projection of a physical scalar onto the mapped scalar basis,
/// `∫ (u - λu) φ J dK̂ = 0`.
pub fn project_scalar(basis: &ScalarBasis, u: &dyn ScalarField, map: &GeoMap) -> Result<Vec<f64>> {
    let rule = master_rule(basis.shape(), 2 * basis.degree() + 2 + DATA_BUMP)?;
    let n = basis.len();
    let mut g = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    for (p, w) in rule.iter() {
        let jw = w * map.jacobian(&p)?.det;
        let phi = basis.eval(&p);
        let uv = u.value(&map.eval(&p));
        for i in 0..n {
            rhs[i] += jw * uv * phi[i];
            for j in 0..n {
                g[(i, j)] += jw * phi[i] * phi[j];
            }
        }
    }
    let chol = g.cholesky().ok_or(Error::SingularBlock("scalar mass"))?;
    Ok(chol.solve(&rhs).iter().copied().collect())
}

/// `max_φ |∫_K̂ ∇̂·(π̂q̂ - q̂) φ dK̂|` over the potential basis.
pub fn de_rham_residual(sys: &ProjectionSystem, q: &dyn FluxField, map: &GeoMap) -> Result<f64> {
    let coef = project_flux(sys, q, map)?;
    let n = sys.scalars.len();
    let mut acc = vec![0.0; n];
    for (qi, (p, w)) in sys.vol_rule.iter().enumerate() {
        let (_, dh) = pullback(q, map, &p)?;
        let (_, dp) = sys.combine(&coef, qi, 0..sys.basis.len());
        for (a, phi) in sys.scalars.eval(&p).into_iter().enumerate() {
            acc[a] += w * (dp - dh) * phi;
        }
    }
    Ok(acc.into_iter().fold(0.0, |m, v| m.max(v.abs())))
}

/// Net master boundary flux of `π̂q̂ - q̂`.
pub fn boundary_flux_defect(
    sys: &ProjectionSystem,
    q: &dyn FluxField,
    map: &GeoMap,
) -> Result<f64> {
    let coef = project_flux(sys, q, map)?;
    let shape = sys.basis.shape();
    let mut total = 0.0;
    for l in 0..sys.config.n_edges() {
        let nrm = master_edge_normal(shape, l);
        for (s, w) in sys.edge_rule.iter() {
            let p = master_edge_point(shape, l, s);
            let (qh, _) = pullback(q, map, &p)?;
            let ph: Vector2<f64> = sys
                .basis
                .eval(&p)
                .iter()
                .zip(&coef)
                .map(|((v, _), c)| v * *c)
                .sum();
            total += w * (ph - qh).dot(&nrm);
        }
    }
    Ok(total.abs())
}

/// True iff the homogeneous projection constraints admit only the zero
/// solution: smallest singular value of the full constraint matrix above
/// `1e-8` of the largest.
pub fn uniqueness_probe(sys: &ProjectionSystem) -> bool {
    singular_ratio(&full_constraint_matrix(sys)) > UNIQUENESS_TOL
}

fn full_constraint_matrix(sys: &ProjectionSystem) -> DMatrix<f64> {
    let basis = &sys.basis;
    let n = basis.len();
    let int = basis.internal_fns();
    let mut rows: Vec<DVector<f64>> = Vec::new();
    for l in 0..sys.config.n_edges() {
        for a in 0..basis.edge_fns(l).len() {
            let row = DVector::from_fn(n, |j, _| {
                sys.edge_rule
                    .iter()
                    .enumerate()
                    .map(|(qi, (s, w))| w * sys.edge_traces[l][a][qi] * basis.normal_trace(j, l, s))
                    .sum::<f64>()
            });
            rows.push(row);
        }
    }
    // internal test functions against every basis member
    let ni = int.len();
    let mut dd = DMatrix::zeros(ni, n);
    let mut mm = DMatrix::zeros(ni, n);
    for (vals, w) in sys.vol_vals.iter().zip(&sys.vol_rule.weights) {
        for a in 0..ni {
            let (va, da) = vals[int.start + a];
            for j in 0..n {
                dd[(a, j)] += w * da * vals[j].1;
                mm[(a, j)] += w * va.dot(&vals[j].0);
            }
        }
    }
    let top = sys.range.transpose() * dd;
    let bottom = sys.nullspace.transpose() * mm;
    for r in top.row_iter().chain(bottom.row_iter()) {
        rows.push(r.transpose());
    }
    let mut c = DMatrix::zeros(rows.len(), n);
    for (i, r) in rows.iter().enumerate() {
        c.set_row(i, &r.transpose());
    }
    c
}
