//! Degrees of freedom, element matrices of the mixed Darcy problem and
//! static condensation down to edge fluxes plus one constant potential per
//! element.
//!
//! Unknown ordering of the uncondensed system: edge fluxes (`k+1` per global
//! edge), internal fluxes element by element, then potentials element by
//! element. The system reads
//!
//! ```text
//! [ A  -Bᵀ ] [σ]   [ g]
//! [-B   0  ] [u] = [-f]
//! ```
//!
//! with `A = ∫ 𝒦⁻¹ v·w`, `B = ∫ φ ∇·v`, `f = ∫ f φ` and `g = -∫_∂Ω u_D v·n`.

use crate::error::{Error, Result};
use crate::geometry::GeoMap;
use crate::mesh::Mesh2D;
use crate::poly;
use crate::projection::{ScalarField, DATA_BUMP};
use crate::quadrature::{gauss_interval, QuadRule};
use crate::solver::{factor_and_solve, SparseMatrix};
use crate::spaces::{
    build_hdiv_basis, divergence_scalar_basis, master_rule, HDivBasis, ScalarBasis, SpaceConfig,
};
use nalgebra::{DMatrix, DVector, Matrix2, Point2, Vector2};
use rayon::prelude::*;

/// Permeability tensor as a function of position.
pub type Permeability<'a> = &'a (dyn Fn(&Point2<f64>) -> Matrix2<f64> + Sync);

pub fn identity_permeability(_: &Point2<f64>) -> Matrix2<f64> {
    Matrix2::identity()
}

#[derive(Clone, Debug)]
pub struct DofMap {
    pub config: SpaceConfig,
    pub n_elements: usize,
    pub n_edge_dofs: usize,
    pub n_internal: usize,
    pub n_potential: usize,
    /// Per element, per local edge function: global edge DOF and the sign
    /// `c` with `local = c · global` on that element.
    pub edge_dofs: Vec<Vec<(usize, f64)>>,
}

/// Local trace index `j` on an edge traversed against its global direction
/// corresponds to global index `j'` with sign `c`: vertex functions swap and
/// flip, bubbles flip by parity.
fn reversed_trace(j: usize) -> (usize, f64) {
    match j {
        0 => (1, -1.0),
        1 => (0, -1.0),
        _ => (j, if j.is_multiple_of(2) { -1.0 } else { 1.0 }),
    }
}

pub fn build_dof_map(mesh: &Mesh2D, config: SpaceConfig) -> Result<DofMap> {
    if mesh.family.shape() != config.shape() {
        return Err(Error::InvalidConfig(format!(
            "{} space on a {} mesh",
            config.family.name(),
            mesh.family.name()
        )));
    }
    let per = config.k + 1;
    let edge_dofs = mesh
        .elements
        .iter()
        .map(|el| {
            let mut v = Vec::with_capacity(config.n_edge_fns());
            for (l, (&eid, &sign)) in el.edge_ids.iter().zip(&el.edge_signs).enumerate() {
                debug_assert_eq!(v.len(), l * per);
                for j in 0..per {
                    let (jg, c) = if sign > 0 {
                        (j, 1.0)
                    } else {
                        reversed_trace(j)
                    };
                    v.push((eid * per + jg, c));
                }
            }
            v
        })
        .collect();
    Ok(DofMap {
        config,
        n_elements: mesh.n_elements(),
        n_edge_dofs: per * mesh.n_edges(),
        n_internal: config.n_internal_fns(),
        n_potential: config.n_potential_fns(),
        edge_dofs,
    })
}

impl DofMap {
    pub fn n_flux_dofs(&self) -> usize {
        self.n_edge_dofs + self.n_elements * self.n_internal
    }

    pub fn n_potential_dofs(&self) -> usize {
        self.n_elements * self.n_potential
    }

    pub fn n_total(&self) -> usize {
        self.n_flux_dofs() + self.n_potential_dofs()
    }

    pub fn n_condensed(&self) -> usize {
        self.n_edge_dofs + self.n_elements
    }

    pub fn internal_dof(&self, e: usize, a: usize) -> usize {
        self.n_edge_dofs + e * self.n_internal + a
    }

    pub fn potential_dof(&self, e: usize, m: usize) -> usize {
        self.n_flux_dofs() + e * self.n_potential + m
    }

    /// Global index and sign of every local flux function of element `e`.
    pub fn flux_dofs(&self, e: usize) -> Vec<(usize, f64)> {
        let mut v = self.edge_dofs[e].clone();
        v.extend((0..self.n_internal).map(|a| (self.internal_dof(e, a), 1.0)));
        v
    }
}

/// Geometry-independent data of a configuration.
#[derive(Clone, Debug)]
pub struct ElementKit {
    pub basis: HDivBasis,
    pub scalars: ScalarBasis,
    rule: QuadRule,
    vals: Vec<Vec<(Vector2<f64>, f64)>>,
    scalar_vals: Vec<Vec<f64>>,
    /// `∫_K̂ φ̂_m ∇̂·v̂_j`, which equals the physical `∫_K φ_m ∇·v_j`.
    b: DMatrix<f64>,
}

impl ElementKit {
    pub fn new(config: SpaceConfig) -> Result<Self> {
        Self::with_quadrature_bump(config, 0)
    }

    /// As [`ElementKit::new`] with `bump` extra degrees in the element rule.
    pub fn with_quadrature_bump(config: SpaceConfig, bump: usize) -> Result<Self> {
        let basis = build_hdiv_basis(config)?;
        let scalars = divergence_scalar_basis(config);
        let rule = master_rule(config.shape(), 2 * config.order() + 2 + DATA_BUMP + bump)?;
        let vals: Vec<_> = rule.points.iter().map(|p| basis.eval(p)).collect();
        let scalar_vals: Vec<_> = rule.points.iter().map(|p| scalars.eval(p)).collect();
        let mut b = DMatrix::zeros(scalars.len(), basis.len());
        for q in 0..rule.len() {
            let w = rule.weights[q];
            for (m, phi) in scalar_vals[q].iter().enumerate() {
                for (j, (_, d)) in vals[q].iter().enumerate() {
                    b[(m, j)] += w * phi * d;
                }
            }
        }
        Ok(ElementKit {
            basis,
            scalars,
            rule,
            vals,
            scalar_vals,
            b,
        })
    }

    pub fn config(&self) -> SpaceConfig {
        self.basis.config
    }

    pub fn rule(&self) -> &QuadRule {
        &self.rule
    }
}

#[derive(Clone, Debug)]
pub struct ElementBlocks {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub f: DVector<f64>,
}

fn checked_inverse(k: Matrix2<f64>, x: &Point2<f64>) -> Result<Matrix2<f64>> {
    let sym = (k[(0, 1)] - k[(1, 0)]).abs() <= 1e-12 * k.abs().max();
    let spd = sym && k[(0, 0)] > 0.0 && k.determinant() > 0.0;
    if !spd {
        return Err(Error::PermeabilityNotSpd { x: x.x, y: x.y });
    }
    Ok(k.try_inverse().unwrap())
}

/// Element blocks through the Piola-mapped basis and the mapped rule.
pub fn assemble_element(
    kit: &ElementKit,
    map: &GeoMap,
    permeability: Permeability,
    source: &dyn ScalarField,
) -> Result<ElementBlocks> {
    let nf = kit.basis.len();
    let np = kit.scalars.len();
    let nq = kit.rule.len();
    // rows 2q, 2q+1 hold Lᵀ v̂ with L Lᵀ = w DFᵀ 𝒦⁻¹ DF / J
    let mut wv = DMatrix::zeros(2 * nq, nf);
    let mut f = DVector::zeros(np);
    for (q, (p, w)) in kit.rule.iter().enumerate() {
        let jac = map.jacobian(&p)?;
        let x = map.eval(&p);
        let kinv = checked_inverse(permeability(&x), &x)?;
        let m = jac.df.transpose() * kinv * jac.df * (w / jac.det);
        let m = Matrix2::new(
            m[(0, 0)],
            0.5 * (m[(0, 1)] + m[(1, 0)]),
            0.5 * (m[(0, 1)] + m[(1, 0)]),
            m[(1, 1)],
        );
        let l = m
            .cholesky()
            .ok_or(Error::PermeabilityNotSpd { x: x.x, y: x.y })?
            .l();
        for (j, (v, _)) in kit.vals[q].iter().enumerate() {
            let t = l.transpose() * v;
            wv[(2 * q, j)] = t.x;
            wv[(2 * q + 1, j)] = t.y;
        }
        let fw = w * jac.det * source.value(&x);
        for (mi, phi) in kit.scalar_vals[q].iter().enumerate() {
            f[mi] += fw * phi;
        }
    }
    let mut a = wv.transpose() * &wv;
    a.fill_upper_triangle_with_lower_triangle();
    Ok(ElementBlocks {
        a,
        b: kit.b.clone(),
        f,
    })
}

/// `-∫_e u_D ψ_j·n ds` for every edge flux DOF; zero on interior edges.
pub fn assemble_dirichlet(mesh: &Mesh2D, dofs: &DofMap, u_d: &dyn ScalarField) -> Result<Vec<f64>> {
    let k = dofs.config.k;
    let line = gauss_interval(2 * k + 2 + DATA_BUMP)?;
    let mut g = vec![0.0; dofs.n_edge_dofs];
    for (eid, edge) in mesh.edges.iter().enumerate() {
        if !edge.boundary {
            continue;
        }
        let (a, b) = (
            mesh.vertices[edge.vertex_ids[0]],
            mesh.vertices[edge.vertex_ids[1]],
        );
        let mid = Point2::from((a.coords + b.coords) * 0.5);
        let half = (b - a) * 0.5;
        for (s, w) in line.iter() {
            let u = u_d.value(&(mid + half * s));
            for j in 0..=k {
                g[eid * (k + 1) + j] -= w * u * poly::hierarchical_1d(j, s).0;
            }
        }
    }
    Ok(g)
}

/// Assembled element blocks and boundary data.
#[derive(Clone, Debug)]
pub struct MixedSystem {
    pub dofs: DofMap,
    pub blocks: Vec<ElementBlocks>,
    /// Dirichlet contribution on the edge flux DOFs.
    pub g: Vec<f64>,
}

/// Local flux and potential coefficients of every element.
#[derive(Clone, Debug)]
pub struct Solution {
    pub flux: Vec<Vec<f64>>,
    pub potential: Vec<Vec<f64>>,
}

pub fn assemble(
    mesh: &Mesh2D,
    kit: &ElementKit,
    permeability: Permeability,
    source: &dyn ScalarField,
    dirichlet: &dyn ScalarField,
) -> Result<MixedSystem> {
    let dofs = build_dof_map(mesh, kit.config())?;
    let blocks = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| assemble_element(kit, &mesh.geo_map(e), permeability, source))
        .collect::<Result<Vec<_>>>()?;
    let g = assemble_dirichlet(mesh, &dofs, dirichlet)?;
    Ok(MixedSystem { dofs, blocks, g })
}

/// Local saddle matrix `[[A, -Bᵀ], [-B, 0]]` and right-hand side `[0, -f]`.
fn local_saddle(bl: &ElementBlocks) -> (DMatrix<f64>, DVector<f64>) {
    let nf = bl.a.nrows();
    let np = bl.b.nrows();
    let mut k = DMatrix::zeros(nf + np, nf + np);
    k.view_mut((0, 0), (nf, nf)).copy_from(&bl.a);
    k.view_mut((0, nf), (nf, np))
        .copy_from(&(-bl.b.transpose()));
    k.view_mut((nf, 0), (np, nf)).copy_from(&(-&bl.b));
    let mut r = DVector::zeros(nf + np);
    r.rows_mut(nf, np).copy_from(&(-&bl.f));
    (k, r)
}

impl MixedSystem {
    pub fn n_elements(&self) -> usize {
        self.blocks.len()
    }

    /// Global row index and sign of every local unknown of element `e`
    /// (flux functions then potentials).
    fn local_to_global(&self, e: usize) -> Vec<(usize, f64)> {
        let mut v = self.dofs.flux_dofs(e);
        v.extend((0..self.dofs.n_potential).map(|m| (self.dofs.potential_dof(e, m), 1.0)));
        v
    }

    /// The full symmetric indefinite system.
    pub fn to_sparse(&self) -> (SparseMatrix, Vec<f64>) {
        let n = self.dofs.n_total();
        let mut trips = Vec::new();
        let mut rhs = vec![0.0; n];
        for e in 0..self.n_elements() {
            let (k, r) = local_saddle(&self.blocks[e]);
            let map = self.local_to_global(e);
            for (i, &(gi, ci)) in map.iter().enumerate() {
                rhs[gi] += ci * r[i];
                for (j, &(gj, cj)) in map.iter().enumerate() {
                    let v = ci * cj * k[(i, j)];
                    if v != 0.0 {
                        trips.push((gi, gj, v));
                    }
                }
            }
        }
        for (i, v) in self.g.iter().enumerate() {
            rhs[i] += v;
        }
        (SparseMatrix::from_triplets(n, &trips, true), rhs)
    }

    pub fn solve_direct(&self) -> Result<(Solution, f64)> {
        let (a, b) = self.to_sparse();
        let x = factor_and_solve(&a, &b)?;
        let res = crate::solver::relative_residual(&a, &x, &b);
        let flux = (0..self.n_elements())
            .map(|e| {
                self.dofs
                    .flux_dofs(e)
                    .iter()
                    .map(|&(g, c)| c * x[g])
                    .collect()
            })
            .collect();
        let potential = (0..self.n_elements())
            .map(|e| {
                (0..self.dofs.n_potential)
                    .map(|m| x[self.dofs.potential_dof(e, m)])
                    .collect()
            })
            .collect();
        Ok((Solution { flux, potential }, res))
    }

    pub fn condense(&self) -> Result<CondensedSystem> {
        let locals = self
            .blocks
            .par_iter()
            .map(|bl| condense_element(bl, &self.dofs))
            .collect::<Result<Vec<_>>>()?;
        let n = self.dofs.n_condensed();
        let mut trips = Vec::new();
        let mut rhs = vec![0.0; n];
        for (e, loc) in locals.iter().enumerate() {
            let map = condensed_map(&self.dofs, e);
            for (i, &(gi, ci)) in map.iter().enumerate() {
                rhs[gi] += ci * loc.rhs[i];
                for (j, &(gj, cj)) in map.iter().enumerate() {
                    let v = ci * cj * loc.schur[(i, j)];
                    if v != 0.0 {
                        trips.push((gi, gj, v));
                    }
                }
            }
        }
        for (i, v) in self.g.iter().enumerate() {
            rhs[i] += v;
        }
        Ok(CondensedSystem {
            matrix: SparseMatrix::from_triplets(n, &trips, true),
            rhs,
            dofs: self.dofs.clone(),
            recovery: locals,
        })
    }
}

/// Element-level elimination data. Kept unknowns are the edge fluxes and
/// the constant potential; eliminated ones are the internal fluxes and the
/// remaining potentials.
#[derive(Clone, Debug)]
pub struct LocalCondensation {
    schur: DMatrix<f64>,
    rhs: DVector<f64>,
    /// `x_I = w - W x_G`.
    w_vec: DVector<f64>,
    w_mat: DMatrix<f64>,
}

fn split_indices(dofs: &DofMap) -> (Vec<usize>, Vec<usize>) {
    let ne = dofs.config.n_edge_fns();
    let nf = ne + dofs.n_internal;
    let kept: Vec<usize> = (0..ne).chain(std::iter::once(nf)).collect();
    let elim: Vec<usize> = (ne..nf).chain(nf + 1..nf + dofs.n_potential).collect();
    (kept, elim)
}

fn condensed_map(dofs: &DofMap, e: usize) -> Vec<(usize, f64)> {
    let mut v = dofs.edge_dofs[e].clone();
    v.push((dofs.n_edge_dofs + e, 1.0));
    v
}

fn condense_element(bl: &ElementBlocks, dofs: &DofMap) -> Result<LocalCondensation> {
    let (k, r) = local_saddle(bl);
    let (kept, elim) = split_indices(dofs);
    let sub = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| k[(rows[i], cols[j])])
    };
    let k_gg = sub(&kept, &kept);
    let k_gi = sub(&kept, &elim);
    let k_ig = sub(&elim, &kept);
    let k_ii = sub(&elim, &elim);
    let r_g = DVector::from_fn(kept.len(), |i, _| r[kept[i]]);
    let r_i = DVector::from_fn(elim.len(), |i, _| r[elim[i]]);
    let (w_mat, w_vec) = if elim.is_empty() {
        (DMatrix::zeros(0, kept.len()), DVector::zeros(0))
    } else {
        let lu = k_ii.clone().full_piv_lu();
        if !lu.is_invertible() {
            return Err(Error::SingularBlock("local condensation block"));
        }
        let w_mat = lu
            .solve(&k_ig)
            .ok_or(Error::SingularBlock("local condensation block"))?;
        let w_vec = lu
            .solve(&r_i)
            .ok_or(Error::SingularBlock("local condensation block"))?;
        (w_mat, w_vec)
    };
    let mut schur = &k_gg - &k_gi * &w_mat;
    // restore exact symmetry lost to rounding
    let st = schur.transpose();
    schur = (schur + st) * 0.5;
    let rhs = r_g - &k_gi * &w_vec;
    Ok(LocalCondensation {
        schur,
        rhs,
        w_vec,
        w_mat,
    })
}

/// Global system in edge fluxes plus one constant potential per element.
#[derive(Clone, Debug)]
pub struct CondensedSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    pub dofs: DofMap,
    recovery: Vec<LocalCondensation>,
}

impl CondensedSystem {
    pub fn dim(&self) -> usize {
        self.matrix.dim
    }

    /// Full local coefficients from a condensed solution vector.
    pub fn recover(&self, x: &[f64]) -> Solution {
        let dofs = &self.dofs;
        let (kept, elim) = split_indices(dofs);
        let nf = dofs.config.n_edge_fns() + dofs.n_internal;
        let mut flux = Vec::with_capacity(dofs.n_elements);
        let mut potential = Vec::with_capacity(dofs.n_elements);
        for (e, loc) in self.recovery.iter().enumerate() {
            let xg = DVector::from_iterator(
                kept.len(),
                condensed_map(dofs, e).iter().map(|&(g, c)| c * x[g]),
            );
            let xi = &loc.w_vec - &loc.w_mat * &xg;
            let mut all = vec![0.0; nf + dofs.n_potential];
            for (i, &l) in kept.iter().enumerate() {
                all[l] = xg[i];
            }
            for (i, &l) in elim.iter().enumerate() {
                all[l] = xi[i];
            }
            potential.push(all.split_off(nf));
            flux.push(all);
        }
        Solution { flux, potential }
    }

    pub fn solve(&self) -> Result<(Solution, f64)> {
        let x = factor_and_solve(&self.matrix, &self.rhs)?;
        let res = crate::solver::relative_residual(&self.matrix, &x, &self.rhs);
        Ok((self.recover(&x), res))
    }
}

/// Largest jump of the normal flux density across interior edges, sampled at
/// Gauss points of each edge.
pub fn max_normal_jump(mesh: &Mesh2D, kit: &ElementKit, sol: &Solution) -> Result<f64> {
    let line = gauss_interval(2 * kit.config().order() + 2)?;
    let mut worst: f64 = 0.0;
    for (eid, edge) in mesh.edges.iter().enumerate() {
        if edge.boundary {
            continue;
        }
        for s in line.points.iter().copied() {
            let mut vals = Vec::with_capacity(2);
            for &el in &edge.adjacent_element_ids {
                let elem = &mesh.elements[el];
                let l = elem.edge_ids.iter().position(|&x| x == eid).unwrap();
                let sign = f64::from(elem.edge_signs[l]);
                let sl = sign * s;
                let t: f64 = (0..kit.basis.len())
                    .map(|i| sol.flux[el][i] * kit.basis.normal_trace(i, l, sl))
                    .sum();
                vals.push(sign * t);
            }
            worst = worst.max((vals[0] - vals[1]).abs());
        }
    }
    Ok(worst)
}

/// Largest `|∫_K ∇·σ_h - ∫_K f|` over elements, by the element rule.
pub fn max_conservation_defect(
    mesh: &Mesh2D,
    kit: &ElementKit,
    sol: &Solution,
    source: &dyn ScalarField,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for e in 0..mesh.n_elements() {
        let map = mesh.geo_map(e);
        let mut div = 0.0;
        let mut src = 0.0;
        for (q, (p, w)) in kit.rule.iter().enumerate() {
            let jac = map.jacobian(&p)?;
            let dh: f64 = kit.vals[q]
                .iter()
                .zip(&sol.flux[e])
                .map(|((_, d), c)| d * c)
                .sum();
            div += w * dh;
            src += w * jac.det * source.value(&map.eval(&p));
        }
        worst = worst.max((div - src).abs());
    }
    Ok(worst)
}
