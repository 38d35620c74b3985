//! Manufactured arctan solution, `L²` error norms and convergence orders.

use crate::assembly::{ElementKit, Solution};
use crate::error::{Error, Result};
use crate::mesh::Mesh2D;
use crate::projection::{project_flux, project_scalar, FluxField, ProjectionSystem, ScalarField};
use nalgebra::{Point2, Vector2};
use rayon::prelude::*;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_3};

/// `u = π/2 - atan(5 (r - π/3))`, `r = |x - (1.25, -0.25)|`, with `𝒦 = I`,
/// `σ = -∇u` and `f = ∇·σ`.
#[derive(Clone, Copy, Debug)]
pub struct ManufacturedSolution {
    pub center: Point2<f64>,
    pub slope: f64,
    pub radius: f64,
}

pub fn exact_fields() -> ManufacturedSolution {
    ManufacturedSolution {
        center: Point2::new(1.25, -0.25),
        slope: 5.0,
        radius: FRAC_PI_3,
    }
}

impl ManufacturedSolution {
    fn radial(&self, x: &Point2<f64>) -> (Vector2<f64>, f64, f64) {
        let d = x - self.center;
        let r = d.norm();
        (d, r, self.slope * (r - self.radius))
    }

    pub fn u(&self, x: &Point2<f64>) -> f64 {
        let (_, _, w) = self.radial(x);
        FRAC_PI_2 - w.atan()
    }

    pub fn grad_u(&self, x: &Point2<f64>) -> Vector2<f64> {
        let (d, r, w) = self.radial(x);
        let du = -self.slope / (1.0 + w * w);
        d * (du / r)
    }

    pub fn sigma(&self, x: &Point2<f64>) -> Vector2<f64> {
        -self.grad_u(x)
    }

    /// `f = -Δu = -(u'' + u'/r)`.
    pub fn f(&self, x: &Point2<f64>) -> f64 {
        let (_, r, w) = self.radial(x);
        let q = 1.0 + w * w;
        let s = self.slope;
        let du = -s / q;
        let d2u = 2.0 * s * s * w / (q * q);
        -(d2u + du / r)
    }
}

impl FluxField for ManufacturedSolution {
    fn value(&self, x: &Point2<f64>) -> Vector2<f64> {
        self.sigma(x)
    }

    fn divergence(&self, x: &Point2<f64>) -> f64 {
        self.f(x)
    }
}

/// The flux, potential and source of a problem with known solution.
pub trait ExactSolution: FluxField {
    fn potential(&self, x: &Point2<f64>) -> f64;
}

impl ExactSolution for ManufacturedSolution {
    fn potential(&self, x: &Point2<f64>) -> f64 {
        self.u(x)
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorNorms {
    pub flux: f64,
    pub potential: f64,
    pub divergence: f64,
}

/// `‖σ - σ_h‖`, `‖u - u_h‖` and `‖∇·σ - ∇·σ_h‖` by the element rule, which
/// over-integrates the discrete products by four degrees.
pub fn l2_errors(
    mesh: &Mesh2D,
    kit: &ElementKit,
    sol: &Solution,
    exact: &dyn ExactSolution,
) -> Result<ErrorNorms> {
    let parts = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| element_errors(mesh, kit, sol, exact, e))
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorNorms {
        flux: compensated_sum(parts.iter().map(|p| p[0])).sqrt(),
        potential: compensated_sum(parts.iter().map(|p| p[1])).sqrt(),
        divergence: compensated_sum(parts.iter().map(|p| p[2])).sqrt(),
    })
}

fn element_errors(
    mesh: &Mesh2D,
    kit: &ElementKit,
    sol: &Solution,
    exact: &dyn ExactSolution,
    e: usize,
) -> Result<[f64; 3]> {
    let map = mesh.geo_map(e);
    let mut acc = [0.0; 3];
    for (p, w) in kit.rule().iter() {
        let jac = map.jacobian(&p)?;
        let x = map.eval(&p);
        let vals = kit.basis.eval(&p);
        let mut vh = Vector2::zeros();
        let mut dh = 0.0;
        for ((v, d), c) in vals.iter().zip(&sol.flux[e]) {
            vh += v * *c;
            dh += d * c;
        }
        let uh: f64 = kit
            .scalars
            .eval(&p)
            .iter()
            .zip(&sol.potential[e])
            .map(|(a, b)| a * b)
            .sum();
        let jw = w * jac.det;
        acc[0] += jw * (exact.value(&x) - jac.piola_push(&vh)).norm_squared();
        acc[1] += jw * (exact.potential(&x) - uh).powi(2);
        acc[2] += jw * (exact.divergence(&x) - crate::geometry::piola_div(jac.det, dh)).powi(2);
    }
    Ok(acc)
}

/// Element-wise commuting projections of the exact fields, in the same
/// layout as a discrete solution.
pub fn project_exact(
    mesh: &Mesh2D,
    sys: &ProjectionSystem,
    exact: &dyn ExactSolution,
) -> Result<Solution> {
    struct Pot<'a>(&'a dyn ExactSolution);
    impl ScalarField for Pot<'_> {
        fn value(&self, x: &Point2<f64>) -> f64 {
            self.0.potential(x)
        }
    }
    let pairs = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| {
            let map = mesh.geo_map(e);
            Ok((
                project_flux(sys, exact, &map)?,
                project_scalar(sys.scalar_basis(), &Pot(exact), &map)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (flux, potential) = pairs.into_iter().unzip();
    Ok(Solution { flux, potential })
}

/// Projection errors `‖σ - Πσ‖`, `‖u - Λu‖`, `‖∇·(σ - Πσ)‖`.
pub fn projection_errors(
    mesh: &Mesh2D,
    kit: &ElementKit,
    exact: &dyn ExactSolution,
) -> Result<ErrorNorms> {
    let sys = ProjectionSystem::from_basis(kit.basis.clone())?;
    let proj = project_exact(mesh, &sys, exact)?;
    l2_errors(mesh, kit, &proj, exact)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelErrors {
    pub level: u32,
    pub h: f64,
    pub errors: ErrorNorms,
}

#[derive(Clone, Debug, Default)]
pub struct StudyResult {
    pub levels: Vec<LevelErrors>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrderFit {
    /// `log(e_i / e_{i+1}) / log(h_i / h_{i+1})`.
    pub pairwise: Vec<f64>,
    /// Least-squares slope of `log e` against `log h` over the finest three
    /// levels.
    pub least_squares: f64,
    /// False when some error fails to decrease under refinement.
    pub monotone: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Orders {
    pub flux: OrderFit,
    pub potential: OrderFit,
    pub divergence: OrderFit,
}

pub fn fit_sequence(h: &[f64], e: &[f64]) -> Result<OrderFit> {
    if h.len() != e.len() || h.len() < 3 {
        return Err(Error::Study(
            "order fitting needs at least three levels".into(),
        ));
    }
    if h.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Study("mesh sizes must decrease strictly".into()));
    }
    if e.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
        return Err(Error::Study("errors must be positive".into()));
    }
    let pairwise = (0..h.len() - 1)
        .map(|i| (e[i] / e[i + 1]).ln() / (h[i] / h[i + 1]).ln())
        .collect();
    let n = h.len();
    let xs: Vec<f64> = h[n - 3..].iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = e[n - 3..].iter().map(|v| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / 3.0;
    let my = ys.iter().sum::<f64>() / 3.0;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(OrderFit {
        pairwise,
        least_squares: sxy / sxx,
        monotone: e.windows(2).all(|w| w[1] < w[0]),
    })
}

pub fn fit_orders(result: &StudyResult) -> Result<Orders> {
    let h: Vec<f64> = result.levels.iter().map(|l| l.h).collect();
    let pick = |f: fn(&ErrorNorms) -> f64| -> Vec<f64> {
        result.levels.iter().map(|l| f(&l.errors)).collect()
    };
    Ok(Orders {
        flux: fit_sequence(&h, &pick(|e| e.flux))?,
        potential: fit_sequence(&h, &pick(|e| e.potential))?,
        divergence: fit_sequence(&h, &pick(|e| e.divergence))?,
    })
}
