//! Gauss rules on the reference interval, the master square `[-1,1]^2` and
//! the master triangle `{x >= 0, y >= 0, x + y <= 1}`.

use crate::error::{Error, Result};
use nalgebra::Point2;

const MAX_LINE_DEGREE: usize = 40;
const MAX_TRIANGLE_DEGREE: usize = 30;

/// A 1D rule on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct LineRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub exactness_degree: usize,
}

/// A 2D rule on a master element.
#[derive(Clone, Debug)]
pub struct QuadRule {
    pub points: Vec<Point2<f64>>,
    pub weights: Vec<f64>,
    pub exactness_degree: usize,
}

impl LineRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
    }
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Point2<f64>, f64)> + '_ {
        self.points
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
    }
}

/// Gauss-Legendre nodes and weights with `npts` points, by Newton iteration
/// on the three-term recurrence.
fn gauss_legendre(npts: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; npts];
    let mut w = vec![0.0; npts];
    let nf = npts as f64;
    for i in 0..npts.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 1..npts {
                let jf = j as f64;
                let p2 = ((2.0 * jf + 1.0) * z * p1 - jf * p0) / (jf + 1.0);
                p0 = p1;
                p1 = p2;
            }
            let p = if npts == 0 { 1.0 } else { p1 };
            let pm1 = p0;
            // P_n' = n (z P_n - P_{n-1}) / (z^2 - 1)
            dp = nf * (z * p - pm1) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if npts == 1 {
            z = 0.0;
            dp = 1.0;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[npts - 1 - i] = z;
        w[i] = wi;
        w[npts - 1 - i] = wi;
    }
    if npts % 2 == 1 {
        x[npts / 2] = 0.0;
    }
    (x, w)
}

/// Gauss-Legendre rule on `[-1,1]` exact for polynomials of degree `<= degree`.
pub fn gauss_interval(degree: usize) -> Result<LineRule> {
    if !(1..=MAX_LINE_DEGREE).contains(&degree) {
        return Err(Error::QuadratureDegree {
            degree,
            max: MAX_LINE_DEGREE,
        });
    }
    let (points, weights) = gauss_legendre(degree / 2 + 1);
    Ok(LineRule {
        points,
        weights,
        exactness_degree: degree,
    })
}

/// Tensor-product Gauss rule on `[-1,1]^2`, exact for `Q_{d,d}`.
pub fn gauss_square(degree: usize) -> Result<QuadRule> {
    let line = gauss_interval(degree)?;
    let mut points = Vec::with_capacity(line.len() * line.len());
    let mut weights = Vec::with_capacity(points.capacity());
    for (y, wy) in line.iter() {
        for (x, wx) in line.iter() {
            points.push(Point2::new(x, y));
            weights.push(wx * wy);
        }
    }
    Ok(QuadRule {
        points,
        weights,
        exactness_degree: degree,
    })
}

/// Rule on the master triangle exact for total degree `<= degree`.
///
/// Degree 1 is the centroid rule; higher degrees use the collapsed
/// (Duffy) map of a Gauss-Legendre tensor rule, with one extra point in the
/// collapsed direction to absorb the linear Jacobian factor.
pub fn gauss_triangle(degree: usize) -> Result<QuadRule> {
    if !(1..=MAX_TRIANGLE_DEGREE).contains(&degree) {
        return Err(Error::QuadratureDegree {
            degree,
            max: MAX_TRIANGLE_DEGREE,
        });
    }
    if degree == 1 {
        return Ok(QuadRule {
            points: vec![Point2::new(1.0 / 3.0, 1.0 / 3.0)],
            weights: vec![0.5],
            exactness_degree: 1,
        });
    }
    let (xi, wxi) = gauss_legendre(degree / 2 + 1);
    let (eta, weta) = gauss_legendre(degree.div_ceil(2) + 1);
    let mut points = Vec::with_capacity(xi.len() * eta.len());
    let mut weights = Vec::with_capacity(points.capacity());
    for (&e, &we) in eta.iter().zip(&weta) {
        for (&s, &ws) in xi.iter().zip(&wxi) {
            let x = 0.25 * (1.0 + s) * (1.0 - e);
            let y = 0.5 * (1.0 + e);
            points.push(Point2::new(x, y));
            weights.push(ws * we * (1.0 - e) / 8.0);
        }
    }
    Ok(QuadRule {
        points,
        weights,
        exactness_degree: degree,
    })
}
