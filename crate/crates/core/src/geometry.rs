//! Element maps from the master triangle / square and the contravariant
//! Piola transformation.

use crate::error::{Error, Result};
use nalgebra::{Matrix2, Point2, Vector2};

/// `F(x̂, ŷ) = a0 + a1 x̂ + a2 ŷ (+ a3 x̂ŷ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GeoMap {
    Linear {
        a0: Vector2<f64>,
        a1: Vector2<f64>,
        a2: Vector2<f64>,
    },
    Bilinear {
        a0: Vector2<f64>,
        a1: Vector2<f64>,
        a2: Vector2<f64>,
        a3: Vector2<f64>,
    },
}

#[derive(Clone, Copy, Debug)]
pub struct JacobianData {
    pub df: Matrix2<f64>,
    pub det: f64,
    pub df_inv: Matrix2<f64>,
}

impl GeoMap {
    /// Linear map of the master triangle onto the triangle `v0 v1 v2`.
    pub fn triangle(v: [Point2<f64>; 3]) -> Self {
        GeoMap::Linear {
            a0: v[0].coords,
            a1: v[1] - v[0],
            a2: v[2] - v[0],
        }
    }

    /// Bilinear map of `[-1,1]^2` onto the quadrilateral `v0 v1 v2 v3`
    /// (counterclockwise, `v0` the image of `(-1,-1)`).
    pub fn quadrilateral(v: [Point2<f64>; 4]) -> Self {
        let [x0, x1, x2, x3] = v.map(|p| p.coords);
        GeoMap::Bilinear {
            a0: (x0 + x1 + x2 + x3) * 0.25,
            a1: (-x0 + x1 + x2 - x3) * 0.25,
            a2: (-x0 - x1 + x2 + x3) * 0.25,
            a3: (x0 - x1 + x2 - x3) * 0.25,
        }
    }

    pub fn identity_square() -> Self {
        GeoMap::Bilinear {
            a0: Vector2::zeros(),
            a1: Vector2::x(),
            a2: Vector2::y(),
            a3: Vector2::zeros(),
        }
    }

    pub fn identity_triangle() -> Self {
        GeoMap::Linear {
            a0: Vector2::zeros(),
            a1: Vector2::x(),
            a2: Vector2::y(),
        }
    }

    /// True when the map has a non-vanishing `x̂ŷ` term.
    pub fn is_affine(&self) -> bool {
        match self {
            GeoMap::Linear { .. } => true,
            GeoMap::Bilinear { a3, .. } => a3.norm() <= 1e-14 * (1.0 + self.scale()),
        }
    }

    fn scale(&self) -> f64 {
        match self {
            GeoMap::Linear { a1, a2, .. } | GeoMap::Bilinear { a1, a2, .. } => {
                a1.norm().max(a2.norm())
            }
        }
    }

    pub fn eval(&self, xh: &Point2<f64>) -> Point2<f64> {
        match *self {
            GeoMap::Linear { a0, a1, a2 } => Point2::from(a0 + a1 * xh.x + a2 * xh.y),
            GeoMap::Bilinear { a0, a1, a2, a3 } => {
                Point2::from(a0 + a1 * xh.x + a2 * xh.y + a3 * (xh.x * xh.y))
            }
        }
    }

    pub fn jacobian(&self, xh: &Point2<f64>) -> Result<JacobianData> {
        let (c0, c1) = match *self {
            GeoMap::Linear { a1, a2, .. } => (a1, a2),
            GeoMap::Bilinear { a1, a2, a3, .. } => (a1 + a3 * xh.y, a2 + a3 * xh.x),
        };
        let df = Matrix2::from_columns(&[c0, c1]);
        let det = df.determinant();
        if det <= 0.0 || !det.is_finite() {
            return Err(Error::DegenerateGeometry(det));
        }
        let df_inv = Matrix2::new(df[(1, 1)], -df[(0, 1)], -df[(1, 0)], df[(0, 0)]) / det;
        Ok(JacobianData { df, det, df_inv })
    }
}

impl JacobianData {
    /// `v = DF v̂ / J`.
    pub fn piola_push(&self, vh: &Vector2<f64>) -> Vector2<f64> {
        self.df * vh / self.det
    }

    /// Inverse Piola map: `v̂ = J DF^{-1} v`.
    pub fn piola_pull(&self, v: &Vector2<f64>) -> Vector2<f64> {
        self.df_inv * v * self.det
    }
}

/// Physical divergence of a Piola-pushed field from its master divergence.
pub fn piola_div(det: f64, div_hat: f64) -> f64 {
    div_hat / det
}
