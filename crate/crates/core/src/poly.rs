//! One-dimensional polynomial families used to build the element bases.

/// Legendre polynomials `P_0..=P_n` at `s` with first and second derivatives.
pub fn legendre(n: usize, s: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut p = vec![0.0; n + 1];
    let mut dp = vec![0.0; n + 1];
    let mut d2p = vec![0.0; n + 1];
    p[0] = 1.0;
    if n >= 1 {
        p[1] = s;
        dp[1] = 1.0;
    }
    for j in 1..n {
        let jf = j as f64;
        p[j + 1] = ((2.0 * jf + 1.0) * s * p[j] - jf * p[j - 1]) / (jf + 1.0);
        // P'_{j+1} = P'_{j-1} + (2j+1) P_j, and likewise one derivative up
        dp[j + 1] = dp[j - 1] + (2.0 * jf + 1.0) * p[j];
        d2p[j + 1] = d2p[j - 1] + (2.0 * jf + 1.0) * dp[j];
    }
    (p, dp, d2p)
}

/// Value and derivative of the 1D hierarchical `H^1` function `j` on `[-1,1]`:
/// `(1-s)/2`, `(1+s)/2`, then integrated Legendre bubbles
/// `ℓ_j(s) = ∫_{-1}^s P_{j-1}` of degree `j` for `j >= 2`.
pub fn hierarchical_1d(j: usize, s: f64) -> (f64, f64) {
    match j {
        0 => (0.5 * (1.0 - s), -0.5),
        1 => (0.5 * (1.0 + s), 0.5),
        _ => {
            let (p, _, _) = legendre(j, s);
            ((p[j] - p[j - 2]) / (2.0 * j as f64 - 1.0), p[j - 1])
        }
    }
}

/// Polynomial degree of hierarchical function `j`.
pub fn hierarchical_degree(j: usize) -> usize {
    j.max(1)
}

/// Integrated Legendre bubble `ℓ_a` with its derivative, `a >= 2`.
pub fn bubble_1d(a: usize, s: f64) -> (f64, f64) {
    debug_assert!(a >= 2);
    hierarchical_1d(a, s)
}

/// Kernel `κ_j` with `ℓ_j(s) = (1 - s^2) κ_j(s)`: `κ_j = -P'_{j-1} / (j(j-1))`.
/// Returns value and derivative.
pub fn bubble_kernel(j: usize, s: f64) -> (f64, f64) {
    debug_assert!(j >= 2);
    let (_, dp, d2p) = legendre(j - 1, s);
    let c = -1.0 / (j as f64 * (j as f64 - 1.0));
    (c * dp[j - 1], c * d2p[j - 1])
}

/// Orthogonal (Dubiner) polynomial `ψ_{pq}` on the master triangle, total
/// degree `p + q`, evaluated without the collapsed-coordinate singularity.
pub fn dubiner(p: usize, q: usize, x: f64, y: f64) -> f64 {
    // b^p P_p(a / b) by the homogeneous recurrence
    let a = 2.0 * x - 1.0 + y;
    let b = 1.0 - y;
    let (mut f0, mut f1) = (1.0, a);
    let fp = if p == 0 {
        1.0
    } else {
        for n in 1..p {
            let nf = n as f64;
            let f2 = ((2.0 * nf + 1.0) * a * f1 - nf * b * b * f0) / (nf + 1.0);
            f0 = f1;
            f1 = f2;
        }
        f1
    };
    fp * jacobi(q, 2.0 * p as f64 + 1.0, 0.0, 2.0 * y - 1.0)
}

/// [`dubiner`] with its gradient `(ψ, ∂ψ/∂x, ∂ψ/∂y)`.
pub fn dubiner_grad(p: usize, q: usize, x: f64, y: f64) -> (f64, f64, f64) {
    let a = 2.0 * x - 1.0 + y;
    let b = 1.0 - y;
    // (value, d/dx, d/dy); a_x = 2, a_y = 1, b_x = 0, b_y = -1
    let mut f0 = (1.0, 0.0, 0.0);
    let mut f1 = (a, 2.0, 1.0);
    if p == 0 {
        f1 = f0;
    }
    for n in 1..p {
        let (c1, c0) = ((2 * n + 1) as f64, n as f64);
        let d = (n + 1) as f64;
        let v = (c1 * a * f1.0 - c0 * b * b * f0.0) / d;
        let vx = (c1 * (2.0 * f1.0 + a * f1.1) - c0 * b * b * f0.1) / d;
        let vy = (c1 * (f1.0 + a * f1.2) - c0 * (b * b * f0.2 - 2.0 * b * f0.0)) / d;
        f0 = f1;
        f1 = (v, vx, vy);
    }
    let alpha = 2.0 * p as f64 + 1.0;
    let s = 2.0 * y - 1.0;
    let g = jacobi(q, alpha, 0.0, s);
    let dg = if q == 0 {
        0.0
    } else {
        (q as f64 + alpha + 1.0) * jacobi(q - 1, alpha + 1.0, 1.0, s)
    };
    (f1.0 * g, f1.1 * g, f1.2 * g + f1.0 * dg)
}

/// Jacobi polynomial `P_n^{(α,β)}(s)`.
pub fn jacobi(n: usize, alpha: f64, beta: f64, s: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut p0 = 1.0;
    let mut p1 = 0.5 * (alpha - beta + (alpha + beta + 2.0) * s);
    for k in 1..n {
        let kf = k as f64;
        let c = 2.0 * kf + alpha + beta;
        let a1 = 2.0 * (kf + 1.0) * (kf + alpha + beta + 1.0) * c;
        let a2 = (c + 1.0) * (alpha * alpha - beta * beta);
        let a3 = c * (c + 1.0) * (c + 2.0);
        let a4 = 2.0 * (kf + alpha) * (kf + beta) * (c + 2.0);
        let p2 = ((a2 + a3 * s) * p1 - a4 * p0) / a1;
        p0 = p1;
        p1 = p2;
    }
    p1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{gauss_interval, gauss_triangle};

    #[test]
    fn legendre_derivatives_match_differences() {
        let h = 1e-5;
        for s in [-0.7, 0.1, 0.55] {
            let (_, dp, d2p) = legendre(7, s);
            let (pp, dpp, _) = legendre(7, s + h);
            let (pm, dpm, _) = legendre(7, s - h);
            for j in 0..=7 {
                assert!((dp[j] - (pp[j] - pm[j]) / (2.0 * h)).abs() < 1e-7);
                assert!((d2p[j] - (dpp[j] - dpm[j]) / (2.0 * h)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn bubbles_vanish_at_endpoints_and_factor() {
        for j in 2..9 {
            assert!(hierarchical_1d(j, 1.0).0.abs() < 1e-14);
            assert!(hierarchical_1d(j, -1.0).0.abs() < 1e-14);
            for s in [-0.9, -0.2, 0.3, 0.8] {
                let (l, dl) = hierarchical_1d(j, s);
                let (k, dk) = bubble_kernel(j, s);
                assert!((l - (1.0 - s * s) * k).abs() < 1e-14);
                assert!((dl - (-2.0 * s * k + (1.0 - s * s) * dk)).abs() < 1e-13);
                // parity ℓ_j(-s) = (-1)^j ℓ_j(s)
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                assert!((hierarchical_1d(j, -s).0 - sign * l).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dubiner_gradient_matches_differences() {
        let h = 1e-6;
        for p in 0..5 {
            for q in 0..5 {
                for &(x, y) in &[(0.2, 0.3), (0.05, 0.9), (0.6, 0.1)] {
                    let (v, dx, dy) = dubiner_grad(p, q, x, y);
                    assert!((v - dubiner(p, q, x, y)).abs() < 1e-13);
                    let fx = (dubiner(p, q, x + h, y) - dubiner(p, q, x - h, y)) / (2.0 * h);
                    let fy = (dubiner(p, q, x, y + h) - dubiner(p, q, x, y - h)) / (2.0 * h);
                    assert!((dx - fx).abs() < 1e-6 * (1.0 + fx.abs()), "p={p} q={q}");
                    assert!((dy - fy).abs() < 1e-6 * (1.0 + fy.abs()), "p={p} q={q}");
                }
            }
        }
    }

    #[test]
    fn dubiner_is_orthogonal() {
        let rule = gauss_triangle(14).unwrap();
        let idx: Vec<(usize, usize)> = (0..=5)
            .flat_map(|d| (0..=d).map(move |p| (p, d - p)))
            .collect();
        for &(p1, q1) in &idx {
            for &(p2, q2) in &idx {
                let g: f64 = rule
                    .iter()
                    .map(|(x, w)| w * dubiner(p1, q1, x.x, x.y) * dubiner(p2, q2, x.x, x.y))
                    .sum();
                if (p1, q1) != (p2, q2) {
                    assert!(g.abs() < 1e-13, "({p1},{q1}) ({p2},{q2}) -> {g}");
                } else {
                    assert!(g > 1e-3);
                }
            }
        }
    }

    #[test]
    fn jacobi_orthogonality() {
        let rule = gauss_interval(20).unwrap();
        for m in 0..5 {
            for n in 0..m {
                let g: f64 = rule
                    .iter()
                    .map(|(s, w)| {
                        w * (1.0 - s).powi(3) * jacobi(m, 3.0, 0.0, s) * jacobi(n, 3.0, 0.0, s)
                    })
                    .sum();
                assert!(g.abs() < 1e-13);
            }
        }
    }
}
