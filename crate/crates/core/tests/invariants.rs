use hdiv_core::errors::fit_sequence;
use hdiv_core::geometry::GeoMap;
use hdiv_core::mesh::{build_mesh, MeshFamily};
use hdiv_core::projection::{boundary_flux_defect, project_flux, FluxField, ProjectionSystem};
use hdiv_core::solver::{factor_and_solve, relative_residual, SparseMatrix};
use hdiv_core::spaces::{Family, HDivBasis, SpaceConfig};
use nalgebra::{Point2, Vector2};
use proptest::prelude::*;

/// Member of the mapped space with master coefficients `coef`.
struct Member<'a> {
    basis: &'a HDivBasis,
    coef: Vec<f64>,
    map: GeoMap,
}

impl Member<'_> {
    fn eval(&self, x: &Point2<f64>) -> (Point2<f64>, Vector2<f64>, f64) {
        let mut xh = match self.map {
            GeoMap::Linear { .. } => Point2::new(1.0 / 3.0, 1.0 / 3.0),
            _ => Point2::origin(),
        };
        for _ in 0..60 {
            let r = self.map.eval(&xh) - x;
            if r.norm() < 1e-15 {
                break;
            }
            xh -= self.map.jacobian(&xh).unwrap().df_inv * r;
        }
        let mut v = Vector2::zeros();
        let mut d = 0.0;
        for ((vi, di), c) in self.basis.eval(&xh).iter().zip(&self.coef) {
            v += vi * *c;
            d += di * c;
        }
        (xh, v, d)
    }
}

impl FluxField for Member<'_> {
    fn value(&self, x: &Point2<f64>) -> Vector2<f64> {
        let (xh, v, _) = self.eval(x);
        self.map.jacobian(&xh).unwrap().piola_push(&v)
    }

    fn divergence(&self, x: &Point2<f64>) -> f64 {
        let (xh, _, d) = self.eval(x);
        d / self.map.jacobian(&xh).unwrap().det
    }
}

fn quad_strategy() -> impl Strategy<Value = GeoMap> {
    prop::array::uniform8(-0.15..0.15f64).prop_map(|d| {
        GeoMap::quadrilateral([
            Point2::new(0.0 + d[0], 0.0 + d[1]),
            Point2::new(1.0 + d[2], 0.0 + d[3]),
            Point2::new(1.0 + d[4], 1.0 + d[5]),
            Point2::new(0.0 + d[6], 1.0 + d[7]),
        ])
    })
}

fn tri_strategy() -> impl Strategy<Value = GeoMap> {
    prop::array::uniform6(-0.2..0.2f64).prop_map(|d| {
        GeoMap::triangle([
            Point2::new(0.0 + d[0], 0.0 + d[1]),
            Point2::new(1.0 + d[2], 0.0 + d[3]),
            Point2::new(0.0 + d[4], 1.0 + d[5]),
        ])
    })
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    d / b.iter().map(|y| y * y).sum::<f64>().sqrt()
}

fn check_reproduction(
    family: Family,
    k: usize,
    n: usize,
    map: GeoMap,
    seed: Vec<f64>,
) -> Result<(), TestCaseError> {
    let sys = ProjectionSystem::new(SpaceConfig::new(family, k, n).unwrap()).unwrap();
    let coef: Vec<f64> = (0..sys.basis.len())
        .map(|i| seed[i % seed.len()] + 0.1 * i as f64)
        .collect();
    let q = Member {
        basis: &sys.basis,
        coef: coef.clone(),
        map,
    };
    let p = project_flux(&sys, &q, &map).unwrap();
    prop_assert!(rel_err(&p, &coef) < 1e-10);
    prop_assert!(boundary_flux_defect(&sys, &q, &map).unwrap() < 1e-10);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rt_projection_reproduces_members(
        map in quad_strategy(),
        k in 1usize..=3,
        n in 0usize..=2,
        seed in prop::collection::vec(-1.0..1.0f64, 8),
    ) {
        check_reproduction(Family::RT, k, n, map, seed)?;
    }

    #[test]
    fn bdm_projection_reproduces_members(
        map in tri_strategy(),
        k in 1usize..=3,
        n in 0usize..=2,
        seed in prop::collection::vec(-1.0..1.0f64, 8),
    ) {
        check_reproduction(Family::BDM, k, n, map, seed)?;
    }

    #[test]
    fn geometric_errors_give_exact_slopes(c in 0.01..100.0f64, p in 0.5..6.0f64, levels in 3usize..7) {
        let h: Vec<f64> = (0..levels).map(|i| 0.5f64.powi(i as i32 + 1)).collect();
        let e: Vec<f64> = h.iter().map(|h| c * h.powf(p)).collect();
        let fit = fit_sequence(&h, &e).unwrap();
        prop_assert!((fit.least_squares - p).abs() < 1e-9);
        prop_assert!(fit.pairwise.iter().all(|s| (s - p).abs() < 1e-9));
        prop_assert!(fit.monotone);
    }

    #[test]
    fn solver_on_random_diagonally_dominant_systems(
        dim in 2usize..60,
        entries in prop::collection::vec((0usize..60, 0usize..60, -1.0..1.0f64), 0..300),
        rhs_seed in -1.0..1.0f64,
    ) {
        let mut trip: Vec<(usize, usize, f64)> =
            entries.into_iter().filter(|(i, j, _)| *i < dim && *j < dim && i != j).collect();
        let mut row_sum = vec![0.0; dim];
        for (i, _, v) in &trip {
            row_sum[*i] += v.abs();
        }
        for (i, s) in row_sum.iter().enumerate() {
            trip.push((i, i, s + 1.0));
        }
        let a = SparseMatrix::from_triplets(dim, &trip, false);
        let b: Vec<f64> = (0..dim).map(|i| (i as f64 * 0.37 + rhs_seed).sin()).collect();
        let x = factor_and_solve(&a, &b).unwrap();
        prop_assert!(relative_residual(&a, &x, &b) < 1e-12);
    }

    #[test]
    fn relabeling_keeps_topology(seed in any::<u64>(), level in 1u32..4, family in 0usize..3) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mesh_family = [MeshFamily::Rect, MeshFamily::Tri, MeshFamily::Trap][family];
        let mesh = build_mesh(mesh_family, level).unwrap();
        let mut perm: Vec<usize> = (0..mesh.n_vertices()).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let r = mesh.relabel_vertices(&perm);
        prop_assert_eq!(r.n_edges(), mesh.n_edges());
        prop_assert_eq!(r.n_boundary_edges(), mesh.n_boundary_edges());
        prop_assert!((r.total_area() - 1.0).abs() < 1e-12);
    }
}
