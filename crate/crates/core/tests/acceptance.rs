//! Acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_RED` are reported as FAIL but do not fail the
//! process; set `HDIV_ACCEPTANCE_STRICT=1` to make every FAIL fatal. Set
//! `HDIV_ACCEPTANCE_DEEP=1` to also print slopes on finer trapezoid meshes.

use hdiv_core::assembly::{assemble, build_dof_map, identity_permeability, ElementKit};
use hdiv_core::errors::exact_fields;
use hdiv_core::geometry::GeoMap;
use hdiv_core::mesh::{build_mesh, MeshFamily};
use hdiv_core::projection::{
    de_rham_residual, project_flux, uniqueness_probe, FluxField, FnFlux, ProjectionSystem,
};
use hdiv_core::spaces::{check_div_exactness, Family, HDivBasis, SpaceConfig};
use hdiv_core::study::{compute_study, StudyConfig, StudyReport, SLOPE_BAND};
use nalgebra::{Point2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

const KNOWN_RED: [usize; 2] = [3, 9];
const KINDS: [&str; 3] = ["flux", "potential", "divergence"];

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    details: Vec<String>,
}

fn study(
    mesh: MeshFamily,
    family: Family,
    k: usize,
    n_list: Vec<usize>,
    levels: (u32, u32),
) -> StudyReport {
    let cfg = StudyConfig {
        mesh,
        family,
        k,
        n_list,
        levels,
        out: PathBuf::from("unused"),
        ..StudyConfig::default()
    };
    compute_study(&cfg).expect("study configuration")
}

/// Checks every slope of every series and returns `(pass, detail lines)`.
fn slope_check(reports: &[StudyReport], only_divergence_and_flux: bool) -> (bool, Vec<String>) {
    let mut pass = true;
    let mut lines = Vec::new();
    for r in reports {
        let c = &r.config;
        for s in &r.series {
            let Some(fits) = &s.fits else {
                pass = false;
                let err = s
                    .runs
                    .iter()
                    .find_map(|r| r.as_ref().err())
                    .cloned()
                    .unwrap_or_default();
                lines.push(format!(
                    "{} {} k={} n={}: no fit ({err})",
                    c.mesh.name(),
                    c.family.name(),
                    c.k,
                    s.n
                ));
                continue;
            };
            let want = [s.expected.0, s.expected.1, s.expected.2];
            let mut parts = Vec::new();
            for (kind, (fit, w)) in fits.iter().zip(want).enumerate() {
                let ok = (fit.least_squares - w as f64).abs() <= SLOPE_BAND;
                let checked = !(only_divergence_and_flux && kind == 1);
                if checked {
                    pass &= ok;
                }
                let mark = if !checked {
                    " (info)"
                } else if ok {
                    ""
                } else {
                    " <-"
                };
                parts.push(format!(
                    "{} {:.3}/{}{mark}",
                    KINDS[kind], fit.least_squares, w
                ));
            }
            lines.push(format!(
                "{} {} k={} n={}: {}",
                c.mesh.name(),
                c.family.name(),
                c.k,
                s.n,
                parts.join(", ")
            ));
        }
    }
    (pass, lines)
}

fn all_monomials(d: usize) -> Vec<(i32, i32)> {
    (0..=d as i32)
        .flat_map(|a| (0..=d as i32 - a).map(move |b| (a, b)))
        .collect()
}

fn pow(x: f64, e: i32) -> f64 {
    if e < 0 {
        0.0
    } else {
        x.powi(e)
    }
}

/// Random vector polynomial of total degree `d` with its divergence.
fn random_poly_field(d: usize, rng: &mut ChaCha8Rng) -> impl FluxField {
    let mono = all_monomials(d);
    let cx: Vec<f64> = mono.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
    let cy: Vec<f64> = mono.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
    let (m1, cx1, cy1) = (mono.clone(), cx.clone(), cy.clone());
    FnFlux {
        value: move |p: &Point2<f64>| {
            let mut v = Vector2::zeros();
            for (i, &(a, b)) in m1.iter().enumerate() {
                let t = pow(p.x, a) * pow(p.y, b);
                v += Vector2::new(cx1[i] * t, cy1[i] * t);
            }
            v
        },
        divergence: move |p: &Point2<f64>| {
            mono.iter()
                .enumerate()
                .map(|(i, &(a, b))| {
                    cx[i] * a as f64 * pow(p.x, a - 1) * pow(p.y, b)
                        + cy[i] * b as f64 * pow(p.x, a) * pow(p.y, b - 1)
                })
                .sum()
        },
    }
}

fn affine_maps(family: Family) -> Vec<GeoMap> {
    match family {
        Family::RT => vec![
            GeoMap::identity_square(),
            GeoMap::quadrilateral([
                Point2::new(0.0, 0.0),
                Point2::new(0.4, 0.1),
                Point2::new(0.5, 0.6),
                Point2::new(0.1, 0.5),
            ]),
        ],
        Family::BDM => vec![
            GeoMap::identity_triangle(),
            GeoMap::triangle([
                Point2::new(0.1, 0.2),
                Point2::new(0.6, 0.1),
                Point2::new(0.3, 0.7),
            ]),
        ],
    }
}

fn general_maps(family: Family) -> Vec<GeoMap> {
    let mut maps = affine_maps(family);
    if family == Family::RT {
        maps.push(GeoMap::quadrilateral([
            Point2::new(0.0, 0.0),
            Point2::new(0.5, 0.0),
            Point2::new(0.5, 0.625),
            Point2::new(0.0, 0.375),
        ]));
    }
    maps
}

/// Member `Σ c_i v_i` of the mapped space, evaluated in physical coordinates.
struct Member<'a> {
    basis: &'a HDivBasis,
    coef: Vec<f64>,
    map: GeoMap,
}

impl Member<'_> {
    fn master_point(&self, x: &Point2<f64>) -> Point2<f64> {
        let mut xh = if self.map.is_affine() && self.basis.config.family == Family::BDM {
            Point2::new(1.0 / 3.0, 1.0 / 3.0)
        } else {
            Point2::origin()
        };
        for _ in 0..60 {
            let r = self.map.eval(&xh) - x;
            if r.norm() < 1e-15 {
                break;
            }
            xh -= self.map.jacobian(&xh).unwrap().df_inv * r;
        }
        xh
    }

    fn combine(&self, x: &Point2<f64>) -> (Point2<f64>, Vector2<f64>, f64) {
        let xh = self.master_point(x);
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
        let (xh, v, _) = self.combine(x);
        self.map.jacobian(&xh).unwrap().piola_push(&v)
    }

    fn divergence(&self, x: &Point2<f64>) -> f64 {
        let (xh, _, d) = self.combine(x);
        d / self.map.jacobian(&xh).unwrap().det
    }
}

fn all_configs(k_max: usize, n_max: usize) -> Vec<SpaceConfig> {
    let mut v = Vec::new();
    for family in [Family::RT, Family::BDM] {
        for k in 1..=k_max {
            for n in 0..=n_max {
                v.push(SpaceConfig::new(family, k, n).unwrap());
            }
        }
    }
    v
}

fn criterion_4() -> Outcome {
    let mut pass = true;
    let mut details = Vec::new();
    for mesh in [MeshFamily::Rect, MeshFamily::Tri, MeshFamily::Trap] {
        let family = if mesh == MeshFamily::Tri {
            Family::BDM
        } else {
            Family::RT
        };
        for k in 1..=4 {
            for i in 2..=5 {
                let m = build_mesh(mesh, i).unwrap();
                let formula = (k + 1) * m.n_edges() + m.n_elements();
                let mut dims = Vec::new();
                for n in 0..=3 {
                    let config = SpaceConfig::new(family, k, n).unwrap();
                    let mut dim = build_dof_map(&m, config).unwrap().n_condensed();
                    if i == 2 {
                        let kit = ElementKit::new(config).unwrap();
                        let ex = exact_fields();
                        let f = |x: &Point2<f64>| ex.f(x);
                        let ud = |x: &Point2<f64>| ex.u(x);
                        let sys = assemble(&m, &kit, &identity_permeability, &f, &ud).unwrap();
                        let assembled = sys.condense().unwrap().dim();
                        if assembled != dim {
                            dim = usize::MAX;
                        }
                    }
                    dims.push(dim);
                }
                let ok = dims.iter().all(|&d| d == formula);
                pass &= ok;
                if i == 2 || !ok {
                    details.push(format!(
                        "{} k={k} i={i}: dims {:?}, (k+1)*{} + {} = {formula}",
                        mesh.name(),
                        dims,
                        m.n_edges(),
                        m.n_elements()
                    ));
                }
            }
        }
    }
    Outcome {
        id: 4,
        name: "condensed dimension invariant in n",
        pass,
        details,
    }
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst: f64 = 0.0;
    let mut details = Vec::new();
    for config in all_configs(3, 2) {
        let sys = ProjectionSystem::new(config).unwrap();
        let mut cfg_worst: f64 = 0.0;
        for map in affine_maps(config.family) {
            for _ in 0..3 {
                let q = random_poly_field(config.order(), &mut rng);
                cfg_worst = cfg_worst.max(de_rham_residual(&sys, &q, &map).unwrap());
            }
        }
        if cfg_worst > 1e-9 {
            details.push(format!(
                "{:?} k={} n={}: {cfg_worst:.2e}",
                config.family, config.k, config.n
            ));
        }
        worst = worst.max(cfg_worst);
    }
    details.push(format!("max residual {worst:.2e} (tol 1e-9)"));
    Outcome {
        id: 5,
        name: "de Rham commutativity",
        pass: worst <= 1e-9,
        details,
    }
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1de0);
    let mut worst: f64 = 0.0;
    let mut unique = true;
    let mut details = Vec::new();
    for config in all_configs(4, 3) {
        let sys = ProjectionSystem::new(config).unwrap();
        if !uniqueness_probe(&sys) {
            unique = false;
            details.push(format!(
                "{:?} k={} n={}: uniqueness probe failed",
                config.family, config.k, config.n
            ));
            continue;
        }
        for map in general_maps(config.family) {
            let coef: Vec<f64> = (0..sys.basis.len())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let q = Member {
                basis: &sys.basis,
                coef: coef.clone(),
                map,
            };
            let p = project_flux(&sys, &q, &map).unwrap();
            let diff: f64 = p
                .iter()
                .zip(&coef)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let norm: f64 = coef.iter().map(|b| b * b).sum::<f64>().sqrt();
            worst = worst.max(diff / norm);
            if diff / norm > 1e-10 {
                details.push(format!(
                    "{:?} k={} n={}: {:.2e}",
                    config.family,
                    config.k,
                    config.n,
                    diff / norm
                ));
            }
        }
    }
    details.push(format!(
        "max relative reproduction error {worst:.2e} (tol 1e-10), 32 configs"
    ));
    Outcome {
        id: 6,
        name: "projection idempotence and uniqueness",
        pass: unique && worst <= 1e-10,
        details,
    }
}

fn criterion_7(reports: &[&StudyReport]) -> Outcome {
    let (mut jump, mut cons, mut res) = (0.0f64, 0.0f64, 0.0f64);
    let mut runs = 0;
    let mut failed = 0;
    for r in reports {
        for s in &r.series {
            for run in &s.runs {
                match run {
                    Ok(rec) => {
                        runs += 1;
                        jump = jump.max(rec.max_jump);
                        cons = cons.max(rec.max_conservation);
                        res = res.max(rec.residual);
                    }
                    Err(_) => failed += 1,
                }
            }
        }
    }
    let pass = failed == 0 && jump <= 1e-10 && cons <= 1e-10 && res <= 1e-10;
    Outcome {
        id: 7,
        name: "conformity and conservation",
        pass,
        details: vec![format!(
            "{runs} runs ({failed} failed): max jump {jump:.2e}, max conservation defect {cons:.2e}, max residual {res:.2e} (tol 1e-10)"
        )],
    }
}

fn criterion_8() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut details = Vec::new();
    for config in all_configs(4, 3) {
        let r = check_div_exactness(config).unwrap();
        if r > 1e-10 {
            details.push(format!(
                "{:?} k={} n={}: {r:.2e}",
                config.family, config.k, config.n
            ));
        }
        worst = worst.max(r);
    }
    details.push(format!("max residual {worst:.2e} (tol 1e-10)"));
    Outcome {
        id: 8,
        name: "divergence exactness of bases",
        pass: worst <= 1e-10,
        details,
    }
}

fn criterion_9(reports: &[&StudyReport]) -> Outcome {
    let mut pass = true;
    let mut details = Vec::new();
    for r in reports {
        let c = &r.config;
        let at4 = |n: usize| {
            r.series
                .iter()
                .find(|s| s.n == n)
                .and_then(|s| {
                    s.runs
                        .iter()
                        .filter_map(|x| x.as_ref().ok())
                        .find(|x| x.level == 4)
                })
                .map(|x| x.errors.flux)
        };
        let vals: Option<Vec<f64>> = (0..=2).map(at4).collect();
        let Some(vals) = vals else {
            pass = false;
            details.push(format!("{} k={}: missing level 4 run", c.mesh.name(), c.k));
            continue;
        };
        let spread = |v: &[f64]| {
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(0.0, f64::max);
            (hi - lo) / lo
        };
        let all = spread(&vals);
        pass &= all < 0.05;
        details.push(format!(
            "{} {} k={}: e_flux {:.4e} {:.4e} {:.4e}, variation {:.1}% (n=1,2 only: {:.1}%)",
            c.mesh.name(),
            c.family.name(),
            c.k,
            vals[0],
            vals[1],
            vals[2],
            100.0 * all,
            100.0 * spread(&vals[1..])
        ));
    }
    Outcome {
        id: 9,
        name: "flux insensitive to enrichment at i=4",
        pass,
        details,
    }
}

fn deep_trapezoid() -> Vec<String> {
    let mut lines = Vec::new();
    for (k, levels) in [(1, (5, 8)), (2, (4, 7))] {
        let r = study(MeshFamily::Trap, Family::RT, k, vec![0, 1], levels);
        let (_, l) = slope_check(&[r], true);
        lines.extend(
            l.into_iter()
                .map(|s| format!("levels {}..{} {s}", levels.0, levels.1)),
        );
    }
    lines
}

fn main() -> ExitCode {
    let strict = std::env::var("HDIV_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let deep = std::env::var("HDIV_ACCEPTANCE_DEEP").is_ok_and(|v| v == "1");
    let start = Instant::now();

    let rect: Vec<_> = (1..=2)
        .map(|k| study(MeshFamily::Rect, Family::RT, k, vec![0, 1, 2], (2, 5)))
        .collect();
    let tri = study(MeshFamily::Tri, Family::BDM, 2, vec![0, 1, 2], (2, 5));
    let trap: Vec<_> = (1..=2)
        .map(|k| study(MeshFamily::Trap, Family::RT, k, vec![0, 1, 2, 3], (2, 5)))
        .collect();

    let mut outcomes = Vec::new();
    let (pass, details) = slope_check(&rect, false);
    outcomes.push(Outcome {
        id: 1,
        name: "rect/RT orders",
        pass,
        details,
    });
    let (pass, details) = slope_check(std::slice::from_ref(&tri), false);
    outcomes.push(Outcome {
        id: 2,
        name: "tri/BDM orders",
        pass,
        details,
    });
    let (pass, details) = slope_check(&trap, true);
    outcomes.push(Outcome {
        id: 3,
        name: "trap/RT divergence and flux orders",
        pass,
        details,
    });
    outcomes.push(criterion_4());
    outcomes.push(criterion_5());
    outcomes.push(criterion_6());
    let every: Vec<&StudyReport> = rect
        .iter()
        .chain(std::iter::once(&tri))
        .chain(trap.iter())
        .collect();
    outcomes.push(criterion_7(&every));
    outcomes.push(criterion_8());
    outcomes.push(criterion_9(&every));

    let mut fatal = false;
    for o in &outcomes {
        let known = KNOWN_RED.contains(&o.id);
        let tag = match (o.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("criterion {}: {tag} - {}", o.id, o.name);
        for d in &o.details {
            println!("    {d}");
        }
        fatal |= !o.pass && (strict || !known);
    }
    if deep {
        println!("INFO trapezoid slopes on finer meshes:");
        for l in deep_trapezoid() {
            println!("    {l}");
        }
    }
    let n_pass = outcomes.iter().filter(|o| o.pass).count();
    println!(
        "{n_pass}/{} criteria passed in {:.1} s{}",
        outcomes.len(),
        start.elapsed().as_secs_f64(),
        if strict { " (strict)" } else { "" }
    );
    if fatal {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
