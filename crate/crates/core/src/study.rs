//! Convergence studies on mesh sequences: configuration, runs, CSV rows,
//! log-log SVG plots and a rate table against the expected orders.

use crate::assembly::{
    assemble, identity_permeability, max_conservation_defect, max_normal_jump, ElementKit,
};
use crate::error::{Error, Result};
use crate::errors::{exact_fields, fit_sequence, l2_errors, ErrorNorms, OrderFit};
use crate::mesh::{build_mesh, MeshFamily};
use crate::spaces::{Family, SpaceConfig};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Half-width of the accepted band around each expected slope.
pub const SLOPE_BAND: f64 = 0.2;

pub const CSV_HEADER: &str =
    "family,k,n,i,h,dofs_total,dofs_condensed,e_flux,e_pot,e_div,slope_flux,slope_pot,slope_div,status";

#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub mesh: MeshFamily,
    pub family: Family,
    pub k: usize,
    pub n_list: Vec<usize>,
    pub levels: (u32, u32),
    pub out: PathBuf,
    /// Solve the uncondensed system instead of the condensed one.
    pub direct: bool,
    /// Extra quadrature degrees on top of the default element rule.
    pub quad_bump: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            mesh: MeshFamily::Rect,
            family: Family::RT,
            k: 1,
            n_list: vec![0, 1, 2],
            levels: (2, 5),
            out: PathBuf::from("study-out"),
            direct: false,
            quad_bump: 0,
        }
    }
}

/// `0,1,3` or `0..3` (inclusive).
pub fn parse_list(s: &str) -> Result<Vec<usize>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (parse_num(a)?, parse_num(b)?);
        return Ok((a..=b).collect());
    }
    s.split(',').map(parse_num).collect()
}

fn parse_num(s: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| {
        Error::Study(format!(
            "expected a non-negative integer, got `{}`",
            s.trim()
        ))
    })
}

/// `LO..HI`, inclusive.
pub fn parse_levels(s: &str) -> Result<(u32, u32)> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| Error::Study(format!("levels must read LO..HI, got `{s}`")))?;
    Ok((parse_num(a)? as u32, parse_num(b)? as u32))
}

fn parse_bool(s: &str) -> Result<bool> {
    match s.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        o => Err(Error::Study(format!("expected a boolean, got `{o}`"))),
    }
}

impl StudyConfig {
    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "mesh" => self.mesh = v.parse()?,
            "family" => self.family = v.parse()?,
            "k" => self.k = parse_num(v)?,
            "n" => self.n_list = parse_list(v)?,
            "levels" => self.levels = parse_levels(v)?,
            "out" => self.out = PathBuf::from(v),
            "direct" => self.direct = parse_bool(v)?,
            "quad_bump" => self.quad_bump = parse_num(v)?,
            other => return Err(Error::Study(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Flat `key=value` text; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = StudyConfig::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Study(format!("line {}: expected key=value", no + 1)))?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() {
            return Err(Error::Study(
                "the list of enrichment levels n is empty".into(),
            ));
        }
        if self.family.shape() != self.mesh.shape() {
            return Err(Error::Study(format!(
                "{} spaces need {} meshes, not {}",
                self.family.name(),
                if self.family == Family::RT {
                    "rect or trap"
                } else {
                    "tri"
                },
                self.mesh.name()
            )));
        }
        let (lo, hi) = self.levels;
        if lo < 1 || hi > 8 || hi < lo + 2 {
            return Err(Error::Study(format!(
                "levels {lo}..{hi} must lie in 1..8 and span at least three meshes"
            )));
        }
        for &n in &self.n_list {
            SpaceConfig::new(self.family, self.k, n)?;
        }
        Ok(())
    }
}

/// Expected convergence orders `(flux, potential, divergence)`.
pub fn expected_orders(
    family: Family,
    mesh: MeshFamily,
    k: usize,
    n: usize,
) -> Result<(usize, usize, usize)> {
    if family.shape() != mesh.shape() || k == 0 {
        return Err(Error::InvalidConfig(format!(
            "no expected orders for {} on {} with k={k}",
            family.name(),
            mesh.name()
        )));
    }
    let flux = k + 1;
    Ok(match family {
        Family::BDM => {
            let pot = match n {
                0 => k,
                1 => k + 1,
                _ => k + 2,
            };
            (flux, pot, k + n)
        }
        Family::RT => {
            let pot = if n == 0 { k + 1 } else { k + 2 };
            let div = if mesh.is_affine() {
                k + n + 1
            } else if n == 0 {
                k
            } else {
                k + n
            };
            (flux, pot, div)
        }
    })
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub n: usize,
    pub level: u32,
    pub h: f64,
    pub dofs_total: usize,
    pub dofs_condensed: usize,
    pub errors: ErrorNorms,
    pub residual: f64,
    pub max_jump: f64,
    pub max_conservation: f64,
}

/// One solve of the manufactured problem on level `i`.
pub fn run_level(
    mesh_family: MeshFamily,
    config: SpaceConfig,
    i: u32,
    direct: bool,
    quad_bump: usize,
) -> Result<RunRecord> {
    let mesh = build_mesh(mesh_family, i)?;
    let kit = ElementKit::with_quadrature_bump(config, quad_bump)?;
    let exact = exact_fields();
    let f = |x: &nalgebra::Point2<f64>| exact.f(x);
    let ud = |x: &nalgebra::Point2<f64>| exact.u(x);
    let sys = assemble(&mesh, &kit, &identity_permeability, &f, &ud)?;
    let (sol, residual) = if direct {
        sys.solve_direct()?
    } else {
        sys.condense()?.solve()?
    };
    Ok(RunRecord {
        n: config.n,
        level: i,
        h: mesh.h,
        dofs_total: sys.dofs.n_total(),
        dofs_condensed: sys.dofs.n_condensed(),
        errors: l2_errors(&mesh, &kit, &sol, &exact)?,
        residual,
        max_jump: max_normal_jump(&mesh, &kit, &sol)?,
        max_conservation: max_conservation_defect(&mesh, &kit, &sol, &f)?,
    })
}

#[derive(Clone, Debug)]
pub struct SeriesResult {
    pub n: usize,
    pub expected: (usize, usize, usize),
    pub runs: Vec<std::result::Result<RunRecord, String>>,
    pub fits: Option<[OrderFit; 3]>,
}

impl SeriesResult {
    pub fn passed(&self) -> bool {
        let Some(f) = &self.fits else { return false };
        let e = [self.expected.0, self.expected.1, self.expected.2];
        f.iter()
            .zip(e)
            .all(|(fit, want)| (fit.least_squares - want as f64).abs() <= SLOPE_BAND)
    }

    pub fn status(&self) -> &'static str {
        if self.passed() {
            "PASS"
        } else {
            "FAIL"
        }
    }
}

#[derive(Clone, Debug)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub series: Vec<SeriesResult>,
}

impl StudyReport {
    pub fn all_passed(&self) -> bool {
        self.series.iter().all(|s| s.passed())
    }
}

/// Runs every `(n, i)` combination and fits orders per `n`. Failed runs are
/// kept as error strings.
pub fn compute_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let mut series = Vec::new();
    for &n in &cfg.n_list {
        let config = SpaceConfig::new(cfg.family, cfg.k, n)?;
        let runs: Vec<_> = (cfg.levels.0..=cfg.levels.1)
            .map(|i| {
                run_level(cfg.mesh, config, i, cfg.direct, cfg.quad_bump).map_err(|e| e.to_string())
            })
            .collect();
        let fits = if runs.iter().all(|r| r.is_ok()) {
            let ok: Vec<&RunRecord> = runs.iter().map(|r| r.as_ref().unwrap()).collect();
            let h: Vec<f64> = ok.iter().map(|r| r.h).collect();
            let fit = |g: fn(&ErrorNorms) -> f64| {
                fit_sequence(&h, &ok.iter().map(|r| g(&r.errors)).collect::<Vec<_>>())
            };
            match (fit(|e| e.flux), fit(|e| e.potential), fit(|e| e.divergence)) {
                (Ok(a), Ok(b), Ok(c)) => Some([a, b, c]),
                _ => None,
            }
        } else {
            None
        };
        series.push(SeriesResult {
            n,
            expected: expected_orders(cfg.family, cfg.mesh, cfg.k, n)?,
            runs,
            fits,
        });
    }
    Ok(StudyReport {
        config: cfg.clone(),
        series,
    })
}

fn fmt_slope(fits: &Option<[OrderFit; 3]>, kind: usize, idx: usize) -> String {
    match fits {
        Some(f) if idx > 0 => format!("{:.4}", f[kind].pairwise[idx - 1]),
        _ => String::new(),
    }
}

/// CSV rows ordered by `(family, k, n, i)`. Slope columns hold the pairwise
/// slope against the previous level; `status` is the verdict of the whole
/// `n` series, or the error message of a failed run.
pub fn csv_rows(report: &StudyReport) -> Vec<String> {
    let c = &report.config;
    let mut rows = Vec::new();
    for s in &report.series {
        for (idx, run) in s.runs.iter().enumerate() {
            let level = c.levels.0 + idx as u32;
            rows.push(match run {
                Ok(r) => format!(
                    "{},{},{},{},{:.6e},{},{},{:.6e},{:.6e},{:.6e},{},{},{},{}",
                    c.family.name(),
                    c.k,
                    s.n,
                    r.level,
                    r.h,
                    r.dofs_total,
                    r.dofs_condensed,
                    r.errors.flux,
                    r.errors.potential,
                    r.errors.divergence,
                    fmt_slope(&s.fits, 0, idx),
                    fmt_slope(&s.fits, 1, idx),
                    fmt_slope(&s.fits, 2, idx),
                    s.status()
                ),
                Err(e) => format!(
                    "{},{},{},{},,,,,,,,,,ERROR: {}",
                    c.family.name(),
                    c.k,
                    s.n,
                    level,
                    e.replace(',', ";")
                ),
            });
        }
    }
    rows
}

/// Rate table: one row per `n` with measured least-squares slopes and the
/// expected orders.
pub fn rate_table(report: &StudyReport) -> String {
    let c = &report.config;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} on {} meshes, k = {}, levels {}..{} (least-squares slope over the finest three, band ±{})",
        c.family.name(),
        c.mesh.name(),
        c.k,
        c.levels.0,
        c.levels.1,
        SLOPE_BAND
    );
    let _ = writeln!(
        out,
        "{:>3} | {:>15} | {:>15} | {:>15} | status",
        "n", "flux", "potential", "divergence"
    );
    for s in &report.series {
        let e = [s.expected.0, s.expected.1, s.expected.2];
        let cells: Vec<String> = (0..3)
            .map(|j| match &s.fits {
                Some(f) => format!("{:.2} (exp {})", f[j].least_squares, e[j]),
                None => format!("  -  (exp {})", e[j]),
            })
            .collect();
        let mut status = s.status().to_string();
        if let Some(f) = &s.fits {
            if f.iter().any(|x| !x.monotone) {
                status.push_str(" non-monotone");
            }
        }
        let _ = writeln!(
            out,
            "{:>3} | {:>15} | {:>15} | {:>15} | {}",
            s.n, cells[0], cells[1], cells[2], status
        );
    }
    out
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Self-contained log-log plot of one error kind against `h`, one line per
/// `n`, with a reference slope triangle per expected order.
pub fn svg_plot(report: &StudyReport, kind: usize) -> String {
    let title = ["flux", "potential", "divergence"][kind];
    let get = |e: &ErrorNorms| [e.flux, e.potential, e.divergence][kind];
    let pts: Vec<(usize, Vec<(f64, f64)>)> = report
        .series
        .iter()
        .map(|s| {
            (
                s.n,
                s.runs
                    .iter()
                    .filter_map(|r| r.as_ref().ok())
                    .filter(|r| get(&r.errors) > 0.0)
                    .map(|r| (r.h.log10(), get(&r.errors).log10()))
                    .collect(),
            )
        })
        .collect();
    let all: Vec<(f64, f64)> = pts.iter().flat_map(|p| p.1.iter().copied()).collect();
    let (w, hgt, m) = (640.0, 480.0, 60.0);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{hgt}" viewBox="0 0 {w} {hgt}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let c = &report.config;
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">L2 error in {title}: {} k={} on {}</text>"#,
        w / 2.0,
        c.family.name(),
        c.k,
        c.mesh.name()
    );
    if all.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let (x0, x1) = all
        .iter()
        .fold((f64::MAX, f64::MIN), |a, p| (a.0.min(p.0), a.1.max(p.0)));
    let (y0, y1) = all
        .iter()
        .fold((f64::MAX, f64::MIN), |a, p| (a.0.min(p.1), a.1.max(p.1)));
    let (x0, x1) = (x0 - 0.1, x1 + 0.1);
    let (y0, y1) = (y0.floor(), y1.ceil().max(y0.floor() + 1.0));
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| hgt - m - (y - y0) / (y1 - y0) * (hgt - 2.0 * m);
    let _ = writeln!(
        svg,
        r#"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * m,
        hgt - 2.0 * m
    );
    let mut d = y0;
    while d <= y1 + 1e-9 {
        let _ = writeln!(
            svg,
            r##"<line x1="{m}" x2="{}" y1="{y:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">1e{d}</text>"##,
            w - m,
            m - 4.0,
            sy(d) + 4.0,
            y = sy(d)
        );
        d += 1.0;
    }
    for r in report
        .series
        .first()
        .into_iter()
        .flat_map(|s| s.runs.iter().filter_map(|r| r.as_ref().ok()))
    {
        let x = sx(r.h.log10());
        let _ = writeln!(
            svg,
            r#"<text x="{x:.1}" y="{}" text-anchor="middle">1/{}</text>"#,
            hgt - m + 16.0,
            (1.0 / r.h).round()
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">h</text>"#,
        w / 2.0,
        hgt - 16.0
    );
    for (si, (n, line)) in pts.iter().enumerate() {
        let col = PALETTE[si % PALETTE.len()];
        let path: Vec<String> = line
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{col}" stroke-width="2"/>"#,
            path.join(" ")
        );
        for &(x, y) in line {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{col}"/>"#,
                sx(x),
                sy(y)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" fill="{col}">n = {n}</text>"#,
            m + 10.0,
            m + 18.0 + 16.0 * si as f64
        );
        // reference triangle below the finest segment
        let s = &report.series[si];
        let order = [s.expected.0, s.expected.1, s.expected.2][kind] as f64;
        if line.len() >= 2 {
            let (xa, ya) = line[line.len() - 2];
            let (xb, _) = line[line.len() - 1];
            let yb = ya - order * (xa - xb) - 0.3;
            let ya = ya - 0.3;
            let _ = writeln!(
                svg,
                r#"<polygon points="{:.1},{:.1} {:.1},{:.1} {:.1},{:.1}" fill="none" stroke="{col}" stroke-dasharray="4 3"/><text x="{:.1}" y="{:.1}" fill="{col}">{order}</text>"#,
                sx(xa),
                sy(ya),
                sx(xb),
                sy(yb),
                sx(xa),
                sy(yb),
                sx(xa) - 14.0,
                sy(0.5 * (ya + yb))
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Runs the study and writes `results.csv` (appending when it exists),
/// `rates.txt` and one SVG per error kind into the output directory.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    let report = compute_study(cfg)?;
    write_outputs(&report)?;
    Ok(report)
}

pub fn write_outputs(report: &StudyReport) -> Result<()> {
    use std::io::Write;
    let dir = &report.config.out;
    std::fs::create_dir_all(dir)?;
    let csv = dir.join("results.csv");
    let fresh = !csv.exists();
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&csv)?;
    if fresh {
        writeln!(f, "{CSV_HEADER}")?;
    }
    for row in csv_rows(report) {
        writeln!(f, "{row}")?;
    }
    let c = &report.config;
    let stem = format!("{}_{}_k{}", c.mesh.name(), c.family.name(), c.k);
    let mut rates = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join("rates.txt"))?;
    writeln!(rates, "{}", rate_table(report))?;
    for (kind, name) in ["flux", "potential", "divergence"].iter().enumerate() {
        std::fs::write(
            dir.join(format!("{stem}_{name}.svg")),
            svg_plot(report, kind),
        )?;
    }
    Ok(())
}

/// The default suite: every mesh family at `k = 1, 2` (and `3, 4` with
/// `big`), `n = 0..3`, levels `2..5`.
pub fn default_suite(out: &Path, big: bool) -> Vec<StudyConfig> {
    let ks: Vec<usize> = if big { vec![1, 2, 3, 4] } else { vec![1, 2] };
    let mut v = Vec::new();
    for (mesh, family) in [
        (MeshFamily::Rect, Family::RT),
        (MeshFamily::Tri, Family::BDM),
        (MeshFamily::Trap, Family::RT),
    ] {
        for &k in &ks {
            v.push(StudyConfig {
                mesh,
                family,
                k,
                n_list: vec![0, 1, 2, 3],
                levels: (2, 5),
                out: out.to_path_buf(),
                direct: false,
                quad_bump: 0,
            });
        }
    }
    v
}
