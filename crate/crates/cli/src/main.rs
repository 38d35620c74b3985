use clap::{Args, Parser, Subcommand};
use hdiv_core::mesh::{build_mesh, MeshFamily};
use hdiv_core::spaces::Family;
use hdiv_core::study::{default_suite, parse_levels, parse_list, run_study, StudyConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "hdiv",
    version,
    about = "Convergence studies for enriched H(div) mixed elements"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a convergence study; with no mesh/family/k/n/levels/config the
    /// default suite runs.
    Study(StudyArgs),
    /// Print a mesh as `v x y` and `e shape v0 v1 ...` lines.
    Mesh {
        #[arg(long)]
        mesh: MeshFamily,
        #[arg(long)]
        level: u32,
    },
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    mesh: Option<MeshFamily>,
    #[arg(long)]
    family: Option<Family>,
    #[arg(long)]
    k: Option<usize>,
    /// Enrichment levels, `0,1,2` or `0..3`.
    #[arg(long)]
    n: Option<String>,
    /// Refinement levels `LO..HI`.
    #[arg(long)]
    levels: Option<String>,
    #[arg(long, default_value = "study-out")]
    out: PathBuf,
    /// Solve the uncondensed system.
    #[arg(long)]
    direct: bool,
    /// Include k = 3, 4 in the default suite.
    #[arg(long)]
    big: bool,
    /// `key=value` config file; command-line options override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra quadrature degrees.
    #[arg(long)]
    quad_bump: Option<usize>,
}

fn build_configs(a: &StudyArgs) -> hdiv_core::Result<Vec<StudyConfig>> {
    let custom = a.mesh.is_some()
        || a.family.is_some()
        || a.k.is_some()
        || a.n.is_some()
        || a.levels.is_some()
        || a.config.is_some();
    let mut configs = if custom {
        let mut c = match &a.config {
            Some(p) => StudyConfig::from_file(p)?,
            None => StudyConfig::default(),
        };
        if a.config.is_none() || a.out.as_path() != std::path::Path::new("study-out") {
            c.out = a.out.clone();
        }
        if let Some(m) = a.mesh {
            c.mesh = m;
            if a.family.is_none() && a.config.is_none() {
                c.family = if m == MeshFamily::Tri {
                    Family::BDM
                } else {
                    Family::RT
                };
            }
        }
        if let Some(f) = a.family {
            c.family = f;
        }
        if let Some(k) = a.k {
            c.k = k;
        }
        if let Some(n) = &a.n {
            c.n_list = parse_list(n)?;
        }
        if let Some(l) = &a.levels {
            c.levels = parse_levels(l)?;
        }
        vec![c]
    } else {
        default_suite(&a.out, a.big)
    };
    for c in &mut configs {
        c.direct |= a.direct;
        if let Some(b) = a.quad_bump {
            c.quad_bump = b;
        }
        c.validate()?;
    }
    Ok(configs)
}

fn study(a: StudyArgs) -> hdiv_core::Result<bool> {
    let mut all = true;
    for c in build_configs(&a)? {
        let report = run_study(&c)?;
        print!("{}", hdiv_core::study::rate_table(&report));
        println!();
        all &= report.all_passed();
    }
    println!("outputs written to {}", a.out.display());
    Ok(all)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Study(a) => match study(a) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(1),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Mesh { mesh, level } => match build_mesh(mesh, level) {
            Ok(m) => {
                print!("{}", m.dump());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
    }
}
