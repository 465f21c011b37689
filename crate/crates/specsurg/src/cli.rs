//! The `specsurg` command line.
//!
//! Exit codes: 0 success, 1 invalid input, 2 numerical failure, 3 a
//! verification suite reported a failing check.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::grid;
use crate::jsonfmt;
use crate::matops::{c, C64};
use crate::potential::{BoundaryCondition, Catalog, Potential, Problem};
use crate::solver::{scattering_scan, SolverConfig};
use crate::spectra::{find_bound_states, SearchOptions};
use crate::surgery::{self, SurgeryPlan};
use crate::verify::{self, Level, Report};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "specsurg", version, about = "Scattering data and bound-state surgery for half-line matrix Schrodinger operators")]
struct Cli {
    /// Worker threads for k-grids (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scattering matrix on a uniform k-grid, written as CSV.
    Scatter {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        kmin: f64,
        #[arg(long)]
        kmax: f64,
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bound states with their projections and normalization matrices.
    Spectrum {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        kappa_max: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply a surgery plan.
    Surgery {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the new potential as CSV: x, then row-major Re/Im of V.
        #[arg(long)]
        grid_out: Option<PathBuf>,
    },
    /// Run a verification suite.
    Verify {
        #[arg(long, value_enum)]
        suite: Suite,
        /// Problem for the battery and Parseval suites (default: free Dirichlet, n = 2).
        #[arg(long)]
        problem: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = LevelArg::Quick)]
        level: LevelArg,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Write the report as JSON as well as printing the table.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// List catalog potentials or write a problem file for one.
    Catalog {
        #[arg(long, conflicts_with = "emit")]
        list: bool,
        /// Catalog name to write as a problem file.
        #[arg(long)]
        emit: Option<String>,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, value_enum, default_value_t = BoundaryArg::Dirichlet)]
        boundary: BoundaryArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Suite {
    Golden,
    Battery,
    Parseval,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LevelArg {
    Quick,
    Full,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BoundaryArg {
    Dirichlet,
    Neumann,
}

/// Parse `argv` (program name first), run, and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.threads {
        Some(0) => Err(Error::validation("--threads must be positive")),
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| execute(cli.command)),
            Err(e) => Err(Error::validation(format!("--threads: {e}"))),
        },
        None => execute(cli.command),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("specsurg: {e}");
            e.exit_code()
        }
    }
}

fn load_problem(path: &Path) -> Result<Problem> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::validation(format!("--problem {}: {e}", path.display())))?;
    let value = serde_json::from_str(&text)
        .map_err(|e| Error::validation(format!("--problem {}: invalid JSON: {e}", path.display())))?;
    let problem = Problem::from_json(&value)?;
    problem.ensure_valid()?;
    Ok(problem)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::validation(format!("{}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn execute(cmd: Command) -> Result<i32> {
    let cfg = SolverConfig::default();
    match cmd {
        Command::Scatter { problem, kmin, kmax, points, out } => {
            let p = load_problem(&problem)?;
            if !(kmin.is_finite() && kmax.is_finite() && kmin < kmax) || points < 2 {
                return Err(Error::validation("scatter: need finite kmin < kmax and points >= 2"));
            }
            let ks = verify::linspace(kmin, kmax, points);
            if ks.contains(&0.0) {
                return Err(Error::validation("scatter: k = 0 is excluded from the grid"));
            }
            let s = scattering_scan(&p, &ks, &cfg)?;
            let n = p.n();
            let mut text = String::from("k");
            for i in 0..n {
                for j in 0..n {
                    let _ = write!(text, ",re_S{i}{j},im_S{i}{j}");
                }
            }
            for (k, m) in ks.iter().zip(&s) {
                text.push('\n');
                text.push_str(&fmt(*k));
                for i in 0..n {
                    for j in 0..n {
                        let _ = write!(text, ",{},{}", fmt(m[(i, j)].re), fmt(m[(i, j)].im));
                    }
                }
            }
            emit(out.as_deref(), &text)?;
            Ok(EXIT_OK)
        }
        Command::Spectrum { problem, kappa_max, out } => {
            let p = load_problem(&problem)?;
            if let Some(k) = kappa_max {
                if !(k.is_finite() && k > 0.0) {
                    return Err(Error::validation("spectrum: --kappa-max must be positive"));
                }
            }
            let opts = SearchOptions { kappa_max, ..SearchOptions::default() };
            let spec = find_bound_states(&p, &opts, &cfg)?;
            emit(out.as_deref(), &jsonfmt::to_string(&spec.to_json())?)?;
            Ok(EXIT_OK)
        }
        Command::Surgery { problem, plan, out, grid_out } => {
            let p = load_problem(&problem)?;
            let plan = SurgeryPlan::load(&plan, p.n())?;
            let result = surgery::apply(&p, &plan, &cfg)?;
            emit(out.as_deref(), &jsonfmt::to_string(&result.to_json())?)?;
            if let Some(path) = grid_out {
                let pot = &result.problem.potential;
                let xs = match pot.grid_nodes() {
                    Some(x) => x.to_vec(),
                    None => grid::uniform(pot.x_max().max(1.0), cfg.h_grid),
                };
                emit(Some(&path), &potential_csv(pot, &xs))?;
            }
            Ok(EXIT_OK)
        }
        Command::Verify { suite, problem, level, seed, json } => {
            let level = match level {
                LevelArg::Quick => Level::Quick,
                LevelArg::Full => Level::Full,
            };
            let report: Report = match suite {
                Suite::Golden => verify::golden_example89(&cfg),
                Suite::Battery | Suite::Parseval => {
                    let p = match problem {
                        Some(path) => load_problem(&path)?,
                        None => Problem::free_dirichlet(2),
                    };
                    if matches!(suite, Suite::Battery) {
                        verify::invariant_battery(&p, level, seed, &cfg)
                    } else {
                        let n = p.n();
                        let v: Vec<C64> = vec![c(1.0 / (n as f64).sqrt(), 0.0); n];
                        verify::parseval_smeared(&p, &v, 60.0, 2000, &cfg)
                    }
                }
            };
            print!("{}", report.table());
            if let Some(path) = json {
                emit(Some(&path), &jsonfmt::to_string(&report.to_json())?)?;
            }
            Ok(if report.pass() { EXIT_OK } else { EXIT_VERIFY })
        }
        Command::Catalog { list, emit: name, n, boundary, out } => {
            if list || name.is_none() {
                let mut text = String::new();
                for cat in Catalog::ALL {
                    let _ = writeln!(text, "{:<22} {}", cat.name(), cat.describe());
                }
                print!("{text}");
                return Ok(EXIT_OK);
            }
            let cat = Catalog::from_name(name.as_deref().unwrap_or_default())?;
            let n = cat.fixed_dim().unwrap_or(n);
            let bc = match boundary {
                BoundaryArg::Dirichlet => BoundaryCondition::dirichlet(n),
                BoundaryArg::Neumann => BoundaryCondition::neumann(n),
            };
            let p = Problem::new(Potential::catalog(cat, n)?, bc)?;
            emit(out.as_deref(), &jsonfmt::to_string(&p.to_json())?)?;
            Ok(EXIT_OK)
        }
    }
}

fn potential_csv(pot: &Potential, xs: &[f64]) -> String {
    let n = pot.n;
    let mut text = String::from("x");
    for i in 0..n {
        for j in 0..n {
            let _ = write!(text, ",re_V{i}{j},im_V{i}{j}");
        }
    }
    for &x in xs {
        let v = pot.sample(x);
        text.push('\n');
        text.push_str(&fmt(x));
        for i in 0..n {
            for j in 0..n {
                let _ = write!(text, ",{},{}", fmt(v[(i, j)].re), fmt(v[(i, j)].im));
            }
        }
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_errors_are_validation_failures() {
        assert_eq!(run(["specsurg", "scatter"]), EXIT_INVALID);
        assert_eq!(run(["specsurg", "verify", "--suite", "nope"]), EXIT_INVALID);
        assert_eq!(run(["specsurg", "--help"]), EXIT_OK);
    }

    #[test]
    fn catalog_list() {
        assert_eq!(run(["specsurg", "catalog", "--list"]), EXIT_OK);
    }

    #[test]
    fn missing_problem_file() {
        assert_eq!(run(["specsurg", "spectrum", "--problem", "/nonexistent/p.json"]), EXIT_INVALID);
    }

    #[test]
    fn csv_header_order() {
        let csv = potential_csv(&Potential::free(2), &[0.0, 1.0]);
        let header = csv.lines().next().unwrap();
        assert_eq!(header, "x,re_V00,im_V00,re_V01,im_V01,re_V10,im_V10,re_V11,im_V11");
        assert_eq!(csv.lines().count(), 3);
    }
}
