//! `grenander-kl` command line.
//!
//! Exit codes: 0 success, 2 invalid input or usage, 3 target not applicable,
//! 4 numeric failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::density::PiecewisePolyDensity;
use crate::error::{invalid, Error, Result};
use crate::experiments::{self, density_hash, ExperimentConfig};
use crate::grenander;
use crate::integrand::Preset;
use crate::limit::{LimitSpec, LimitTarget, DEFAULT_BRIDGE_GRID};
use crate::projection::{decompose_regions, kl_projection, DecompositionExport, DEFAULT_GRID, DEFAULT_REGION_TOL};

#[derive(Debug, Parser)]
#[command(name = "grenander-kl", version, about = "Grenander estimation under misspecification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// KL projection and region decomposition of a density, as JSON.
    Project {
        #[arg(long)]
        density: String,
        #[arg(long, default_value_t = DEFAULT_GRID)]
        grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grenander fit of a sample file, as CSV of (breakpoint, level).
    Fit {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-sample replication against the limit law.
    Simulate {
        #[command(flatten)]
        target: TargetArgs,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long = "B", default_value_t = 1000)]
        b: usize,
        /// Limit draws for the comparison.
        #[arg(long = "R", default_value_t = 20_000)]
        r: usize,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Output directory for qq.csv, replicates.csv and summary.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draws from a limit law.
    Limit {
        #[command(flatten)]
        target: TargetArgs,
        #[arg(long = "R", default_value_t = 20_000)]
        r: usize,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// QQ pairs and two-sample KS statistic of two sample files.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tail frequencies of the estimator at a flat-block point against the exponential bounds.
    Audit {
        #[arg(long)]
        density: String,
        #[arg(long)]
        x0: f64,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 1.0, 2.0])]
        t: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long = "B", default_value_t = 5000)]
        b: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TargetKind {
    Pointwise,
    Linear,
    Entropy,
}

#[derive(Debug, Args)]
struct TargetArgs {
    /// Preset name (eg1, eg2, uniform) or path to a density JSON file.
    #[arg(long)]
    density: String,
    #[arg(long, value_enum)]
    target: TargetKind,
    #[arg(long)]
    x0: Option<f64>,
    /// identity | square | exp | const | const:<c>
    #[arg(long, default_value = "identity")]
    g: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_GRID)]
    grid: usize,
    #[arg(long, default_value_t = DEFAULT_BRIDGE_GRID)]
    bridge_grid: usize,
}

impl TargetArgs {
    fn target(&self) -> Result<LimitTarget> {
        Ok(match self.target {
            TargetKind::Pointwise => {
                LimitTarget::Pointwise { x0: self.x0.ok_or_else(|| invalid("--target pointwise needs --x0"))? }
            }
            TargetKind::Linear => LimitTarget::Linear {
                g: Preset::parse(&self.g).ok_or_else(|| invalid(format!("unknown integrand {:?}", self.g)))?,
            },
            TargetKind::Entropy => LimitTarget::Entropy,
        })
    }

    fn config(&self) -> Result<ExperimentConfig> {
        let density = PiecewisePolyDensity::load(&self.density)?;
        let mut c = ExperimentConfig::new(density, &self.density, self.target()?);
        c.seed = self.seed;
        c.grid = self.grid;
        c.bridge_grid = self.bridge_grid;
        Ok(c)
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NotApplicable(_) => 3,
        Error::Numeric(_) => 4,
        Error::InvalidInput(_) | Error::Domain(_) | Error::Io(_) | Error::Json(_) => 2,
    }
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            let _ =
                if code == 0 { stdout.write_all(rendered.as_bytes()) } else { stderr.write_all(rendered.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn emit(out: &Option<PathBuf>, body: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, body)?,
        None => stdout.write_all(body.as_bytes())?,
    }
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct ProjectOutput {
    config: ProjectConfig,
    #[serde(flatten)]
    decomposition: DecompositionExport,
}

#[derive(Serialize)]
struct ProjectConfig {
    density: String,
    density_sha256: String,
    grid: usize,
    tol: f64,
}

fn read_samples(path: &Path) -> Result<(Vec<f64>, String)> {
    let text = std::fs::read_to_string(path)?;
    Ok((grenander::parse_samples(&text)?, sha256_hex(text.as_bytes())))
}

fn dispatch(cmd: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Project { density, grid, out } => {
            let d = PiecewisePolyDensity::load(&density)?;
            let _ = writeln!(stderr, "project: density={density} density_sha256={} grid={grid}", density_hash(&d));
            let proj = kl_projection(&d, grid)?;
            let decomp = decompose_regions(&d, &proj, DEFAULT_REGION_TOL)?;
            let body = ProjectOutput {
                config: ProjectConfig { density_sha256: density_hash(&d), density, grid, tol: DEFAULT_REGION_TOL },
                decomposition: decomp.export(),
            };
            emit(&out, &(serde_json::to_string_pretty(&body)? + "\n"), stdout)
        }
        Command::Fit { samples, out } => {
            let (values, hash) = read_samples(&samples)?;
            let line = format!("samples={} samples_sha256={hash} n={}", samples.display(), values.len());
            let _ = writeln!(stderr, "fit: {line}");
            let fit = grenander::fit(&values)?;
            emit(&out, &format!("# {line}\n{}", fit.to_csv()), stdout)
        }
        Command::Simulate { target, n, b, r, workers, out } => {
            let mut c = target.config()?;
            c.n = n;
            c.replicates = b;
            c.limit_draws = r;
            c.workers = workers;
            let _ = writeln!(stderr, "simulate: {} workers={workers}", c.effective().line());
            let report = experiments::run_finite_sample(&c)?;
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    std::fs::write(dir.join("qq.csv"), report.to_csv())?;
                    std::fs::write(dir.join("replicates.csv"), report.replicates_csv())?;
                    std::fs::write(dir.join("summary.json"), report.to_json() + "\n")?;
                    Ok(())
                }
                None => emit(&None, &report.to_csv(), stdout),
            }
        }
        Command::Limit { target, r, workers, out } => {
            let mut c = target.config()?;
            c.workers = workers;
            c.limit_draws = r;
            let line = c.effective().line();
            let _ = writeln!(stderr, "limit: {line} workers={workers}");
            let draws = experiments::run_limit(&c, r)?;
            let mut spec = LimitSpec::new(c.decomposition()?, c.target);
            spec.bridge_grid = c.bridge_grid;
            spec.draws = r;
            emit(&out, &format!("# {line}\n{}", spec.to_csv(c.seed, &draws)), stdout)
        }
        Command::Compare { a, b, out } => {
            let (xa, ha) = read_samples(&a)?;
            let (xb, hb) = read_samples(&b)?;
            let probs = experiments::probability_grid(xa.len().min(xb.len()));
            let pairs = experiments::qq_pairs(&xa, &xb, &probs)?;
            let ks = experiments::ks_two_sample(&xa, &xb)?;
            let line = format!(
                "a={} a_sha256={ha} a_n={} b={} b_sha256={hb} b_n={}",
                a.display(),
                xa.len(),
                b.display(),
                xb.len()
            );
            let _ = writeln!(stderr, "compare: {line}");
            let mut body = format!("# {line}\n# ks={ks}\nprob,quantile_a,quantile_b\n");
            for (p, (qa, qb)) in probs.iter().zip(pairs) {
                let _ = writeln!(body, "{p},{qa},{qb}");
            }
            emit(&out, &body, stdout)
        }
        Command::Audit { density, x0, t, n, b, seed, out } => {
            let d = PiecewisePolyDensity::load(&density)?;
            let _ = writeln!(
                stderr,
                "audit: density={density} density_sha256={} x={x0} n={n} B={b} seed={seed}",
                density_hash(&d)
            );
            let audit = experiments::tail_bound_audit(&d, x0, &t, n, b, seed)?;
            let body = format!("# density={density} density_sha256={}\n{}", density_hash(&d), audit.to_csv());
            emit(&out, &body, stdout)?;
            if audit.any_violation() {
                let _ = writeln!(stderr, "audit: bound violated beyond 3 standard errors");
            }
            Ok(())
        }
    }
}
