//! Command-line front end: evaluate characteristic tensors at a point,
//! run the verification suite, scan for definiteness violations, and
//! export indicatrix meshes. Exit codes: 0 success, 1 verification
//! failure, 2 usage or configuration error.

use clap::{Args, Parser, Subcommand};
use finsler_core::config::ConfigFile;
use finsler_core::diagnostics::{
    pd_expectation, run_invariant_suite, scan_positive_definiteness, SuiteOptions,
    SCAN_SAMPLES_DEFAULT,
};
use finsler_core::geometry::{eval_norm, Chart, EvalPoint, FamilyKind, NormSpec, SignBranch};
use finsler_core::indicatrix::{
    default_grid, euler_characteristic, indicatrix_union, randers_ellipsoid, to_csv, to_obj,
    toroid_residual, DirectionGrid, SLIT_BAND_DEFAULT,
};
use finsler_core::tensors::{
    cyclic_residuals, euler_residuals, mean_cartan_residual, tensor_set_from_jets, vanish_ratio,
};
use finsler_core::{Error, Result};
use nalgebra::DVector;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "finsler",
    version,
    about = "Evaluate and verify norms of the form rho +/- sigma with conelike singular sets"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate the characteristic tensors at one fiber point
    Tensors(TensorsArgs),
    /// Run the identity and definiteness verification suite
    Verify(CommonArgs),
    /// Scan the fundamental tensor for definiteness violations
    ProbeSlit(CommonArgs),
    /// Sample the indicatrix union and export meshes
    Indicatrix(IndicatrixArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Norm configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Sampling seed (overrides the configuration)
    #[arg(long)]
    seed: Option<u64>,
    /// Sample count (overrides the configuration)
    #[arg(long)]
    samples: Option<usize>,
    /// Minimum admissible slit distance (overrides the configuration)
    #[arg(long)]
    delta_min: Option<f64>,
    /// Directory for report files (falls back to FINSLER_OUT)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TensorsArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Fiber vector as comma-separated floats (overrides evaluation.y)
    #[arg(long)]
    y: Option<String>,
}

#[derive(Args)]
struct IndicatrixArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Icosphere subdivisions (dimension 3)
    #[arg(long)]
    subdivisions: Option<usize>,
    /// Point count for circle / low-discrepancy grids
    #[arg(long)]
    count: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Tensors(args) => cmd_tensors(args),
        Cmd::Verify(args) => cmd_verify(args),
        Cmd::ProbeSlit(args) => cmd_probe(args),
        Cmd::Indicatrix(args) => cmd_indicatrix(args),
    }
}

fn load(common: &CommonArgs) -> Result<(ConfigFile, NormSpec)> {
    let cfg = ConfigFile::load(&common.config)?;
    let mut spec = cfg.to_norm_spec()?;
    if let Some(d) = common.delta_min {
        if !(0.0..1.0).contains(&d) {
            return Err(Error::Config(format!("delta_min must lie in [0, 1), got {d}")));
        }
        spec.delta_min = d;
    }
    Ok((cfg, spec))
}

fn out_dir(common: &CommonArgs) -> Option<PathBuf> {
    common
        .out
        .clone()
        .or_else(|| std::env::var_os("FINSLER_OUT").map(PathBuf::from))
}

fn write_out(dir: &Path, name: &str, bytes: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), bytes)?;
    Ok(())
}

fn parse_vector(text: &str, dim: usize) -> Result<DVector<f64>> {
    let vals: Vec<f64> = text
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad float {t:?} in --y")))
        })
        .collect::<Result<_>>()?;
    if vals.len() != dim {
        return Err(Error::Config(format!("--y has length {}, expected {dim}", vals.len())));
    }
    Ok(DVector::from_row_slice(&vals))
}

fn cmd_tensors(args: TensorsArgs) -> Result<ExitCode> {
    let (cfg, spec) = load(&args.common)?;
    let chart = Chart::new(&spec, &cfg.base_point())?;
    let y = match (&args.y, &cfg.evaluation.y) {
        (Some(text), _) => parse_vector(text, chart.n)?,
        (None, Some(v)) => DVector::from_row_slice(v),
        (None, None) => {
            return Err(Error::Config("no fiber vector: set evaluation.y or pass --y".into()))
        }
    };
    let point = EvalPoint::new(&chart, y.clone())?;
    let jets = eval_norm(&chart, &point)?;
    let ts = tensor_set_from_jets(&chart, &jets)?;
    let yv: Vec<f64> = y.iter().copied().collect();
    let euler = euler_residuals(&ts, &jets, &yv).max();
    let cyc = cyclic_residuals(&ts, &jets);
    let mean = mean_cartan_residual(&ts, &jets);

    let mut out = String::new();
    let _ = writeln!(
        out,
        "family {} sign {} dim {}",
        chart.kind.name(),
        chart.sign.symbol(),
        chart.n
    );
    let _ = writeln!(out, "x = {:?}", chart.x);
    let _ = writeln!(out, "y = {:?}", yv);
    let _ = writeln!(out, "slit distance = {}", point.slit_distance);
    let _ = writeln!(out, "F = {}", ts.f);
    let _ = writeln!(out, "branch = {}", ts.branch.name());
    let _ = writeln!(out, "kappa = {}", ts.kappa);
    if let Some(kb) = ts.kappa_b {
        let _ = writeln!(out, "kappa closed form = {kb}");
    }
    let _ = writeln!(out, "eig_min(g) = {}", ts.eig_min_g);
    let _ = writeln!(out, "max |C| = {}", ts.c.max_abs());
    let _ = writeln!(out, "max |I| = {}", finsler_core::sym::max_abs_vec(&ts.i));
    let _ = writeln!(out, "max |M| = {}", ts.m.max_abs());
    let _ = writeln!(out, "max |S| = {}  (ratio {})", ts.s.max_abs(), vanish_ratio(&ts.s, &ts.c, ts.f));
    if let Some(b) = &ts.b {
        let _ = writeln!(out, "max |B| = {}  (ratio {})", b.max_abs(), vanish_ratio(b, &ts.c, ts.f));
    }
    let _ = writeln!(out, "radial identity residual = {euler:e}");
    let _ = writeln!(out, "cyclic identity residual = {:e}", cyc.max());
    let _ = writeln!(out, "mean torsion residual = {mean:e}");

    print!("{out}");
    if let Some(dir) = out_dir(&args.common) {
        write_out(&dir, "tensors.txt", &out)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: CommonArgs) -> Result<ExitCode> {
    let (cfg, spec) = load(&args)?;
    let samples = args.samples.or(cfg.evaluation.samples).unwrap_or(400);
    let opts = SuiteOptions {
        samples,
        seed: args.seed.or(cfg.evaluation.seed).unwrap_or(0),
        fd_samples: 6,
        scan_samples: samples.max(2000),
    };
    let report = run_invariant_suite(&spec, &cfg.base_point(), &opts)?;
    let table = report.render_table();
    print!("{table}");
    if let Some(dir) = out_dir(&args) {
        write_out(&dir, "verify.json", &report.to_json())?;
        write_out(&dir, "verify.txt", &table)?;
    }
    Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_probe(args: CommonArgs) -> Result<ExitCode> {
    let (cfg, spec) = load(&args)?;
    let chart = Chart::new(&spec, &cfg.base_point())?;
    let samples = args.samples.or(cfg.evaluation.samples).unwrap_or(SCAN_SAMPLES_DEFAULT);
    let seed = args.seed.or(cfg.evaluation.seed).unwrap_or(0);
    let report = scan_positive_definiteness(&chart, samples, seed)?;
    let expected = pd_expectation(&chart);
    let consistent = match expected {
        Some(true) => !report.negative_found,
        Some(false) => report.negative_found,
        None => true,
    };
    let mut table = report.render_table();
    let _ = writeln!(
        table,
        "expectation: {} -> {}",
        match expected {
            Some(true) => "asserted definite",
            Some(false) => "asserted to fail",
            None => "evidence only",
        },
        if consistent { "consistent" } else { "INCONSISTENT" }
    );
    print!("{table}");
    if let Some(dir) = out_dir(&args) {
        write_out(&dir, "scan.json", &report.to_json())?;
        write_out(&dir, "scan.txt", &table)?;
    }
    Ok(if consistent { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_indicatrix(args: IndicatrixArgs) -> Result<ExitCode> {
    let (cfg, spec) = load(&args.common)?;
    let chart = Chart::new(&spec, &cfg.base_point())?;
    let mut grid = default_grid(chart.n);
    match (&mut grid, args.subdivisions, args.count) {
        (DirectionGrid::Icosphere { subdivisions }, Some(s), _) => *subdivisions = s,
        (DirectionGrid::Circle { count }, _, Some(c)) => *count = c,
        (DirectionGrid::LowDiscrepancy { count }, _, Some(c)) => *count = c,
        _ => {}
    }
    let union = indicatrix_union(&chart, &grid, SLIT_BAND_DEFAULT)?;

    let mut out = String::new();
    let _ = writeln!(out, "indicatrix union: family {} dim {}", union.family, union.dim);
    for shell in &union.shells {
        let _ = write!(
            out,
            "shell {}: {} vertices, {} faces, {} edges",
            shell.name,
            shell.vertices.len(),
            shell.faces.len(),
            shell.edges.len()
        );
        if !shell.faces.is_empty() {
            let _ = write!(
                out,
                ", euler characteristic {}",
                euler_characteristic(shell.vertices.len(), &shell.faces)
            );
        }
        let flagged = shell.slit_adjacent.iter().filter(|f| **f).count();
        let _ = writeln!(out, ", {flagged} slit-adjacent");
    }
    if chart.kind == FamilyKind::BSpace {
        let mut worst = 0.0_f64;
        for shell in &union.shells {
            for v in &shell.vertices {
                worst = worst.max(toroid_residual(&chart, &DVector::from_row_slice(v))?);
            }
        }
        let _ = writeln!(out, "max spindle-toroid residual = {worst:e}");
    }
    if chart.kind == FamilyKind::Randers {
        let mut worst = 0.0_f64;
        for (name, branch) in [("lemon", SignBranch::Plus), ("apple", SignBranch::Minus)] {
            let form = randers_ellipsoid(&chart, branch)?;
            let shell = union
                .shells
                .iter()
                .find(|s| s.name == name)
                .expect("branch shells always present");
            for v in &shell.vertices {
                worst = worst.max(form.residual(&DVector::from_row_slice(v)));
            }
        }
        let _ = writeln!(out, "max ellipsoid residual = {worst:e}");
    }
    print!("{out}");

    if let Some(dir) = out_dir(&args.common) {
        write_out(&dir, "indicatrix.csv", &to_csv(&union))?;
        if chart.n == 3 {
            write_out(&dir, "indicatrix.obj", &to_obj(&union)?)?;
        }
        write_out(&dir, "indicatrix.txt", &out)?;
    }
    Ok(ExitCode::SUCCESS)
}
