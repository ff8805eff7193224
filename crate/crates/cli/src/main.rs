//! `stormer`: command-line front end for maps, orbit searches and single runs.
//!
//! Exit codes: 0 on success, 2 for configuration or input errors, 3 for
//! numerical failures. Failures also print one `error kind=... message=...`
//! line on stderr.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use stormer_core::dynamics::{self, CRITICAL_ENERGY};
use stormer_core::format::{self, Encoding};
use stormer_core::integrator::{self, TerminalReason};
use stormer_core::orbits;
use stormer_core::scan::{self, CellFlag, GridSpec, Quantity, ScanOptions};
use stormer_core::{Error, MeridianState, Result, RunConfig};

#[derive(Parser)]
#[command(name = "stormer", version, about = "Charged-particle orbits in a dipole field")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key = value` configuration file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (the STORMER_WORKERS environment variable wins).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Override a configuration key, e.g. `--set tol=1e-12`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Args)]
struct Output {
    #[arg(long)]
    out: PathBuf,
    /// Write map bodies as little-endian f64 instead of text.
    #[arg(long)]
    binary: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Scan an indicator over a grid of starts at rest.
    Map {
        /// mlce, t-esc, t-cross, lambda-min, lambda-max or lambda-sum.
        #[arg(long)]
        quantity: Quantity,
        /// `rho=LO:HI:NX,z=LO:HI:NY[,restrict=NAME]` or `default`.
        #[arg(long)]
        grid: Option<GridSpec>,
        #[command(flatten)]
        output: Output,
        /// Checkpoint file, updated after every batch of rows and resumed from if present.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Scan the perpendicularity residual at crossing `n` and list sign-change edges.
    Residual {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        n: u8,
        #[arg(long)]
        grid: Option<GridSpec>,
        #[command(flatten)]
        output: Output,
        /// Edge list path; defaults to the output path with `.edges` appended.
        #[arg(long)]
        edges: Option<PathBuf>,
    },
    /// Locate, verify and classify symmetric periodic orbits and group them into families.
    Orbits {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        n: u8,
        #[arg(long)]
        grid: Option<GridSpec>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Integrate one orbit from rest and write sampled states.
    Trace {
        #[arg(long, allow_hyphen_values = true)]
        z0: f64,
        #[arg(long)]
        rho0: f64,
        #[arg(long, default_value_t = 1e3)]
        t_max: f64,
        #[arg(long, default_value_t = 0.1)]
        sample_dt: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check closure of a candidate orbit with quarter period `t_perp` and classify it.
    Verify {
        #[arg(long, allow_hyphen_values = true)]
        z0: f64,
        #[arg(long)]
        rho0: f64,
        #[arg(long)]
        t_perp: f64,
        /// Highest crossing ordinal considered when classifying.
        #[arg(long, default_value_t = 3)]
        n: usize,
    },
    /// Energy, turning points and domain membership of a start at rest.
    Info {
        #[arg(long, allow_hyphen_values = true)]
        z0: f64,
        #[arg(long)]
        rho0: f64,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(w) = common.workers {
        cfg.workers = Some(w);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn pick_grid(flag: Option<GridSpec>, cfg: &RunConfig) -> GridSpec {
    flag.or(cfg.grid).unwrap_or_default()
}

fn encoding(binary: bool) -> Encoding {
    if binary {
        Encoding::Binary
    } else {
        Encoding::Ascii
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

fn flag_summary(map: &stormer_core::MapResult) -> String {
    [
        CellFlag::Ok,
        CellFlag::Excluded,
        CellFlag::Trapped,
        CellFlag::Escaped,
        CellFlag::Singular,
        CellFlag::Unreachable,
        CellFlag::Failed,
    ]
    .iter()
    .map(|&f| (f, map.count(f)))
    .filter(|&(_, n)| n > 0)
    .map(|(f, n)| format!("{}={n}", f.code()))
    .collect::<Vec<_>>()
    .join(" ")
}

fn run_map(cfg: &RunConfig, quantity: Quantity, grid: GridSpec, output: &Output, checkpoint: Option<&Path>) -> Result<()> {
    if let Quantity::Residual(_) = quantity {
        return Err(Error::Config("use the residual command for residual maps".into()));
    }
    let clock = Instant::now();
    let map = match checkpoint {
        Some(path) => {
            let previous = if path.exists() { Some(format::read_map_file(path)?) } else { None };
            scan::scan_with(&grid, quantity, cfg, ScanOptions { checkpoint: Some(path), resume: previous, ..Default::default() })?
        }
        None => scan::scan(&grid, quantity, cfg)?,
    };
    format::write_map_file(&output.out, &map, encoding(output.binary))?;
    eprintln!(
        "{}: {} cells in {:.1} s ({})",
        output.out.display(),
        grid.len(),
        clock.elapsed().as_secs_f64(),
        flag_summary(&map)
    );
    Ok(())
}

fn edges_path(out: &Path, edges: Option<PathBuf>) -> PathBuf {
    edges.unwrap_or_else(|| {
        let mut s = out.as_os_str().to_owned();
        s.push(".edges");
        PathBuf::from(s)
    })
}

fn run_residual(cfg: &RunConfig, n: usize, grid: GridSpec, output: &Output, edges: Option<PathBuf>) -> Result<()> {
    let (map, found) = scan::scan_residual(&grid, n, cfg)?;
    format::write_map_file(&output.out, &map, encoding(output.binary))?;
    let path = edges_path(&output.out, edges);
    format::write_edges(create(&path)?, &map.digest, &found)?;
    eprintln!("{}: {} sign-change edges ({})", path.display(), found.len(), flag_summary(&map));
    Ok(())
}

fn run_orbits(cfg: &RunConfig, n: usize, grid: GridSpec, out: &Path) -> Result<()> {
    let clock = Instant::now();
    let result = orbits::search(&grid, n, cfg)?;
    format::write_orbits(create(out)?, &result.map.digest, &result.orbits, &result.families)?;
    eprintln!(
        "{}: {} edges, {} orbits, {} families, {} unresolved edges in {:.1} s",
        out.display(),
        result.edges.len(),
        result.orbits.len(),
        result.families.len(),
        result.failures.len(),
        clock.elapsed().as_secs_f64()
    );
    Ok(())
}

fn run_trace(cfg: &RunConfig, z0: f64, rho0: f64, t_max: f64, sample_dt: f64, out: &Path) -> Result<()> {
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::Config(format!("--t-max must be positive, got {t_max}")));
    }
    let start = MeridianState::at_rest(z0, rho0);
    dynamics::energy(&start)?;
    let icfg = cfg.integrator.clone().with_t_cap(t_max);
    let run = integrator::integrate(&start, &icfg, Some(sample_dt))?;
    let rows: Vec<[f64; 8]> = run
        .samples
        .iter()
        .map(|s| {
            [
                s.t,
                s.z,
                s.rho,
                s.p_z,
                s.p_rho,
                dynamics::energy(s).unwrap_or(f64::NAN),
                dynamics::latitude(s.z, s.rho).unwrap_or(f64::NAN),
                dynamics::thalweg_function(s.z, s.rho),
            ]
        })
        .collect();
    let reason = match run.reason {
        TerminalReason::TimeCap => "time_cap",
        TerminalReason::Singularity => "singularity",
        TerminalReason::Event { .. } | TerminalReason::Observer => "stopped",
    };
    let digest = cfg.digest_with(&format!("trace z0={z0:e} rho0={rho0:e} t_max={t_max:e} sample_dt={sample_dt:e}\n"));
    let header = [
        ("z0", format::fmt_f64(z0)),
        ("rho0", format::fmt_f64(rho0)),
        ("t_max", format::fmt_f64(t_max)),
        ("sample_dt", format::fmt_f64(sample_dt)),
        ("end", reason.to_string()),
        ("energy_drift", format::fmt_f64(run.energy_drift)),
    ];
    format::write_trajectory(create(out)?, &digest, &header, &rows)?;
    eprintln!("{}: {} samples, relative energy drift {:.2e}", out.display(), rows.len(), run.energy_drift);
    Ok(())
}

fn run_verify(cfg: &RunConfig, z0: f64, rho0: f64, t_perp: f64, n: usize) -> Result<()> {
    let ocfg = cfg.orbit_config();
    let norms = orbits::verify(z0, rho0, t_perp, &ocfg)?;
    let mut out = io::stdout().lock();
    writeln!(out, "perp_z={}", format::fmt_f64(norms.perp_z))?;
    writeln!(out, "perp_p_rho={}", format::fmt_f64(norms.perp_p_rho))?;
    writeln!(out, "half_norm={}", format::fmt_f64(norms.half))?;
    writeln!(out, "full_norm={}", format::fmt_f64(norms.full))?;
    let verified = norms.max() < ocfg.verify_tol;
    writeln!(out, "verified={verified}")?;
    if !verified {
        return Err(Error::Numerical(format!(
            "max norm {:e} exceeds verify_tol {:e}",
            norms.max(),
            ocfg.verify_tol
        )));
    }
    let orbit = orbits::classify(z0, rho0, t_perp, n.max(1), &ocfg)?;
    writeln!(out, "class=s{}", orbit.class_n)?;
    writeln!(out, "t_perp={}", format::fmt_f64(orbit.t_perp))?;
    writeln!(out, "period={}", format::fmt_f64(orbit.period))?;
    writeln!(out, "n_eq_half={}", orbit.n_eq_half)?;
    writeln!(out, "n_thalweg_half={}", orbit.n_thalweg_half)?;
    Ok(())
}

fn run_info(z0: f64, rho0: f64) -> Result<()> {
    let h = dynamics::potential(z0, rho0)?;
    let mut out = io::stdout().lock();
    writeln!(out, "H={h}")?;
    writeln!(out, "below_critical={}", h < CRITICAL_ENERGY)?;
    if h > 0.0 && h <= CRITICAL_ENERGY {
        let tp = dynamics::turning_points(h)?;
        writeln!(out, "rho_min={}", tp.rho_min)?;
        writeln!(out, "rho_max={}", tp.rho_max)?;
        writeln!(out, "crossing_threshold={}", tp.crossing_threshold())?;
    }
    if h > 0.0 {
        writeln!(out, "outer_boundary_radius={}", dynamics::outer_boundary_radius(h)?)?;
    }
    writeln!(out, "inside_field_line={}", dynamics::in_scan_domain(z0, rho0)?)?;
    writeln!(out, "latitude={}", dynamics::latitude(z0, rho0)?)?;
    writeln!(out, "thalweg={}", dynamics::thalweg_function(z0, rho0))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Command::Info { z0, rho0 } = cli.command {
        return run_info(z0, rho0);
    }
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Map { quantity, grid, output, checkpoint } => {
            run_map(&cfg, quantity, pick_grid(grid, &cfg), &output, checkpoint.as_deref())
        }
        Command::Residual { n, grid, output, edges } => run_residual(&cfg, n as usize, pick_grid(grid, &cfg), &output, edges),
        Command::Orbits { n, grid, out } => run_orbits(&cfg, n as usize, pick_grid(grid, &cfg), &out),
        Command::Trace { z0, rho0, t_max, sample_dt, out } => run_trace(&cfg, z0, rho0, t_max, sample_dt, &out),
        Command::Verify { z0, rho0, t_perp, n } => run_verify(&cfg, z0, rho0, t_perp, n),
        Command::Info { .. } => unreachable!(),
    }
}

fn kind(e: &Error) -> &'static str {
    match e {
        Error::Domain(_) => "domain",
        Error::Integration(_) => "integration",
        Error::Numerical(_) => "numerical",
        Error::Precondition(_) => "precondition",
        Error::Config(_) => "config",
        Error::Format(_) => "format",
        Error::Checkpoint(_) => "checkpoint",
        Error::Io(_) => "io",
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = if e.is_config() { 2 } else { 3 };
            eprintln!("error kind={} exit={code} message={:?}", kind(&e), e.to_string());
            ExitCode::from(code)
        }
    }
}
