mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use kfp_core::exponents::{self, ExponentTable, TRIVIAL_ROOT};
use kfp_core::fluxes;
use kfp_core::kfp_solver::{run_diagnostic, SolveConfig};
use kfp_core::lattice_toy::{compare_with_reference, WallRule};
use kfp_core::particle_mc::{
    collapse_threshold_scan, first_hit_log_speed, run_chains, ChainParams, ParticleState,
    ScanConfig, StepControl, Termination,
};
use kfp_core::profiles::{self, PhasePoint};
use kfp_core::verify;

use output::Output;
use svg::{line_plot, Series};

/// Experiments for the kinetic Fokker-Planck equation with an inelastic wall.
#[derive(Debug, Parser)]
#[command(name = "kfp", version)]
struct Cli {
    /// Seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for CSV/JSON/SVG files and the run manifest; stdout otherwise.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also render SVG plots.
    #[arg(long, global = true)]
    svg: bool,
    /// JSON instead of CSV.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum Command {
    /// Exponents and constants for a list of restitution coefficients.
    Exponents {
        #[arg(long, value_delimiter = ',', required = true)]
        r: Vec<f64>,
    },
    /// Tabulate the similarity profile, or the full profile on an (x, v) grid.
    Profile(ProfileArgs),
    /// Boundary flux of a corner profile over nine boxes.
    Flux {
        #[arg(long)]
        r: f64,
        #[arg(long, value_enum, default_value_t = FluxProfile::Trivial)]
        profile: FluxProfile,
    },
    /// Pairing constant: closed form against quadrature.
    Cstar {
        #[arg(long, value_delimiter = ',', required = true)]
        r: Vec<f64>,
        #[arg(long, default_value_t = fluxes::DEFAULT_R_MAX)]
        r_max: f64,
    },
    /// Particle Monte Carlo.
    Mc {
        #[command(subcommand)]
        action: McAction,
    },
    /// Lattice walk against its continuum reference.
    Toy(ToyArgs),
    /// Run the solver from a JSON config.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the acceptance criteria and print a pass/fail table.
    VerifyAll {
        /// Subset of criteria, e.g. `--only 1,4`.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

#[derive(Debug, clap::Args, Serialize)]
struct ProfileArgs {
    #[arg(
        long,
        allow_hyphen_values = true,
        conflicts_with = "r",
        required_unless_present = "r"
    )]
    gamma: Option<f64>,
    /// Use the nontrivial exponent of this restitution coefficient.
    #[arg(long)]
    r: Option<f64>,
    #[arg(long, allow_hyphen_values = true, default_value_t = -5.0)]
    from: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 5.0)]
    to: f64,
    #[arg(long, default_value_t = 101)]
    samples: usize,
    /// Emit `G` on `(0, x_max] × [-v_max, v_max]` instead of the similarity profile.
    #[arg(long)]
    field: bool,
    #[arg(long, default_value_t = 1.0)]
    x_max: f64,
    #[arg(long, default_value_t = 1.0)]
    v_max: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum FluxProfile {
    /// The `-2/3` profile, whose flux is the closed-form mass flux.
    Trivial,
    /// The nontrivial exponent, whose flux vanishes.
    Alpha,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum McAction {
    /// Mean log speed at the first wall hit from `(0, 1)`.
    FirstHit {
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[arg(long, default_value_t = 1e-6)]
        eps_x: f64,
    },
    /// Bounce chains at one restitution coefficient.
    Chains {
        #[arg(long)]
        r: f64,
        #[arg(long, default_value_t = 1000)]
        paths: usize,
        #[arg(long, default_value_t = 10_000)]
        max_bounces: usize,
        #[arg(long, default_value_t = 1e-6)]
        speed_floor: f64,
        /// Time horizon; unlimited by default.
        #[arg(long)]
        t_max: Option<f64>,
    },
    /// Collapse fraction and mean log speed ratio across `r`, with the threshold estimate.
    Scan {
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        paths: usize,
        #[arg(long, default_value_t = 40)]
        max_bounces: usize,
        #[arg(long)]
        t_max: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ToyMode {
    Trapping,
    Nontrapping,
    Partial,
}

#[derive(Debug, clap::Args, Serialize)]
struct ToyArgs {
    #[arg(long, value_enum)]
    mode: ToyMode,
    /// Escape probability for the nontrapping rule.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Wall rate for the partial rule.
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    #[arg(long, default_value_t = 0.01)]
    h: f64,
    #[arg(long, default_value_t = 0.5)]
    t: f64,
    #[arg(long, default_value_t = 1.0)]
    x0: f64,
}

#[derive(Serialize)]
struct ExponentRow {
    r: f64,
    alpha: f64,
    beta: f64,
    k_alpha: f64,
    kappa: f64,
    c_star: Option<f64>,
}

fn cmd_exponents(out: &mut Output, rs: &[f64]) -> Result<()> {
    let rows = rs
        .iter()
        .map(|&r| {
            let t = ExponentTable::new(r)?;
            Ok(ExponentRow {
                r,
                alpha: t.alpha,
                beta: t.beta,
                k_alpha: t.k_alpha,
                kappa: t.kappa,
                c_star: t.c_star,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.table(
        "exponents",
        &["r", "alpha", "beta", "k_alpha", "kappa", "c_star"],
        &rows,
    )
}

fn sample_range(from: f64, to: f64, samples: usize) -> Vec<f64> {
    match samples {
        0 => Vec::new(),
        1 => vec![from],
        n => (0..n)
            .map(|k| from + (to - from) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

fn cmd_profile(out: &mut Output, args: &ProfileArgs) -> Result<()> {
    let gamma = match (args.gamma, args.r) {
        (Some(g), _) => g,
        (None, Some(r)) => exponents::alpha_of_r(r)?,
        (None, None) => bail!("give --gamma or --r"),
    };
    if args.field {
        let mut rows = Vec::new();
        for x in sample_range(0.0, args.x_max, args.samples + 1)
            .into_iter()
            .skip(1)
        {
            for v in sample_range(-args.v_max, args.v_max, args.samples) {
                rows.push((x, v, profiles::g_gamma(gamma, PhasePoint::new(x, v))?));
            }
        }
        return out.table("profile_field", &["x", "v", "g"], &rows);
    }
    let rows = sample_range(args.from, args.to, args.samples)
        .into_iter()
        .map(|z| Ok((z, profiles::lambda_profile(gamma, z)?)))
        .collect::<Result<Vec<(f64, f64)>>>()?;
    out.table("profile", &["zeta", "lambda"], &rows)?;
    if out.wants_svg() {
        let label = format!("gamma = {gamma:.5}");
        out.plot(
            "profile",
            line_plot(
                "similarity profile",
                "zeta",
                &[Series {
                    label: &label,
                    points: rows,
                }],
            ),
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct FluxRow {
    delta: f64,
    b: f64,
    flux: f64,
    scale: f64,
    expected: f64,
}

fn cmd_flux(out: &mut Output, r: f64, profile: FluxProfile) -> Result<()> {
    let (gamma, expected) = match profile {
        FluxProfile::Trivial => (TRIVIAL_ROOT, fluxes::mass_flux_closed(r)?),
        FluxProfile::Alpha => (exponents::alpha_of_r(r)?, 0.0),
    };
    let report = fluxes::box_independence_check(gamma, r)?;
    eprintln!(
        "gamma {gamma:.6}: mean flux {:.8}, expected {expected:.8}, box spread {:.1e}",
        report.mean(),
        report.max_deviation
    );
    let rows: Vec<FluxRow> = report
        .boxes
        .iter()
        .map(|&(delta, b, flux, scale)| FluxRow {
            delta,
            b,
            flux,
            scale,
            expected,
        })
        .collect();
    out.table("flux", &["delta", "b", "flux", "scale", "expected"], &rows)
}

fn cmd_cstar(out: &mut Output, rs: &[f64], r_max: f64) -> Result<()> {
    let rows = rs
        .iter()
        .map(|&r| {
            let closed = exponents::c_star_closed(r)?;
            let quad = fluxes::c_star_quadrature(r, r_max)?;
            Ok((r, closed, quad, ((quad - closed) / closed).abs()))
        })
        .collect::<Result<Vec<_>>>()?;
    out.table("cstar", &["r", "closed", "quadrature", "rel_gap"], &rows)
}

#[derive(Serialize)]
struct ChainRow {
    path: usize,
    bounces: usize,
    terminated: Termination,
    last_time: f64,
    last_speed: f64,
}

fn cmd_mc(out: &mut Output, action: &McAction, seed: u64) -> Result<()> {
    match *action {
        McAction::FirstHit { paths, eps_x } => {
            let ctl = StepControl {
                eps_x,
                ..StepControl::default()
            };
            let est = first_hit_log_speed(paths, seed, &ctl)?;
            eprintln!("E[log h1] = {:.5} ± {:.5}", est.mean, est.stderr);
            out.table("first_hit", &["mean", "stderr", "samples"], &[est])
        }
        McAction::Chains {
            r,
            paths,
            max_bounces,
            speed_floor,
            t_max,
        } => {
            let params =
                ChainParams::new(r, max_bounces, speed_floor, t_max.unwrap_or(f64::INFINITY))?;
            let recs = run_chains(&params, ParticleState::new(0.0, 1.0, 0.0), paths, seed)?;
            let rows: Vec<ChainRow> = recs
                .iter()
                .enumerate()
                .map(|(path, rec)| ChainRow {
                    path,
                    bounces: rec.hit_times.len(),
                    terminated: rec.terminated,
                    last_time: rec.hit_times.last().copied().unwrap_or(f64::NAN),
                    last_speed: rec.hit_speeds.last().copied().unwrap_or(f64::NAN),
                })
                .collect();
            let collapsed = rows
                .iter()
                .filter(|c| c.terminated == Termination::Collapse)
                .count();
            eprintln!(
                "collapse fraction {:.4}",
                collapsed as f64 / paths.max(1) as f64
            );
            out.table(
                "chains",
                &["path", "bounces", "terminated", "last_time", "last_speed"],
                &rows,
            )
        }
        McAction::Scan {
            ref grid,
            paths,
            max_bounces,
            t_max,
        } => {
            let defaults = ScanConfig::default();
            let cfg = ScanConfig {
                r_grid: if grid.is_empty() {
                    defaults.r_grid.clone()
                } else {
                    grid.clone()
                },
                paths,
                seed,
                max_bounces,
                t_max: t_max.unwrap_or(defaults.t_max),
                ..defaults
            };
            let report = collapse_threshold_scan(&cfg)?;
            eprintln!(
                "r_hat = {:.4} (slope {:.4}, {} bounces)",
                report.r_hat, report.slope, report.total_bounces
            );
            out.table(
                "scan",
                &[
                    "r",
                    "paths",
                    "collapse_fraction",
                    "mean_log_ratio",
                    "stderr_log_ratio",
                ],
                &report.rows,
            )?;
            out.document("scan_summary", &report)?;
            if out.wants_svg() {
                let points = report
                    .rows
                    .iter()
                    .map(|row| (row.r.ln(), row.mean_log_ratio))
                    .collect();
                out.plot(
                    "scan",
                    line_plot(
                        "mean log speed ratio",
                        "ln r",
                        &[Series {
                            label: "MC",
                            points,
                        }],
                    ),
                )?;
            }
            Ok(())
        }
    }
}

fn cmd_toy(out: &mut Output, args: &ToyArgs) -> Result<()> {
    let rule = match args.mode {
        ToyMode::Trapping => WallRule::Trapping,
        ToyMode::Nontrapping => WallRule::Nontrapping {
            lambda: args.lambda,
        },
        ToyMode::Partial => WallRule::Partial { mu: args.mu },
    };
    let (summary, snap, reference) = compare_with_reference(args.h, rule, args.x0, args.t)?;
    out.table(
        "toy_summary",
        &["mode", "h", "t", "L1_gap", "m_h", "m_ref"],
        &[&summary],
    )?;
    let rows: Vec<(f64, f64, f64)> = snap
        .x
        .iter()
        .zip(&snap.density)
        .zip(&reference)
        .map(|((&x, &u), &r)| (x, u, r))
        .collect();
    out.table("toy_profile", &["x", "lattice", "reference"], &rows)?;
    if out.wants_svg() {
        let lattice = rows.iter().map(|r| (r.0, r.1)).collect();
        let continuum = rows.iter().map(|r| (r.0, r.2)).collect();
        out.plot(
            "toy",
            line_plot(
                summary.mode.as_str(),
                "x",
                &[
                    Series {
                        label: "lattice",
                        points: lattice,
                    },
                    Series {
                        label: "reference",
                        points: continuum,
                    },
                ],
            ),
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct DiagnosticRow {
    t: f64,
    total_mass: f64,
    m: f64,
    a_alpha: f64,
    a_m23: f64,
    fit_residual: f64,
    mode_residual: f64,
}

fn cmd_solve(out: &mut Output, path: &PathBuf) -> Result<()> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg: SolveConfig = serde_json::from_str(&text).context("invalid solve config")?;
    let run = run_diagnostic(&cfg)?;
    eprintln!(
        "mode {}: kappa {:.5}, alpha {:.5}, {} excised cells, {} fit cells",
        cfg.mode.name(),
        run.kappa,
        run.alpha,
        run.excised_cells,
        run.fit_points
    );
    let rows: Vec<DiagnosticRow> = run
        .samples
        .iter()
        .map(|s| DiagnosticRow {
            t: s.t,
            total_mass: s.total_mass,
            m: s.m,
            a_alpha: s.a_alpha,
            a_m23: s.a_m23,
            fit_residual: s.fit_residual,
            mode_residual: s.mode_residual,
        })
        .collect();
    out.table(
        "diagnostics",
        &[
            "t",
            "total_mass",
            "m",
            "a_alpha",
            "a_m23",
            "fit_residual",
            "mode_residual",
        ],
        &rows,
    )?;
    out.document("run", &run)?;
    if out.wants_svg() {
        let mass = rows.iter().map(|r| (r.t, r.total_mass)).collect();
        let m = rows.iter().map(|r| (r.t, r.m)).collect();
        out.plot(
            "mass",
            line_plot(
                "mass ledger",
                "t",
                &[
                    Series {
                        label: "grid mass",
                        points: mass,
                    },
                    Series {
                        label: "corner mass m",
                        points: m,
                    },
                ],
            ),
        )?;
    }
    Ok(())
}

fn cmd_verify(out: &mut Output, only: &[u8], json: bool) -> Result<bool> {
    let ids: Vec<u8> = if only.is_empty() {
        verify::CRITERIA.iter().map(|c| c.0).collect()
    } else {
        only.to_vec()
    };
    let mut reports = Vec::new();
    for id in ids {
        let Some(report) = verify::run_criterion(id) else {
            bail!(
                "no criterion {id}; valid ids are 1 to {}",
                verify::CRITERIA.len()
            );
        };
        if !json {
            println!("{report}");
        }
        reports.push(report);
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&reports)?);
    }
    out.document("verify", &reports)?;
    let failed: Vec<_> = reports.iter().filter(|r| !r.passed()).collect();
    if !failed.is_empty() {
        eprintln!("{}", serde_json::json!({ "failed": failed }));
    }
    Ok(failed.is_empty())
}

fn run(cli: Cli) -> Result<bool> {
    let name = match &cli.command {
        Command::Exponents { .. } => "exponents",
        Command::Profile(_) => "profile",
        Command::Flux { .. } => "flux",
        Command::Cstar { .. } => "cstar",
        Command::Mc { .. } => "mc",
        Command::Toy(_) => "toy",
        Command::Solve { .. } => "solve",
        Command::VerifyAll { .. } => "verify-all",
    };
    let params = serde_json::to_value(&cli.command)?;
    let mut out = Output::new(cli.out.clone(), cli.json, cli.svg, name, params, cli.seed)?;
    let mut passed = true;
    match &cli.command {
        Command::Exponents { r } => cmd_exponents(&mut out, r)?,
        Command::Profile(args) => cmd_profile(&mut out, args)?,
        Command::Flux { r, profile } => cmd_flux(&mut out, *r, *profile)?,
        Command::Cstar { r, r_max } => cmd_cstar(&mut out, r, *r_max)?,
        Command::Mc { action } => cmd_mc(&mut out, action, cli.seed)?,
        Command::Toy(args) => cmd_toy(&mut out, args)?,
        Command::Solve { config } => cmd_solve(&mut out, config)?,
        Command::VerifyAll { only } => passed = cmd_verify(&mut out, only, cli.json)?,
    }
    out.finish()?;
    Ok(passed)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
