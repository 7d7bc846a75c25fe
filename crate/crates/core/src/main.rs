use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bdf2proj::diagnostics::{self, energy_inequality_check};
use bdf2proj::io::{self, CaseKind, RunConfig};
use bdf2proj::mms::{self, StudyConfig, StudyMode};
use bdf2proj::scheme::{CheckTolerances, Scheme};

#[derive(Parser)]
#[command(name = "bdf2proj", version, about = "BDF2 pressure-correction Navier-Stokes solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation; writes ledger.csv and VTK snapshots to out_dir.
    Run {
        config: PathBuf,
        /// Also write per-cell gradient data to the VTK files.
        #[arg(long)]
        cell_data: bool,
        /// Skip VTK output.
        #[arg(long)]
        no_vtk: bool,
    },
    /// Convergence study against the manufactured solution.
    Convergence {
        config: PathBuf,
        #[arg(long, default_value = "temporal")]
        mode: StudyMode,
    },
    /// Run with all checks recorded; exit status 1 on any violation.
    Verify { config: PathBuf },
    /// Compare the discrete Gronwall bound with the recursion it bounds
    /// on a seeded random case.
    Gronwall {
        #[arg(long)]
        demo: bool,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 12)]
        steps: usize,
    },
}

fn load(path: &Path) -> Result<RunConfig, ExitCode> {
    if !path.exists() {
        eprintln!("error: config file '{}' not found", path.display());
        return Err(ExitCode::from(2));
    }
    match io::parse_config(path) {
        Ok(c) => {
            for w in &c.warnings {
                eprintln!("warning: {w}");
            }
            Ok(c)
        }
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            Err(ExitCode::from(2))
        }
    }
}

fn fail(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::FAILURE
}

fn run(path: &Path, cell_data: bool, no_vtk: bool) -> ExitCode {
    let cfg = match load(path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let mut scheme = match Scheme::new(cfg.scheme.clone()) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let out = match scheme.run() {
        Ok(o) => o,
        Err(e) => return fail(e),
    };
    if let Err(e) = io::write_ledger_csv(&out.ledger, &cfg.out_dir.join("ledger.csv")) {
        return fail(e);
    }
    if !no_vtk {
        for s in &out.trajectory {
            let p = cfg.out_dir.join(format!("fields_{:05}.vtk", s.m));
            if let Err(e) = io::write_vtk(&scheme.disc, s, &p, cell_data) {
                return fail(e);
            }
        }
    }
    let report = energy_inequality_check(&out.ledger);
    println!("steps {}  dt {:e}  levels stored {}", out.n_steps, out.dt, out.trajectory.len());
    println!(
        "max residuals: identity {:.3e}  pythagoras {:.3e}  divergence {:.3e}  skew {:.3e}",
        out.ledger.max_identity_residual(),
        out.ledger.max_pythagoras_residual(),
        out.ledger.max_divergence_residual(),
        out.ledger.max_skew_residual()
    );
    println!(
        "energy inequality: {} (max ratio {:.3e})",
        if report.passed() { "ok" } else { "VIOLATED" },
        report.max_ratio_traced
    );
    if cfg.case == CaseKind::StreamVortex && out.trajectory.len() == out.n_steps + 1 {
        let e = mms::error_norms(&scheme.disc, &out, &cfg.manufactured_case());
        println!("errors at T: u {:.3e}  grad u~ {:.3e}  p {:.3e}", e.u_l2, e.utilde_h1, e.p_l2);
    }
    println!("output written to {}", cfg.out_dir.display());
    ExitCode::SUCCESS
}

fn convergence(path: &Path, mode: StudyMode) -> ExitCode {
    let cfg = match load(path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let study = StudyConfig::standard(mode, cfg.scheme.t_final, cfg.scheme.mu);
    let table = match mms::convergence_study(&study, &mms::stream_vortex_case(cfg.scheme.mu)) {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    let name = format!("rates_{}.csv", format!("{mode:?}").to_lowercase());
    if let Err(e) = io::write_rate_csv(&table, &cfg.out_dir.join(name)) {
        return fail(e);
    }
    print!("{}", table.to_csv());
    for &i in &table.non_monotone {
        eprintln!("warning: error did not decrease at row {i}");
    }
    ExitCode::SUCCESS
}

fn verify(path: &Path) -> ExitCode {
    let cfg = match load(path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let mut sc = cfg.scheme.clone();
    sc.strict = false;
    let out = match Scheme::new(sc).and_then(|mut s| s.run()) {
        Ok(o) => o,
        Err(e) => return fail(e),
    };
    let tol = CheckTolerances::default();
    let l = &out.ledger;
    let checks = [
        ("identity", l.max_identity_residual(), tol.identity),
        ("pythagoras", l.max_pythagoras_residual(), tol.pythagoras),
        ("divergence", l.max_divergence_residual(), tol.divergence),
        ("skew", l.max_skew_residual(), tol.skew),
    ];
    let mut ok = true;
    for (name, value, limit) in checks {
        let pass = value <= limit;
        ok &= pass;
        println!("{:<11} {value:.3e} <= {limit:.0e}  {}", name, if pass { "ok" } else { "FAIL" });
    }
    let report = energy_inequality_check(l);
    for v in &report.violations {
        println!("energy: {v}");
    }
    ok &= report.passed();
    println!(
        "energy      max ratio {:.3e}  {}",
        report.max_ratio_traced,
        if report.passed() { "ok" } else { "FAIL" }
    );
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn gronwall(demo: bool, seed: u64, steps: usize) -> ExitCode {
    if !demo {
        eprintln!("error: only --demo is available");
        return ExitCode::from(2);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt: f64 = rng.gen_range(0.01..0.2);
    let nu = rng.gen_range(0.0..0.9) / dt;
    let b: Vec<f64> = (0..steps).map(|_| rng.gen_range(0.0..1.0)).collect();
    let (bound, rec) = match (
        diagnostics::discrete_gronwall_bound(&b, nu, dt),
        diagnostics::gronwall_recursion(&b, nu, dt),
    ) {
        (Ok(x), Ok(y)) => (x, y),
        (Err(e), _) | (_, Err(e)) => return fail(e),
    };
    println!("# seed {seed}  nu {nu:.6}  dt {dt:.6}  nu*dt {:.6}", nu * dt);
    println!("n,b,recursion,bound");
    for n in 0..steps {
        println!("{},{:.6},{:.12e},{:.12e}", n + 1, b[n], rec[n], bound[n]);
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            cell_data,
            no_vtk,
        } => run(&config, cell_data, no_vtk),
        Command::Convergence { config, mode } => convergence(&config, mode),
        Command::Verify { config } => verify(&config),
        Command::Gronwall { demo, seed, steps } => gronwall(demo, seed, steps),
    }
}
