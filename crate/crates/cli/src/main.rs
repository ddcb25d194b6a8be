use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spinwall::dynamics::Integrator;
use spinwall::experiments::{run, ExperimentConfig, ExperimentKind, RunOutput, Tier};
use spinwall::hamiltonian::Convention;

/// Domain-wall spin qubits on dimerized Heisenberg rings.
///
/// Each subcommand runs one experiment and prints its checks. With --out, the
/// primary table goes to <out>.csv, further tables to <out>.<name>.csv and the
/// manifest to <out>.manifest.json. Exit status: 0 all checks pass, 1 a check
/// or solver failed, 2 invalid usage.
///
/// Lanczos keeps a handful of sector-sized vectors; at n = 29 (7.8e7 states)
/// that is several gigabytes, so the extended tier needs a large machine.
#[derive(Parser, Debug)]
#[command(name = "spinwall", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Localized ground state of one domain wall.
    Soliton {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        wall: Wall,
    },
    /// Wall locality under random multiplicative disorder.
    Disorder {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        wall: Wall,
        /// Relative disorder strength.
        #[arg(long)]
        fraction: Option<f64>,
        /// Number of disorder realizations.
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Quasi-static sweep of the wall around the ring twice.
    Transport {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        wall: Wall,
    },
    /// Driven three-spin ring against the closed-form Floquet state and Berry phase.
    Floquet3 {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        drive: DriveArgs,
        #[arg(long)]
        j0_tilde: Option<f64>,
        #[arg(long)]
        j1_tilde: Option<f64>,
    },
    /// Driven nine-site ring against the ket-sum Floquet approximation.
    Floquet9 {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        drive: DriveArgs,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        a0: Option<f64>,
        #[arg(long)]
        k0: Option<f64>,
        #[arg(long)]
        j0: Option<f64>,
    },
    /// Two walls pulled apart to create a singlet pair.
    Epr {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        a0: Option<f64>,
        #[arg(long)]
        w: Option<f64>,
        /// Comma-separated even wall separations.
        #[arg(long, value_delimiter = ',')]
        s_values: Option<Vec<f64>>,
    },
    /// Qubit throughput Q = J0 / (ħ D).
    Capacity {
        #[command(flatten)]
        common: Common,
        /// Exchange energy in micro-electronvolts.
        #[arg(long)]
        j0_uev: Option<f64>,
        /// Wall spacing in sites.
        #[arg(long)]
        spacing: Option<f64>,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// TOML file with experiment keys; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path prefix.
    #[arg(long)]
    out: Option<String>,
    /// Worker threads (default: SPINWALL_THREADS, then all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    tier: Option<TierArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    convention: Option<ConventionArg>,
    #[arg(long)]
    lanczos_tol: Option<f64>,
}

#[derive(Args, Debug)]
struct Wall {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    a0: Option<f64>,
    #[arg(long)]
    k0: Option<f64>,
    #[arg(long)]
    w: Option<f64>,
    #[arg(long)]
    j0: Option<f64>,
}

#[derive(Args, Debug)]
struct DriveArgs {
    /// Comma-separated drive rates in units of the gap.
    #[arg(long, value_delimiter = ',')]
    omega_ratios: Option<Vec<f64>>,
    #[arg(long)]
    step_count: Option<usize>,
    #[arg(long)]
    phase_tol: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    integrator: Option<IntegratorArg>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum TierArg {
    Desk,
    Extended,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ConventionArg {
    Pauli,
    SpinHalf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum IntegratorArg {
    Midpoint,
    Magnus4,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

fn load(path: Option<&Path>, kind: ExperimentKind) -> Result<ExperimentConfig, String> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::new(kind));
    };
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let raw: toml::Table = text.parse().map_err(|e| format!("{}: {e}", path.display()))?;
    let named = raw.contains_key("experiment");
    let cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if named && cfg.experiment != kind {
        return Err(format!(
            "{} describes a {} run, not {}",
            path.display(),
            cfg.experiment.name(),
            kind.name()
        ));
    }
    Ok(ExperimentConfig { experiment: kind, ..cfg })
}

fn apply_common(cfg: &mut ExperimentConfig, c: &Common) {
    set_opt(&mut cfg.out, c.out.clone());
    set(
        &mut cfg.tier,
        c.tier.map(|t| match t {
            TierArg::Desk => Tier::Desk,
            TierArg::Extended => Tier::Extended,
        }),
    );
    set(&mut cfg.seed, c.seed);
    set(
        &mut cfg.convention,
        c.convention.map(|c| match c {
            ConventionArg::Pauli => Convention::Pauli,
            ConventionArg::SpinHalf => Convention::SpinHalf,
        }),
    );
    set(&mut cfg.lanczos_tol, c.lanczos_tol);
}

fn apply_wall(cfg: &mut ExperimentConfig, w: &Wall) {
    set_opt(&mut cfg.n, w.n);
    set_opt(&mut cfg.a0, w.a0);
    set_opt(&mut cfg.k0, w.k0);
    set(&mut cfg.w, w.w);
    set(&mut cfg.j0, w.j0);
}

fn apply_drive(cfg: &mut ExperimentConfig, d: &DriveArgs) {
    set_opt(&mut cfg.omega_ratios, d.omega_ratios.clone());
    set(&mut cfg.step_count, d.step_count);
    set(&mut cfg.phase_tol, d.phase_tol);
    set(&mut cfg.max_steps, d.max_steps);
    set(
        &mut cfg.integrator,
        d.integrator.map(|i| match i {
            IntegratorArg::Midpoint => Integrator::Midpoint,
            IntegratorArg::Magnus4 => Integrator::Magnus4,
        }),
    );
}

/// Merge config file and flags into one run description.
fn resolve(command: &Command) -> Result<(ExperimentConfig, Option<usize>), String> {
    let (kind, common) = match command {
        Command::Soliton { common, .. } => (ExperimentKind::Soliton, common),
        Command::Disorder { common, .. } => (ExperimentKind::Disorder, common),
        Command::Transport { common, .. } => (ExperimentKind::Transport, common),
        Command::Floquet3 { common, .. } => (ExperimentKind::Floquet3, common),
        Command::Floquet9 { common, .. } => (ExperimentKind::Floquet9, common),
        Command::Epr { common, .. } => (ExperimentKind::Epr, common),
        Command::Capacity { common, .. } => (ExperimentKind::Capacity, common),
    };
    let mut cfg = load(common.config.as_deref(), kind)?;
    apply_common(&mut cfg, common);
    match command {
        Command::Soliton { wall, .. } | Command::Transport { wall, .. } => apply_wall(&mut cfg, wall),
        Command::Disorder { wall, fraction, seeds, .. } => {
            apply_wall(&mut cfg, wall);
            set(&mut cfg.disorder, *fraction);
            set(&mut cfg.seeds, *seeds);
        }
        Command::Floquet3 { drive, j0_tilde, j1_tilde, .. } => {
            apply_drive(&mut cfg, drive);
            set(&mut cfg.j0_tilde, *j0_tilde);
            set(&mut cfg.j1_tilde, *j1_tilde);
        }
        Command::Floquet9 { drive, n, a0, k0, j0, .. } => {
            apply_drive(&mut cfg, drive);
            set_opt(&mut cfg.n, *n);
            set_opt(&mut cfg.a0, *a0);
            set_opt(&mut cfg.k0, *k0);
            set(&mut cfg.j0, *j0);
        }
        Command::Epr { n, a0, w, s_values, .. } => {
            set_opt(&mut cfg.n, *n);
            set_opt(&mut cfg.a0, *a0);
            set(&mut cfg.w, *w);
            set_opt(&mut cfg.s_values, s_values.clone());
        }
        Command::Capacity { j0_uev, spacing, .. } => {
            set(&mut cfg.j0_uev, *j0_uev);
            set(&mut cfg.spacing, *spacing);
        }
    }
    Ok((cfg, common.threads))
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, String> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("SPINWALL_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| format!("SPINWALL_THREADS={v} is not a thread count")),
        _ => Ok(None),
    }
}

fn write_outputs(prefix: &str, output: &RunOutput) -> std::io::Result<()> {
    for (i, table) in output.tables.iter().enumerate() {
        let path = if i == 0 {
            format!("{prefix}.csv")
        } else {
            format!("{prefix}.{}.csv", table.name)
        };
        std::fs::write(path, table.to_csv())?;
    }
    let manifest = serde_json::to_string_pretty(&output.manifest).map_err(std::io::Error::other)?;
    std::fs::write(format!("{prefix}.manifest.json"), manifest + "\n")
}

fn report(output: &RunOutput) {
    let m = &output.manifest;
    println!("{} (seed {}, {:.2} s)", m.config.experiment.name(), m.seed, m.elapsed_s);
    if let Some(q) = m.notes.get("capacity_qubit_per_s") {
        println!("  Q = {q} qubit/s");
    }
    for c in &m.checks {
        let verdict = if c.pass { "PASS" } else { "FAIL" };
        match c.target {
            Some(t) => println!("  {verdict} {}: {:.6e} (target {t}, tolerance {:e})", c.name, c.measured, c.tolerance),
            None => println!("  {verdict} {}: {:.6e} {} {:e}", c.name, c.measured, c.relation, c.tolerance),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cfg, threads) = match resolve(&cli.command).and_then(|(cfg, t)| Ok((cfg, thread_count(t)?))) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    let output = match run(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    report(&output);
    if let Some(prefix) = &cfg.out {
        if let Err(e) = write_outputs(prefix, &output) {
            eprintln!("error: writing {prefix}.*: {e}");
            return ExitCode::from(1);
        }
    }
    if output.manifest.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
