use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use trinet::io::{
    is_network, read_trajectory, verify_trajectory, write_trajectory_to, VerifyTolerances,
};
use trinet::{
    initial_state, max_eigenvalue, parse_config, parse_network, run, solve_stationary, stability_criterion,
    write_network, Error, Parameterization, RunConfig, RunStatus, StationaryNetwork, TrajectoryRow,
};

#[derive(Parser)]
#[command(name = "trinet", version, about = "Triple-junction networks: steady states, stability and curvature flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the stationary network of a config and print it as a [network] block.
    Steady {
        config: PathBuf,
        /// Write the network block here instead of stdout.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Largest eigenvalue of the linearized problem and the algebraic verdict.
    Spectrum {
        /// A run config or a [network] file.
        input: PathBuf,
        /// Elements per branch (defaults to the config's grid, or 400 for network files).
        #[arg(short, long)]
        n: Option<usize>,
        /// Write the eigenfunction as CSV (branch,sigma,phi).
        #[arg(long)]
        eigenfunction: Option<PathBuf>,
    },
    /// Evolve the perturbed stationary network and write the trajectory CSV.
    Evolve {
        config: PathBuf,
        /// Overrides the config's `output`; `-` writes to stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check a trajectory CSV for energy monotonicity, the energy law and boundary residuals.
    Verify {
        trajectory: PathBuf,
        #[arg(long, default_value_t = VerifyTolerances::default().energy_increase)]
        energy_increase: f64,
        #[arg(long, default_value_t = VerifyTolerances::default().energy_law)]
        energy_law: f64,
        #[arg(long, default_value_t = VerifyTolerances::default().junction)]
        junction: f64,
        #[arg(long, default_value_t = VerifyTolerances::default().perpendicular)]
        perpendicular: f64,
    },
    /// Repeat steady + spectrum (and optionally evolve) over values of one parameter.
    Sweep {
        config: PathBuf,
        /// `section.key`, e.g. `domain.radius` or `grid.n`; top-level keys have no prefix.
        #[arg(long)]
        param: String,
        /// Values separated by `;`, e.g. `1.0;1.5;2.0` or `1,1,1;1,1.2,1`.
        #[arg(long)]
        values: String,
        /// Also run the flow for each value.
        #[arg(long)]
        evolve: bool,
    },
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse { .. } | Error::Validation { .. } | Error::Io(_) => 1,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure { code: 1, message: e.to_string() }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure { code: 1, message: format!("{}: {e}", path.display()) })
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    parse_config(&read(path)?).map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })
}

fn steady_network(c: &RunConfig) -> Result<StationaryNetwork, Failure> {
    let s = solve_stationary(&c.domain, &c.tensions, &c.steady.guess(), c.steady.tol, c.steady.max_iter)?;
    Ok(s.network)
}

fn summary(net: &StationaryNetwork) -> String {
    let v = stability_criterion(net.lengths, net.curvatures, &net.tensions);
    format!(
        "# lengths {:?}\n# curvatures {:?}\n# criterion {:.6e} ({:?}, {:?})\n",
        net.lengths, net.curvatures, v.criterion_value, v.verdict, v.case
    )
}

fn steady(config: &Path, out: Option<&Path>) -> Result<u8, Failure> {
    let c = load_config(config)?;
    let net = steady_network(&c)?;
    let check = net.check(&c.domain);
    let text = format!(
        "{}# residuals force {:.1e} angle {:.1e} boundary {:.1e} perpendicular {:.1e}\n{}",
        summary(&net),
        check.force_balance,
        check.angle,
        check.on_boundary,
        check.perpendicular,
        write_network(&net)
    );
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn spectrum(input: &Path, n: Option<usize>, eig: Option<&Path>) -> Result<u8, Failure> {
    let text = read(input)?;
    let (net, n) = if is_network(&text) {
        (parse_network(&text)?, n.unwrap_or(400))
    } else {
        let c = load_config(input)?;
        (steady_network(&c)?, n.unwrap_or(c.n))
    };
    let r = max_eigenvalue(&net, n)?;
    let v = stability_criterion(net.lengths, net.curvatures, &net.tensions);
    println!("lambda_max = {:.12e}", r.lambda_max);
    println!("verdict = {:?}", v.verdict);
    println!("criterion = {:.12e}", v.criterion_value);
    println!("case = {:?}", v.case);
    if let Some(path) = eig {
        let mut w = io::BufWriter::new(fs::File::create(path)?);
        writeln!(w, "branch,sigma,phi")?;
        for (i, b) in r.eigenfunction.iter().enumerate() {
            let h = net.lengths[i] / n as f64;
            for (j, v) in b.iter().enumerate() {
                writeln!(w, "{},{:.16e},{:.16e}", i + 1, j as f64 * h, v)?;
            }
        }
        w.flush()?;
    }
    Ok(0)
}

fn evolve(config: &Path, output: Option<&Path>) -> Result<u8, Failure> {
    let c = load_config(config)?;
    let net = steady_network(&c)?;
    let p = Parameterization::new(&net, &c.domain);
    let cfg = c.evolve_config(net.lengths);
    let init = initial_state(&p, &c.perturbation, &cfg)?;
    let tr = run(&p, &init, &cfg)?;
    let rows: Vec<TrajectoryRow> = tr.records.iter().map(TrajectoryRow::from).collect();
    let target = output.map(Path::to_path_buf).or_else(|| c.output.as_ref().map(PathBuf::from));
    match target {
        Some(path) if path.as_os_str() != "-" => {
            let path = if path.is_relative() && output.is_none() {
                config.parent().unwrap_or(Path::new("")).join(path)
            } else {
                path
            };
            write_trajectory_to(&rows, io::BufWriter::new(fs::File::create(&path)?))?;
            eprintln!("wrote {} records to {}", rows.len(), path.display());
        }
        _ => write_trajectory_to(&rows, io::stdout().lock())?,
    }
    match tr.status {
        RunStatus::Completed => {
            eprintln!("status: completed at t = {}", tr.records.last().map_or(0.0, |r| r.t));
            Ok(0)
        }
        RunStatus::LeftVicinity { t, cause } => {
            eprintln!("status: left the vicinity of the stationary network at t = {t}: {cause:?}");
            Ok(2)
        }
    }
}

fn verify(path: &Path, tol: &VerifyTolerances) -> Result<u8, Failure> {
    let rows = read_trajectory(path)?;
    let checks = verify_trajectory(&rows, tol);
    println!("{} records", rows.len());
    for c in &checks {
        println!(
            "{} {}: worst {:.3e} (limit {:.3e})",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.worst,
            c.limit
        );
    }
    Ok(if checks.iter().all(|c| c.passed) { 0 } else { 3 })
}

fn sweep_one(base: &RunConfig, param: &str, value: &str, with_flow: bool) -> (String, u8) {
    let result = (|| -> Result<String, Failure> {
        let c = base.with_param(param, value)?;
        let net = steady_network(&c)?;
        let r = max_eigenvalue(&net, c.n)?;
        let v = stability_criterion(net.lengths, net.curvatures, &net.tensions);
        let mut row = format!(
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:?},{:.12e}",
            net.lengths[0],
            net.lengths[1],
            net.lengths[2],
            net.curvatures[0],
            net.curvatures[1],
            net.curvatures[2],
            v.criterion_value,
            v.verdict,
            r.lambda_max
        );
        if with_flow {
            let p = Parameterization::new(&net, &c.domain);
            let cfg = c.evolve_config(net.lengths);
            let tr = run(&p, &initial_state(&p, &c.perturbation, &cfg)?, &cfg)?;
            let last = tr.records.last().expect("a run keeps its initial record");
            let status = match tr.status {
                RunStatus::Completed => "completed".to_string(),
                RunStatus::LeftVicinity { cause, .. } => format!("left:{cause:?}"),
            };
            row.push_str(&format!(",{:.12e},{:.12e},{:.12e},{status}", last.t, last.energy, last.kappa_l2_sq));
        }
        Ok(row)
    })();
    let escaped = value.replace('"', "'");
    match result {
        Ok(row) => (format!("\"{escaped}\",{row}"), 0),
        Err(f) => (format!("\"{escaped}\",error: {}", f.message.replace(',', ";")), f.code),
    }
}

fn sweep(config: &Path, param: &str, values: &str, with_flow: bool) -> Result<u8, Failure> {
    let base = load_config(config)?;
    let values: Vec<&str> = values.split(';').map(str::trim).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(Failure { code: 1, message: "no values given".into() });
    }
    base.with_param(param, values[0])?;
    let rows: Vec<(String, u8)> = values.par_iter().map(|v| sweep_one(&base, param, v, with_flow)).collect();
    let mut header = String::from("value,l1,l2,l3,h1,h2,h3,criterion,verdict,lambda_max");
    if with_flow {
        header.push_str(",t_final,E_final,kappa_l2_sq_final,status");
    }
    println!("{header}");
    for (r, _) in &rows {
        println!("{r}");
    }
    // a failing value is reported in its row; the exit code is the worst one
    Ok(rows.iter().map(|r| r.1).max().unwrap_or(0))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Steady { config, out } => steady(config, out.as_deref()),
        Command::Spectrum { input, n, eigenfunction } => spectrum(input, *n, eigenfunction.as_deref()),
        Command::Evolve { config, output } => evolve(config, output.as_deref()),
        Command::Verify { trajectory, energy_increase, energy_law, junction, perpendicular } => verify(
            trajectory,
            &VerifyTolerances {
                energy_increase: *energy_increase,
                energy_law: *energy_law,
                junction: *junction,
                perpendicular: *perpendicular,
            },
        ),
        Command::Sweep { config, param, values, evolve } => sweep(config, param, values, *evolve),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
