use std::fs;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use serde_json::json;

use wieq_core::pipeline::{self, LemmaRow, SweepRow};
use wieq_core::replicate::UiTax;
use wieq_core::scenario::{load_config, Scenario};
use wieq_core::{Error, UIOnlyPolicy, WISolution};

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_VERIFY: u8 = 4;

/// Rows in q_schedule.csv above the pooling threshold.
const POOLED_ROWS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    Solve,
    Replicate,
    Verify,
    LemmaCheck,
    Sweep,
    Simulate,
}

/// Wage-insurance equivalence toolkit.
#[derive(Parser, Debug)]
#[command(name = "wieq", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Scenario file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the scenario's `output_dir`, then `.`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the simulation seed.
    #[arg(long)]
    seed: Option<u64>,
}

enum Failure {
    Model(Error),
    Io(PathBuf, std::io::Error),
    Verification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Model(e)
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Model(Error::Config(_) | Error::ModeMismatch { .. }) => EXIT_CONFIG,
            Failure::Model(_) | Failure::Io(..) => EXIT_SOLVER,
            Failure::Verification(_) => EXIT_VERIFY,
        }
    }

    fn to_json(&self) -> serde_json::Value {
        match self {
            Failure::Model(e) => {
                let z = match e {
                    Error::AtGrid { z, .. } => Some(*z),
                    _ => None,
                };
                json!({"error": e.kind(), "message": e.to_string(), "z": z})
            }
            Failure::Io(path, e) => json!({
                "error": "io",
                "message": format!("{}: {e}", path.display()),
            }),
            Failure::Verification(msg) => json!({"error": "verification_failed", "message": msg}),
        }
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

struct Output {
    dir: PathBuf,
}

impl Output {
    fn create(dir: PathBuf) -> Outcome<Self> {
        fs::create_dir_all(&dir).map_err(|e| Failure::Io(dir.clone(), e))?;
        Ok(Self { dir })
    }

    fn write(&self, name: &str, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Outcome<()> {
        let path = self.dir.join(name);
        let io = |e| Failure::Io(path.clone(), e);
        let mut file = BufWriter::new(fs::File::create(&path).map_err(io)?);
        body(&mut file).map_err(io)?;
        file.flush().map_err(io)?;
        println!("wrote {}", path.display());
        Ok(())
    }

    fn json<T: serde::Serialize + ?Sized>(&self, name: &str, value: &T) -> Outcome<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)
        })
    }

    fn csv(&self, name: &str, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Outcome<()> {
        self.write(name, |w| {
            let mut out = csv::Writer::from_writer(w);
            out.write_record(header)?;
            for row in rows {
                out.write_record(&row)?;
            }
            out.flush()
        })
    }
}

fn write_solution(out: &Output, solved: &pipeline::Solved) -> Outcome<()> {
    out.json("wi_solution.json", solved)?;
    let s: &WISolution = &solved.solution;
    out.csv(
        "wi_solution.csv",
        &["z", "w_res", "surplus", "effort", "value"],
        (0..s.len()).map(|i| {
            vec![num(s.z_grid[i]), num(s.w_res[i]), num(s.surplus[i]), num(s.effort[i]), num(s.value[i])]
        }),
    )
}

fn write_policy(out: &Output, ui: &UIOnlyPolicy) -> Outcome<()> {
    out.json("ui_policy.json", ui)?;
    if let UiTax::Schedule { schedule, shift } = &ui.tax {
        let mut pts: Vec<(f64, f64)> = schedule
            .nodes()
            .iter()
            .copied()
            .zip(schedule.node_values().iter().copied())
            .collect();
        let from = pts.last().map_or(schedule.x0(), |p| p.0);
        pts.extend(schedule.tabulate(from, POOLED_ROWS).into_iter().skip(1));
        out.csv(
            "q_schedule.csv",
            &["w", "q", "tau"],
            pts.into_iter().map(|(w, q)| vec![num(w), num(q + shift), num(w - q - shift)]),
        )?;
    }
    Ok(())
}

fn write_lemma(out: &Output, rows: &[LemmaRow]) -> Outcome<()> {
    out.csv(
        "lemma.csv",
        &["z", "w_res", "dw_analytic", "dw_fd", "dS_analytic", "dS_fd", "region"],
        rows.iter().map(|r| {
            vec![
                num(r.z),
                num(r.w_res),
                num(r.dw_analytic),
                opt_num(r.dw_fd),
                num(r.ds_analytic),
                opt_num(r.ds_fd),
                r.region.name().to_string(),
            ]
        }),
    )
}

fn write_sweep(out: &Output, rows: &[SweepRow]) -> Outcome<()> {
    out.csv(
        "sweep.csv",
        &[
            "path",
            "value",
            "tax",
            "x0",
            "max_reservation_dev",
            "max_effort_dev",
            "welfare_rel_diff",
            "budget_residual_wi",
            "budget_residual_ui",
            "max_pooling_dev",
            "max_derivative_rel_dev",
            "surplus_match",
            "pass",
            "error",
        ],
        rows.iter().map(|r| {
            vec![
                r.path.clone(),
                num(r.value),
                num(r.tax),
                opt_num(r.x0),
                num(r.max_reservation_dev),
                num(r.max_effort_dev),
                num(r.welfare_rel_diff),
                num(r.budget_residual_wi),
                num(r.budget_residual_ui),
                opt_num(r.max_pooling_dev),
                opt_num(r.max_derivative_rel_dev),
                opt_num(r.surplus_match),
                r.pass.to_string(),
                r.error.clone().unwrap_or_default(),
            ]
        }),
    )
}

fn failed_checks(checks: &[pipeline::Check]) -> String {
    checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{} = {:e} (tolerance {:e})", c.name, c.value, c.tolerance))
        .collect::<Vec<_>>()
        .join("; ")
}

fn run(cli: &Cli) -> Outcome<()> {
    let sc: Scenario = load_config(&cli.config)?;
    let dir = cli
        .out
        .clone()
        .or_else(|| sc.raw.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let out = Output::create(dir)?;

    match cli.command {
        Command::Solve => write_solution(&out, &pipeline::solve(&sc)?),
        Command::Replicate => {
            let solved = pipeline::solve(&sc)?;
            let ui = pipeline::replicate_policy(&sc, &solved)?;
            write_policy(&out, &ui)
        }
        Command::Verify => {
            let run = pipeline::verify(&sc)?;
            out.json("verification.json", &run.verification)?;
            out.write("welfare_wi.csv", |w| run.wi_report.write_csv(w))?;
            out.write("welfare_ui.csv", |w| run.ui_report.write_csv(w))?;
            if run.verification.pass {
                Ok(())
            } else {
                Err(Failure::Verification(failed_checks(&run.verification.checks)))
            }
        }
        Command::LemmaCheck => {
            let (_, rows, summary) = pipeline::lemma_check(&sc)?;
            write_lemma(&out, &rows)?;
            if summary.sign_violations > 0 || summary.max_pooling_dev >= sc.tol.pooling {
                Err(Failure::Verification(format!(
                    "{} sign violations, pooling deviation {:e}",
                    summary.sign_violations, summary.max_pooling_dev
                )))
            } else {
                Ok(())
            }
        }
        Command::Sweep => {
            let rows = pipeline::sweep(&sc)?;
            write_sweep(&out, &rows)?;
            let failed: Vec<String> = rows.iter().filter(|r| !r.pass).map(|r| num(r.value)).collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Failure::Verification(format!("failed at {}", failed.join(", "))))
            }
        }
        Command::Simulate => {
            let sim = pipeline::simulate(&sc, cli.seed)?;
            out.json("sim_report.json", &sim)?;
            if sim.pass {
                Ok(())
            } else {
                Err(Failure::Verification("simulated moments outside the analytic bands".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.code())
        }
    }
}
