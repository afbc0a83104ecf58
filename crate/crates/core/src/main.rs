use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dplqg::bounds::{network_bound_report, BoundOptions};
use dplqg::calibrate::{
    epsilon_for_cost, epsilon_range_aposteriori, epsilon_range_apriori, intersect_over_agents, validate_epsilon,
    CalibrationTarget, ChannelGains, EpsilonRange, MseBand, RangeStatus, ValidationTarget,
};
use dplqg::cost::{cost_rate_bounds, total_private_cost};
use dplqg::io::{
    bound_report_table, cost_report_table, load_scenario, range_table, rate_bounds_table, synthesis_table,
    validation_table, write_results, LoadedScenario, ReportBuilder, ResultBundle, Table,
};
use dplqg::linalg::spectral_radius;
use dplqg::mechanism::output_sensitivity;
use dplqg::presets::run_preset;
use dplqg::sim::{NoiseMode, PreparedScenario, Record, SimTrace};
use dplqg::synthesis::synthesize;
use dplqg::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "dplqg",
    version,
    about = "Differentially private multi-agent LQG tracking control"
)]
struct Cli {
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Overrides the scenario or preset seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Use the bound formulas exactly as printed, without degenerate-case guards.
    #[arg(long, global = true)]
    paper_literal: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TargetKind {
    Apriori,
    Aposteriori,
    Cost,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Private,
    Nonprivate,
    NoiseFree,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Control and filter gains.
    Synth,
    /// Trace and log-det bounds on the error covariances.
    Bounds,
    /// Privacy-parameter ranges for an MSE band or a cost cap.
    Calibrate {
        #[arg(long, value_enum)]
        target: TargetKind,
        /// Lower end of the MSE band.
        #[arg(long)]
        lower: Option<f64>,
        /// Upper end of the MSE band.
        #[arg(long)]
        upper: Option<f64>,
        /// Cost cap for the cost target.
        #[arg(long)]
        alpha: Option<f64>,
        /// δ for the range; defaults to the first agent's output δ.
        #[arg(long)]
        delta: Option<f64>,
        /// Points of the range re-checked with the exact Riccati solution.
        #[arg(long, default_value_t = 5)]
        samples: usize,
    },
    /// Total cost, privacy overhead and cost-rate bounds.
    Cost,
    /// Closed-loop runs.
    Simulate {
        #[arg(long, value_enum, default_value = "private")]
        mode: Mode,
        /// Keep only scalar series.
        #[arg(long)]
        summary: bool,
    },
    /// Named experiment: case-study, table1, cost-rate-sweep or mse-bounds.
    Preset { name: String },
}

fn scenario(cli: &Cli) -> Result<LoadedScenario> {
    let path = cli.scenario.as_deref().ok_or_else(|| Error::Validation {
        key: "--scenario".into(),
        reason: "this command needs a scenario file".into(),
    })?;
    load_scenario(path, cli.seed)
}

fn bundle_for(cmd: &str, l: &LoadedScenario) -> ResultBundle {
    ResultBundle::new(cmd, Some(l.scenario.seed), Some(l.hash.clone()))
}

fn synth_cmd(cli: &Cli) -> Result<ResultBundle> {
    let l = scenario(cli)?;
    let net = l.scenario.network(0)?;
    let s = synthesize(&net)?;
    let mut b = bundle_for("synth", &l);
    b.reports.push(dplqg::io::Report {
        name: "synthesis".into(),
        body: synthesis_table(&s),
    });
    Ok(b)
}

fn bounds_cmd(cli: &Cli) -> Result<ResultBundle> {
    let l = scenario(cli)?;
    let net = l.scenario.network(0)?;
    let rep = network_bound_report(
        &net,
        BoundOptions {
            paper_literal: cli.paper_literal,
        },
    )?;
    let mut b = bundle_for("bounds", &l);
    b.reports.push(dplqg::io::Report {
        name: "bounds".into(),
        body: bound_report_table(&rep),
    });
    Ok(b)
}

#[allow(clippy::too_many_arguments)]
fn calibrate_cmd(
    cli: &Cli,
    target: TargetKind,
    lower: Option<f64>,
    upper: Option<f64>,
    alpha: Option<f64>,
    delta: Option<f64>,
    samples: usize,
) -> Result<(ResultBundle, Option<Error>)> {
    let l = scenario(cli)?;
    let sc = &l.scenario;
    let net = sc.network(0)?;
    let synth = synthesize(&net)?;
    let delta = delta.unwrap_or(sc.agents[0].output_privacy.delta);
    let sens = sc
        .agents
        .iter()
        .map(|a| output_sensitivity(&a.c, a.adjacency.trajectory_radius))
        .collect::<Result<Vec<f64>>>()?;
    let ch = ChannelGains::from_output_matrix(&net.c)?;
    let mut b = bundle_for("calibrate", &l);
    let mut report = ReportBuilder::new().num("delta", delta);
    let (range, vtarget): (EpsilonRange, ValidationTarget) = match target {
        TargetKind::Apriori | TargetKind::Aposteriori => {
            let band = MseBand::new(
                lower.ok_or_else(|| Error::Validation {
                    key: "--lower".into(),
                    reason: "required for band targets".into(),
                })?,
                upper.ok_or_else(|| Error::Validation {
                    key: "--upper".into(),
                    reason: "required for band targets".into(),
                })?,
            )?;
            let apriori = matches!(target, TargetKind::Apriori);
            let n = net.state_dim();
            let r = intersect_over_agents(&sens, cli.paper_literal, |s| {
                let t = CalibrationTarget::new(band, delta, s)?;
                if apriori {
                    epsilon_range_apriori(&t, &net.a, &net.w, &ch)
                } else {
                    epsilon_range_aposteriori(&t, n, &net.w, &ch)
                }
            })?;
            report = report
                .text("target", if apriori { "apriori" } else { "aposteriori" })
                .num("band_lower", band.lower)
                .num("band_upper", band.upper);
            for (i, a) in r.per_agent.iter().enumerate() {
                report = report.section(&format!("agent_{i:03}"), range_table(a));
            }
            let vt = if apriori {
                ValidationTarget::AprioriBand(band)
            } else {
                ValidationTarget::AposterioriBand(band)
            };
            (r.common, vt)
        }
        TargetKind::Cost => {
            let alpha = alpha.ok_or_else(|| Error::Validation {
                key: "--alpha".into(),
                reason: "required for the cost target".into(),
            })?;
            let floor = sens
                .iter()
                .map(|s| epsilon_for_cost(alpha, &net, &synth, delta, *s))
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            report = report.text("target", "cost").num("alpha", alpha);
            (
                EpsilonRange {
                    lower: floor,
                    upper: f64::INFINITY,
                    etas: Default::default(),
                    status: RangeStatus::Feasible,
                },
                ValidationTarget::CostCap(alpha),
            )
        }
    };
    report = report.section("range", range_table(&range));
    let mut failure = None;
    if let RangeStatus::Infeasible(why) = &range.status {
        failure = Some(Error::Infeasible(why.clone()));
    } else {
        let s0 = sens[0];
        for (i, eps) in range.sample(samples).into_iter().enumerate() {
            let v = validate_epsilon(eps, delta, s0, vtarget, &net, &synth, None)?;
            report = report.section(&format!("check_{i:03}"), validation_table(&v));
        }
    }
    b.reports.push(report.report("calibration"));
    Ok((b, failure))
}

fn cost_cmd(cli: &Cli) -> Result<ResultBundle> {
    let l = scenario(cli)?;
    let net = l.scenario.network(0)?;
    let synth = synthesize(&net)?;
    let rep = total_private_cost(&net, &synth)?;
    let mut b = bundle_for("cost", &l);
    let mut report = ReportBuilder::new().section("total", cost_report_table(&rep));
    let ag = &l.scenario.agents[0];
    if spectral_radius(&net.a)? < 1.0 {
        let s = output_sensitivity(&ag.c, ag.adjacency.trajectory_radius)?;
        let rb = cost_rate_bounds(ag.output_privacy.epsilon, ag.output_privacy.delta, s, &net, &synth)?;
        report = report.section("rate", rate_bounds_table(&rb));
    } else {
        report = report.text("rate", "skipped: A is not Schur stable");
    }
    b.reports.push(report.report("cost"));
    Ok(b)
}

fn trace_table(name: &str, t: &SimTrace) -> Table {
    let mut header: Vec<String> = vec!["k".into()];
    let groups = [
        ("x", &t.x),
        ("xhat", &t.x_hat),
        ("xprior", &t.x_prior),
        ("y", &t.y_tilde),
        ("u", &t.u),
        ("v", &t.v),
        ("w", &t.w),
    ];
    for (g, s) in &groups {
        header.extend((0..s.dim).map(|i| format!("{g}{i}")));
    }
    header.extend(
        [
            "stage_cost",
            "running_cost",
            "prediction_sq_error",
            "estimation_sq_error",
        ]
        .map(String::from),
    );
    let mut table = Table {
        name: name.into(),
        header,
        rows: Vec::with_capacity(t.steps),
        index: true,
    };
    for k in 0..t.steps {
        let mut row = vec![k as f64];
        for (_, s) in &groups {
            if s.dim > 0 {
                row.extend_from_slice(s.row(k));
            }
        }
        row.extend([
            t.stage_cost[k],
            t.running_cost[k],
            t.prediction_sq_error[k],
            t.estimation_sq_error[k],
        ]);
        table.rows.push(row);
    }
    table
}

fn simulate_cmd(cli: &Cli, mode: Mode, summary: bool) -> Result<ResultBundle> {
    let l = scenario(cli)?;
    let mode = match mode {
        Mode::Private => NoiseMode::Private,
        Mode::Nonprivate => NoiseMode::NonPrivate,
        Mode::NoiseFree => NoiseMode::NoiseFree,
    };
    let p = PreparedScenario::new(&l.scenario, mode)?;
    let traces = p.run_all(if summary { Record::Summary } else { Record::Full })?;
    let mut b = bundle_for("simulate", &l);
    let mut report = ReportBuilder::new()
        .int("runs", traces.len() as i64)
        .int("steps", l.scenario.steps as i64);
    for (r, t) in traces.iter().enumerate() {
        b.tables.push(trace_table(&format!("trace_run{r}"), t));
        report = report.section(
            &format!("run_{r}"),
            ReportBuilder::new()
                .num("mean_cost", t.mean_cost)
                .num("mean_prediction_mse", t.mean_prediction_mse)
                .num("mean_estimation_mse", t.mean_estimation_mse)
                .text("gain_fingerprint", &t.gain_fingerprint)
                .build(),
        );
    }
    b.reports.push(report.report("simulation"));
    Ok(b)
}

fn finish(bundle: &ResultBundle, out: &Path) -> Result<()> {
    for p in write_results(bundle, out)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let bundle = match &cli.command {
        Command::Synth => synth_cmd(cli)?,
        Command::Bounds => bounds_cmd(cli)?,
        Command::Calibrate {
            target,
            lower,
            upper,
            alpha,
            delta,
            samples,
        } => {
            let (b, failure) = calibrate_cmd(cli, *target, *lower, *upper, *alpha, *delta, *samples)?;
            finish(&b, &cli.out)?;
            return failure.map_or(Ok(()), Err);
        }
        Command::Cost => cost_cmd(cli)?,
        Command::Simulate { mode, summary } => simulate_cmd(cli, *mode, *summary)?,
        Command::Preset { name } => run_preset(name, cli.seed)?,
    };
    finish(&bundle, &cli.out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}
