//! Named experiments that produce result bundles.

use crate::bounds::{
    aposteriori_trace_bounds, apriori_trace_bounds, extremal_channel, network_bound_report, BoundOptions,
};
use crate::cost::{cost_rate_bounds, cost_rate_numeric, default_step, overhead_at};
use crate::error::{Error, Result};
use crate::io::{bound_report_table, LoadedScenario, ReportBuilder, ResultBundle, Table};
use crate::linalg::Matrix;
use crate::mechanism::{noise_scale, PrivacyParams};
use crate::model::NetworkModel;
use crate::sim::{empirical_mse, NoiseMode, PreparedScenario, Record, SimTrace};
use crate::synthesis::{filter_covariances_dense, synthesize, SynthesisResult};

/// Built-in 100-vehicle scenario.
pub const CASE_STUDY_TOML: &str = include_str!("../presets/case_study.toml");

pub const PRESET_NAMES: [&str; 4] = ["case-study", "table1", "cost-rate-sweep", "mse-bounds"];

/// Steps after which the private running cost is compared with the non-private one.
pub const BURN_IN: usize = 10;

/// Privacy levels of the per-vehicle MSE table.
pub const TABLE1_EPSILONS: [f64; 6] = [0.1, 0.2, 0.4, 0.6, 0.8, 1.0];
pub const TABLE1_DELTA: f64 = 0.05;

/// Monte-Carlo runs behind the `mse-bounds` series.
pub const MSE_RUNS: usize = 20;

/// δ and ε grid of the cost-rate sweep.
pub const RATE_DELTA: f64 = 0.001;
pub const RATE_GRID: (f64, f64, usize) = (0.2, 3.0, 20);

pub fn case_study(seed: Option<u64>) -> Result<LoadedScenario> {
    LoadedScenario::from_text(CASE_STUDY_TOML, seed)
}

/// Single vehicle block with sampling period 0.1.
pub fn vehicle_block() -> Matrix {
    Matrix::from_rows(&[[1.0, 0.1], [0.0, 1.0]]).expect("literal matrix")
}

/// One row of the per-vehicle MSE table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Table1Row {
    pub epsilon: f64,
    pub sigma: f64,
    pub trace_sigma_bar: f64,
    pub lower: f64,
    pub upper: f64,
    pub trace_sigma: f64,
    pub apriori_lower: f64,
    pub apriori_upper: f64,
}

/// Exact a posteriori MSE and its bounds for one vehicle block, V = σ²I, Δ = 1.
pub fn table1_rows() -> Result<Vec<Table1Row>> {
    let a = vehicle_block();
    let eye = Matrix::identity(2);
    TABLE1_EPSILONS
        .iter()
        .map(|&eps| {
            let sigma = noise_scale(PrivacyParams::new(eps, TABLE1_DELTA)?, 1.0)?.sigma;
            let v = eye.scale(sigma * sigma);
            let ch = extremal_channel(&eye, &v)?;
            let post = aposteriori_trace_bounds(2, &eye, &ch)?;
            let prior = apriori_trace_bounds(&a, &eye, &ch)?;
            let (s, sb) = filter_covariances_dense(&a, &eye, &v, &eye)?;
            Ok(Table1Row {
                epsilon: eps,
                sigma,
                trace_sigma_bar: sb.trace(),
                lower: post.lower,
                upper: post.upper,
                trace_sigma: s.trace(),
                apriori_lower: prior.lower,
                apriori_upper: prior.upper,
            })
        })
        .collect()
}

/// Two damped vehicles with coupled position weights; A is Schur stable.
pub fn rate_sweep_network() -> Result<NetworkModel> {
    let blk = Matrix::from_rows(&[[0.95, 0.1], [0.0, 0.9]])?;
    let b = Matrix::from_rows(&[[0.005], [0.1]])?;
    let a = Matrix::block_diag(&[blk.clone(), blk]);
    let bb = Matrix::block_diag(&[b.clone(), b]);
    let eye = Matrix::identity(4);
    let q = Matrix::from_rows(&[
        [5.0, 0.0, 1.0, 0.0],
        [0.0, 5.0, 0.0, 1.0],
        [1.0, 0.0, 5.0, 0.0],
        [0.0, 1.0, 0.0, 5.0],
    ])?;
    let mut net = NetworkModel::new(
        a,
        bb,
        eye.clone(),
        eye.clone(),
        eye.clone(),
        eye.clone(),
        q,
        Matrix::identity(2).scale(0.1),
        vec![1.0; 4],
        vec![1.0; 4],
    )?;
    net.blocks = vec![
        crate::model::AgentBlock {
            state: 0..2,
            input: 0..1,
            output: 0..2,
        },
        crate::model::AgentBlock {
            state: 2..4,
            input: 1..2,
            output: 2..4,
        },
    ];
    Ok(net)
}

/// Evenly spaced grid of `count` points on [lo, hi].
pub fn linear_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect()
}

/// One point of the cost-rate sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateRow {
    pub epsilon: f64,
    pub sigma: f64,
    pub lower: f64,
    pub upper: f64,
    pub stencil: f64,
    pub overhead: f64,
}

/// Rate bounds and stencil derivative over `grid`, unit sensitivity.
pub fn rate_sweep(net: &NetworkModel, synth: &SynthesisResult, delta: f64, grid: &[f64]) -> Result<Vec<RateRow>> {
    grid.iter()
        .map(|&eps| {
            let rb = cost_rate_bounds(eps, delta, 1.0, net, synth)?;
            Ok(RateRow {
                epsilon: eps,
                sigma: rb.sigma,
                lower: rb.lower,
                upper: rb.upper,
                stencil: cost_rate_numeric(eps, delta, 1.0, net, synth, default_step(eps))?,
                overhead: overhead_at(eps, delta, 1.0, net, synth)?,
            })
        })
        .collect()
}

/// Runs a named preset. `seed` overrides the preset's own seed where it has one.
pub fn run_preset(name: &str, seed: Option<u64>) -> Result<ResultBundle> {
    match name {
        "case-study" => case_study_bundle(seed),
        "table1" => table1_bundle(),
        "cost-rate-sweep" => rate_bundle(),
        "mse-bounds" => mse_bundle(seed),
        other => Err(Error::validation(
            "preset",
            format!("unknown preset '{other}'; expected one of {}", PRESET_NAMES.join(", ")),
        )),
    }
}

fn table1_bundle() -> Result<ResultBundle> {
    let mut b = ResultBundle::new("preset table1", None, None);
    let mut t = Table::new(
        "table1",
        &[
            "epsilon",
            "sigma",
            "trace_sigma_bar",
            "lower",
            "upper",
            "trace_sigma",
            "apriori_lower",
            "apriori_upper",
        ],
        false,
    );
    for r in table1_rows()? {
        t.push(vec![
            r.epsilon,
            r.sigma,
            r.trace_sigma_bar,
            r.lower,
            r.upper,
            r.trace_sigma,
            r.apriori_lower,
            r.apriori_upper,
        ]);
    }
    b.tables.push(t);
    b.reports.push(
        ReportBuilder::new()
            .num("delta", TABLE1_DELTA)
            .num("sensitivity", 1.0)
            .report("table1"),
    );
    Ok(b)
}

fn rate_bundle() -> Result<ResultBundle> {
    let net = rate_sweep_network()?;
    let synth = synthesize(&net)?;
    let grid = linear_grid(RATE_GRID.0, RATE_GRID.1, RATE_GRID.2);
    let rows = rate_sweep(&net, &synth, RATE_DELTA, &grid)?;
    let mut t = Table::new(
        "cost_rate",
        &["epsilon", "sigma", "lower", "upper", "stencil", "overhead"],
        false,
    );
    let mut inside = 0;
    for r in &rows {
        if r.stencil >= r.lower && r.stencil <= r.upper {
            inside += 1;
        }
        t.push(vec![r.epsilon, r.sigma, r.lower, r.upper, r.stencil, r.overhead]);
    }
    let mut b = ResultBundle::new("preset cost-rate-sweep", None, None);
    b.tables.push(t);
    b.reports.push(
        ReportBuilder::new()
            .num("delta", RATE_DELTA)
            .int("points", rows.len() as i64)
            .int("stencil_inside_bounds", inside)
            .report("cost_rate"),
    );
    Ok(b)
}

/// Private, non-private and noise-free runs of the case study.
pub struct CaseStudyRuns {
    pub loaded: LoadedScenario,
    pub private_net: NetworkModel,
    pub private: SimTrace,
    pub nonprivate: SimTrace,
    pub noise_free: SimTrace,
}

pub fn case_study_runs(seed: Option<u64>) -> Result<CaseStudyRuns> {
    let loaded = case_study(seed)?;
    let sc = &loaded.scenario;
    let p = PreparedScenario::new(sc, NoiseMode::Private)?;
    let private_net = p.run_model(0)?.0;
    let private = p.run(0, Record::Full)?;
    let nonprivate = PreparedScenario::new(sc, NoiseMode::NonPrivate)?.run(0, Record::Full)?;
    let noise_free = PreparedScenario::new(sc, NoiseMode::NoiseFree)?.run(0, Record::Full)?;
    Ok(CaseStudyRuns {
        loaded,
        private_net,
        private,
        nonprivate,
        noise_free,
    })
}

fn case_study_bundle(seed: Option<u64>) -> Result<ResultBundle> {
    let runs = case_study_runs(seed)?;
    let sc = &runs.loaded.scenario;
    let mut b = ResultBundle::new("preset case-study", Some(sc.seed), Some(runs.loaded.hash.clone()));

    let mut cost = Table::new("cost", &["k", "private", "nonprivate", "noise_free"], true);
    for k in 0..sc.steps {
        cost.push(vec![
            k as f64,
            runs.private.running_cost[k],
            runs.nonprivate.running_cost[k],
            runs.noise_free.running_cost[k],
        ]);
    }
    b.tables.push(cost);

    let limit = &sc.agents[0].reference_limit;
    let mut ag = Table::new(
        "agent1",
        &["k", "x1", "x2", "y1", "y2", "xhat1", "xhat2", "ref1", "ref2"],
        true,
    );
    for k in 0..sc.steps {
        let (x, y, xh) = (
            runs.private.x.row(k),
            runs.private.y_tilde.row(k),
            runs.private.x_hat.row(k),
        );
        let f = sc.reference_profile.factor(k);
        ag.push(vec![
            k as f64,
            x[0],
            x[1],
            y[0],
            y[1],
            xh[0],
            xh[1],
            f * limit[0],
            f * limit[1],
        ]);
    }
    b.tables.push(ag);

    let bounds = network_bound_report(&runs.private_net, BoundOptions::default())?;
    let above = (BURN_IN..sc.steps).all(|k| runs.private.running_cost[k] > runs.nonprivate.running_cost[k]);
    let last = sc.steps - 1;
    b.reports.push(
        ReportBuilder::new()
            .int("agents", sc.agents.len() as i64)
            .int("steps", sc.steps as i64)
            .int("burn_in", BURN_IN as i64)
            .num("private_mean_cost", runs.private.mean_cost)
            .num("nonprivate_mean_cost", runs.nonprivate.mean_cost)
            .flag("private_above_nonprivate_after_burn_in", above)
            .num("prediction_mse_time_average", runs.private.mean_prediction_mse)
            .list("noise_free_final_agent1", &runs.noise_free.x.row(last)[..2])
            .list("private_final_agent1", &runs.private.x.row(last)[..2])
            .text("gain_fingerprint", &runs.private.gain_fingerprint)
            .section("bounds", bound_report_table(&bounds))
            .report("case_study"),
    );
    Ok(b)
}

fn mse_bundle(seed: Option<u64>) -> Result<ResultBundle> {
    let mut loaded = case_study(seed)?;
    loaded.scenario.runs = MSE_RUNS;
    let sc = &loaded.scenario;
    let p = PreparedScenario::new(sc, NoiseMode::Private)?;
    let traces = p.run_all(Record::Summary)?;
    let (pred, est) = empirical_mse(&traces)?;
    let net = p.run_model(0)?.0;
    let rep = network_bound_report(&net, BoundOptions::default())?;
    let exact = p.synthesis().sigma.trace();
    let mut t = Table::new(
        "mse",
        &["k", "prediction_mse", "estimation_mse", "trace_sigma", "lower", "upper"],
        true,
    );
    for k in 0..sc.steps {
        t.push(vec![
            k as f64,
            pred[k],
            est[k],
            exact,
            rep.trace_sigma.lower,
            rep.trace_sigma.upper,
        ]);
    }
    let avg = pred.iter().sum::<f64>() / pred.len() as f64;
    let mut b = ResultBundle::new("preset mse-bounds", Some(sc.seed), Some(loaded.hash.clone()));
    b.tables.push(t);
    b.reports.push(
        ReportBuilder::new()
            .int("runs", MSE_RUNS as i64)
            .num("prediction_mse_time_average", avg)
            .num("trace_sigma", exact)
            .num("lower", rep.trace_sigma.lower)
            .num("upper", rep.trace_sigma.upper)
            .flag("within_bounds", rep.trace_sigma.contains(avg, 0.0))
            .report("mse_bounds"),
    );
    Ok(b)
}
