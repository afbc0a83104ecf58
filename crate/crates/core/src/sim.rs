//! Closed-loop simulation of the private tracking controller.
//!
//! Loop order for each step k, agents ascending, every draw from its own
//! `(agent, role)` substream:
//!
//! 1. every agent draws vᵢ(k) and sends ỹᵢ(k) = Cᵢxᵢ(k) + vᵢ(k);
//! 2. the cloud corrects x̂⁻(k) with ỹ(k) (at k = 0 only this correction runs);
//! 3. the cloud computes u*(k) = Lx̂(k) + Mg;
//! 4. every agent draws wᵢ(k) and moves to xᵢ(k+1) = Aᵢxᵢ(k) + Bᵢu*ᵢ(k) + wᵢ(k);
//! 5. the cloud predicts x̂⁻(k+1) = Ax̂(k) + Bu*(k).
//!
//! Initial-state draws happen once, before step 0, agents ascending. Draws are
//! consumed even when a noise level is zero, so runs at different privacy
//! levels see the same standard-normal sequence.

use std::collections::HashMap;
use std::num::NonZeroUsize;

use sha2::{Digest, Sha256};

use crate::cost::nonprivate_network;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, norm_sq, sym_eig_vectors, Matrix};
use crate::model::{assemble_network, AgentBlock, AgentModel, NetworkModel};
use crate::rng::{run_seed, standard_normal, substream, StreamRng, StreamRole};
use crate::synthesis::{control_input, filter_correct, solve_reference_offset, synthesize, SynthesisResult};

/// Reference trajectory used when scoring the loop. The controller always tracks x̃.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ReferenceProfile {
    /// x̄(k) = x̄.
    #[default]
    Constant,
    /// x̄(k) = tanh(k)·x̄, elementwise.
    TanhRamp,
}

impl ReferenceProfile {
    pub fn factor(self, k: usize) -> f64 {
        match self {
            ReferenceProfile::Constant => 1.0,
            ReferenceProfile::TanhRamp => (k as f64).tanh(),
        }
    }

    /// x̄(k) for limit `x_bar`.
    pub fn at(self, k: usize, x_bar: &[f64]) -> Vec<f64> {
        let f = self.factor(k);
        x_bar.iter().map(|v| f * v).collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            ReferenceProfile::Constant => "constant",
            ReferenceProfile::TanhRamp => "tanh",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "constant" => Some(ReferenceProfile::Constant),
            "tanh" | "tanh-ramp" => Some(ReferenceProfile::TanhRamp),
            _ => None,
        }
    }
}

/// Which noise the loop runs with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseMode {
    /// Outputs and references privatized as configured.
    Private,
    /// No privacy: x̃ = x̄ and a numerically negligible output noise (V = τI).
    NonPrivate,
    /// As `NonPrivate` for synthesis, but the plant has no process or output
    /// noise and starts at x̂(0).
    NoiseFree,
}

/// How much of the loop to keep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Record {
    /// Every vector series.
    Full,
    /// Scalar series only (costs and squared errors).
    Summary,
}

/// Row-per-step storage for a vector quantity.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Series {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Series {
    fn with_capacity(dim: usize, steps: usize) -> Self {
        Self {
            dim,
            data: Vec::with_capacity(dim * steps),
        }
    }

    fn push(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.dim);
        self.data.extend_from_slice(row);
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }
}

/// One simulated run.
#[derive(Clone, Debug, PartialEq)]
pub struct SimTrace {
    pub steps: usize,
    pub record: Record,
    pub x: Series,
    pub x_hat: Series,
    pub x_prior: Series,
    pub y_tilde: Series,
    pub u: Series,
    pub v: Series,
    pub w: Series,
    /// (x−x̄(k))ᵀQ(x−x̄(k)) + uᵀRu.
    pub stage_cost: Vec<f64>,
    /// Running time average of `stage_cost`.
    pub running_cost: Vec<f64>,
    /// ‖x(k) − x̂⁻(k)‖².
    pub prediction_sq_error: Vec<f64>,
    /// ‖x(k) − x̂(k)‖².
    pub estimation_sq_error: Vec<f64>,
    pub mean_cost: f64,
    pub mean_prediction_mse: f64,
    pub mean_estimation_mse: f64,
    /// Hash of the control gains K, L, M used in the loop.
    pub gain_fingerprint: String,
}

/// Source of standard-normal draws keyed by agent and role.
pub trait NoiseSource {
    fn standard_normals(&mut self, agent: usize, role: StreamRole, out: &mut [f64]);
}

/// Default source: lazily created substreams of one master seed.
pub struct SeededNoise {
    master: u64,
    streams: HashMap<(usize, StreamRole), StreamRng>,
}

impl SeededNoise {
    pub fn new(master: u64) -> Self {
        Self {
            master,
            streams: HashMap::new(),
        }
    }
}

impl NoiseSource for SeededNoise {
    fn standard_normals(&mut self, agent: usize, role: StreamRole, out: &mut [f64]) {
        let master = self.master;
        let rng = self
            .streams
            .entry((agent, role))
            .or_insert_with(|| substream(master, agent as u64, role));
        for o in out.iter_mut() {
            *o = standard_normal(rng);
        }
    }
}

/// Initial condition of the plant and filter.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialCondition {
    /// Public estimate x̂(0).
    pub mean: Vec<f64>,
    /// Standard deviation of x(0) around x̂(0).
    pub spread: f64,
    /// Per-block fixed x(0) overriding the draw.
    pub fixed: Vec<Option<Vec<f64>>>,
}

impl InitialCondition {
    pub fn exact(mean: Vec<f64>) -> Self {
        Self {
            mean,
            spread: 0.0,
            fixed: Vec::new(),
        }
    }
}

/// Settings of one low-level run on an assembled network.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub steps: usize,
    pub initial: InitialCondition,
    pub profile: ReferenceProfile,
    pub record: Record,
    /// When false the plant has no process or output noise.
    pub plant_noise: bool,
}

/// Square-root factor F with FFᵀ = m for a PSD block.
fn noise_factor(m: &Matrix) -> Result<Matrix> {
    if m.max_abs() == 0.0 {
        return Ok(Matrix::zeros(m.rows(), m.cols()));
    }
    if let Ok(l) = cholesky(m) {
        return Ok(l);
    }
    let (spec, vecs) = sym_eig_vectors(m)?;
    let tol = 1e-12 * m.frobenius_norm();
    if spec.min() < -tol {
        return Err(Error::NotPositiveDefinite(
            "noise covariance has a negative eigenvalue".into(),
        ));
    }
    let roots: Vec<f64> = spec.values().iter().map(|l| l.max(0.0).sqrt()).collect();
    Ok(&vecs * &Matrix::from_diag(&roots))
}

fn gain_fingerprint(synth: &SynthesisResult) -> String {
    let mut h = Sha256::new();
    for m in [&synth.k, &synth.l, &synth.m] {
        h.update((m.rows() as u64).to_le_bytes());
        h.update((m.cols() as u64).to_le_bytes());
        for v in m.as_slice() {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    h.finalize()[..16].iter().map(|b| format!("{b:02x}")).collect()
}

struct BlockFactors {
    v: Vec<Matrix>,
    w: Vec<Matrix>,
}

fn block_factors(net: &NetworkModel) -> Result<BlockFactors> {
    let mut v = Vec::with_capacity(net.blocks.len());
    let mut w = Vec::with_capacity(net.blocks.len());
    for b in &net.blocks {
        let (o, s) = (&b.output, &b.state);
        v.push(noise_factor(&net.v.block(o.start, o.start, o.len(), o.len()))?);
        w.push(noise_factor(&net.w.block(s.start, s.start, s.len(), s.len()))?);
    }
    Ok(BlockFactors { v, w })
}

fn draw_blocks<N: NoiseSource + ?Sized>(
    src: &mut N,
    blocks: &[AgentBlock],
    factors: &[Matrix],
    role: StreamRole,
    pick: fn(&AgentBlock) -> std::ops::Range<usize>,
    out: &mut [f64],
    scale: bool,
) {
    for (i, b) in blocks.iter().enumerate() {
        let r = pick(b);
        let mut z = vec![0.0; r.len()];
        src.standard_normals(i, role, &mut z);
        let val = if scale {
            factors[i].matvec(&z)
        } else {
            vec![0.0; r.len()]
        };
        out[r].copy_from_slice(&val);
    }
}

/// Runs the loop on an assembled network with a given controller.
pub fn simulate<N: NoiseSource + ?Sized>(
    net: &NetworkModel,
    synth: &SynthesisResult,
    cfg: &RunConfig,
    src: &mut N,
) -> Result<SimTrace> {
    if cfg.steps == 0 {
        return Err(Error::validation("sim.steps", "must be at least 1"));
    }
    let (n, m, p) = (net.state_dim(), net.input_dim(), net.output_dim());
    if cfg.initial.mean.len() != n {
        return Err(Error::dim(format!(
            "initial mean has length {}, expected {n}",
            cfg.initial.mean.len()
        )));
    }
    if !(cfg.initial.spread >= 0.0 && cfg.initial.spread.is_finite()) {
        return Err(Error::validation("sim.initial_spread", "must be finite and ≥ 0"));
    }
    let factors = block_factors(net)?;
    let full = cfg.record == Record::Full;
    let cap = if full { cfg.steps } else { 0 };
    let series = |d: usize| Series::with_capacity(if full { d } else { 0 }, cap);
    let (mut xs, mut xhs, mut xps, mut ys, mut us, mut vs, mut ws) = (
        series(n),
        series(n),
        series(n),
        series(p),
        series(m),
        series(p),
        series(n),
    );

    let mut x = cfg.initial.mean.clone();
    let mut z0 = vec![0.0; n];
    let ones: Vec<Matrix> = net
        .blocks
        .iter()
        .map(|b| Matrix::identity(b.state.len()).scale(cfg.initial.spread))
        .collect();
    draw_blocks(
        src,
        &net.blocks,
        &ones,
        StreamRole::InitialState,
        |b| b.state.clone(),
        &mut z0,
        true,
    );
    for (xi, zi) in x.iter_mut().zip(&z0) {
        *xi += zi;
    }
    for (i, fixed) in cfg.initial.fixed.iter().enumerate() {
        if let Some(f) = fixed {
            let r = net
                .blocks
                .get(i)
                .ok_or_else(|| Error::dim("fixed initial state for a missing block"))?
                .state
                .clone();
            if f.len() != r.len() {
                return Err(Error::dim(format!(
                    "fixed initial state {i} has length {}, expected {}",
                    f.len(),
                    r.len()
                )));
            }
            x[r].copy_from_slice(f);
        }
    }

    let mut prior = cfg.initial.mean.clone();
    let mut v = vec![0.0; p];
    let mut w = vec![0.0; n];
    let mut stage_cost = Vec::with_capacity(cfg.steps);
    let mut running_cost = Vec::with_capacity(cfg.steps);
    let mut pred = Vec::with_capacity(cfg.steps);
    let mut est = Vec::with_capacity(cfg.steps);
    let mut total = 0.0;
    for k in 0..cfg.steps {
        draw_blocks(
            src,
            &net.blocks,
            &factors.v,
            StreamRole::OutputNoise,
            |b| b.output.clone(),
            &mut v,
            cfg.plant_noise,
        );
        let y: Vec<f64> = net.c.matvec(&x).iter().zip(&v).map(|(a, b)| a + b).collect();
        let state = filter_correct(synth, net, prior, &y);
        let u = control_input(synth, &state.x_hat);

        let dx: Vec<f64> = x
            .iter()
            .zip(&net.x_bar)
            .map(|(xi, rb)| xi - cfg.profile.factor(k) * rb)
            .collect();
        let c = net.q.quad_form(&dx) + net.r.quad_form(&u);
        total += c;
        stage_cost.push(c);
        running_cost.push(total / (k + 1) as f64);
        let ep: Vec<f64> = x.iter().zip(&state.x_prior).map(|(a, b)| a - b).collect();
        let ee: Vec<f64> = x.iter().zip(&state.x_hat).map(|(a, b)| a - b).collect();
        pred.push(norm_sq(&ep));
        est.push(norm_sq(&ee));

        draw_blocks(
            src,
            &net.blocks,
            &factors.w,
            StreamRole::ProcessNoise,
            |b| b.state.clone(),
            &mut w,
            cfg.plant_noise,
        );
        if full {
            xs.push(&x);
            xhs.push(&state.x_hat);
            xps.push(&state.x_prior);
            ys.push(&y);
            us.push(&u);
            vs.push(&v);
            ws.push(&w);
        }
        let bu = net.b.matvec(&u);
        let ax = net.a.matvec(&x);
        x = ax.iter().zip(&bu).zip(&w).map(|((a, b), c)| a + b + c).collect();
        let axh = net.a.matvec(&state.x_hat);
        prior = axh.iter().zip(&bu).map(|(a, b)| a + b).collect();
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Convergence {
                what: "simulation state",
                iterations: k + 1,
                residual: f64::INFINITY,
            });
        }
    }
    let steps = cfg.steps as f64;
    Ok(SimTrace {
        steps: cfg.steps,
        record: cfg.record,
        x: xs,
        x_hat: xhs,
        x_prior: xps,
        y_tilde: ys,
        u: us,
        v: vs,
        w: ws,
        mean_cost: total / steps,
        mean_prediction_mse: pred.iter().sum::<f64>() / steps,
        mean_estimation_mse: est.iter().sum::<f64>() / steps,
        stage_cost,
        running_cost,
        prediction_sq_error: pred,
        estimation_sq_error: est,
        gain_fingerprint: gain_fingerprint(synth),
    })
}

/// A complete simulation setup.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub agents: Vec<AgentModel>,
    pub q: Matrix,
    pub r: Matrix,
    pub steps: usize,
    pub seed: u64,
    pub runs: usize,
    pub reference_profile: ReferenceProfile,
    /// Standard deviation of x(0) around x̂(0) for agents without a fixed initial state.
    pub initial_spread: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::validation("sim.steps", "must be at least 1"));
        }
        if self.runs == 0 {
            return Err(Error::validation("sim.runs", "must be at least 1"));
        }
        if !(self.initial_spread >= 0.0 && self.initial_spread.is_finite()) {
            return Err(Error::validation("sim.initial_spread", "must be finite and ≥ 0"));
        }
        if self.agents.is_empty() {
            return Err(Error::validation("agents", "at least one agent is required"));
        }
        for (i, a) in self.agents.iter().enumerate() {
            a.validate(&format!("agents[{i}]"))?;
        }
        Ok(())
    }

    /// Network for `run` (x̃ drawn from that run's seed).
    pub fn network(&self, run: usize) -> Result<NetworkModel> {
        let net = assemble_network(&self.agents, &self.q, &self.r, run_seed(self.seed, run as u64))?;
        net.validate()?;
        Ok(net)
    }

    fn initial_condition(&self, mode: NoiseMode) -> InitialCondition {
        InitialCondition {
            mean: self
                .agents
                .iter()
                .flat_map(|a| a.initial_mean.iter().copied())
                .collect(),
            spread: if mode == NoiseMode::NoiseFree {
                0.0
            } else {
                self.initial_spread
            },
            fixed: self.agents.iter().map(|a| a.initial_state.clone()).collect(),
        }
    }
}

/// A scenario with its controller synthesized once for a noise mode.
#[derive(Clone, Debug)]
pub struct PreparedScenario {
    scenario: Scenario,
    mode: NoiseMode,
    base: NetworkModel,
    synth: SynthesisResult,
}

impl PreparedScenario {
    pub fn new(sc: &Scenario, mode: NoiseMode) -> Result<Self> {
        sc.validate()?;
        let net = sc.network(0)?;
        let base = match mode {
            NoiseMode::Private => net,
            NoiseMode::NonPrivate | NoiseMode::NoiseFree => {
                let x_bar = net.x_bar.clone();
                nonprivate_network(&net)?.with_reference(x_bar)?
            }
        };
        let synth = synthesize(&base)?;
        Ok(Self {
            scenario: sc.clone(),
            mode,
            base,
            synth,
        })
    }

    pub fn synthesis(&self) -> &SynthesisResult {
        &self.synth
    }

    /// Network and controller used in `run`.
    pub fn run_model(&self, run: usize) -> Result<(NetworkModel, SynthesisResult)> {
        if self.mode != NoiseMode::Private || run == 0 {
            return Ok((self.base.clone(), self.synth.clone()));
        }
        let x_tilde = self.scenario.network(run)?.x_tilde;
        let net = self.base.with_reference(x_tilde)?;
        let g = solve_reference_offset(&net, &self.synth.k)?;
        Ok((
            net,
            SynthesisResult {
                g,
                ..self.synth.clone()
            },
        ))
    }

    pub fn run(&self, run: usize, record: Record) -> Result<SimTrace> {
        let (net, synth) = self.run_model(run)?;
        let cfg = RunConfig {
            steps: self.scenario.steps,
            initial: self.scenario.initial_condition(self.mode),
            profile: self.scenario.reference_profile,
            record,
            plant_noise: self.mode != NoiseMode::NoiseFree,
        };
        let mut src = SeededNoise::new(run_seed(self.scenario.seed, run as u64));
        simulate(&net, &synth, &cfg, &mut src)
    }

    /// Every run of the scenario, spread over worker threads; output order is run order.
    pub fn run_all(&self, record: Record) -> Result<Vec<SimTrace>> {
        let runs = self.scenario.runs;
        let workers = std::thread::available_parallelism()
            .map_or(1, NonZeroUsize::get)
            .min(runs);
        if workers <= 1 {
            return (0..runs).map(|r| self.run(r, record)).collect();
        }
        let mut slots: Vec<Option<Result<SimTrace>>> = (0..runs).map(|_| None).collect();
        std::thread::scope(|s| {
            for (w, chunk) in slots.chunks_mut(runs.div_ceil(workers)).enumerate() {
                let start = w * runs.div_ceil(workers);
                s.spawn(move || {
                    for (j, slot) in chunk.iter_mut().enumerate() {
                        *slot = Some(self.run(start + j, record));
                    }
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.expect("every run slot is filled"))
            .collect()
    }
}

/// One run of a scenario.
pub fn run_simulation(sc: &Scenario, run: usize, mode: NoiseMode, record: Record) -> Result<SimTrace> {
    PreparedScenario::new(sc, mode)?.run(run, record)
}

/// Running time average of (x−x̄(k))ᵀQ(x−x̄(k)) + uᵀRu from a full trace.
pub fn empirical_cost(trace: &SimTrace, net: &NetworkModel, profile: ReferenceProfile) -> Result<Vec<f64>> {
    if trace.record != Record::Full {
        return Err(Error::Precondition("empirical cost needs a full trace".into()));
    }
    let mut total = 0.0;
    Ok((0..trace.steps)
        .map(|k| {
            let xb = profile.at(k, &net.x_bar);
            let dx: Vec<f64> = trace.x.row(k).iter().zip(&xb).map(|(a, b)| a - b).collect();
            total += net.q.quad_form(&dx) + net.r.quad_form(trace.u.row(k));
            total / (k + 1) as f64
        })
        .collect())
}

/// Per-step squared prediction and estimation errors averaged across runs.
pub fn empirical_mse(traces: &[SimTrace]) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = traces
        .first()
        .ok_or_else(|| Error::Precondition("empirical MSE needs at least one trace".into()))?;
    if traces.iter().any(|t| t.steps != first.steps) {
        return Err(Error::dim("traces have different lengths"));
    }
    let n = traces.len() as f64;
    let avg = |f: fn(&SimTrace) -> &Vec<f64>| {
        (0..first.steps)
            .map(|k| traces.iter().map(|t| f(t)[k]).sum::<f64>() / n)
            .collect::<Vec<f64>>()
    };
    Ok((avg(|t| &t.prediction_sq_error), avg(|t| &t.estimation_sq_error)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::vehicle_agent;

    fn scalar(v: f64, w: f64) -> NetworkModel {
        let s = Matrix::scalar;
        NetworkModel::new(
            s(1.0),
            s(1.0),
            s(1.0),
            s(w),
            s(v),
            s(0.0),
            s(1.0),
            s(1.0),
            vec![1.0],
            vec![1.0],
        )
        .unwrap()
    }

    fn cfg(steps: usize, record: Record, spread: f64) -> RunConfig {
        RunConfig {
            steps,
            initial: InitialCondition {
                mean: vec![0.0],
                spread,
                fixed: Vec::new(),
            },
            profile: ReferenceProfile::Constant,
            record,
            plant_noise: true,
        }
    }

    #[test]
    fn noise_free_estimate_equals_state() {
        let net = scalar(1.0, 1.0);
        let syn = synthesize(&net).unwrap();
        let mut c = cfg(50, Record::Full, 0.0);
        c.plant_noise = false;
        let t = simulate(&net, &syn, &c, &mut SeededNoise::new(3)).unwrap();
        for k in 0..50 {
            assert_eq!(t.x.row(k), t.x_hat.row(k));
        }
        assert!((t.x.row(49)[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn filter_matches_posterior_variance() {
        let net = scalar(1.0, 1.0);
        let syn = synthesize(&net).unwrap();
        let t = simulate(
            &net,
            &syn,
            &cfg(100_000, Record::Summary, 1.0),
            &mut SeededNoise::new(11),
        )
        .unwrap();
        let sb = syn.sigma_bar.trace();
        assert!(
            (t.mean_estimation_mse - sb).abs() < 0.05 * sb,
            "{} vs {sb}",
            t.mean_estimation_mse
        );
        let s = syn.sigma.trace();
        assert!((t.mean_prediction_mse - s).abs() < 0.05 * s);
    }

    #[test]
    fn running_average_recomputes() {
        let net = scalar(1.0, 1.0);
        let syn = synthesize(&net).unwrap();
        let t = simulate(&net, &syn, &cfg(500, Record::Full, 1.0), &mut SeededNoise::new(5)).unwrap();
        let ec = empirical_cost(&t, &net, ReferenceProfile::Constant).unwrap();
        for (a, b) in ec.iter().zip(&t.running_cost) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
        assert_eq!(t.x.len(), 500);
        assert_eq!(t.y_tilde.len(), 500);
    }

    #[test]
    fn constant_error_gives_constant_cost() {
        let net = scalar(1.0, 1.0);
        let mut t = simulate(
            &net,
            &synthesize(&net).unwrap(),
            &cfg(4, Record::Full, 0.0),
            &mut SeededNoise::new(1),
        )
        .unwrap();
        t.x.data = vec![3.0; 4];
        t.u.data = vec![0.0; 4];
        let ec = empirical_cost(&t, &net, ReferenceProfile::Constant).unwrap();
        assert_eq!(ec, vec![4.0; 4]);
        t.x.data = vec![1.0; 4];
        assert_eq!(
            empirical_cost(&t, &net, ReferenceProfile::Constant).unwrap(),
            vec![0.0; 4]
        );
    }

    struct Counting(Vec<(usize, StreamRole, usize)>);

    impl NoiseSource for Counting {
        fn standard_normals(&mut self, agent: usize, role: StreamRole, out: &mut [f64]) {
            self.0.push((agent, role, out.len()));
            out.fill(0.0);
        }
    }

    fn two_vehicles() -> Scenario {
        Scenario {
            agents: vec![vehicle_agent(0.1), vehicle_agent(0.1)],
            q: Matrix::identity(4).scale(5.0),
            r: Matrix::identity(2).scale(0.1),
            steps: 30,
            seed: 9,
            runs: 3,
            reference_profile: ReferenceProfile::TanhRamp,
            initial_spread: 1.0,
        }
    }

    #[test]
    fn draw_order_is_documented_order() {
        let sc = two_vehicles();
        let net = sc.network(0).unwrap();
        let syn = synthesize(&net).unwrap();
        let mut src = Counting(Vec::new());
        let c = RunConfig {
            steps: 2,
            initial: InitialCondition::exact(vec![0.0; 4]),
            profile: ReferenceProfile::Constant,
            record: Record::Summary,
            plant_noise: false,
        };
        simulate(&net, &syn, &c, &mut src).unwrap();
        use StreamRole::*;
        let step = [
            (0, OutputNoise, 2),
            (1, OutputNoise, 2),
            (0, ProcessNoise, 2),
            (1, ProcessNoise, 2),
        ];
        let mut expect = vec![(0, InitialState, 2), (1, InitialState, 2)];
        expect.extend(step);
        expect.extend(step);
        assert_eq!(src.0, expect);
    }

    #[test]
    fn deterministic_and_gain_fingerprints_shared() {
        let sc = two_vehicles();
        let p = PreparedScenario::new(&sc, NoiseMode::Private).unwrap();
        let a = p.run(1, Record::Full).unwrap();
        let b = p.run(1, Record::Full).unwrap();
        assert_eq!(a, b);
        let np = PreparedScenario::new(&sc, NoiseMode::NonPrivate)
            .unwrap()
            .run(1, Record::Full)
            .unwrap();
        assert_eq!(a.gain_fingerprint, np.gain_fingerprint);
        let mut loud = sc.clone();
        for ag in &mut loud.agents {
            ag.output_privacy.epsilon = 0.2;
        }
        let l = PreparedScenario::new(&loud, NoiseMode::Private)
            .unwrap()
            .run(0, Record::Summary)
            .unwrap();
        assert_eq!(a.gain_fingerprint, l.gain_fingerprint);
        assert_eq!(a.w, np.w);
        let all = p.run_all(Record::Summary).unwrap();
        assert_eq!(all.len(), 3);
        assert_eq!(all[1].stage_cost, a.stage_cost);
    }

    #[test]
    fn noise_free_scenario_regulates_to_limit() {
        let mut sc = two_vehicles();
        sc.steps = 200;
        let t = run_simulation(&sc, 0, NoiseMode::NoiseFree, Record::Full).unwrap();
        let (a, b) = (t.x.row(198), t.x.row(199));
        for (p, q) in a.iter().zip(b) {
            assert!((p - q).abs() < 1e-9);
        }
        // [1, 1] is not an equilibrium of a double integrator: velocity settles at 0.
        assert!((b[0] - 1.0).abs() < 0.5 && b[1].abs() < 1e-6, "{b:?}");
        assert!(t.prediction_sq_error.iter().all(|e| *e == 0.0));
    }

    #[test]
    fn mse_average_and_errors() {
        let sc = two_vehicles();
        let p = PreparedScenario::new(&sc, NoiseMode::Private).unwrap();
        let traces = p.run_all(Record::Summary).unwrap();
        let (pr, es) = empirical_mse(&traces).unwrap();
        assert_eq!(pr.len(), 30);
        let k = 5;
        let mean = traces.iter().map(|t| t.prediction_sq_error[k]).sum::<f64>() / 3.0;
        assert!((pr[k] - mean).abs() < 1e-12);
        assert!(es.iter().zip(&pr).skip(1).all(|(e, p)| e.is_finite() && p.is_finite()));
        assert!(empirical_mse(&[]).is_err());
        let mut bad = sc.clone();
        bad.steps = 0;
        assert!(run_simulation(&bad, 0, NoiseMode::Private, Record::Summary).is_err());
    }

    #[test]
    fn tanh_profile() {
        assert_eq!(ReferenceProfile::TanhRamp.at(0, &[1.0, 2.0]), vec![0.0, 0.0]);
        assert!((ReferenceProfile::TanhRamp.factor(20) - 1.0).abs() < 1e-15);
        assert_eq!(ReferenceProfile::parse("tanh"), Some(ReferenceProfile::TanhRamp));
        assert_eq!(ReferenceProfile::parse("x"), None);
    }
}
