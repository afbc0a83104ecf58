use dplqg::bounds::{network_bound_report, BoundOptions};
use dplqg::cost::total_private_cost_with;
use dplqg::io::LoadedScenario;
use dplqg::linalg::{solve_linear, Matrix};
use dplqg::model::NetworkModel;
use dplqg::sim::{empirical_cost, empirical_mse, NoiseMode, PreparedScenario, Record};
use dplqg::synthesis::{solve_reference_offset, SynthesisResult};

fn vehicles(count: usize, steps: usize, runs: usize, reference_epsilon: f64) -> String {
    format!(
        r#"
[sim]
steps = {steps}
seed = 5
runs = {runs}

[cost.q]
diagonal = 50.0

[cost.r]
diagonal = 0.1

[[agents]]
count = {count}
a = [[1.0, 0.1], [0.0, 1.0]]
b = [[0.005], [0.1]]
c = [[1.0, 0.0], [0.0, 1.0]]
w = [[1.0, 0.0], [0.0, 1.0]]
epsilon = 1.0986122886681098
delta = 0.001
reference_epsilon = {reference_epsilon:?}
reference_delta = 0.2
reference_limit = [1.0, 1.0]
"#
    )
}

/// Steady tracking cost for a fixed privatized reference, from the closed-loop fixed point.
fn tracking_cost(net: &NetworkModel, syn: &SynthesisResult) -> f64 {
    let n = net.state_dim();
    let g = solve_reference_offset(net, &syn.k).unwrap();
    let mg = &syn.m * &Matrix::column(&g);
    let acl = &net.a + &(&net.b * &syn.l);
    let x = solve_linear(&(&Matrix::identity(n) - &acl), &(&net.b * &mg)).unwrap();
    let u = &(&syn.l * &x) + &mg;
    let dx: Vec<f64> = (0..n).map(|i| x.get(i, 0) - net.x_bar[i]).collect();
    let us: Vec<f64> = (0..u.rows()).map(|i| u.get(i, 0)).collect();
    net.q.quad_form(&dx) + net.r.quad_form(&us)
}

#[test]
fn long_run_cost_matches_steady_state_oracle() {
    let l = LoadedScenario::from_text(&vehicles(2, 100_000, 4, 3f64.ln()), None).unwrap();
    let p = PreparedScenario::new(&l.scenario, NoiseMode::Private).unwrap();
    for (r, tr) in p.run_all(Record::Summary).unwrap().iter().enumerate() {
        let (net, syn) = p.run_model(r).unwrap();
        let noise = total_private_cost_with(&net, &syn, &net.x_bar)
            .unwrap()
            .private
            .estimation;
        let oracle = noise + tracking_cost(&net, &syn);
        assert!(
            (tr.mean_cost - oracle).abs() <= 0.03 * oracle,
            "run {r}: simulated {} vs {oracle}",
            tr.mean_cost
        );
    }
}

#[test]
fn closed_form_is_exact_without_reference_noise() {
    let l = LoadedScenario::from_text(&vehicles(2, 100_000, 4, 1e9), None).unwrap();
    let p = PreparedScenario::new(&l.scenario, NoiseMode::Private).unwrap();
    let traces = p.run_all(Record::Summary).unwrap();
    let (net, syn) = p.run_model(0).unwrap();
    let j = total_private_cost_with(&net, &syn, &net.x_bar).unwrap().j_total;
    let mean = traces.iter().map(|t| t.mean_cost).sum::<f64>() / traces.len() as f64;
    assert!((mean - j).abs() <= 0.03 * j, "simulated {mean} vs {j}");
}

#[test]
fn averaging_runs_reduces_spread() {
    let l = LoadedScenario::from_text(&vehicles(1, 60, 100, 3f64.ln()), None).unwrap();
    let traces = PreparedScenario::new(&l.scenario, NoiseMode::Private)
        .unwrap()
        .run_all(Record::Summary)
        .unwrap();
    let var = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
    };
    let single = &traces[0].prediction_sq_error[10..];
    let (pred, _) = empirical_mse(&traces).unwrap();
    assert!(var(&pred[10..]) < 0.2 * var(single));
}

#[test]
fn per_agent_prediction_mse_within_bounds() {
    let l = LoadedScenario::from_text(&vehicles(1, 2000, 20, 3f64.ln()), None).unwrap();
    let p = PreparedScenario::new(&l.scenario, NoiseMode::Private).unwrap();
    let traces = p.run_all(Record::Summary).unwrap();
    let (pred, _) = empirical_mse(&traces).unwrap();
    let avg = pred.iter().sum::<f64>() / pred.len() as f64;
    let rep = network_bound_report(&p.run_model(0).unwrap().0, BoundOptions::default()).unwrap();
    assert!(rep.trace_sigma.contains(avg, 0.0), "{avg} not in {:?}", rep.trace_sigma);
}

#[test]
fn private_cost_exceeds_nonprivate() {
    let l = LoadedScenario::from_text(&vehicles(3, 400, 1, 3f64.ln()), None).unwrap();
    let sc = &l.scenario;
    let private = PreparedScenario::new(sc, NoiseMode::Private).unwrap();
    let (net, _) = private.run_model(0).unwrap();
    let tp = private.run(0, Record::Full).unwrap();
    let tn = PreparedScenario::new(sc, NoiseMode::NonPrivate)
        .unwrap()
        .run(0, Record::Full)
        .unwrap();
    assert_eq!(tp.gain_fingerprint, tn.gain_fingerprint);
    let cp = empirical_cost(&tp, &net, sc.reference_profile).unwrap();
    let cn = empirical_cost(&tn, &net, sc.reference_profile).unwrap();
    assert!((cp[399] - tp.running_cost[399]).abs() <= 1e-9 * cp[399]);
    assert!(cp[399] > cn[399]);
}
