//! Controller and filter synthesis for the private tracking problem.

use crate::error::{Error, Result};
use crate::linalg::{
    cholesky, cholesky_solve, condition_number, controllability_rank, measurement_information, posterior_from_prior,
    solve_control_dare, solve_filter_dare, solve_linear, spectral_radius, Matrix,
};
use crate::model::NetworkModel;

/// Everything the cloud precomputes before the loop starts.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisResult {
    /// Control Riccati solution.
    pub k: Matrix,
    /// Feedback gain, u = Lx̂ + Mg.
    pub l: Matrix,
    pub m: Matrix,
    /// Reference offset computed from x̃.
    pub g: Vec<f64>,
    /// Steady a priori error covariance.
    pub sigma: Matrix,
    /// Steady a posteriori error covariance.
    pub sigma_bar: Matrix,
    /// Σ̄CᵀV⁻¹.
    pub kalman_gain: Matrix,
    /// Spectral radius of A + BL.
    pub closed_loop_radius: f64,
}

/// (R + BᵀKB)⁻¹ applied to `rhs`.
pub(crate) fn solve_input_weight(net: &NetworkModel, k: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    let s = (&net.r + &net.b.t_mul(&(k * &net.b))).symmetrize();
    let l = cholesky(&s)?;
    Ok(cholesky_solve(&l, rhs))
}

/// Solves the control Riccati equation and forms L and M.
///
/// Checks positive definiteness of Q and R and controllability of (A, B).
pub fn synthesize_gains(net: &NetworkModel) -> Result<(Matrix, Matrix, Matrix)> {
    net.validate()?;
    let n = net.state_dim();
    let rank = controllability_rank(&net.a, &net.b)?;
    if rank < n {
        return Err(Error::Uncontrollable { rank, n });
    }
    let k = solve_control_dare(&net.a, &net.b, &net.q, &net.r)?;
    let bt = net.b.transpose();
    let ka = &k * &net.a;
    let l = solve_input_weight(net, &k, &net.b.t_mul(&ka))?.scale(-1.0);
    let m = solve_input_weight(net, &k, &bt)?.scale(-1.0);
    let rho = spectral_radius(&(&net.a + &(&net.b * &l)))?;
    if rho >= 1.0 {
        return Err(Error::Precondition(format!(
            "closed loop A + BL is not stable (spectral radius {rho:.6})"
        )));
    }
    Ok((k, l, m))
}

/// Offset g solving g = Aᵀ[I − KB(R+BᵀKB)⁻¹Bᵀ]g − Q·x for a reference vector x.
pub fn reference_offset(net: &NetworkModel, k: &Matrix, x: &[f64]) -> Result<Vec<f64>> {
    let n = net.state_dim();
    if x.len() != n {
        return Err(Error::dim(format!(
            "reference vector must have length {n}, got {}",
            x.len()
        )));
    }
    let bt = net.b.transpose();
    let kb = k * &net.b;
    let inner = &Matrix::identity(n) - &(&kb * &solve_input_weight(net, k, &bt)?);
    let iter = net.a.t_mul(&inner);
    let lhs = &Matrix::identity(n) - &iter;
    let rhs = Matrix::column(&net.q.matvec(x)).scale(-1.0);
    match solve_linear(&lhs, &rhs) {
        Ok(g) => Ok(g.into_vec()),
        Err(Error::Singular { condition }) => {
            let rho = spectral_radius(&iter).unwrap_or(f64::NAN);
            Err(Error::Precondition(format!(
                "reference offset system is singular (condition {condition:.3e}; spectral radius of \
                 Aᵀ[I − KB(R+BᵀKB)⁻¹Bᵀ] is {rho:.6})"
            )))
        }
        Err(e) => Err(e),
    }
}

/// Offset g for the privatized reference x̃.
pub fn solve_reference_offset(net: &NetworkModel, k: &Matrix) -> Result<Vec<f64>> {
    reference_offset(net, k, &net.x_tilde)
}

/// Σ and Σ̄ for aggregate matrices, without exploiting any block structure.
pub fn filter_covariances_dense(a: &Matrix, c: &Matrix, v: &Matrix, w: &Matrix) -> Result<(Matrix, Matrix)> {
    let sigma = solve_filter_dare(a, c, v, w)?;
    let info = measurement_information(c, v)?;
    let sigma_bar = posterior_from_prior(&sigma, &info)?;
    Ok((sigma, sigma_bar))
}

/// Σ and Σ̄ for the network, solved agent by agent (both are block diagonal
/// because A, C, V and W are).
pub fn filter_covariances(net: &NetworkModel) -> Result<(Matrix, Matrix)> {
    let n = net.state_dim();
    let mut sigma = Matrix::zeros(n, n);
    let mut sigma_bar = Matrix::zeros(n, n);
    for blk in &net.blocks {
        let (s0, sn) = (blk.state.start, blk.state.len());
        let (o0, on) = (blk.output.start, blk.output.len());
        let (s, sb) = filter_covariances_dense(
            &net.a.block(s0, s0, sn, sn),
            &net.c.block(o0, s0, on, sn),
            &net.v.block(o0, o0, on, on),
            &net.w.block(s0, s0, sn, sn),
        )?;
        sigma.set_block(s0, s0, &s);
        sigma_bar.set_block(s0, s0, &sb);
    }
    Ok((sigma, sigma_bar))
}

/// Steady Kalman gain Σ̄CᵀV⁻¹.
pub fn kalman_gain(sigma_bar: &Matrix, c: &Matrix, v: &Matrix) -> Result<Matrix> {
    let lv = cholesky(v).map_err(|_| Error::Precondition("V must be positive definite".into()))?;
    let vinv_c = cholesky_solve(&lv, c);
    Ok(sigma_bar * &vinv_c.transpose())
}

/// All precomputed artifacts of the private controller.
pub fn synthesize(net: &NetworkModel) -> Result<SynthesisResult> {
    let (k, l, m) = synthesize_gains(net)?;
    let g = solve_reference_offset(net, &k)?;
    let (sigma, sigma_bar) = filter_covariances(net)?;
    let kalman_gain = kalman_gain(&sigma_bar, &net.c, &net.v)?;
    let closed_loop_radius = spectral_radius(&(&net.a + &(&net.b * &l)))?;
    Ok(SynthesisResult {
        k,
        l,
        m,
        g,
        sigma,
        sigma_bar,
        kalman_gain,
        closed_loop_radius,
    })
}

impl SynthesisResult {
    /// Same controller with covariances recomputed for the noise levels in `net`.
    pub fn with_filter_for(&self, net: &NetworkModel) -> Result<Self> {
        let (sigma, sigma_bar) = filter_covariances(net)?;
        let kalman_gain = kalman_gain(&sigma_bar, &net.c, &net.v)?;
        Ok(Self {
            sigma,
            sigma_bar,
            kalman_gain,
            ..self.clone()
        })
    }
}

/// Condition number of I − (A+BL)ᵀ, useful when diagnosing tracking-gain failures.
pub fn tracking_condition(net: &NetworkModel, l: &Matrix) -> Result<f64> {
    let acl = &net.a + &(&net.b * l);
    condition_number(&(&Matrix::identity(net.state_dim()) - &acl.transpose()))
}

/// Cloud-side filter means.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterState {
    /// A posteriori mean x̂(k).
    pub x_hat: Vec<f64>,
    /// A priori mean x̂⁻(k).
    pub x_prior: Vec<f64>,
}

impl FilterState {
    /// State before any measurement: both means equal the public initial estimate.
    pub fn initial(x_hat0: &[f64]) -> Self {
        Self {
            x_hat: x_hat0.to_vec(),
            x_prior: x_hat0.to_vec(),
        }
    }
}

/// Measurement correction x̂ = x̂⁻ + G(ỹ − Cx̂⁻).
pub fn filter_correct(synth: &SynthesisResult, net: &NetworkModel, x_prior: Vec<f64>, y_tilde: &[f64]) -> FilterState {
    let cx = net.c.matvec(&x_prior);
    let innov: Vec<f64> = y_tilde.iter().zip(&cx).map(|(y, c)| y - c).collect();
    let corr = synth.kalman_gain.matvec(&innov);
    let x_hat = x_prior.iter().zip(&corr).map(|(p, c)| p + c).collect();
    FilterState { x_hat, x_prior }
}

/// One filter step: predict with u, then correct with ỹ(k+1).
pub fn filter_step(
    state: &FilterState,
    synth: &SynthesisResult,
    net: &NetworkModel,
    u: &[f64],
    y_next: &[f64],
) -> Result<FilterState> {
    let n = net.state_dim();
    if state.x_hat.len() != n || u.len() != net.input_dim() || y_next.len() != net.output_dim() {
        return Err(Error::dim("filter_step: state, input or output length mismatch"));
    }
    let ax = net.a.matvec(&state.x_hat);
    let bu = net.b.matvec(u);
    let prior: Vec<f64> = ax.iter().zip(&bu).map(|(a, b)| a + b).collect();
    Ok(filter_correct(synth, net, prior, y_next))
}

/// u* = Lx̂ + Mg.
pub fn control_input(synth: &SynthesisResult, x_hat: &[f64]) -> Vec<f64> {
    let lx = synth.l.matvec(x_hat);
    let mg = synth.m.matvec(&synth.g);
    lx.iter().zip(&mg).map(|(a, b)| a + b).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eig;

    const PHI: f64 = 1.618_033_988_749_895;

    fn scalar_net(a: f64, b: f64, x_tilde: f64) -> NetworkModel {
        let s = Matrix::scalar;
        NetworkModel::new(
            s(a),
            s(b),
            s(1.0),
            s(1.0),
            s(1.0),
            s(0.0),
            s(1.0),
            s(1.0),
            vec![x_tilde],
            vec![x_tilde],
        )
        .unwrap()
    }

    #[test]
    fn golden_ratio_gains() {
        let (k, l, m) = synthesize_gains(&scalar_net(1.0, 1.0, 1.0)).unwrap();
        assert!((k.get(0, 0) - PHI).abs() < 1e-9);
        assert!((l.get(0, 0) + PHI / (1.0 + PHI)).abs() < 1e-9);
        assert!((m.get(0, 0) + 1.0 / (1.0 + PHI)).abs() < 1e-9);
    }

    #[test]
    fn zero_dynamics_gains() {
        let (k, l, m) = synthesize_gains(&scalar_net(0.0, 1.0, 1.0)).unwrap();
        assert!((k.get(0, 0) - 1.0).abs() < 1e-12);
        assert_eq!(l.get(0, 0), 0.0);
        assert!((m.get(0, 0) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_input_matrix_is_uncontrollable() {
        assert!(matches!(
            synthesize_gains(&scalar_net(1.0, 0.0, 1.0)),
            Err(Error::Uncontrollable { rank: 0, n: 1 })
        ));
    }

    #[test]
    fn reference_offset_examples() {
        let net = scalar_net(1.0, 1.0, 0.0);
        let (k, _, _) = synthesize_gains(&net).unwrap();
        assert_eq!(solve_reference_offset(&net, &k).unwrap(), vec![0.0]);
        let net = scalar_net(1.0, 1.0, 1.0);
        let g = solve_reference_offset(&net, &k).unwrap()[0];
        assert!((g + (1.0 + PHI) / PHI).abs() < 1e-9);
        let net = scalar_net(0.0, 1.0, 2.5);
        let (k0, _, _) = synthesize_gains(&net).unwrap();
        assert!((solve_reference_offset(&net, &k0).unwrap()[0] + 2.5).abs() < 1e-12);
    }

    #[test]
    fn reference_offset_residual_is_small() {
        let net = scalar_net(1.0, 1.0, 1.0);
        let k = solve_control_dare(&net.a, &net.b, &net.q, &net.r).unwrap();
        let g = solve_reference_offset(&net, &k).unwrap();
        let kb = &k * &net.b;
        let sinv_bt = solve_input_weight(&net, &k, &net.b.transpose()).unwrap();
        let iter = net.a.t_mul(&(&Matrix::identity(1) - &(&kb * &sinv_bt)));
        let res = iter.matvec(&g)[0] - net.q.get(0, 0) * 1.0 - g[0];
        assert!(res.abs() <= 1e-9 * g[0].abs());
    }

    #[test]
    fn covariance_examples() {
        let (s, sb) = filter_covariances(&scalar_net(1.0, 1.0, 1.0)).unwrap();
        assert!((s.get(0, 0) - PHI).abs() < 1e-9);
        assert!((sb.get(0, 0) - (PHI - 1.0)).abs() < 1e-9);
        let (s, sb) = filter_covariances_dense(
            &Matrix::zeros(2, 2),
            &Matrix::identity(2),
            &Matrix::identity(2),
            &Matrix::identity(2),
        )
        .unwrap();
        assert_eq!(s, Matrix::identity(2));
        assert!((&sb - &Matrix::identity(2).scale(0.5)).max_abs() < 1e-15);
    }

    #[test]
    fn table_row_at_unit_epsilon() {
        use crate::mechanism::{noise_scale, PrivacyParams};
        let sigma = noise_scale(PrivacyParams::new(1.0, 0.05).unwrap(), 1.0).unwrap().sigma;
        let a = Matrix::from_rows(&[[1.0, 0.1], [0.0, 1.0]]).unwrap();
        let v = Matrix::identity(2).scale(sigma * sigma);
        let (_, sb) = filter_covariances_dense(&a, &Matrix::identity(2), &v, &Matrix::identity(2)).unwrap();
        assert!((sb.trace() - 2.95).abs() < 0.01 * 2.95);
    }

    #[test]
    fn filter_step_examples() {
        let net = scalar_net(1.0, 1.0, 1.0);
        let synth = synthesize(&net).unwrap();
        let st = filter_step(&FilterState::initial(&[0.0]), &synth, &net, &[0.0], &[1.0]).unwrap();
        assert!((st.x_hat[0] - (PHI - 1.0)).abs() < 1e-9);

        let mut blind = synth.clone();
        blind.kalman_gain = Matrix::scalar(0.0);
        let st = filter_step(&FilterState::initial(&[2.0]), &blind, &net, &[0.5], &[9.0]).unwrap();
        assert_eq!(st.x_hat, vec![2.5]);

        let mut full = synth;
        full.kalman_gain = Matrix::scalar(1.0);
        let st = filter_step(&FilterState::initial(&[2.0]), &full, &net, &[0.5], &[9.0]).unwrap();
        assert_eq!(st.x_hat, vec![9.0]);
    }

    #[test]
    fn control_input_examples() {
        let net = scalar_net(1.0, 1.0, 1.0);
        let synth = synthesize(&net).unwrap();
        assert!(control_input(&synth, &[1.0])[0].abs() < 1e-9);
        let mut z = synth.clone();
        z.g = vec![0.0];
        assert_eq!(control_input(&z, &[0.0]), vec![0.0]);
        let mut open = synth;
        open.l = Matrix::scalar(0.0);
        let expect = open.m.get(0, 0) * open.g[0];
        assert_eq!(control_input(&open, &[123.0]), vec![expect]);
    }

    #[test]
    fn covariance_ordering_on_vehicle_pair() {
        use crate::model::{assemble_network, tests::vehicle_agent};
        let ag = vehicle_agent(0.1);
        let net = assemble_network(
            &[ag.clone(), ag],
            &Matrix::identity(4).scale(500.0),
            &Matrix::identity(2).scale(0.1),
            4,
        )
        .unwrap();
        let synth = synthesize(&net).unwrap();
        assert!(sym_eig(&(&synth.sigma - &synth.sigma_bar)).unwrap().min() >= -1e-9);
        assert!(sym_eig(&(&synth.sigma - &net.w)).unwrap().min() >= -1e-9);
        assert!(synth.closed_loop_radius < 1.0);
        let (dense, _) = filter_covariances_dense(&net.a, &net.c, &net.v, &net.w).unwrap();
        assert!((&dense - &synth.sigma).max_abs() < 1e-8 * synth.sigma.max_abs());
        assert!(dense.block(0, 2, 2, 2).frobenius_norm() <= 1e-9);
    }
}
