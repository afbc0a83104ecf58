//! Infinite-horizon average cost of the private controller and its sensitivity to ε.

use crate::error::{Error, Result};
use crate::linalg::{solve_linear, spectral_radius, sym_eig, Matrix};
use crate::mechanism::{noise_scale, noise_scale_derivative, PrivacyParams};
use crate::model::NetworkModel;
use crate::synthesis::{solve_input_weight, SynthesisResult};

/// Output noise variance standing in for "no output privacy" in the baseline cost.
pub const NONPRIVATE_TAU: f64 = 1e-12;

/// H = M[I − (A+BL)ᵀ]⁻¹.
pub fn tracking_gain_h(a: &Matrix, b: &Matrix, l: &Matrix, m: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    let acl = a + &(b * l);
    // H·X = M with X = I − (A+BL)ᵀ, so Xᵀ·Hᵀ = Mᵀ.
    let xt = &Matrix::identity(n) - &acl;
    Ok(solve_linear(&xt, &m.transpose())?.transpose())
}

/// tr(QW̄) + tr(HᵀRHW̄).
pub fn reference_privacy_cost(q: &Matrix, r: &Matrix, h: &Matrix, w_bar: &Matrix) -> Result<f64> {
    let n = q.rows();
    if w_bar.shape() != (n, n) || h.cols() != n || r.rows() != h.rows() {
        return Err(Error::dim("reference_privacy_cost: incompatible shapes"));
    }
    let hrh = h.t_mul(&(r * h));
    Ok((q * w_bar).trace() + (&hrh * w_bar).trace())
}

/// The additive terms of the average cost.
#[derive(Clone, Debug, PartialEq)]
pub struct CostComponents {
    /// tr(KΣ + (Q−K)Σ̄).
    pub estimation: f64,
    /// xᵀQx for the reference vector in the quadratic slot.
    pub reference_quadratic: f64,
    /// gᵀB(R+BᵀKB)⁻¹Bᵀg, entering with a minus sign.
    pub offset: f64,
    /// tr(QW̄) + tr(HᵀRHW̄).
    pub reference_penalty: f64,
}

impl CostComponents {
    pub fn total(&self) -> f64 {
        self.estimation + self.reference_quadratic - self.offset + self.reference_penalty
    }
}

/// Private cost J̃, baseline J₀ and their difference.
#[derive(Clone, Debug, PartialEq)]
pub struct CostReport {
    pub j_total: f64,
    pub j_nonprivate: f64,
    /// ΔJ from the closed-form overhead expression.
    pub overhead: f64,
    pub reference_penalty: f64,
    pub private: CostComponents,
    pub nonprivate: CostComponents,
}

fn components(net: &NetworkModel, synth: &SynthesisResult, reference: &[f64], h: &Matrix) -> Result<CostComponents> {
    let n = net.state_dim();
    if reference.len() != n {
        return Err(Error::dim(format!(
            "reference vector must have length {n}, got {}",
            reference.len()
        )));
    }
    let qk = &net.q - &synth.k;
    let estimation = (&synth.k * &synth.sigma).trace() + (&qk * &synth.sigma_bar).trace();
    let btg = net.b.t_mul(&Matrix::column(&synth.g));
    let offset = btg.t_mul(&solve_input_weight(net, &synth.k, &btg)?).get(0, 0);
    Ok(CostComponents {
        estimation,
        reference_quadratic: net.q.quad_form(reference),
        offset,
        reference_penalty: reference_privacy_cost(&net.q, &net.r, h, &net.w_bar)?,
    })
}

/// The network with output noise V = τI and no reference noise.
pub fn nonprivate_network(net: &NetworkModel) -> Result<NetworkModel> {
    net.with_noise(
        Matrix::identity(net.output_dim()).scale(NONPRIVATE_TAU),
        Matrix::zeros(net.state_dim(), net.state_dim()),
    )
}

/// Cost report with x̃ in the quadratic slot (the vector the cloud actually holds).
pub fn total_private_cost(net: &NetworkModel, synth: &SynthesisResult) -> Result<CostReport> {
    total_private_cost_with(net, synth, &net.x_tilde)
}

/// Cost report with a caller-chosen vector in the quadratic reference slot.
/// The offset g is always the one the controller uses.
pub fn total_private_cost_with(net: &NetworkModel, synth: &SynthesisResult, reference: &[f64]) -> Result<CostReport> {
    let h = tracking_gain_h(&net.a, &net.b, &synth.l, &synth.m)?;
    let private = components(net, synth, reference, &h)?;
    let net0 = nonprivate_network(net)?;
    let synth0 = synth.with_filter_for(&net0)?;
    let nonprivate = components(&net0, &synth0, reference, &h)?;
    let overhead = overhead_from(net, synth, &h)?;
    Ok(CostReport {
        j_total: private.total(),
        j_nonprivate: nonprivate.total(),
        overhead,
        reference_penalty: private.reference_penalty,
        private,
        nonprivate,
    })
}

fn overhead_from(net: &NetworkModel, synth: &SynthesisResult, h: &Matrix) -> Result<f64> {
    let qk = &net.q - &synth.k;
    Ok(
        (&synth.k * &synth.sigma).trace() + (&qk * &synth.sigma_bar).trace() - (&synth.k * &net.w).trace()
            + reference_privacy_cost(&net.q, &net.r, h, &net.w_bar)?,
    )
}

/// ΔJ = tr(KΣ + (Q−K)Σ̄) − tr(KW) + tr(QW̄) + tr(HᵀRHW̄).
pub fn privacy_overhead(net: &NetworkModel, synth: &SynthesisResult) -> Result<f64> {
    let h = tracking_gain_h(&net.a, &net.b, &synth.l, &synth.m)?;
    overhead_from(net, synth, &h)
}

/// ΔJ when both output and reference noise use σ = noise_scale(ε, δ, Δ).
pub fn overhead_at(eps: f64, delta: f64, sensitivity: f64, net: &NetworkModel, synth: &SynthesisResult) -> Result<f64> {
    let sigma = noise_scale(PrivacyParams::new(eps, delta)?, sensitivity)?.sigma;
    let net_e = net.with_uniform_noise(sigma, sigma)?;
    privacy_overhead(&net_e, &synth.with_filter_for(&net_e)?)
}

/// Bounds on dΔJ/dε and the auxiliary matrices they are built from.
#[derive(Clone, Debug, PartialEq)]
pub struct RateBounds {
    pub lower: f64,
    pub upper: f64,
    pub sigma: f64,
    pub dsigma_depsilon: f64,
    pub p: Matrix,
    pub u: Matrix,
    pub p_bar: Matrix,
    pub f_bar: Matrix,
    pub u_bar: Matrix,
    pub f: Matrix,
}

/// Bounds on dΔJ/dε at ε with σ = σ̄ tied, V = σ²I and W̄ = σ²I.
pub fn cost_rate_bounds(
    eps: f64,
    delta: f64,
    sensitivity: f64,
    net: &NetworkModel,
    synth: &SynthesisResult,
) -> Result<RateBounds> {
    let rho = spectral_radius(&net.a)?;
    if rho >= 1.0 {
        return Err(Error::Precondition(format!(
            "A must be Schur stable, spectral radius is {rho:.6}"
        )));
    }
    if !net.c.is_diagonal() {
        return Err(Error::Precondition("rate bounds need a diagonal C".into()));
    }
    let p = PrivacyParams::new(eps, delta)?;
    let sigma = noise_scale(p, sensitivity)?.sigma;
    let dsde = noise_scale_derivative(p, sensitivity)?;
    let net_e = net.with_uniform_noise(sigma, sigma)?;
    let syn = synth.with_filter_for(&net_e)?;
    let (a, c, s) = (&net.a, &net.c, &syn.sigma);
    let n = net.state_dim();
    let eye = Matrix::identity(n);

    let inner = &(&(c * s) * &c.transpose()) + &net_e.v;
    let cs = c * s;
    let f_bar = solve_linear(&inner, &cs)?;
    let f = &f_bar * &a.transpose();
    let p_bar = c.t_mul(&f_bar);
    let pm = &p_bar * &a.transpose();
    let u = &(&(&a.transpose() - &pm) * &(a - &pm.transpose())) - &eye;
    let i_pb = &eye - &p_bar;
    let u_bar = &i_pb * &i_pb.transpose();

    let lam = |m: &Matrix| sym_eig(&m.symmetrize());
    let su = lam(&u)?;
    let sub = lam(&u_bar)?;
    let sk = lam(&synth.k)?;
    let sqk = lam(&(&net.q - &synth.k))?;
    let h = tracking_gain_h(a, &net.b, &synth.l, &synth.m)?;
    let hrh = h.t_mul(&(&net.r * &h));

    let c_ff = -2.0 * sigma * f.t_mul(&f).trace();
    let ff_bar = 2.0 * sigma * f_bar.t_mul(&f_bar).trace();
    let over_min = c_ff / su.min();
    let over_max_pos = (c_ff / su.max()).max(0.0);
    let common = 2.0 * sigma * net.q.trace() + 2.0 * sigma * hrh.trace();

    let d_lo = sk.min() * over_max_pos + sqk.min() * (over_min * sub.max() + ff_bar) + common;
    let d_hi = sk.max() * over_min + sqk.max() * (over_max_pos * sub.min() + ff_bar) + common;

    Ok(RateBounds {
        lower: dsde * d_hi,
        upper: dsde * d_lo,
        sigma,
        dsigma_depsilon: dsde,
        p: pm,
        u,
        p_bar,
        f_bar,
        u_bar,
        f,
    })
}

/// Fourth-order central difference (−f(x+2h) + 8f(x+h) − 8f(x−h) + f(x−2h)) / 12h.
pub fn five_point_derivative<F>(mut f: F, x: f64, h: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Domain(format!("stencil step must be > 0, got {h}")));
    }
    Ok((-f(x + 2.0 * h)? + 8.0 * f(x + h)? - 8.0 * f(x - h)? + f(x - 2.0 * h)?) / (12.0 * h))
}

/// Default stencil step for ε.
pub fn default_step(eps: f64) -> f64 {
    1e-3 * eps
}

/// Numerical dΔJ/dε by the five-point stencil, recomputing σ = σ̄ at each node.
pub fn cost_rate_numeric(
    eps: f64,
    delta: f64,
    sensitivity: f64,
    net: &NetworkModel,
    synth: &SynthesisResult,
    h: f64,
) -> Result<f64> {
    if !(eps - 2.0 * h > 0.0) {
        return Err(Error::Domain(format!("epsilon {eps} too small for stencil step {h}")));
    }
    five_point_derivative(|e| overhead_at(e, delta, sensitivity, net, synth), eps, h)
}
