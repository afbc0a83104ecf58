//! Privacy-parameter guidance: ε ranges that guarantee a target MSE band and
//! the smallest ε that keeps the average cost under a cap.
//!
//! Each range is a sufficient condition. It holds for every δ in
//! [1e-5, 0.1] because the formulas assume the worst K_δ in that interval.

use crate::cost::{total_private_cost_with, tracking_gain_h};
use crate::error::{Error, Result};
use crate::linalg::{sym_eig, Matrix};
use crate::mechanism::{noise_scale, PrivacyParams};
use crate::model::NetworkModel;
use crate::synthesis::{filter_covariances, solve_input_weight, SynthesisResult};

/// δ range over which the guideline formulas are valid.
pub const DELTA_RANGE: (f64, f64) = (1e-5, 0.1);

/// Target interval [B_l, B_u] for an MSE.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MseBand {
    pub lower: f64,
    pub upper: f64,
}

impl MseBand {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::Domain(format!(
                "MSE band needs finite B_l < B_u, got ({lower}, {upper})"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }
}

/// A band target with its δ and per-coordinate sensitivity Δ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CalibrationTarget {
    pub band: MseBand,
    pub delta: f64,
    pub sensitivity: f64,
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta >= DELTA_RANGE.0 && delta <= DELTA_RANGE.1) {
        return Err(Error::Domain(format!(
            "delta must lie in [{}, {}] for the guideline formulas, got {delta}",
            DELTA_RANGE.0, DELTA_RANGE.1
        )));
    }
    Ok(())
}

fn check_sensitivity(s: f64) -> Result<()> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::Domain(format!("sensitivity must be finite and > 0, got {s}")));
    }
    Ok(())
}

impl CalibrationTarget {
    pub fn new(band: MseBand, delta: f64, sensitivity: f64) -> Result<Self> {
        check_delta(delta)?;
        check_sensitivity(sensitivity)?;
        Ok(Self {
            band,
            delta,
            sensitivity,
        })
    }
}

/// Extreme diagonal entries of the output matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelGains {
    pub c_min: f64,
    pub c_max: f64,
}

impl ChannelGains {
    pub fn from_output_matrix(c: &Matrix) -> Result<Self> {
        if !c.is_diagonal() {
            return Err(Error::Precondition("calibration needs a diagonal C".into()));
        }
        let d = c.diag();
        if d.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Precondition("calibration needs positive diagonal C".into()));
        }
        Ok(Self {
            c_min: d.iter().copied().fold(f64::INFINITY, f64::min),
            c_max: d.iter().copied().fold(0.0, f64::max),
        })
    }
}

/// Intermediate η values (absent when not used or undefined).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Etas {
    pub eta1: Option<f64>,
    pub eta2: Option<f64>,
    pub eta3: Option<f64>,
    pub eta4: Option<f64>,
    pub eta5: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RangeStatus {
    Feasible,
    Infeasible(String),
}

/// Range of ε values with a feasibility status.
#[derive(Clone, Debug, PartialEq)]
pub struct EpsilonRange {
    pub lower: f64,
    pub upper: f64,
    pub etas: Etas,
    pub status: RangeStatus,
}

impl EpsilonRange {
    fn infeasible(reason: String, etas: Etas) -> Self {
        Self {
            lower: f64::NAN,
            upper: f64::NAN,
            etas,
            status: RangeStatus::Infeasible(reason),
        }
    }

    fn from_endpoints(lower: f64, upper: f64, etas: Etas) -> Self {
        let status = if lower <= upper {
            RangeStatus::Feasible
        } else {
            RangeStatus::Infeasible(format!("lower endpoint {lower:.6} exceeds upper endpoint {upper:.6}"))
        };
        Self {
            lower,
            upper,
            etas,
            status,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.status == RangeStatus::Feasible
    }

    pub fn contains(&self, eps: f64) -> bool {
        self.is_feasible() && eps >= self.lower && eps <= self.upper
    }

    /// Converts an infeasible status into [`Error::Infeasible`].
    pub fn into_result(self) -> Result<Self> {
        match &self.status {
            RangeStatus::Feasible => Ok(self),
            RangeStatus::Infeasible(why) => Err(Error::Infeasible(why.clone())),
        }
    }

    /// Intersection of two ranges.
    pub fn intersect(&self, other: &EpsilonRange) -> EpsilonRange {
        match (&self.status, &other.status) {
            (RangeStatus::Infeasible(w), _) | (_, RangeStatus::Infeasible(w)) => {
                EpsilonRange::infeasible(w.clone(), self.etas)
            }
            _ => EpsilonRange::from_endpoints(self.lower.max(other.lower), self.upper.min(other.upper), self.etas),
        }
    }

    /// `count` points spread evenly over the range (upper end capped at 10× the lower when unbounded).
    pub fn sample(&self, count: usize) -> Vec<f64> {
        if !self.is_feasible() || count == 0 {
            return Vec::new();
        }
        let lo = self.lower.max(1e-9);
        let hi = if self.upper.is_finite() {
            self.upper
        } else {
            10.0 * lo.max(1.0)
        };
        if count == 1 {
            return vec![0.5 * (lo + hi)];
        }
        (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect()
    }
}

/// (1/8)((1 + √(36η + 1))/η)²: smallest ε guaranteeing σ ≤ ηΔ for δ ∈ [1e-5, 0.1].
pub fn epsilon_floor(eta: f64) -> f64 {
    if eta == f64::INFINITY {
        return 0.0;
    }
    let t = (1.0 + (36.0 * eta + 1.0).sqrt()) / eta;
    t * t / 8.0
}

/// ε range keeping tr Σ inside the band.
pub fn epsilon_range_apriori(
    target: &CalibrationTarget,
    a: &Matrix,
    w: &Matrix,
    ch: &ChannelGains,
) -> Result<EpsilonRange> {
    check_delta(target.delta)?;
    check_sensitivity(target.sensitivity)?;
    let (bl, bu) = (target.band.lower, target.band.upper);
    let trw = w.trace();
    let lw = sym_eig(w)?.min();
    let tr_ata = a.t_mul(a).trace();
    let d2 = target.sensitivity.powi(2);
    let mut etas = Etas::default();

    if !(bl > trw) {
        return Ok(EpsilonRange::infeasible(
            format!("eta1 undefined: B_l = {bl} must exceed tr W = {trw}"),
            etas,
        ));
    }
    let den1 = d2 * (tr_ata * lw - bl + trw);
    if !(den1 > 0.0) {
        return Ok(EpsilonRange::infeasible(
            format!(
                "eta1 undefined: tr(AᵀA)·λₙ(W) − B_l + tr W = {:.6e} must be positive",
                den1 / d2
            ),
            etas,
        ));
    }
    let eta1 = ((bl - trw) * lw * ch.c_max.powi(2) / den1).sqrt();
    etas.eta1 = Some(eta1);
    if !(bu > trw) {
        return Ok(EpsilonRange::infeasible(
            format!("eta2 undefined: B_u = {bu} must exceed tr W = {trw}"),
            etas,
        ));
    }
    let eta2 = if tr_ata == 0.0 {
        f64::INFINITY
    } else {
        ((bu - trw) * ch.c_min.powi(2) / (d2 * tr_ata)).sqrt()
    };
    etas.eta2 = Some(eta2);
    Ok(EpsilonRange::from_endpoints(epsilon_floor(eta2), 1.0 / eta1, etas))
}

/// ε range keeping tr Σ̄ inside the band, for state dimension n.
pub fn epsilon_range_aposteriori(
    target: &CalibrationTarget,
    n: usize,
    w: &Matrix,
    ch: &ChannelGains,
) -> Result<EpsilonRange> {
    check_delta(target.delta)?;
    check_sensitivity(target.sensitivity)?;
    let (bl, bu) = (target.band.lower, target.band.upper);
    let lw = sym_eig(w)?.min();
    let nf = n as f64;
    let d2 = target.sensitivity.powi(2);
    let mut etas = Etas::default();
    let den3 = nf - bl / lw;
    if !(den3 > 0.0) {
        return Ok(EpsilonRange::infeasible(
            format!("eta3 undefined: n − B_l/λₙ(W) = {den3:.6e} must be positive"),
            etas,
        ));
    }
    let eta3 = (bl.max(0.0) * ch.c_max.powi(2) / (d2 * den3)).sqrt();
    etas.eta3 = Some(eta3);
    if !(bu > 0.0) {
        return Ok(EpsilonRange::infeasible(
            format!("eta4 undefined: B_u = {bu} must be positive"),
            etas,
        ));
    }
    let eta4 = (bu * ch.c_min.powi(2) / (nf * d2)).sqrt();
    etas.eta4 = Some(eta4);
    let upper = if eta3 == 0.0 { f64::INFINITY } else { 1.0 / eta3 };
    Ok(EpsilonRange::from_endpoints(epsilon_floor(eta4), upper, etas))
}

/// Per-agent ranges and their common intersection.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkEpsilonRange {
    pub per_agent: Vec<EpsilonRange>,
    pub common: EpsilonRange,
}

/// Applies a single-sensitivity range rule to each agent's own Δᵢ and intersects.
///
/// With `strict_paper` set, sensitivities must all be equal.
pub fn intersect_over_agents<F>(sensitivities: &[f64], strict_paper: bool, mut rule: F) -> Result<NetworkEpsilonRange>
where
    F: FnMut(f64) -> Result<EpsilonRange>,
{
    let first = *sensitivities
        .first()
        .ok_or_else(|| Error::Domain("at least one agent sensitivity is required".into()))?;
    if strict_paper && sensitivities.iter().any(|s| *s != first) {
        return Err(Error::Precondition(
            "heterogeneous agent sensitivities are not supported in strict mode".into(),
        ));
    }
    let per_agent = sensitivities.iter().map(|s| rule(*s)).collect::<Result<Vec<_>>>()?;
    let mut common = per_agent[0].clone();
    for r in &per_agent[1..] {
        common = common.intersect(r);
    }
    Ok(NetworkEpsilonRange { per_agent, common })
}

/// Smallest ε with J̃ ≤ α (σ = σ̄ tied), evaluating the quadratic slot at x̃.
pub fn epsilon_for_cost(
    alpha: f64,
    net: &NetworkModel,
    synth: &SynthesisResult,
    delta: f64,
    sensitivity: f64,
) -> Result<f64> {
    epsilon_for_cost_with(alpha, net, synth, delta, sensitivity, &net.x_tilde)
}

/// As [`epsilon_for_cost`] with a caller-chosen vector in the quadratic slot.
pub fn epsilon_for_cost_with(
    alpha: f64,
    net: &NetworkModel,
    synth: &SynthesisResult,
    delta: f64,
    sensitivity: f64,
    reference: &[f64],
) -> Result<f64> {
    check_delta(delta)?;
    Ok(epsilon_floor(eta5(alpha, net, synth, sensitivity, reference)?))
}

fn eta5(alpha: f64, net: &NetworkModel, synth: &SynthesisResult, sensitivity: f64, reference: &[f64]) -> Result<f64> {
    check_sensitivity(sensitivity)?;
    let ch = ChannelGains::from_output_matrix(&net.c)?;
    let lk = sym_eig(&synth.k)?.max();
    let btg = net.b.t_mul(&Matrix::column(&synth.g));
    let offset = btg.t_mul(&solve_input_weight(net, &synth.k, &btg)?).get(0, 0);
    let num = alpha - lk * net.w.trace() - net.q.quad_form(reference) + offset;
    if !(num > 0.0) {
        return Err(Error::Infeasible(format!(
            "cost cap {alpha} does not exceed λ₁(K)·tr W + xᵀQx − gᵀB(R+BᵀKB)⁻¹Bᵀg (margin {num:.6e})"
        )));
    }
    let h = tracking_gain_h(&net.a, &net.b, &synth.l, &synth.m)?;
    let hrh = h.t_mul(&(&net.r * &h));
    let den = sensitivity.powi(2) * (lk * net.a.t_mul(&net.a).trace() / ch.c_min.powi(2) + hrh.trace() + net.q.trace());
    Ok((num / den).sqrt())
}

/// The quantity a validation checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ValidationTarget {
    AprioriBand(MseBand),
    AposterioriBand(MseBand),
    CostCap(f64),
}

/// Exact values at a given ε compared with a target.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub epsilon: f64,
    pub delta: f64,
    pub sigma: f64,
    pub trace_sigma: f64,
    pub trace_sigma_bar: f64,
    pub j_total: f64,
    pub pass: bool,
}

/// Recomputes σ = noise_scale(ε, δ, Δ), sets V = σ²I and W̄ = σ²I, solves the
/// Riccati equations and checks the target.
///
/// `reference` fills the quadratic slot of the cost (x̃ when `None`).
pub fn validate_epsilon(
    eps: f64,
    delta: f64,
    sensitivity: f64,
    target: ValidationTarget,
    net: &NetworkModel,
    synth: &SynthesisResult,
    reference: Option<&[f64]>,
) -> Result<ValidationReport> {
    let sigma = noise_scale(PrivacyParams::new(eps, delta)?, sensitivity)?.sigma;
    if !(sigma > 0.0) {
        return Err(Error::Domain("validation needs a positive noise scale".into()));
    }
    let net_e = net.with_uniform_noise(sigma, sigma)?;
    let (s, sb) = filter_covariances(&net_e)?;
    let syn = SynthesisResult {
        sigma: s,
        sigma_bar: sb,
        ..synth.clone()
    };
    let reference = reference.unwrap_or(&net.x_tilde);
    let j_total = total_private_cost_with(&net_e, &syn, reference)?.j_total;
    let (ts, tsb) = (syn.sigma.trace(), syn.sigma_bar.trace());
    let pass = match target {
        ValidationTarget::AprioriBand(b) => b.contains(ts),
        ValidationTarget::AposterioriBand(b) => b.contains(tsb),
        ValidationTarget::CostCap(alpha) => j_total <= alpha,
    };
    Ok(ValidationReport {
        epsilon: eps,
        delta,
        sigma,
        trace_sigma: ts,
        trace_sigma_bar: tsb,
        j_total,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::q_inverse;
    use crate::synthesis::synthesize;

    fn scalar_net() -> NetworkModel {
        let s = Matrix::scalar;
        NetworkModel::new(
            s(1.0),
            s(1.0),
            s(1.0),
            s(1.0),
            s(1.0),
            s(1.0),
            s(1.0),
            s(1.0),
            vec![1.0],
            vec![1.0],
        )
        .unwrap()
    }

    fn target(bl: f64, bu: f64) -> CalibrationTarget {
        CalibrationTarget::new(MseBand::new(bl, bu).unwrap(), 0.05, 1.0).unwrap()
    }

    const UNIT: ChannelGains = ChannelGains { c_min: 1.0, c_max: 1.0 };

    #[test]
    fn kappa_premise_holds_on_delta_range() {
        for i in 0..=40 {
            let d = 10f64.powf(-5.0 + 4.0 * i as f64 / 40.0);
            let k = q_inverse(d).unwrap();
            assert!((1.0..=4.5).contains(&k), "K_δ({d}) = {k}");
        }
    }

    #[test]
    fn floor_is_sufficient_for_worst_delta() {
        for eta in [0.1, 0.5, 1.0, 3.0, 20.0] {
            let e = epsilon_floor(eta);
            let s = noise_scale(PrivacyParams::new(e, 1e-5).unwrap(), 1.0).unwrap().sigma;
            assert!(s <= eta, "η = {eta}: σ = {s}");
        }
    }

    #[test]
    fn degenerate_apriori_band_is_infeasible() {
        let one = Matrix::scalar(1.0);
        let r = epsilon_range_apriori(&target(0.9, 3.0), &one, &one, &UNIT).unwrap();
        match &r.status {
            RangeStatus::Infeasible(why) => assert!(why.contains("eta1")),
            _ => panic!("expected infeasible"),
        }
        assert!(matches!(r.into_result(), Err(Error::Infeasible(_))));
    }

    #[test]
    fn wide_apriori_band_is_feasible_and_sufficient() {
        let one = Matrix::scalar(1.0);
        let net = scalar_net();
        let syn = synthesize(&net).unwrap();
        let t = target(1.4, 25.0);
        let r = epsilon_range_apriori(&t, &one, &one, &UNIT).unwrap();
        assert!(r.is_feasible(), "{r:?}");
        for e in r.sample(20) {
            let rep = validate_epsilon(e, 0.05, 1.0, ValidationTarget::AprioriBand(t.band), &net, &syn, None).unwrap();
            assert!(rep.pass, "{rep:?}");
        }
    }

    #[test]
    fn narrow_scalar_bands_are_infeasible() {
        let one = Matrix::scalar(1.0);
        assert!(!epsilon_range_apriori(&target(1.4, 3.0), &one, &one, &UNIT)
            .unwrap()
            .is_feasible());
        assert!(!epsilon_range_aposteriori(&target(0.3, 0.9), 1, &one, &UNIT)
            .unwrap()
            .is_feasible());
    }

    #[test]
    fn widening_upper_target_lowers_floor() {
        let one = Matrix::scalar(1.0);
        let mut last = f64::INFINITY;
        for bu in [3.0, 10.0, 30.0, 100.0] {
            let r = epsilon_range_apriori(&target(1.4, bu), &one, &one, &UNIT).unwrap();
            assert!(r.lower < last);
            last = r.lower;
        }
    }

    #[test]
    fn aposteriori_examples() {
        let one = Matrix::scalar(1.0);
        let r = epsilon_range_aposteriori(&target(1.0, 3.0), 1, &one, &UNIT).unwrap();
        assert!(!r.is_feasible());
        let net = scalar_net();
        let syn = synthesize(&net).unwrap();
        let t = target(0.3, 30.0);
        let r = epsilon_range_aposteriori(&t, 1, &one, &UNIT).unwrap();
        assert!(r.is_feasible(), "{r:?}");
        for e in r.sample(20) {
            let rep = validate_epsilon(
                e,
                0.05,
                1.0,
                ValidationTarget::AposterioriBand(t.band),
                &net,
                &syn,
                None,
            )
            .unwrap();
            assert!(rep.pass, "{rep:?}");
        }
        let r2 = epsilon_range_aposteriori(&t, 2, &Matrix::identity(2), &UNIT).unwrap();
        assert!(r2.lower > r.lower);
    }

    #[test]
    fn cost_cap_examples() {
        let net = scalar_net();
        let syn = synthesize(&net).unwrap();
        let j0 = crate::cost::total_private_cost(&net, &syn).unwrap().j_nonprivate;
        let alpha = 2.0 * j0;
        let e = epsilon_for_cost(alpha, &net, &syn, 0.001, 1.0).unwrap();
        assert!(e.is_finite() && e > 0.0);
        let rep = validate_epsilon(1.01 * e, 0.001, 1.0, ValidationTarget::CostCap(alpha), &net, &syn, None).unwrap();
        assert!(rep.pass, "{rep:?}");
        let mut last = f64::INFINITY;
        for a in [alpha, 10.0 * alpha, 1e3 * alpha, 1e6 * alpha] {
            let e = epsilon_for_cost(a, &net, &syn, 0.001, 1.0).unwrap();
            assert!(e < last);
            last = e;
        }
        assert!(last < 1e-2);
        assert!(matches!(
            epsilon_for_cost(0.1, &net, &syn, 0.001, 1.0),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn validation_failure_and_domain() {
        let net = scalar_net();
        let syn = synthesize(&net).unwrap();
        let band = MseBand::new(1.6, 100.0).unwrap();
        let rep = validate_epsilon(50.0, 0.05, 1.0, ValidationTarget::AprioriBand(band), &net, &syn, None).unwrap();
        assert!(!rep.pass);
        assert!(validate_epsilon(
            f64::INFINITY,
            0.05,
            1.0,
            ValidationTarget::CostCap(1.0),
            &net,
            &syn,
            None
        )
        .is_err());
    }

    #[test]
    fn intersection_over_agents() {
        let one = Matrix::scalar(1.0);
        let band = MseBand::new(1.2, 1e4).unwrap();
        let rule = |s: f64| epsilon_range_apriori(&CalibrationTarget::new(band, 0.01, s)?, &one, &one, &UNIT);
        let r = intersect_over_agents(&[1.0, 1.0], true, rule).unwrap();
        assert_eq!(r.common, r.per_agent[0]);
        assert!(intersect_over_agents(&[1.0, 2.0], true, rule).is_err());
        let r = intersect_over_agents(&[1.0, 2.0], false, rule).unwrap();
        assert!(r.common.lower >= r.per_agent[0].lower.max(r.per_agent[1].lower));
        assert!(r.common.upper <= r.per_agent[0].upper.min(r.per_agent[1].upper));
    }
}
