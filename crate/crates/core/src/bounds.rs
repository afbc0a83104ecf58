//! Leakage bounds: trace (MSE) and log-determinant (entropy proxy) bounds on
//! the steady a priori and a posteriori error covariances.
//!
//! All bounds assume a diagonal, positive output matrix C and diagonal V.

use crate::cost::tracking_gain_h;
use crate::error::{Error, Result};
use crate::linalg::{logdet, spd_inverse, sym_eig, Lu, Matrix};
use crate::model::NetworkModel;
use crate::synthesis::{filter_covariances, filter_covariances_dense, solve_input_weight, SynthesisResult};

/// Closed interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn is_ordered(&self) -> bool {
        self.lower <= self.upper
    }

    /// True when `x` lies in [lower − slack·s, upper + slack·s] with s = max(1, |x|).
    pub fn contains(&self, x: f64, slack: f64) -> bool {
        let tol = slack * x.abs().max(1.0);
        x >= self.lower - tol && x <= self.upper + tol
    }
}

/// Channels with the smallest (l) and largest (u) ratio C_ii²/σᵢ².
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtremalChannel {
    pub l: usize,
    pub u: usize,
    pub c_l: f64,
    pub c_u: f64,
    pub sigma_l: f64,
    pub sigma_u: f64,
}

/// Options shared by the bound computations.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BoundOptions {
    /// Use Σᵢ C_ii²/σᵢ (as printed) instead of Σᵢ C_ii²/σᵢ² in the ln det Σ lower bound.
    pub paper_literal: bool,
}

fn require_diagonal_positive(name: &str, m: &Matrix) -> Result<()> {
    if !m.is_diagonal() {
        return Err(Error::Precondition(format!(
            "{name} must be diagonal for the bound suite"
        )));
    }
    if let Some(i) = m.diag().iter().position(|v| !(*v > 0.0)) {
        return Err(Error::Precondition(format!("{name}[{i},{i}] must be positive")));
    }
    Ok(())
}

/// Picks l = argmin and u = argmax of C_ii²/V_ii, lowest index on ties.
pub fn extremal_channel(c: &Matrix, v: &Matrix) -> Result<ExtremalChannel> {
    require_diagonal_positive("C", c)?;
    require_diagonal_positive("V", v)?;
    if c.shape() != v.shape() {
        return Err(Error::dim(format!(
            "C is {}x{} but V is {}x{}",
            c.rows(),
            c.cols(),
            v.rows(),
            v.cols()
        )));
    }
    let ratio: Vec<f64> = (0..c.rows()).map(|i| c.get(i, i).powi(2) / v.get(i, i)).collect();
    let (mut l, mut u) = (0, 0);
    for i in 1..ratio.len() {
        if ratio[i] < ratio[l] {
            l = i;
        }
        if ratio[i] > ratio[u] {
            u = i;
        }
    }
    Ok(ExtremalChannel {
        l,
        u,
        c_l: c.get(l, l),
        c_u: c.get(u, u),
        sigma_l: v.get(l, l).sqrt(),
        sigma_u: v.get(u, u).sqrt(),
    })
}

fn lambda_min(w: &Matrix) -> Result<f64> {
    Ok(sym_eig(w)?.min())
}

/// Bounds on tr Σ.
pub fn apriori_trace_bounds(a: &Matrix, w: &Matrix, ch: &ExtremalChannel) -> Result<Interval> {
    let lw = lambda_min(w)?;
    let tr_ata = a.t_mul(a).trace();
    let (su2, sl2) = (ch.sigma_u.powi(2), ch.sigma_l.powi(2));
    let lower = w.trace() + su2 * tr_ata * lw / (su2 + lw * ch.c_u.powi(2));
    let upper = w.trace() + sl2 * tr_ata / ch.c_l.powi(2);
    Ok(Interval::new(lower, upper))
}

/// Bounds on tr Σ̄ for state dimension n.
pub fn aposteriori_trace_bounds(n: usize, w: &Matrix, ch: &ExtremalChannel) -> Result<Interval> {
    let lw = lambda_min(w)?;
    let (su2, sl2) = (ch.sigma_u.powi(2), ch.sigma_l.powi(2));
    let nf = n as f64;
    Ok(Interval::new(
        nf * su2 / (ch.c_u.powi(2) + su2 / lw),
        nf * sl2 / ch.c_l.powi(2),
    ))
}

/// Bounds on ln det Σ.
pub fn apriori_logdet_bounds(
    a: &Matrix,
    w: &Matrix,
    c: &Matrix,
    v: &Matrix,
    ch: &ExtremalChannel,
    opts: BoundOptions,
) -> Result<Interval> {
    require_diagonal_positive("C", c)?;
    require_diagonal_positive("V", v)?;
    let n = a.rows();
    let nf = n as f64;
    let upper = a.t_mul(a).trace() * ch.sigma_l.powi(2) / ch.c_l.powi(2) + w.trace();
    let info_sum: f64 = (0..c.rows())
        .map(|i| {
            let s2 = v.get(i, i);
            let denom = if opts.paper_literal { s2.sqrt() } else { s2 };
            c.get(i, i).powi(2) / denom
        })
        .sum();
    let d = (spd_inverse(w)?.trace() + info_sum) / nf;
    let ln_det_w = logdet(w)?;
    let ln_abs_det_a = Lu::new(a)?.ln_abs_det();
    let lower = if ln_abs_det_a == f64::NEG_INFINITY {
        ln_det_w
    } else {
        let t1 = 2.0 * ln_abs_det_a - nf * d.ln();
        let hi = t1.max(ln_det_w);
        hi + ((t1 - hi).exp() + (ln_det_w - hi).exp()).ln()
    };
    Ok(Interval::new(lower, upper))
}

/// Bounds on ln det Σ̄ for state dimension n.
pub fn aposteriori_logdet_bounds(n: usize, w: &Matrix, ch: &ExtremalChannel) -> Result<Interval> {
    let lw = lambda_min(w)?;
    let su2 = ch.sigma_u.powi(2);
    let nf = n as f64;
    Ok(Interval::new(
        nf * (su2 / (ch.c_u.powi(2) + su2 / lw)).ln(),
        nf * (ch.sigma_l.powi(2) / ch.c_l.powi(2)).ln(),
    ))
}

/// Exact values from the Riccati solution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactValues {
    pub trace_sigma: f64,
    pub trace_sigma_bar: f64,
    pub logdet_sigma: f64,
    pub logdet_sigma_bar: f64,
}

impl ExactValues {
    pub fn from_covariances(sigma: &Matrix, sigma_bar: &Matrix) -> Result<Self> {
        Ok(Self {
            trace_sigma: sigma.trace(),
            trace_sigma_bar: sigma_bar.trace(),
            logdet_sigma: logdet(sigma)?,
            logdet_sigma_bar: logdet(sigma_bar)?,
        })
    }
}

/// All four bound pairs with the quantities behind them.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub trace_sigma: Interval,
    pub trace_sigma_bar: Interval,
    pub logdet_sigma: Interval,
    pub logdet_sigma_bar: Interval,
    pub channel: ExtremalChannel,
    pub lambda_min_w: f64,
    pub trace_ata: f64,
    pub exact: Option<ExactValues>,
}

impl BoundReport {
    pub fn pairs(&self) -> [(&'static str, Interval, Option<f64>); 4] {
        let e = self.exact;
        [
            ("trace_sigma", self.trace_sigma, e.map(|x| x.trace_sigma)),
            ("trace_sigma_bar", self.trace_sigma_bar, e.map(|x| x.trace_sigma_bar)),
            ("logdet_sigma", self.logdet_sigma, e.map(|x| x.logdet_sigma)),
            ("logdet_sigma_bar", self.logdet_sigma_bar, e.map(|x| x.logdet_sigma_bar)),
        ]
    }

    /// Every exact value lies in its interval (with relative slack).
    pub fn contains_exact(&self, slack: f64) -> bool {
        self.pairs()
            .iter()
            .all(|(_, iv, x)| x.map_or(true, |x| iv.contains(x, slack)))
    }

    /// Every interval is ordered.
    pub fn is_ordered(&self) -> bool {
        self.pairs().iter().all(|(_, iv, _)| iv.is_ordered())
    }
}

fn report_with(
    a: &Matrix,
    c: &Matrix,
    w: &Matrix,
    v: &Matrix,
    opts: BoundOptions,
    exact: Option<ExactValues>,
) -> Result<BoundReport> {
    let ch = extremal_channel(c, v)?;
    let n = a.rows();
    Ok(BoundReport {
        trace_sigma: apriori_trace_bounds(a, w, &ch)?,
        trace_sigma_bar: aposteriori_trace_bounds(n, w, &ch)?,
        logdet_sigma: apriori_logdet_bounds(a, w, c, v, &ch, opts)?,
        logdet_sigma_bar: aposteriori_logdet_bounds(n, w, &ch)?,
        channel: ch,
        lambda_min_w: lambda_min(w)?,
        trace_ata: a.t_mul(a).trace(),
        exact,
    })
}

/// Bounds and exact values for a system given by its matrices.
pub fn bound_report(a: &Matrix, c: &Matrix, w: &Matrix, v: &Matrix, opts: BoundOptions) -> Result<BoundReport> {
    let (sigma, sigma_bar) = filter_covariances_dense(a, c, v, w)?;
    report_with(
        a,
        c,
        w,
        v,
        opts,
        Some(ExactValues::from_covariances(&sigma, &sigma_bar)?),
    )
}

/// Bounds and exact values for a whole network.
pub fn network_bound_report(net: &NetworkModel, opts: BoundOptions) -> Result<BoundReport> {
    let (sigma, sigma_bar) = filter_covariances(net)?;
    report_with(
        &net.a,
        &net.c,
        &net.w,
        &net.v,
        opts,
        Some(ExactValues::from_covariances(&sigma, &sigma_bar)?),
    )
}

/// Upper bound on tr Σ implied by a cost cap α:
/// (α − x̃ᵀQx̃ + gᵀB(R+BᵀKB)⁻¹Bᵀg − tr(QW̄) − tr(HᵀRHW̄)) / λₙ(Q).
pub fn error_budget_from_cost(alpha: f64, net: &NetworkModel, synth: &SynthesisResult) -> Result<f64> {
    error_budget_from_cost_with(alpha, net, synth, &net.x_tilde)
}

/// As [`error_budget_from_cost`] with a caller-chosen vector in the quadratic slot.
pub fn error_budget_from_cost_with(
    alpha: f64,
    net: &NetworkModel,
    synth: &SynthesisResult,
    reference: &[f64],
) -> Result<f64> {
    let h = tracking_gain_h(&net.a, &net.b, &synth.l, &synth.m)?;
    let btg = net.b.t_mul(&Matrix::column(&synth.g));
    let offset = btg.t_mul(&solve_input_weight(net, &synth.k, &btg)?).get(0, 0);
    let penalty = crate::cost::reference_privacy_cost(&net.q, &net.r, &h, &net.w_bar)?;
    let num = alpha - net.q.quad_form(reference) + offset - penalty;
    if !(num > 0.0) {
        return Err(Error::Infeasible(format!(
            "cost cap {alpha} does not exceed the irreducible cost terms (margin {num:.6e})"
        )));
    }
    Ok(num / sym_eig(&net.q)?.min())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::{noise_scale, PrivacyParams};
    use crate::synthesis::synthesize;

    const PHI: f64 = 1.618_033_988_749_895;

    fn ch1() -> ExtremalChannel {
        extremal_channel(&Matrix::scalar(1.0), &Matrix::scalar(1.0)).unwrap()
    }

    #[test]
    fn extremal_channel_examples() {
        let ch = extremal_channel(&Matrix::identity(2), &Matrix::from_diag(&[1.0, 4.0])).unwrap();
        assert_eq!((ch.l, ch.u), (1, 0));
        assert_eq!((ch.sigma_l, ch.sigma_u), (2.0, 1.0));
        let ch = extremal_channel(&Matrix::identity(3), &Matrix::identity(3)).unwrap();
        assert_eq!((ch.l, ch.u), (0, 0));
        let ch = extremal_channel(&Matrix::from_diag(&[1.0, 3.0]), &Matrix::identity(2)).unwrap();
        assert_eq!((ch.l, ch.u, ch.c_l, ch.c_u), (0, 1, 1.0, 3.0));
        let full = Matrix::from_rows(&[[1.0, 0.5], [0.0, 1.0]]).unwrap();
        assert!(matches!(
            extremal_channel(&full, &Matrix::identity(2)),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn trace_bounds_scalar() {
        let a = Matrix::scalar(1.0);
        let w = Matrix::scalar(1.0);
        let iv = apriori_trace_bounds(&a, &w, &ch1()).unwrap();
        assert_eq!((iv.lower, iv.upper), (1.5, 2.0));
        assert!(iv.contains(PHI, 0.0));
        let iv = aposteriori_trace_bounds(1, &w, &ch1()).unwrap();
        assert_eq!((iv.lower, iv.upper), (0.5, 1.0));
        assert!(iv.contains(PHI - 1.0, 0.0));
        let iv = apriori_trace_bounds(&Matrix::zeros(2, 2), &Matrix::identity(2).scale(3.0), &ch1()).unwrap();
        assert_eq!((iv.lower, iv.upper), (6.0, 6.0));
    }

    #[test]
    fn table_columns_at_extreme_epsilons() {
        let a = Matrix::from_rows(&[[1.0, 0.1], [0.0, 1.0]]).unwrap();
        for (eps, lb, ub) in [(0.1, 1.9929, 560.93), (1.0, 1.5687, 7.2736)] {
            let s = noise_scale(PrivacyParams::new(eps, 0.05).unwrap(), 1.0).unwrap().sigma;
            let v = Matrix::identity(2).scale(s * s);
            let ch = extremal_channel(&Matrix::identity(2), &v).unwrap();
            let iv = aposteriori_trace_bounds(2, &Matrix::identity(2), &ch).unwrap();
            assert!((iv.lower - lb).abs() < 0.005 * lb, "{iv:?}");
            assert!((iv.upper - ub).abs() < 0.005 * ub, "{iv:?}");
            let rep = bound_report(
                &a,
                &Matrix::identity(2),
                &Matrix::identity(2),
                &v,
                BoundOptions::default(),
            )
            .unwrap();
            assert!(rep.contains_exact(1e-8) && rep.is_ordered());
        }
    }

    #[test]
    fn logdet_bounds_scalar() {
        let one = Matrix::scalar(1.0);
        let iv = apriori_logdet_bounds(&one, &one, &one, &one, &ch1(), BoundOptions::default()).unwrap();
        assert!((iv.lower - 1.5f64.ln()).abs() < 1e-15);
        assert_eq!(iv.upper, 2.0);
        assert!(iv.contains(PHI.ln(), 0.0));
        let iv = aposteriori_logdet_bounds(1, &one, &ch1()).unwrap();
        assert!((iv.lower - 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(iv.upper, 0.0);
        assert!(iv.contains((PHI - 1.0).ln(), 0.0));
    }

    #[test]
    fn logdet_lower_bound_with_singular_dynamics() {
        let w = Matrix::from_rows(&[[2.0, 0.3], [0.3, 1.0]]).unwrap();
        let c = Matrix::identity(2);
        let v = Matrix::identity(2);
        let ch = extremal_channel(&c, &v).unwrap();
        let iv = apriori_logdet_bounds(&Matrix::zeros(2, 2), &w, &c, &v, &ch, BoundOptions::default()).unwrap();
        assert!((iv.lower - logdet(&w).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn literal_flag_changes_only_logdet_lower() {
        let a = Matrix::from_rows(&[[0.9, 0.2], [0.0, 0.7]]).unwrap();
        let v = Matrix::from_diag(&[4.0, 9.0]);
        let c = Matrix::identity(2);
        let w = Matrix::identity(2);
        let d = bound_report(&a, &c, &w, &v, BoundOptions::default()).unwrap();
        let l = bound_report(&a, &c, &w, &v, BoundOptions { paper_literal: true }).unwrap();
        assert_eq!(d.trace_sigma, l.trace_sigma);
        assert_eq!(d.logdet_sigma.upper, l.logdet_sigma.upper);
        assert_ne!(d.logdet_sigma.lower, l.logdet_sigma.lower);
    }

    #[test]
    fn aposteriori_logdet_collapses_for_large_w() {
        let w = Matrix::identity(2).scale(1e12);
        let v = Matrix::identity(2).scale(4.0);
        let ch = extremal_channel(&Matrix::identity(2), &v).unwrap();
        let iv = aposteriori_logdet_bounds(2, &w, &ch).unwrap();
        assert!((iv.upper - 2.0 * 4f64.ln()).abs() < 1e-12);
        assert!((iv.lower - iv.upper).abs() < 1e-9);
    }

    #[test]
    fn logdet_bar_contains_exact_at_mid_epsilon() {
        let a = Matrix::from_rows(&[[1.0, 0.1], [0.0, 1.0]]).unwrap();
        let s = noise_scale(PrivacyParams::new(0.4, 0.05).unwrap(), 1.0).unwrap().sigma;
        let v = Matrix::identity(2).scale(s * s);
        let rep = bound_report(
            &a,
            &Matrix::identity(2),
            &Matrix::identity(2),
            &v,
            BoundOptions::default(),
        )
        .unwrap();
        let e = rep.exact.unwrap();
        assert!(rep.logdet_sigma_bar.contains(e.logdet_sigma_bar, 1e-8));
    }

    fn scalar_net(x: f64, wbar: f64) -> NetworkModel {
        let s = Matrix::scalar;
        NetworkModel::new(
            s(1.0),
            s(1.0),
            s(1.0),
            s(1.0),
            s(1.0),
            s(wbar),
            s(1.0),
            s(1.0),
            vec![x],
            vec![x],
        )
        .unwrap()
    }

    #[test]
    fn error_budget_examples() {
        let net = scalar_net(0.0, 0.0);
        let syn = synthesize(&net).unwrap();
        assert!((error_budget_from_cost(7.0, &net, &syn).unwrap() - 7.0).abs() < 1e-12);

        let net = scalar_net(1.0, 1.0);
        let syn = synthesize(&net).unwrap();
        let j = crate::cost::total_private_cost(&net, &syn).unwrap().j_total;
        assert!(error_budget_from_cost(j, &net, &syn).unwrap() >= syn.sigma.trace());
        assert!(matches!(
            error_budget_from_cost(0.5, &net, &syn),
            Err(Error::Infeasible(_))
        ));
    }
}
