//! Discrete algebraic Riccati equations by symmetrized fixed-point iteration.

use super::decomp::{cholesky, cholesky_solve, spd_inverse};
use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Acceptance threshold for the residual check run on every returned solution.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Iteration controls for the Riccati solvers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RiccatiOptions {
    /// Stop when max|Xₖ₊₁ − Xₖ| ≤ tolerance·max(1, max|Xₖ|).
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Relaxation weight θ in Xₖ₊₁ = (1−θ)Xₖ + θF(Xₖ); 1 is the plain iteration.
    pub damping: f64,
}

impl Default for RiccatiOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 100_000,
            damping: 1.0,
        }
    }
}

fn require_square(name: &str, m: &Matrix, n: usize) -> Result<()> {
    if m.shape() != (n, n) {
        return Err(Error::dim(format!(
            "{name} must be {n}x{n}, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    Ok(())
}

fn require_pd(name: &str, m: &Matrix) -> Result<Matrix> {
    if !m.is_symmetric(1e-9) {
        return Err(Error::Precondition(format!("{name} must be symmetric")));
    }
    cholesky(m).map_err(|_| Error::Precondition(format!("{name} must be positive definite")))
}

fn iterate<F>(what: &'static str, x0: Matrix, opts: &RiccatiOptions, mut step: F) -> Result<Matrix>
where
    F: FnMut(&Matrix) -> Result<Matrix>,
{
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::Domain(format!(
            "damping must lie in (0, 1], got {}",
            opts.damping
        )));
    }
    let mut x = x0;
    let mut diff = f64::INFINITY;
    for _ in 0..opts.max_iterations {
        let fx = step(&x)?;
        let next = if opts.damping == 1.0 {
            fx
        } else {
            &x.scale(1.0 - opts.damping) + &fx.scale(opts.damping)
        }
        .symmetrize();
        if !next.all_finite() {
            return Err(Error::Convergence {
                what,
                iterations: 0,
                residual: f64::INFINITY,
            });
        }
        diff = (&next - &x).max_abs();
        let scale = x.max_abs().max(1.0);
        x = next;
        if diff <= opts.tolerance * scale {
            return Ok(x);
        }
    }
    Err(Error::Convergence {
        what,
        iterations: opts.max_iterations,
        residual: diff,
    })
}

/// Right-hand side of the control Riccati equation at K.
fn control_map(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, k: &Matrix) -> Result<Matrix> {
    let ka = k * a;
    let bt_ka = b.t_mul(&ka);
    let s = r + &b.t_mul(&(k * b));
    let l = cholesky(&s.symmetrize()).map_err(|_| Error::NotPositiveDefinite("R + BᵀKB lost definiteness".into()))?;
    let x = cholesky_solve(&l, &bt_ka);
    Ok(&(&a.t_mul(&ka) - &bt_ka.t_mul(&x)) + q)
}

/// Residual ‖K − (AᵀKA − AᵀKB(R+BᵀKB)⁻¹BᵀKA + Q)‖_F.
pub fn control_dare_residual(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, k: &Matrix) -> Result<f64> {
    Ok((k - &control_map(a, b, q, r, k)?).frobenius_norm())
}

/// Stabilizing solution K of K = AᵀKA − AᵀKB(R+BᵀKB)⁻¹BᵀKA + Q.
pub fn solve_control_dare(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<Matrix> {
    solve_control_dare_with(a, b, q, r, &RiccatiOptions::default())
}

pub fn solve_control_dare_with(
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
    opts: &RiccatiOptions,
) -> Result<Matrix> {
    let n = a.rows();
    require_square("A", a, n)?;
    if b.rows() != n {
        return Err(Error::dim(format!("B must have {n} rows, got {}", b.rows())));
    }
    require_square("Q", q, n)?;
    require_square("R", r, b.cols())?;
    require_pd("Q", q)?;
    require_pd("R", r)?;
    let k = iterate("control Riccati iteration", q.clone(), opts, |k| {
        control_map(a, b, q, r, k)
    })?;
    let residual = control_dare_residual(a, b, q, r, &k)?;
    if residual > RESIDUAL_TOL * k.frobenius_norm().max(f64::MIN_POSITIVE) {
        return Err(Error::Convergence {
            what: "control Riccati iteration",
            iterations: opts.max_iterations,
            residual,
        });
    }
    Ok(k)
}

/// Information-form filter map X ↦ A(X⁻¹ + J)⁻¹Aᵀ + W with J = CᵀV⁻¹C.
fn filter_map(a: &Matrix, j: &Matrix, w: &Matrix, x: &Matrix) -> Result<Matrix> {
    let post = posterior_from_prior(x, j)?;
    Ok(&(&(a * &post) * &a.transpose()) + w)
}

/// (Σ⁻¹ + J)⁻¹.
pub(crate) fn posterior_from_prior(sigma: &Matrix, info: &Matrix) -> Result<Matrix> {
    let sinv =
        spd_inverse(sigma).map_err(|_| Error::NotPositiveDefinite("a priori covariance lost definiteness".into()))?;
    spd_inverse(&(&sinv + info))
}

/// CᵀV⁻¹C for SPD V.
pub(crate) fn measurement_information(c: &Matrix, v: &Matrix) -> Result<Matrix> {
    let lv = require_pd("V", v)?;
    let vinv_c = cholesky_solve(&lv, c);
    Ok(c.t_mul(&vinv_c).symmetrize())
}

/// Residual ‖Σ − A(Σ⁻¹ + CᵀV⁻¹C)⁻¹Aᵀ − W‖_F.
pub fn filter_dare_residual(a: &Matrix, c: &Matrix, v: &Matrix, w: &Matrix, sigma: &Matrix) -> Result<f64> {
    let j = measurement_information(c, v)?;
    Ok((sigma - &filter_map(a, &j, w, sigma)?).frobenius_norm())
}

/// A priori steady-state covariance Σ = A(Σ⁻¹ + CᵀV⁻¹C)⁻¹Aᵀ + W.
pub fn solve_filter_dare(a: &Matrix, c: &Matrix, v: &Matrix, w: &Matrix) -> Result<Matrix> {
    solve_filter_dare_with(a, c, v, w, &RiccatiOptions::default())
}

pub fn solve_filter_dare_with(a: &Matrix, c: &Matrix, v: &Matrix, w: &Matrix, opts: &RiccatiOptions) -> Result<Matrix> {
    let n = a.rows();
    require_square("A", a, n)?;
    require_square("W", w, n)?;
    if c.cols() != n {
        return Err(Error::dim(format!("C must have {n} columns, got {}", c.cols())));
    }
    require_square("V", v, c.rows())?;
    require_pd("W", w)?;
    let j = measurement_information(c, v)?;
    let sigma = iterate("filter Riccati iteration", w.clone(), opts, |x| filter_map(a, &j, w, x))?;
    let residual = (&sigma - &filter_map(a, &j, w, &sigma)?).frobenius_norm();
    if residual > RESIDUAL_TOL * sigma.frobenius_norm() {
        return Err(Error::Convergence {
            what: "filter Riccati iteration",
            iterations: opts.max_iterations,
            residual,
        });
    }
    Ok(sigma)
}

/// Rank of the controllability matrix [B, AB, …, Aⁿ⁻¹B], found by growing an
/// orthonormal basis of the Krylov space one block at a time.
///
/// A candidate direction is kept when its component orthogonal to the current
/// basis exceeds `1e-10` of its own norm (two Gram–Schmidt passes).
pub fn controllability_rank(a: &Matrix, b: &Matrix) -> Result<usize> {
    let n = a.rows();
    require_square("A", a, n)?;
    if b.rows() != n {
        return Err(Error::dim(format!("B must have {n} rows, got {}", b.rows())));
    }
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut frontier: Vec<Vec<f64>> = (0..b.cols()).map(|j| (0..n).map(|i| b.get(i, j)).collect()).collect();
    let scale = b.max_abs().max(f64::MIN_POSITIVE);
    while !frontier.is_empty() && basis.len() < n {
        let mut added = Vec::new();
        for mut v in frontier {
            let before = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if before <= 1e-300 * scale {
                continue;
            }
            for _ in 0..2 {
                for q in &basis {
                    let d: f64 = q.iter().zip(&v).map(|(x, y)| x * y).sum();
                    v.iter_mut().zip(q).for_each(|(x, y)| *x -= d * y);
                }
            }
            let after = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if after > 1e-10 * before {
                v.iter_mut().for_each(|x| *x /= after);
                basis.push(v.clone());
                added.push(v);
                if basis.len() == n {
                    break;
                }
            }
        }
        frontier = added.iter().map(|v| a.matvec(v)).collect();
    }
    Ok(basis.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> Matrix {
        Matrix::scalar(v)
    }

    const PHI: f64 = 1.618_033_988_749_895;

    #[test]
    fn control_dare_scalar_examples() {
        let k = solve_control_dare(&s(1.0), &s(1.0), &s(1.0), &s(1.0)).unwrap();
        assert!((k.get(0, 0) - PHI).abs() < 1e-9);
        let k = solve_control_dare(&s(0.5), &s(0.0), &s(1.0), &s(1.0)).unwrap();
        assert!((k.get(0, 0) - 4.0 / 3.0).abs() < 1e-9);
        let q = Matrix::from_rows(&[[2.0, 0.3], [0.3, 1.0]]).unwrap();
        let b = Matrix::from_rows(&[[1.0], [0.5]]).unwrap();
        let k = solve_control_dare(&Matrix::zeros(2, 2), &b, &q, &s(3.0)).unwrap();
        assert_eq!(k, q);
    }

    #[test]
    fn control_dare_rejects_indefinite_weights() {
        let r = solve_control_dare(&s(1.0), &s(1.0), &s(-1.0), &s(1.0));
        assert!(matches!(r, Err(Error::Precondition(_))));
        let r = solve_control_dare(&s(1.0), &s(1.0), &s(1.0), &s(0.0));
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn control_dare_reports_divergence() {
        let opts = RiccatiOptions {
            max_iterations: 50,
            ..Default::default()
        };
        let r = solve_control_dare_with(&s(2.0), &s(0.0), &s(1.0), &s(1.0), &opts);
        assert!(matches!(r, Err(Error::Convergence { .. })));
    }

    #[test]
    fn filter_dare_scalar_examples() {
        let sigma = solve_filter_dare(&s(1.0), &s(1.0), &s(1.0), &s(1.0)).unwrap();
        assert!((sigma.get(0, 0) - PHI).abs() < 1e-9);
        let sigma = solve_filter_dare(&s(0.5), &s(0.0), &s(1.0), &s(1.0)).unwrap();
        assert!((sigma.get(0, 0) - 4.0 / 3.0).abs() < 1e-9);
        let w = Matrix::from_rows(&[[2.0, 0.5], [0.5, 1.0]]).unwrap();
        let sigma = solve_filter_dare(&Matrix::zeros(2, 2), &Matrix::identity(2), &Matrix::identity(2), &w).unwrap();
        assert_eq!(sigma, w);
    }

    #[test]
    fn filter_dare_rejects_singular_v() {
        let r = solve_filter_dare(&s(1.0), &s(1.0), &s(0.0), &s(1.0));
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn damped_iteration_reaches_same_fixed_point() {
        let opts = RiccatiOptions {
            damping: 0.5,
            ..Default::default()
        };
        let k = solve_control_dare_with(&s(1.0), &s(1.0), &s(1.0), &s(1.0), &opts).unwrap();
        assert!((k.get(0, 0) - PHI).abs() < 1e-8);
    }

    #[test]
    fn controllability_examples() {
        let a = Matrix::from_rows(&[[1.0, 0.1], [0.0, 1.0]]).unwrap();
        let b = Matrix::from_rows(&[[0.005], [0.1]]).unwrap();
        assert_eq!(controllability_rank(&a, &b).unwrap(), 2);
        assert_eq!(controllability_rank(&a, &Matrix::zeros(2, 1)).unwrap(), 0);
        let b_pos = Matrix::from_rows(&[[1.0], [0.0]]).unwrap();
        assert_eq!(controllability_rank(&a, &b_pos).unwrap(), 1);
    }
}
