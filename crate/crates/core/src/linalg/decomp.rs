use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Matrices whose 1-norm condition number exceeds this are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// LU factorization with partial pivoting, `P·A = L·U`.
#[derive(Clone, Debug)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
    sign: f64,
    singular: bool,
}

impl Lu {
    pub fn new(a: &Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::dim(format!(
                "LU needs a square matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let mut singular = false;
        for k in 0..n {
            let (p, pmax) =
                (k..n)
                    .map(|i| (i, lu.get(i, k).abs()))
                    .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax == 0.0 {
                singular = true;
                continue;
            }
            if p != k {
                for j in 0..n {
                    let t = lu.get(k, j);
                    lu.set(k, j, lu.get(p, j));
                    lu.set(p, j, t);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let piv = lu.get(k, k);
            for i in (k + 1)..n {
                let f = lu.get(i, k) / piv;
                lu.set(i, k, f);
                if f != 0.0 {
                    for j in (k + 1)..n {
                        lu.set(i, j, lu.get(i, j) - f * lu.get(k, j));
                    }
                }
            }
        }
        Ok(Self {
            lu,
            perm,
            sign,
            singular,
        })
    }

    pub fn dim(&self) -> usize {
        self.lu.rows()
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    pub fn det(&self) -> f64 {
        if self.singular {
            return 0.0;
        }
        self.sign * self.lu.diag().iter().product::<f64>()
    }

    /// ln|det A|; −∞ when singular.
    pub fn ln_abs_det(&self) -> f64 {
        if self.singular {
            return f64::NEG_INFINITY;
        }
        self.lu.diag().iter().map(|v| v.abs().ln()).sum()
    }

    fn solve_vec_in_place(&self, x: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu.get(i, j) * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.lu.get(i, j) * x[j];
            }
            x[i] = s / self.lu.get(i, i);
        }
    }

    /// Solves A·X = B. Caller must have ruled out singularity.
    pub fn solve(&self, b: &Matrix) -> Matrix {
        let n = self.dim();
        assert_eq!(b.rows(), n, "LU solve shape mismatch");
        let mut out = Matrix::zeros(n, b.cols());
        let mut col = vec![0.0; n];
        for j in 0..b.cols() {
            for (i, c) in col.iter_mut().enumerate() {
                *c = b.get(self.perm[i], j);
            }
            self.solve_vec_in_place(&mut col);
            for (i, c) in col.iter().enumerate() {
                out.set(i, j, *c);
            }
        }
        out
    }

    pub fn inverse(&self) -> Matrix {
        self.solve(&Matrix::identity(self.dim()))
    }
}

/// 1-norm condition number ‖A‖₁‖A⁻¹‖₁ together with the inverse it needed.
fn condition_and_inverse(a: &Matrix) -> Result<(f64, Option<Matrix>)> {
    let lu = Lu::new(a)?;
    if lu.is_singular() {
        return Ok((f64::INFINITY, None));
    }
    let inv = lu.inverse();
    if !inv.all_finite() {
        return Ok((f64::INFINITY, None));
    }
    Ok((a.norm_one() * inv.norm_one(), Some(inv)))
}

/// 1-norm condition number of a square matrix (∞ if exactly singular).
pub fn condition_number(a: &Matrix) -> Result<f64> {
    Ok(condition_and_inverse(a)?.0)
}

/// Solves a·x = b, refusing matrices with condition estimate above [`MAX_CONDITION`].
pub fn solve_linear(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if !a.is_square() || a.rows() != b.rows() {
        return Err(Error::dim(format!(
            "solve needs square a with matching rows: a is {}x{}, b is {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    if a.rows() == 0 {
        return Ok(Matrix::zeros(0, b.cols()));
    }
    let (cond, inv) = condition_and_inverse(a)?;
    if cond > MAX_CONDITION || inv.is_none() {
        return Err(Error::Singular { condition: cond });
    }
    Ok(Lu::new(a)?.solve(b))
}

/// Inverse of a well-conditioned square matrix.
pub fn inverse(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::dim(format!(
            "inverse needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    match condition_and_inverse(a)? {
        (cond, Some(inv)) if cond <= MAX_CONDITION => Ok(inv),
        (cond, _) => Err(Error::Singular { condition: cond }),
    }
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::dim(format!(
            "Cholesky needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = m.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite(format!("pivot {j} is {d:.3e}")));
        }
        let ljj = d.sqrt();
        l.set(j, j, ljj);
        for i in (j + 1)..n {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / ljj);
        }
    }
    Ok(l)
}

/// True when `m` is symmetric (relative 1e-9) and admits a Cholesky factor.
pub fn is_positive_definite(m: &Matrix) -> bool {
    m.is_symmetric(1e-9) && cholesky(m).is_ok()
}

/// Solves S·X = B for SPD S given its Cholesky factor.
pub fn cholesky_solve(l: &Matrix, b: &Matrix) -> Matrix {
    let n = l.rows();
    let mut x = b.clone();
    for c in 0..b.cols() {
        for i in 0..n {
            let mut s = x.get(i, c);
            for k in 0..i {
                s -= l.get(i, k) * x.get(k, c);
            }
            x.set(i, c, s / l.get(i, i));
        }
        for i in (0..n).rev() {
            let mut s = x.get(i, c);
            for k in (i + 1)..n {
                s -= l.get(k, i) * x.get(k, c);
            }
            x.set(i, c, s / l.get(i, i));
        }
    }
    x
}

/// Inverse of a symmetric positive definite matrix, symmetrized.
pub fn spd_inverse(m: &Matrix) -> Result<Matrix> {
    let l = cholesky(m)?;
    Ok(cholesky_solve(&l, &Matrix::identity(m.rows())).symmetrize())
}

/// ln det of a symmetric positive definite matrix.
pub fn logdet(m: &Matrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::dim(format!(
            "logdet needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let asym = m.asymmetry();
    if asym > 1e-9 {
        return Err(Error::Asymmetric { asymmetry: asym });
    }
    let l = cholesky(m)?;
    Ok(2.0 * l.diag().iter().map(|v| v.ln()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn solve_examples() {
        let b = Matrix::column(&[3.0, -1.0]);
        assert_eq!(solve_linear(&Matrix::identity(2), &b).unwrap(), b);
        let x = solve_linear(&m(&[&[2.0, 0.0], &[0.0, 4.0]]), &Matrix::column(&[2.0, 8.0])).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 2.0]);
        let x = solve_linear(&m(&[&[1.0, 1.0], &[0.0, 1.0]]), &Matrix::column(&[3.0, 1.0])).unwrap();
        assert_eq!(x.as_slice(), &[2.0, 1.0]);
    }

    #[test]
    fn singular_solve_reports_condition() {
        let a = m(&[&[1.0, 2.0], &[2.0, 4.0]]);
        match solve_linear(&a, &Matrix::column(&[1.0, 1.0])) {
            Err(Error::Singular { condition }) => assert!(condition > MAX_CONDITION),
            other => panic!("expected singular error, got {other:?}"),
        }
        let near = m(&[&[1.0, 1.0], &[1.0, 1.0 + 1e-14]]);
        assert!(matches!(
            solve_linear(&near, &Matrix::column(&[1.0, 1.0])),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn solve_residual_is_small_on_pivoting_case() {
        let a = m(&[&[1e-8, 1.0, 2.0], &[1.0, 3.0, -1.0], &[4.0, 0.5, 2.0]]);
        let b = m(&[&[1.0, 0.0], &[2.0, 1.0], &[-3.0, 5.0]]);
        let x = solve_linear(&a, &b).unwrap();
        let r = (&(&a * &x) - &b).frobenius_norm();
        assert!(r <= 1e-9 * (a.frobenius_norm() * x.frobenius_norm() + b.frobenius_norm()));
    }

    #[test]
    fn determinant_and_inverse() {
        let a = m(&[&[0.0, 2.0], &[3.0, 1.0]]);
        let lu = Lu::new(&a).unwrap();
        assert!((lu.det() + 6.0).abs() < 1e-14);
        let inv = inverse(&a).unwrap();
        let prod = &a * &inv;
        assert!((&prod - &Matrix::identity(2)).max_abs() < 1e-14);
        assert_eq!(Lu::new(&Matrix::zeros(2, 2)).unwrap().ln_abs_det(), f64::NEG_INFINITY);
    }

    #[test]
    fn logdet_examples() {
        assert_eq!(logdet(&Matrix::identity(5)).unwrap(), 0.0);
        let e = std::f64::consts::E;
        assert!((logdet(&Matrix::from_diag(&[e, e * e])).unwrap() - 3.0).abs() < 1e-14);
        assert!((logdet(&m(&[&[2.0, 1.0], &[1.0, 2.0]])).unwrap() - 3f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn logdet_rejects_indefinite_and_asymmetric() {
        assert!(matches!(
            logdet(&Matrix::from_diag(&[1.0, -1.0])),
            Err(Error::NotPositiveDefinite(_))
        ));
        assert!(matches!(
            logdet(&m(&[&[1.0, 1.0], &[0.0, 1.0]])),
            Err(Error::Asymmetric { .. })
        ));
    }

    #[test]
    fn spd_inverse_matches_lu_inverse() {
        let a = m(&[&[4.0, 1.0, 0.5], &[1.0, 3.0, 0.2], &[0.5, 0.2, 2.0]]);
        let d = &spd_inverse(&a).unwrap() - &inverse(&a).unwrap();
        assert!(d.max_abs() < 1e-14);
    }
}
