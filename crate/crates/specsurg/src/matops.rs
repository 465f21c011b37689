//! Dense complex-matrix helpers: Moore–Penrose inverse, kernel and range
//! projections, hermitian square roots, and inverses restricted to a subspace.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

/// Relative hermiticity threshold accepted by [`sqrt_pos`] and friends.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Numerical rank report.
#[derive(Debug, Clone, PartialEq)]
pub struct RankInfo {
    pub rank: usize,
    /// Nonincreasing.
    pub singular_values: Vec<f64>,
    pub tolerance_used: f64,
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn zeros(n: usize) -> CMat {
    CMat::zeros(n, n)
}

/// Diagonal matrix from real entries.
pub fn diag(d: &[f64]) -> CMat {
    let n = d.len();
    CMat::from_fn(n, n, |i, j| if i == j { c(d[i], 0.0) } else { C64::default() })
}

/// Row-major construction from complex entries.
pub fn from_rows(n: usize, entries: &[C64]) -> CMat {
    assert_eq!(entries.len(), n * n);
    CMat::from_row_slice(n, n, entries)
}

pub fn adjoint(m: &CMat) -> CMat {
    m.adjoint()
}

/// Largest singular value.
pub fn op_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    svd_sorted(m).1.first().copied().unwrap_or(0.0)
}

pub fn is_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn check_square_finite(m: &CMat, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::validation(format!(
            "{what}: matrix must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !is_finite(m) {
        return Err(Error::validation(format!("{what}: matrix has non-finite entries")));
    }
    Ok(())
}

/// SVD with singular values sorted nonincreasing: returns (U, s, V) with M = U diag(s) V†.
pub fn svd_sorted(m: &CMat) -> (CMat, Vec<f64>, CMat) {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    let s: Vec<f64> = svd.singular_values.iter().copied().collect();
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap_or(std::cmp::Ordering::Equal));
    let v = vt.adjoint();
    let mut us = CMat::zeros(u.nrows(), order.len());
    let mut vs = CMat::zeros(v.nrows(), order.len());
    let mut ss = Vec::with_capacity(order.len());
    for (dst, &src) in order.iter().enumerate() {
        us.set_column(dst, &u.column(src));
        vs.set_column(dst, &v.column(src));
        ss.push(s[src]);
    }
    (us, ss, vs)
}

/// Default rank tolerance `n · σ_max · 1e-12`, floored to stay positive.
pub fn default_tol(m: &CMat) -> f64 {
    let n = m.nrows().max(1) as f64;
    (n * op_norm(m) * 1e-12).max(f64::MIN_POSITIVE)
}

fn rank_of(s: &[f64], tol: f64) -> usize {
    s.iter().take_while(|&&v| v >= tol).count()
}

/// Moore–Penrose inverse by SVD; singular values below `tol` count as zero.
pub fn pinv(m: &CMat, tol: Option<f64>) -> Result<CMat> {
    check_square_finite(m, "pinv")?;
    let tol = tol.unwrap_or_else(|| default_tol(m));
    if tol <= 0.0 || !tol.is_finite() {
        return Err(Error::validation("pinv: tolerance must be positive"));
    }
    let (u, s, v) = svd_sorted(m);
    let r = rank_of(&s, tol);
    let mut out = CMat::zeros(m.ncols(), m.nrows());
    for i in 0..r {
        let vi = v.column(i);
        let ui = u.column(i);
        out += (vi * ui.adjoint()) * c(1.0 / s[i], 0.0);
    }
    Ok(out)
}

/// Residuals of the four Penrose equalities, in operator norm:
/// `MM⁺M − M`, `M⁺MM⁺ − M⁺`, `(MM⁺)† − MM⁺`, `(M⁺M)† − M⁺M`.
pub fn penrose_residuals(m: &CMat, mp: &CMat) -> [f64; 4] {
    let mmp = m * mp;
    let mpm = mp * m;
    [
        op_norm(&(&mmp * m - m)),
        op_norm(&(&mpm * mp - mp)),
        op_norm(&(mmp.adjoint() - &mmp)),
        op_norm(&(mpm.adjoint() - &mpm)),
    ]
}

/// Orthogonal projection onto `Ker M`.
pub fn kernel_projection(m: &CMat, tol: Option<f64>) -> Result<(CMat, RankInfo)> {
    check_square_finite(m, "kernel_projection")?;
    let tol = tol.unwrap_or_else(|| default_tol(m));
    let (_, s, v) = svd_sorted(m);
    let rank = rank_of(&s, tol);
    let basis = v.columns(rank, m.ncols() - rank).into_owned();
    let q = projection_from_basis(&basis, m.nrows());
    Ok((q, RankInfo { rank, singular_values: s, tolerance_used: tol }))
}

/// Orthogonal projection onto `Ran M` together with the rank.
pub fn range_projection(m: &CMat, tol: Option<f64>) -> Result<(CMat, usize)> {
    check_square_finite(m, "range_projection")?;
    let tol = tol.unwrap_or_else(|| default_tol(m));
    let (u, s, _) = svd_sorted(m);
    let rank = rank_of(&s, tol);
    let basis = u.columns(0, rank).into_owned();
    Ok((projection_from_basis(&basis, m.nrows()), rank))
}

fn projection_from_basis(basis: &CMat, n: usize) -> CMat {
    if basis.ncols() == 0 {
        return zeros(n);
    }
    let p = basis * basis.adjoint();
    hermitian_part(&p)
}

/// Orthonormal basis (as columns) of the range of an orthogonal projection.
pub fn projection_basis(p: &CMat) -> CMat {
    let n = p.nrows();
    let e = SymmetricEigen::new(hermitian_part(p));
    let cols: Vec<usize> = (0..n).filter(|&i| e.eigenvalues[i] > 0.5).collect();
    let mut out = CMat::zeros(n, cols.len());
    for (dst, &src) in cols.iter().enumerate() {
        out.set_column(dst, &e.eigenvectors.column(src));
    }
    out
}

/// Rank of an orthogonal projection (eigenvalues above 1/2).
pub fn projection_rank(p: &CMat) -> usize {
    projection_basis(p).ncols()
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5, 0.0)
}

/// `‖M − M†‖ / max(‖M‖, tiny)`.
pub fn hermiticity_defect(m: &CMat) -> f64 {
    let scale = op_norm(m).max(f64::MIN_POSITIVE);
    op_norm(&(m - m.adjoint())) / scale
}

fn checked_eigen(m: &CMat, what: &str) -> Result<SymmetricEigen<C64, nalgebra::Dyn>> {
    check_square_finite(m, what)?;
    let defect = hermiticity_defect(m);
    if defect > HERMITIAN_TOL {
        return Err(Error::validation(format!(
            "{what}: input is not hermitian (relative asymmetry {defect:.3e} > {HERMITIAN_TOL:e})"
        )));
    }
    let e = SymmetricEigen::new(hermitian_part(m));
    let min = e.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::validation(format!(
            "{what}: input is not positive definite (smallest eigenvalue {min:.3e})"
        )));
    }
    Ok(e)
}

fn eigen_fn(e: &SymmetricEigen<C64, nalgebra::Dyn>, f: impl Fn(f64) -> f64) -> CMat {
    let v = &e.eigenvectors;
    let d = CMat::from_diagonal(&e.eigenvalues.map(|l| c(f(l), 0.0)));
    hermitian_part(&(v * d * v.adjoint()))
}

/// Positive hermitian square root of a positive definite hermitian matrix.
pub fn sqrt_pos(m: &CMat) -> Result<CMat> {
    let e = checked_eigen(m, "sqrt_pos")?;
    Ok(eigen_fn(&e, f64::sqrt))
}

/// Positive hermitian square root of `M⁻¹`.
pub fn inv_sqrt_pos(m: &CMat) -> Result<CMat> {
    let e = checked_eigen(m, "inv_sqrt_pos")?;
    Ok(eigen_fn(&e, |l| 1.0 / l.sqrt()))
}

/// Positive square root of a nonnegative hermitian matrix (eigenvalues
/// clipped at zero), used for `C²`-type inputs that are only semidefinite.
pub fn sqrt_psd(m: &CMat) -> CMat {
    let e = SymmetricEigen::new(hermitian_part(m));
    eigen_fn(&e, |l| l.max(0.0).sqrt())
}

/// Derivative of the pseudoinverse of `W(x)` when `W' = −Φ†Φ`:
/// `[W⁺]' = W⁺ (Φ†Φ) W⁺`.
pub fn pinv_derivative(wplus: &CMat, integrand: &CMat) -> Result<CMat> {
    if wplus.shape() != integrand.shape() || wplus.nrows() != wplus.ncols() {
        return Err(Error::validation(format!(
            "pinv_derivative: dimension mismatch {:?} vs {:?}",
            wplus.shape(),
            integrand.shape()
        )));
    }
    Ok(wplus * integrand * wplus)
}

/// Inverse of `M` restricted to the span of the orthonormal columns of `u`:
/// `U (U†MU)⁻¹ U†`. Equals `M⁺` when `M = UU†MUU†` and the restriction is
/// invertible, independently of the overall scale of `M`.
pub fn restricted_inverse(m: &CMat, u: &CMat) -> Result<CMat> {
    let n = m.nrows();
    if u.ncols() == 0 {
        return Ok(zeros(n));
    }
    let small = u.adjoint() * m * u;
    let inv = small
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::numerical("restricted_inverse: restriction is singular"))?;
    Ok(u * inv * u.adjoint())
}

/// Condition number of `U†MU`.
pub fn restricted_condition(m: &CMat, u: &CMat) -> f64 {
    if u.ncols() == 0 {
        return 1.0;
    }
    let small = u.adjoint() * m * u;
    let (_, s, _) = svd_sorted(&small);
    let lo = *s.last().unwrap();
    if lo == 0.0 {
        f64::INFINITY
    } else {
        s[0] / lo
    }
}

/// Smallest singular value.
pub fn sigma_min(m: &CMat) -> f64 {
    svd_sorted(m).1.last().copied().unwrap_or(0.0)
}

/// Condition number in the 2-norm.
pub fn condition(m: &CMat) -> f64 {
    let (_, s, _) = svd_sorted(m);
    let lo = *s.last().unwrap_or(&0.0);
    if lo == 0.0 {
        f64::INFINITY
    } else {
        s[0] / lo
    }
}

/// Relative difference `‖a − b‖ / max(‖b‖, floor)`.
pub fn rel_diff(a: &CMat, b: &CMat, floor: f64) -> f64 {
    op_norm(&(a - b)) / op_norm(b).max(floor)
}

/// Smallest eigenvalue of a hermitian matrix.
pub fn min_eigenvalue(m: &CMat) -> f64 {
    let e = SymmetricEigen::new(hermitian_part(m));
    e.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Determinant.
pub fn det(m: &CMat) -> C64 {
    m.determinant()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rank1() -> CMat {
        let u = CMat::from_column_slice(2, 1, &[c(1.0, 2.0), c(-0.5, 0.25)]);
        let v = CMat::from_column_slice(2, 1, &[c(0.3, -1.0), c(2.0, 0.7)]);
        &u * v.adjoint()
    }

    #[test]
    fn pinv_identity_and_diag() {
        assert!(rel_diff(&pinv(&eye(2), None).unwrap(), &eye(2), 1.0) < 1e-15);
        let p = pinv(&diag(&[2.0, 0.0]), None).unwrap();
        assert!(rel_diff(&p, &diag(&[0.5, 0.0]), 1.0) < 1e-15);
    }

    #[test]
    fn pinv_rank_one_penrose() {
        let m = rank1();
        let mp = pinv(&m, None).unwrap();
        let tol = default_tol(&m);
        for r in penrose_residuals(&m, &mp) {
            assert!(r < 10.0 * tol.max(1e-13), "{r}");
        }
        assert!(op_norm(&(&m * &mp * &m - &m)) < 1e-12);
        let lhs = mp.adjoint();
        let rhs = pinv(&m.adjoint(), None).unwrap();
        assert!(op_norm(&(lhs - rhs)) < 1e-12);
    }

    #[test]
    fn pinv_rejects_bad_input() {
        assert!(pinv(&CMat::zeros(2, 3), None).is_err());
        let mut m = eye(2);
        m[(0, 0)] = c(f64::NAN, 0.0);
        assert!(pinv(&m, None).is_err());
    }

    #[test]
    fn kernel_projection_examples() {
        let (q, info) = kernel_projection(&zeros(1), None).unwrap();
        assert_eq!(info.rank, 0);
        assert!((q[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
        let (q, info) = kernel_projection(&diag(&[0.0, 1.0]), None).unwrap();
        assert_eq!(info.rank, 1);
        assert!(rel_diff(&q, &diag(&[1.0, 0.0]), 1.0) < 1e-15);
        let (q, info) = kernel_projection(&eye(3), None).unwrap();
        assert_eq!(info.rank, 3);
        assert!(op_norm(&q) < 1e-15);
    }

    #[test]
    fn kernel_projection_rank_one() {
        let m = rank1();
        let (q, info) = kernel_projection(&m, None).unwrap();
        assert_eq!(info.rank, 1);
        assert!(op_norm(&(&q * &q - &q)) < 1e-13);
        assert!(op_norm(&(q.adjoint() - &q)) < 1e-13);
        assert!(op_norm(&(&m * &q)) <= 10.0 * info.tolerance_used * op_norm(&m));
        assert!(info.singular_values[1] < info.tolerance_used);
        assert!(info.tolerance_used <= info.singular_values[0]);
    }

    #[test]
    fn sqrt_examples() {
        let r = sqrt_pos(&diag(&[4.0, 9.0])).unwrap();
        assert!(rel_diff(&r, &diag(&[2.0, 3.0]), 1.0) < 1e-14);
        assert!(rel_diff(&sqrt_pos(&eye(2)).unwrap(), &eye(2), 1.0) < 1e-15);
        let q = diag(&[1.0, 0.0]);
        let g = diag(&[4.0, 0.0]);
        let h = eye(2) - &q + &g;
        let hi = inv_sqrt_pos(&h).unwrap();
        assert!(rel_diff(&hi, &diag(&[0.5, 1.0]), 1.0) < 1e-14);
    }

    #[test]
    fn sqrt_rejects() {
        let mut m = eye(2);
        m[(0, 1)] = c(1.0, 0.0);
        assert!(sqrt_pos(&m).is_err());
        assert!(sqrt_pos(&diag(&[1.0, -1.0])).is_err());
        assert!(inv_sqrt_pos(&diag(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn pinv_derivative_examples() {
        let z = pinv_derivative(&zeros(2), &eye(2)).unwrap();
        assert!(op_norm(&z) == 0.0);
        let s = pinv_derivative(&diag(&[2.0]), &diag(&[3.0])).unwrap();
        assert!((s[(0, 0)] - c(12.0, 0.0)).norm() < 1e-15);
        assert!(pinv_derivative(&eye(2), &eye(3)).is_err());
    }

    #[test]
    fn pinv_derivative_matches_finite_differences() {
        // W(x) = Q e^{-2x} S Q with fixed hermitian S on a rank-1 subspace, so W' = -Φ†Φ
        // with Φ†Φ = 2 e^{-2x} Q S Q.
        let v = CMat::from_column_slice(2, 1, &[c(0.6, 0.0), c(0.0, 0.8)]);
        let q = &v * v.adjoint();
        let s = c(1.7, 0.0);
        let w = |x: f64| &q * (s * (-2.0 * x).exp());
        let x = 0.9;
        let h = 1e-5;
        let wp = pinv(&w(x), None).unwrap();
        let integrand = &q * (s * 2.0 * (-2.0 * x).exp());
        let analytic = pinv_derivative(&wp, &integrand).unwrap();
        let fd = (pinv(&w(x + h), None).unwrap() - pinv(&w(x - h), None).unwrap()) / c(2.0 * h, 0.0);
        assert!(rel_diff(&fd, &analytic, 1e-300) < 1e-6);
    }

    #[test]
    fn direct_sum_pinv() {
        let q = diag(&[0.0, 1.0, 1.0]);
        let mut m1 = zeros(3);
        m1[(1, 1)] = c(2.0, 0.0);
        m1[(1, 2)] = c(0.5, 0.5);
        m1[(2, 1)] = c(0.5, -0.5);
        m1[(2, 2)] = c(3.0, 0.0);
        let full = pinv(&m1, None).unwrap();
        let block = m1.view((1, 1), (2, 2)).into_owned().try_inverse().unwrap();
        let mut expect = zeros(3);
        expect.view_mut((1, 1), (2, 2)).copy_from(&block);
        assert!(rel_diff(&full, &expect, 1.0) < 1e-13);
        let r = restricted_inverse(&(&m1 * c(1e-30, 0.0)), &projection_basis(&q)).unwrap();
        assert!(rel_diff(&(r * c(1e-30, 0.0)), &expect, 1.0) < 1e-13);
    }

    #[test]
    fn range_projection_rank_one() {
        let m = rank1();
        let (p, r) = range_projection(&m, None).unwrap();
        assert_eq!(r, 1);
        assert!(op_norm(&(&p * &m - &m)) < 1e-13);
        assert_eq!(projection_rank(&p), 1);
    }
}
