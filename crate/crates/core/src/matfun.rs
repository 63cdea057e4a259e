//! Spectral functions of dense symmetric matrices, plus a sorted SVD.
//!
//! The decompositions themselves come from `nalgebra`; this module pins the
//! ordering and sign conventions so that everything downstream is
//! deterministic, and enforces the positive-definiteness threshold used by
//! the matrix square root and logarithm.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative eigenvalue floor below which a matrix is treated as singular.
pub const EPS_PD: f64 = 1e-12;

/// A real symmetric matrix. Construction symmetrizes the input as `(A + Aᵀ)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::ShapeError(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self(symmetrize(m)))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Exact symmetrization `(A + Aᵀ)/2`; the result satisfies `m[(i,j)] == m[(j,i)]` bit for bit.
pub fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Eigen-decomposition with ascending eigenvalues and orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    /// `V · diag(f(λ)) · Vᵀ`, symmetrized.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.eigenvalues[j]);
        }
        SymMatrix(symmetrize(scaled * v.transpose()))
    }
}

fn ensure_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput("matrix has non-finite entries".into()))
    }
}

/// Flip each column so its first non-negligible component is positive.
fn fix_signs(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let scale = col.amax();
        if let Some(first) = col.iter().copied().find(|x| x.abs() > 1e-12 * scale.max(1e-300)) {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
}

pub fn sym_eig(m: &SymMatrix) -> Result<SpectralDecomposition> {
    ensure_finite(&m.0)?;
    let n = m.dim();
    if n == 0 {
        return Err(Error::ShapeError("empty matrix".into()));
    }
    let eig = m.0.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    fix_signs(&mut eigenvectors);
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Scalar functions that can be lifted to symmetric matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpdFn {
    Sqrt,
    InvSqrt,
    Log,
    Exp,
}

impl SpdFn {
    fn apply(self, x: f64) -> f64 {
        match self {
            SpdFn::Sqrt => x.sqrt(),
            SpdFn::InvSqrt => 1.0 / x.sqrt(),
            SpdFn::Log => x.ln(),
            SpdFn::Exp => x.exp(),
        }
    }

    fn needs_positive(self) -> bool {
        !matches!(self, SpdFn::Exp)
    }
}

/// Positive-definiteness check against `EPS_PD · max(1, λ_max)`.
pub fn check_positive(eig: &SpectralDecomposition) -> Result<()> {
    let lmin = eig.min_eigenvalue();
    if lmin <= EPS_PD * eig.max_eigenvalue().max(1.0) {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: lmin,
        });
    }
    Ok(())
}

pub fn spd_fn(m: &SymMatrix, f: SpdFn) -> Result<SymMatrix> {
    let eig = sym_eig(m)?;
    if f.needs_positive() {
        check_positive(&eig)?;
    }
    Ok(eig.map(|x| f.apply(x)))
}

/// Singular value decomposition `M = U · diag(σ) · Vᵀ` with σ descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl Svd {
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, mut col) in us.column_iter_mut().enumerate() {
            col *= f(self.sigma[j]);
        }
        us * self.v.transpose()
    }
}

pub fn svd(m: &DMatrix<f64>) -> Result<Svd> {
    ensure_finite(m)?;
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::ShapeError(format!(
            "svd expects a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    let dec = m.clone().svd(true, true);
    let (u, v_t) = match (dec.u, dec.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::NumericalError("svd did not produce singular vectors".into())),
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| dec.singular_values[b].total_cmp(&dec.singular_values[a]));
    let sigma = DVector::from_iterator(n, order.iter().map(|&i| dec.singular_values[i]));
    let mut su = DMatrix::zeros(n, n);
    let mut sv = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        su.set_column(dst, &u.column(src));
        sv.set_column(dst, &v_t.row(src).transpose());
    }
    Ok(Svd { u: su, sigma, v: sv })
}

/// Relative Frobenius distance `‖a − b‖ / max(‖b‖, tiny)`.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> SymMatrix {
        let a = random_matrix(rng, n);
        SymMatrix::new(&a * a.transpose() + DMatrix::identity(n, n) * 0.1).unwrap()
    }

    #[test]
    fn construction_symmetrizes_exactly() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let s = SymMatrix::new(m).unwrap();
        assert_eq!(s.as_matrix()[(0, 1)], 2.5);
        assert_eq!(s.as_matrix()[(0, 1)], s.as_matrix()[(1, 0)]);
        assert!(SymMatrix::new(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let e = sym_eig(&SymMatrix::identity(2)).unwrap();
        assert_eq!(e.eigenvalues.as_slice(), &[1.0, 1.0]);
        assert!((e.eigenvectors.clone() - DMatrix::identity(2, 2)).norm() < 1e-15);

        let e = sym_eig(&SymMatrix::from_diagonal(&[3.0, 1.0])).unwrap();
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-15);
        assert!((e.eigenvalues[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn eig_two_by_two_hand_solution() {
        let m = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        let e = sym_eig(&m).unwrap();
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!((e.eigenvalues[1] - 3.0).abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v0 = e.eigenvectors.column(0);
        let v1 = e.eigenvectors.column(1);
        assert!((v0[0] - h).abs() < 1e-12 && (v0[1] + h).abs() < 1e-12);
        assert!((v1[0] - h).abs() < 1e-12 && (v1[1] - h).abs() < 1e-12);
    }

    #[test]
    fn eig_rejects_non_finite() {
        let m = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[f64::NAN, 0.0, 0.0, 1.0])).unwrap();
        assert!(matches!(sym_eig(&m), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn eig_reconstruction_orthogonality_and_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1, 2, 5, 12] {
            let a = random_matrix(&mut rng, n);
            let m = SymMatrix::new(&a + a.transpose()).unwrap();
            let e = sym_eig(&m).unwrap();
            let rec = e.map(|x| x);
            assert!(rel_frobenius(rec.as_matrix(), m.as_matrix()) <= 1e-10);
            let vtv = e.eigenvectors.transpose() * &e.eigenvectors;
            assert!((vtv - DMatrix::identity(n, n)).norm() <= 1e-10);
            let sum: f64 = e.eigenvalues.iter().sum();
            assert!((sum - m.trace()).abs() <= 1e-10 * m.trace().abs().max(1.0));
            for w in e.eigenvalues.as_slice().windows(2) {
                assert!(w[0] <= w[1]);
            }
        }
    }

    #[test]
    fn eig_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_spd(&mut rng, 6);
        let a = sym_eig(&m).unwrap();
        let b = sym_eig(&m).unwrap();
        assert_eq!(a.eigenvalues, b.eigenvalues);
        assert_eq!(a.eigenvectors, b.eigenvectors);
    }

    #[test]
    fn spd_fn_simple_cases() {
        let z = spd_fn(&SymMatrix::identity(3), SpdFn::Log).unwrap();
        assert!(z.as_matrix().norm() < 1e-15);
        let r = spd_fn(&SymMatrix::from_diagonal(&[4.0, 9.0]), SpdFn::Sqrt).unwrap();
        assert!((r.as_matrix() - DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]))).norm() < 1e-14);
    }

    #[test]
    fn spd_fn_rejects_singular() {
        let m = SymMatrix::from_diagonal(&[1.0, 0.0]);
        for f in [SpdFn::Sqrt, SpdFn::InvSqrt, SpdFn::Log] {
            assert!(matches!(spd_fn(&m, f), Err(Error::NotPositiveDefinite { .. })));
        }
        assert!(spd_fn(&m, SpdFn::Exp).is_ok());
        // below the relative floor
        let m = SymMatrix::from_diagonal(&[1e6, 1e-7]);
        assert!(spd_fn(&m, SpdFn::Log).is_err());
    }

    #[test]
    fn log_exp_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        for _ in 0..100 {
            let n = rng.random_range(1..7);
            let a = random_spd(&mut rng, n);
            let back = spd_fn(&spd_fn(&a, SpdFn::Log).unwrap(), SpdFn::Exp).unwrap();
            assert!(rel_frobenius(back.as_matrix(), a.as_matrix()) <= 1e-10);
        }
    }

    #[test]
    fn sqrt_squared_and_invsqrt_compose() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let a = random_spd(&mut rng, 5);
            let s = spd_fn(&a, SpdFn::Sqrt).unwrap();
            let sq = s.as_matrix() * s.as_matrix();
            assert!(rel_frobenius(&sq, a.as_matrix()) <= 1e-9);
            let is = spd_fn(&a, SpdFn::InvSqrt).unwrap();
            let id = is.as_matrix() * a.as_matrix() * is.as_matrix();
            assert!((id - DMatrix::identity(5, 5)).norm() <= 1e-9);
        }
    }

    #[test]
    fn svd_simple_cases() {
        let s = svd(&DMatrix::zeros(3, 3)).unwrap();
        assert!(s.sigma.iter().all(|&x| x == 0.0));
        let s = svd(&DMatrix::from_diagonal(&DVector::from_vec(vec![-2.0, 1.0]))).unwrap();
        assert!((s.sigma[0] - 2.0).abs() < 1e-15 && (s.sigma[1] - 1.0).abs() < 1e-15);
        let mut bad = DMatrix::zeros(2, 2);
        bad[(0, 0)] = f64::INFINITY;
        assert!(matches!(svd(&bad), Err(Error::InvalidInput(_))));
    }

    fn power_iteration_norm(m: &DMatrix<f64>, steps: usize) -> f64 {
        let mtm = m.transpose() * m;
        let mut v = DVector::from_element(m.ncols(), 1.0);
        for _ in 0..steps {
            v = &mtm * &v;
            v /= v.norm();
        }
        (m * v).norm()
    }

    #[test]
    fn svd_reconstruction_and_spectral_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for n in [3, 3, 4, 8] {
            let m = random_matrix(&mut rng, n);
            let s = svd(&m).unwrap();
            assert!(rel_frobenius(&s.reconstruct_with(|x| x), &m) <= 1e-10);
            assert!((s.u.transpose() * &s.u - DMatrix::identity(n, n)).norm() <= 1e-10);
            assert!((s.v.transpose() * &s.v - DMatrix::identity(n, n)).norm() <= 1e-10);
            for w in s.sigma.as_slice().windows(2) {
                assert!(w[0] >= w[1] && w[1] >= 0.0);
            }
            assert!((s.sigma[0] - power_iteration_norm(&m, 200)).abs() <= 1e-8);
        }
    }
}
