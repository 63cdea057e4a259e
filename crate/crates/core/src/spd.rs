//! Affine-invariant geometry on symmetric positive definite matrices.

use nalgebra::{Cholesky, DMatrix};

use crate::error::{Error, Result};
use crate::matfun::{spd_fn, sym_eig, SpdFn, SymMatrix};

/// A symmetric positive definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdPoint(SymMatrix);

impl SpdPoint {
    pub fn new(m: SymMatrix) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::InvalidInput("SPD point has non-finite entries".into()));
        }
        if Cholesky::new(m.as_matrix().clone()).is_none() {
            let lmin = sym_eig(&m)?.min_eigenvalue();
            return Err(Error::NotPositiveDefinite { min_eigenvalue: lmin });
        }
        Ok(Self(m))
    }

    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        Self::new(SymMatrix::new(m)?)
    }

    pub fn identity(n: usize) -> Self {
        Self(SymMatrix::identity(n))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn as_sym(&self) -> &SymMatrix {
        &self.0
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        self.0.as_matrix()
    }
}

/// A symmetric tangent vector attached to a base point.
#[derive(Debug, Clone)]
pub struct SpdTangent {
    pub base: SpdPoint,
    pub v: SymMatrix,
}

fn same_dim(a: &SpdPoint, b: &SpdPoint) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeError(format!("SPD dimensions differ: {} vs {}", a.dim(), b.dim())));
    }
    Ok(())
}

fn congruence(w: &SymMatrix, m: &DMatrix<f64>) -> Result<SymMatrix> {
    SymMatrix::new(w.as_matrix() * m * w.as_matrix())
}

/// Precomputed square root and inverse square root of a base point.
#[derive(Debug, Clone)]
pub struct Whitener {
    base: SpdPoint,
    sqrt: SymMatrix,
    inv_sqrt: SymMatrix,
}

impl Whitener {
    pub fn new(base: &SpdPoint) -> Result<Self> {
        let eig = sym_eig(base.as_sym())?;
        crate::matfun::check_positive(&eig)?;
        Ok(Self {
            base: base.clone(),
            sqrt: eig.map(f64::sqrt),
            inv_sqrt: eig.map(|x| 1.0 / x.sqrt()),
        })
    }

    pub fn base(&self) -> &SpdPoint {
        &self.base
    }

    /// `base^{−1/2} · p · base^{−1/2}`.
    pub fn whiten(&self, p: &SpdPoint) -> Result<SymMatrix> {
        same_dim(&self.base, p)?;
        congruence(&self.inv_sqrt, p.as_matrix())
    }

    /// `logm(base^{−1/2} · p · base^{−1/2})`.
    pub fn whitened_log(&self, p: &SpdPoint) -> Result<SymMatrix> {
        spd_fn(&self.whiten(p)?, SpdFn::Log)
    }

    /// Tangent coordinates at the base, isometric to the affine-invariant metric.
    pub fn tangent_vector(&self, p: &SpdPoint) -> Result<Vec<f64>> {
        Ok(vectorize_upper(&self.whitened_log(p)?))
    }

    pub fn log(&self, p: &SpdPoint) -> Result<SpdTangent> {
        let w = self.whitened_log(p)?;
        Ok(SpdTangent {
            base: self.base.clone(),
            v: congruence(&self.sqrt, w.as_matrix())?,
        })
    }

    pub fn exp(&self, v: &SymMatrix) -> Result<SpdPoint> {
        let inner = congruence(&self.inv_sqrt, v.as_matrix())?;
        let e = spd_fn(&inner, SpdFn::Exp)?;
        SpdPoint::new(congruence(&self.sqrt, e.as_matrix())?)
    }
}

/// Upper triangle in row-major order with off-diagonal entries scaled by √2.
pub fn vectorize_upper(w: &SymMatrix) -> Vec<f64> {
    let n = w.dim();
    let m = w.as_matrix();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        out.push(m[(i, i)]);
        for j in (i + 1)..n {
            out.push(std::f64::consts::SQRT_2 * m[(i, j)]);
        }
    }
    out
}

pub fn spd_distance(a: &SpdPoint, b: &SpdPoint) -> Result<f64> {
    same_dim(a, b)?;
    let w = Whitener::new(a)?.whiten(b)?;
    let eig = sym_eig(&w)?;
    crate::matfun::check_positive(&eig)?;
    Ok(eig.eigenvalues.iter().map(|l| l.ln().powi(2)).sum::<f64>().sqrt())
}

pub fn spd_log(base: &SpdPoint, p: &SpdPoint) -> Result<SpdTangent> {
    Whitener::new(base)?.log(p)
}

pub fn spd_exp(t: &SpdTangent) -> Result<SpdPoint> {
    if t.v.dim() != t.base.dim() {
        return Err(Error::ShapeError("tangent and base dimensions differ".into()));
    }
    Whitener::new(&t.base)?.exp(&t.v)
}

pub fn spd_tangent_vector(base: &SpdPoint, p: &SpdPoint) -> Result<Vec<f64>> {
    Whitener::new(base)?.tangent_vector(p)
}

pub const FRECHET_MAX_ITER: usize = 50;

/// Karcher mean by fixed-point iteration, started at the arithmetic mean.
pub fn frechet_mean(points: &[SpdPoint]) -> Result<SpdPoint> {
    let first = points.first().ok_or_else(|| Error::InvalidInput("Fréchet mean of no points".into()))?;
    let n = first.dim();
    for p in points {
        same_dim(first, p)?;
    }
    if points.len() == 1 {
        return Ok(first.clone());
    }
    let mut sum = DMatrix::zeros(n, n);
    for p in points {
        sum += p.as_matrix();
    }
    let mut mean = SpdPoint::from_matrix(sum / points.len() as f64)?;
    let tol = 1e-7 * n as f64;
    let mut residual = f64::INFINITY;
    for _ in 0..FRECHET_MAX_ITER {
        let w = Whitener::new(&mean)?;
        let mut acc = DMatrix::zeros(n, n);
        for p in points {
            acc += w.whitened_log(p)?.as_matrix();
        }
        let step = SymMatrix::new(acc / points.len() as f64)?;
        residual = step.as_matrix().norm();
        if residual <= tol {
            return Ok(mean);
        }
        let e = spd_fn(&step, SpdFn::Exp)?;
        mean = SpdPoint::new(congruence(&w.sqrt, e.as_matrix())?)?;
    }
    Err(Error::ConvergenceError {
        iterations: FRECHET_MAX_ITER,
        residual,
    })
}
