//! Real Siegel disk `{W : I − W·Wᵀ ≻ 0}`.
//!
//! Every computation is reduced to the origin through the Möbius isometry
//! `T_ψ`, where the metric is the Frobenius form and geodesics are
//! `U·diag(tanh(t·s))·Vᵀ`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matfun::{svd, sym_eig, SymMatrix};

/// Singular values are clamped to this before `artanh`.
pub const SIGMA_CLAMP: f64 = 1.0 - 1e-12;

/// `λ_min(I − w·wᵀ)`; NaN for non-square or non-finite input.
pub fn siegel_margin(w: &DMatrix<f64>) -> f64 {
    if !w.is_square() || w.nrows() == 0 || w.iter().any(|x| !x.is_finite()) {
        return f64::NAN;
    }
    let n = w.nrows();
    let g = DMatrix::identity(n, n) - w * w.transpose();
    match SymMatrix::new(g).and_then(|g| sym_eig(&g)) {
        Ok(eig) => eig.min_eigenvalue(),
        Err(_) => f64::NAN,
    }
}

/// An interior point of the Siegel disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SiegelPoint(DMatrix<f64>);

impl SiegelPoint {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        if !w.is_square() || w.nrows() == 0 {
            return Err(Error::ShapeError(format!(
                "Siegel point must be square, got {}x{}",
                w.nrows(),
                w.ncols()
            )));
        }
        let margin = siegel_margin(&w);
        if margin.is_nan() {
            return Err(Error::InvalidInput("Siegel point has non-finite entries".into()));
        }
        if margin <= 0.0 {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: margin });
        }
        Ok(Self(w))
    }

    /// Caller guarantees `siegel_margin(&w) > 0`.
    pub(crate) fn new_unchecked(w: DMatrix<f64>) -> Self {
        Self(w)
    }

    pub fn zero(d: usize) -> Self {
        Self(DMatrix::zeros(d, d))
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

    pub fn margin(&self) -> f64 {
        siegel_margin(&self.0)
    }

    fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }
}

/// A tangent vector attached to a Siegel point.
#[derive(Debug, Clone)]
pub struct SiegelTangent {
    pub base: SiegelPoint,
    pub v: DMatrix<f64>,
}

/// Counts how often singular values had to be clamped below 1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClampDiagnostics {
    pub clamped: usize,
}

fn same_dim(a: &SiegelPoint, b: &SiegelPoint) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeError(format!(
            "Siegel dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

fn sym_power(m: DMatrix<f64>, exponent: f64) -> Result<DMatrix<f64>> {
    let eig = sym_eig(&SymMatrix::new(m)?)?;
    crate::matfun::check_positive(&eig)?;
    Ok(eig.map(|x| x.powf(exponent)).into_inner())
}

/// The isometry `T_ψ` with its square-root factors precomputed.
#[derive(Debug, Clone)]
pub struct Mobius {
    psi: SiegelPoint,
    /// `(I − ψψᵀ)^{−1/2}`
    left: DMatrix<f64>,
    /// `(I − ψᵀψ)^{1/2}`
    right: DMatrix<f64>,
}

impl Mobius {
    pub fn new(psi: &SiegelPoint) -> Result<Self> {
        let n = psi.dim();
        let p = psi.as_matrix();
        let id = DMatrix::<f64>::identity(n, n);
        Ok(Self {
            psi: psi.clone(),
            left: sym_power(&id - p * p.transpose(), -0.5)?,
            right: sym_power(&id - p.transpose() * p, 0.5)?,
        })
    }

    pub fn psi(&self) -> &SiegelPoint {
        &self.psi
    }

    /// `T_ψ(w) = (I − ψψᵀ)^{−1/2} (w − ψ) (I − ψᵀw)^{−1} (I − ψᵀψ)^{1/2}`.
    pub fn apply(&self, w: &SiegelPoint) -> Result<SiegelPoint> {
        same_dim(&self.psi, w)?;
        if self.psi.is_zero() {
            return Ok(w.clone());
        }
        SiegelPoint::new(self.apply_raw(w.as_matrix())?)
    }

    fn apply_raw(&self, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = w.nrows();
        let p = self.psi.as_matrix();
        let denom = DMatrix::<f64>::identity(n, n) - p.transpose() * w;
        // X · denom = (w − ψ)  ⇔  denomᵀ · Xᵀ = (w − ψ)ᵀ
        let x_t = denom
            .transpose()
            .lu()
            .solve(&(w - p).transpose())
            .ok_or_else(|| Error::NumericalError("I − ψᵀw is singular".into()))?;
        Ok(&self.left * x_t.transpose() * &self.right)
    }
}

pub fn mobius_to_origin(psi: &SiegelPoint, w: &SiegelPoint) -> Result<SiegelPoint> {
    Mobius::new(psi)?.apply(w)
}

/// Inverse isometry `T_ψ⁻¹ = T_{−ψ}`.
pub fn mobius_from_origin(psi: &SiegelPoint, z: &SiegelPoint) -> Result<SiegelPoint> {
    let neg = SiegelPoint(-psi.as_matrix());
    Mobius::new(&neg)?.apply(z)
}

fn clamped_artanh(sigma: f64, diag: &mut ClampDiagnostics) -> f64 {
    if sigma > SIGMA_CLAMP {
        diag.clamped += 1;
        SIGMA_CLAMP.atanh()
    } else {
        sigma.atanh()
    }
}

/// Origin log map, counting clamped singular values into `diag`.
pub fn siegel_log0_with(w: &SiegelPoint, diag: &mut ClampDiagnostics) -> Result<DMatrix<f64>> {
    let s = svd(w.as_matrix())?;
    let mut out = s.u.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= clamped_artanh(s.sigma[j], diag);
    }
    Ok(out * s.v.transpose())
}

/// Origin log map `U·diag(artanh σ)·Vᵀ`.
pub fn siegel_log0(w: &SiegelPoint) -> Result<SiegelTangent> {
    let v = siegel_log0_with(w, &mut ClampDiagnostics::default())?;
    Ok(SiegelTangent {
        base: SiegelPoint::zero(w.dim()),
        v,
    })
}

/// Origin exponential map `U·diag(tanh s)·Vᵀ`.
pub fn siegel_exp0(v: &DMatrix<f64>) -> Result<SiegelPoint> {
    let s = svd(v)?;
    SiegelPoint::new(s.reconstruct_with(f64::tanh))
}

pub fn siegel_log(base: &SiegelPoint, w: &SiegelPoint) -> Result<SiegelTangent> {
    same_dim(base, w)?;
    if base.is_zero() {
        return siegel_log0(w);
    }
    let n = base.dim();
    let p = base.as_matrix();
    let id = DMatrix::<f64>::identity(n, n);
    let z = mobius_to_origin(base, w)?;
    let v0 = siegel_log0(&z)?.v;
    let left = sym_power(&id - p * p.transpose(), 0.5)?;
    let right = sym_power(&id - p.transpose() * p, 0.5)?;
    Ok(SiegelTangent {
        base: base.clone(),
        v: left * v0 * right,
    })
}

pub fn siegel_exp(t: &SiegelTangent) -> Result<SiegelPoint> {
    let n = t.base.dim();
    if t.v.shape() != (n, n) {
        return Err(Error::ShapeError("tangent and base dimensions differ".into()));
    }
    if t.base.is_zero() {
        return siegel_exp0(&t.v);
    }
    let p = t.base.as_matrix();
    let id = DMatrix::<f64>::identity(n, n);
    let left = sym_power(&id - p * p.transpose(), -0.5)?;
    let right = sym_power(&id - p.transpose() * p, -0.5)?;
    let z = siegel_exp0(&(left * &t.v * right))?;
    mobius_from_origin(&t.base, &z)
}

pub fn siegel_distance(a: &SiegelPoint, b: &SiegelPoint) -> Result<f64> {
    let z = mobius_to_origin(a, b)?;
    let s = svd(z.as_matrix())?;
    let mut diag = ClampDiagnostics::default();
    Ok(s.sigma
        .iter()
        .map(|&x| clamped_artanh(x, &mut diag).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Row-major flattening of `log0(T_base(w))`.
pub fn siegel_tangent_vector(base: &SiegelPoint, w: &SiegelPoint) -> Result<Vec<f64>> {
    siegel_tangent_vector_with(base, w, &mut ClampDiagnostics::default())
}

pub fn siegel_tangent_vector_with(
    base: &SiegelPoint,
    w: &SiegelPoint,
    diag: &mut ClampDiagnostics,
) -> Result<Vec<f64>> {
    let z = mobius_to_origin(base, w)?;
    let v = siegel_log0_with(&z, diag)?;
    Ok(flatten_row_major(&v))
}

pub fn flatten_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        out.extend(m.row(i).iter().copied());
    }
    out
}
