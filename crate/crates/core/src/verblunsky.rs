//! Block-Toeplitz SPD matrices as `(P_0, Ω_1, …, Ω_{p−1}) ∈ SPD_d × SD_d^{p−1}`.
//!
//! Block index `i` of the augmented matrix is read as time `t + iτ`, so for
//! level `l` the forward-prediction row is `A = (Γ_l, …, Γ_1)` and the
//! backward one is `B = (Γ_1ᵀ, …, Γ_lᵀ)`, both against the leading `l·d`
//! block-Toeplitz submatrix `Γ̃`:
//!
//! ```text
//! L_l = Γ_0 − A Γ̃⁻¹ Aᵀ      K_l = Γ_0 − B Γ̃⁻¹ Bᵀ      M_l = A Γ̃⁻¹ Bᵀ
//! Ω_{l+1} = L_l^{−1/2} (Γ_{l+1} − M_l) K_l^{−1/2}
//! ```

use nalgebra::{Cholesky, DMatrix};

use crate::acm::{AugmentedCovariance, LaggedBlocks};
use crate::error::{Error, Result};
use crate::matfun::{check_positive, sym_eig, SymMatrix};
use crate::siegel::{siegel_margin, SiegelPoint};
use crate::spd::SpdPoint;

/// Condition number of `Γ̃` above which a level is rejected.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct BTDecomposition {
    pub p0: SpdPoint,
    pub omegas: Vec<SiegelPoint>,
    pub d: usize,
    pub p: usize,
    pub tau: usize,
}

/// Forward residual `L`, backward residual `K` and cross term `M` at one level.
#[derive(Debug, Clone)]
pub struct SchurTerms {
    pub l: SymMatrix,
    pub k: SymMatrix,
    pub m: DMatrix<f64>,
}

fn level_check(blocks: &LaggedBlocks, l: usize) -> Result<()> {
    if l >= blocks.p() {
        return Err(Error::InvalidInput(format!(
            "level {l} out of range for p = {}",
            blocks.p()
        )));
    }
    Ok(())
}

pub fn schur_terms(blocks: &LaggedBlocks, l: usize) -> Result<SchurTerms> {
    level_check(blocks, l)?;
    let d = blocks.d;
    let g = &blocks.blocks;
    if l == 0 {
        let g0 = SymMatrix::new(g[0].clone())?;
        return Ok(SchurTerms {
            l: g0.clone(),
            k: g0,
            m: DMatrix::zeros(d, d),
        });
    }
    let sub = SymMatrix::new(blocks.assemble(l))?;
    let eig = sym_eig(&sub)?;
    let (lo, hi) = (eig.min_eigenvalue(), eig.max_eigenvalue());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition > MAX_CONDITION {
        return Err(Error::IllConditioned { level: l, condition });
    }
    let chol = Cholesky::new(sub.into_inner()).ok_or(Error::IllConditioned {
        level: l,
        condition: f64::INFINITY,
    })?;

    let mut a = DMatrix::zeros(d, l * d);
    let mut b = DMatrix::zeros(d, l * d);
    for j in 0..l {
        a.view_mut((0, j * d), (d, d)).copy_from(&g[l - j]);
        b.view_mut((0, j * d), (d, d)).copy_from(&g[j + 1].transpose());
    }
    let sa = chol.solve(&a.transpose());
    let sb = chol.solve(&b.transpose());
    Ok(SchurTerms {
        l: SymMatrix::new(&g[0] - &a * &sa)?,
        k: SymMatrix::new(&g[0] - &b * &sb)?,
        m: &a * sb,
    })
}

fn inv_sqrt(m: &SymMatrix, level: usize) -> Result<DMatrix<f64>> {
    let eig = sym_eig(m)?;
    if check_positive(&eig).is_err() {
        return Err(Error::DecompositionError {
            level,
            margin: eig.min_eigenvalue(),
        });
    }
    Ok(eig.map(|x| 1.0 / x.sqrt()).into_inner())
}

fn finish(blocks: &LaggedBlocks, omegas: Vec<DMatrix<f64>>) -> Result<BTDecomposition> {
    let p0 = SpdPoint::from_matrix(blocks.blocks[0].clone())?;
    let omegas = omegas
        .into_iter()
        .enumerate()
        .map(|(i, w)| {
            let margin = siegel_margin(&w);
            if margin > 0.0 {
                Ok(SiegelPoint::new_unchecked(w))
            } else {
                Err(Error::DecompositionError { level: i + 1, margin })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BTDecomposition {
        p0,
        omegas,
        d: blocks.d,
        p: blocks.p(),
        tau: blocks.tau,
    })
}

/// Reference decomposition: every level solved independently by dense factorization.
pub fn verblunsky_decompose(blocks: &LaggedBlocks) -> Result<BTDecomposition> {
    let mut omegas = Vec::with_capacity(blocks.p().saturating_sub(1));
    for l in 0..blocks.p().saturating_sub(1) {
        let t = schur_terms(blocks, l)?;
        let lf = inv_sqrt(&t.l, l + 1)?;
        let kb = inv_sqrt(&t.k, l + 1)?;
        omegas.push(lf * (&blocks.blocks[l + 1] - t.m) * kb);
    }
    finish(blocks, omegas)
}

/// Whittle's block Levinson recursion; `O(p²d³)` instead of `O(p⁴d³)`.
pub fn verblunsky_decompose_fast(blocks: &LaggedBlocks) -> Result<BTDecomposition> {
    let g = &blocks.blocks;
    let p = blocks.p();
    let mut vf = SymMatrix::new(g[0].clone())?;
    let mut vb = vf.clone();
    // forward predictor x(t) ≈ Σ a[j−1]·x(t − j); backward x(t − m) ≈ Σ b[j−1]·x(t − m + j)
    let mut a: Vec<DMatrix<f64>> = Vec::with_capacity(p);
    let mut b: Vec<DMatrix<f64>> = Vec::with_capacity(p);
    let mut omegas = Vec::with_capacity(p.saturating_sub(1));
    for m in 1..p {
        let mut delta = g[m].clone();
        for j in 1..m {
            delta -= &a[j - 1] * &g[m - j];
        }
        let vf_eig = sym_eig(&vf)?;
        let vb_eig = sym_eig(&vb)?;
        for eig in [&vf_eig, &vb_eig] {
            if check_positive(eig).is_err() {
                return Err(Error::DecompositionError {
                    level: m,
                    margin: eig.min_eigenvalue(),
                });
            }
        }
        let vf_is = vf_eig.map(|x| 1.0 / x.sqrt()).into_inner();
        let vb_is = vb_eig.map(|x| 1.0 / x.sqrt()).into_inner();
        omegas.push(&vf_is * &delta * &vb_is);
        if m + 1 == p {
            break;
        }
        let vf_inv = &vf_is * &vf_is;
        let vb_inv = &vb_is * &vb_is;
        let am = &delta * &vb_inv;
        let bm = delta.transpose() * &vf_inv;
        let new_a: Vec<_> = (1..m).map(|j| &a[j - 1] - &am * &b[m - j - 1]).collect();
        let new_b: Vec<_> = (1..m).map(|j| &b[j - 1] - &bm * &a[m - j - 1]).collect();
        a = new_a;
        b = new_b;
        a.push(am.clone());
        b.push(bm.clone());
        vf = SymMatrix::new(vf.as_matrix() - &am * delta.transpose())?;
        vb = SymMatrix::new(vb.as_matrix() - &bm * &delta)?;
    }
    finish(blocks, omegas)
}

/// `−log det(Γ_Aug) − log(πe)`.
pub fn kahler_potential(acm: &AugmentedCovariance) -> Result<f64> {
    kahler_potential_of(&acm.matrix)
}

pub fn kahler_potential_of(m: &SymMatrix) -> Result<f64> {
    let eig = sym_eig(m)?;
    check_positive(&eig)?;
    let logdet: f64 = eig.eigenvalues.iter().map(|l| l.ln()).sum();
    Ok(-logdet - (std::f64::consts::PI * std::f64::consts::E).ln())
}
