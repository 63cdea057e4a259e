//! Augmented covariance matrices of delay-embedded epochs.
//!
//! Layout convention: block `(i, j)` of the `dp × dp` matrix is `Γ_{i−j}`, with
//! `Γ_k = (1/T) Σ_t x(t)·x(t − kτ)ᵀ` and `Γ_{−k} = Γ_kᵀ`.

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matfun::SymMatrix;
use crate::signal::{center, Epoch};

/// Embedding order `p` and delay `tau` (in samples).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EmbeddingParams {
    pub p: usize,
    pub tau: usize,
}

impl EmbeddingParams {
    pub fn new(p: usize, tau: usize) -> Result<Self> {
        if p < 1 || tau < 1 {
            return Err(Error::InvalidConfig(format!("p and tau must be >= 1, got p={p} tau={tau}")));
        }
        Ok(Self { p, tau })
    }

    /// Largest delay, `(p − 1)·tau`.
    pub fn span(&self) -> usize {
        (self.p - 1) * self.tau
    }

    pub fn check_len(&self, samples: usize) -> Result<()> {
        if self.span() >= samples {
            return Err(Error::EpochTooShort {
                needed: self.span(),
                got: samples,
            });
        }
        Ok(())
    }

    /// Number of embedded columns, `T − (p − 1)·tau`.
    pub fn embedded_len(&self, samples: usize) -> usize {
        samples - self.span()
    }
}

/// The distinct blocks `Γ_0 … Γ_{p−1}` of a block-Toeplitz matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedBlocks {
    pub blocks: Vec<DMatrix<f64>>,
    pub d: usize,
    pub tau: usize,
}

impl LaggedBlocks {
    pub fn new(blocks: Vec<DMatrix<f64>>, tau: usize) -> Result<Self> {
        let d = blocks.first().map(|b| b.nrows()).ok_or_else(|| Error::InvalidInput("no blocks".into()))?;
        if blocks.iter().any(|b| b.nrows() != d || b.ncols() != d) {
            return Err(Error::ShapeError(format!("all blocks must be {d}x{d}")));
        }
        if blocks.iter().any(|b| b.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidInput("blocks contain non-finite values".into()));
        }
        let g0 = &blocks[0];
        if (g0 - g0.transpose()).amax() > 1e-12 * g0.amax().max(1.0) {
            return Err(Error::InvalidInput("Γ_0 is not symmetric".into()));
        }
        Ok(Self { blocks, d, tau })
    }

    pub fn p(&self) -> usize {
        self.blocks.len()
    }

    /// Block-Toeplitz assembly of the first `n_blocks` lags.
    pub fn assemble(&self, n_blocks: usize) -> DMatrix<f64> {
        block_toeplitz(&self.blocks[..n_blocks])
    }
}

/// Block `(i, j)` is `blocks[i − j]` for `i ≥ j` and `blocks[j − i]ᵀ` otherwise.
pub fn block_toeplitz(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let p = blocks.len();
    let d = blocks.first().map_or(0, |b| b.nrows());
    let mut m = DMatrix::zeros(d * p, d * p);
    for i in 0..p {
        for j in 0..p {
            if i >= j {
                m.view_mut((i * d, j * d), (d, d)).copy_from(&blocks[i - j]);
            } else {
                m.view_mut((i * d, j * d), (d, d)).copy_from(&blocks[j - i].transpose());
            }
        }
    }
    m
}

/// How the augmented covariance is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AcmMode {
    /// Assemble from biased lagged covariances; exactly block-Toeplitz.
    #[default]
    Lagged,
    /// Covariance of the delay-embedded signal, projected onto block-Toeplitz form.
    Embed,
}

#[derive(Debug, Clone)]
pub struct AugmentedCovariance {
    pub matrix: SymMatrix,
    pub blocks: LaggedBlocks,
    pub shrinkage_rho: f64,
}

impl AugmentedCovariance {
    pub fn params(&self) -> EmbeddingParams {
        EmbeddingParams {
            p: self.blocks.p(),
            tau: self.blocks.tau,
        }
    }
}

/// Column `n` (for `n = (p−1)τ … T−1`) stacks `x(n), x(n − τ), …, x(n − (p−1)τ)`.
pub fn delay_embed(epoch: &Epoch, params: EmbeddingParams) -> Result<DMatrix<f64>> {
    let t = epoch.samples();
    params.check_len(t)?;
    let d = epoch.channels();
    let n = params.embedded_len(t);
    let x = epoch.data();
    let mut out = DMatrix::zeros(d * params.p, n);
    for k in 0..params.p {
        let start = params.span() - k * params.tau;
        out.view_mut((k * d, 0), (d, n)).copy_from(&x.columns(start, n));
    }
    Ok(out)
}

/// Biased lagged covariance `(1/T) Σ_{t=lag}^{T−1} x(t)·x(t − lag)ᵀ`.
pub fn lagged_cov(epoch: &Epoch, lag: usize) -> Result<DMatrix<f64>> {
    let t = epoch.samples();
    if lag >= t {
        return Err(Error::InvalidLag { lag, len: t });
    }
    let x = epoch.data();
    let n = t - lag;
    Ok(x.columns(lag, n) * x.columns(0, n).transpose() / t as f64)
}

fn oas_coefficient(dim: f64, n_samples: f64, tr: f64, tr_sq: f64) -> f64 {
    let num = (1.0 - 2.0 / dim) * tr_sq + tr * tr;
    let den = (n_samples + 1.0 - 2.0 / dim) * (tr_sq - tr * tr / dim);
    if den <= 1e-15 * tr * tr {
        1.0
    } else {
        (num / den).clamp(0.0, 1.0)
    }
}

/// Oracle approximating shrinkage toward `μ·I`, `μ = tr(S)/dim`. Returns the shrunk matrix and `ρ`.
pub fn oas_shrink(s: &SymMatrix, n_samples: usize) -> Result<(SymMatrix, f64)> {
    if n_samples < 2 {
        return Err(Error::InvalidInput(format!("OAS needs n_samples >= 2, got {n_samples}")));
    }
    if !s.is_finite() {
        return Err(Error::InvalidInput("covariance has non-finite entries".into()));
    }
    let dim = s.dim() as f64;
    let m = s.as_matrix();
    let tr = m.trace();
    let tr_sq = m.norm_squared();
    let rho = oas_coefficient(dim, n_samples as f64, tr, tr_sq);
    let mu = tr / dim;
    let mut out = m * (1.0 - rho);
    for i in 0..s.dim() {
        out[(i, i)] += rho * mu;
    }
    Ok((SymMatrix::new(out)?, rho))
}

fn check_cholesky(m: &DMatrix<f64>) -> Result<()> {
    if Cholesky::new(m.clone()).is_some() {
        Ok(())
    } else {
        let lmin = crate::matfun::sym_eig(&SymMatrix::new(m.clone())?)?.min_eigenvalue();
        Err(Error::NotPositiveDefinite { min_eigenvalue: lmin })
    }
}

/// Raw lagged blocks `Γ_k = lagged_cov(x, k·tau)` of the centered epoch.
pub fn raw_lagged_blocks(epoch: &Epoch, params: EmbeddingParams) -> Result<LaggedBlocks> {
    params.check_len(epoch.samples())?;
    let c = center(epoch);
    let blocks = (0..params.p)
        .map(|k| lagged_cov(&c, k * params.tau))
        .collect::<Result<Vec<_>>>()?;
    let mut lb = LaggedBlocks {
        blocks,
        d: epoch.channels(),
        tau: params.tau,
    };
    lb.blocks[0] = crate::matfun::symmetrize(lb.blocks[0].clone());
    Ok(lb)
}

/// OAS-shrunk lagged blocks computed without forming the `dp × dp` matrix.
///
/// Produces the same shrinkage as `build_acm` in lagged mode: the traces of the
/// block-Toeplitz matrix and of its square follow from the blocks alone.
pub fn shrunk_lagged_blocks(epoch: &Epoch, params: EmbeddingParams) -> Result<(LaggedBlocks, f64)> {
    let mut lb = raw_lagged_blocks(epoch, params)?;
    let p = params.p;
    let d = lb.d;
    let dim = (d * p) as f64;
    let tr = p as f64 * lb.blocks[0].trace();
    let tr_sq = lb
        .blocks
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let mult = if k == 0 { p as f64 } else { 2.0 * (p - k) as f64 };
            mult * b.norm_squared()
        })
        .sum::<f64>();
    let rho = oas_coefficient(dim, params.embedded_len(epoch.samples()) as f64, tr, tr_sq);
    let mu = tr / dim;
    for b in lb.blocks.iter_mut() {
        *b *= 1.0 - rho;
    }
    for i in 0..d {
        lb.blocks[0][(i, i)] += rho * mu;
    }
    Ok((lb, rho))
}

pub fn build_acm(epoch: &Epoch, params: EmbeddingParams, mode: AcmMode) -> Result<AugmentedCovariance> {
    params.check_len(epoch.samples())?;
    let n_samples = params.embedded_len(epoch.samples());
    let d = epoch.channels();
    let p = params.p;
    let matrix = match mode {
        AcmMode::Lagged => {
            let raw = raw_lagged_blocks(epoch, params)?;
            let full = SymMatrix::new(raw.assemble(p))?;
            oas_shrink(&full, n_samples)?
        }
        AcmMode::Embed => {
            let embedded = delay_embed(&center(epoch), params)?;
            let s = SymMatrix::new(&embedded * embedded.transpose() / n_samples as f64)?;
            let (shrunk, rho) = oas_shrink(&s, n_samples)?;
            // Delay rows run backwards in time; reverse the block order to match the lagged layout.
            let m = shrunk.as_matrix();
            let blocks = (0..p)
                .map(|k| {
                    let mut acc = DMatrix::zeros(d, d);
                    for j in 0..(p - k) {
                        let i = j + k;
                        acc += m.view(((p - 1 - i) * d, (p - 1 - j) * d), (d, d));
                    }
                    acc / (p - k) as f64
                })
                .collect::<Vec<_>>();
            let mut blocks = blocks;
            blocks[0] = crate::matfun::symmetrize(blocks[0].clone());
            (SymMatrix::new(block_toeplitz(&blocks))?, rho)
        }
    };
    let (matrix, rho) = matrix;
    check_cholesky(matrix.as_matrix())?;
    let m = matrix.as_matrix();
    let blocks = (0..p).map(|k| m.view((k * d, 0), (d, d)).into_owned()).collect();
    Ok(AugmentedCovariance {
        blocks: LaggedBlocks {
            blocks,
            d,
            tau: params.tau,
        },
        matrix,
        shrinkage_rho: rho,
    })
}

/// Plain sample covariance of the delay-embedded epoch, as used by the full-matrix baseline.
///
/// Adds `1e−10 · tr/dim · I` only when the estimate is not numerically positive definite.
pub fn embedded_sample_covariance(epoch: &Epoch, params: EmbeddingParams) -> Result<SymMatrix> {
    let embedded = delay_embed(&center(epoch), params)?;
    let n = embedded.ncols() as f64;
    let mut s = crate::matfun::symmetrize(&embedded * embedded.transpose() / n);
    if Cholesky::new(s.clone()).is_none() {
        let eps = 1e-10 * s.trace() / s.nrows() as f64;
        for i in 0..s.nrows() {
            s[(i, i)] += eps;
        }
        check_cholesky(&s)?;
    }
    SymMatrix::new(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matfun::{rel_frobenius, sym_eig};
    use crate::signal::{synth_var, SynthConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn row_epoch(x: &[f64]) -> Epoch {
        Epoch::new(DMatrix::from_row_slice(1, x.len(), x), 0).unwrap()
    }

    fn noise_epoch(rng: &mut ChaCha8Rng, d: usize, t: usize) -> Epoch {
        Epoch::new(DMatrix::from_fn(d, t, |_, _| StandardNormal.sample(rng)), 0).unwrap()
    }

    #[test]
    fn delay_embed_examples() {
        let e = row_epoch(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let m = delay_embed(&e, EmbeddingParams::new(2, 1).unwrap()).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 4, &[2.0, 3.0, 4.0, 5.0, 1.0, 2.0, 3.0, 4.0]));
        assert_eq!(delay_embed(&e, EmbeddingParams::new(1, 3).unwrap()).unwrap(), *e.data());

        let e = Epoch::new(DMatrix::from_fn(2, 10, |i, j| (i * 10 + j) as f64), 0).unwrap();
        let m = delay_embed(&e, EmbeddingParams::new(2, 3).unwrap()).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (4, 7));
        assert!(matches!(
            delay_embed(&e, EmbeddingParams::new(4, 4).unwrap()),
            Err(Error::EpochTooShort { .. })
        ));
    }

    #[test]
    fn lagged_cov_examples() {
        let e = row_epoch(&[1.0, -1.0, 1.0, -1.0]);
        assert!((lagged_cov(&e, 1).unwrap()[(0, 0)] + 0.75).abs() < 1e-15);
        assert!(matches!(lagged_cov(&e, 4), Err(Error::InvalidLag { lag: 4, len: 4 })));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = center(&noise_epoch(&mut rng, 3, 64));
        let g0 = lagged_cov(&e, 0).unwrap();
        let x = e.data();
        assert!(rel_frobenius(&g0, &(x * x.transpose() / 64.0)) < 1e-14);
        assert!(lagged_cov(&e, 63).unwrap().norm() <= g0.norm());
    }

    #[test]
    fn oas_examples() {
        let (out, _) = oas_shrink(&SymMatrix::identity(3), 10).unwrap();
        assert!((out.as_matrix() - DMatrix::identity(3, 3)).norm() < 1e-15);

        let (out, rho) = oas_shrink(&SymMatrix::from_diagonal(&[2.0, 0.0]), 5).unwrap();
        assert!((rho - 0.4).abs() < 1e-15);
        assert!((out.as_matrix()[(0, 0)] - 1.6).abs() < 1e-15);
        assert!((out.as_matrix()[(1, 1)] - 0.4).abs() < 1e-15);

        assert!(oas_shrink(&SymMatrix::identity(2), 1).is_err());
    }

    #[test]
    fn oas_lifts_the_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let x: DMatrix<f64> = DMatrix::from_fn(5, 4, |_, _| StandardNormal.sample(&mut rng));
            let s = SymMatrix::new(&x * x.transpose() / 4.0).unwrap();
            let mu = s.trace() / 5.0;
            let (out, rho) = oas_shrink(&s, 4).unwrap();
            let lmin = sym_eig(&out).unwrap().min_eigenvalue();
            assert!(lmin >= rho * mu * (1.0 - 1e-12));
            assert!(lmin > 0.0);
        }
    }

    #[test]
    fn lagged_mode_is_exactly_block_toeplitz() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = noise_epoch(&mut rng, 3, 200);
        let acm = build_acm(&e, EmbeddingParams::new(4, 2).unwrap(), AcmMode::Lagged).unwrap();
        let m = acm.matrix.as_matrix();
        let d = 3;
        let block = |i: usize, j: usize| m.view((i * d, j * d), (d, d)).into_owned();
        assert_eq!(block(2, 0), block(3, 1));
        assert_eq!(block(2, 0), acm.blocks.blocks[2]);
        assert_eq!(block(0, 2), acm.blocks.blocks[2].transpose());
        for i in 0..4usize {
            for j in 0..4usize {
                let k = i.abs_diff(j);
                let expect = if i >= j { acm.blocks.blocks[k].clone() } else { acm.blocks.blocks[k].transpose() };
                assert_eq!(block(i, j), expect);
            }
        }
        assert!((0.0..=1.0).contains(&acm.shrinkage_rho));
    }

    #[test]
    fn p1_is_shrunk_spatial_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let e = noise_epoch(&mut rng, 4, 100);
        let acm = build_acm(&e, EmbeddingParams::new(1, 1).unwrap(), AcmMode::Lagged).unwrap();
        let g0 = SymMatrix::new(lagged_cov(&center(&e), 0).unwrap()).unwrap();
        let (expect, _) = oas_shrink(&g0, 100).unwrap();
        assert_eq!(acm.matrix, expect);
    }

    #[test]
    fn block_only_shrinkage_matches_full_assembly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (d, p, tau) in [(1, 3, 1), (3, 4, 2), (5, 6, 3)] {
            let e = noise_epoch(&mut rng, d, 300);
            let params = EmbeddingParams::new(p, tau).unwrap();
            let acm = build_acm(&e, params, AcmMode::Lagged).unwrap();
            let (blocks, rho) = shrunk_lagged_blocks(&e, params).unwrap();
            assert!((rho - acm.shrinkage_rho).abs() < 1e-13);
            for (a, b) in blocks.blocks.iter().zip(&acm.blocks.blocks) {
                assert!((a - b).amax() < 1e-13);
            }
        }
    }

    #[test]
    fn lagged_assembly_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..1000 {
            let d = 1 + (rand::Rng::random_range(&mut rng, 0..3));
            let t = rand::Rng::random_range(&mut rng, 8..40);
            let e = noise_epoch(&mut rng, d, t);
            let p = rand::Rng::random_range(&mut rng, 1..5);
            let tau = rand::Rng::random_range(&mut rng, 1..3);
            let params = EmbeddingParams::new(p, tau).unwrap();
            if params.check_len(t).is_err() {
                continue;
            }
            let raw = raw_lagged_blocks(&e, params).unwrap();
            let m = SymMatrix::new(raw.assemble(p)).unwrap();
            let lmin = sym_eig(&m).unwrap().min_eigenvalue();
            assert!(lmin >= -1e-10 * m.trace());
        }
    }

    #[test]
    fn sign_flip_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let e = noise_epoch(&mut rng, 3, 150);
        let signs = [1.0, -1.0, -1.0];
        let mut flipped = e.data().clone();
        for (i, s) in signs.iter().enumerate() {
            flipped.row_mut(i).scale_mut(*s);
        }
        let f = Epoch::new(flipped, 0).unwrap();
        let params = EmbeddingParams::new(3, 2).unwrap();
        let a = build_acm(&e, params, AcmMode::Lagged).unwrap();
        let b = build_acm(&f, params, AcmMode::Lagged).unwrap();
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(9, |i, _| signs[i % 3]));
        let conj = &s * a.matrix.as_matrix() * &s;
        assert!((conj - b.matrix.as_matrix()).amax() <= 1e-12);
    }

    #[test]
    fn scalar_blocks_match_direct_autocorrelation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let e = center(&noise_epoch(&mut rng, 1, 80));
        let x: Vec<f64> = e.data().iter().copied().collect();
        let raw = raw_lagged_blocks(&e, EmbeddingParams::new(6, 1).unwrap()).unwrap();
        let r0: f64 = x.iter().map(|v| v * v).sum::<f64>() / 80.0;
        for k in 0..6 {
            let rk: f64 = (k..80).map(|t| x[t] * x[t - k]).sum::<f64>() / 80.0;
            assert!((raw.blocks[k][(0, 0)] / raw.blocks[0][(0, 0)] - rk / r0).abs() < 1e-12);
        }
    }

    #[test]
    fn lagged_and_embed_modes_agree_on_long_epochs() {
        let cfg = SynthConfig {
            epochs_per_class: 10,
            ..SynthConfig::new(3, 10, 4096, 250.0)
        };
        let ds = synth_var(&cfg, 3).unwrap();
        let params = EmbeddingParams::new(3, 2).unwrap();
        for e in ds.epochs.iter().take(4) {
            let a = build_acm(e, params, AcmMode::Lagged).unwrap();
            let b = build_acm(e, params, AcmMode::Embed).unwrap();
            let dist = rel_frobenius(b.matrix.as_matrix(), a.matrix.as_matrix());
            assert!(dist <= 0.05, "relative distance {dist}");
        }
    }

    #[test]
    fn embedded_sample_covariance_is_positive_definite() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let e = noise_epoch(&mut rng, 2, 50);
        let s = embedded_sample_covariance(&e, EmbeddingParams::new(3, 2).unwrap()).unwrap();
        assert_eq!(s.dim(), 6);
        assert!(Cholesky::new(s.into_inner()).is_some());
        // Too few columns for full rank: the ε fallback keeps it usable.
        let e = noise_epoch(&mut rng, 3, 6);
        assert!(embedded_sample_covariance(&e, EmbeddingParams::new(3, 1).unwrap()).is_ok());
    }
}
