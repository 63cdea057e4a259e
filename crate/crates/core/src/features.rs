//! Tangent coordinates on `SPD_d × SD_d^{p−1}` under the weighted product metric
//! `p·‖·‖²_SPD + Σ_l (p − l)·‖·‖²_SD`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matfun::svd;
use crate::siegel::{flatten_row_major, siegel_distance, siegel_log0_with, ClampDiagnostics, Mobius, SiegelPoint};
use crate::spd::{frechet_mean, spd_distance, SpdPoint, Whitener};
use crate::verblunsky::BTDecomposition;

/// Base point chosen for each Siegel factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SiegelReferenceMode {
    #[default]
    Origin,
    /// Per-level arithmetic mean, pulled back inside the disk if needed.
    EuclideanMean,
}

#[derive(Debug, Clone)]
pub struct ProductReference {
    pub spd_ref: SpdPoint,
    pub siegel_refs: Vec<SiegelPoint>,
    pub d: usize,
    pub p: usize,
}

impl ProductReference {
    /// The reference as a decomposition, so it can be fed to `product_distance`.
    pub fn as_decomposition(&self, tau: usize) -> BTDecomposition {
        BTDecomposition {
            p0: self.spd_ref.clone(),
            omegas: self.siegel_refs.clone(),
            d: self.d,
            p: self.p,
            tau,
        }
    }
}

/// Column layout of a feature vector, a pure function of `(d, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub d: usize,
    pub p: usize,
}

impl FeatureLayout {
    pub fn new(d: usize, p: usize) -> Self {
        Self { d, p }
    }

    pub fn spd_len(&self) -> usize {
        self.d * (self.d + 1) / 2
    }

    pub fn len(&self) -> usize {
        self.spd_len() + (self.p - 1) * self.d * self.d
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Start offset of block `l` (0 = SPD, `l ≥ 1` = Ω_l).
    pub fn offset(&self, l: usize) -> usize {
        if l == 0 {
            0
        } else {
            self.spd_len() + (l - 1) * self.d * self.d
        }
    }

    /// Column names: `p0_i_j` for the SPD block, `omega{l}_i_j` for the others.
    pub fn column_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.len());
        for i in 0..self.d {
            for j in i..self.d {
                out.push(format!("p0_{i}_{j}"));
            }
        }
        for l in 1..self.p {
            for i in 0..self.d {
                for j in 0..self.d {
                    out.push(format!("omega{l}_{i}_{j}"));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout: FeatureLayout,
}

impl FeatureVector {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

fn check_consistent(decs: &[BTDecomposition]) -> Result<(usize, usize)> {
    let first = decs
        .first()
        .ok_or_else(|| Error::InvalidInput("cannot fit a reference to no decompositions".into()))?;
    for dec in decs {
        if dec.d != first.d || dec.p != first.p {
            return Err(Error::ShapeError(format!(
                "decomposition shape (d={}, p={}) differs from (d={}, p={})",
                dec.d, dec.p, first.d, first.p
            )));
        }
    }
    Ok((first.d, first.p))
}

const EMEAN_MAX_SIGMA: f64 = 1.0 - 1e-6;

pub fn fit_reference(decs: &[BTDecomposition], mode: SiegelReferenceMode) -> Result<ProductReference> {
    let (d, p) = check_consistent(decs)?;
    let p0s: Vec<SpdPoint> = decs.iter().map(|x| x.p0.clone()).collect();
    let spd_ref = frechet_mean(&p0s)?;
    let siegel_refs = match mode {
        SiegelReferenceMode::Origin => vec![SiegelPoint::zero(d); p - 1],
        SiegelReferenceMode::EuclideanMean => (0..p - 1)
            .map(|l| {
                let mut acc = DMatrix::zeros(d, d);
                for dec in decs {
                    acc += dec.omegas[l].as_matrix();
                }
                acc /= decs.len() as f64;
                let smax = svd(&acc)?.sigma[0];
                if smax > EMEAN_MAX_SIGMA {
                    acc *= EMEAN_MAX_SIGMA / smax;
                }
                SiegelPoint::new(acc)
            })
            .collect::<Result<Vec<_>>>()?,
    };
    Ok(ProductReference { spd_ref, siegel_refs, d, p })
}

/// A reference with its whitener and Möbius maps precomputed.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    whitener: Whitener,
    mobius: Vec<Mobius>,
    layout: FeatureLayout,
}

impl FeatureMap {
    pub fn new(reference: &ProductReference) -> Result<Self> {
        Ok(Self {
            whitener: Whitener::new(&reference.spd_ref)?,
            mobius: reference.siegel_refs.iter().map(Mobius::new).collect::<Result<_>>()?,
            layout: FeatureLayout::new(reference.d, reference.p),
        })
    }

    pub fn layout(&self) -> FeatureLayout {
        self.layout
    }

    pub fn transform(&self, dec: &BTDecomposition) -> Result<FeatureVector> {
        self.transform_with(dec, &mut ClampDiagnostics::default())
    }

    pub fn transform_with(&self, dec: &BTDecomposition, diag: &mut ClampDiagnostics) -> Result<FeatureVector> {
        let layout = self.layout;
        if dec.d != layout.d || dec.p != layout.p || dec.omegas.len() != layout.p - 1 {
            return Err(Error::ShapeError(format!(
                "decomposition (d={}, p={}) does not match reference (d={}, p={})",
                dec.d, dec.p, layout.d, layout.p
            )));
        }
        let p = layout.p as f64;
        let mut values = Vec::with_capacity(layout.len());
        let w = p.sqrt();
        values.extend(self.whitener.tangent_vector(&dec.p0)?.into_iter().map(|x| w * x));
        for (l, (omega, m)) in dec.omegas.iter().zip(&self.mobius).enumerate() {
            let w = (p - (l + 1) as f64).sqrt();
            let z = m.apply(omega)?;
            let v = siegel_log0_with(&z, diag)?;
            values.extend(flatten_row_major(&v).into_iter().map(|x| w * x));
        }
        Ok(FeatureVector { values, layout })
    }
}

pub fn bt_tangent_features(dec: &BTDecomposition, reference: &ProductReference) -> Result<FeatureVector> {
    FeatureMap::new(reference)?.transform(dec)
}

fn entries(dec: &BTDecomposition) -> impl Iterator<Item = &f64> {
    dec.p0
        .as_matrix()
        .iter()
        .chain(dec.omegas.iter().flat_map(|w| w.as_matrix().iter()))
}

/// Weighted product distance; arguments are put in a canonical order so the
/// result is exactly symmetric.
pub fn product_distance(a: &BTDecomposition, b: &BTDecomposition) -> Result<f64> {
    if a.d != b.d || a.p != b.p || a.omegas.len() != b.omegas.len() {
        return Err(Error::ShapeError(format!(
            "decomposition shapes differ: (d={}, p={}) vs (d={}, p={})",
            a.d, a.p, b.d, b.p
        )));
    }
    let swap = entries(a)
        .zip(entries(b))
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        == Some(std::cmp::Ordering::Greater);
    let (a, b) = if swap { (b, a) } else { (a, b) };
    let p = a.p as f64;
    let mut sq = p * spd_distance(&a.p0, &b.p0)?.powi(2);
    for (l, (x, y)) in a.omegas.iter().zip(&b.omegas).enumerate() {
        sq += (p - (l + 1) as f64) * siegel_distance(x, y)?.powi(2);
    }
    Ok(sq.sqrt())
}
