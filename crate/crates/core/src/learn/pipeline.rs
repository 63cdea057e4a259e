//! The four classification pipelines.
//!
//! Each pipeline splits into an unsupervised per-epoch representation
//! (`represent`) and a supervised part fitted on training data only
//! (`FittedPipeline::fit`).

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acm::{embedded_sample_covariance, shrunk_lagged_blocks, EmbeddingParams};
use crate::error::{Error, Result};
use crate::features::{fit_reference, FeatureMap, SiegelReferenceMode};
use crate::learn::svm::{svm_train, SvmModel, SvmOptions};
use crate::signal::Epoch;
use crate::spd::{frechet_mean, spd_distance, SpdPoint, Whitener};
use crate::verblunsky::{verblunsky_decompose_fast, BTDecomposition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineKind {
    /// Block-Toeplitz ACM, product tangent space, SVM.
    BtAcm,
    /// Full `dp × dp` ACM as a single SPD point, tangent space, SVM.
    Acm,
    /// Spatial covariance, tangent space, SVM.
    TsSvm,
    /// Minimum distance to the Riemannian class means.
    Mdm,
}

impl PipelineKind {
    pub const ALL: [PipelineKind; 4] = [Self::BtAcm, Self::Acm, Self::TsSvm, Self::Mdm];

    pub fn name(self) -> &'static str {
        match self {
            Self::BtAcm => "bt-acm",
            Self::Acm => "acm",
            Self::TsSvm => "ts-svm",
            Self::Mdm => "mdm",
        }
    }

    /// Whether `(p, tau)` is searched; the others always use `p = tau = 1`.
    pub fn uses_embedding(self) -> bool {
        matches!(self, Self::BtAcm | Self::Acm)
    }

    pub fn uses_svm(self) -> bool {
        !matches!(self, Self::Mdm)
    }
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PipelineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown pipeline '{s}' (expected bt-acm, acm, ts-svm or mdm)")))
    }
}

/// Per-epoch, label-free representation.
#[derive(Debug, Clone)]
pub enum Representation {
    Bt(BTDecomposition),
    Spd(SpdPoint),
}

/// Spatial covariance with OAS shrinkage (`n_samples = T`).
pub fn spatial_covariance(epoch: &Epoch) -> Result<SpdPoint> {
    let (lb, _) = shrunk_lagged_blocks(epoch, EmbeddingParams { p: 1, tau: 1 })?;
    SpdPoint::from_matrix(lb.blocks[0].clone())
}

/// Block-Toeplitz decomposition of the OAS-shrunk lagged covariance.
pub fn bt_decomposition(epoch: &Epoch, params: EmbeddingParams) -> Result<BTDecomposition> {
    let (lb, _) = shrunk_lagged_blocks(epoch, params)?;
    verblunsky_decompose_fast(&lb)
}

pub fn represent(kind: PipelineKind, epoch: &Epoch, params: EmbeddingParams) -> Result<Representation> {
    Ok(match kind {
        PipelineKind::BtAcm => Representation::Bt(bt_decomposition(epoch, params)?),
        PipelineKind::Acm => Representation::Spd(SpdPoint::new(embedded_sample_covariance(epoch, params)?)?),
        PipelineKind::TsSvm | PipelineKind::Mdm => Representation::Spd(spatial_covariance(epoch)?),
    })
}

/// `represent` over many epochs, in parallel; output order matches input order.
pub fn represent_all(kind: PipelineKind, epochs: &[Epoch], params: EmbeddingParams) -> Result<Vec<Representation>> {
    epochs.par_iter().map(|e| represent(kind, e, params)).collect()
}

fn as_bt<'a>(reps: &[&'a Representation]) -> Result<Vec<&'a BTDecomposition>> {
    reps.iter()
        .map(|r| match r {
            Representation::Bt(d) => Ok(d),
            Representation::Spd(_) => Err(Error::InvalidInput("expected block-Toeplitz representations".into())),
        })
        .collect()
}

fn as_spd<'a>(reps: &[&'a Representation]) -> Result<Vec<&'a SpdPoint>> {
    reps.iter()
        .map(|r| match r {
            Representation::Spd(p) => Ok(p),
            Representation::Bt(_) => Err(Error::InvalidInput("expected SPD representations".into())),
        })
        .collect()
}

#[derive(Debug, Clone)]
pub enum FittedPipeline {
    Bt { map: FeatureMap, svm: SvmModel },
    Tangent { whitener: Whitener, svm: SvmModel },
    Mdm { means: [SpdPoint; 2] },
}

fn check_labels(labels: &[u32], n: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::ShapeError(format!("{n} training epochs but {} labels", labels.len())));
    }
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(Error::DegenerateLabels("training split lacks one of the two classes".into()));
    }
    Ok(())
}

impl FittedPipeline {
    pub fn fit(kind: PipelineKind, train: &[&Representation], labels: &[u32], svm: &SvmOptions) -> Result<Self> {
        check_labels(labels, train.len())?;
        match kind {
            PipelineKind::BtAcm => {
                let decs: Vec<BTDecomposition> = as_bt(train)?.into_iter().cloned().collect();
                let map = FeatureMap::new(&fit_reference(&decs, SiegelReferenceMode::Origin)?)?;
                let x = decs
                    .iter()
                    .map(|d| map.transform(d).map(|f| f.values))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Self::Bt {
                    svm: svm_train(&x, labels, svm)?,
                    map,
                })
            }
            PipelineKind::Acm | PipelineKind::TsSvm => {
                let pts: Vec<SpdPoint> = as_spd(train)?.into_iter().cloned().collect();
                let whitener = Whitener::new(&frechet_mean(&pts)?)?;
                let x = pts
                    .iter()
                    .map(|p| whitener.tangent_vector(p))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Self::Tangent {
                    svm: svm_train(&x, labels, svm)?,
                    whitener,
                })
            }
            PipelineKind::Mdm => {
                let pts = as_spd(train)?;
                let class_mean = |c: u32| {
                    let members: Vec<SpdPoint> = pts
                        .iter()
                        .zip(labels)
                        .filter(|(_, &l)| l == c)
                        .map(|(p, _)| (*p).clone())
                        .collect();
                    frechet_mean(&members)
                };
                Ok(Self::Mdm {
                    means: [class_mean(0)?, class_mean(1)?],
                })
            }
        }
    }

    /// Higher scores mean class 1.
    pub fn score(&self, test: &[&Representation]) -> Result<Vec<f64>> {
        match self {
            Self::Bt { map, svm } => {
                let x = as_bt(test)?
                    .into_iter()
                    .map(|d| map.transform(d).map(|f| f.values))
                    .collect::<Result<Vec<_>>>()?;
                svm.decision(&x)
            }
            Self::Tangent { whitener, svm } => {
                let x = as_spd(test)?
                    .into_iter()
                    .map(|p| whitener.tangent_vector(p))
                    .collect::<Result<Vec<_>>>()?;
                svm.decision(&x)
            }
            Self::Mdm { means } => as_spd(test)?
                .into_iter()
                .map(|p| Ok(spd_distance(&means[0], p)? - spd_distance(&means[1], p)?))
                .collect(),
        }
    }

    pub fn svm(&self) -> Option<&SvmModel> {
        match self {
            Self::Bt { svm, .. } | Self::Tangent { svm, .. } => Some(svm),
            Self::Mdm { .. } => None,
        }
    }
}

/// End to end: represent both splits, fit on `train`, score `test`.
pub fn run_pipeline(
    kind: PipelineKind,
    train: &[Epoch],
    test: &[Epoch],
    params: EmbeddingParams,
    svm: &SvmOptions,
) -> Result<Vec<f64>> {
    let tr = represent_all(kind, train, params)?;
    let te = represent_all(kind, test, params)?;
    let labels: Vec<u32> = train.iter().map(Epoch::label).collect();
    let fitted = FittedPipeline::fit(kind, &tr.iter().collect::<Vec<_>>(), &labels, svm)?;
    fitted.score(&te.iter().collect::<Vec<_>>())
}
