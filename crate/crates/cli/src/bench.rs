//! Per-trial feature-extraction timing: full `dp × dp` SPD chart versus the
//! block-Toeplitz product chart.

use std::time::Instant;

use btacm::acm::{embedded_sample_covariance, shrunk_lagged_blocks, EmbeddingParams};
use btacm::features::{FeatureMap, ProductReference};
use btacm::matfun::SymMatrix;
use btacm::siegel::SiegelPoint;
use btacm::signal::{synth_var, Epoch, SynthConfig};
use btacm::spd::{SpdPoint, Whitener};
use btacm::verblunsky::verblunsky_decompose_fast;
use btacm::{Error, Result};
use nalgebra::DMatrix;
use serde::Serialize;

/// Samples per synthetic trial.
pub const BENCH_SAMPLES: usize = 1000;
pub const BENCH_FS: f64 = 250.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    pub channels: usize,
    pub p: usize,
    pub tau: usize,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub schema: u32,
    pub channels: usize,
    pub p: usize,
    pub tau: usize,
    pub trials: usize,
    pub samples: usize,
    pub full_median_ms: f64,
    pub full_iqr_ms: f64,
    pub bt_median_ms: f64,
    pub bt_iqr_ms: f64,
    /// `full_median_ms / bt_median_ms`.
    pub speedup: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Median and interquartile range.
pub fn median_iqr(xs: &[f64]) -> (f64, f64) {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    (quantile(&s, 0.5), quantile(&s, 0.75) - quantile(&s, 0.25))
}

fn mean_matrix<'a>(ms: impl Iterator<Item = &'a DMatrix<f64>>) -> Option<DMatrix<f64>> {
    let mut n = 0;
    let mut acc: Option<DMatrix<f64>> = None;
    for m in ms {
        n += 1;
        acc = Some(match acc {
            Some(a) => a + m,
            None => m.clone(),
        });
    }
    acc.map(|a| a / n as f64)
}

fn full_path(epoch: &Epoch, params: EmbeddingParams, w: &Whitener) -> Result<Vec<f64>> {
    let acm = SpdPoint::new(embedded_sample_covariance(epoch, params)?)?;
    w.tangent_vector(&acm)
}

fn bt_path(epoch: &Epoch, params: EmbeddingParams, map: &FeatureMap) -> Result<Vec<f64>> {
    let (lb, _) = shrunk_lagged_blocks(epoch, params)?;
    Ok(map.transform(&verblunsky_decompose_fast(&lb)?)?.values)
}

pub fn validate(cfg: &BenchConfig) -> Result<EmbeddingParams> {
    if cfg.channels < 2 || cfg.trials < 1 {
        return Err(Error::InvalidConfig(format!(
            "bench needs channels >= 2 and trials >= 1, got channels={} trials={}",
            cfg.channels, cfg.trials
        )));
    }
    let params = EmbeddingParams::new(cfg.p, cfg.tau)?;
    params.check_len(BENCH_SAMPLES).map_err(|_| {
        Error::InvalidConfig(format!(
            "(p - 1) * tau = {} must be below {BENCH_SAMPLES} samples",
            params.span()
        ))
    })?;
    Ok(params)
}

/// Times both paths trial by trial. The tangent-space references (arithmetic
/// means of the trial matrices) are computed beforehand and not timed.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    let params = validate(cfg)?;
    let per_class = cfg.trials.div_ceil(2).max(10);
    let synth = SynthConfig::new(cfg.channels, per_class, BENCH_SAMPLES, BENCH_FS);
    let mut epochs = synth_var(&synth, cfg.seed)?.epochs;
    epochs.truncate(cfg.trials);

    let acms = epochs
        .iter()
        .map(|e| embedded_sample_covariance(e, params))
        .collect::<Result<Vec<SymMatrix>>>()?;
    let full_ref = SpdPoint::from_matrix(mean_matrix(acms.iter().map(SymMatrix::as_matrix)).unwrap())?;
    let full_w = Whitener::new(&full_ref)?;

    let blocks = epochs
        .iter()
        .map(|e| shrunk_lagged_blocks(e, params).map(|(lb, _)| lb))
        .collect::<Result<Vec<_>>>()?;
    let bt_ref = ProductReference {
        spd_ref: SpdPoint::from_matrix(mean_matrix(blocks.iter().map(|lb| &lb.blocks[0])).unwrap())?,
        siegel_refs: vec![SiegelPoint::zero(cfg.channels); cfg.p - 1],
        d: cfg.channels,
        p: cfg.p,
    };
    let map = FeatureMap::new(&bt_ref)?;

    let mut full_ms = Vec::with_capacity(cfg.trials);
    let mut bt_ms = Vec::with_capacity(cfg.trials);
    for e in &epochs {
        let t = Instant::now();
        std::hint::black_box(full_path(e, params, &full_w)?);
        full_ms.push(t.elapsed().as_secs_f64() * 1e3);
        let t = Instant::now();
        std::hint::black_box(bt_path(e, params, &map)?);
        bt_ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let (full_median_ms, full_iqr_ms) = median_iqr(&full_ms);
    let (bt_median_ms, bt_iqr_ms) = median_iqr(&bt_ms);
    Ok(BenchReport {
        schema: 1,
        channels: cfg.channels,
        p: cfg.p,
        tau: cfg.tau,
        trials: cfg.trials,
        samples: BENCH_SAMPLES,
        full_median_ms,
        full_iqr_ms,
        bt_median_ms,
        bt_iqr_ms,
        speedup: full_median_ms / bt_median_ms,
    })
}
