//! Stratified nested cross-validation with a grid search over `(p, tau)`.

use std::collections::HashMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acm::EmbeddingParams;
use crate::error::{Error, Result};
use crate::learn::metrics::roc_auc;
use crate::learn::pipeline::{represent_all, FittedPipeline, PipelineKind, Representation};
use crate::learn::svm::SvmOptions;
use crate::signal::{Dataset, Epoch};

pub const GRID_MIN: usize = 1;
pub const GRID_MAX: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub kind: PipelineKind,
    pub p_grid: Vec<usize>,
    pub tau_grid: Vec<usize>,
    pub c: f64,
    /// Optional inner search over C; only for the `acm` and `ts-svm` pipelines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_grid: Option<Vec<f64>>,
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub seed: u64,
    /// Permit grid values outside `[1, 10]`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub allow_wide: bool,
}

impl PipelineConfig {
    pub fn new(kind: PipelineKind) -> Self {
        Self {
            kind,
            p_grid: (GRID_MIN..=GRID_MAX).collect(),
            tau_grid: (GRID_MIN..=GRID_MAX).collect(),
            c: 1.0,
            c_grid: None,
            outer_folds: 5,
            inner_folds: 3,
            seed: 0,
            allow_wide: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.outer_folds < 2 || self.inner_folds < 2 {
            return Err(Error::InvalidConfig(format!(
                "fold counts must be >= 2, got outer={} inner={}",
                self.outer_folds, self.inner_folds
            )));
        }
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::InvalidConfig(format!("C must be positive, got {}", self.c)));
        }
        if let Some(g) = &self.c_grid {
            if !matches!(self.kind, PipelineKind::Acm | PipelineKind::TsSvm) {
                return Err(Error::InvalidConfig(format!("a C grid is not available for {}", self.kind)));
            }
            if g.is_empty() || g.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
                return Err(Error::InvalidConfig("C grid values must be positive".into()));
            }
        }
        if self.kind.uses_embedding() {
            for (name, grid) in [("p", &self.p_grid), ("tau", &self.tau_grid)] {
                if grid.is_empty() {
                    return Err(Error::InvalidConfig(format!("{name} grid is empty")));
                }
                if grid.contains(&0) {
                    return Err(Error::InvalidConfig(format!("{name} grid values must be >= 1")));
                }
                if !self.allow_wide && grid.iter().any(|&v| v > GRID_MAX) {
                    return Err(Error::InvalidConfig(format!(
                        "{name} grid must lie within [{GRID_MIN}, {GRID_MAX}]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Grid cells in tie-break order: ascending `p`, then `tau`, then `C`.
    ///
    /// `p = 1` ignores `tau`, so only `(1, smallest tau)` is kept.
    pub fn cells(&self) -> Vec<Cell> {
        let cs = self.c_grid.clone().unwrap_or_else(|| vec![self.c]);
        let mut params: Vec<EmbeddingParams> = if self.kind.uses_embedding() {
            let mut ps = self.p_grid.clone();
            let mut ts = self.tau_grid.clone();
            ps.sort_unstable();
            ps.dedup();
            ts.sort_unstable();
            ts.dedup();
            let mut out = Vec::new();
            for &p in &ps {
                for &tau in &ts {
                    if p == 1 && tau != ts[0] {
                        continue;
                    }
                    out.push(EmbeddingParams { p, tau });
                }
            }
            out
        } else {
            vec![EmbeddingParams { p: 1, tau: 1 }]
        };
        params.dedup();
        let mut cs = cs;
        cs.sort_by(f64::total_cmp);
        cs.dedup();
        params
            .into_iter()
            .flat_map(|params| cs.iter().map(move |&c| Cell { params, c }))
            .collect()
    }

    fn svm_seed(&self) -> u64 {
        self.seed ^ 0x5eed_5eed_5eed_5eed
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub params: EmbeddingParams,
    pub c: f64,
}

/// Label-stratified folds: each class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &[u32], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes: Vec<u32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for c in classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if idx.len() < k {
            return Err(Error::InvalidConfig(format!(
                "class {c} has {} epochs, fewer than the {k} folds requested",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for i in idx {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in folds.iter_mut() {
        f.sort_unstable();
    }
    Ok(folds)
}

fn complement(n: usize, fold: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &i in fold {
        mask[i] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}

fn inner_seed(seed: u64, outer: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(outer as u64 + 1)
}

/// Per-epoch representations for every grid cell, computed once on the whole
/// dataset. They do not depend on labels, so sharing them across folds leaks nothing.
pub struct RepresentationCache {
    kind: PipelineKind,
    reps: HashMap<EmbeddingParams, Vec<Representation>>,
}

impl RepresentationCache {
    pub fn build(kind: PipelineKind, epochs: &[Epoch], params: &[EmbeddingParams]) -> Result<Self> {
        let mut uniq = params.to_vec();
        uniq.sort();
        uniq.dedup();
        let built = uniq
            .par_iter()
            .map(|&p| represent_all(kind, epochs, p).map(|r| (p, r)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind,
            reps: built.into_iter().collect(),
        })
    }

    fn get(&self, params: EmbeddingParams, idx: &[usize]) -> Vec<&Representation> {
        let all = &self.reps[&params];
        idx.iter().map(|&i| &all[i]).collect()
    }
}

fn fit_on(
    cache: &RepresentationCache,
    cell: Cell,
    labels: &[u32],
    idx: &[usize],
    seed: u64,
) -> Result<FittedPipeline> {
    let y: Vec<u32> = idx.iter().map(|&i| labels[i]).collect();
    let opts = SvmOptions::new(cell.c).with_seed(seed);
    FittedPipeline::fit(cache.kind, &cache.get(cell.params, idx), &y, &opts)
}

fn auc_on(
    cache: &RepresentationCache,
    cell: Cell,
    labels: &[u32],
    train: &[usize],
    test: &[usize],
    seed: u64,
) -> Result<f64> {
    let model = fit_on(cache, cell, labels, train, seed)?;
    let scores = model.score(&cache.get(cell.params, test))?;
    let y: Vec<u32> = test.iter().map(|&i| labels[i]).collect();
    roc_auc(&scores, &y)
}

/// Result of the inner search on one outer-training split.
#[derive(Debug, Clone)]
pub struct Selection {
    pub cell: Cell,
    pub inner_auc: f64,
    /// Mean inner AUC of every cell, in `PipelineConfig::cells` order.
    pub grid: Vec<(Cell, f64)>,
}

/// Inner grid search restricted to `train` (indices into the dataset).
/// Only the labels at `train` are read.
pub fn select_cell(
    cfg: &PipelineConfig,
    cache: &RepresentationCache,
    labels: &[u32],
    train: &[usize],
    seed: u64,
) -> Result<Selection> {
    let cells = cfg.cells();
    if cells.len() == 1 {
        return Ok(Selection {
            cell: cells[0],
            inner_auc: f64::NAN,
            grid: vec![(cells[0], f64::NAN)],
        });
    }
    let sub_labels: Vec<u32> = train.iter().map(|&i| labels[i]).collect();
    let inner = stratified_folds(&sub_labels, cfg.inner_folds, seed)?;
    let splits: Vec<(Vec<usize>, Vec<usize>)> = inner
        .iter()
        .map(|f| {
            let te: Vec<usize> = f.iter().map(|&j| train[j]).collect();
            let tr: Vec<usize> = complement(train.len(), f).into_iter().map(|j| train[j]).collect();
            (tr, te)
        })
        .collect();
    let svm_seed = cfg.svm_seed();
    let grid = cells
        .par_iter()
        .map(|&cell| {
            let mut acc = 0.0;
            for (tr, te) in &splits {
                acc += auc_on(cache, cell, labels, tr, te, svm_seed)?;
            }
            Ok((cell, acc / splits.len() as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = grid[0];
    for &(cell, auc) in &grid[1..] {
        if auc > best.1 {
            best = (cell, auc);
        }
    }
    Ok(Selection {
        cell: best.0,
        inner_auc: best.1,
        grid,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub auc: f64,
    pub p: usize,
    pub tau: usize,
    pub c: f64,
    pub n_train: usize,
    pub n_test: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predict_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: u32,
    pub config: PipelineConfig,
    /// Band-pass edges in Hz applied before evaluation, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<[f64; 2]>,
    pub folds: Vec<FoldReport>,
    pub mean_auc: f64,
    /// Population standard deviation over outer folds.
    pub std_auc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_ms: Option<f64>,
}

impl EvalReport {
    pub fn without_timings(mut self) -> Self {
        self.total_ms = None;
        for f in self.folds.iter_mut() {
            f.fit_ms = None;
            f.predict_ms = None;
        }
        self
    }
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Outer-train model for one fold: inner search, then refit on all of `train`.
pub fn fit_outer_fold(
    cfg: &PipelineConfig,
    cache: &RepresentationCache,
    labels: &[u32],
    train: &[usize],
    fold: usize,
) -> Result<(Selection, FittedPipeline)> {
    let sel = select_cell(cfg, cache, labels, train, inner_seed(cfg.seed, fold))?;
    let model = fit_on(cache, sel.cell, labels, train, cfg.svm_seed())?;
    Ok((sel, model))
}

pub fn nested_cv(ds: &Dataset, cfg: &PipelineConfig) -> Result<EvalReport> {
    let start = Instant::now();
    cfg.validate()?;
    ds.validate_for_classification()?;
    let labels = ds.labels();
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::InvalidConfig("nested CV supports binary labels 0/1 only".into()));
    }
    let cells = cfg.cells();
    for cell in &cells {
        cell.params.check_len(ds.samples()).map_err(|_| {
            Error::InvalidConfig(format!(
                "grid cell p={} tau={} needs more than {} samples per epoch, got {}",
                cell.params.p,
                cell.params.tau,
                cell.params.span(),
                ds.samples()
            ))
        })?;
    }
    let outer = stratified_folds(&labels, cfg.outer_folds, cfg.seed)?;
    // Inner folds need every class present `inner_folds` times in each outer-train split.
    for f in &outer {
        let tr = complement(labels.len(), f);
        for c in 0..=1u32 {
            let n = tr.iter().filter(|&&i| labels[i] == c).count();
            if cells.len() > 1 && n < cfg.inner_folds {
                return Err(Error::InvalidConfig(format!(
                    "class {c} has only {n} training epochs in an outer fold, fewer than {} inner folds",
                    cfg.inner_folds
                )));
            }
        }
    }
    let params: Vec<EmbeddingParams> = cells.iter().map(|c| c.params).collect();
    let cache = RepresentationCache::build(cfg.kind, &ds.epochs, &params)?;

    let folds = outer
        .par_iter()
        .enumerate()
        .map(|(k, test)| {
            let train = complement(labels.len(), test);
            let sel = select_cell(cfg, &cache, &labels, &train, inner_seed(cfg.seed, k))?;
            let opts = SvmOptions::new(sel.cell.c).with_seed(cfg.svm_seed());
            let pick = |idx: &[usize]| idx.iter().map(|&i| ds.epochs[i].clone()).collect::<Vec<_>>();
            let (tr_epochs, te_epochs) = (pick(&train), pick(test));

            // Timed refit recomputes representations so fit/predict cost is complete.
            let t_fit = Instant::now();
            let tr = represent_all(cfg.kind, &tr_epochs, sel.cell.params)?;
            let y: Vec<u32> = train.iter().map(|&i| labels[i]).collect();
            let model = FittedPipeline::fit(cfg.kind, &tr.iter().collect::<Vec<_>>(), &y, &opts)?;
            let fit_ms = ms_since(t_fit);
            let t_pred = Instant::now();
            let te = represent_all(cfg.kind, &te_epochs, sel.cell.params)?;
            let scores = model.score(&te.iter().collect::<Vec<_>>())?;
            let predict_ms = ms_since(t_pred);

            let yt: Vec<u32> = test.iter().map(|&i| labels[i]).collect();
            Ok(FoldReport {
                fold: k,
                auc: roc_auc(&scores, &yt)?,
                p: sel.cell.params.p,
                tau: sel.cell.params.tau,
                c: sel.cell.c,
                n_train: train.len(),
                n_test: test.len(),
                fit_ms: Some(fit_ms),
                predict_ms: Some(predict_ms),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let aucs: Vec<f64> = folds.iter().map(|f| f.auc).collect();
    let (mean_auc, std_auc) = mean_std(&aucs);
    Ok(EvalReport {
        schema: 1,
        config: cfg.clone(),
        band: None,
        folds,
        mean_auc,
        std_auc,
        total_ms: Some(ms_since(start)),
    })
}
