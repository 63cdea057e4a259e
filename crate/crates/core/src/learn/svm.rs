//! Linear SVM trained by dual coordinate descent on the L2-regularized hinge loss.
//!
//! The bias is learned as the weight of a constant feature equal to 1.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    /// Passes over the data that were run.
    pub epochs: usize,
    /// Relative duality gap at exit.
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmOptions {
    pub c: f64,
    /// Stop once `(primal − dual) ≤ tol · primal`.
    pub tol: f64,
    /// Defaults to `10 · n_examples`.
    pub max_epochs: Option<usize>,
    /// Seeds the per-epoch visiting order.
    pub seed: u64,
}

impl SvmOptions {
    pub fn new(c: f64) -> Self {
        Self {
            c,
            tol: 1e-4,
            max_epochs: None,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_examples(x: &[Vec<f64>], labels: &[u32]) -> Result<usize> {
    if x.len() != labels.len() {
        return Err(Error::ShapeError(format!(
            "{} feature rows but {} labels",
            x.len(),
            labels.len()
        )));
    }
    let dim = x.first().map_or(0, Vec::len);
    if x.iter().any(|r| r.len() != dim) {
        return Err(Error::ShapeError("feature rows have different lengths".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("features contain non-finite values".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::InvalidInput(format!("binary labels expected, got {bad}")));
    }
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(Error::DegenerateLabels("SVM training needs both classes".into()));
    }
    Ok(dim)
}

pub fn svm_train(x: &[Vec<f64>], labels: &[u32], opts: &SvmOptions) -> Result<SvmModel> {
    if !(opts.c.is_finite() && opts.c > 0.0) {
        return Err(Error::InvalidConfig(format!("SVM C must be positive, got {}", opts.c)));
    }
    let dim = check_examples(x, labels)?;
    let n = x.len();
    let c = opts.c;
    let y: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
    let qii: Vec<f64> = x.iter().map(|r| dot(r, r) + 1.0).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let max_epochs = opts.max_epochs.unwrap_or(10 * n).max(1);
    let mut gap = f64::INFINITY;
    let mut epochs = 0;

    while epochs < max_epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let g = y[i] * (dot(&w, &x[i]) + b) - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= c {
                g.max(0.0)
            } else {
                g
            };
            if pg.abs() > 1e-14 {
                let new = (alpha[i] - g / qii[i]).clamp(0.0, c);
                let step = (new - alpha[i]) * y[i];
                alpha[i] = new;
                for (wj, xj) in w.iter_mut().zip(&x[i]) {
                    *wj += step * xj;
                }
                b += step;
            }
        }
        epochs += 1;

        let half_sq = 0.5 * (dot(&w, &w) + b * b);
        let hinge: f64 = (0..n)
            .map(|i| (1.0 - y[i] * (dot(&w, &x[i]) + b)).max(0.0))
            .sum();
        let primal = half_sq + c * hinge;
        let dual = alpha.iter().sum::<f64>() - half_sq;
        gap = (primal - dual) / primal.max(f64::MIN_POSITIVE);
        if gap <= opts.tol {
            break;
        }
    }
    Ok(SvmModel {
        weights: w,
        bias: b,
        c,
        epochs,
        gap,
    })
}

impl SvmModel {
    /// `w·x + b` for each row.
    pub fn decision(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        x.iter()
            .map(|r| {
                if r.len() != self.weights.len() {
                    Err(Error::ShapeError(format!(
                        "feature length {} does not match model dimension {}",
                        r.len(),
                        self.weights.len()
                    )))
                } else {
                    Ok(dot(&self.weights, r) + self.bias)
                }
            })
            .collect()
    }
}

pub fn svm_decision(model: &SvmModel, x: &[Vec<f64>]) -> Result<Vec<f64>> {
    model.decision(x)
}
