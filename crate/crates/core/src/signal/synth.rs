//! Synthetic two-class dataset whose classes differ in temporal structure only.
//!
//! Each epoch is `x(t) = A·z(t) + noise`, where the latent sources `z_i` are
//! unit-variance AR(1) processes. Class 0 gives source `i` the coefficient
//! `schedule[i % len]`; class 1 uses the same schedule shifted by one source, which for
//! an even number of sources and the default alternating schedule is the reversed
//! coefficient vector. Lag-0 covariances therefore coincide across classes while
//! lagged covariances do not.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, Epoch};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub channels: usize,
    pub epochs_per_class: usize,
    pub samples: usize,
    pub fs: f64,
    pub noise_std: f64,
    pub schedule: Vec<f64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            channels: 4,
            epochs_per_class: 50,
            samples: 256,
            fs: 250.0,
            noise_std: 0.3,
            schedule: vec![0.5, -0.3],
        }
    }
}

impl SynthConfig {
    pub fn new(channels: usize, epochs_per_class: usize, samples: usize, fs: f64) -> Self {
        Self {
            channels,
            epochs_per_class,
            samples,
            fs,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.channels < 2 {
            return Err(Error::InvalidConfig(format!("need at least 2 channels, got {}", self.channels)));
        }
        if self.epochs_per_class < 10 {
            return Err(Error::InvalidConfig(format!(
                "need at least 10 epochs per class, got {}",
                self.epochs_per_class
            )));
        }
        if self.samples < 128 {
            return Err(Error::InvalidConfig(format!("need at least 128 samples, got {}", self.samples)));
        }
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return Err(Error::InvalidConfig(format!("sampling rate must be positive, got {}", self.fs)));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        if self.schedule.is_empty() || self.schedule.iter().any(|a| !(a.abs() < 1.0)) {
            return Err(Error::InvalidConfig("AR coefficients must lie strictly inside (-1, 1)".into()));
        }
        Ok(())
    }

    /// AR(1) coefficient of every latent source for the given class.
    pub fn coefficients(&self, class: u32) -> Vec<f64> {
        let shift = class as usize;
        (0..self.channels)
            .map(|i| self.schedule[(i + shift) % self.schedule.len()])
            .collect()
    }
}

pub fn synth_var(cfg: &SynthConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let d = cfg.channels;
    let t = cfg.samples;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = move || -> f64 { StandardNormal.sample(&mut rng) };

    let mixing = DMatrix::from_fn(d, d, |_, _| normal());
    let coeffs = [cfg.coefficients(0), cfg.coefficients(1)];

    let mut epochs = Vec::with_capacity(2 * cfg.epochs_per_class);
    for k in 0..2 * cfg.epochs_per_class {
        let label = (k % 2) as u32;
        let a = &coeffs[label as usize];
        let mut z = DMatrix::zeros(d, t);
        for i in 0..d {
            let innovation = (1.0 - a[i] * a[i]).sqrt();
            z[(i, 0)] = normal();
            for s in 1..t {
                z[(i, s)] = a[i] * z[(i, s - 1)] + innovation * normal();
            }
        }
        let mut x = &mixing * z;
        for v in x.iter_mut() {
            *v += cfg.noise_std * normal();
        }
        for mut row in x.row_iter_mut() {
            let mean = row.mean();
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t as f64;
            if var > 0.0 {
                row /= var.sqrt();
            }
        }
        epochs.push(Epoch::new(x, label)?);
    }
    Dataset::new(epochs, cfg.fs, vec!["class_0".into(), "class_1".into()])
}
