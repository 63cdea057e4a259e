//! Epochs, datasets, and the signal conditioning applied before covariance estimation.

mod epz;
mod filter;
mod synth;

pub use epz::{decode_epz, encode_epz, read_epz, write_epz, EPZ_MAGIC, EPZ_VERSION};
pub use filter::{design_bandpass, filtfilt, Biquad, SosFilter};
pub use synth::{synth_var, SynthConfig};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// One trial: a `d × T` real signal (channels are rows) with a class label.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    data: DMatrix<f64>,
    label: u32,
}

impl Epoch {
    pub fn new(data: DMatrix<f64>, label: u32) -> Result<Self> {
        if data.nrows() < 1 || data.ncols() < 2 {
            return Err(Error::InvalidInput(format!(
                "epoch needs d >= 1 and T >= 2, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("epoch contains non-finite samples".into()));
        }
        Ok(Self { data, label })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn label(&self) -> u32 {
        self.label
    }

    pub fn channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn with_label(&self, label: u32) -> Self {
        Self {
            data: self.data.clone(),
            label,
        }
    }
}

/// A collection of equally shaped epochs recorded at a common sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub epochs: Vec<Epoch>,
    pub fs: f64,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn new(epochs: Vec<Epoch>, fs: f64, class_names: Vec<String>) -> Result<Self> {
        let ds = Self {
            epochs,
            fs,
            class_names,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Structural validity: positive rate, common shape, labels naming a class.
    pub fn validate(&self) -> Result<()> {
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return Err(Error::InvalidInput(format!("sampling rate must be positive, got {}", self.fs)));
        }
        if let Some(first) = self.epochs.first() {
            let (d, t) = (first.channels(), first.samples());
            for (i, e) in self.epochs.iter().enumerate() {
                if e.channels() != d || e.samples() != t {
                    return Err(Error::ShapeError(format!(
                        "epoch {i} is {}x{}, expected {d}x{t}",
                        e.channels(),
                        e.samples()
                    )));
                }
                if e.label() as usize >= self.class_names.len() {
                    return Err(Error::InvalidInput(format!(
                        "epoch {i} has label {} but only {} classes are named",
                        e.label(),
                        self.class_names.len()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Additionally require at least two distinct labels.
    pub fn validate_for_classification(&self) -> Result<()> {
        self.validate()?;
        let mut labels: Vec<u32> = self.epochs.iter().map(Epoch::label).collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() < 2 {
            return Err(Error::DegenerateLabels(format!(
                "need at least two classes, found {}",
                labels.len()
            )));
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.epochs.first().map_or(0, Epoch::channels)
    }

    pub fn samples(&self) -> usize {
        self.epochs.first().map_or(0, Epoch::samples)
    }

    pub fn labels(&self) -> Vec<u32> {
        self.epochs.iter().map(Epoch::label).collect()
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }
}

/// Remove each channel's mean.
pub fn center(epoch: &Epoch) -> Epoch {
    let mut data = epoch.data.clone();
    for mut row in data.row_iter_mut() {
        let mean = row.mean();
        row.add_scalar_mut(-mean);
    }
    Epoch {
        data,
        label: epoch.label,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_examples() {
        let e = Epoch::new(DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 5.0, 5.0, 5.0]), 0).unwrap();
        let c = center(&e);
        assert_eq!(c.data().row(0).iter().copied().collect::<Vec<_>>(), vec![-1.0, 0.0, 1.0]);
        assert!(c.data().row(1).iter().all(|&v| v == 0.0));
        let cc = center(&c);
        assert!((cc.data() - c.data()).amax() <= 1e-15);
    }

    #[test]
    fn center_leaves_small_residual_mean() {
        let data = DMatrix::from_fn(3, 257, |i, t| ((t * (i + 3)) as f64 * 0.37).sin() * 4.0 + 10.0 * i as f64);
        let c = center(&Epoch::new(data, 1).unwrap());
        for row in c.data().row_iter() {
            let rms = (row.norm_squared() / row.len() as f64).sqrt();
            assert!(row.mean().abs() <= 1e-12 * rms);
        }
    }

    #[test]
    fn epoch_validation() {
        assert!(Epoch::new(DMatrix::zeros(1, 1), 0).is_err());
        assert!(Epoch::new(DMatrix::from_element(1, 4, f64::NAN), 0).is_err());
        assert!(Epoch::new(DMatrix::zeros(1, 2), 0).is_ok());
    }

    #[test]
    fn dataset_validation() {
        let a = Epoch::new(DMatrix::zeros(2, 4), 0).unwrap();
        let b = Epoch::new(DMatrix::zeros(2, 5), 1).unwrap();
        let names = vec!["a".to_string(), "b".to_string()];
        assert!(Dataset::new(vec![a.clone(), b], 100.0, names.clone()).is_err());
        assert!(Dataset::new(vec![a.clone()], 0.0, names.clone()).is_err());
        assert!(Dataset::new(vec![a.with_label(5)], 100.0, names.clone()).is_err());
        let one_class = Dataset::new(vec![a.clone(), a.clone()], 100.0, names).unwrap();
        assert!(matches!(one_class.validate_for_classification(), Err(Error::DegenerateLabels(_))));
    }
}
