//! Butterworth band-pass design as cascaded biquads, and zero-phase application.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix};

use super::Epoch;
use crate::error::{Error, Result};

/// One second-order section, `H(z) = (b0 + b1 z⁻¹ + b2 z⁻²) / (1 + a1 z⁻¹ + a2 z⁻²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    fn response(&self, z_inv: Complex<f64>) -> Complex<f64> {
        let z2 = z_inv * z_inv;
        let num = Complex::new(self.b0, 0.0) + z_inv * self.b1 + z2 * self.b2;
        let den = Complex::new(1.0, 0.0) + z_inv * self.a1 + z2 * self.a2;
        num / den
    }

    /// Magnitude of the larger root of `z² + a1 z + a2`.
    pub fn pole_radius(&self) -> f64 {
        let disc = Complex::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        let r1 = (Complex::new(-self.a1, 0.0) + disc) / 2.0;
        let r2 = (Complex::new(-self.a1, 0.0) - disc) / 2.0;
        r1.norm().max(r2.norm())
    }

    /// Transposed direct-form-II state reached after a unit step has settled.
    fn step_state(&self) -> [f64; 2] {
        let gain = (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2);
        let s2 = self.b2 - self.a2 * gain;
        let s1 = self.b1 - self.a1 * gain + s2;
        [s1, s2]
    }
}

/// A cascade of biquads together with the design order.
#[derive(Debug, Clone, PartialEq)]
pub struct SosFilter {
    pub sections: Vec<Biquad>,
    pub order: usize,
}

impl SosFilter {
    /// `|H(e^{i2πf/fs})|`.
    pub fn magnitude(&self, f: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * f / fs;
        let z_inv = Complex::new(w.cos(), -w.sin());
        self.sections
            .iter()
            .map(|s| s.response(z_inv))
            .fold(Complex::new(1.0, 0.0), |acc, h| acc * h)
            .norm()
    }

    /// Samples of odd-symmetric extension added at each end in `filtfilt`.
    pub fn pad_len(&self) -> usize {
        3 * self.order
    }

    /// Minimum epoch length accepted by `filtfilt` (exclusive).
    pub fn min_len(&self) -> usize {
        3 * self.pad_len()
    }

    fn initial_states(&self) -> Vec<[f64; 2]> {
        let mut scale = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let zi = s.step_state();
                let out = [zi[0] * scale, zi[1] * scale];
                scale *= (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
                out
            })
            .collect()
    }

    fn run(&self, x: &mut [f64], zi: &[[f64; 2]]) {
        let x0 = x[0];
        for (s, z) in self.sections.iter().zip(zi) {
            let (mut s1, mut s2) = (z[0] * x0, z[1] * x0);
            for v in x.iter_mut() {
                let input = *v;
                let y = s.b0 * input + s1;
                s1 = s.b1 * input - s.a1 * y + s2;
                s2 = s.b2 * input - s.a2 * y;
                *v = y;
            }
        }
    }
}

/// Digital Butterworth band-pass of prototype order `order` (`order` biquads,
/// band-pass order `2·order`), via the bilinear transform with both band edges pre-warped.
pub fn design_bandpass(order: usize, lo_hz: f64, hi_hz: f64, fs: f64) -> Result<SosFilter> {
    if ![2, 4, 8].contains(&order) {
        return Err(Error::InvalidConfig(format!("filter order must be 2, 4 or 8, got {order}")));
    }
    if !(fs > 0.0 && lo_hz > 0.0 && lo_hz < hi_hz && hi_hz < fs / 2.0) {
        return Err(Error::InvalidBand(format!(
            "need 0 < lo < hi < fs/2, got lo={lo_hz} hi={hi_hz} fs={fs}"
        )));
    }
    let fs2 = 2.0 * fs;
    let w_lo = fs2 * (PI * lo_hz / fs).tan();
    let w_hi = fs2 * (PI * hi_hz / fs).tan();
    let bw = w_hi - w_lo;
    let w0_sq = w_lo * w_hi;

    // Analog band-pass poles with positive imaginary part; each forms a section with its conjugate.
    let mut upper = Vec::with_capacity(order);
    for k in 0..order {
        let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
        let proto = Complex::new(theta.cos(), theta.sin());
        let half = proto * (bw / 2.0);
        let root = (half * half - w0_sq).sqrt();
        for s in [half + root, half - root] {
            if s.im > 0.0 {
                upper.push(s);
            }
        }
    }
    if upper.len() != order {
        return Err(Error::NumericalError(format!(
            "expected {order} conjugate pole pairs, found {}",
            upper.len()
        )));
    }

    // Unit gain at the digital image of the analog centre frequency.
    let wc = 2.0 * (w0_sq.sqrt() / fs2).atan();
    let zc_inv = Complex::new(wc.cos(), -wc.sin());
    let sections = upper
        .into_iter()
        .map(|s| {
            let z = (Complex::new(fs2, 0.0) + s) / (Complex::new(fs2, 0.0) - s);
            let mut q = Biquad {
                b0: 1.0,
                b1: 0.0,
                b2: -1.0,
                a1: -2.0 * z.re,
                a2: z.norm_sqr(),
            };
            let g = 1.0 / q.response(zc_inv).norm();
            q.b0 *= g;
            q.b2 *= g;
            q
        })
        .collect::<Vec<_>>();
    if sections.iter().any(|s| s.pole_radius() >= 1.0) {
        return Err(Error::NumericalError("designed filter is unstable".into()));
    }
    Ok(SosFilter { sections, order })
}

/// Zero-phase forward-backward filtering of every channel, with odd-symmetric edge extension.
pub fn filtfilt(filter: &SosFilter, epoch: &Epoch) -> Result<Epoch> {
    let t = epoch.samples();
    if t <= filter.min_len() {
        return Err(Error::EpochTooShort {
            needed: filter.min_len(),
            got: t,
        });
    }
    let pad = filter.pad_len();
    let zi = filter.initial_states();
    let mut out = DMatrix::zeros(epoch.channels(), t);
    let mut buf = Vec::with_capacity(t + 2 * pad);
    for (ch, row) in epoch.data().row_iter().enumerate() {
        let x: Vec<f64> = row.iter().copied().collect();
        buf.clear();
        buf.extend((1..=pad).rev().map(|k| 2.0 * x[0] - x[k]));
        buf.extend_from_slice(&x);
        buf.extend((1..=pad).map(|k| 2.0 * x[t - 1] - x[t - 1 - k]));

        filter.run(&mut buf, &zi);
        buf.reverse();
        filter.run(&mut buf, &zi);
        buf.reverse();

        for (j, v) in buf[pad..pad + t].iter().enumerate() {
            out[(ch, j)] = *v;
        }
    }
    Epoch::new(out, epoch.label())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * freq * i as f64 / fs).sin()).collect()
    }

    fn epoch_of(x: &[f64]) -> Epoch {
        Epoch::new(DMatrix::from_row_slice(1, x.len(), x), 0).unwrap()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    fn mu_band() -> SosFilter {
        design_bandpass(4, 8.0, 32.0, 250.0).unwrap()
    }

    #[test]
    fn rejects_bad_bands() {
        assert!(matches!(design_bandpass(4, 0.0, 32.0, 250.0), Err(Error::InvalidBand(_))));
        assert!(matches!(design_bandpass(4, 32.0, 8.0, 250.0), Err(Error::InvalidBand(_))));
        assert!(matches!(design_bandpass(4, 8.0, 125.0, 250.0), Err(Error::InvalidBand(_))));
        assert!(design_bandpass(3, 8.0, 32.0, 250.0).is_err());
    }

    #[test]
    fn frequency_response_shape() {
        for order in [2, 4, 8] {
            let f = design_bandpass(order, 8.0, 32.0, 250.0).unwrap();
            assert_eq!(f.sections.len(), order);
            assert!(f.magnitude(0.0, 250.0) <= 1e-6);
            assert!((f.magnitude(16.0, 250.0) - 1.0).abs() <= 0.01);
            let edge = std::f64::consts::FRAC_1_SQRT_2;
            assert!((f.magnitude(8.0, 250.0) - edge).abs() <= 0.02, "order {order}");
            assert!((f.magnitude(32.0, 250.0) - edge).abs() <= 0.02, "order {order}");
            assert!(f.sections.iter().all(|s| s.pole_radius() < 1.0));
        }
    }

    #[test]
    fn filtfilt_zero_in_zero_out() {
        let out = filtfilt(&mu_band(), &epoch_of(&vec![0.0; 500])).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn filtfilt_pass_and_stop_band() {
        let fs = 250.0;
        let keep = |x: &Epoch| -> Vec<f64> {
            let v: Vec<f64> = x.data().row(0).iter().copied().collect();
            v[125..v.len() - 125].to_vec()
        };
        let x = epoch_of(&sine(16.0, fs, 1000));
        let y = filtfilt(&mu_band(), &x).unwrap();
        let ratio = rms(&keep(&y)) / rms(&keep(&x));
        assert!((ratio - 1.0).abs() <= 0.02, "pass-band ratio {ratio}");

        let x = epoch_of(&sine(2.0, fs, 1000));
        let y = filtfilt(&mu_band(), &x).unwrap();
        let ratio = rms(&keep(&y)) / rms(&keep(&x));
        assert!(ratio <= 0.01, "stop-band ratio {ratio}");
    }

    #[test]
    fn filtfilt_has_zero_phase() {
        let fs = 250.0;
        let n = 1000;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                (2.0 * PI * 11.0 * t).sin() + 0.7 * (2.0 * PI * 19.0 * t + 0.4).sin() + 0.5 * (2.0 * PI * 27.0 * t + 1.1).cos()
            })
            .collect();
        let y = filtfilt(&mu_band(), &epoch_of(&x)).unwrap();
        let y: Vec<f64> = y.data().row(0).iter().copied().collect();
        let lo = 100;
        let hi = n - 100;
        let xcorr = |lag: i64| -> f64 {
            (lo..hi).map(|i| x[i] * y[(i as i64 + lag) as usize]).sum()
        };
        let best = (-20..=20).max_by(|&a, &b| xcorr(a).total_cmp(&xcorr(b))).unwrap();
        assert_eq!(best, 0);
    }

    #[test]
    fn filtfilt_rejects_short_epochs() {
        let f = mu_band();
        let short = epoch_of(&vec![1.0; f.min_len()]);
        assert!(matches!(filtfilt(&f, &short), Err(Error::EpochTooShort { .. })));
        assert!(filtfilt(&f, &epoch_of(&vec![1.0; f.min_len() + 1])).is_ok());
    }
}
