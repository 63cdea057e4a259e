//! EPZ: a flat little-endian container for a labelled epoch dataset.
//!
//! ```text
//! "BTAC" | version u16 = 1 | reserved u16 = 0 | n_epochs u32 | d u32 | T u32 | fs f64
//! n_classes u32 | n_classes × (u16 length + UTF-8 name)
//! n_epochs × label u32
//! n_epochs × (d·T f64, channel-major)
//! ```

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use super::{Dataset, Epoch};
use crate::error::{Error, Result};

pub const EPZ_MAGIC: &[u8; 4] = b"BTAC";
pub const EPZ_VERSION: u16 = 1;

pub fn encode_epz(ds: &Dataset) -> Result<Vec<u8>> {
    ds.validate()?;
    let (d, t) = (ds.channels(), ds.samples());
    let mut out = Vec::with_capacity(32 + ds.len() * (4 + 8 * d * t));
    out.extend_from_slice(EPZ_MAGIC);
    out.extend_from_slice(&EPZ_VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    for v in [ds.len(), d, t] {
        out.extend_from_slice(&to_u32(v, "dimension")?.to_le_bytes());
    }
    out.extend_from_slice(&ds.fs.to_le_bytes());
    out.extend_from_slice(&to_u32(ds.class_names.len(), "class count")?.to_le_bytes());
    for name in &ds.class_names {
        let len = u16::try_from(name.len())
            .map_err(|_| Error::InvalidInput(format!("class name too long: {} bytes", name.len())))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    for e in &ds.epochs {
        out.extend_from_slice(&e.label().to_le_bytes());
    }
    for e in &ds.epochs {
        for row in e.data().row_iter() {
            for v in row.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidInput(format!("{what} {v} does not fit in u32")))
}

pub fn write_epz(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_epz(ds)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_epz(path: impl AsRef<Path>) -> Result<Dataset> {
    decode_epz(&fs::read(path)?)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.error(format!(
                "truncated while reading {what}: need {n} bytes, {} left",
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn error(&self, reason: String) -> Error {
        self.error_at(self.pos, reason)
    }

    fn error_at(&self, offset: usize, reason: String) -> Error {
        Error::FormatError {
            offset: offset as u64,
            reason,
        }
    }
}

pub fn decode_epz(buf: &[u8]) -> Result<Dataset> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4, "magic")? != EPZ_MAGIC {
        return Err(r.error_at(0, "bad magic".into()));
    }
    let version = r.u16("version")?;
    if version != EPZ_VERSION {
        return Err(r.error_at(4, format!("unsupported version {version}")));
    }
    let reserved = r.u16("reserved")?;
    if reserved != 0 {
        return Err(r.error_at(6, format!("reserved field is {reserved}, expected 0")));
    }
    let n_epochs = r.u32("n_epochs")? as usize;
    let d = r.u32("d")? as usize;
    let t = r.u32("T")? as usize;
    let fs_pos = r.pos;
    let fs = r.f64("fs")?;
    if !(fs > 0.0 && fs.is_finite()) {
        return Err(r.error_at(fs_pos, format!("sampling rate {fs} is not positive")));
    }
    if n_epochs > 0 && (d < 1 || t < 2) {
        return Err(r.error_at(12, format!("invalid epoch shape {d}x{t}")));
    }
    let n_classes = r.u32("n_classes")? as usize;
    let mut class_names = Vec::with_capacity(n_classes.min(1024));
    for _ in 0..n_classes {
        let len = r.u16("class name length")? as usize;
        let start = r.pos;
        let bytes = r.take(len, "class name")?;
        let name = std::str::from_utf8(bytes).map_err(|_| r.error_at(start, "class name is not UTF-8".into()))?;
        class_names.push(name.to_string());
    }
    let mut labels = Vec::with_capacity(n_epochs.min(1 << 20));
    for _ in 0..n_epochs {
        let at = r.pos;
        let label = r.u32("label")?;
        if label as usize >= n_classes {
            return Err(r.error_at(at, format!("label {label} out of range for {n_classes} classes")));
        }
        labels.push(label);
    }
    let payload = d
        .checked_mul(t)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| r.error_at(8, "epoch size overflows".into()))?;
    let mut epochs = Vec::with_capacity(labels.len());
    for (i, label) in labels.into_iter().enumerate() {
        let at = r.pos;
        let bytes = r.take(payload, &format!("epoch {i} payload"))?;
        let values: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let data = DMatrix::from_row_slice(d, t, &values);
        let epoch = Epoch::new(data, label).map_err(|e| r.error_at(at, format!("epoch {i}: {e}")))?;
        epochs.push(epoch);
    }
    if r.pos != buf.len() {
        return Err(r.error(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Ok(Dataset {
        epochs,
        fs,
        class_names,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_dataset() -> Dataset {
        let a = Epoch::new(DMatrix::from_row_slice(2, 3, &[1.0, -2.5, 3.0, 0.0, 1e-300, -7.25]), 0).unwrap();
        let b = Epoch::new(DMatrix::from_row_slice(2, 3, &[0.5, 0.25, f64::MIN_POSITIVE, 9.0, 8.0, 7.0]), 1).unwrap();
        Dataset::new(vec![a, b], 250.0, vec!["left".into(), "right".into()]).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ds = small_dataset();
        let bytes = encode_epz(&ds).unwrap();
        let back = decode_epz(&bytes).unwrap();
        assert_eq!(back, ds);
        assert_eq!(encode_epz(&back).unwrap(), bytes);
    }

    #[test]
    fn layout_is_channel_major() {
        let bytes = encode_epz(&small_dataset()).unwrap();
        // header 32 + names (2+4)+(2+5) + labels 8
        let payload = 32 + 6 + 7 + 8;
        let first = f64::from_le_bytes(bytes[payload..payload + 8].try_into().unwrap());
        let second = f64::from_le_bytes(bytes[payload + 8..payload + 16].try_into().unwrap());
        assert_eq!((first, second), (1.0, -2.5));
        assert_eq!(bytes.len(), payload + 2 * 6 * 8);
    }

    #[test]
    fn bad_magic_reports_offset_zero() {
        let mut bytes = encode_epz(&small_dataset()).unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_epz(&bytes), Err(Error::FormatError { offset: 0, .. })));
    }

    #[test]
    fn bad_version_is_rejected() {
        let mut bytes = encode_epz(&small_dataset()).unwrap();
        bytes[4] = 2;
        assert!(matches!(decode_epz(&bytes), Err(Error::FormatError { offset: 4, .. })));
    }

    #[test]
    fn missing_epoch_reports_payload_offset() {
        let ds = small_dataset();
        let mut bytes = encode_epz(&ds).unwrap();
        // declare three epochs; the label table now swallows four payload bytes
        bytes[8..12].copy_from_slice(&3u32.to_le_bytes());
        let err = decode_epz(&bytes).unwrap_err();
        let Error::FormatError { offset, .. } = err else { panic!("{err}") };
        // header 32 + names 13 + three labels 12; only one full 48-byte payload remains
        assert_eq!(offset, 32 + 13 + 12 + 48);
    }

    #[test]
    fn empty_dataset_round_trips() {
        let ds = Dataset::new(vec![], 100.0, vec!["a".into()]).unwrap();
        assert_eq!(decode_epz(&encode_epz(&ds).unwrap()).unwrap(), ds);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.epz");
        let ds = small_dataset();
        write_epz(&ds, &path).unwrap();
        assert_eq!(read_epz(&path).unwrap(), ds);
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(
            d in 1usize..4,
            t in 2usize..9,
            n in 0usize..5,
            fs in 1.0f64..2000.0,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let epochs = (0..n)
                .map(|i| {
                    let data = DMatrix::from_fn(d, t, |_, _| rng.random_range(-1e6..1e6));
                    Epoch::new(data, (i % 3) as u32).unwrap()
                })
                .collect();
            let ds = Dataset::new(epochs, fs, vec!["x".into(), "yy".into(), "zzz".into()]).unwrap();
            let bytes = encode_epz(&ds).unwrap();
            prop_assert_eq!(decode_epz(&bytes).unwrap(), ds);
        }
    }
}
