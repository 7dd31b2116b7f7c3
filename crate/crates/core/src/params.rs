//! Flat parameter vectors and the elementwise arithmetic every aggregator
//! is built from.
//!
//! A [`ParameterVector`] is an ordered, immutable sequence of `f64` model
//! weights. Within one run every client model and the global model share the
//! same length, so all operations here are defined elementwise. Vectors are
//! validated to be non-empty and fully finite on construction, and every
//! operation re-validates its output, so a `ParameterVector` in hand never
//! contains NaN or infinity.
//!
//! The flattening convention used throughout the crate is layer-major:
//! each layer's weight matrix in row-major order, followed by that layer's
//! biases, then the next layer.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Magic bytes at the start of every checkpoint file.
const CHECKPOINT_MAGIC: &[u8; 4] = b"FAGG";
/// Current checkpoint format version.
const CHECKPOINT_VERSION: u8 = 1;

/// An ordered, immutable vector of model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    values: Vec<f64>,
}

impl ParameterVector {
    /// Builds a vector, rejecting empty or non-finite input.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("parameter vector"));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("parameter vector"));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Multiplies every element by `c`.
    pub fn scale(&self, c: f64) -> Result<Self> {
        if !c.is_finite() {
            return Err(Error::NonFinite("scale factor"));
        }
        Self::new(self.values.iter().map(|v| c * v).collect())
    }

    /// Elementwise sum of two vectors of equal length.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        Self::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    /// Elementwise difference `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        Self::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }
}

/// Computes `sum_i weights[i] * vectors[i]`.
///
/// Accumulation runs left to right in the order given; callers that need the
/// canonical deterministic order (ascending client id) must sort before
/// calling. Accumulation is in double precision.
pub fn weighted_sum(vectors: &[&ParameterVector], weights: &[f64]) -> Result<ParameterVector> {
    if vectors.is_empty() {
        return Err(Error::EmptyInput("weighted_sum vectors"));
    }
    if vectors.len() != weights.len() {
        return Err(Error::LengthMismatch {
            left: vectors.len(),
            right: weights.len(),
        });
    }
    if !weights.iter().all(|w| w.is_finite()) {
        return Err(Error::NonFinite("weights"));
    }
    let dim = vectors[0].len();
    for v in &vectors[1..] {
        if v.len() != dim {
            return Err(Error::LengthMismatch {
                left: dim,
                right: v.len(),
            });
        }
    }
    let mut acc = vec![0.0f64; dim];
    for (v, &w) in vectors.iter().zip(weights) {
        for (a, x) in acc.iter_mut().zip(v.values()) {
            *a += w * x;
        }
    }
    ParameterVector::new(acc)
}

/// Writes a checkpoint: magic `FAGG`, version byte, little-endian u64 length,
/// then each parameter as a little-endian 64-bit float. Round-trips bit-exactly.
pub fn write_checkpoint(path: &Path, params: &ParameterVector) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path.display().to_string(), e);
    w.write_all(CHECKPOINT_MAGIC).map_err(io_err)?;
    w.write_all(&[CHECKPOINT_VERSION]).map_err(io_err)?;
    w.write_all(&(params.len() as u64).to_le_bytes())
        .map_err(io_err)?;
    for v in params.values() {
        w.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Reads a checkpoint written by [`write_checkpoint`].
pub fn read_checkpoint(path: &Path) -> Result<ParameterVector> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = BufReader::new(file);
    let io_err = |e| Error::io(path.display().to_string(), e);
    let bad = |reason: &str| Error::BadCheckpoint {
        path: path.display().to_string(),
        reason: reason.to_string(),
    };

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(bad("wrong magic bytes"));
    }
    let mut version = [0u8; 1];
    r.read_exact(&mut version).map_err(io_err)?;
    if version[0] != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported version {}", version[0])));
    }
    let mut len_bytes = [0u8; 8];
    r.read_exact(&mut len_bytes).map_err(io_err)?;
    let len = u64::from_le_bytes(len_bytes) as usize;
    if len == 0 {
        return Err(bad("zero-length parameter vector"));
    }
    let mut values = Vec::with_capacity(len);
    let mut buf = [0u8; 8];
    for _ in 0..len {
        r.read_exact(&mut buf).map_err(io_err)?;
        values.push(f64::from_le_bytes(buf));
    }
    ParameterVector::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv(values: &[f64]) -> ParameterVector {
        ParameterVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn scale_halves_elements() {
        assert_eq!(pv(&[1.0, -2.0]).scale(0.5).unwrap(), pv(&[0.5, -1.0]));
    }

    #[test]
    fn scale_by_one_is_identity_bit_exact() {
        let p = pv(&[0.1, -0.2, 3.75]);
        let scaled = p.scale(1.0).unwrap();
        for (a, b) in scaled.values().iter().zip(p.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn scale_by_zero_annihilates() {
        let p = pv(&[1.0, -7.5, 2.0]);
        assert!(p.scale(0.0).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scale_rejects_non_finite_factor() {
        assert!(pv(&[1.0]).scale(f64::NAN).is_err());
        assert!(pv(&[1.0]).scale(f64::INFINITY).is_err());
    }

    #[test]
    fn add_sums_elementwise() {
        assert_eq!(pv(&[1.0]).add(&pv(&[2.0])).unwrap(), pv(&[3.0]));
        assert_eq!(
            pv(&[1.0, 2.0]).add(&pv(&[0.5, -2.0])).unwrap(),
            pv(&[1.5, 0.0])
        );
    }

    #[test]
    fn add_zero_is_identity() {
        let p = pv(&[1.0, -2.0, 0.25]);
        assert_eq!(p.add(&pv(&[0.0, 0.0, 0.0])).unwrap(), p);
    }

    #[test]
    fn add_rejects_length_mismatch() {
        let err = pv(&[1.0]).add(&pv(&[1.0, 2.0])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('1') && msg.contains('2'), "got: {msg}");
    }

    #[test]
    fn constructor_rejects_empty_and_non_finite() {
        assert!(ParameterVector::new(vec![]).is_err());
        assert!(ParameterVector::new(vec![f64::NAN]).is_err());
        assert!(ParameterVector::new(vec![1.0, f64::NEG_INFINITY]).is_err());
    }

    #[test]
    fn weighted_sum_averages_two_vectors() {
        let (a, b) = (pv(&[2.0]), pv(&[4.0]));
        let r = weighted_sum(&[&a, &b], &[0.5, 0.5]).unwrap();
        assert_eq!(r, pv(&[3.0]));
    }

    #[test]
    fn weighted_sum_single_vector_unit_weight() {
        let p = pv(&[1.5, -0.5]);
        assert_eq!(weighted_sum(&[&p], &[1.0]).unwrap(), p);
    }

    #[test]
    fn weighted_sum_three_vectors_matches_scalar_arithmetic() {
        // Oracle: per-coordinate scalar arithmetic done by hand.
        // 0.2*1 + 0.3*0 + 0.5*1 = 0.7 ; 0.2*0 + 0.3*1 + 0.5*1 = 0.8
        let (a, b, c) = (pv(&[1.0, 0.0]), pv(&[0.0, 1.0]), pv(&[1.0, 1.0]));
        let r = weighted_sum(&[&a, &b, &c], &[0.2, 0.3, 0.5]).unwrap();
        assert!((r.values()[0] - 0.7).abs() < 1e-15);
        assert!((r.values()[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn weighted_sum_rejects_empty_and_mismatch() {
        assert!(weighted_sum(&[], &[]).is_err());
        let (a, b) = (pv(&[1.0]), pv(&[1.0, 2.0]));
        assert!(weighted_sum(&[&a, &b], &[0.5, 0.5]).is_err());
        assert!(weighted_sum(&[&a], &[0.5, 0.5]).is_err());
        assert!(weighted_sum(&[&a], &[f64::NAN]).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let p = pv(&[0.1, -0.0, 1.0 / 3.0, f64::MIN_POSITIVE, -123.456]);
        write_checkpoint(&path, &p).unwrap();
        let q = read_checkpoint(&path).unwrap();
        assert_eq!(p.len(), q.len());
        for (a, b) in p.values().iter().zip(q.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn checkpoint_rejects_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bogus.ckpt");
        std::fs::write(&path, b"NOPE\x01\x01\x00\x00\x00\x00\x00\x00\x00").unwrap();
        assert!(read_checkpoint(&path).is_err());
    }

    #[test]
    fn checkpoint_header_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hdr.ckpt");
        write_checkpoint(&path, &pv(&[1.0, 2.0])).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[0..4], b"FAGG");
        assert_eq!(bytes[4], 1);
        assert_eq!(u64::from_le_bytes(bytes[5..13].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 4 + 1 + 8 + 16);
    }

    proptest! {
        #[test]
        fn uniform_weights_equal_simple_mean(
            vals in proptest::collection::vec(
                proptest::collection::vec(-100.0f64..100.0, 4), 1..8)
        ) {
            let vecs: Vec<ParameterVector> =
                vals.iter().map(|v| pv(v)).collect();
            let refs: Vec<&ParameterVector> = vecs.iter().collect();
            let n = refs.len();
            let w = vec![1.0 / n as f64; n];
            let r = weighted_sum(&refs, &w).unwrap();
            for j in 0..4 {
                let mean: f64 = vals.iter().map(|v| v[j]).sum::<f64>() / n as f64;
                let denom = mean.abs().max(1.0);
                prop_assert!((r.values()[j] - mean).abs() / denom < 1e-12);
            }
        }

        #[test]
        fn scale_distributes_over_add(
            a in proptest::collection::vec(-100.0f64..100.0, 1..6),
            c in -10.0f64..10.0,
        ) {
            let b: Vec<f64> = a.iter().map(|x| x * 0.5 - 1.0).collect();
            let (pa, pb) = (pv(&a), pv(&b));
            let lhs = pa.add(&pb).unwrap().scale(c).unwrap();
            let rhs = pa.scale(c).unwrap().add(&pb.scale(c).unwrap()).unwrap();
            for (l, r) in lhs.values().iter().zip(rhs.values()) {
                let denom = l.abs().max(1.0);
                prop_assert!((l - r).abs() / denom < 1e-12);
            }
        }
    }
}
