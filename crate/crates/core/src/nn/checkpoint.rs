//! Bit-exact binary checkpoints.
//!
//! Layout: magic `RLGN1\n`; `u32` LE entry count; per entry a `u16` LE name
//! length, the UTF-8 name, a `u8` rank, `rank` x `u32` LE dims, then the
//! `f32` LE payload of `product(dims)` values.

use std::path::Path;

use thiserror::Error;

use super::{Param, Scalar, Sequential};

pub const MAGIC: &[u8; 6] = b"RLGN1\n";
const MAGIC_STEM: &[u8; 4] = b"RLGN";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint: bad magic bytes")]
    BadMagic,
    #[error("unsupported checkpoint version {0:?}")]
    VersionMismatch(char),
    #[error("checkpoint truncated at byte {0}")]
    Truncated(usize),
    #[error("{0} trailing bytes after last entry")]
    TrailingBytes(usize),
    #[error("entry name is not valid UTF-8")]
    BadName,
    #[error("entry `{0}` is too large to encode")]
    Oversized(String),
    #[error("missing entry `{0}`")]
    Missing(String),
    #[error("entry `{name}` has shape {found:?}, expected {expected:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("duplicate entry `{0}`")]
    Duplicate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

/// Ordered collection of named arrays.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub entries: Vec<Entry>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: Entry) -> Result<(), CheckpointError> {
        if self.get(&entry.name).is_some() {
            return Err(CheckpointError::Duplicate(entry.name));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Adds every parameter of `net` under `prefix.<param index>.<param name>`.
    pub fn add_network<T: Scalar>(
        &mut self,
        prefix: &str,
        net: &Sequential<T>,
    ) -> Result<(), CheckpointError> {
        for (i, p) in net.params().into_iter().enumerate() {
            self.push(Entry {
                name: format!("{prefix}.{i}.{}", p.name),
                shape: p.shape().to_vec(),
                values: p.values.iter().map(|v| v.as_f32()).collect(),
            })?;
        }
        Ok(())
    }

    /// Loads parameters written by [`Checkpoint::add_network`] into a network of
    /// identical architecture. Fails on any missing entry or shape mismatch.
    pub fn load_network<T: Scalar>(
        &self,
        prefix: &str,
        net: &mut Sequential<T>,
    ) -> Result<(), CheckpointError> {
        for (i, p) in net.params_mut().into_iter().enumerate() {
            load_param(self, &format!("{prefix}.{i}.{}", p.name), p)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CheckpointError> {
        let mut out = Vec::with_capacity(
            16 + self
                .entries
                .iter()
                .map(|e| 8 + e.name.len() + 4 * (e.shape.len() + e.values.len()))
                .sum::<usize>(),
        );
        out.extend_from_slice(MAGIC);
        let count = u32::try_from(self.entries.len())
            .map_err(|_| CheckpointError::Oversized("<entries>".into()))?;
        out.extend_from_slice(&count.to_le_bytes());
        for e in &self.entries {
            let too_big = || CheckpointError::Oversized(e.name.clone());
            let name_len = u16::try_from(e.name.len()).map_err(|_| too_big())?;
            let rank = u8::try_from(e.shape.len()).map_err(|_| too_big())?;
            if e.shape.iter().product::<usize>() != e.values.len() {
                return Err(CheckpointError::Shape {
                    name: e.name.clone(),
                    expected: e.shape.clone(),
                    found: vec![e.values.len()],
                });
            }
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(rank);
            for &d in &e.shape {
                let d = u32::try_from(d).map_err(|_| too_big())?;
                out.extend_from_slice(&d.to_le_bytes());
            }
            for v in &e.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < MAGIC.len() {
            return if MAGIC.starts_with(bytes) {
                Err(CheckpointError::Truncated(bytes.len()))
            } else {
                Err(CheckpointError::BadMagic)
            };
        }
        if &bytes[..4] != MAGIC_STEM || bytes[5] != b'\n' {
            return Err(CheckpointError::BadMagic);
        }
        if bytes[4] != MAGIC[4] {
            return Err(CheckpointError::VersionMismatch(bytes[4] as char));
        }
        let mut r = Reader {
            bytes,
            pos: MAGIC.len(),
        };
        let count = u32::from_le_bytes(r.take::<4>()?);
        let mut ck = Checkpoint::new();
        for _ in 0..count {
            let name_len = u16::from_le_bytes(r.take::<2>()?) as usize;
            let name = std::str::from_utf8(r.slice(name_len)?)
                .map_err(|_| CheckpointError::BadName)?
                .to_string();
            let rank = r.take::<1>()?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(u32::from_le_bytes(r.take::<4>()?) as usize);
            }
            let n: usize = shape.iter().product();
            let payload = r.slice(n.checked_mul(4).ok_or(CheckpointError::Truncated(r.pos))?)?;
            let values = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            ck.push(Entry {
                name,
                shape,
                values,
            })?;
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn load_param<T: Scalar>(
    ck: &Checkpoint,
    name: &str,
    p: &mut Param<T>,
) -> Result<(), CheckpointError> {
    let e = ck
        .get(name)
        .ok_or_else(|| CheckpointError::Missing(name.to_string()))?;
    if e.shape != p.shape() {
        return Err(CheckpointError::Shape {
            name: name.to_string(),
            expected: p.shape().to_vec(),
            found: e.shape.clone(),
        });
    }
    for (dst, &src) in p.values.iter_mut().zip(&e.values) {
        *dst = T::of(src as f64);
    }
    p.zero_grad();
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn slice(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(CheckpointError::Truncated(self.bytes.len())),
        }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        Ok(self.slice(N)?.try_into().expect("slice has length N"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Layer;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.push(Entry {
            name: "a.0.weight".into(),
            shape: vec![2, 3],
            values: vec![1.0, -0.0, f32::MIN_POSITIVE, 3.5e-40, f32::MAX, -7.25],
        })
        .unwrap();
        ck.push(Entry {
            name: "scalar".into(),
            shape: vec![],
            values: vec![0.1],
        })
        .unwrap();
        ck
    }

    #[test]
    fn header_layout() {
        let b = sample().to_bytes().unwrap();
        assert_eq!(&b[..6], b"RLGN1\n");
        assert_eq!(&b[6..10], &2u32.to_le_bytes());
        assert_eq!(&b[10..12], &10u16.to_le_bytes());
        assert_eq!(&b[12..22], b"a.0.weight");
        assert_eq!(b[22], 2);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        for (a, b) in ck.entries.iter().zip(&back.entries) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.shape, b.shape);
            let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.values), bits(&b.values));
        }
    }

    #[test]
    fn truncation_and_magic_errors_are_distinct() {
        let b = sample().to_bytes().unwrap();
        assert!(matches!(
            Checkpoint::from_bytes(&b[..b.len() - 1]),
            Err(CheckpointError::Truncated(_))
        ));
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(
            Checkpoint::from_bytes(&bad),
            Err(CheckpointError::BadMagic)
        ));
        let mut v2 = b.clone();
        v2[4] = b'2';
        assert!(matches!(
            Checkpoint::from_bytes(&v2),
            Err(CheckpointError::VersionMismatch('2'))
        ));
        let mut extra = b;
        extra.push(0);
        assert!(matches!(
            Checkpoint::from_bytes(&extra),
            Err(CheckpointError::TrailingBytes(1))
        ));
        assert!(matches!(
            Checkpoint::from_bytes(b"RLG"),
            Err(CheckpointError::Truncated(_))
        ));
    }

    #[test]
    fn network_round_trip_and_shape_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Sequential::<f32>::mlp(&[4, 6, 2], Layer::Relu, None, false, &mut rng);
        let mut ck = Checkpoint::new();
        ck.add_network("net", &net).unwrap();
        let ck = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        let mut other = Sequential::<f32>::mlp(&[4, 6, 2], Layer::Relu, None, false, &mut rng);
        assert_ne!(other, net);
        ck.load_network("net", &mut other).unwrap();
        assert_eq!(other, net);

        let mut wrong = Sequential::<f32>::mlp(&[4, 5, 2], Layer::Relu, None, false, &mut rng);
        assert!(matches!(
            ck.load_network("net", &mut wrong),
            Err(CheckpointError::Shape { .. })
        ));
        assert!(matches!(
            ck.load_network("missing", &mut other),
            Err(CheckpointError::Missing(_))
        ));
    }

    proptest! {
        #[test]
        fn arbitrary_payload_round_trips(bits in proptest::collection::vec(any::<u32>(), 0..64), name in "[a-z.0-9]{1,20}") {
            let values: Vec<f32> = bits.iter().map(|&b| f32::from_bits(b)).collect();
            let mut ck = Checkpoint::new();
            ck.push(Entry { name, shape: vec![values.len()], values }).unwrap();
            let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
            let a: Vec<u32> = ck.entries[0].values.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.entries[0].values.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
