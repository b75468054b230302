//! Binary `|ψ|²` snapshots.
//!
//! Layout (little endian): magic `PSI2`, `u32` version, `u32` dims,
//! `u32` n, `f64` box length, `f64` time, then `n^dims` `f64` densities in
//! grid order.

use thiserror::Error;

use crate::grid::{GridSpec, GridSpinor};

const MAGIC: &[u8; 4] = b"PSI2";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8 + 8;
/// Largest node count a decoder accepts.
pub const MAX_NODES: usize = 1 << 24;

#[derive(Debug, Error, PartialEq)]
pub enum SnapshotError {
    #[error("snapshot truncated: {0} bytes")]
    Truncated(usize),
    #[error("bad magic")]
    Magic,
    #[error("unsupported version {0}")]
    Version(u32),
    #[error("invalid header: {0}")]
    Header(String),
    #[error("expected {expected} bytes of data, found {found}")]
    Length { expected: usize, found: usize },
    #[error("density at node {0} is negative or not finite")]
    Value(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub dims: u32,
    pub n: u32,
    pub length: f64,
    pub t: f64,
    pub density: Vec<f64>,
}

impl Snapshot {
    pub fn of(psi: &GridSpinor, t: f64) -> Self {
        Self {
            dims: psi.grid.dims as u32,
            n: psi.grid.n as u32,
            length: psi.grid.length,
            t,
            density: psi.density(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.density.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.dims.to_le_bytes());
        out.extend_from_slice(&self.n.to_le_bytes());
        out.extend_from_slice(&self.length.to_le_bytes());
        out.extend_from_slice(&self.t.to_le_bytes());
        for d in &self.density {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, SnapshotError> {
        if bytes.len() < HEADER_LEN {
            return Err(SnapshotError::Truncated(bytes.len()));
        }
        if &bytes[..4] != MAGIC {
            return Err(SnapshotError::Magic);
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
        let version = u32_at(4);
        if version != VERSION {
            return Err(SnapshotError::Version(version));
        }
        let (dims, n, length, t) = (u32_at(8), u32_at(12), f64_at(16), f64_at(24));
        GridSpec::new(dims as usize, n as usize, length, [0.0; 2]).map_err(|e| SnapshotError::Header(e.to_string()))?;
        if !t.is_finite() {
            return Err(SnapshotError::Header("time is not finite".into()));
        }
        let nodes = (n as usize)
            .checked_pow(dims)
            .filter(|&k| k <= MAX_NODES)
            .ok_or_else(|| SnapshotError::Header(format!("grid {n}^{dims} exceeds {MAX_NODES} nodes")))?;
        let data = &bytes[HEADER_LEN..];
        if data.len() != 8 * nodes {
            return Err(SnapshotError::Length {
                expected: 8 * nodes,
                found: data.len(),
            });
        }
        let density: Vec<f64> = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if let Some(i) = density.iter().position(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(SnapshotError::Value(i));
        }
        Ok(Self {
            dims,
            n,
            length,
            t,
            density,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gamma::{Spinor, C64};
    use proptest::prelude::*;

    fn sample() -> Snapshot {
        let g = GridSpec::centered(2, 8, 3.0, [0.0, 0.0]).unwrap();
        let psi = GridSpinor::from_fn(g, 0.1, |x| {
            let a = C64::new((-x[0] * x[0] - x[1] * x[1]).exp(), 0.0);
            Spinor::new(a, a * 0.5, C64::new(0.0, 0.0), a)
        });
        Snapshot::of(&psi, 1.25)
    }

    #[test]
    fn round_trip() {
        let s = sample();
        let bytes = s.encode();
        assert_eq!(bytes.len(), HEADER_LEN + 8 * 64);
        assert_eq!(Snapshot::decode(&bytes).unwrap(), s);
    }

    #[test]
    fn rejects_malformed_input() {
        let bytes = sample().encode();
        assert!(matches!(
            Snapshot::decode(&bytes[..10]),
            Err(SnapshotError::Truncated(10))
        ));
        let mut b = bytes.clone();
        b[0] = b'X';
        assert_eq!(Snapshot::decode(&b), Err(SnapshotError::Magic));
        let mut b = bytes.clone();
        b[4] = 9;
        assert_eq!(Snapshot::decode(&b), Err(SnapshotError::Version(9)));
        let mut b = bytes.clone();
        b[12] = 7;
        assert!(matches!(Snapshot::decode(&b), Err(SnapshotError::Header(_))));
        assert!(matches!(
            Snapshot::decode(&bytes[..bytes.len() - 1]),
            Err(SnapshotError::Length { .. })
        ));
        let mut b = bytes.clone();
        let o = HEADER_LEN + 8 * 3;
        b[o..o + 8].copy_from_slice(&(-1.0f64).to_le_bytes());
        assert_eq!(Snapshot::decode(&b), Err(SnapshotError::Value(3)));
        let mut b = bytes;
        b[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(Snapshot::decode(&b).is_err());
    }

    proptest! {
        #[test]
        fn decoder_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..200)) {
            let _ = Snapshot::decode(&bytes);
        }

        #[test]
        fn encode_decode_is_identity(t in -1e3f64..1e3, vals in proptest::collection::vec(0.0f64..10.0, 16)) {
            let s = Snapshot { dims: 2, n: 4, length: 2.0, t, density: vals };
            prop_assert_eq!(Snapshot::decode(&s.encode()).unwrap(), s);
        }
    }
}
