//! Symbol/outcome frames and their binary file format.
//!
//! File layout: the ASCII magic `SQZF`, a version byte (currently 1), the symbol count as
//! a little-endian `u64`, then `alice_x`, `alice_p`, `bob_X`, `bob_P` as contiguous
//! little-endian `f64` arrays. Ground truth is not persisted.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::moments::Moments;

pub const FRAME_MAGIC: [u8; 4] = *b"SQZF";
pub const FRAME_VERSION: u8 = 1;

/// Parameters a simulated frame was generated with.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTruth {
    pub eta: f64,
    pub eps_x: f64,
    pub eps_p: f64,
    /// Receiver phase at the first symbol.
    pub theta0: f64,
    /// Per-symbol receiver phase; empty when the phase is constant at `theta0`.
    pub theta: Vec<f64>,
    /// Rotation between Alice's recorded symbols and the transmitted displacement.
    pub modulation_offset: f64,
}

impl FrameTruth {
    pub fn theta_at(&self, k: usize) -> f64 {
        self.theta.get(k).copied().unwrap_or(self.theta0)
    }
}

/// Alice's symbols and Bob's heterodyne outcomes for one frame, in SNU.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFrame {
    pub alice_x: Vec<f64>,
    pub alice_p: Vec<f64>,
    pub bob_x: Vec<f64>,
    pub bob_p: Vec<f64>,
    pub truth: Option<FrameTruth>,
    pub seed: u64,
}

impl SampleFrame {
    pub fn new(
        alice_x: Vec<f64>,
        alice_p: Vec<f64>,
        bob_x: Vec<f64>,
        bob_p: Vec<f64>,
    ) -> Result<Self> {
        let n = alice_x.len();
        if n == 0 || alice_p.len() != n || bob_x.len() != n || bob_p.len() != n {
            return Err(Error::InvalidArgument(
                "frame columns must be non-empty and of equal length".into(),
            ));
        }
        Ok(SampleFrame {
            alice_x,
            alice_p,
            bob_x,
            bob_p,
            truth: None,
            seed: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.alice_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alice_x.is_empty()
    }

    pub fn moments(&self) -> Result<Moments> {
        Moments::from_columns(&self.alice_x, &self.alice_p, &self.bob_x, &self.bob_p)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e: std::io::Error| Error::FrameFormat(e.to_string());
        w.write_all(&FRAME_MAGIC).map_err(io)?;
        w.write_all(&[FRAME_VERSION]).map_err(io)?;
        w.write_all(&(self.len() as u64).to_le_bytes())
            .map_err(io)?;
        let mut buf = Vec::with_capacity(8 * self.len());
        for col in [&self.alice_x, &self.alice_p, &self.bob_x, &self.bob_p] {
            buf.clear();
            for v in col.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let io = |e: std::io::Error| Error::FrameFormat(e.to_string());
        let mut head = [0u8; 13];
        r.read_exact(&mut head).map_err(io)?;
        if head[..4] != FRAME_MAGIC {
            return Err(Error::FrameFormat("bad magic, not a frame file".into()));
        }
        if head[4] != FRAME_VERSION {
            return Err(Error::FrameFormat(format!(
                "unsupported frame version {}",
                head[4]
            )));
        }
        let n = u64::from_le_bytes(head[5..13].try_into().expect("8 bytes"));
        let n = usize::try_from(n).map_err(|_| Error::FrameFormat("frame too large".into()))?;
        let mut cols: [Vec<f64>; 4] = Default::default();
        let mut bytes = vec![0u8; 8 * n];
        for col in cols.iter_mut() {
            r.read_exact(&mut bytes).map_err(io)?;
            *col = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
        }
        let [ax, ap, bx, bp] = cols;
        SampleFrame::new(ax, ap, bx, bp)
    }
}
