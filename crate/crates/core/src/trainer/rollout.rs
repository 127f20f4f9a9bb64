//! Recorded episodes and their on-disk format.
//!
//! ```text
//! "WMRL" | version u16 | horizon u16
//! rgb_len u32 | keypoints u16 | grippers u16 | action_dim u16
//! seed u64 | variant u8 | iteration u32 | steps u32
//! initial frame, then per step: action f64 * A | reward f64 | done u8 | frame
//! frame = rgb bytes | keypoints f64 * 3K | grippers f64 * 3G | picking u8 * G
//! ```
//!
//! Everything is little-endian. Frames of rollouts recorded without
//! rendering carry no RGB bytes (`rgb_len = 0`).

use std::io::{self, Read, Write};

use crate::env::{Observation, Vec3};

pub const MAGIC: &[u8; 4] = b"WMRL";
pub const VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub rgb: Vec<u8>,
    pub keypoints: Vec<Vec3>,
    pub grippers: Vec<Vec3>,
    pub picking: Vec<bool>,
}

impl From<Observation> for Frame {
    fn from(o: Observation) -> Self {
        Self {
            rgb: o.rgb,
            keypoints: o.keypoints,
            grippers: o.grippers,
            picking: o.picking,
        }
    }
}

impl Frame {
    pub fn observation(&self) -> Observation {
        Observation {
            rgb: self.rgb.clone(),
            keypoints: self.keypoints.clone(),
            grippers: self.grippers.clone(),
            picking: self.picking.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub action: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    /// Observation after the action.
    pub frame: Frame,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub seed: u64,
    pub variant: u8,
    pub iteration: u32,
    pub horizon: u16,
    pub initial: Frame,
    pub steps: Vec<StepRecord>,
}

#[derive(Debug, thiserror::Error)]
pub enum RolloutError {
    #[error("bad rollout file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn bad(m: impl Into<String>) -> RolloutError {
    RolloutError::Format(m.into())
}

impl Rollout {
    pub fn total_return(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// All frames, initial first.
    pub fn frames(&self) -> impl Iterator<Item = &Frame> {
        std::iter::once(&self.initial).chain(self.steps.iter().map(|s| &s.frame))
    }

    fn dims(&self) -> Result<(usize, usize, usize, usize), RolloutError> {
        let f = &self.initial;
        let a = self.steps.first().map_or(0, |s| s.action.len());
        let d = (f.rgb.len(), f.keypoints.len(), f.grippers.len(), a);
        for fr in self.frames() {
            if (fr.rgb.len(), fr.keypoints.len(), fr.grippers.len()) != (d.0, d.1, d.2) || fr.picking.len() != d.2 {
                return Err(bad("frames have inconsistent sizes"));
            }
        }
        if self.steps.iter().any(|s| s.action.len() != a) {
            return Err(bad("actions have inconsistent sizes"));
        }
        Ok(d)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), RolloutError> {
        let (rgb, k, g, a) = self.dims()?;
        let narrow = |v: usize, what: &str| u16::try_from(v).map_err(|_| bad(format!("{what} too large")));
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        b.extend_from_slice(&self.horizon.to_le_bytes());
        b.extend_from_slice(&(rgb as u32).to_le_bytes());
        b.extend_from_slice(&narrow(k, "keypoint count")?.to_le_bytes());
        b.extend_from_slice(&narrow(g, "gripper count")?.to_le_bytes());
        b.extend_from_slice(&narrow(a, "action dim")?.to_le_bytes());
        b.extend_from_slice(&self.seed.to_le_bytes());
        b.push(self.variant);
        b.extend_from_slice(&self.iteration.to_le_bytes());
        b.extend_from_slice(&(self.steps.len() as u32).to_le_bytes());
        put_frame(&mut b, &self.initial);
        for s in &self.steps {
            for v in &s.action {
                b.extend_from_slice(&v.to_le_bytes());
            }
            b.extend_from_slice(&s.reward.to_le_bytes());
            b.push(s.done as u8);
            put_frame(&mut b, &s.frame);
        }
        w.write_all(&b)?;
        w.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, RolloutError> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, RolloutError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, RolloutError> {
        let mut c = Cursor { b: bytes, at: 0 };
        if c.take(4)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = c.u16()?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let horizon = c.u16()?;
        let rgb = c.u32()? as usize;
        let k = c.u16()? as usize;
        let g = c.u16()? as usize;
        let a = c.u16()? as usize;
        let seed = c.u64()?;
        let variant = c.take(1)?[0];
        let iteration = c.u32()?;
        let n = c.u32()? as usize;
        let initial = c.frame(rgb, k, g)?;
        let mut steps = Vec::with_capacity(n);
        for _ in 0..n {
            let action = (0..a).map(|_| c.f64()).collect::<Result<_, _>>()?;
            let reward = c.f64()?;
            let done = c.flag()?;
            let frame = c.frame(rgb, k, g)?;
            steps.push(StepRecord { action, reward, done, frame });
        }
        if c.at != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self { seed, variant, iteration, horizon, initial, steps })
    }
}

fn put_frame(b: &mut Vec<u8>, f: &Frame) {
    b.extend_from_slice(&f.rgb);
    for p in f.keypoints.iter().chain(&f.grippers) {
        for v in p {
            b.extend_from_slice(&v.to_le_bytes());
        }
    }
    b.extend(f.picking.iter().map(|&p| p as u8));
}

struct Cursor<'a> {
    b: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], RolloutError> {
        let s = self.b.get(self.at..self.at + n).ok_or_else(|| bad("truncated"))?;
        self.at += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, RolloutError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, RolloutError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, RolloutError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, RolloutError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn flag(&mut self) -> Result<bool, RolloutError> {
        match self.take(1)?[0] {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(bad(format!("bad flag byte {v}"))),
        }
    }

    fn point(&mut self) -> Result<Vec3, RolloutError> {
        Ok([self.f64()?, self.f64()?, self.f64()?])
    }

    fn frame(&mut self, rgb: usize, k: usize, g: usize) -> Result<Frame, RolloutError> {
        Ok(Frame {
            rgb: self.take(rgb)?.to_vec(),
            keypoints: (0..k).map(|_| self.point()).collect::<Result<_, _>>()?,
            grippers: (0..g).map(|_| self.point()).collect::<Result<_, _>>()?,
            picking: (0..g).map(|_| self.flag()).collect::<Result<_, _>>()?,
        })
    }
}
