//! Checkpoint container: a text manifest of `(name, shape, offset)` entries
//! followed by one flat little-endian `f32` payload.
//!
//! ```text
//! WMCK 1
//! entries <n>
//! <name> <d0,d1,...|-> <offset>
//! ...
//! payload <count>
//! <count × 4 bytes>
//! ```
//!
//! The writer is canonical, so `write(read(bytes)) == bytes`.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::NnError;

const MAGIC: &str = "WMCK 1";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    offsets: Vec<usize>,
    payload: Vec<f32>,
}

fn bad(msg: impl Into<String>) -> NnError {
    NnError::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an entry. Names must be non-empty and free of whitespace.
    pub fn push(&mut self, name: &str, shape: &[usize], data: Vec<f32>) {
        assert!(
            !name.is_empty() && !name.contains(char::is_whitespace),
            "invalid checkpoint entry name {name:?}"
        );
        assert_eq!(shape.iter().product::<usize>(), data.len(), "entry {name}");
        self.names.push(name.to_string());
        self.shapes.push(shape.to_vec());
        self.offsets.push(self.payload.len());
        self.payload.extend(data);
    }

    /// Stores `f64` values losslessly as pairs of `f32` bit patterns
    /// (high word first); the entry gains a trailing dimension of 2.
    pub fn push_f64(&mut self, name: &str, shape: &[usize], data: &[f64]) {
        let mut s = shape.to_vec();
        s.push(2);
        let words = data
            .iter()
            .flat_map(|v| {
                let b = v.to_bits();
                [f32::from_bits((b >> 32) as u32), f32::from_bits(b as u32)]
            })
            .collect();
        self.push(name, &s, words);
    }

    pub fn get(&self, name: &str) -> Option<(&[usize], &[f32])> {
        let i = self.names.iter().position(|n| n == name)?;
        let len: usize = self.shapes[i].iter().product();
        Some((&self.shapes[i], &self.payload[self.offsets[i]..self.offsets[i] + len]))
    }

    /// Reads an entry written by [`Checkpoint::push_f64`].
    pub fn get_f64(&self, name: &str) -> Option<Vec<f64>> {
        let (shape, d) = self.get(name)?;
        if shape.last() != Some(&2) {
            return None;
        }
        Some(
            d.chunks_exact(2)
                .map(|w| f64::from_bits(((w[0].to_bits() as u64) << 32) | w[1].to_bits() as u64))
                .collect(),
        )
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn payload_len(&self) -> usize {
        self.payload.len()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), NnError> {
        let mut head = String::new();
        head.push_str(MAGIC);
        head.push('\n');
        head.push_str(&format!("entries {}\n", self.names.len()));
        for ((name, shape), off) in self.names.iter().zip(&self.shapes).zip(&self.offsets) {
            let dims = if shape.is_empty() {
                "-".to_string()
            } else {
                shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
            };
            head.push_str(&format!("{name} {dims} {off}\n"));
        }
        head.push_str(&format!("payload {}\n", self.payload.len()));
        w.write_all(head.as_bytes())?;
        let mut bytes = Vec::with_capacity(self.payload.len() * 4);
        for v in &self.payload {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&bytes)?;
        w.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("in-memory write");
        out
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self, NnError> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        let mut next_line = |r: &mut BufReader<R>| -> Result<String, NnError> {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(bad("unexpected end of manifest"));
            }
            Ok(line.trim_end_matches('\n').to_string())
        };
        if next_line(&mut r)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let count_line = next_line(&mut r)?;
        let n: usize = count_line
            .strip_prefix("entries ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(format!("bad entry count line {count_line:?}")))?;
        let mut ck = Checkpoint::new();
        for _ in 0..n {
            let l = next_line(&mut r)?;
            let parts: Vec<&str> = l.split(' ').collect();
            if parts.len() != 3 {
                return Err(bad(format!("bad manifest line {l:?}")));
            }
            let shape = if parts[1] == "-" {
                Vec::new()
            } else {
                parts[1]
                    .split(',')
                    .map(|d| d.parse::<usize>().map_err(|_| bad(format!("bad dim in {l:?}"))))
                    .collect::<Result<Vec<_>, _>>()?
            };
            let off: usize = parts[2].parse().map_err(|_| bad(format!("bad offset in {l:?}")))?;
            ck.names.push(parts[0].to_string());
            ck.shapes.push(shape);
            ck.offsets.push(off);
        }
        let pl = next_line(&mut r)?;
        let total: usize = pl
            .strip_prefix("payload ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(format!("bad payload line {pl:?}")))?;
        let mut bytes = vec![0u8; total * 4];
        r.read_exact(&mut bytes)?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(bad("trailing bytes after payload"));
        }
        ck.payload = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        for (i, (shape, &off)) in ck.shapes.iter().zip(&ck.offsets).enumerate() {
            let len: usize = shape.iter().product();
            if off + len > total {
                return Err(bad(format!("entry {} overruns payload", ck.names[i])));
            }
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let tmp = path.with_extension("tmp");
        self.write_to(fs::File::create(&tmp)?)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        Self::read_from(fs::File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_shape_round_trip() {
        let mut ck = Checkpoint::new();
        ck.push("s", &[], vec![3.5]);
        ck.push("m", &[2, 2], vec![1.0, -2.0, 0.0, f32::MIN_POSITIVE]);
        let bytes = ck.to_bytes();
        let back = Checkpoint::read_from(&bytes[..]).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn f64_entries_are_exact() {
        let vals = [0.1, -1e-300, f64::MAX, 1.0 / 3.0];
        let mut ck = Checkpoint::new();
        ck.push_f64("x", &[4], &vals);
        let back = Checkpoint::read_from(&ck.to_bytes()[..]).unwrap();
        let got = back.get_f64("x").unwrap();
        assert!(got.iter().zip(&vals).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(back.get("x").unwrap().0, &[4, 2]);
    }

    #[test]
    fn rejects_truncated_payload() {
        let mut ck = Checkpoint::new();
        ck.push("w", &[3], vec![1.0, 2.0, 3.0]);
        let bytes = ck.to_bytes();
        assert!(Checkpoint::read_from(&bytes[..bytes.len() - 2]).is_err());
        assert!(Checkpoint::read_from(&b"WMCK 2\n"[..]).is_err());
    }
}
