//! On-disk rollout buffer: one file per rollout plus an index.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::rollout::Rollout;
use super::TrainerError;

const INDEX: &str = "index.txt";

#[derive(Clone, Debug, PartialEq)]
pub struct BufferEntry {
    pub id: usize,
    pub file: String,
    pub iteration: u32,
    pub seed: u64,
    pub steps: usize,
    pub total_return: f64,
}

#[derive(Debug)]
pub struct RolloutBuffer {
    dir: PathBuf,
    entries: Vec<BufferEntry>,
}

impl RolloutBuffer {
    /// Opens (or creates) the buffer in `dir`, reading an existing index.
    pub fn open(dir: &Path) -> Result<Self, TrainerError> {
        fs::create_dir_all(dir)?;
        let mut entries = Vec::new();
        let index = dir.join(INDEX);
        if index.exists() {
            for (n, line) in fs::read_to_string(&index)?.lines().enumerate() {
                let p: Vec<&str> = line.split(' ').collect();
                let parsed = (|| {
                    Some(BufferEntry {
                        id: p.first()?.parse().ok()?,
                        file: p.get(1)?.to_string(),
                        iteration: p.get(2)?.parse().ok()?,
                        seed: p.get(3)?.parse().ok()?,
                        steps: p.get(4)?.parse().ok()?,
                        total_return: p.get(5)?.parse().ok()?,
                    })
                })();
                match parsed {
                    Some(e) if e.id == n && p.len() == 6 => entries.push(e),
                    _ => return Err(TrainerError::Corrupt(format!("{}: line {}", index.display(), n + 1))),
                }
            }
        }
        Ok(Self { dir: dir.to_path_buf(), entries })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[BufferEntry] {
        &self.entries
    }

    fn index_line(e: &BufferEntry) -> String {
        format!("{} {} {} {} {} {:?}\n", e.id, e.file, e.iteration, e.seed, e.steps, e.total_return)
    }

    pub fn append(&mut self, r: &Rollout) -> Result<usize, TrainerError> {
        let id = self.entries.len();
        let file = format!("r{id:07}.wmrl");
        let tmp = self.dir.join(format!("{file}.tmp"));
        r.write_to(fs::File::create(&tmp)?)?;
        fs::rename(&tmp, self.dir.join(&file))?;
        let e = BufferEntry { id, file, iteration: r.iteration, seed: r.seed, steps: r.steps.len(), total_return: r.total_return() };
        let mut idx = fs::OpenOptions::new().create(true).append(true).open(self.dir.join(INDEX))?;
        idx.write_all(Self::index_line(&e).as_bytes())?;
        self.entries.push(e);
        Ok(id)
    }

    /// Forgets every rollout from `len` on (used when resuming).
    pub fn truncate(&mut self, len: usize) -> Result<(), TrainerError> {
        if len >= self.entries.len() {
            return Ok(());
        }
        for e in &self.entries[len..] {
            let _ = fs::remove_file(self.dir.join(&e.file));
        }
        self.entries.truncate(len);
        let text: String = self.entries.iter().map(Self::index_line).collect();
        let tmp = self.dir.join("index.tmp");
        fs::write(&tmp, text)?;
        fs::rename(tmp, self.dir.join(INDEX))?;
        Ok(())
    }

    pub fn load(&self, id: usize) -> Result<Rollout, TrainerError> {
        let e = self.entries.get(id).ok_or(TrainerError::InsufficientData { needed: id + 1, available: self.entries.len() })?;
        Ok(Rollout::from_bytes(&fs::read(self.dir.join(&e.file))?)?)
    }
}

/// `k` distinct items drawn uniformly from `pool`, in draw order.
pub fn buffer_sample(pool: &[usize], k: usize, seed: u64) -> Result<Vec<usize>, TrainerError> {
    if k > pool.len() {
        return Err(TrainerError::InsufficientData { needed: k, available: pool.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, pool.len(), k).into_iter().map(|i| pool[i]).collect())
}
