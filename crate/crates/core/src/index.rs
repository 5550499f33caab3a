//! Exact nearest-neighbour retrieval over bit-packed feature vectors.
//!
//! The query vector is scaled by `l/2 + 1` before computing L2 distances so
//! that a shared set bit outweighs any number of bits the query lacks. For a
//! binary query `q` scaled by `m` and a binary vector `p`:
//!
//! ```text
//! d(m·q, p)² = m²·|q| − 2m·|q ∧ p| + |p|
//! ```
//!
//! which needs only two popcounts per stored vector.
//!
//! File layout (little-endian): magic `DSIX`, `u32` version 1, `u32` l,
//! `u64` count, then `count` records of `ceil(l/8)` bytes where bit `i` is
//! bit `i % 8` of byte `i / 8`.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::features::{check_length, FeatureVector, Featurizer, InvalidLength};
use crate::ingestion::{ChangeId, Corpus};

pub const MAGIC: &[u8; 4] = b"DSIX";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;
pub const DEFAULT_K: usize = 5000;
/// Largest supported vector length; keeps ranking keys within 32 bits.
pub const MAX_LEN: usize = 32_768;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("query vector has length {query}, index vectors have length {index}")]
    LengthMismatch { index: usize, query: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("vector length {0} exceeds the maximum of {MAX_LEN}")]
    TooLong(usize),
    #[error(transparent)]
    InvalidLength(#[from] InvalidLength),
    #[error("index file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub change_id: ChangeId,
    pub distance: f64,
}

/// Feature vectors of a whole corpus, in corpus id order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VectorIndex {
    len: usize,
    count: usize,
    words_per_vector: usize,
    words: Vec<u64>,
    popcounts: Vec<u32>,
}

impl VectorIndex {
    /// An index over vectors of any length; [`build_index`] additionally
    /// requires a multiple of 4.
    pub fn new(len: usize) -> VectorIndex {
        assert!(len <= MAX_LEN, "vector length {len} exceeds {MAX_LEN}");
        VectorIndex {
            len,
            count: 0,
            words_per_vector: len.div_ceil(64),
            words: Vec::new(),
            popcounts: Vec::new(),
        }
    }

    pub fn from_vectors(len: usize, vectors: &[FeatureVector]) -> Result<VectorIndex, IndexError> {
        let mut index = VectorIndex::new(len);
        for v in vectors {
            index.push(v)?;
        }
        Ok(index)
    }

    pub fn push(&mut self, v: &FeatureVector) -> Result<(), IndexError> {
        assert!(self.count < u32::MAX as usize, "index is full");
        if v.len() != self.len {
            return Err(IndexError::LengthMismatch {
                index: self.len,
                query: v.len(),
            });
        }
        self.words.extend_from_slice(v.words());
        self.popcounts.push(v.count_ones());
        self.count += 1;
        Ok(())
    }

    /// Vector length `l`.
    pub fn vector_len(&self) -> usize {
        self.len
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn vector(&self, id: ChangeId) -> FeatureVector {
        let w = self.words_per_vector;
        FeatureVector::from_words(self.len, self.words[id * w..(id + 1) * w].to_vec())
    }

    /// Multiplier applied to query vectors before the distance computation.
    pub fn scale(&self) -> f64 {
        self.len as f64 / 2.0 + 1.0
    }

    /// Squared L2 distance from every stored vector to the scaled query.
    pub fn squared_distances(&self, query: &FeatureVector) -> Result<Vec<f64>, IndexError> {
        if query.len() != self.len {
            return Err(IndexError::LengthMismatch {
                index: self.len,
                query: query.len(),
            });
        }
        let m = self.scale();
        let q = query.words();
        let base = m * m * query.count_ones() as f64;
        let w = self.words_per_vector;
        Ok(self
            .words
            .chunks_exact(w.max(1))
            .take(self.count)
            .zip(&self.popcounts)
            .map(|(p, &pop)| {
                let shared: u32 = p.iter().zip(q).map(|(a, b)| (a & b).count_ones()).sum();
                base - 2.0 * m * shared as f64 + pop as f64
            })
            .collect())
    }

    /// The `min(k, count)` stored vectors nearest to the scaled query, ordered
    /// by distance and then by id.
    ///
    /// Ranking uses the integer key `(2l + 4)(|q| − |q ∧ p|) + 2|p|`, which is
    /// `2d² + const` for the scale `l/2 + 1`, so it orders exactly like the
    /// real distance without floating-point work per vector.
    pub fn retrieve(&self, query: &FeatureVector, k: usize) -> Result<Vec<Candidate>, IndexError> {
        if k == 0 {
            return Err(IndexError::ZeroK);
        }
        if query.len() != self.len {
            return Err(IndexError::LengthMismatch {
                index: self.len,
                query: query.len(),
            });
        }
        let q_ones = query.count_ones() as u64;
        let step = 2 * self.len as u64 + 4;
        let nonzero: Vec<(usize, u64)> =
            query.words().iter().copied().enumerate().filter(|&(_, w)| w != 0).collect();
        let w = self.words_per_vector.max(1);
        let mut keys: Vec<u64> = self
            .words
            .chunks_exact(w)
            .take(self.count)
            .zip(&self.popcounts)
            .zip(0u64..)
            .map(|((p, &pop), id)| {
                let shared: u32 = nonzero.iter().map(|&(i, q)| (p[i] & q).count_ones()).sum();
                let key = step * (q_ones - shared as u64) + 2 * pop as u64;
                key << 32 | id
            })
            .collect();
        let k = k.min(keys.len());
        if k < keys.len() {
            keys.select_nth_unstable(k);
            keys.truncate(k);
        }
        keys.sort_unstable();
        let m = self.scale();
        Ok(keys
            .into_iter()
            .map(|key| {
                let id = (key & 0xffff_ffff) as usize;
                let p = &self.words[id * w..(id + 1) * w];
                let shared: u32 = nonzero.iter().map(|&(i, q)| (p[i] & q).count_ones()).sum();
                let d2 = m * m * q_ones as f64 - 2.0 * m * shared as f64 + self.popcounts[id] as f64;
                Candidate {
                    change_id: id,
                    distance: d2.max(0.0).sqrt(),
                }
            })
            .collect())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), IndexError> {
        let len = u32::try_from(self.len)
            .map_err(|_| IndexError::Format(format!("vector length {} too large", self.len)))?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(&(self.count as u64).to_le_bytes())?;
        let record_len = self.len.div_ceil(8);
        let mut record = Vec::with_capacity(record_len);
        for vec_words in self.words.chunks_exact(self.words_per_vector.max(1)).take(self.count) {
            record.clear();
            record.extend(vec_words.iter().flat_map(|w| w.to_le_bytes()));
            w.write_all(&record[..record_len])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<VectorIndex, IndexError> {
        let mut header = [0u8; HEADER_LEN];
        read_exact_or_format(&mut r, &mut header, "truncated header")?;
        if &header[0..4] != MAGIC {
            return Err(IndexError::Format("bad magic".into()));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(IndexError::Format(format!("unsupported version {version}")));
        }
        let len = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(header[12..20].try_into().unwrap()) as usize;
        if len > MAX_LEN {
            return Err(IndexError::Format(format!("vector length {len} exceeds {MAX_LEN}")));
        }
        if count > u32::MAX as usize {
            return Err(IndexError::Format(format!("{count} vectors exceed the supported maximum")));
        }
        let mut index = VectorIndex::new(len);
        let record_len = len.div_ceil(8);
        let mut record = vec![0u8; index.words_per_vector * 8];
        for i in 0..count {
            read_exact_or_format(&mut r, &mut record[..record_len], &format!("truncated at record {i}"))?;
            let words: Vec<u64> = record
                .chunks_exact(8)
                .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            if !len.is_multiple_of(64) && words.last().is_some_and(|w| w >> (len % 64) != 0) {
                return Err(IndexError::Format(format!("record {i} has bits beyond length {len}")));
            }
            index.push(&FeatureVector::from_words(len, words))?;
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(IndexError::Format("trailing bytes after last record".into()));
        }
        Ok(index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<VectorIndex, IndexError> {
        VectorIndex::read_from(BufReader::new(File::open(path)?))
    }

    /// Size in bytes of the file [`VectorIndex::save`] writes.
    pub fn file_size(len: usize, count: usize) -> usize {
        HEADER_LEN + count * len.div_ceil(8)
    }
}

fn read_exact_or_format<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<(), IndexError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => IndexError::Format(what.to_string()),
        _ => IndexError::Io(e),
    })
}

/// Featurizes every change of the corpus. Changes that fail to parse get an
/// all-zero vector so that vector ids keep matching corpus ids.
pub fn build_index(corpus: &Corpus, l: usize) -> Result<VectorIndex, IndexError> {
    check_length(l)?;
    if l > MAX_LEN {
        return Err(IndexError::TooLong(l));
    }
    let featurizer = Featurizer::new(l)?;
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let chunk = corpus.len().div_ceil(threads).max(1);
    let parts: Vec<Vec<FeatureVector>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..corpus.len())
            .step_by(chunk)
            .map(|start| {
                scope.spawn(move || {
                    (start..(start + chunk).min(corpus.len()))
                        .map(|id| match corpus.prepared(id) {
                            Ok(p) => featurizer.featurize_change(p),
                            Err(e) => {
                                log::warn!("change {id} not indexed: {e}");
                                FeatureVector::zeros(l)
                            }
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("featurizer thread panicked")).collect()
    });
    let mut index = VectorIndex::new(l);
    for v in parts.iter().flatten() {
        index.push(v)?;
    }
    Ok(index)
}

pub fn retrieve(index: &VectorIndex, query: &FeatureVector, k: usize) -> Result<Vec<Candidate>, IndexError> {
    index.retrieve(query, k)
}

pub fn save_index(index: &VectorIndex, path: impl AsRef<Path>) -> Result<(), IndexError> {
    index.save(path)
}

pub fn load_index(path: impl AsRef<Path>) -> Result<VectorIndex, IndexError> {
    VectorIndex::load(path)
}
