//! Inverted index: word id to postings of (database image, tf-idf weight).
//!
//! Database images are addressed by their position `0..N_im` within the
//! database half; that position is the image id stored in postings and the
//! bin index used by the query engine. A posting's weight is
//! `tf(w, i) * idf(w)` with `tf` the relative word frequency in the image;
//! zero-weight postings (words with zero idf) are omitted since they cannot
//! change any score. Per-image L2 norms of the tf-idf vectors make the
//! accumulated vote of a full query proportional to cosine similarity.
//!
//! Index file (`BOWI`, little-endian): magic, version u16 = 1, K u32,
//! N_im u32; per word a posting count u32 then (image_id u32, weight f32)
//! pairs; then N_im f64 norms and N_im u32 per-image feature counts.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::dataset::{CountingReader, ImageRecord};
use crate::vocab::Vocabulary;
use crate::{Error, Result};

pub const INDEX_MAGIC: [u8; 4] = *b"BOWI";
pub const INDEX_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posting {
    /// Position of the image within the database half.
    pub image_id: u32,
    /// tf(w, image) * idf(w), strictly positive.
    pub weight: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    k: usize,
    num_images: usize,
    postings: Vec<Vec<Posting>>,
    /// L2 norm of each image's tf-idf vector, computed from the stored
    /// (f32) posting weights so it is exactly recomputable from them.
    image_norms: Vec<f64>,
    /// Total quantized features per image.
    image_word_counts: Vec<u32>,
}

impl InvertedIndex {
    /// Quantizes every database image against the vocabulary and assembles
    /// postings, norms, and feature counts. Requires idf to be computed.
    pub fn build(vocabulary: &Vocabulary, database: &[ImageRecord]) -> Result<InvertedIndex> {
        if !vocabulary.has_idf() {
            return Err(Error::InvalidConfig(
                "vocabulary idf not computed; run compute_idf first".into(),
            ));
        }
        if database.is_empty() {
            return Err(Error::InvalidConfig("database must not be empty".into()));
        }
        let k = vocabulary.k();
        let idf = vocabulary.idf();
        let mut postings: Vec<Vec<Posting>> = vec![Vec::new(); k];
        let mut image_norms = Vec::with_capacity(database.len());
        let mut image_word_counts = Vec::with_capacity(database.len());

        for (pos, image) in database.iter().enumerate() {
            let counts = vocabulary.quantize_image(image)?;
            let total = image.descriptors.len() as f64;
            let mut norm2 = 0f64;
            for (&w, &count) in &counts {
                let weight = (count as f64 / total * idf[w]) as f32;
                if weight > 0.0 {
                    postings[w].push(Posting {
                        image_id: pos as u32,
                        weight,
                    });
                    norm2 += weight as f64 * weight as f64;
                }
            }
            image_norms.push(norm2.sqrt());
            image_word_counts.push(image.descriptors.len() as u32);
        }

        Ok(InvertedIndex {
            k,
            num_images: database.len(),
            postings,
            image_norms,
            image_word_counts,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_images(&self) -> usize {
        self.num_images
    }

    /// Postings for a word, sorted by image id. Empty for unused words.
    pub fn lookup(&self, word: usize) -> Result<&[Posting]> {
        self.postings
            .get(word)
            .map(|v| v.as_slice())
            .ok_or(Error::WordOutOfRange { word, k: self.k })
    }

    pub fn image_norm(&self, pos: usize) -> f64 {
        self.image_norms[pos]
    }

    pub fn image_norms(&self) -> &[f64] {
        &self.image_norms
    }

    pub fn image_word_counts(&self) -> &[u32] {
        &self.image_word_counts
    }

    /// Largest vote a single quantized feature can add to any bin, given the
    /// vocabulary's idf. Used to rescale votes into [0, 1] for the Hoeffding
    /// stopping rule.
    pub fn max_vote(&self, idf: &[f64]) -> f64 {
        let mut best = 0f64;
        for (w, list) in self.postings.iter().enumerate() {
            for p in list {
                let vote = idf[w] * p.weight as f64 / self.image_norms[p.image_id as usize];
                if vote > best {
                    best = vote;
                }
            }
        }
        best
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&INDEX_MAGIC)?;
        w.write_all(&INDEX_VERSION.to_le_bytes())?;
        w.write_all(&(self.k as u32).to_le_bytes())?;
        w.write_all(&(self.num_images as u32).to_le_bytes())?;
        for list in &self.postings {
            w.write_all(&(list.len() as u32).to_le_bytes())?;
            for p in list {
                w.write_all(&p.image_id.to_le_bytes())?;
                w.write_all(&p.weight.to_le_bytes())?;
            }
        }
        for n in &self.image_norms {
            w.write_all(&n.to_le_bytes())?;
        }
        for c in &self.image_word_counts {
            w.write_all(&c.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<InvertedIndex> {
        let file = File::open(path)?;
        let mut r = CountingReader::new(BufReader::new(file));
        let mut magic = [0u8; 4];
        r.read_bytes(&mut magic, "magic")?;
        if magic != INDEX_MAGIC {
            return Err(Error::format(0, "bad magic, expected BOWI"));
        }
        let version = r.read_u16()?;
        if version != INDEX_VERSION {
            return Err(Error::format(4, format!("unsupported version {version}")));
        }
        let k = r.read_u32()? as usize;
        let num_images = r.read_u32()? as usize;
        let mut postings = Vec::with_capacity(k);
        for word in 0..k {
            let count = r.read_u32()? as usize;
            let mut list = Vec::with_capacity(count);
            let mut prev: Option<u32> = None;
            for _ in 0..count {
                let offset = r.offset;
                let image_id = r.read_u32()?;
                let weight = r.read_f32()?;
                if image_id as usize >= num_images {
                    return Err(Error::format(
                        offset,
                        format!("posting for word {word} references image {image_id}"),
                    ));
                }
                if prev.is_some_and(|p| p >= image_id) {
                    return Err(Error::format(
                        offset,
                        format!("postings for word {word} out of order"),
                    ));
                }
                if !weight.is_finite() || weight <= 0.0 {
                    return Err(Error::format(
                        offset,
                        format!("non-positive posting weight for word {word}"),
                    ));
                }
                prev = Some(image_id);
                list.push(Posting { image_id, weight });
            }
            postings.push(list);
        }
        let mut image_norms = Vec::with_capacity(num_images);
        for _ in 0..num_images {
            let offset = r.offset;
            let n = r.read_f64()?;
            if !n.is_finite() || n < 0.0 {
                return Err(Error::format(offset, "invalid image norm"));
            }
            image_norms.push(n);
        }
        let mut image_word_counts = Vec::with_capacity(num_images);
        for _ in 0..num_images {
            image_word_counts.push(r.read_u32()?);
        }
        Ok(InvertedIndex {
            k,
            num_images,
            postings,
            image_norms,
            image_word_counts,
        })
    }
}
