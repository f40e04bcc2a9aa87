//! Descriptor datasets and their on-disk container.
//!
//! A dataset is an ordered list of images, each carrying precomputed local
//! feature descriptors of one shared dimension, plus optional ground truth
//! mapping query images to their correct database matches.
//!
//! On disk a dataset is a little-endian binary container:
//!
//! ```text
//! magic "BOWD" | version u16 = 1 | dimension u32 | image count u32
//! per image: image_id u32 | descriptor count u32 | count * dimension f32
//! ```
//!
//! Ground truth lives in a sidecar CSV next to the container (the container
//! path with `.gt.csv` appended), header `query_id,match_id`, one row per
//! (query, correct match) pair. Datasets follow the first-half/second-half
//! convention: the first `N/2` images are the database, the rest are queries.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::{Error, Result};

pub const DATASET_MAGIC: [u8; 4] = *b"BOWD";
pub const DATASET_VERSION: u16 = 1;

/// One local image feature: a fixed-dimension vector of finite f32 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub values: Vec<f32>,
}

impl Descriptor {
    pub fn new(values: Vec<f32>) -> Self {
        Descriptor { values }
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }
}

/// All descriptors of a single image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub image_id: u32,
    pub descriptors: Vec<Descriptor>,
}

/// Ground truth: query image id to the set of correct match image ids.
pub type GroundTruth = BTreeMap<u32, BTreeSet<u32>>;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dimension: usize,
    pub images: Vec<ImageRecord>,
    pub ground_truth: GroundTruth,
}

impl Dataset {
    /// Builds a dataset and validates its invariants: uniform dimension,
    /// finite values, at least one descriptor per image, unique image ids,
    /// and ground-truth ids that all exist. Empty ground-truth sets are
    /// dropped so that save/load round-trips are exact.
    pub fn new(
        dimension: usize,
        images: Vec<ImageRecord>,
        mut ground_truth: GroundTruth,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidConfig("dimension must be at least 1".into()));
        }
        let mut seen = BTreeSet::new();
        for image in &images {
            if !seen.insert(image.image_id) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate image id {}",
                    image.image_id
                )));
            }
            if image.descriptors.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "image {} has no descriptors",
                    image.image_id
                )));
            }
            for d in &image.descriptors {
                if d.dimension() != dimension {
                    return Err(Error::DimensionMismatch {
                        expected: dimension,
                        found: d.dimension(),
                    });
                }
                if d.values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidConfig(format!(
                        "image {} contains a non-finite descriptor value",
                        image.image_id
                    )));
                }
            }
        }
        ground_truth.retain(|_, matches| !matches.is_empty());
        for (query, matches) in &ground_truth {
            if !seen.contains(query) {
                return Err(Error::InvalidConfig(format!(
                    "ground truth references unknown query id {query}"
                )));
            }
            if let Some(m) = matches.iter().find(|m| !seen.contains(m)) {
                return Err(Error::InvalidConfig(format!(
                    "ground truth references unknown match id {m}"
                )));
            }
        }
        Ok(Dataset {
            dimension,
            images,
            ground_truth,
        })
    }

    pub fn num_images(&self) -> usize {
        self.images.len()
    }

    /// Database half: the first `N/2` images.
    pub fn database(&self) -> &[ImageRecord] {
        &self.images[..self.images.len() / 2]
    }

    /// Query half: everything after the database split.
    pub fn queries(&self) -> &[ImageRecord] {
        &self.images[self.images.len() / 2..]
    }

    pub fn image_by_id(&self, image_id: u32) -> Option<&ImageRecord> {
        self.images.iter().find(|im| im.image_id == image_id)
    }

    /// Path of the ground-truth sidecar for a given container path.
    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut os = path.as_os_str().to_os_string();
        os.push(".gt.csv");
        PathBuf::from(os)
    }

    /// Loads a dataset container, plus its ground-truth sidecar when present.
    pub fn load(path: &Path) -> Result<Dataset> {
        let file = File::open(path)?;
        let mut r = CountingReader::new(BufReader::new(file));

        let mut magic = [0u8; 4];
        r.read_bytes(&mut magic, "magic")?;
        if magic != DATASET_MAGIC {
            return Err(Error::format(0, "bad magic, expected BOWD"));
        }
        let version = r.read_u16()?;
        if version != DATASET_VERSION {
            return Err(Error::format(
                r.offset - 2,
                format!("unsupported version {version}"),
            ));
        }
        let dim_offset = r.offset;
        let dimension = r.read_u32()? as usize;
        if dimension == 0 {
            return Err(Error::format(dim_offset, "dimension must be at least 1"));
        }
        let image_count = r.read_u32()? as usize;

        let mut images = Vec::with_capacity(image_count);
        for _ in 0..image_count {
            let image_id = r.read_u32()?;
            let count_offset = r.offset;
            let count = r.read_u32()? as usize;
            if count == 0 {
                return Err(Error::format(
                    count_offset,
                    format!("image {image_id} declares zero descriptors"),
                ));
            }
            let mut descriptors = Vec::with_capacity(count);
            for _ in 0..count {
                let mut values = Vec::with_capacity(dimension);
                for k in 0..dimension {
                    match r.try_read_f32()? {
                        Some(v) => {
                            if !v.is_finite() {
                                return Err(Error::format(
                                    r.offset - 4,
                                    "non-finite descriptor value",
                                ));
                            }
                            values.push(v);
                        }
                        // Truncated mid-descriptor: the record holds fewer
                        // floats than the declared dimension.
                        None => {
                            return Err(Error::DimensionMismatch {
                                expected: dimension,
                                found: k,
                            })
                        }
                    }
                }
                descriptors.push(Descriptor::new(values));
            }
            images.push(ImageRecord {
                image_id,
                descriptors,
            });
        }
        let trailing_offset = r.offset;
        let mut probe = [0u8; 1];
        if r.inner.read(&mut probe)? != 0 {
            return Err(Error::format(trailing_offset, "trailing bytes"));
        }

        let sidecar = Self::sidecar_path(path);
        let ground_truth = if sidecar.exists() {
            read_ground_truth_csv(&sidecar)?
        } else {
            GroundTruth::new()
        };

        Dataset::new(dimension, images, ground_truth)
    }

    /// Writes the container and, when ground truth is non-empty, the sidecar
    /// CSV. An existing sidecar is removed when the dataset carries no ground
    /// truth, so that `load(save(ds)) == ds` holds regardless of prior state.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        w.write_all(&DATASET_MAGIC)?;
        w.write_all(&DATASET_VERSION.to_le_bytes())?;
        w.write_all(&(self.dimension as u32).to_le_bytes())?;
        w.write_all(&(self.images.len() as u32).to_le_bytes())?;
        for image in &self.images {
            w.write_all(&image.image_id.to_le_bytes())?;
            w.write_all(&(image.descriptors.len() as u32).to_le_bytes())?;
            for d in &image.descriptors {
                for v in &d.values {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        w.flush()?;

        let sidecar = Self::sidecar_path(path);
        if self.ground_truth.is_empty() {
            if sidecar.exists() {
                std::fs::remove_file(&sidecar)?;
            }
        } else {
            write_ground_truth_csv(&self.ground_truth, &sidecar)?;
        }
        Ok(())
    }
}

/// Load a dataset container plus sidecar; see [`Dataset::load`].
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::load(path)
}

/// Save a dataset container plus sidecar; see [`Dataset::save`].
pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    ds.save(path)
}

fn read_ground_truth_csv(path: &Path) -> Result<GroundTruth> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "query_id,match_id" => {}
        _ => {
            return Err(Error::format(
                0,
                "ground truth sidecar must start with header query_id,match_id",
            ))
        }
    }
    let mut gt = GroundTruth::new();
    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let (q, m) = match (fields.next(), fields.next(), fields.next()) {
            (Some(q), Some(m), None) => (q, m),
            _ => {
                return Err(Error::format(
                    lineno as u64 + 1,
                    format!("line {}: expected two fields", lineno + 1),
                ))
            }
        };
        let parse = |s: &str| -> Result<u32> {
            s.trim().parse().map_err(|_| {
                Error::format(
                    lineno as u64 + 1,
                    format!("line {}: invalid image id {s:?}", lineno + 1),
                )
            })
        };
        gt.entry(parse(q)?).or_default().insert(parse(m)?);
    }
    Ok(gt)
}

fn write_ground_truth_csv(gt: &GroundTruth, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "query_id,match_id")?;
    for (query, matches) in gt {
        for m in matches {
            writeln!(w, "{query},{m}")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Little-endian reader that tracks the byte offset for error reporting.
pub(crate) struct CountingReader<R> {
    pub(crate) inner: R,
    pub(crate) offset: u64,
}

impl<R: Read> CountingReader<R> {
    pub(crate) fn new(inner: R) -> Self {
        CountingReader { inner, offset: 0 }
    }

    pub(crate) fn read_bytes(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let start = self.offset;
        let mut filled = 0;
        while filled < buf.len() {
            let n = self.inner.read(&mut buf[filled..])?;
            if n == 0 {
                return Err(Error::format(
                    start,
                    format!("unexpected end of file reading {what}"),
                ));
            }
            filled += n;
            self.offset += n as u64;
        }
        Ok(())
    }

    pub(crate) fn read_u16(&mut self) -> Result<u16> {
        let mut b = [0u8; 2];
        self.read_bytes(&mut b, "u16")?;
        Ok(u16::from_le_bytes(b))
    }

    pub(crate) fn read_u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_bytes(&mut b, "u32")?;
        Ok(u32::from_le_bytes(b))
    }

    pub(crate) fn read_f32(&mut self) -> Result<f32> {
        let mut b = [0u8; 4];
        self.read_bytes(&mut b, "f32")?;
        Ok(f32::from_le_bytes(b))
    }

    pub(crate) fn read_f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.read_bytes(&mut b, "f64")?;
        Ok(f64::from_le_bytes(b))
    }

    /// Reads one f32, or `None` on a clean end-of-file at a float boundary.
    fn try_read_f32(&mut self) -> Result<Option<f32>> {
        let mut b = [0u8; 4];
        let mut filled = 0;
        while filled < 4 {
            let n = self.inner.read(&mut b[filled..])?;
            if n == 0 {
                if filled == 0 {
                    return Ok(None);
                }
                return Err(Error::format(self.offset, "truncated float"));
            }
            filled += n;
            self.offset += n as u64;
        }
        Ok(Some(f32::from_le_bytes(b)))
    }
}
