//! Grayscale images, binary PGM I/O, and the ORL face database layout.
//!
//! The ORL (AT&T) database is distributed as `s<subject>/<sample>.pgm` with
//! 40 subjects and 10 samples each, every image 92x112 with 8-bit grey levels.
//! Subjects and samples are one-based on disk and zero-based in memory.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Environment variable naming the default dataset root.
pub const ORL_ROOT_ENV: &str = "NON_ORL_ROOT";

/// An 8-bit grayscale raster stored row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::Empty { width, height });
        }
        if pixels.len() != width * height {
            return Err(ImageError::SizeMismatch {
                width,
                height,
                len: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// An image with every pixel set to `value`.
    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self, ImageError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Serializes as binary PGM with maxval 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

impl fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GrayImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImageError {
    #[error("image must be nonempty, got {width}x{height}")]
    Empty { width: usize, height: usize },
    #[error("{width}x{height} image needs {} pixels, got {len}", width * height)]
    SizeMismatch {
        width: usize,
        height: usize,
        len: usize,
    },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PgmError {
    #[error("unsupported magic number {found:?} at byte {offset}, expected \"P5\"")]
    UnsupportedMagic { found: String, offset: usize },
    #[error("unexpected end of header at byte {offset}")]
    UnexpectedEof { offset: usize },
    #[error("non-numeric header token {token:?} at byte {offset}")]
    InvalidToken { token: String, offset: usize },
    #[error("maxval {maxval} at byte {offset} exceeds 255")]
    MaxvalTooLarge { maxval: u64, offset: usize },
    #[error("maxval must be at least 1 (byte {offset})")]
    ZeroMaxval { offset: usize },
    #[error("zero image dimension at byte {offset}")]
    ZeroDimension { offset: usize },
    #[error("truncated raster starting at byte {offset}: expected {expected} bytes, found {found}")]
    Truncated {
        offset: usize,
        expected: usize,
        found: usize,
    },
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    /// Returns the next token and the offset it starts at.
    fn token(&mut self) -> Result<(&[u8], usize), PgmError> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() || b == b'#' {
                break;
            }
            self.pos += 1;
        }
        if start == self.pos {
            return Err(PgmError::UnexpectedEof { offset: start });
        }
        Ok((&self.bytes[start..self.pos], start))
    }

    fn number(&mut self) -> Result<(u64, usize), PgmError> {
        let (tok, offset) = self.token()?;
        let invalid = || PgmError::InvalidToken {
            token: String::from_utf8_lossy(tok).into_owned(),
            offset,
        };
        if !tok.iter().all(u8::is_ascii_digit) {
            return Err(invalid());
        }
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<u64>().ok())
            .map(|v| (v, offset))
            .ok_or_else(invalid)
    }
}

/// Parses a binary ("P5") PGM file with maxval at most 255.
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage, PgmError> {
    let magic = bytes.get(..2).ok_or(PgmError::UnexpectedEof { offset: 0 })?;
    if magic != b"P5" {
        return Err(PgmError::UnsupportedMagic {
            found: String::from_utf8_lossy(magic).into_owned(),
            offset: 0,
        });
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    // "P5" must be followed by whitespace or a comment, not e.g. "P55"
    match bytes.get(2) {
        Some(b) if b.is_ascii_whitespace() || *b == b'#' => {}
        Some(_) => {
            return Err(PgmError::UnsupportedMagic {
                found: String::from_utf8_lossy(&bytes[..3]).into_owned(),
                offset: 0,
            })
        }
        None => return Err(PgmError::UnexpectedEof { offset: 2 }),
    }

    let (width, w_off) = cur.number()?;
    let (height, h_off) = cur.number()?;
    let (maxval, m_off) = cur.number()?;
    if width == 0 {
        return Err(PgmError::ZeroDimension { offset: w_off });
    }
    if height == 0 {
        return Err(PgmError::ZeroDimension { offset: h_off });
    }
    if maxval > 255 {
        return Err(PgmError::MaxvalTooLarge {
            maxval,
            offset: m_off,
        });
    }
    if maxval == 0 {
        return Err(PgmError::ZeroMaxval { offset: m_off });
    }

    // exactly one whitespace byte separates maxval from the raster
    let raster_start = cur.pos + 1;
    if cur.pos >= bytes.len() {
        return Err(PgmError::UnexpectedEof { offset: cur.pos });
    }
    let expected = (width as usize)
        .checked_mul(height as usize)
        .ok_or(PgmError::InvalidToken {
            token: format!("{width}x{height}"),
            offset: w_off,
        })?;
    let available = bytes.len() - raster_start;
    if available < expected {
        return Err(PgmError::Truncated {
            offset: raster_start,
            expected,
            found: available,
        });
    }
    let pixels = bytes[raster_start..raster_start + expected].to_vec();
    Ok(GrayImage {
        width: width as usize,
        height: height as usize,
        pixels,
    })
}

/// One image with its class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledImage {
    pub image: GrayImage,
    pub subject_id: usize,
    pub sample_index: usize,
}

/// A complete face database, ordered subject-major then by sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    num_subjects: usize,
    samples_per_subject: usize,
    images: Vec<LabeledImage>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset root {0} does not exist or is not a directory")]
    MissingRoot(PathBuf),
    #[error("no subject directories (s1, s2, ...) under {0}")]
    NoSubjects(PathBuf),
    #[error("missing subject directory {0}")]
    MissingDirectory(PathBuf),
    #[error("missing image {0}")]
    MissingFile(PathBuf),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to parse {path}: {source}")]
    Pgm { path: PathBuf, source: PgmError },
    #[error("{path} is {found_w}x{found_h}, expected {expected_w}x{expected_h}")]
    InconsistentDimensions {
        path: PathBuf,
        expected_w: usize,
        expected_h: usize,
        found_w: usize,
        found_h: usize,
    },
    #[error("dataset layout violated: {0}")]
    Layout(String),
    #[error("training count {k} must satisfy 0 < k < {samples_per_subject}")]
    SplitOutOfRange { k: usize, samples_per_subject: usize },
}

impl Dataset {
    /// Builds a dataset, checking that every (subject, sample) pair appears
    /// exactly once and that all images share one size. Images are reordered
    /// subject-major.
    pub fn new(
        num_subjects: usize,
        samples_per_subject: usize,
        mut images: Vec<LabeledImage>,
    ) -> Result<Self, DatasetError> {
        if num_subjects == 0 || samples_per_subject == 0 {
            return Err(DatasetError::Layout("dataset must be nonempty".into()));
        }
        if images.len() != num_subjects * samples_per_subject {
            return Err(DatasetError::Layout(format!(
                "expected {} images, got {}",
                num_subjects * samples_per_subject,
                images.len()
            )));
        }
        let mut seen = vec![false; images.len()];
        for img in &images {
            if img.subject_id >= num_subjects || img.sample_index >= samples_per_subject {
                return Err(DatasetError::Layout(format!(
                    "label (subject {}, sample {}) out of range",
                    img.subject_id, img.sample_index
                )));
            }
            let slot = img.subject_id * samples_per_subject + img.sample_index;
            if std::mem::replace(&mut seen[slot], true) {
                return Err(DatasetError::Layout(format!(
                    "duplicate (subject {}, sample {})",
                    img.subject_id, img.sample_index
                )));
            }
        }
        let (w, h) = (images[0].image.width(), images[0].image.height());
        if let Some(bad) = images
            .iter()
            .find(|i| i.image.width() != w || i.image.height() != h)
        {
            return Err(DatasetError::Layout(format!(
                "subject {} sample {} is {}x{}, expected {w}x{h}",
                bad.subject_id,
                bad.sample_index,
                bad.image.width(),
                bad.image.height()
            )));
        }
        images.sort_by_key(|i| (i.subject_id, i.sample_index));
        Ok(Self {
            num_subjects,
            samples_per_subject,
            images,
        })
    }

    pub fn num_subjects(&self) -> usize {
        self.num_subjects
    }

    pub fn samples_per_subject(&self) -> usize {
        self.samples_per_subject
    }

    pub fn images(&self) -> &[LabeledImage] {
        &self.images
    }

    /// Width and height shared by every image.
    pub fn image_dims(&self) -> (usize, usize) {
        let first = &self.images[0].image;
        (first.width(), first.height())
    }
}

fn subject_dir(root: &Path, subject: usize) -> PathBuf {
    root.join(format!("s{subject}"))
}

fn sample_path(root: &Path, subject: usize, sample: usize) -> PathBuf {
    subject_dir(root, subject).join(format!("{sample}.pgm"))
}

/// Loads an ORL-layout tree: `root/s1..sK/1.pgm..P.pgm`.
///
/// K is the highest `s<k>` directory present and P the highest contiguous
/// sample count found in any subject; every subject must then hold all P
/// samples.
pub fn load_orl(root: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(DatasetError::MissingRoot(root.to_path_buf()));
    }
    let entries = fs::read_dir(root).map_err(|source| DatasetError::Io {
        path: root.to_path_buf(),
        source,
    })?;
    let mut num_subjects = 0;
    for entry in entries {
        let entry = entry.map_err(|source| DatasetError::Io {
            path: root.to_path_buf(),
            source,
        })?;
        let name = entry.file_name();
        let Some(idx) = name
            .to_str()
            .and_then(|n| n.strip_prefix('s'))
            .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
            .and_then(|d| d.parse::<usize>().ok())
        else {
            continue;
        };
        if idx >= 1 && entry.path().is_dir() {
            num_subjects = num_subjects.max(idx);
        }
    }
    if num_subjects == 0 {
        return Err(DatasetError::NoSubjects(root.to_path_buf()));
    }

    let mut samples_per_subject = 0;
    for subject in 1..=num_subjects {
        let dir = subject_dir(root, subject);
        if !dir.is_dir() {
            return Err(DatasetError::MissingDirectory(dir));
        }
        let mut count = 0;
        while sample_path(root, subject, count + 1).is_file() {
            count += 1;
        }
        samples_per_subject = samples_per_subject.max(count);
    }
    if samples_per_subject == 0 {
        return Err(DatasetError::MissingFile(sample_path(root, 1, 1)));
    }

    let mut images = Vec::with_capacity(num_subjects * samples_per_subject);
    let mut dims: Option<(usize, usize)> = None;
    for subject in 1..=num_subjects {
        for sample in 1..=samples_per_subject {
            let path = sample_path(root, subject, sample);
            if !path.is_file() {
                return Err(DatasetError::MissingFile(path));
            }
            let bytes = fs::read(&path).map_err(|source| DatasetError::Io {
                path: path.clone(),
                source,
            })?;
            let image = parse_pgm(&bytes).map_err(|source| DatasetError::Pgm {
                path: path.clone(),
                source,
            })?;
            match dims {
                None => dims = Some((image.width(), image.height())),
                Some((w, h)) if (w, h) != (image.width(), image.height()) => {
                    return Err(DatasetError::InconsistentDimensions {
                        path,
                        expected_w: w,
                        expected_h: h,
                        found_w: image.width(),
                        found_h: image.height(),
                    })
                }
                Some(_) => {}
            }
            images.push(LabeledImage {
                image,
                subject_id: subject - 1,
                sample_index: sample - 1,
            });
        }
    }
    Dataset::new(num_subjects, samples_per_subject, images)
}

/// Writes a dataset back out in ORL layout.
pub fn write_orl(ds: &Dataset, root: impl AsRef<Path>) -> std::io::Result<()> {
    let root = root.as_ref();
    for img in ds.images() {
        let dir = subject_dir(root, img.subject_id + 1);
        fs::create_dir_all(&dir)?;
        fs::write(
            sample_path(root, img.subject_id + 1, img.sample_index + 1),
            img.image.to_pgm(),
        )?;
    }
    Ok(())
}

/// First `k` samples of each subject train, the rest test.
pub fn split_train_test(
    ds: &Dataset,
    k: usize,
) -> Result<(Vec<&LabeledImage>, Vec<&LabeledImage>), DatasetError> {
    if k == 0 || k >= ds.samples_per_subject {
        return Err(DatasetError::SplitOutOfRange {
            k,
            samples_per_subject: ds.samples_per_subject,
        });
    }
    Ok(ds.images.iter().partition(|img| img.sample_index < k))
}
