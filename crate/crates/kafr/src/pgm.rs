//! Binary PGM (P5) frames: bit-exact read/write, directory loading with
//! zero-padded numeric filenames, and the mean-squared pixel difference
//! used by the pixel-based selector.

use std::path::Path;

use thiserror::Error;

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("not a binary PGM: magic {0:?}, expected \"P5\"")]
    BadMagic(String),
    #[error("bad PGM header: {0}")]
    BadHeader(String),
    #[error("unsupported maxval {0}; only 8-bit (255) frames are handled")]
    UnsupportedMaxval(u64),
    #[error("raster holds {got} bytes, header promises {expected}")]
    TruncatedRaster { expected: usize, got: usize },
    #[error("frame dimensions differ: {aw}x{ah} vs {bw}x{bh}")]
    DimensionMismatch { aw: usize, ah: usize, bw: usize, bh: usize },
    #[error("frame file {0:?} does not have a numeric stem")]
    BadFrameName(String),
    #[error("pixel buffer holds {got} bytes for {width}x{height}")]
    BadBufferSize { width: usize, height: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, PgmError> {
        if pixels.len() != width * height {
            return Err(PgmError::BadBufferSize { width, height, got: pixels.len() });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self { width, height, pixels: vec![value; width * height] }
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

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.pixels[y * self.width + x] = value;
    }

    pub fn same_dimensions(&self, other: &GrayFrame) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Encode as binary PGM. The header is fixed-form so encode∘decode is the
/// identity on bytes as well as on frames.
pub fn encode_pgm(frame: &GrayFrame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend_from_slice(&frame.pixels);
    out
}

/// Decode binary PGM. Header tokens may be separated by any whitespace and
/// `#` comments; exactly one whitespace byte separates maxval from the
/// raster.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayFrame, PgmError> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos)
        .ok_or_else(|| PgmError::BadHeader("missing magic".into()))?;
    if magic != b"P5" {
        return Err(PgmError::BadMagic(String::from_utf8_lossy(magic).into_owned()));
    }
    let width = next_number(bytes, &mut pos, "width")?;
    let height = next_number(bytes, &mut pos, "height")?;
    let maxval = next_number(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(PgmError::UnsupportedMaxval(maxval as u64));
    }
    // next_number consumed the single whitespace byte after maxval.
    let expected = width * height;
    let raster = &bytes[pos.min(bytes.len())..];
    if raster.len() < expected {
        return Err(PgmError::TruncatedRaster { expected, got: raster.len() });
    }
    GrayFrame::new(width, height, raster[..expected].to_vec())
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    // Skip whitespace and comments.
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    if *pos >= bytes.len() {
        return None;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let token = &bytes[start..*pos];
    // Consume exactly one trailing whitespace byte; after maxval this is the
    // raster delimiter.
    if *pos < bytes.len() {
        *pos += 1;
    }
    Some(token)
}

fn next_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize, PgmError> {
    let token = next_token(bytes, pos)
        .ok_or_else(|| PgmError::BadHeader(format!("missing {what}")))?;
    std::str::from_utf8(token)
        .ok()
        .and_then(|t| t.parse::<usize>().ok())
        .ok_or_else(|| {
            PgmError::BadHeader(format!("{what} is not a number: {:?}", String::from_utf8_lossy(token)))
        })
}

/// Mean over pixels of the squared intensity difference, intensities taken
/// as reals in 0..255.
pub fn mse(a: &GrayFrame, b: &GrayFrame) -> Result<f64, PgmError> {
    if !a.same_dimensions(b) {
        return Err(PgmError::DimensionMismatch {
            aw: a.width,
            ah: a.height,
            bw: b.width,
            bh: b.height,
        });
    }
    let mut sum = 0.0;
    for (&pa, &pb) in a.pixels.iter().zip(&b.pixels) {
        let d = pa as f64 - pb as f64;
        sum += d * d;
    }
    Ok(sum / a.pixels.len() as f64)
}

/// Canonical filename for frame `index`: zero-padded to six digits.
pub fn frame_file_name(index: u64) -> String {
    format!("{index:06}.pgm")
}

/// Load every `.pgm` in a directory whose stem is a number, sorted by that
/// number; all frames in one directory must share dimensions.
pub fn load_frames_dir(dir: &Path) -> Result<Vec<(u64, GrayFrame)>, PgmError> {
    let mut indexed: Vec<(u64, std::path::PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("pgm") {
            continue;
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| PgmError::BadFrameName(path.display().to_string()))?;
        let index: u64 = stem
            .parse()
            .map_err(|_| PgmError::BadFrameName(path.display().to_string()))?;
        indexed.push((index, path));
    }
    indexed.sort_by_key(|(i, _)| *i);

    let mut frames = Vec::with_capacity(indexed.len());
    for (index, path) in indexed {
        let frame = decode_pgm(&std::fs::read(&path)?)?;
        if let Some((_, first)) = frames.first() {
            let first: &GrayFrame = first;
            if !first.same_dimensions(&frame) {
                return Err(PgmError::DimensionMismatch {
                    aw: first.width,
                    ah: first.height,
                    bw: frame.width,
                    bh: frame.height,
                });
            }
        }
        frames.push((index, frame));
    }
    Ok(frames)
}
