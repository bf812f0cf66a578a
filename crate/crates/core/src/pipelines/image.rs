//! Grayscale images, PGM files and pixel feature vectors.

use std::io::{BufRead, Write};

use crate::data::DataSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    maxval: u16,
    /// Row-major intensities in `0..=maxval`.
    pixels: Vec<u16>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, maxval: u16, pixels: Vec<u16>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("image must have at least one pixel"));
        }
        if maxval == 0 {
            return Err(Error::invalid("maxval must be positive"));
        }
        if pixels.len() != height * width {
            return Err(Error::invalid(format!(
                "{height}x{width} image needs {} pixels, got {}",
                height * width,
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|&&v| v > maxval) {
            return Err(Error::invalid(format!(
                "intensity {v} exceeds maxval {maxval}"
            )));
        }
        Ok(Self {
            height,
            width,
            maxval,
            pixels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn maxval(&self) -> u16 {
        self.maxval
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    pub fn get(&self, i: usize, j: usize) -> u16 {
        self.pixels[i * self.width + j]
    }
}

/// Header tokens of a netpbm file: whitespace separated, `#` to end of line
/// is a comment.
struct HeaderReader<R> {
    inner: R,
}

impl<R: BufRead> HeaderReader<R> {
    fn byte(&mut self) -> Result<Option<u8>> {
        let buf = self.inner.fill_buf()?;
        let b = buf.first().copied();
        if b.is_some() {
            self.inner.consume(1);
        }
        Ok(b)
    }

    /// Next token; consumes exactly one whitespace byte after it, as the
    /// binary raster starts right after that byte.
    fn token(&mut self) -> Result<String> {
        let mut tok = String::new();
        loop {
            match self.byte()? {
                None if tok.is_empty() => return Err(Error::invalid("truncated PGM header")),
                None => return Ok(tok),
                Some(b'#') if tok.is_empty() => {
                    while !matches!(self.byte()?, None | Some(b'\n') | Some(b'\r')) {}
                }
                Some(b) if b.is_ascii_whitespace() => {
                    if !tok.is_empty() {
                        return Ok(tok);
                    }
                }
                Some(b) => tok.push(b as char),
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let tok = self.token()?;
        tok.parse()
            .map_err(|_| Error::invalid(format!("bad PGM {what}: {tok:?}")))
    }
}

/// Reads a binary (P5) or ASCII (P2) PGM image.
pub fn read_pgm<R: BufRead>(input: R) -> Result<GrayImage> {
    let mut header = HeaderReader { inner: input };
    let magic = header.token()?;
    let width = header.number("width")?;
    let height = header.number("height")?;
    let maxval = header.number("maxval")?;
    if maxval == 0 || maxval > u16::MAX as usize {
        return Err(Error::invalid(format!(
            "PGM maxval must be in 1..=65535, got {maxval}"
        )));
    }
    let count = width
        .checked_mul(height)
        .ok_or_else(|| Error::invalid("PGM dimensions overflow"))?;
    let pixels: Vec<u16> = match magic.as_str() {
        "P5" => {
            let wide = maxval > 255;
            let mut raw = vec![0u8; count * if wide { 2 } else { 1 }];
            header
                .inner
                .read_exact(&mut raw)
                .map_err(|_| Error::invalid("PGM raster is shorter than width x height"))?;
            if wide {
                raw.chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]))
                    .collect()
            } else {
                raw.into_iter().map(u16::from).collect()
            }
        }
        "P2" => {
            let mut text = String::new();
            header.inner.read_to_string(&mut text)?;
            let values = text
                .lines()
                .map(|l| l.split('#').next().unwrap_or(""))
                .flat_map(str::split_ascii_whitespace)
                .map(|t| {
                    t.parse::<u16>()
                        .map_err(|_| Error::invalid(format!("bad PGM value {t:?}")))
                })
                .collect::<Result<Vec<u16>>>()?;
            if values.len() != count {
                return Err(Error::invalid(format!(
                    "PGM has {} values, expected {count}",
                    values.len()
                )));
            }
            values
        }
        other => return Err(Error::invalid(format!("not a PGM file (magic {other:?})"))),
    };
    GrayImage::new(height, width, maxval as u16, pixels)
}

/// Writes an ASCII (P2) PGM, one image row per line.
pub fn write_pgm_ascii<W: Write>(mut out: W, image: &GrayImage) -> Result<()> {
    writeln!(out, "P2")?;
    writeln!(out, "{} {}", image.width, image.height)?;
    writeln!(out, "{}", image.maxval)?;
    for row in image.pixels.chunks(image.width) {
        let line: Vec<String> = row.iter().map(u16::to_string).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageFeatureSpec {
    /// Intensities are mapped linearly from `[0, maxval]` to `[0, range_scale]`.
    pub range_scale: f64,
    pub include_spatial: bool,
}

impl Default for ImageFeatureSpec {
    fn default() -> Self {
        Self {
            range_scale: 100.0,
            include_spatial: true,
        }
    }
}

/// One feature vector per pixel in row-major order: `(i, j, scaled
/// intensity)`, or just the scaled intensity.
pub fn image_to_features(image: &GrayImage, spec: &ImageFeatureSpec) -> Result<DataSet> {
    if !(spec.range_scale > 0.0 && spec.range_scale.is_finite()) {
        return Err(Error::invalid(format!(
            "range scale must be positive, got {}",
            spec.range_scale
        )));
    }
    let scale = spec.range_scale / image.maxval as f64;
    let d = if spec.include_spatial { 3 } else { 1 };
    let mut flat = Vec::with_capacity(d * image.pixels.len());
    for i in 0..image.height {
        for j in 0..image.width {
            if spec.include_spatial {
                flat.push(i as f64);
                flat.push(j as f64);
            }
            flat.push(image.get(i, j) as f64 * scale);
        }
    }
    DataSet::new(nalgebra::DMatrix::from_vec(d, image.pixels.len(), flat))
}

/// Pixel `(i, j)` of the feature column `n` for an image of the given width.
pub fn pixel_of(n: usize, width: usize) -> (usize, usize) {
    (n / width, n % width)
}

/// Per-pixel cluster labels and the feature-space center of each cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelImage {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<usize>,
    pub modes: Vec<Vec<f64>>,
}

impl LabelImage {
    pub fn new(
        height: usize,
        width: usize,
        labels: Vec<usize>,
        modes: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::invalid("label count does not match image size"));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= modes.len()) {
            return Err(Error::invalid(format!(
                "label {l} out of range for {} modes",
                modes.len()
            )));
        }
        Ok(Self {
            height,
            width,
            labels,
            modes,
        })
    }

    pub fn num_clusters(&self) -> usize {
        self.modes.len()
    }

    /// Labels as gray levels `0..K`. The maxval is `K - 1`, raised to 1 for a
    /// single cluster since PGM forbids a zero maxval.
    pub fn to_gray(&self) -> Result<GrayImage> {
        let k = self.num_clusters();
        if k > u16::MAX as usize + 1 {
            return Err(Error::invalid(format!("{k} clusters do not fit in a PGM")));
        }
        let maxval = k.saturating_sub(1).max(1) as u16;
        GrayImage::new(
            self.height,
            self.width,
            maxval,
            self.labels.iter().map(|&l| l as u16).collect(),
        )
    }
}
