//! Grayscale image datasets: 8-bit PGM (P2/P5) codec and CSV manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// One grayscale image. Rows run along the `s` axis, columns along `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    pub id: String,
    pixels: DMatrix<f64>,
}

impl ImageGrid {
    pub fn new(id: impl Into<String>, pixels: DMatrix<f64>) -> Result<Self> {
        if pixels.nrows() < 2 || pixels.ncols() < 2 {
            return Err(Error::DimensionMismatch(format!(
                "image must be at least 2x2, got {}x{}",
                pixels.nrows(),
                pixels.ncols()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidArg(format!("pixel value {p} outside [0, 1]")));
        }
        Ok(Self {
            id: id.into(),
            pixels,
        })
    }

    pub fn height(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn width(&self) -> usize {
        self.pixels.ncols()
    }

    pub fn pixels(&self) -> &DMatrix<f64> {
        &self.pixels
    }
}

/// N same-sized images with optional ground-truth labels (values `1..=L`).
#[derive(Debug, Clone)]
pub struct Dataset {
    images: Vec<ImageGrid>,
    labels: Option<Vec<usize>>,
    pub positive_class: Option<usize>,
}

impl Dataset {
    pub fn new(images: Vec<ImageGrid>, labels: Option<Vec<usize>>) -> Result<Self> {
        if images.len() < 2 {
            return Err(Error::InvalidArg(format!(
                "a dataset needs at least 2 images, got {}",
                images.len()
            )));
        }
        let (h, w) = (images[0].height(), images[0].width());
        if let Some(bad) = images.iter().find(|g| g.height() != h || g.width() != w) {
            return Err(Error::DimensionMismatch(format!(
                "image {} is {}x{}, expected {h}x{w}",
                bad.id,
                bad.height(),
                bad.width()
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != images.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} labels for {} images",
                    labels.len(),
                    images.len()
                )));
            }
            if labels.contains(&0) {
                return Err(Error::MalformedManifest("labels must be integers >= 1".into()));
            }
        }
        Ok(Self {
            images,
            labels,
            positive_class: None,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn height(&self) -> usize {
        self.images[0].height()
    }

    pub fn width(&self) -> usize {
        self.images[0].width()
    }

    pub fn images(&self) -> &[ImageGrid] {
        &self.images
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn ids(&self) -> Vec<String> {
        self.images.iter().map(|g| g.id.clone()).collect()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.images.iter().position(|g| g.id == id)
    }
}

/// Load a dataset from a CSV manifest with header `id,path[,label]`.
/// Image paths are resolved relative to the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Dataset> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::MalformedManifest(e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::MalformedManifest(e.to_string()))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    let has_label = match cols.as_slice() {
        ["id", "path"] => false,
        ["id", "path", "label"] => true,
        _ => {
            return Err(Error::MalformedManifest(format!(
                "expected header `id,path,label` or `id,path`, got `{}`",
                cols.join(",")
            )))
        }
    };

    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::MalformedManifest(e.to_string()))?;
        let id = record.get(0).unwrap_or_default();
        let rel = record.get(1).unwrap_or_default();
        if id.is_empty() || rel.is_empty() {
            return Err(Error::MalformedManifest(format!("row {} has an empty id or path", row + 1)));
        }
        if has_label {
            let raw = record.get(2).unwrap_or_default();
            let label: usize = raw.parse().map_err(|_| {
                Error::MalformedManifest(format!("row {}: label `{raw}` is not an integer", row + 1))
            })?;
            if label == 0 {
                return Err(Error::MalformedManifest(format!("row {}: labels start at 1", row + 1)));
            }
            labels.push(label);
        }
        let file = base.join(rel);
        let pixels = read_pgm(&file)?;
        images.push(ImageGrid::new(id, pixels)?);
    }
    Dataset::new(images, has_label.then_some(labels))
}

/// Decode an 8-bit PGM (P2 or P5, maxval 255) into intensities `v / 255`.
pub fn read_pgm(path: &Path) -> Result<DMatrix<f64>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).map_err(|msg| match msg {
        PgmError::Unsupported(m) => Error::UnsupportedFormat(format!("{}: {m}", path.display())),
        PgmError::Malformed(m) => Error::malformed(path, m),
    })
}

#[derive(Debug)]
enum PgmError {
    Unsupported(String),
    Malformed(String),
}

struct Tokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn next(&mut self) -> Option<&'a [u8]> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        if self.pos >= self.bytes.len() {
            return None;
        }
        let start = self.pos;
        while self.pos < self.bytes.len()
            && !self.bytes[self.pos].is_ascii_whitespace()
            && self.bytes[self.pos] != b'#'
        {
            self.pos += 1;
        }
        Some(&self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> std::result::Result<usize, PgmError> {
        let tok = self
            .next()
            .ok_or_else(|| PgmError::Malformed(format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| PgmError::Malformed(format!("bad {what}")))
    }
}

fn decode_pgm(bytes: &[u8]) -> std::result::Result<DMatrix<f64>, PgmError> {
    let mut tok = Tokens { bytes, pos: 0 };
    let magic = tok
        .next()
        .ok_or_else(|| PgmError::Malformed("empty file".into()))?;
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        other => {
            return Err(PgmError::Unsupported(format!(
                "magic `{}` is not P2 or P5",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let width = tok.number("width")?;
    let height = tok.number("height")?;
    let maxval = tok.number("maxval")?;
    if maxval != 255 {
        return Err(PgmError::Unsupported(format!("maxval {maxval}, only 255 is accepted")));
    }
    if width == 0 || height == 0 {
        return Err(PgmError::Malformed("zero image dimension".into()));
    }
    let count = width * height;
    let mut values = Vec::with_capacity(count);
    if binary {
        // exactly one whitespace byte separates maxval from the raster
        let start = tok.pos + 1;
        let raster = bytes
            .get(start..start + count)
            .ok_or_else(|| PgmError::Malformed("truncated raster".into()))?;
        values.extend(raster.iter().map(|&b| f64::from(b) / 255.0));
    } else {
        for _ in 0..count {
            let v = tok.number("pixel")?;
            if v > 255 {
                return Err(PgmError::Malformed(format!("pixel value {v} exceeds maxval")));
            }
            values.push(v as f64 / 255.0);
        }
    }
    Ok(DMatrix::from_row_slice(height, width, &values))
}

/// Quantize a pixel to a byte: clamp to `[0, 1]`, then round half up.
pub fn quantize(p: f64) -> u8 {
    let c = if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) };
    (c * 255.0 + 0.5).floor() as u8
}

/// Encode a P5 PGM with maxval 255.
pub fn encode_pgm(pixels: &DMatrix<f64>) -> Vec<u8> {
    let (h, w) = pixels.shape();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.reserve(h * w);
    for r in 0..h {
        for c in 0..w {
            out.push(quantize(pixels[(r, c)]));
        }
    }
    out
}

/// Write any real-valued grid as a P5 PGM. Values outside `[0, 1]` are
/// clamped, so unclamped reconstructions can be written directly.
pub fn write_pgm_pixels(pixels: &DMatrix<f64>, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_pgm(pixels)).map_err(|e| Error::io(path, e))
}

pub fn write_pgm(image: &ImageGrid, path: &Path) -> Result<()> {
    write_pgm_pixels(image.pixels(), path)
}

/// Write every image as `<id>.pgm` under `dir` plus a `manifest.csv`
/// referencing them. Returns the manifest path.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = dir.join("manifest.csv");
    let mut w = csv::Writer::from_path(&manifest).map_err(|e| Error::malformed(&manifest, e.to_string()))?;
    let header: &[&str] = if dataset.labels().is_some() {
        &["id", "path", "label"]
    } else {
        &["id", "path"]
    };
    let csv_err = |e: csv::Error| Error::malformed(&manifest, e.to_string());
    w.write_record(header).map_err(csv_err)?;
    for (i, image) in dataset.images().iter().enumerate() {
        let file = format!("{}.pgm", image.id);
        write_pgm(image, &dir.join(&file))?;
        match dataset.labels() {
            Some(labels) => w
                .write_record([image.id.as_str(), file.as_str(), &labels[i].to_string()])
                .map_err(csv_err)?,
            None => w.write_record([image.id.as_str(), file.as_str()]).map_err(csv_err)?,
        }
    }
    w.flush().map_err(|e| Error::io(&manifest, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write(dir: &Path, name: &str, bytes: &[u8]) {
        fs::write(dir.join(name), bytes).unwrap();
    }

    #[test]
    fn manifest_of_white_images() {
        let dir = tempfile::tempdir().unwrap();
        let white = {
            let mut b = b"P5\n4 4\n255\n".to_vec();
            b.extend([255u8; 16]);
            b
        };
        write(dir.path(), "a.pgm", &white);
        write(dir.path(), "b.pgm", &white);
        write(dir.path(), "m.csv", b"id,path,label\nx,a.pgm,1\ny,b.pgm,2\n");
        let ds = load_manifest(&dir.path().join("m.csv")).unwrap();
        assert_eq!(ds.len(), 2);
        assert!(ds.images().iter().all(|g| g.pixels().iter().all(|&p| p == 1.0)));
        assert_eq!(ds.ids(), vec!["x", "y"]);
        assert_eq!(ds.labels(), Some(&[1, 2][..]));
    }

    #[test]
    fn mismatched_sizes_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = b"P5\n4 4\n255\n".to_vec();
        a.extend([0u8; 16]);
        let mut b = b"P5\n4 5\n255\n".to_vec();
        b.extend([0u8; 20]);
        write(dir.path(), "a.pgm", &a);
        write(dir.path(), "b.pgm", &b);
        write(dir.path(), "m.csv", b"id,path\na,a.pgm\nb,b.pgm\n");
        let err = load_manifest(&dir.path().join("m.csv")).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)), "{err}");
    }

    #[test]
    fn ascii_ramp_with_comments() {
        let dir = tempfile::tempdir().unwrap();
        let mut text = String::from("P2\n# a comment\n16 16\n# another\n255\n");
        for v in 0..256 {
            text.push_str(&format!("{v}\n"));
        }
        write(dir.path(), "a.pgm", text.as_bytes());
        write(dir.path(), "b.pgm", text.as_bytes());
        write(dir.path(), "m.csv", b"id,path,label\nimg1,a.pgm,2\nimg2,b.pgm,1\n");
        let ds = load_manifest(&dir.path().join("m.csv")).unwrap();
        let g = &ds.images()[0];
        assert_eq!(g.id, "img1");
        assert_eq!(ds.labels().unwrap()[0], 2);
        // hand decoding: raster order, value v at (v / 16, v % 16)
        for v in 0..256usize {
            assert_eq!(g.pixels()[(v / 16, v % 16)], v as f64 / 255.0);
        }
        assert_eq!(g.pixels()[(0, 0)], 0.0);
    }

    #[test]
    fn error_paths() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "m.csv", b"id,path,label\na,nope.pgm,1\nb,nope.pgm,1\n");
        assert!(matches!(
            load_manifest(&dir.path().join("m.csv")).unwrap_err(),
            Error::MissingFile(_)
        ));

        write(dir.path(), "bad_header.csv", b"name,file\na,a.pgm\n");
        assert!(matches!(
            load_manifest(&dir.path().join("bad_header.csv")).unwrap_err(),
            Error::MalformedManifest(_)
        ));

        let mut a = b"P5\n2 2\n255\n".to_vec();
        a.extend([0u8; 4]);
        write(dir.path(), "a.pgm", &a);
        write(dir.path(), "bad_label.csv", b"id,path,label\na,a.pgm,x\nb,a.pgm,1\n");
        assert!(matches!(
            load_manifest(&dir.path().join("bad_label.csv")).unwrap_err(),
            Error::MalformedManifest(_)
        ));

        write(dir.path(), "p6.pgm", b"P6\n2 2\n255\n000000000000");
        assert!(matches!(
            read_pgm(&dir.path().join("p6.pgm")).unwrap_err(),
            Error::UnsupportedFormat(_)
        ));
        write(dir.path(), "deep.pgm", b"P2\n2 2\n65535\n0 0 0 0\n");
        assert!(matches!(
            read_pgm(&dir.path().join("deep.pgm")).unwrap_err(),
            Error::UnsupportedFormat(_)
        ));
    }

    #[test]
    fn encoding_extremes_and_half() {
        let zeros = encode_pgm(&DMatrix::zeros(2, 2));
        assert_eq!(&zeros[zeros.len() - 4..], &[0, 0, 0, 0]);
        let ones = encode_pgm(&DMatrix::from_element(2, 2, 1.0));
        assert_eq!(&ones[ones.len() - 4..], &[255; 4]);
        // 0.5 * 255 = 127.5 rounds up
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(-3.0), 0);
        assert_eq!(quantize(7.0), 255);
    }

    proptest! {
        #[test]
        fn pgm_round_trip(h in 2usize..9, w in 2usize..9, seed in any::<u64>()) {
            let mut state = seed;
            let pixels = DMatrix::from_fn(h, w, |_, _| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64
            });
            let decoded = decode_pgm(&encode_pgm(&pixels)).unwrap();
            for (a, b) in pixels.iter().zip(decoded.iter()) {
                prop_assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
    }
}
