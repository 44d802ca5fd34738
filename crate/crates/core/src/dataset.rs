//! Labeled raster images: binary PPM/PGM codec, directory import and a seeded
//! synthetic generator standing in for a real photo collection.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint;
use crate::rng::{self, SplitMix64};

/// A small raster image. Pixels are row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// 1 (gray) or 3 (RGB).
    pub channels: usize,
    pub pixels: Vec<u8>,
    pub id: String,
    pub label: String,
}

impl Image {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        pixels: Vec<u8>,
        id: impl Into<String>,
        label: impl Into<String>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!(
                "image must be at least 1x1, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Shape(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "{} pixel bytes for {width}x{height}x{channels}",
                pixels.len()
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            pixels,
            id: id.into(),
            label: label.into(),
        })
    }

    /// `(channels, height, width)`, the layout the embedding network consumes.
    pub fn shape(&self) -> InputShape {
        InputShape {
            channels: self.channels,
            height: self.height,
            width: self.width,
        }
    }

    /// Mean value per channel over all pixels.
    pub fn channel_means(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.channels];
        for px in self.pixels.chunks_exact(self.channels) {
            for (s, &v) in sums.iter_mut().zip(px) {
                *s += v as f64;
            }
        }
        let n = (self.width * self.height) as f64;
        sums.into_iter().map(|s| s / n).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InputShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl InputShape {
    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An ordered set of labeled images with a display color per class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    pub items: Vec<Image>,
    pub classes: Vec<String>,
    pub class_colors: BTreeMap<String, String>,
}

impl LabeledDataset {
    /// Builds a dataset and checks every invariant: known labels, unique ids,
    /// at least two items per class and one common image shape.
    pub fn new(
        items: Vec<Image>,
        classes: Vec<String>,
        class_colors: BTreeMap<String, String>,
    ) -> Result<Self> {
        let data = LabeledDataset {
            items,
            classes,
            class_colors,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for c in &self.classes {
            if !seen.insert(c.as_str()) {
                return Err(Error::Dataset(format!("duplicate class {c:?}")));
            }
        }
        let mut ids = HashSet::new();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        let shape = self.items.first().map(Image::shape);
        for img in &self.items {
            if !seen.contains(img.label.as_str()) {
                return Err(Error::Dataset(format!(
                    "item {:?} has unknown label {:?}",
                    img.id, img.label
                )));
            }
            if !ids.insert(img.id.as_str()) {
                return Err(Error::Dataset(format!("duplicate id {:?}", img.id)));
            }
            if Some(img.shape()) != shape {
                return Err(Error::Dataset(format!(
                    "item {:?} is {}x{}x{}, expected a common shape",
                    img.id, img.width, img.height, img.channels
                )));
            }
            *counts.entry(img.label.as_str()).or_default() += 1;
        }
        for c in &self.classes {
            let n = counts.get(c.as_str()).copied().unwrap_or(0);
            if n < 2 {
                return Err(Error::Dataset(format!(
                    "class {c:?} needs ≥ 2 items, has {n}"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn input_shape(&self) -> Option<InputShape> {
        self.items.first().map(Image::shape)
    }

    pub fn labels(&self) -> Vec<&str> {
        self.items.iter().map(|i| i.label.as_str()).collect()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.items.iter().map(|i| i.id.as_str()).collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.items.iter().position(|i| i.id == id)
    }

    pub fn color_of(&self, class: &str) -> &str {
        self.class_colors
            .get(class)
            .map(String::as_str)
            .unwrap_or("#808080")
    }

    pub fn fingerprint(&self) -> u64 {
        fingerprint::dataset_fingerprint(self)
    }
}

// ---------------------------------------------------------------------------
// PPM / PGM
// ---------------------------------------------------------------------------

fn ppm_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Ppm {
        offset,
        message: message.into(),
    }
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

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ppm_err(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ppm_err(start, format!("{what} out of range")))
    }
}

/// Decodes a binary P6 (RGB) or P5 (gray) image with maxval 255.
/// The returned image has empty `id` and `label`.
pub fn read_ppm(bytes: &[u8]) -> Result<Image> {
    let channels = match bytes.get(..2) {
        Some(b"P6") => 3,
        Some(b"P5") => 1,
        _ => return Err(ppm_err(0, "unsupported magic")),
    };
    let mut cur = HeaderCursor { bytes, pos: 2 };
    if !cur.bytes.get(2).is_some_and(u8::is_ascii_whitespace) {
        return Err(ppm_err(2, "unsupported magic"));
    }
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_at = {
        cur.skip_whitespace_and_comments();
        cur.pos
    };
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(ppm_err(
            maxval_at,
            format!("maxval must be 255, got {maxval}"),
        ));
    }
    if width == 0 || height == 0 {
        return Err(ppm_err(2, format!("zero dimension {width}x{height}")));
    }
    // exactly one whitespace byte separates the header from the payload
    if !bytes.get(cur.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(ppm_err(cur.pos, "expected whitespace before pixel data"));
    }
    let start = cur.pos + 1;
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| ppm_err(2, "dimensions overflow"))?;
    let available = bytes.len().saturating_sub(start);
    if available < need {
        return Err(ppm_err(
            bytes.len(),
            format!("truncated pixel payload: need {need} bytes, found {available}"),
        ));
    }
    Image::new(
        width,
        height,
        channels,
        bytes[start..start + need].to_vec(),
        "",
        "",
    )
}

/// Encodes as P6 or P5 depending on the channel count.
pub fn write_ppm(img: &Image) -> Vec<u8> {
    let magic = if img.channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub num_classes: usize,
    pub per_class: usize,
    pub image_size: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_classes: 4,
            per_class: 25,
            image_size: 16,
            noise_sigma: 16.0,
            seed: 42,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be ≥ 2".into()));
        }
        if self.per_class < 2 {
            return Err(Error::Config("per_class must be ≥ 2".into()));
        }
        if self.image_size < 4 {
            return Err(Error::Config("image_size must be ≥ 4".into()));
        }
        if !(0.0..=255.0).contains(&self.noise_sigma) {
            return Err(Error::Config("noise_sigma must lie in [0, 255]".into()));
        }
        Ok(())
    }
}

const STRIPE_AMPLITUDE: f64 = 28.0;
/// Hues of all classes fall in `[HUE_START, HUE_START + HUE_SPAN)`.
const HUE_START: f64 = 0.05;
const HUE_SPAN: f64 = 0.08;

/// Per-class prototype: base color plus a diagonal stripe texture. Base
/// colors sit in a narrow warm band, so the stripes carry most of the class
/// signal; each image draws its own stripe phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassPrototype {
    pub base: [f64; 3],
    /// Stripe cycles across the image; in `1..size` so the texture has zero mean.
    pub frequency: usize,
    /// Stripes run along `x + y` when false and `x - y` when true.
    pub anti_diagonal: bool,
}

impl ClassPrototype {
    pub fn for_class(k: usize, num_classes: usize, size: usize) -> Self {
        let hue = HUE_START + HUE_SPAN * k as f64 / num_classes as f64;
        ClassPrototype {
            base: hsv_to_rgb(hue, 0.55, 0.72),
            frequency: k % (size - 1) + 1,
            anti_diagonal: k % 2 == 1,
        }
    }

    /// Noise-free value of channel `c` at `(x, y)` for stripe phase `shift`
    /// (radians), before rounding.
    pub fn value(&self, x: usize, y: usize, c: usize, size: usize, shift: f64) -> f64 {
        let t = if self.anti_diagonal {
            x as f64 - y as f64
        } else {
            (x + y) as f64
        };
        let phase = 2.0 * std::f64::consts::PI * self.frequency as f64 * t / size as f64 + shift;
        self.base[c] + STRIPE_AMPLITUDE * phase.cos()
    }

    pub fn hex(&self) -> String {
        let [r, g, b] = self.base.map(|v| v.round().clamp(0.0, 255.0) as u8);
        format!("#{r:02X}{g:02X}{b:02X}")
    }
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let i = (h * 6.0).floor();
    let f = h * 6.0 - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - f * s);
    let t = v * (1.0 - (1.0 - f) * s);
    let (r, g, b) = match i as i64 % 6 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [r * 255.0, g * 255.0, b * 255.0]
}

pub fn synthetic_class_name(k: usize) -> String {
    format!("class_{k}")
}

fn render(proto: &ClassPrototype, size: usize, sigma: f64, rng: &mut SplitMix64) -> Vec<u8> {
    let shift = rng::uniform(rng) * std::f64::consts::TAU;
    let mut pixels = Vec::with_capacity(size * size * 3);
    for y in 0..size {
        for x in 0..size {
            for c in 0..3 {
                let v = proto.value(x, y, c, size, shift) + rng::gaussian(rng, sigma);
                pixels.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    pixels
}

/// Deterministic stand-in dataset: `num_classes × per_class` RGB images.
/// Items are ordered by class then index; ids are `<class>/<index>`.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<LabeledDataset> {
    config.validate()?;
    let size = config.image_size;
    let mut rng = rng::seeded(config.seed);
    let mut items = Vec::with_capacity(config.num_classes * config.per_class);
    let mut classes = Vec::with_capacity(config.num_classes);
    let mut class_colors = BTreeMap::new();
    for k in 0..config.num_classes {
        let proto = ClassPrototype::for_class(k, config.num_classes, size);
        let label = synthetic_class_name(k);
        class_colors.insert(label.clone(), proto.hex());
        for i in 0..config.per_class {
            let pixels = render(&proto, size, config.noise_sigma, &mut rng);
            items.push(Image::new(
                size,
                size,
                3,
                pixels,
                format!("{label}/{i:03}"),
                &label,
            )?);
        }
        classes.push(label);
    }
    LabeledDataset::new(items, classes, class_colors)
}

/// A fresh image of class `class` drawn from its own `seed`, outside the
/// generated dataset; used as an inference query.
pub fn synthetic_image(config: &SyntheticConfig, class: usize, seed: u64) -> Result<Image> {
    config.validate()?;
    if class >= config.num_classes {
        return Err(Error::Config(format!(
            "class {class} out of range for {} classes",
            config.num_classes
        )));
    }
    let size = config.image_size;
    let proto = ClassPrototype::for_class(class, config.num_classes, size);
    let pixels = render(&proto, size, config.noise_sigma, &mut rng::seeded(seed));
    let label = synthetic_class_name(class);
    Image::new(
        size,
        size,
        3,
        pixels,
        format!("{label}/query-{seed}"),
        label,
    )
}

// ---------------------------------------------------------------------------
// Directory layout: root/<class>/<name>.ppm plus an optional manifest.json
// ---------------------------------------------------------------------------

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub dataset_fingerprint: String,
    pub classes: Vec<String>,
    pub class_colors: BTreeMap<String, String>,
    pub items: Vec<ManifestItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub id: String,
    pub label: String,
    pub file: String,
}

fn is_image_file(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("ppm" | "pgm" | "pnm")
    )
}

/// Imports `root/<class>/*.ppm`. Labels are directory names; items are sorted
/// by `(label, filename)` whatever order the filesystem lists them in. Class
/// colors come from `manifest.json` when present, otherwise from each class's
/// mean pixel color.
pub fn load_directory(root: &Path) -> Result<LabeledDataset> {
    let mut class_dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if path.is_dir() {
            let name = entry.file_name().to_string_lossy().into_owned();
            class_dirs.push((name, path));
        }
    }
    if class_dirs.is_empty() {
        return Err(Error::Dataset(format!(
            "{} holds no class directories",
            root.display()
        )));
    }
    class_dirs.sort();

    let mut items = Vec::new();
    let mut classes = Vec::new();
    for (label, dir) in &class_dirs {
        let mut files = Vec::new();
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.is_file() && is_image_file(&path) {
                files.push(path);
            }
        }
        files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
        if files.len() < 2 {
            return Err(Error::Dataset(format!(
                "class {label:?} needs ≥ 2 items, has {}",
                files.len()
            )));
        }
        for path in files {
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let mut img = read_ppm(&bytes).map_err(|e| match e {
                Error::Ppm { offset, message } => {
                    Error::Dataset(format!("{}: byte {offset}: {message}", path.display()))
                }
                other => other,
            })?;
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            img.id = format!("{label}/{stem}");
            img.label = label.clone();
            items.push(img);
        }
        classes.push(label.clone());
    }

    let manifest_path = root.join(MANIFEST_FILE);
    let manifest_colors = if manifest_path.is_file() {
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let m: Manifest = serde_json::from_str(&text)?;
        Some(m.class_colors)
    } else {
        None
    };
    let mut class_colors = BTreeMap::new();
    for c in &classes {
        let color = manifest_colors
            .as_ref()
            .and_then(|m| m.get(c).cloned())
            .unwrap_or_else(|| mean_color_hex(items.iter().filter(|i| &i.label == c)));
        class_colors.insert(c.clone(), color);
    }
    LabeledDataset::new(items, classes, class_colors)
}

fn mean_color_hex<'a>(imgs: impl Iterator<Item = &'a Image>) -> String {
    let mut acc = [0.0; 3];
    let mut n = 0.0;
    for img in imgs {
        let m = img.channel_means();
        for c in 0..3 {
            acc[c] += m[c.min(m.len() - 1)];
        }
        n += 1.0;
    }
    let [r, g, b] = acc.map(|v| (v / n).round().clamp(0.0, 255.0) as u8);
    format!("#{r:02X}{g:02X}{b:02X}")
}

/// Writes the dataset as `root/<class>/<name>.ppm` and a `manifest.json`.
/// Ids must have the `<class>/<name>` form so that `load_directory` restores
/// them exactly.
pub fn write_directory(data: &LabeledDataset, root: &Path) -> Result<Manifest> {
    let mut manifest_items = Vec::with_capacity(data.len());
    for img in &data.items {
        let name = img
            .id
            .strip_prefix(&format!("{}/", img.label))
            .filter(|n| !n.is_empty() && !n.contains('/'))
            .ok_or_else(|| {
                Error::Dataset(format!("id {:?} is not of the form <class>/<name>", img.id))
            })?;
        let ext = if img.channels == 3 { "ppm" } else { "pgm" };
        let rel = format!("{}/{name}.{ext}", img.label);
        let dir = root.join(&img.label);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = root.join(&rel);
        fs::write(&path, write_ppm(img)).map_err(|e| Error::io(&path, e))?;
        manifest_items.push(ManifestItem {
            id: img.id.clone(),
            label: img.label.clone(),
            file: rel,
        });
    }
    let manifest = Manifest {
        format_version: 1,
        dataset_fingerprint: fingerprint::to_hex(data.fingerprint()),
        classes: data.classes.clone(),
        class_colors: data.class_colors.clone(),
        items: manifest_items,
    };
    let path = root.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reads_minimal_p6() {
        let mut bytes = b"P6\n1 1\n255\n".to_vec();
        bytes.extend([255, 0, 0]);
        let img = read_ppm(&bytes).unwrap();
        assert_eq!((img.width, img.height, img.channels), (1, 1, 3));
        assert_eq!(img.pixels, vec![255, 0, 0]);
    }

    #[test]
    fn reads_p5_row_major() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend([0, 64, 128, 255]);
        let img = read_ppm(&bytes).unwrap();
        assert_eq!((img.width, img.height, img.channels), (2, 2, 1));
        assert_eq!(img.pixels, vec![0, 64, 128, 255]);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n2 1 # trailing\n255\n".to_vec();
        bytes.extend([7, 9]);
        assert_eq!(read_ppm(&bytes).unwrap().pixels, vec![7, 9]);
    }

    #[test]
    fn rejects_unknown_magic() {
        let err = read_ppm(b"P7\nWIDTH 1\n").unwrap_err();
        assert!(err.to_string().contains("unsupported magic"), "{err}");
        assert!(matches!(err, Error::Ppm { offset: 0, .. }));
    }

    #[test]
    fn rejects_non_255_maxval_with_offset() {
        let err = read_ppm(b"P5\n1 1\n65535\n\0\0").unwrap_err();
        match err {
            Error::Ppm { offset, message } => {
                assert_eq!(offset, 7);
                assert!(message.contains("maxval"));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn rejects_truncated_payload() {
        let mut bytes = b"P6\n2 1\n255\n".to_vec();
        bytes.extend([1, 2, 3, 4]);
        let err = read_ppm(&bytes).unwrap_err();
        assert!(matches!(err, Error::Ppm { offset: 15, .. }), "{err}");
        assert!(err.to_string().contains("truncated"));
    }

    #[test]
    fn writes_red_pixel() {
        let img = Image::new(1, 1, 3, vec![255, 0, 0], "r", "x").unwrap();
        let mut expected = b"P6\n1 1\n255\n".to_vec();
        expected.extend([255, 0, 0]);
        assert_eq!(write_ppm(&img), expected);
    }

    #[test]
    fn writes_gray_as_p5() {
        let img = Image::new(3, 2, 1, vec![1, 2, 3, 4, 5, 6], "g", "x").unwrap();
        let out = write_ppm(&img);
        assert!(out.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(out.len(), b"P5\n3 2\n255\n".len() + 6);
    }

    fn arb_image() -> impl Strategy<Value = Image> {
        (
            1usize..6,
            1usize..6,
            prop_oneof![Just(1usize), Just(3usize)],
        )
            .prop_flat_map(|(w, h, c)| {
                proptest::collection::vec(any::<u8>(), w * h * c)
                    .prop_map(move |px| Image::new(w, h, c, px, "", "").unwrap())
            })
    }

    proptest! {
        #[test]
        fn ppm_round_trip(img in arb_image()) {
            prop_assert_eq!(read_ppm(&write_ppm(&img)).unwrap(), img);
        }
    }

    #[test]
    fn synthetic_counts_and_determinism() {
        let cfg = SyntheticConfig {
            num_classes: 4,
            per_class: 25,
            image_size: 16,
            noise_sigma: 16.0,
            seed: 42,
        };
        let a = generate_synthetic(&cfg).unwrap();
        assert_eq!(a.len(), 100);
        assert_eq!(a.classes.len(), 4);
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = generate_synthetic(&SyntheticConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn synthetic_class_means_match_prototypes() {
        let cfg = SyntheticConfig {
            num_classes: 4,
            per_class: 25,
            image_size: 16,
            noise_sigma: 16.0,
            seed: 42,
        };
        let data = generate_synthetic(&cfg).unwrap();
        let pixels = (cfg.image_size * cfg.image_size) as f64;
        let tol = 3.0 * cfg.noise_sigma / (cfg.per_class as f64 * pixels).sqrt();
        for (k, class) in data.classes.iter().enumerate() {
            // the texture sums to zero over the image for any phase, so the
            // expected mean is the average of the noise-free prototype values
            let proto = ClassPrototype::for_class(k, cfg.num_classes, cfg.image_size);
            for c in 0..3 {
                let mut expected = 0.0;
                for y in 0..cfg.image_size {
                    for x in 0..cfg.image_size {
                        expected += proto.value(x, y, c, cfg.image_size, 0.7);
                    }
                }
                expected /= pixels;
                assert!((expected - proto.base[c]).abs() < 1e-9);
                let imgs: Vec<_> = data.items.iter().filter(|i| &i.label == class).collect();
                let mean =
                    imgs.iter().map(|i| i.channel_means()[c]).sum::<f64>() / imgs.len() as f64;
                assert!(
                    (mean - expected).abs() <= tol,
                    "class {k} channel {c}: mean {mean} vs {expected} (tol {tol})"
                );
            }
        }
    }

    #[test]
    fn synthetic_rejects_bad_config() {
        let bad = SyntheticConfig {
            num_classes: 1,
            ..SyntheticConfig::default()
        };
        assert!(generate_synthetic(&bad).is_err());
        let bad = SyntheticConfig {
            image_size: 3,
            ..SyntheticConfig::default()
        };
        assert!(generate_synthetic(&bad).is_err());
    }

    fn tiny(label: &str, v: u8) -> Vec<u8> {
        let img = Image::new(1, 1, 3, vec![v, v, v], "", label).unwrap();
        write_ppm(&img)
    }

    #[test]
    fn loads_directory_sorted() {
        let dir = tempfile::tempdir().unwrap();
        // created out of order on purpose
        for (class, name) in [("b", "2"), ("a", "2"), ("b", "1"), ("a", "1")] {
            fs::create_dir_all(dir.path().join(class)).unwrap();
            fs::write(
                dir.path().join(class).join(format!("{name}.ppm")),
                tiny(class, 10),
            )
            .unwrap();
        }
        let data = load_directory(dir.path()).unwrap();
        assert_eq!(data.classes, vec!["a", "b"]);
        assert_eq!(data.ids(), vec!["a/1", "a/2", "b/1", "b/2"]);
        assert_eq!(data.color_of("a"), "#0A0A0A");
    }

    #[test]
    fn load_rejects_singleton_class() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("a")).unwrap();
        fs::write(dir.path().join("a/1.ppm"), tiny("a", 1)).unwrap();
        let err = load_directory(dir.path()).unwrap_err();
        assert!(
            err.to_string().contains("class \"a\" needs ≥ 2 items"),
            "{err}"
        );
    }

    #[test]
    fn load_rejects_empty_root_and_bad_file() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_directory(dir.path()).is_err());
        fs::create_dir_all(dir.path().join("a")).unwrap();
        fs::write(dir.path().join("a/1.ppm"), tiny("a", 1)).unwrap();
        fs::write(dir.path().join("a/2.ppm"), b"P3\n").unwrap();
        let err = load_directory(dir.path()).unwrap_err();
        assert!(err.to_string().contains("2.ppm"), "{err}");
    }

    #[test]
    fn write_then_load_preserves_dataset() {
        let cfg = SyntheticConfig {
            num_classes: 3,
            per_class: 4,
            image_size: 6,
            noise_sigma: 10.0,
            seed: 9,
        };
        let data = generate_synthetic(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_directory(&data, dir.path()).unwrap();
        let back = load_directory(dir.path()).unwrap();
        assert_eq!(back, data);
        assert_eq!(
            manifest.dataset_fingerprint,
            fingerprint::to_hex(back.fingerprint())
        );
    }
}
