//! Mosaic and mixup augmentation with box label adjustment.
//!
//! # Mosaic geometry
//!
//! For a base size `S` the canvas is `2S x 2S`. A center `(cx, cy)` is drawn
//! uniformly from `[ceil(S/2), floor(3S/2)]^2` and splits the canvas into four
//! quadrants, filled top-left, top-right, bottom-left, bottom-right from the
//! four sources in order. Each source is resized, keeping its aspect ratio,
//! by the smallest factor that lets it cover its quadrant, and a
//! quadrant-sized window at a random offset is copied over. Resizing is
//! nearest-neighbour with the integer mapping
//! `src = ((2 * dst + 1) * src_len) / (2 * resized_len)`.
//!
//! Boxes are scaled the same way, clipped to the crop window and translated
//! into canvas coordinates by [`adjust_labels`]. A clipped box survives when
//! both sides are at least [`ClipPolicy::min_side`] pixels and it keeps at
//! least [`ClipPolicy::min_area_fraction`] of its pre-clip area.
//!
//! # Mixup
//!
//! Two samples of the same size are blended per channel as
//! `round(lambda * a + (1 - lambda) * b)` with `lambda ~ Beta(alpha, alpha)`;
//! their labels are concatenated.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::coco::{CategoryId, DatasetIndex, ImageId, ImageRecord, Label};
use crate::error::{Error, Result};
use crate::geometry::{BBox, Rect};
use crate::rng::{Purpose, Stream};
use crate::sampling::ClassAwareSampler;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipPolicy {
    pub min_side: f64,
    pub min_area_fraction: f64,
}

impl Default for ClipPolicy {
    fn default() -> Self {
        ClipPolicy {
            min_side: 2.0,
            min_area_fraction: 0.25,
        }
    }
}

/// Clips each box to `crop`, moves it by `offset`, and drops slivers.
///
/// `offset` is the full translation applied after clipping; for a mosaic
/// placement it is `destination origin - crop origin`.
pub fn adjust_labels(labels: &[Label], crop: &BBox, offset: (f64, f64), policy: &ClipPolicy) -> Vec<Label> {
    labels
        .iter()
        .filter_map(|label| {
            let clipped = label.bbox.intersect(crop)?;
            let keep = clipped.w >= policy.min_side
                && clipped.h >= policy.min_side
                && clipped.area() >= policy.min_area_fraction * label.bbox.area();
            keep.then(|| Label {
                category_id: label.category_id,
                bbox: clipped.translate(offset.0, offset.1),
            })
        })
        .collect()
}

/// Where one source lands on the canvas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub source: ImageId,
    /// Original `(width, height)` of the source.
    pub source_size: (u32, u32),
    /// `(width, height)` after the cover resize.
    pub resized: (u32, u32),
    /// Window in resized-source pixels; same size as `dest`.
    pub crop: Rect,
    pub dest: Rect,
}

impl Placement {
    /// Source pixel shown at canvas position `(x, y)`, which must lie in `dest`.
    pub fn source_pixel(&self, x: u32, y: u32) -> (u32, u32) {
        let u = x - self.dest.x + self.crop.x;
        let v = y - self.dest.y + self.crop.y;
        (
            nearest(u, self.source_size.0, self.resized.0),
            nearest(v, self.source_size.1, self.resized.1),
        )
    }

    fn scale(&self) -> (f64, f64) {
        (
            f64::from(self.resized.0) / f64::from(self.source_size.0),
            f64::from(self.resized.1) / f64::from(self.source_size.1),
        )
    }
}

fn nearest(dst: u32, src_len: u32, resized_len: u32) -> u32 {
    ((2 * u64::from(dst) + 1) * u64::from(src_len) / (2 * u64::from(resized_len))) as u32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MosaicLayout {
    pub base_size: u32,
    pub canvas_size: u32,
    pub center: (u32, u32),
    /// Top-left, top-right, bottom-left, bottom-right.
    pub placements: [Placement; 4],
}

/// Draws a center and plans a mosaic.
pub fn plan_mosaic(sources: [&ImageRecord; 4], base_size: u32, rng: &mut Stream) -> Result<MosaicLayout> {
    if base_size == 0 {
        return Err(Error::domain("mosaic base size must be positive"));
    }
    let lo = base_size.div_ceil(2);
    let hi = (3 * base_size / 2).max(lo);
    let span = u64::from(hi - lo) + 1;
    let cx = lo + rng.below(span) as u32;
    let cy = lo + rng.below(span) as u32;
    plan_mosaic_at(sources, base_size, (cx, cy), rng)
}

/// Plans a mosaic around a given center; `rng` only picks crop offsets.
pub fn plan_mosaic_at(
    sources: [&ImageRecord; 4],
    base_size: u32,
    center: (u32, u32),
    rng: &mut Stream,
) -> Result<MosaicLayout> {
    if base_size == 0 {
        return Err(Error::domain("mosaic base size must be positive"));
    }
    let canvas = 2 * base_size;
    let (cx, cy) = center;
    if cx == 0 || cy == 0 || cx >= canvas || cy >= canvas {
        return Err(Error::domain(format!(
            "center ({cx}, {cy}) leaves an empty quadrant on a {canvas}px canvas"
        )));
    }
    let quadrants = [
        Rect::new(0, 0, cx, cy),
        Rect::new(cx, 0, canvas - cx, cy),
        Rect::new(0, cy, cx, canvas - cy),
        Rect::new(cx, cy, canvas - cx, canvas - cy),
    ];
    let mut placements = Vec::with_capacity(4);
    for (record, dest) in sources.into_iter().zip(quadrants) {
        if record.width == 0 || record.height == 0 {
            return Err(Error::domain(format!("image {} has zero size", record.id)));
        }
        let (w, h) = (f64::from(record.width), f64::from(record.height));
        let scale = (f64::from(dest.w) / w).max(f64::from(dest.h) / h);
        let rw = ((w * scale).round() as u32).max(dest.w);
        let rh = ((h * scale).round() as u32).max(dest.h);
        let ox = rng.below(u64::from(rw - dest.w) + 1) as u32;
        let oy = rng.below(u64::from(rh - dest.h) + 1) as u32;
        placements.push(Placement {
            source: record.id,
            source_size: (record.width, record.height),
            resized: (rw, rh),
            crop: Rect::new(ox, oy, dest.w, dest.h),
            dest,
        });
    }
    Ok(MosaicLayout {
        base_size,
        canvas_size: canvas,
        center,
        placements: placements.try_into().expect("four placements"),
    })
}

/// How a sample was made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Mosaic {
        layout: Box<MosaicLayout>,
    },
    Mixup {
        lambda: f64,
        first: Box<Provenance>,
        second: Box<Provenance>,
    },
}

impl Provenance {
    /// Source image ids in placement order.
    pub fn sources(&self) -> Vec<ImageId> {
        match self {
            Provenance::Mosaic { layout } => layout.placements.iter().map(|p| p.source).collect(),
            Provenance::Mixup { first, second, .. } => {
                let mut ids = first.sources();
                ids.extend(second.sources());
                ids
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSample {
    pub pixels: RgbImage,
    /// Boxes in canvas pixels.
    pub labels: Vec<Label>,
    pub provenance: Provenance,
}

impl AugmentedSample {
    /// True when every box lies in the buffer and clears the policy's side minimum.
    pub fn labels_sound(&self, policy: &ClipPolicy) -> bool {
        let (w, h) = (f64::from(self.pixels.width()), f64::from(self.pixels.height()));
        self.labels.iter().all(|l| {
            l.bbox.within(w, h, 0.0) && l.bbox.w >= policy.min_side && l.bbox.h >= policy.min_side
        })
    }
}

/// Composes four sources according to `layout`.
pub fn apply_mosaic(
    sources: [(&RgbImage, &[Label]); 4],
    layout: &MosaicLayout,
    policy: &ClipPolicy,
) -> Result<AugmentedSample> {
    let canvas = layout.canvas_size;
    let mut pixels = RgbImage::new(canvas, canvas);
    let mut labels = Vec::new();
    for ((image, source_labels), placement) in sources.into_iter().zip(&layout.placements) {
        if image.dimensions() != placement.source_size {
            return Err(Error::domain(format!(
                "image {} is {:?} but the layout expects {:?}",
                placement.source,
                image.dimensions(),
                placement.source_size
            )));
        }
        let dest = placement.dest;
        for y in dest.y..dest.bottom() {
            for x in dest.x..dest.right() {
                let (sx, sy) = placement.source_pixel(x, y);
                pixels.put_pixel(x, y, *image.get_pixel(sx, sy));
            }
        }
        let (scale_x, scale_y) = placement.scale();
        let scaled: Vec<Label> = source_labels
            .iter()
            .map(|l| Label {
                category_id: l.category_id,
                bbox: l.bbox.scale(scale_x, scale_y),
            })
            .collect();
        let offset = (
            f64::from(dest.x) - f64::from(placement.crop.x),
            f64::from(dest.y) - f64::from(placement.crop.y),
        );
        labels.extend(adjust_labels(&scaled, &placement.crop.to_bbox(), offset, policy));
    }
    Ok(AugmentedSample {
        pixels,
        labels,
        provenance: Provenance::Mosaic {
            layout: Box::new(layout.clone()),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixupSpec {
    /// Shape of the symmetric Beta distribution.
    pub alpha: f64,
    /// Chance of applying mixup to a sample.
    pub probability: f64,
}

impl Default for MixupSpec {
    fn default() -> Self {
        MixupSpec {
            alpha: 32.0,
            probability: 0.3,
        }
    }
}

/// Draws `lambda ~ Beta(alpha, alpha)`.
pub fn sample_lambda(spec: &MixupSpec, rng: &mut Stream) -> Result<f64> {
    if !(spec.alpha > 0.0 && spec.alpha.is_finite()) {
        return Err(Error::domain(format!("mixup alpha must be positive, got {}", spec.alpha)));
    }
    Ok(rng.beta(spec.alpha, spec.alpha))
}

pub fn mixup(a: AugmentedSample, b: AugmentedSample, lambda: f64) -> Result<AugmentedSample> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::domain(format!("mixup lambda {lambda} outside [0, 1]")));
    }
    if a.pixels.dimensions() != b.pixels.dimensions() {
        return Err(Error::domain(format!(
            "cannot blend {:?} with {:?}",
            a.pixels.dimensions(),
            b.pixels.dimensions()
        )));
    }
    let (w, h) = a.pixels.dimensions();
    let raw: Vec<u8> = a
        .pixels
        .as_raw()
        .iter()
        .zip(b.pixels.as_raw())
        .map(|(&x, &y)| {
            let v = lambda * f64::from(x) + (1.0 - lambda) * f64::from(y);
            v.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    let pixels = RgbImage::from_raw(w, h, raw).expect("buffer size matches");
    let mut labels = a.labels;
    labels.extend(b.labels);
    Ok(AugmentedSample {
        pixels,
        labels,
        provenance: Provenance::Mixup {
            lambda,
            first: Box::new(a.provenance),
            second: Box::new(b.provenance),
        },
    })
}

/// Slots biased toward rare classes: each slot uses the class-aware rule
/// over `rare` with `probability`, otherwise a uniform image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasSpec {
    pub rare: BTreeSet<CategoryId>,
    pub probability: f64,
}

impl BiasSpec {
    /// The `count` categories in the fewest images, ties to the smaller id.
    pub fn rarest(index: &DatasetIndex, count: usize, probability: f64) -> Self {
        let mut ranked: Vec<(usize, CategoryId)> = index.image_counts().into_iter().map(|(c, n)| (n, c)).collect();
        ranked.sort();
        BiasSpec {
            rare: ranked.into_iter().take(count).map(|(_, c)| c).collect(),
            probability,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceMode {
    #[default]
    Uniform,
    UnderrepBiased,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    #[default]
    Uniform,
    /// First mosaic from the whole dataset, second from the biased picker.
    RareSecond,
}

/// Picks four source images for one mosaic.
pub fn pick_mosaic_sources(
    index: &DatasetIndex,
    mode: SourceMode,
    bias: &BiasSpec,
    rng: &mut Stream,
) -> Result<[ImageId; 4]> {
    if index.is_empty() {
        return Err(Error::domain("cannot pick sources from an empty dataset"));
    }
    let ids = index.image_ids();
    match mode {
        SourceMode::Uniform => Ok(std::array::from_fn(|_| ids[rng.index(ids.len())])),
        SourceMode::UnderrepBiased => {
            if bias.rare.is_empty() {
                return Err(Error::domain("biased source picking needs a nonempty rare-class set"));
            }
            if !(0.0..=1.0).contains(&bias.probability) {
                return Err(Error::domain(format!("bias probability {} outside [0, 1]", bias.probability)));
            }
            let sampler = ClassAwareSampler::new(index, bias.rare.iter().copied())?;
            Ok(std::array::from_fn(|_| {
                if rng.bernoulli(bias.probability) {
                    sampler.draw(rng)
                } else {
                    ids[rng.index(ids.len())]
                }
            }))
        }
    }
}

/// Source quadruples for the two mosaics blended by mixup.
pub fn pick_mixup_pair(
    index: &DatasetIndex,
    mode: PairMode,
    bias: &BiasSpec,
    rng: &mut Stream,
) -> Result<([ImageId; 4], [ImageId; 4])> {
    let first = pick_mosaic_sources(index, SourceMode::Uniform, bias, rng)?;
    let second_mode = match mode {
        PairMode::Uniform => SourceMode::Uniform,
        PairMode::RareSecond => SourceMode::UnderrepBiased,
    };
    let second = pick_mosaic_sources(index, second_mode, bias, rng)?;
    Ok((first, second))
}

/// Pixel data for dataset images.
pub trait ImageSource: Sync {
    fn load(&self, record: &ImageRecord) -> Result<RgbImage>;
}

/// Reads `root/<file_name>` from disk.
#[derive(Debug, Clone)]
pub struct DirectorySource {
    root: PathBuf,
}

impl DirectorySource {
    pub fn new(root: impl AsRef<Path>) -> Self {
        DirectorySource {
            root: root.as_ref().to_path_buf(),
        }
    }
}

impl ImageSource for DirectorySource {
    fn load(&self, record: &ImageRecord) -> Result<RgbImage> {
        let path = self.root.join(&record.file_name);
        let image = image::open(&path).map_err(|source| Error::Image { path, source })?;
        Ok(image.into_rgb8())
    }
}

/// Images held in memory, keyed by id.
#[derive(Debug, Clone, Default)]
pub struct MemorySource {
    pub images: HashMap<ImageId, RgbImage>,
}

impl ImageSource for MemorySource {
    fn load(&self, record: &ImageRecord) -> Result<RgbImage> {
        self.images
            .get(&record.id)
            .cloned()
            .ok_or_else(|| Error::domain(format!("no pixels for image {}", record.id)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub base_size: u32,
    /// `None` produces plain mosaics.
    pub mixup: Option<MixupSpec>,
    /// `None` picks every source uniformly.
    pub bias: Option<BiasSpec>,
    pub clip: ClipPolicy,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            base_size: 640,
            mixup: None,
            bias: None,
            clip: ClipPolicy::default(),
        }
    }
}

fn build_mosaic(
    index: &DatasetIndex,
    images: &dyn ImageSource,
    ids: [ImageId; 4],
    config: &AugmentConfig,
    rng: &mut Stream,
) -> Result<AugmentedSample> {
    let mut records = Vec::with_capacity(4);
    for id in ids {
        records.push(
            index
                .image(id)
                .ok_or_else(|| Error::domain(format!("image {id} is not in the dataset")))?,
        );
    }
    let records: [&ImageRecord; 4] = records.try_into().expect("four records");
    let layout = plan_mosaic(records, config.base_size, rng)?;
    let pixels = records.map(|r| images.load(r));
    let pixels: Vec<RgbImage> = pixels.into_iter().collect::<Result<_>>()?;
    let labels = ids.map(|id| index.labels(id));
    let sources: [(&RgbImage, &[Label]); 4] = std::array::from_fn(|i| (&pixels[i], labels[i].as_slice()));
    apply_mosaic(sources, &layout, &config.clip)
}

/// Produces sample number `sample` of the stream defined by `(seed, config)`.
/// Each sample draws from its own substream, so samples can be generated in
/// any order or in parallel.
pub fn augment_sample(
    index: &DatasetIndex,
    images: &dyn ImageSource,
    config: &AugmentConfig,
    seed: u64,
    sample: u64,
) -> Result<AugmentedSample> {
    let mut rng = Stream::new(seed, Purpose::Augment, 0, sample);
    let empty = BiasSpec {
        rare: BTreeSet::new(),
        probability: 0.0,
    };
    let bias = config.bias.as_ref().unwrap_or(&empty);
    let biased = config.bias.is_some();
    if let Some(mix) = &config.mixup {
        if rng.bernoulli(mix.probability) {
            let mode = if biased { PairMode::RareSecond } else { PairMode::Uniform };
            let (first, second) = pick_mixup_pair(index, mode, bias, &mut rng)?;
            let a = build_mosaic(index, images, first, config, &mut rng)?;
            let b = build_mosaic(index, images, second, config, &mut rng)?;
            let lambda = sample_lambda(mix, &mut rng)?;
            return mixup(a, b, lambda);
        }
    }
    let mode = if biased {
        SourceMode::UnderrepBiased
    } else {
        SourceMode::Uniform
    };
    let ids = pick_mosaic_sources(index, mode, bias, &mut rng)?;
    build_mosaic(index, images, ids, config, &mut rng)
}

/// Zero-based YOLO class index: position in ascending category-id order.
pub fn yolo_class_map(index: &DatasetIndex) -> BTreeMap<CategoryId, usize> {
    index.categories().keys().enumerate().map(|(i, &c)| (c, i)).collect()
}

/// One `class cx cy w h` line per box, coordinates normalized with six decimals.
pub fn yolo_label_text(sample: &AugmentedSample, classes: &BTreeMap<CategoryId, usize>) -> Result<String> {
    let (w, h) = (f64::from(sample.pixels.width()), f64::from(sample.pixels.height()));
    let mut out = String::new();
    for label in &sample.labels {
        let class = classes
            .get(&label.category_id)
            .ok_or_else(|| Error::domain(format!("category {} has no class index", label.category_id)))?;
        let [cx, cy, bw, bh] = label.bbox.to_yolo(w, h);
        out.push_str(&format!("{class} {cx:.6} {cy:.6} {bw:.6} {bh:.6}\n"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn label(c: u64, x: f64, y: f64, w: f64, h: f64) -> Label {
        Label {
            category_id: CategoryId(c),
            bbox: BBox::new(x, y, w, h),
        }
    }

    #[test]
    fn adjust_identity() {
        let l = [label(1, 5.0, 5.0, 10.0, 10.0)];
        let out = adjust_labels(&l, &BBox::new(0.0, 0.0, 100.0, 100.0), (0.0, 0.0), &ClipPolicy::default());
        assert_eq!(out, l);
    }

    #[test]
    fn adjust_drops_outside() {
        let l = [label(1, 200.0, 5.0, 10.0, 10.0)];
        let out = adjust_labels(&l, &BBox::new(0.0, 0.0, 100.0, 100.0), (0.0, 0.0), &ClipPolicy::default());
        assert!(out.is_empty());
    }

    #[test]
    fn adjust_partial_clip_hand_computed() {
        let l = [label(1, 10.0, 10.0, 40.0, 40.0)];
        let out = adjust_labels(&l, &BBox::new(30.0, 0.0, 100.0, 100.0), (0.0, 0.0), &ClipPolicy::default());
        assert_eq!(out, vec![label(1, 30.0, 10.0, 20.0, 40.0)]);
    }

    #[test]
    fn adjust_policy_thresholds() {
        let policy = ClipPolicy::default();
        let crop = BBox::new(0.0, 0.0, 50.0, 50.0);
        // 1.5px sliver survives the area test only
        let sliver = [label(1, 48.5, 0.0, 4.0, 10.0)];
        assert!(adjust_labels(&sliver, &crop, (0.0, 0.0), &policy).is_empty());
        // keeps 20% of its area
        let small = [label(1, 40.0, 0.0, 50.0, 10.0)];
        assert!(adjust_labels(&small, &crop, (0.0, 0.0), &policy).is_empty());
        // exactly 25%
        let quarter = [label(1, 40.0, 0.0, 40.0, 10.0)];
        assert_eq!(adjust_labels(&quarter, &crop, (1.0, 2.0), &policy), vec![label(1, 41.0, 2.0, 10.0, 10.0)]);
    }

    fn record(id: u64, w: u32, h: u32) -> ImageRecord {
        ImageRecord::new(ImageId(id), format!("{id}.png"), w, h)
    }

    #[test]
    fn symmetric_center_is_pure_translation() {
        let s = 16;
        let recs: Vec<_> = (1..=4).map(|i| record(i, s, s)).collect();
        let mut rng = Stream::new(0, Purpose::Augment, 0, 0);
        let layout = plan_mosaic_at([&recs[0], &recs[1], &recs[2], &recs[3]], s, (s, s), &mut rng).unwrap();
        for p in &layout.placements {
            assert_eq!(p.resized, (s, s));
            assert_eq!(p.crop, Rect::new(0, 0, s, s));
        }
        assert_eq!(layout.placements[3].dest, Rect::new(s, s, s, s));
    }

    #[test]
    fn off_center_quadrant_sizes() {
        let s = 16;
        let recs: Vec<_> = (1..=4).map(|i| record(i, 30, 20)).collect();
        let mut rng = Stream::new(0, Purpose::Augment, 0, 0);
        let layout = plan_mosaic_at([&recs[0], &recs[1], &recs[2], &recs[3]], s, (s / 2, s / 2), &mut rng).unwrap();
        assert_eq!(layout.placements[0].dest, Rect::new(0, 0, 8, 8));
        assert_eq!(layout.placements[3].dest, Rect::new(8, 8, 24, 24));
        for p in &layout.placements {
            assert!(p.crop.right() <= p.resized.0 && p.crop.bottom() <= p.resized.1);
        }
    }

    #[test]
    fn zero_base_rejected() {
        let r = record(1, 4, 4);
        let mut rng = Stream::new(0, Purpose::Augment, 0, 0);
        assert!(plan_mosaic([&r, &r, &r, &r], 0, &mut rng).is_err());
    }

    #[test]
    fn constant_quadrants() {
        let s = 12;
        let colors = [[255, 0, 0], [0, 255, 0], [0, 0, 255], [9, 9, 9]];
        let recs: Vec<_> = (1..=4).map(|i| record(i, 20, 10)).collect();
        let imgs: Vec<RgbImage> = colors.iter().map(|&c| RgbImage::from_pixel(20, 10, Rgb(c))).collect();
        let mut rng = Stream::new(3, Purpose::Augment, 0, 0);
        let layout = plan_mosaic([&recs[0], &recs[1], &recs[2], &recs[3]], s, &mut rng).unwrap();
        let no_labels: &[Label] = &[];
        let sample = apply_mosaic(
            std::array::from_fn(|i| (&imgs[i], no_labels)),
            &layout,
            &ClipPolicy::default(),
        )
        .unwrap();
        let (cx, cy) = layout.center;
        for (x, y, px) in sample.pixels.enumerate_pixels() {
            let q = usize::from(x >= cx) + 2 * usize::from(y >= cy);
            assert_eq!(px.0, colors[q], "pixel ({x}, {y})");
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let recs: Vec<_> = (1..=4).map(|i| record(i, 20, 10)).collect();
        let img = RgbImage::new(10, 10);
        let mut rng = Stream::new(3, Purpose::Augment, 0, 0);
        let layout = plan_mosaic([&recs[0], &recs[1], &recs[2], &recs[3]], 8, &mut rng).unwrap();
        let none: &[Label] = &[];
        assert!(apply_mosaic([(&img, none); 4], &layout, &ClipPolicy::default()).is_err());
    }

    fn flat(v: u8, labels: Vec<Label>) -> AugmentedSample {
        AugmentedSample {
            pixels: RgbImage::from_pixel(4, 4, Rgb([v, v, v])),
            labels,
            provenance: Provenance::Mixup {
                lambda: 0.0,
                first: Box::new(Provenance::Mosaic {
                    layout: Box::new(MosaicLayout {
                        base_size: 2,
                        canvas_size: 4,
                        center: (2, 2),
                        placements: [Placement {
                            source: ImageId(1),
                            source_size: (1, 1),
                            resized: (2, 2),
                            crop: Rect::new(0, 0, 2, 2),
                            dest: Rect::new(0, 0, 2, 2),
                        }; 4],
                    }),
                }),
                second: Box::new(Provenance::Mosaic {
                    layout: Box::new(MosaicLayout {
                        base_size: 2,
                        canvas_size: 4,
                        center: (2, 2),
                        placements: [Placement {
                            source: ImageId(2),
                            source_size: (1, 1),
                            resized: (2, 2),
                            crop: Rect::new(0, 0, 2, 2),
                            dest: Rect::new(0, 0, 2, 2),
                        }; 4],
                    }),
                }),
            },
        }
    }

    #[test]
    fn mixup_endpoints_and_midpoint() {
        let a = flat(100, vec![label(1, 0.0, 0.0, 2.0, 2.0)]);
        let b = flat(50, vec![label(2, 1.0, 1.0, 2.0, 2.0), label(3, 0.0, 0.0, 3.0, 3.0)]);
        let one = mixup(a.clone(), b.clone(), 1.0).unwrap();
        assert_eq!(one.pixels, a.pixels);
        assert_eq!(one.labels.len(), 3);
        assert_eq!(one.labels[0], a.labels[0]);
        assert_eq!(&one.labels[1..], &b.labels[..]);
        assert_eq!(mixup(a.clone(), b.clone(), 0.0).unwrap().pixels, b.pixels);
        let half = mixup(a, b, 0.5).unwrap();
        assert!(half.pixels.as_raw().iter().all(|&v| v == 75));
    }

    #[test]
    fn mixup_rejects_bad_inputs() {
        let a = flat(1, vec![]);
        let mut b = flat(2, vec![]);
        assert!(mixup(a.clone(), b.clone(), 1.5).is_err());
        b.pixels = RgbImage::new(3, 4);
        assert!(mixup(a, b, 0.5).is_err());
    }

    #[test]
    fn lambda_domain() {
        let mut rng = Stream::new(0, Purpose::Augment, 0, 0);
        let bad = MixupSpec {
            alpha: 0.0,
            probability: 0.3,
        };
        assert!(sample_lambda(&bad, &mut rng).is_err());
        let spec = MixupSpec::default();
        for _ in 0..1000 {
            let l = sample_lambda(&spec, &mut rng).unwrap();
            assert!((0.0..=1.0).contains(&l));
        }
    }

    #[test]
    fn yolo_lines() {
        let mut s = flat(0, vec![label(7, 0.0, 0.0, 2.0, 1.0)]);
        s.pixels = RgbImage::new(4, 4);
        let text = yolo_label_text(&s, &[(CategoryId(7), 0)].into()).unwrap();
        assert_eq!(text, "0 0.250000 0.125000 0.500000 0.250000\n");
    }
}
