//! Procedural COCO-style datasets for tests and demos.
//!
//! Images are small RGB canvases with a gradient background and one filled
//! rectangle per object. Class frequencies are skewed, classes co-occur, a few
//! images carry more than ten objects, a few boxes poke out of their image and
//! about one box in fifty is a crowd region, so every step of the curation
//! recipe has something to do.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};
use serde_json::{json, Value};

use crate::coco::ImageId;
use crate::error::{Error, Result};
use crate::rng::{Purpose, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureConfig {
    pub images: usize,
    pub classes: usize,
    pub min_side: u32,
    pub max_side: u32,
    pub seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            images: 500,
            classes: 14,
            min_side: 48,
            max_side: 96,
            seed: 0,
        }
    }
}

/// A generated dataset: the annotation document and one image per entry.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub document: Value,
    /// `(id, file name, pixels)`, ascending by id.
    pub images: Vec<(ImageId, String, RgbImage)>,
}

impl Fixture {
    pub fn document_bytes(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec(&self.document).expect("fixture serialization cannot fail");
        bytes.push(b'\n');
        bytes
    }

    /// Pixels keyed by image id.
    pub fn memory_source(&self) -> crate::augment::MemorySource {
        crate::augment::MemorySource {
            images: self.images.iter().map(|(id, _, px)| (*id, px.clone())).collect(),
        }
    }

    /// Writes `annotations.json` and `images/<file>` under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let image_dir = dir.join("images");
        fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;
        let ann = dir.join("annotations.json");
        fs::write(&ann, self.document_bytes()).map_err(|e| Error::io(&ann, e))?;
        for (_, name, pixels) in &self.images {
            let path = image_dir.join(name);
            pixels
                .save_with_format(&path, image::ImageFormat::Png)
                .map_err(|source| Error::Image { path, source })?;
        }
        Ok(())
    }
}

fn palette(class: usize) -> [u8; 3] {
    let hue = (class as f64 * 0.618_033_988_75).fract();
    let sector = (hue * 6.0).floor() as u32;
    let t = ((hue * 6.0).fract() * 200.0) as u8;
    match sector {
        0 => [230, 30 + t, 30],
        1 => [230 - t, 230, 30],
        2 => [30, 230, 30 + t],
        3 => [30, 230 - t, 230],
        4 => [30 + t, 30, 230],
        _ => [230, 30, 230 - t],
    }
}

/// Generates a dataset; identical configs give identical output.
pub fn generate(config: &FixtureConfig) -> Fixture {
    assert!(config.classes >= 1 && config.min_side >= 8 && config.max_side >= config.min_side);
    let k = config.classes;
    // class weights ~ 1/n^0.8 so the tail is thin but present
    let weights: Vec<f64> = (1..=k).map(|n| (n as f64).powf(-0.8)).collect();
    let total: f64 = weights.iter().sum();
    let cumulative: Vec<f64> = weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w / total;
            Some(*acc)
        })
        .collect();
    let pick_class = |rng: &mut Stream| {
        let u = rng.unit();
        cumulative.iter().position(|&c| u < c).unwrap_or(k - 1)
    };

    let mut images_json = Vec::new();
    let mut annotations_json = Vec::new();
    let mut images = Vec::new();
    let mut next_annotation = 1u64;
    for i in 0..config.images {
        let mut rng = Stream::new(config.seed, Purpose::Fixture, 0, i as u64);
        let id = ImageId(i as u64 + 1);
        let span = u64::from(config.max_side - config.min_side) + 1;
        let width = config.min_side + rng.below(span) as u32;
        let height = config.min_side + rng.below(span) as u32;
        let file_name = format!("{:06}.png", id.0);

        let objects = if rng.bernoulli(0.06) {
            11 + rng.below(4) as usize
        } else {
            1 + rng.below(5) as usize
        };
        // a scene class plus companions makes classes co-occur
        let scene = pick_class(&mut rng);
        let shade = rng.below(60) as u8;
        let mut pixels = RgbImage::from_fn(width, height, |x, y| {
            let g = shade + ((x + y) * 80 / (width + height)) as u8;
            Rgb([g, g, g.saturating_add(20)])
        });
        for o in 0..objects {
            let class = if o == 0 || rng.bernoulli(0.5) { scene } else { pick_class(&mut rng) };
            let bw = (f64::from(width) * (0.15 + 0.35 * rng.unit())).max(3.0);
            let bh = (f64::from(height) * (0.15 + 0.35 * rng.unit())).max(3.0);
            let mut x = rng.unit() * (f64::from(width) - bw);
            let y = rng.unit() * (f64::from(height) - bh);
            if rng.bernoulli(0.03) {
                // spill over the right edge; ingestion clamps it
                x = f64::from(width) - bw * 0.5;
            }
            let bbox = [
                (x * 100.0).round() / 100.0,
                (y * 100.0).round() / 100.0,
                (bw * 100.0).round() / 100.0,
                (bh * 100.0).round() / 100.0,
            ];
            let color = palette(class);
            let (x0, y0) = (bbox[0].max(0.0) as u32, bbox[1].max(0.0) as u32);
            let x1 = ((bbox[0] + bbox[2]) as u32).min(width);
            let y1 = ((bbox[1] + bbox[3]) as u32).min(height);
            for py in y0..y1 {
                for px in x0..x1 {
                    let stripe = if (px + py + o as u32).is_multiple_of(7) { 40 } else { 0 };
                    pixels.put_pixel(px, py, Rgb(color.map(|c| c.saturating_sub(stripe))));
                }
            }
            annotations_json.push(json!({
                "id": next_annotation,
                "image_id": id.0,
                "category_id": class as u64 + 1,
                "bbox": bbox,
                "area": bbox[2] * bbox[3],
                "iscrowd": u8::from(rng.bernoulli(0.02)),
            }));
            next_annotation += 1;
        }
        images_json.push(json!({
            "id": id.0,
            "file_name": file_name,
            "width": width,
            "height": height,
        }));
        images.push((id, file_name, pixels));
    }
    let categories: Vec<Value> = (1..=k)
        .map(|c| json!({"id": c as u64, "name": format!("class_{c:02}"), "supercategory": "synthetic"}))
        .collect();
    let document = json!({
        "info": {"description": "synthetic long-tail fixture"},
        "images": images_json,
        "annotations": annotations_json,
        "categories": categories,
    });
    Fixture { document, images }
}

/// Image count per category id in a generated document, counting only
/// non-crowd annotations. Kept independent of the parser for tests.
pub fn raw_image_counts(document: &Value) -> BTreeMap<u64, usize> {
    let mut sets: BTreeMap<u64, std::collections::BTreeSet<u64>> = BTreeMap::new();
    for a in document["annotations"].as_array().into_iter().flatten() {
        if a["iscrowd"].as_u64() == Some(0) {
            sets.entry(a["category_id"].as_u64().unwrap_or(0))
                .or_default()
                .insert(a["image_id"].as_u64().unwrap_or(0));
        }
    }
    sets.into_iter().map(|(c, s)| (c, s.len())).collect()
}
