//! COCO annotation ingestion and the shared dataset model.
//!
//! [`parse_coco`] reads `images`, `annotations` and `categories` from a COCO
//! JSON document into a [`DatasetIndex`]. Boxes that stick out of their image
//! are clamped to the image rectangle (and dropped when nothing is left);
//! crowd annotations are kept but never counted as class instances.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::geometry::BBox;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt(f)
            }
        }

        impl From<u64> for $name {
            fn from(v: u64) -> Self {
                $name(v)
            }
        }
    };
}

id_type!(ImageId);
id_type!(AnnotationId);
id_type!(CategoryId);

/// Boxes within this many pixels of the image border count as in-bounds.
pub const BOUNDS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub id: AnnotationId,
    pub image_id: ImageId,
    pub category_id: CategoryId,
    pub bbox: BBox,
    pub iscrowd: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: ImageId,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
    /// Ascending ids of every annotation on this image, crowd regions included.
    pub annotation_ids: Vec<AnnotationId>,
}

impl ImageRecord {
    pub fn new(id: ImageId, file_name: impl Into<String>, width: u32, height: u32) -> Self {
        ImageRecord {
            id,
            file_name: file_name.into(),
            width,
            height,
            annotation_ids: Vec::new(),
        }
    }
}

/// A category id paired with a box, the unit moved around by augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub category_id: CategoryId,
    pub bbox: BBox,
}

/// Counts reported while ingesting a document.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    /// Boxes that were shrunk to fit their image.
    pub clamped: usize,
    /// Boxes with no area left after clamping.
    pub dropped: usize,
}

/// Validated, immutable model of a COCO-style dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetIndex {
    images: BTreeMap<ImageId, ImageRecord>,
    annotations: BTreeMap<AnnotationId, Annotation>,
    categories: BTreeMap<CategoryId, String>,
    images_by_category: BTreeMap<CategoryId, Vec<ImageId>>,
}

impl DatasetIndex {
    /// Checks uniqueness, referential integrity and box bounds, then derives
    /// the per-image annotation lists and per-category image lists. Any
    /// `annotation_ids` already present on the records are replaced.
    pub fn build(
        images: Vec<ImageRecord>,
        annotations: Vec<Annotation>,
        categories: BTreeMap<CategoryId, String>,
    ) -> Result<Self> {
        let mut image_map = BTreeMap::new();
        for image in images {
            if image.width == 0 || image.height == 0 {
                return Err(Error::Integrity(format!("image {} has zero size", image.id)));
            }
            if let Some(dup) = image_map.insert(image.id, image) {
                return Err(Error::Integrity(format!("duplicate image id {}", dup.id)));
            }
        }
        let mut annotation_map = BTreeMap::new();
        for ann in annotations {
            let Some(image) = image_map.get(&ann.image_id) else {
                return Err(Error::Integrity(format!(
                    "annotation {} references missing image {}",
                    ann.id, ann.image_id
                )));
            };
            if !categories.contains_key(&ann.category_id) {
                return Err(Error::Integrity(format!(
                    "annotation {} references missing category {}",
                    ann.id, ann.category_id
                )));
            }
            let b = ann.bbox;
            if !b.is_finite()
                || b.w <= 0.0
                || b.h <= 0.0
                || !b.within(f64::from(image.width), f64::from(image.height), BOUNDS_TOLERANCE)
            {
                return Err(Error::Integrity(format!(
                    "annotation {} has an invalid box {:?} for a {}x{} image",
                    ann.id, b, image.width, image.height
                )));
            }
            if let Some(dup) = annotation_map.insert(ann.id, ann) {
                return Err(Error::Integrity(format!("duplicate annotation id {}", dup.id)));
            }
        }
        Ok(Self::assemble(image_map, annotation_map, categories))
    }

    /// Derives the secondary lists without checking anything. Callers pass
    /// subsets of an already valid index.
    pub(crate) fn assemble(
        mut images: BTreeMap<ImageId, ImageRecord>,
        annotations: BTreeMap<AnnotationId, Annotation>,
        categories: BTreeMap<CategoryId, String>,
    ) -> Self {
        for image in images.values_mut() {
            image.annotation_ids.clear();
        }
        let mut by_category: BTreeMap<CategoryId, BTreeSet<ImageId>> =
            categories.keys().map(|&c| (c, BTreeSet::new())).collect();
        for ann in annotations.values() {
            if let Some(image) = images.get_mut(&ann.image_id) {
                image.annotation_ids.push(ann.id);
            }
            if !ann.iscrowd {
                if let Some(set) = by_category.get_mut(&ann.category_id) {
                    set.insert(ann.image_id);
                }
            }
        }
        let images_by_category = by_category
            .into_iter()
            .map(|(c, set)| (c, set.into_iter().collect()))
            .collect();
        DatasetIndex {
            images,
            annotations,
            categories,
            images_by_category,
        }
    }

    /// Assembles an index from arbitrary parts with no checks or derivation.
    /// Intended for tooling that wants to run [`validate`] on hand-made data.
    pub fn from_raw_parts(
        images: BTreeMap<ImageId, ImageRecord>,
        annotations: BTreeMap<AnnotationId, Annotation>,
        categories: BTreeMap<CategoryId, String>,
        images_by_category: BTreeMap<CategoryId, Vec<ImageId>>,
    ) -> Self {
        DatasetIndex {
            images,
            annotations,
            categories,
            images_by_category,
        }
    }

    #[allow(clippy::type_complexity)]
    pub fn into_raw_parts(
        self,
    ) -> (
        BTreeMap<ImageId, ImageRecord>,
        BTreeMap<AnnotationId, Annotation>,
        BTreeMap<CategoryId, String>,
        BTreeMap<CategoryId, Vec<ImageId>>,
    ) {
        (self.images, self.annotations, self.categories, self.images_by_category)
    }

    /// Keeps the images, annotations and categories accepted by the
    /// predicates. Annotations whose image or category is dropped go too.
    pub(crate) fn subset(
        &self,
        mut keep_image: impl FnMut(&ImageRecord) -> bool,
        mut keep_annotation: impl FnMut(&Annotation) -> bool,
        mut keep_category: impl FnMut(CategoryId) -> bool,
    ) -> DatasetIndex {
        let categories: BTreeMap<_, _> = self
            .categories
            .iter()
            .filter(|(&c, _)| keep_category(c))
            .map(|(&c, n)| (c, n.clone()))
            .collect();
        let images: BTreeMap<_, _> = self
            .images
            .values()
            .filter(|img| keep_image(img))
            .map(|img| (img.id, img.clone()))
            .collect();
        let annotations = self
            .annotations
            .values()
            .filter(|a| {
                images.contains_key(&a.image_id) && categories.contains_key(&a.category_id) && keep_annotation(a)
            })
            .map(|a| (a.id, a.clone()))
            .collect();
        Self::assemble(images, annotations, categories)
    }

    pub fn images(&self) -> &BTreeMap<ImageId, ImageRecord> {
        &self.images
    }

    pub fn annotations(&self) -> &BTreeMap<AnnotationId, Annotation> {
        &self.annotations
    }

    pub fn categories(&self) -> &BTreeMap<CategoryId, String> {
        &self.categories
    }

    /// Sorted ids of the images holding at least one non-crowd instance of each category.
    pub fn images_by_category(&self) -> &BTreeMap<CategoryId, Vec<ImageId>> {
        &self.images_by_category
    }

    pub fn image(&self, id: ImageId) -> Option<&ImageRecord> {
        self.images.get(&id)
    }

    pub fn category_name(&self, id: CategoryId) -> Option<&str> {
        self.categories.get(&id).map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image_ids(&self) -> Vec<ImageId> {
        self.images.keys().copied().collect()
    }

    /// All annotations of an image, crowd regions included, in id order.
    pub fn image_annotations(&self, id: ImageId) -> impl Iterator<Item = &Annotation> {
        self.images
            .get(&id)
            .into_iter()
            .flat_map(|img| img.annotation_ids.iter())
            .filter_map(|a| self.annotations.get(a))
    }

    /// Distinct categories with a countable (non-crowd) instance in the image.
    pub fn image_categories(&self, id: ImageId) -> BTreeSet<CategoryId> {
        self.image_annotations(id)
            .filter(|a| !a.iscrowd)
            .map(|a| a.category_id)
            .collect()
    }

    /// Non-crowd boxes of an image, in annotation id order.
    pub fn labels(&self, id: ImageId) -> Vec<Label> {
        self.image_annotations(id)
            .filter(|a| !a.iscrowd)
            .map(|a| Label {
                category_id: a.category_id,
                bbox: a.bbox,
            })
            .collect()
    }

    /// Images per category (non-crowd), zero for unused categories.
    pub fn image_counts(&self) -> BTreeMap<CategoryId, usize> {
        self.images_by_category.iter().map(|(&c, v)| (c, v.len())).collect()
    }

    /// Non-crowd instances per category, zero for unused categories.
    pub fn instance_counts(&self) -> BTreeMap<CategoryId, usize> {
        let mut counts: BTreeMap<CategoryId, usize> = self.categories.keys().map(|&c| (c, 0)).collect();
        for ann in self.annotations.values().filter(|a| !a.iscrowd) {
            if let Some(n) = counts.get_mut(&ann.category_id) {
                *n += 1;
            }
        }
        counts
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct RawDocument {
    images: Option<Vec<RawImage>>,
    annotations: Option<Vec<RawAnnotation>>,
    categories: Option<Vec<RawCategory>>,
}

#[derive(Deserialize)]
struct RawImage {
    id: Option<u64>,
    file_name: Option<String>,
    width: Option<u32>,
    height: Option<u32>,
}

#[derive(Deserialize)]
struct RawAnnotation {
    id: Option<u64>,
    image_id: Option<u64>,
    category_id: Option<u64>,
    bbox: Option<Vec<f64>>,
    #[serde(default)]
    iscrowd: Option<CrowdFlag>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CrowdFlag {
    Int(u64),
    Bool(bool),
}

#[derive(Deserialize)]
struct RawCategory {
    id: Option<u64>,
    name: Option<String>,
}

fn required<T>(value: Option<T>, field: impl FnOnce() -> String) -> Result<T> {
    value.ok_or_else(|| Error::schema(field(), "missing required field"))
}

fn byte_offset(input: &[u8], line: usize, column: usize) -> usize {
    let mut offset = 0;
    for _ in 1..line {
        match input[offset..].iter().position(|&b| b == b'\n') {
            Some(p) => offset += p + 1,
            None => return input.len(),
        }
    }
    (offset + column.saturating_sub(1)).min(input.len())
}

fn convert_json_error(input: &[u8], err: serde_json::Error) -> Error {
    let offset = byte_offset(input, err.line(), err.column());
    match err.classify() {
        serde_json::error::Category::Data => Error::Schema {
            field: format!("byte {offset}"),
            message: err.to_string(),
        },
        _ => Error::Parse {
            offset,
            message: err.to_string(),
        },
    }
}

/// Clamps the span `[start, start + len]` to `[0, limit]`, leaving in-range
/// coordinates bit-for-bit untouched.
fn clamp_span(start: f64, len: f64, limit: f64) -> (f64, f64) {
    let lo_ok = start >= -BOUNDS_TOLERANCE;
    let hi_ok = start + len <= limit + BOUNDS_TOLERANCE;
    match (lo_ok, hi_ok) {
        (true, true) => (start, len),
        (false, true) => (0.0, start + len),
        (true, false) => (start, limit - start),
        (false, false) => (0.0, limit),
    }
}

/// Parses a COCO annotation document.
pub fn parse_coco(bytes: &[u8]) -> Result<DatasetIndex> {
    parse_coco_with_report(bytes).map(|(index, _)| index)
}

/// Like [`parse_coco`], also returning how many boxes were clamped or dropped.
pub fn parse_coco_with_report(bytes: &[u8]) -> Result<(DatasetIndex, IngestReport)> {
    let raw: RawDocument = serde_json::from_slice(bytes).map_err(|e| convert_json_error(bytes, e))?;
    let raw_images = required(raw.images, || "images".into())?;
    let raw_annotations = required(raw.annotations, || "annotations".into())?;
    let raw_categories = required(raw.categories, || "categories".into())?;

    let mut categories = BTreeMap::new();
    for (i, c) in raw_categories.into_iter().enumerate() {
        let id = CategoryId(required(c.id, || format!("categories[{i}].id"))?);
        let name = required(c.name, || format!("categories[{i}].name"))?;
        if categories.insert(id, name).is_some() {
            return Err(Error::Integrity(format!("duplicate category id {id}")));
        }
    }

    let mut images = Vec::with_capacity(raw_images.len());
    for (i, img) in raw_images.into_iter().enumerate() {
        images.push(ImageRecord::new(
            ImageId(required(img.id, || format!("images[{i}].id"))?),
            required(img.file_name, || format!("images[{i}].file_name"))?,
            required(img.width, || format!("images[{i}].width"))?,
            required(img.height, || format!("images[{i}].height"))?,
        ));
    }
    let sizes: BTreeMap<ImageId, (u32, u32)> = images.iter().map(|i| (i.id, (i.width, i.height))).collect();

    let mut report = IngestReport::default();
    let mut annotations = Vec::with_capacity(raw_annotations.len());
    let mut seen_ids = BTreeSet::new();
    for (i, a) in raw_annotations.into_iter().enumerate() {
        let id = AnnotationId(required(a.id, || format!("annotations[{i}].id"))?);
        let image_id = ImageId(required(a.image_id, || format!("annotations[{i}].image_id"))?);
        let category_id = CategoryId(required(a.category_id, || format!("annotations[{i}].category_id"))?);
        let coords = required(a.bbox, || format!("annotations[{i}].bbox"))?;
        let [x, y, w, h] = <[f64; 4]>::try_from(coords.as_slice())
            .map_err(|_| Error::schema(format!("annotations[{i}].bbox"), "expected [x, y, w, h]"))?;
        let bbox = BBox::new(x, y, w, h);
        if !bbox.is_finite() {
            return Err(Error::schema(format!("annotations[{i}].bbox"), "non-finite coordinate"));
        }
        let iscrowd = match a.iscrowd {
            None => false,
            Some(CrowdFlag::Bool(b)) => b,
            Some(CrowdFlag::Int(v)) => v != 0,
        };
        if !seen_ids.insert(id) {
            return Err(Error::Integrity(format!("duplicate annotation id {id}")));
        }
        let Some(&(width, height)) = sizes.get(&image_id) else {
            return Err(Error::Integrity(format!(
                "annotation {id} references missing image {image_id}"
            )));
        };
        if !categories.contains_key(&category_id) {
            return Err(Error::Integrity(format!(
                "annotation {id} references missing category {category_id}"
            )));
        }
        let (width, height) = (f64::from(width), f64::from(height));
        let bbox = if bbox.w > 0.0 && bbox.h > 0.0 && bbox.within(width, height, BOUNDS_TOLERANCE) {
            bbox
        } else {
            let (x, w) = clamp_span(bbox.x, bbox.w, width);
            let (y, h) = clamp_span(bbox.y, bbox.h, height);
            if w > 0.0 && h > 0.0 {
                report.clamped += 1;
                BBox::new(x, y, w, h)
            } else {
                report.dropped += 1;
                continue;
            }
        };
        annotations.push(Annotation {
            id,
            image_id,
            category_id,
            bbox,
            iscrowd,
        });
    }
    if report.clamped > 0 || report.dropped > 0 {
        log::warn!(
            "{} boxes clamped to their image, {} dropped with no area left",
            report.clamped,
            report.dropped
        );
    }
    let index = DatasetIndex::build(images, annotations, categories)?;
    Ok((index, report))
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// One broken invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// The offending entity, e.g. `annotation 12`.
    pub entity: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.entity, self.rule)
    }
}

/// Reports every broken invariant of `index`; empty when it is consistent.
pub fn validate(index: &DatasetIndex) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |entity: String, rule: String| out.push(Violation { entity, rule });

    for (&id, img) in &index.images {
        if img.id != id {
            push(format!("image {id}"), format!("keyed under {id} but has id {}", img.id));
        }
        if img.width == 0 || img.height == 0 {
            push(format!("image {id}"), "width and height must be positive".into());
        }
    }

    let mut expected_lists: BTreeMap<ImageId, Vec<AnnotationId>> = BTreeMap::new();
    let mut expected_by_category: BTreeMap<CategoryId, BTreeSet<ImageId>> = BTreeMap::new();
    for (&id, ann) in &index.annotations {
        let entity = format!("annotation {id}");
        if ann.id != id {
            push(entity.clone(), format!("keyed under {id} but has id {}", ann.id));
        }
        let image = index.images.get(&ann.image_id);
        if image.is_none() {
            push(entity.clone(), format!("image {} does not exist", ann.image_id));
        }
        if !index.categories.contains_key(&ann.category_id) {
            push(entity.clone(), format!("category {} does not exist", ann.category_id));
        }
        let b = ann.bbox;
        if !b.is_finite() || b.w <= 0.0 || b.h <= 0.0 {
            push(entity.clone(), format!("box {b:?} must have positive width and height"));
        } else if let Some(img) = image {
            if !b.within(f64::from(img.width), f64::from(img.height), BOUNDS_TOLERANCE) {
                push(entity.clone(), format!("box {b:?} leaves the {}x{} image", img.width, img.height));
            }
        }
        expected_lists.entry(ann.image_id).or_default().push(id);
        if !ann.iscrowd {
            expected_by_category.entry(ann.category_id).or_default().insert(ann.image_id);
        }
    }

    for (&id, img) in &index.images {
        let expected = expected_lists.remove(&id).unwrap_or_default();
        if img.annotation_ids != expected {
            push(
                format!("image {id}"),
                "annotation_ids does not list exactly its annotations in ascending order".into(),
            );
        }
    }

    for &c in index.categories.keys() {
        if !index.images_by_category.contains_key(&c) {
            push(format!("category {c}"), "missing from images_by_category".into());
        }
    }
    for (&c, list) in &index.images_by_category {
        let entity = format!("category {c}");
        if !index.categories.contains_key(&c) {
            push(entity, "listed in images_by_category but not defined".into());
            continue;
        }
        let mut counts: BTreeMap<ImageId, usize> = BTreeMap::new();
        for &i in list {
            *counts.entry(i).or_default() += 1;
        }
        for (&i, &n) in counts.iter().filter(|(_, &n)| n > 1) {
            push(entity.clone(), format!("image {i} listed {n} times"));
        }
        if list.windows(2).any(|w| w[0] > w[1]) {
            push(entity.clone(), "image list is not sorted ascending".into());
        }
        let listed: BTreeSet<ImageId> = counts.into_keys().collect();
        let expected = expected_by_category.remove(&c).unwrap_or_default();
        if listed != expected {
            push(
                entity,
                "image list differs from the images holding a non-crowd instance".into(),
            );
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Manifest output
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ManifestImage<'a> {
    id: ImageId,
    file_name: &'a str,
    width: u32,
    height: u32,
}

#[derive(Serialize)]
struct ManifestAnnotation {
    id: AnnotationId,
    image_id: ImageId,
    category_id: CategoryId,
    bbox: BBox,
    iscrowd: u8,
}

#[derive(Serialize)]
struct ManifestCategory<'a> {
    id: CategoryId,
    name: &'a str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    images: Vec<ManifestImage<'a>>,
    annotations: Vec<ManifestAnnotation>,
    categories: Vec<ManifestCategory<'a>>,
}

/// Serializes the index as a COCO document with ids in ascending order.
pub fn write_manifest(index: &DatasetIndex) -> Vec<u8> {
    let manifest = Manifest {
        images: index
            .images
            .values()
            .map(|i| ManifestImage {
                id: i.id,
                file_name: &i.file_name,
                width: i.width,
                height: i.height,
            })
            .collect(),
        annotations: index
            .annotations
            .values()
            .map(|a| ManifestAnnotation {
                id: a.id,
                image_id: a.image_id,
                category_id: a.category_id,
                bbox: a.bbox,
                iscrowd: u8::from(a.iscrowd),
            })
            .collect(),
        categories: index
            .categories
            .iter()
            .map(|(&id, name)| ManifestCategory { id, name })
            .collect(),
    };
    let mut out = serde_json::to_vec(&manifest).expect("manifest serialization cannot fail");
    out.push(b'\n');
    out
}
