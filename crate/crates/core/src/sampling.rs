//! Epoch sampling schedules.
//!
//! Three strategies produce a reproducible list of image ids per epoch:
//!
//! * **uniform**: a seeded permutation of every image;
//! * **class-aware**: draws with replacement, each picking a category
//!   uniformly and then an image holding that category uniformly;
//! * **repeat-factor**: image `i` appears `floor(r_i)` times plus once more
//!   with probability `frac(r_i)`, then the whole multiset is shuffled.
//!
//! Repeat factors follow `f_c = |images with c| / |images|`,
//! `r_c = max(1, sqrt(t / f_c))` and `r_i` = max (or mean) of `r_c` over the
//! classes in image `i`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::coco::{CategoryId, DatasetIndex, ImageId};
use crate::error::{Error, Result};
use crate::rng::{Purpose, Stream};

/// Default oversampling threshold.
pub const DEFAULT_THRESHOLD: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Uniform,
    ClassAware,
    RepeatFactor,
}

/// How per-class repeat factors combine into one per image.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Max,
    Mean,
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Aggregation::Max),
            "mean" => Ok(Aggregation::Mean),
            other => Err(Error::domain(format!("unknown aggregation `{other}`"))),
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Max => "max",
            Aggregation::Mean => "mean",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSchedule {
    pub epoch: u64,
    pub seed: u64,
    pub strategy: Strategy,
    pub image_ids: Vec<ImageId>,
}

#[derive(Serialize)]
struct ScheduleLine<'a> {
    epoch: u64,
    image_ids: &'a [ImageId],
}

impl SamplingSchedule {
    /// The schedule file line: `{"epoch": e, "image_ids": [...]}`.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&ScheduleLine {
            epoch: self.epoch,
            image_ids: &self.image_ids,
        })
        .expect("schedule serialization cannot fail")
    }
}

/// Writes one JSON object per schedule, newline terminated.
pub fn write_schedules<W: Write>(mut out: W, schedules: &[SamplingSchedule]) -> std::io::Result<()> {
    for s in schedules {
        writeln!(out, "{}", s.to_json_line())?;
    }
    out.flush()
}

/// A seeded permutation of every image id.
pub fn uniform_schedule(index: &DatasetIndex, seed: u64, epoch: u64) -> Result<SamplingSchedule> {
    if index.is_empty() {
        return Err(Error::domain("cannot schedule an empty dataset"));
    }
    let mut ids = index.image_ids();
    Stream::new(seed, Purpose::UniformSchedule, epoch, 0).shuffle(&mut ids);
    Ok(SamplingSchedule {
        epoch,
        seed,
        strategy: Strategy::Uniform,
        image_ids: ids,
    })
}

/// Two-stage draw over a set of categories: uniform class, then uniform image
/// holding it.
#[derive(Debug, Clone)]
pub struct ClassAwareSampler<'a> {
    lists: Vec<&'a [ImageId]>,
}

impl<'a> ClassAwareSampler<'a> {
    /// Fails when `categories` is empty or any category has no image.
    pub fn new(index: &'a DatasetIndex, categories: impl IntoIterator<Item = CategoryId>) -> Result<Self> {
        let mut lists = Vec::new();
        for c in categories {
            match index.images_by_category().get(&c) {
                Some(list) if !list.is_empty() => lists.push(list.as_slice()),
                Some(_) => return Err(Error::domain(format!("category {c} has no images"))),
                None => return Err(Error::domain(format!("category {c} is not in the dataset"))),
            }
        }
        if lists.is_empty() {
            return Err(Error::domain("class-aware sampling needs at least one category"));
        }
        Ok(ClassAwareSampler { lists })
    }

    pub fn draw(&self, rng: &mut Stream) -> ImageId {
        let list = self.lists[rng.index(self.lists.len())];
        list[rng.index(list.len())]
    }
}

/// `length` class-aware draws with replacement over every category.
pub fn class_aware_schedule(index: &DatasetIndex, length: usize, seed: u64, epoch: u64) -> Result<SamplingSchedule> {
    let sampler = ClassAwareSampler::new(index, index.categories().keys().copied())?;
    let mut rng = Stream::new(seed, Purpose::ClassAwareSchedule, epoch, 0);
    let image_ids = (0..length).map(|_| sampler.draw(&mut rng)).collect();
    Ok(SamplingSchedule {
        epoch,
        seed,
        strategy: Strategy::ClassAware,
        image_ids,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatFactorTable {
    pub t: f64,
    pub aggregation: Aggregation,
    /// `f_c`, fraction of images containing the category.
    pub category_frequency: BTreeMap<CategoryId, f64>,
    /// `r_c = max(1, sqrt(t / f_c))`.
    pub category_repeat: BTreeMap<CategoryId, f64>,
    /// `r_i`; images without countable instances get 1.
    pub image_repeat: BTreeMap<ImageId, f64>,
}

impl RepeatFactorTable {
    /// Expected schedule length, `sum_i r_i`.
    pub fn expected_length(&self) -> f64 {
        crate::curation::compensated_sum(self.image_repeat.values().copied())
    }
}

pub fn repeat_factors(index: &DatasetIndex, t: f64, aggregation: Aggregation) -> Result<RepeatFactorTable> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::domain(format!("threshold must be positive, got {t}")));
    }
    if index.is_empty() {
        return Err(Error::domain("cannot compute repeat factors of an empty dataset"));
    }
    let total = index.images().len() as f64;
    let mut category_frequency = BTreeMap::new();
    let mut category_repeat = BTreeMap::new();
    for (&c, list) in index.images_by_category() {
        if list.is_empty() {
            return Err(Error::domain(format!("category {c} has no images")));
        }
        let f = list.len() as f64 / total;
        category_frequency.insert(c, f);
        category_repeat.insert(c, (t / f).sqrt().max(1.0));
    }
    let image_repeat = index
        .images()
        .keys()
        .map(|&id| {
            let factors: Vec<f64> = index.image_categories(id).iter().map(|c| category_repeat[c]).collect();
            let r = match (factors.is_empty(), aggregation) {
                (true, _) => 1.0,
                (false, Aggregation::Max) => factors.iter().copied().fold(1.0, f64::max),
                (false, Aggregation::Mean) => factors.iter().sum::<f64>() / factors.len() as f64,
            };
            (id, r)
        })
        .collect();
    Ok(RepeatFactorTable {
        t,
        aggregation,
        category_frequency,
        category_repeat,
        image_repeat,
    })
}

/// Number of copies of an image in one epoch: `floor(r)` plus one with
/// probability `frac(r)`, drawn from the `(seed, epoch, image)` substream.
pub fn stochastic_repeats(repeat: f64, seed: u64, epoch: u64, image: ImageId) -> usize {
    let whole = repeat.floor();
    let frac = repeat - whole;
    let mut count = whole as usize;
    if frac > 0.0 && Stream::new(seed, Purpose::RepeatRounding, epoch, image.0).bernoulli(frac) {
        count += 1;
    }
    count
}

pub fn repeat_factor_schedule(
    index: &DatasetIndex,
    table: &RepeatFactorTable,
    seed: u64,
    epoch: u64,
) -> Result<SamplingSchedule> {
    if table.image_repeat.len() != index.images().len()
        || !index.images().keys().all(|id| table.image_repeat.contains_key(id))
    {
        return Err(Error::domain("repeat factor table was built from a different dataset"));
    }
    let mut ids = Vec::with_capacity(table.expected_length().ceil() as usize + 1);
    for (&id, &r) in &table.image_repeat {
        let n = stochastic_repeats(r, seed, epoch, id);
        ids.extend(std::iter::repeat_n(id, n));
    }
    Stream::new(seed, Purpose::RepeatShuffle, epoch, 0).shuffle(&mut ids);
    Ok(SamplingSchedule {
        epoch,
        seed,
        strategy: Strategy::RepeatFactor,
        image_ids: ids,
    })
}
