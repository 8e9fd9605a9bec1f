//! Long-tailed subset construction.
//!
//! The recipe runs in order: optionally draw a random image pool, drop images
//! with too many detections, keep the `k` categories present in the most
//! images, strip every other category, then remove surplus images until the
//! per-class image counts follow a Zipf law anchored on the rarest class.
//!
//! Surplus removal is greedy. Per-class targets are
//! `T_n = round_half_up(P(n) * B)` with `B = count_K / P(K)`, so the rarest
//! class keeps every image. An image may be removed only while every ranked
//! class it contains is still above target; among those, the image with the
//! largest score `sum_c (count_c - T_c) / T_c` goes first, ties to the
//! largest image id. Co-occurring classes can make exact targets
//! unreachable, so the report carries the residual deviation per class.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::coco::{CategoryId, DatasetIndex, ImageId};
use crate::error::{Error, Result};
use crate::rng::{Purpose, Stream};

/// Rank-to-probability targets of a Zipf law with exponent `s` over `K` ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZipfSpec {
    pub s: f64,
    /// `probabilities[n - 1] = P(n)`.
    pub probabilities: Vec<f64>,
}

impl ZipfSpec {
    /// Number of ranks.
    pub fn k(&self) -> usize {
        self.probabilities.len()
    }

    /// `P(rank)` for a 1-based rank.
    pub fn probability(&self, rank: usize) -> f64 {
        self.probabilities[rank - 1]
    }
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// `P(n) = n^-s / sum_{k=1..K} k^-s` for `n = 1..K`.
pub fn zipf_targets(s: f64, k: usize) -> Result<ZipfSpec> {
    if k == 0 {
        return Err(Error::domain("a Zipf law needs at least one rank"));
    }
    if !s.is_finite() {
        return Err(Error::domain(format!("Zipf exponent must be finite, got {s}")));
    }
    let weights: Vec<f64> = (1..=k).map(|n| (n as f64).powf(-s)).collect();
    let norm = compensated_sum(weights.iter().copied());
    Ok(ZipfSpec {
        s,
        probabilities: weights.into_iter().map(|w| w / norm).collect(),
    })
}

/// Keeps images with at most `max_detections` annotations (crowd regions count).
pub fn filter_max_detections(index: &DatasetIndex, max_detections: usize) -> DatasetIndex {
    index.subset(
        |img| img.annotation_ids.len() <= max_detections,
        |_| true,
        |_| true,
    )
}

/// The `k` categories present in the most images, ties to the smaller id.
pub fn select_top_k_categories(index: &DatasetIndex, k: usize) -> Result<Vec<CategoryId>> {
    let mut ranked: Vec<(usize, CategoryId)> = index
        .image_counts()
        .into_iter()
        .filter(|&(_, n)| n > 0)
        .map(|(c, n)| (n, c))
        .collect();
    if ranked.len() < k {
        return Err(Error::domain(format!(
            "asked for the top {k} categories but only {} have images",
            ranked.len()
        )));
    }
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(ranked.into_iter().take(k).map(|(_, c)| c).collect())
}

/// Removes every category outside `keep`, its annotations, and any image
/// left without annotations.
pub fn strip_categories(index: &DatasetIndex, keep: &BTreeSet<CategoryId>) -> Result<DatasetIndex> {
    if keep.is_empty() {
        return Err(Error::domain("the set of categories to keep is empty"));
    }
    let occupied: BTreeSet<ImageId> = index
        .annotations()
        .values()
        .filter(|a| keep.contains(&a.category_id))
        .map(|a| a.image_id)
        .collect();
    Ok(index.subset(
        |img| occupied.contains(&img.id),
        |_| true,
        |c| keep.contains(&c),
    ))
}

/// Draws `size` images uniformly without replacement. Returns the input
/// unchanged when it already has no more than `size` images.
pub fn sample_pool(index: &DatasetIndex, size: usize, seed: u64) -> DatasetIndex {
    if index.images().len() <= size {
        return index.clone();
    }
    let mut ids = index.image_ids();
    Stream::new(seed, Purpose::PoolSample, 0, 0).shuffle(&mut ids);
    let chosen: BTreeSet<ImageId> = ids.into_iter().take(size).collect();
    index.subset(|img| chosen.contains(&img.id), |_| true, |_| true)
}

/// Outcome for one ranked class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassOutcome {
    pub rank: usize,
    pub category_id: CategoryId,
    pub name: String,
    pub probability: f64,
    pub target_images: usize,
    pub image_count: usize,
    pub instance_count: usize,
    /// `image_count - target_images`.
    pub deviation: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurationReport {
    pub input_image_count: usize,
    pub kept_image_count: usize,
    pub removed_by_pool: usize,
    pub removed_by_detection_cap: usize,
    pub removed_by_category_strip: usize,
    pub removed_by_surplus_filter: usize,
    pub per_class_image_counts: BTreeMap<CategoryId, usize>,
    pub per_class_instance_counts: BTreeMap<CategoryId, usize>,
    pub classes: Vec<ClassOutcome>,
}

impl CurationReport {
    /// Sum of every removal bucket plus the kept images.
    pub fn accounted_images(&self) -> usize {
        self.kept_image_count
            + self.removed_by_pool
            + self.removed_by_detection_cap
            + self.removed_by_category_strip
            + self.removed_by_surplus_filter
    }
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Image targets per rank: `T_K` is the rarest class's current count and the
/// rest follow `round_half_up(P(n) * T_K / P(K))`.
pub fn longtail_targets(spec: &ZipfSpec, rarest_count: usize) -> Vec<usize> {
    let k = spec.k();
    let budget = rarest_count as f64 / spec.probability(k);
    let mut targets: Vec<usize> = spec.probabilities.iter().map(|&p| round_half_up(p * budget)).collect();
    targets[k - 1] = rarest_count;
    targets
}

/// Greedily removes surplus images so the class image counts approach the
/// Zipf targets; `rank_order[0]` is the most frequent class.
pub fn enforce_longtail(
    index: &DatasetIndex,
    spec: &ZipfSpec,
    rank_order: &[CategoryId],
) -> Result<(DatasetIndex, CurationReport)> {
    if rank_order.len() != spec.k() {
        return Err(Error::domain(format!(
            "rank order lists {} categories but the Zipf law has {} ranks",
            rank_order.len(),
            spec.k()
        )));
    }
    let mut counts = Vec::with_capacity(rank_order.len());
    let mut rank_of = BTreeMap::new();
    for (r, &c) in rank_order.iter().enumerate() {
        let Some(list) = index.images_by_category().get(&c) else {
            return Err(Error::domain(format!("category {c} is not in the dataset")));
        };
        if list.is_empty() {
            return Err(Error::domain(format!("category {c} has no images left")));
        }
        if rank_of.insert(c, r).is_some() {
            return Err(Error::domain(format!("category {c} appears twice in the rank order")));
        }
        counts.push(list.len());
    }
    let targets = longtail_targets(spec, counts[counts.len() - 1]);
    if let Some(r) = targets.iter().position(|&t| t == 0) {
        return Err(Error::domain(format!(
            "target for category {} rounds to zero images",
            rank_order[r]
        )));
    }

    // Images with the same set of ranked classes share a score, so the greedy
    // scan runs over class signatures instead of individual images.
    let mut groups: BTreeMap<Vec<usize>, Vec<ImageId>> = BTreeMap::new();
    for &id in index.images().keys() {
        let mut signature: Vec<usize> = index
            .image_categories(id)
            .iter()
            .filter_map(|c| rank_of.get(c).copied())
            .collect();
        if signature.is_empty() {
            continue;
        }
        signature.sort_unstable();
        groups.entry(signature).or_default().push(id);
    }

    let mut removed = BTreeSet::new();
    loop {
        let mut best: Option<(f64, ImageId, &Vec<usize>)> = None;
        for (signature, ids) in &groups {
            let Some(&candidate) = ids.last() else { continue };
            if signature.iter().any(|&r| counts[r] <= targets[r]) {
                continue;
            }
            let score: f64 = signature
                .iter()
                .map(|&r| (counts[r] - targets[r]) as f64 / targets[r] as f64)
                .sum();
            let better = match best {
                None => true,
                Some((s, id, _)) => score > s || (score == s && candidate > id),
            };
            if better {
                best = Some((score, candidate, signature));
            }
        }
        let Some((_, id, signature)) = best else { break };
        let signature = signature.clone();
        for &r in &signature {
            counts[r] -= 1;
        }
        groups.get_mut(&signature).expect("group exists").pop();
        removed.insert(id);
    }

    let output = index.subset(|img| !removed.contains(&img.id), |_| true, |_| true);
    let image_counts = output.image_counts();
    let instance_counts = output.instance_counts();
    let classes = rank_order
        .iter()
        .enumerate()
        .map(|(r, &c)| ClassOutcome {
            rank: r + 1,
            category_id: c,
            name: output.category_name(c).unwrap_or_default().to_string(),
            probability: spec.probability(r + 1),
            target_images: targets[r],
            image_count: image_counts[&c],
            instance_count: instance_counts[&c],
            deviation: image_counts[&c] as i64 - targets[r] as i64,
        })
        .collect();
    let report = CurationReport {
        input_image_count: index.images().len(),
        kept_image_count: output.images().len(),
        removed_by_surplus_filter: removed.len(),
        per_class_image_counts: image_counts,
        per_class_instance_counts: instance_counts,
        classes,
        ..CurationReport::default()
    };
    Ok((output, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationConfig {
    pub top_k: usize,
    pub max_detections: usize,
    pub zipf_s: f64,
    /// Draw this many images before filtering, as a stand-in for sourcing a
    /// larger pool than the final subset.
    pub pool_size: Option<usize>,
    pub seed: u64,
}

impl Default for CurationConfig {
    fn default() -> Self {
        CurationConfig {
            top_k: 10,
            max_detections: 10,
            zipf_s: 1.01,
            pool_size: None,
            seed: 0,
        }
    }
}

/// Result of the full recipe.
#[derive(Debug, Clone)]
pub struct Curated {
    pub index: DatasetIndex,
    pub report: CurationReport,
    /// Kept categories, most frequent first.
    pub rank_order: Vec<CategoryId>,
    pub spec: ZipfSpec,
}

/// Runs pool sampling, the detection cap, top-k selection, category stripping
/// and surplus removal.
pub fn curate(index: &DatasetIndex, config: &CurationConfig) -> Result<Curated> {
    let input = index.images().len();
    let pooled = match config.pool_size {
        Some(size) => sample_pool(index, size, config.seed),
        None => index.clone(),
    };
    let after_pool = pooled.images().len();
    let capped = filter_max_detections(&pooled, config.max_detections);
    let after_cap = capped.images().len();
    let top = select_top_k_categories(&capped, config.top_k)?;
    let stripped = strip_categories(&capped, &top.iter().copied().collect())?;
    let after_strip = stripped.images().len();

    // stripping can reorder the ranking, so rank again on the stripped set
    let rank_order = select_top_k_categories(&stripped, config.top_k)?;
    let spec = zipf_targets(config.zipf_s, config.top_k)?;
    let (curated, surplus) = enforce_longtail(&stripped, &spec, &rank_order)?;
    let report = CurationReport {
        input_image_count: input,
        removed_by_pool: input - after_pool,
        removed_by_detection_cap: after_pool - after_cap,
        removed_by_category_strip: after_cap - after_strip,
        ..surplus
    };
    debug_assert_eq!(report.accounted_images(), input);
    Ok(Curated {
        index: curated,
        report,
        rank_order,
        spec,
    })
}

/// Applies the detection cap and category strip without any Zipf shaping,
/// as done for a validation split.
pub fn curate_validation(
    index: &DatasetIndex,
    max_detections: usize,
    keep: &BTreeSet<CategoryId>,
) -> Result<DatasetIndex> {
    strip_categories(&filter_max_detections(index, max_detections), keep)
}
