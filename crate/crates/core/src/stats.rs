//! Per-class histograms, Zipf goodness of fit, and CSV/SVG reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::coco::{CategoryId, DatasetIndex};
use crate::curation::ZipfSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassHistogram {
    pub image_counts: BTreeMap<CategoryId, usize>,
    pub instance_counts: BTreeMap<CategoryId, usize>,
    /// Categories by descending image count, ties to the smaller id.
    pub order: Vec<CategoryId>,
    pub names: BTreeMap<CategoryId, String>,
}

impl ClassHistogram {
    pub fn total_images(&self) -> usize {
        self.image_counts.values().sum()
    }

    fn name(&self, c: CategoryId) -> String {
        self.names.get(&c).cloned().unwrap_or_else(|| c.to_string())
    }
}

pub fn histogram(index: &DatasetIndex) -> ClassHistogram {
    let image_counts = index.image_counts();
    let instance_counts = index.instance_counts();
    let mut order: Vec<CategoryId> = image_counts.keys().copied().collect();
    order.sort_by(|a, b| image_counts[b].cmp(&image_counts[a]).then(a.cmp(b)));
    ClassHistogram {
        image_counts,
        instance_counts,
        order,
        names: index.categories().clone(),
    }
}

/// Bins with an expected count below this are pooled for the chi-square test.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZipfFit {
    pub s: f64,
    /// Pearson statistic over the pooled bins.
    pub chi_square: f64,
    pub degrees_of_freedom: usize,
    /// Upper-tail probability; absent with fewer than two bins.
    pub p_value: Option<f64>,
    /// `sum_n |observed share - P(n)|` over ranks.
    pub l1: f64,
    pub bins: usize,
    pub observed: Vec<usize>,
    pub expected: Vec<f64>,
}

/// Compares the ranked image counts against the Zipf probabilities.
pub fn zipf_fit(hist: &ClassHistogram, spec: &ZipfSpec) -> Result<ZipfFit> {
    if hist.order.len() != spec.k() {
        return Err(Error::domain(format!(
            "histogram has {} classes but the Zipf law has {} ranks",
            hist.order.len(),
            spec.k()
        )));
    }
    let observed: Vec<usize> = hist.order.iter().map(|c| hist.image_counts[c]).collect();
    let total = observed.iter().sum::<usize>();
    if total == 0 {
        return Err(Error::domain("cannot fit an empty histogram"));
    }
    let n = total as f64;
    let expected: Vec<f64> = spec.probabilities.iter().map(|p| p * n).collect();
    let l1 = observed
        .iter()
        .zip(&spec.probabilities)
        .map(|(&o, p)| (o as f64 / n - p).abs())
        .sum();

    // pool consecutive ranks until each bin expects at least MIN_EXPECTED
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut pending = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(&expected) {
        pending.0 += o as f64;
        pending.1 += e;
        if pending.1 >= MIN_EXPECTED {
            bins.push(pending);
            pending = (0.0, 0.0);
        }
    }
    if pending.1 > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += pending.0;
                last.1 += pending.1;
            }
            None => bins.push(pending),
        }
    }
    let chi_square = bins.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = bins.len().saturating_sub(1);
    let p_value = (dof > 0).then(|| {
        let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
        1.0 - dist.cdf(chi_square)
    });
    Ok(ZipfFit {
        s: spec.s,
        chi_square,
        degrees_of_freedom: dof,
        p_value,
        l1,
        bins: bins.len(),
        observed,
        expected,
    })
}

pub const CSV_NAME: &str = "stats.csv";
pub const IMAGES_SVG: &str = "images_per_class.svg";
pub const INSTANCES_SVG: &str = "instances_per_class.svg";
pub const FIT_JSON: &str = "fit.json";

/// `category,image_count,instance_count` in rank order.
pub fn stats_csv(hist: &ClassHistogram) -> Vec<u8> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["category", "image_count", "instance_count"])
        .expect("in-memory write");
    for &c in &hist.order {
        writer
            .write_record([
                hist.name(c),
                hist.image_counts[&c].to_string(),
                hist.instance_counts.get(&c).copied().unwrap_or(0).to_string(),
            ])
            .expect("in-memory write");
    }
    writer.into_inner().expect("in-memory flush")
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 110.0;

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Rounds `max` up to 1, 2 or 5 times a power of ten.
fn axis_max(max: usize) -> f64 {
    if max == 0 {
        return 1.0;
    }
    let max = max as f64;
    let magnitude = 10f64.powf(max.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * magnitude)
        .find(|&v| v >= max)
        .unwrap_or(10.0 * magnitude)
}

/// Self-contained bar chart, one `rect.bar` per entry, in the given order.
pub fn bar_chart_svg(title: &str, y_label: &str, bars: &[(String, usize)]) -> String {
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let top = axis_max(bars.iter().map(|b| b.1).max().unwrap_or(0));
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="800" height="500" viewBox="0 0 800 500" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, r##"<rect x="0" y="0" width="800" height="500" fill="#ffffff"/>"##);
    let _ = writeln!(
        svg,
        r#"<text x="400" y="28" text-anchor="middle" font-size="18">{}</text>"#,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.2}" text-anchor="middle" font-size="13" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(y_label)
    );
    for i in 0..=5 {
        let value = top * f64::from(i) / 5.0;
        let y = TOP + plot_h - plot_h * f64::from(i) / 5.0;
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            LEFT + plot_w
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="11">{}</text>"#,
            LEFT - 6.0,
            y + 4.0,
            value.round()
        );
    }
    let slot = if bars.is_empty() { plot_w } else { plot_w / bars.len() as f64 };
    for (i, (name, value)) in bars.iter().enumerate() {
        let h = plot_h * *value as f64 / top;
        let x = LEFT + slot * i as f64 + slot * 0.1;
        let y = TOP + plot_h - h;
        let _ = writeln!(
            svg,
            r##"<rect class="bar" x="{x:.2}" y="{y:.2}" width="{:.2}" height="{h:.2}" fill="#4c72b0"><title>{}: {value}</title></rect>"##,
            slot * 0.8,
            escape(name)
        );
        let label_x = LEFT + slot * (i as f64 + 0.5);
        let label_y = TOP + plot_h + 14.0;
        let _ = writeln!(
            svg,
            r#"<text x="{label_x:.2}" y="{label_y:.2}" text-anchor="end" font-size="11" transform="rotate(-45 {label_x:.2} {label_y:.2})">{}</text>"#,
            escape(name)
        );
    }
    let _ = writeln!(
        svg,
        r##"<line x1="{LEFT:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#333333"/>"##,
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h
    );
    svg.push_str("</svg>\n");
    svg
}

fn write(path: PathBuf, bytes: &[u8]) -> Result<PathBuf> {
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `stats.csv`, both SVG charts and `fit.json` (null without a fit)
/// into `dir`, creating it if needed. Returns the written paths.
pub fn emit_report(hist: &ClassHistogram, fit: Option<&ZipfFit>, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let image_bars: Vec<(String, usize)> = hist.order.iter().map(|&c| (hist.name(c), hist.image_counts[&c])).collect();
    let instance_bars: Vec<(String, usize)> = hist
        .order
        .iter()
        .map(|&c| (hist.name(c), hist.instance_counts.get(&c).copied().unwrap_or(0)))
        .collect();
    let mut fit_json = serde_json::to_vec_pretty(&fit).expect("fit serialization cannot fail");
    fit_json.push(b'\n');
    Ok(vec![
        write(dir.join(CSV_NAME), &stats_csv(hist))?,
        write(
            dir.join(IMAGES_SVG),
            bar_chart_svg("Images per class", "images", &image_bars).as_bytes(),
        )?,
        write(
            dir.join(INSTANCES_SVG),
            bar_chart_svg("Instances per class", "instances", &instance_bars).as_bytes(),
        )?,
        write(dir.join(FIT_JSON), &fit_json)?,
    ])
}
