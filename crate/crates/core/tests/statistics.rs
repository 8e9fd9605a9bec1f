use std::collections::{BTreeMap, BTreeSet};

use longtail::coco::parse_coco;
use longtail::curation::{self, CurationConfig};
use longtail::fixture::{self, FixtureConfig};
use longtail::stats;

fn fixture_index(images: usize, seed: u64) -> longtail::DatasetIndex {
    let f = fixture::generate(&FixtureConfig {
        images,
        seed,
        ..FixtureConfig::default()
    });
    parse_coco(&f.document_bytes()).unwrap()
}

#[test]
fn histogram_matches_brute_force() {
    let index = fixture_index(300, 8);
    let hist = stats::histogram(&index);
    for &c in index.categories().keys() {
        let mut images = BTreeSet::new();
        let mut instances = 0;
        for a in index.annotations().values() {
            if a.category_id == c && !a.iscrowd {
                images.insert(a.image_id);
                instances += 1;
            }
        }
        assert_eq!(hist.image_counts[&c], images.len());
        assert_eq!(hist.instance_counts[&c], instances);
        assert_eq!(hist.image_counts[&c] >= 1, hist.instance_counts[&c] >= 1);
    }
    let counts: Vec<usize> = hist.order.iter().map(|c| hist.image_counts[c]).collect();
    assert!(counts.windows(2).all(|w| w[0] >= w[1]));
}

fn count_bars(svg: &str) -> usize {
    svg.matches("<rect class=\"bar\"").count()
}

#[test]
fn report_files_are_deterministic_with_one_bar_per_class() {
    let index = fixture_index(300, 2);
    let curated = curation::curate(&index, &CurationConfig::default()).unwrap();
    let hist = stats::histogram(&curated.index);
    let fit = stats::zipf_fit(&hist, &curated.spec).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let written = stats::emit_report(&hist, Some(&fit), a.path()).unwrap();
    stats::emit_report(&hist, Some(&fit), b.path()).unwrap();
    assert_eq!(written.len(), 4);
    for name in [stats::CSV_NAME, stats::IMAGES_SVG, stats::INSTANCES_SVG, stats::FIT_JSON] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        assert_eq!(x, std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    for name in [stats::IMAGES_SVG, stats::INSTANCES_SVG] {
        let svg = std::fs::read_to_string(a.path().join(name)).unwrap();
        assert_eq!(count_bars(&svg), 10, "{name}");
        assert!(svg.contains("viewBox=\"0 0 800 500\""));
    }
    let csv = std::fs::read_to_string(a.path().join(stats::CSV_NAME)).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("category,image_count,instance_count"));
    assert_eq!(lines.count(), 10);
}

#[test]
fn curated_fixture_is_close_to_zipf() {
    let index = fixture_index(500, 3);
    let curated = curation::curate(&index, &CurationConfig::default()).unwrap();
    let hist = stats::histogram(&curated.index);
    let fit = stats::zipf_fit(&hist, &curated.spec).unwrap();
    let before = {
        let keep: BTreeSet<_> = curated.rank_order.iter().copied().collect();
        let capped = curation::filter_max_detections(&index, 10);
        let stripped = curation::strip_categories(&capped, &keep).unwrap();
        stats::zipf_fit(&stats::histogram(&stripped), &curated.spec).unwrap()
    };
    assert!(fit.l1 <= before.l1, "{} > {}", fit.l1, before.l1);
    assert!(fit.l1 < 0.25, "L1 {}", fit.l1);
}

#[test]
fn report_accounts_for_every_image() {
    let index = fixture_index(400, 4);
    let curated = curation::curate(
        &index,
        &CurationConfig {
            pool_size: Some(350),
            seed: 9,
            ..CurationConfig::default()
        },
    )
    .unwrap();
    let r = &curated.report;
    assert_eq!(r.accounted_images(), 400);
    assert_eq!(r.removed_by_pool, 50);
    assert_eq!(r.kept_image_count, curated.index.images().len());
    let by_name: BTreeMap<_, _> = r.classes.iter().map(|c| (c.category_id, c.image_count)).collect();
    assert_eq!(by_name, curated.index.image_counts());
}
