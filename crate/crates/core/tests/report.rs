use std::collections::BTreeMap;

use primfit::fitters::oracle_fit;
use primfit::metrics::{evaluate, MetricsBundle, DEFAULT_EPSILONS, DEFAULT_SCALE_EDGES};
use primfit::report::{aggregate, compare, render_comparison, render_table, ShapeEntry, REPORT_SCHEMA};
use primfit::synthgen::{generate_scene, SceneSpec};
use primfit::{Fit, FitMeta};
use proptest::prelude::*;

fn entry(id: &str, iou: f64, axis: Option<f64>) -> ShapeEntry {
    ShapeEntry {
        id: id.into(),
        metrics: MetricsBundle {
            seg_mean_iou: Some(iou),
            primitive_axis_deg: axis,
            ..MetricsBundle::default()
        },
        scale_bins: BTreeMap::new(),
    }
}

#[test]
fn aggregate_examples() {
    let one = aggregate("m", vec![entry("a", 0.3, Some(2.0))], BTreeMap::new());
    assert_eq!(one.schema, REPORT_SCHEMA);
    assert_eq!(one.means["seg_mean_iou"], Some(0.3));
    assert_eq!(one.means["primitive_axis_deg"], Some(2.0));

    let two = aggregate("m", vec![entry("a", 0.2, None), entry("b", 0.8, Some(4.0))], BTreeMap::new());
    assert_eq!(two.means["seg_mean_iou"], Some(0.5));
    assert_eq!(two.means["primitive_axis_deg"], Some(4.0));
    assert_eq!(two.absent_counts["primitive_axis_deg"], 1);
    assert_eq!(two.absent_counts["seg_mean_iou"], 0);
    assert_eq!(two.means["type_accuracy_pct"], None);
    assert_eq!(two.absent_counts["type_accuracy_pct"], 2);
}

fn evaluated(method: &str, empty: bool) -> primfit::report::DatasetReport {
    let spec = SceneSpec { n_points: 1000, m_samples: 32, noise_amplitude: 0.0, ..SceneSpec::default() };
    let shapes = (0..4)
        .map(|seed| {
            let scene = generate_scene(&spec, seed).unwrap();
            let fit = if empty { Fit::empty(scene.n(), FitMeta::default()) } else { oracle_fit(&scene) };
            let (metrics, scale_bins) = evaluate(&scene, &fit, &DEFAULT_EPSILONS, &DEFAULT_SCALE_EDGES);
            ShapeEntry { id: format!("scene_{seed}"), metrics, scale_bins }
        })
        .collect();
    aggregate(method, shapes, BTreeMap::new())
}

#[test]
fn compare_examples() {
    let oracle = evaluated("oracle", false);
    let c = compare(&oracle, &oracle).unwrap();
    assert!(c.rows.iter().all(|r| r.delta.map_or(true, |d| d == 0.0)));
    assert_eq!(c.shared, 4);

    let empty = evaluated("empty", true);
    let c = compare(&oracle, &empty).unwrap();
    for name in ["sk_coverage@0.01", "p_coverage@0.01", "p_coverage@0.02"] {
        let row = c.rows.iter().find(|r| r.metric == name).unwrap();
        assert_eq!(row.delta, Some(100.0), "{name}");
        assert_eq!(row.a_higher, 4);
    }
    let text = render_comparison(&c);
    assert!(text.contains("p_coverage@0.01"));

    let mut other = oracle.clone();
    for s in &mut other.shapes {
        s.id.push('x');
    }
    assert!(compare(&oracle, &other).is_err());
}

#[test]
fn pooled_bins_and_table() {
    let r = evaluated("oracle", false);
    let bins = &r.scale_bins["0.01"];
    let total: usize = bins.iter().map(|b| b.count).sum();
    let k: usize = r.shapes.iter().map(|s| s.metrics.k_gt).sum();
    assert_eq!(total, k);
    assert!(bins.iter().filter_map(|b| b.coverage()).all(|c| c == 100.0));
    let table = render_table(&[&r, &evaluated("empty", true)]);
    let lines: Vec<&str> = table.lines().collect();
    assert!(lines[0].starts_with("Method"));
    assert!(lines[2].starts_with("oracle") && lines[2].contains("100.00"));
    assert!(lines[3].starts_with("empty") && lines[3].contains('-'));
}

proptest! {
    #[test]
    fn aggregate_is_permutation_invariant_and_bounded(vals in prop::collection::vec((0.0f64..1.0, prop::option::of(0.0f64..90.0)), 1..12), rot in 0usize..12) {
        let shapes: Vec<ShapeEntry> = vals.iter().enumerate().map(|(i, (v, a))| entry(&format!("s{i:02}"), *v, *a)).collect();
        let mut rotated = shapes.clone();
        let n = rotated.len();
        rotated.rotate_left(rot % n);
        let r1 = aggregate("m", shapes, BTreeMap::new());
        let r2 = aggregate("m", rotated, BTreeMap::new());
        prop_assert_eq!(&r1, &r2);
        let m = r1.means["seg_mean_iou"].unwrap();
        let lo = vals.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
        let hi = vals.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(m >= lo - 1e-12 && m <= hi + 1e-12);
    }
}
