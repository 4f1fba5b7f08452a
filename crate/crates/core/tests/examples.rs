//! Worked examples replayed through the public API.

use segfuse_core::fusion::compute_weights;
use segfuse_core::hierarchy::run_inference_chain;
use segfuse_core::io::{load_manifest, save_bundle};
use segfuse_core::mask::expand_bbox;
use segfuse_core::metrics::{ap_from_percent, average_precision, group_ap, match_predictions};
use segfuse_core::tensor::bilinear_resize;
use segfuse_core::{
    ApTable, AttentionMap, BBox, BinaryMask, Component, GroupKey, GroupingMode, LogitMap,
    MaskInstance, Normalization, PredictionBundle, ScaleChain, ScaleEntry,
};

fn rect(h: usize, w: usize, y0: usize, x0: usize, y1: usize, x1: usize) -> BinaryMask {
    BinaryMask::from_fn(h, w, |y, x| (y0..y1).contains(&y) && (x0..x1).contains(&x)).unwrap()
}

#[test]
fn tp_fp_tp_over_two_ground_truths() {
    let gts = [rect(8, 8, 0, 0, 4, 4), rect(8, 8, 4, 4, 8, 8)];
    let g: Vec<_> = gts
        .iter()
        .map(|m| MaskInstance::from_mask(m, Component::Gonad, Some(0), 1.0, "gt", 1.0))
        .collect();
    let p = vec![
        MaskInstance::from_mask(&gts[0], Component::Gonad, Some(0), 0.9, "m", 1.0),
        MaskInstance::from_mask(
            &rect(8, 8, 0, 6, 2, 8),
            Component::Gonad,
            Some(0),
            0.8,
            "m",
            1.0,
        ),
        MaskInstance::from_mask(&gts[1], Component::Gonad, Some(0), 0.7, "m", 1.0),
    ];
    let ap = average_precision(&match_predictions(&p, &g, 0.6).unwrap());
    assert!((ap - 5.0 / 6.0).abs() < 1e-12);
}

#[test]
fn three_scale_constant_fold() {
    let entry = |s: f64, n: usize, v: f32| {
        ScaleEntry::new(
            s,
            LogitMap::filled(n, n, 2, v).unwrap(),
            AttentionMap::filled(n, n, 0.5).unwrap(),
        )
        .unwrap()
    };
    let chain = ScaleChain::new(vec![
        entry(0.5, 2, 1.0),
        entry(1.0, 4, 2.0),
        entry(2.0, 8, 4.0),
    ])
    .unwrap();
    let out = run_inference_chain(&chain).unwrap();
    assert_eq!(out.dims(), (8, 8, 2));
    assert!(out.data().iter().all(|v| *v == 2.75));
}

#[test]
fn shell_row_weights() {
    let mut t = ApTable::default();
    let key = GroupKey::Component(Component::Shell);
    for (m, ap) in [("a", 91.19), ("b", 91.76), ("c", 91.79)] {
        t.insert(m, key, ap_from_percent(ap));
    }
    let models: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
    let w = compute_weights(&t, key, &models, Normalization::Fraction).unwrap();
    for (m, e) in [("a", 0.33191), ("b", 0.33399), ("c", 0.33410)] {
        assert!((w.get(m).unwrap() - e).abs() < 1e-5);
    }
}

#[test]
fn bilinear_two_by_two_to_two_by_four() {
    let m = LogitMap::new(2, 2, 1, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
    let out = bilinear_resize(&m, 2, 4).unwrap();
    assert_eq!(out.data(), &[0.0, 0.25, 0.75, 1.0, 0.0, 0.25, 0.75, 1.0]);
}

#[test]
fn box_expansion() {
    let b = BBox::new(10, 10, 20, 20).unwrap();
    assert_eq!(
        expand_bbox(&b, 1.2, 100, 100).unwrap(),
        BBox::new(9, 9, 21, 21).unwrap()
    );
    let edge = BBox::new(0, 0, 10, 10).unwrap();
    assert_eq!(
        expand_bbox(&edge, 1.2, 12, 12).unwrap(),
        BBox::new(0, 0, 11, 11).unwrap()
    );
}

#[test]
fn perfect_predictions_score_one() {
    let masks = [rect(6, 6, 0, 0, 3, 3), rect(6, 6, 3, 3, 6, 6)];
    let gts: Vec<_> = masks
        .iter()
        .enumerate()
        .map(|(i, m)| MaskInstance::from_mask(m, Component::Meat, Some(i as u32), 1.0, "gt", 1.0))
        .collect();
    let preds: Vec<_> = gts
        .iter()
        .map(|g| MaskInstance {
            model_id: "m".into(),
            score: 0.8,
            ..g.clone()
        })
        .collect();
    let models = ["m".to_owned()];
    for mode in [GroupingMode::Vertical, GroupingMode::Horizontal] {
        let t = group_ap(&models, &preds, &gts, mode, 0.6).unwrap();
        assert!(t.iter().all(|(_, _, ap)| ap == 1.0));
        let empty = group_ap(&models, &[], &gts, mode, 0.6).unwrap();
        assert!(empty.iter().all(|(_, _, ap)| ap == 0.0));
    }
}

#[test]
fn manifest_roundtrip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let mask = rect(4, 6, 1, 1, 3, 5);
    let bundle = PredictionBundle {
        image_id: "img".into(),
        height: 4,
        width: 6,
        classes: 5,
        models: vec!["a".into()],
        scales: vec![1.0],
        global_logits: [(
            ("a".to_owned(), 0),
            LogitMap::filled(4, 6, 5, 0.25).unwrap(),
        )]
        .into(),
        instances: vec![MaskInstance::from_mask(
            &mask,
            Component::Shell,
            Some(0),
            0.5,
            "a",
            1.0,
        )],
        ..Default::default()
    };
    let path = save_bundle(&bundle, dir.path(), "m.json").unwrap();
    assert_eq!(load_manifest(&path).unwrap(), bundle);
}
