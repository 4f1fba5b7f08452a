use std::path::Path;
use std::process::{Command, Output};

use segfuse_cli::commands;
use segfuse_cli::config::Weighting;
use segfuse_cli::synth::{generate, SynthConfig};
use segfuse_cli::PipelineConfig;
use segfuse_core::io::{load_logits, load_manifest, save_bundle};
use segfuse_core::mask::rle_decode;
use segfuse_core::tensor::argmax_channel;
use segfuse_core::{
    AttentionMap, BinaryMask, Component, GroupKey, LogitMap, MaskInstance, PredictionBundle,
};

fn segfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segfuse"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn rect(h: usize, w: usize, y0: usize, x0: usize, y1: usize, x1: usize) -> BinaryMask {
    BinaryMask::from_fn(h, w, |y, x| (y0..y1).contains(&y) && (x0..x1).contains(&x)).unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&segfuse(&["--help"])), 0);
    assert_eq!(code(&segfuse(&["nonsense"])), 1);
    assert_eq!(code(&segfuse(&["fuse"])), 1);
    assert_eq!(
        code(&segfuse(&["fuse", "x.json", "--iou-threshold", "1.5"])),
        1
    );
    let missing = dir.path().join("missing.json");
    let o = segfuse(&["fuse", p(&missing), "--weighting", "uniform"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.json"));

    let out = dir.path().join("synth");
    assert_eq!(
        code(&segfuse(&[
            "synth",
            "--output-dir",
            p(&out),
            "--height",
            "32",
            "--width",
            "32"
        ])),
        0
    );
    let manifest = out.join("manifest.json");
    let o = segfuse(&[
        "fuse",
        p(&manifest),
        "--output-dir",
        p(&dir.path().join("f")),
    ]);
    assert_eq!(code(&o), 2, "AP weighting without calibration");
    assert!(String::from_utf8_lossy(&o.stderr).contains("calibration"));
}

#[test]
fn single_model_fusion_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let synth = dir.path().join("s");
    let o = segfuse(&[
        "synth",
        "--output-dir",
        p(&synth),
        "--perturbations",
        "2",
        "--height",
        "40",
        "--width",
        "40",
        "--objects",
        "2",
        "--scales",
        "1",
    ]);
    assert_eq!(code(&o), 0);
    let manifest = synth.join("manifest.json");
    let out = dir.path().join("f");
    let o = segfuse(&[
        "fuse",
        p(&manifest),
        "--weighting",
        "uniform",
        "--grouping",
        "both",
        "--output-dir",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let input = load_manifest(&manifest).unwrap();
    let key = |i: &MaskInstance| (i.object_id, i.component);
    let mut want: Vec<_> = input
        .instances
        .iter()
        .map(|i| (key(i), i.mask.clone(), i.score))
        .collect();
    want.sort_by_key(|a| a.0);
    for mode in ["vertical", "horizontal"] {
        let fused = load_manifest(&out.join(format!("fused_{mode}.json"))).unwrap();
        let mut got: Vec<_> = fused
            .instances
            .iter()
            .map(|i| (key(i), i.mask.clone(), i.score))
            .collect();
        got.sort_by_key(|a| a.0);
        assert_eq!(got, want, "{mode}");
    }
    assert!(out.join("weights.json").exists());
}

#[test]
fn unperturbed_models_ensemble_like_one() {
    let b = generate(&SynthConfig {
        height: 40,
        width: 40,
        objects: 2,
        perturbations: vec![0.0, 0.0, 0.0],
        scales: vec![1.0],
        ..Default::default()
    })
    .unwrap();
    let cfg = PipelineConfig {
        weighting: Weighting::Uniform,
        ..Default::default()
    };
    let fused = commands::fuse(&b, None, &cfg).unwrap();
    for f in &fused.sets[0].instances {
        let single = b
            .instances
            .iter()
            .find(|i| {
                i.model_id == "m0" && i.object_id == f.object_id && i.component == f.component
            })
            .unwrap();
        assert_eq!(f.mask, single.mask);
    }
    let global_only = PipelineConfig {
        beta_override: Some(1.0),
        ..cfg
    };
    let out = commands::pipeline(&b, None, &global_only).unwrap();
    assert_eq!(out.final_logits, b.global_logits[&("m0".to_owned(), 0)]);
}

fn ap_bundle(image_id: &str) -> PredictionBundle {
    let (h, w) = (8, 8);
    let gts = [rect(h, w, 0, 0, 4, 4), rect(h, w, 4, 4, 8, 8)];
    let gt = |m: &BinaryMask, obj| {
        MaskInstance::from_mask(m, Component::Shell, Some(obj), 1.0, "ground_truth", 1.0)
    };
    let pred = |m: &BinaryMask, obj, s| {
        MaskInstance::from_mask(m, Component::Shell, Some(obj), s, "m", 1.0)
    };
    PredictionBundle {
        image_id: image_id.into(),
        height: h,
        width: w,
        classes: 5,
        models: vec!["m".into()],
        scales: vec![1.0],
        global_logits: [(("m".to_owned(), 0), LogitMap::zeros(h, w, 5).unwrap())].into(),
        instances: vec![
            pred(&gts[0], 0, 0.9),
            pred(&rect(h, w, 0, 6, 2, 8), 2, 0.8),
            pred(&gts[1], 1, 0.7),
        ],
        ground_truth: vec![gt(&gts[0], 0), gt(&gts[1], 1)],
        ..Default::default()
    }
}

#[test]
fn evaluate_worked_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let preds = save_bundle(&ap_bundle("img"), dir.path(), "pred.json").unwrap();
    let out = dir.path().join("e");
    let o = segfuse(&["evaluate", p(&preds), p(&preds), "--output-dir", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("evaluation.json")).unwrap()).unwrap();
    let vertical = &report["scales"][0]["vertical"];
    let shell = vertical
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["group"]["value"] == "shell")
        .unwrap();
    assert!((shell["ap"].as_f64().unwrap() - 0.8333).abs() < 5e-5);

    let other = save_bundle(&ap_bundle("other"), dir.path(), "gt.json").unwrap();
    let o = segfuse(&["evaluate", p(&preds), p(&other), "--output-dir", p(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("image_id"));
}

#[test]
fn three_scale_constant_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (h, w) = (4, 4);
    let mut b = PredictionBundle {
        image_id: "const".into(),
        height: h,
        width: w,
        classes: 3,
        models: vec!["m".into()],
        scales: vec![0.5, 1.0, 2.0],
        ..Default::default()
    };
    for (s, (n, v)) in [(2usize, 1.0f32), (4, 2.0), (8, 4.0)]
        .into_iter()
        .enumerate()
    {
        b.global_logits
            .insert(("m".into(), s), LogitMap::filled(n, n, 3, v).unwrap());
        b.alphas.insert(s, AttentionMap::filled(n, n, 0.5).unwrap());
    }
    let manifest = save_bundle(&b, dir.path(), "m.json").unwrap();
    let out = dir.path().join("p");
    let o = segfuse(&[
        "pipeline",
        p(&manifest),
        "--weighting",
        "uniform",
        "--beta",
        "1",
        "--output-dir",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let fin = load_logits(&out.join("final_logits.sgft")).unwrap();
    assert_eq!(fin.dims(), (h, w, 3));
    assert!(fin.data().iter().all(|v| *v == 2.75));

    // A scale listed without logits is named in the diagnostic.
    let mut partial = b.clone();
    partial.global_logits.remove(&("m".to_owned(), 1));
    let cfg = PipelineConfig {
        weighting: Weighting::Uniform,
        ..Default::default()
    };
    let err = commands::pipeline(&partial, None, &cfg)
        .unwrap_err()
        .to_string();
    assert!(err.contains("logits[model=m, scale=1]"), "{err}");
}

#[test]
fn single_scale_beta_one_keeps_model_argmax() {
    let b = generate(&SynthConfig {
        height: 40,
        width: 40,
        objects: 2,
        perturbations: vec![3.0],
        scales: vec![1.0],
        ..Default::default()
    })
    .unwrap();
    let cfg = PipelineConfig {
        weighting: Weighting::Uniform,
        beta_override: Some(1.0),
        ..Default::default()
    };
    let out = commands::pipeline(&b, None, &cfg).unwrap();
    assert_eq!(
        out.labels,
        argmax_channel(&b.global_logits[&("m0".to_owned(), 0)])
    );
}

#[test]
fn synth_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        assert_eq!(
            code(&segfuse(&[
                "synth",
                "--seed",
                "42",
                "--height",
                "32",
                "--width",
                "32",
                "--output-dir",
                p(&out)
            ])),
            0
        );
        std::fs::read(out.join("manifest.json")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn weighted_pipeline_not_worse_than_uniform() {
    let synth = SynthConfig {
        seed: 21,
        height: 64,
        width: 64,
        objects: 4,
        perturbations: vec![0.0, 5.0, 8.0],
        scales: vec![0.5, 1.0],
        ..Default::default()
    };
    let target = generate(&synth).unwrap();
    let calibration = generate(&SynthConfig { seed: 22, ..synth }).unwrap();
    let weighted =
        commands::pipeline(&target, Some(&calibration), &PipelineConfig::default()).unwrap();
    let uniform = commands::pipeline(
        &target,
        None,
        &PipelineConfig {
            weighting: Weighting::Uniform,
            ..Default::default()
        },
    )
    .unwrap();
    let ap = |o: &commands::PipelineOutcome, c| {
        o.report
            .evaluation
            .as_ref()
            .unwrap()
            .vertical
            .get(commands::PIPELINE_MODEL_ID, GroupKey::Component(c))
            .unwrap()
    };
    for c in Component::ALL {
        assert!(
            ap(&weighted, c) >= ap(&uniform, c),
            "{c:?}: {} < {}",
            ap(&weighted, c),
            ap(&uniform, c)
        );
    }
    // Pipeline instances are valid nested masks.
    for i in &weighted.instances {
        rle_decode(&i.mask).unwrap();
    }
}
