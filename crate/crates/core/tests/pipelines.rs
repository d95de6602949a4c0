use osteo_core::imaging::{ChanVeseParams as Cv, LabelMask};
use osteo_core::mri::{quality_filter, segment_mri, RejectReason, TumorRule, STEP_KMEANS};
use osteo_core::phantom::{mri_phantom, xray_phantom};
use osteo_core::xray::{segment_xray, Artifact, STEP_OTSU};
use osteo_core::{BinaryMask, GrayImage, GrayImageF32, MriConfig, QualityThresholds, XrayConfig};

#[test]
fn xray_constant_image_fails_in_otsu() {
    let err = segment_xray(
        &GrayImage::constant(32, 32, 0.4),
        &XrayConfig::default(),
        false,
    )
    .unwrap_err();
    assert_eq!(err.step(), Some(STEP_OTSU));
    assert_eq!(err.code(), "DEGENERATE_HISTOGRAM");
}

#[test]
fn xray_is_deterministic_and_intermediates_are_side_effect_free() {
    let p = xray_phantom::<f64>(96, 11);
    let cfg = XrayConfig::default();
    let a = segment_xray(&p.image, &cfg, false).unwrap();
    let b = segment_xray(&p.image, &cfg, true).unwrap();
    assert_eq!(a.lesion_mask, b.lesion_mask);
    assert_eq!(a.display, b.display);
    assert!(a.intermediates.is_empty());
    let names: Vec<_> = b.intermediates.iter().map(|(n, _)| *n).collect();
    assert_eq!(
        names,
        [
            "gaussian_blur",
            "gamma1",
            "clahe",
            "contrast_stretch",
            "otsu",
            "chan_vese",
            "gamma2"
        ]
    );
    match &b.intermediates[5].1 {
        Artifact::Mask(m) => assert_eq!(m, &b.lesion_mask),
        Artifact::Image(_) => panic!("chan_vese output should be a mask"),
    }
    assert_eq!(segment_xray(&p.image, &cfg, false).unwrap(), a);
}

#[test]
fn xray_refinement_stays_close_to_otsu() {
    for seed in 20..24 {
        let p = xray_phantom::<f64>(128, seed);
        let seg = segment_xray(&p.image, &XrayConfig::default(), false).unwrap();
        assert!(seg.lesion_mask.iou(&seg.otsu_mask).unwrap() >= 0.5);
        assert!(seg.lesion_mask.iou(&p.truth).unwrap() >= 0.8);
        assert!(seg.iterations <= XrayConfig::default().chan_vese.max_iter);
    }
}

#[test]
fn xray_config_rejects_unknown_fields_and_bad_values() {
    assert!(serde_json::from_str::<XrayConfig>(r#"{"gamma3": 1.0}"#).is_err());
    let cfg: XrayConfig = serde_json::from_str(r#"{"gamma1": -1.0}"#).unwrap();
    let p = xray_phantom::<f64>(64, 1);
    let err = segment_xray(&p.image, &cfg, false).unwrap_err();
    assert_eq!(
        (err.step(), err.code()),
        (Some("gamma1"), "INVALID_PARAMETER")
    );
    let cfg = XrayConfig {
        chan_vese: Cv {
            max_iter: 0,
            ..Cv::default()
        },
        ..XrayConfig::default()
    };
    assert_eq!(
        segment_xray(&p.image, &cfg, false).unwrap_err().step(),
        Some("chan_vese")
    );
}

#[test]
fn xray_runs_in_f32() {
    let p = xray_phantom::<f32>(96, 3);
    let seg = segment_xray(
        &p.image,
        &osteo_core::xray::XrayConfig::<f32>::default(),
        false,
    )
    .unwrap();
    assert!(seg.lesion_mask.iou(&p.truth).unwrap() >= 0.8);
    let _: &GrayImageF32 = &p.image;
}

#[test]
fn mri_binary_image_is_degenerate_for_kmeans() {
    let img = GrayImage::from_fn(40, 40, |x, _| if x < 20 { 0.1 } else { 0.9 });
    let err = segment_mri(&img, &MriConfig::default()).unwrap_err();
    assert_eq!(
        (err.step(), err.code()),
        (Some(STEP_KMEANS), "DEGENERATE_KMEANS")
    );
    let cfg = MriConfig {
        k: 2,
        ..MriConfig::default()
    };
    assert_eq!(
        segment_mri(&mri_phantom::<f64>(64, 0).image, &cfg)
            .unwrap_err()
            .code(),
        "INVALID_PARAMETER"
    );
}

#[test]
fn mri_partition_is_complete_and_deterministic() {
    let p = mri_phantom::<f64>(96, 7);
    let seg = segment_mri(&p.image, &MriConfig::default()).unwrap();
    let counts = |l: u8| seg.labels.labels().iter().filter(|&&v| v == l).count();
    assert_eq!(
        counts(LabelMask::BACKGROUND) + counts(LabelMask::TUMOR) + counts(LabelMask::NEIGHBOR),
        96 * 96
    );
    assert_eq!(seg.tumor_mask.count(), counts(LabelMask::TUMOR));
    assert_eq!(seg.neighbor_mask.count(), counts(LabelMask::NEIGHBOR));
    assert!(!seg.degenerate);
    assert!(seg.centroids.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(segment_mri(&p.image, &MriConfig::default()).unwrap(), seg);
    for seed in 1..5 {
        let other = segment_mri(
            &p.image,
            &MriConfig {
                seed,
                ..MriConfig::default()
            },
        )
        .unwrap();
        assert_eq!(other.labels, seg.labels, "seed {seed}");
    }
}

#[test]
fn mri_tumor_rules() {
    let p = mri_phantom::<f64>(96, 2);
    let bright = segment_mri(&p.image, &MriConfig::default()).unwrap();
    assert!(bright.tumor_mask.iou(&p.truth).unwrap() >= 0.9);
    let dark = segment_mri(
        &p.image,
        &MriConfig {
            tumor_rule: TumorRule::Darkest,
            ..MriConfig::default()
        },
    )
    .unwrap();
    // tumour and neighbour swap roles
    assert_eq!(dark.tumor_mask, bright.neighbor_mask);
    let largest = segment_mri(
        &p.image,
        &MriConfig {
            tumor_rule: TumorRule::LargestComponent,
            ..MriConfig::default()
        },
    )
    .unwrap();
    // the muscle band is bigger than the tumour disk
    assert_eq!(largest.tumor_mask, dark.tumor_mask);
    let rule: TumorRule = serde_json::from_str(r#""largest-component""#).unwrap();
    assert_eq!(rule, TumorRule::LargestComponent);
}

#[test]
fn quality_filter_examples() {
    let th = QualityThresholds::default();
    let ramp = GrayImage::from_fn(64, 64, |x, y| ((x + y) % 64) as f64 / 64.0);
    assert!(quality_filter(&ramp, &th).accepted);

    let flat = GrayImage::constant(16, 16, 0.5);
    let r = quality_filter(&flat, &th);
    assert!(!r.accepted);
    assert!(matches!(r.reasons[..], [RejectReason::LowContrast { .. }]));

    // 30% saturated
    let sat = GrayImage::from_fn(10, 10, |x, _| if x < 3 { 1.0 } else { x as f64 / 10.0 });
    let r = quality_filter(&sat, &th);
    match r.reasons[..] {
        [RejectReason::HighSaturation { saturated_fraction }] => {
            assert!((saturated_fraction - 0.3).abs() < 1e-12)
        }
        ref other => panic!("{other:?}"),
    }
    let white = GrayImage::constant(8, 8, 1.0);
    assert_eq!(quality_filter(&white, &th).reasons.len(), 2);
    let json = serde_json::to_value(quality_filter(&white, &th)).unwrap();
    assert_eq!(json["reasons"][0]["rule"], "high_saturation");
    assert_eq!(json["reasons"][1]["rule"], "low_contrast");
    // exactly at the limit is still fine
    let edge = GrayImage::from_fn(10, 10, |x, _| if x < 2 { 1.0 } else { x as f64 / 10.0 });
    assert!(quality_filter(&edge, &th).accepted);
}

#[test]
fn empty_mask_roundtrip_helpers() {
    let m = BinaryMask::empty(3, 2);
    assert_eq!(m.count(), 0);
    assert_eq!(m.complement().count(), 6);
}
