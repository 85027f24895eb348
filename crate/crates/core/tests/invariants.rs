use std::sync::Arc;

use hoidet::dataset::{rare_split, Dataset, HoiInstance, ImageAnnotation, ImageStore, Split, Taxonomy};
use hoidet::eval::{evaluate, paired_ttest, ApMethod, EvalSetting, ScoredDetection, MATCH_IOU};
use hoidet::BBox;
use proptest::prelude::*;

const PAIRS: [(&str, &str); 3] = [("ride", "bicycle"), ("repair", "bicycle"), ("hold", "cup")];

fn arb_box() -> impl Strategy<Value = BBox> {
    (0.0..60.0f64, 0.0..60.0f64, 4.0..30.0f64, 4.0..30.0f64)
        .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap())
}

/// Up to 4 images with up to 2 instances per class each, plus up to 12
/// detections with distinct scores; a third of them copy a ground-truth pair.
fn arb_case() -> impl Strategy<Value = (Dataset, Vec<ScoredDetection>)> {
    let inst = (0..3usize, arb_box(), arb_box());
    let image = prop::collection::vec(inst, 0..5);
    let det = (0..4usize, 0..3usize, arb_box(), arb_box(), any::<bool>());
    (prop::collection::vec(image, 1..5), prop::collection::vec(det, 0..13)).prop_map(|(images, raw)| {
        let mut anns = Vec::new();
        for (i, insts) in images.into_iter().enumerate() {
            let id = format!("i{i}");
            let mut a = ImageAnnotation::new(id.clone(), 100, 100);
            for (k, h, o) in insts {
                a.positives.insert(k);
                a.instances.push(HoiInstance {
                    image_id: id.clone(),
                    hoi_id: k,
                    human_box: h,
                    object_box: o,
                });
            }
            anns.push(a);
        }
        let all: Vec<HoiInstance> = anns.iter().flat_map(|a| a.instances.clone()).collect();
        let n = raw.len();
        let dets = raw
            .into_iter()
            .enumerate()
            .map(|(j, (img, k, h, o, copy))| {
                let score = 1.0 - j as f64 / (n + 1) as f64;
                match all.get(j % all.len().max(1)) {
                    Some(g) if copy && j % 3 == 0 => ScoredDetection {
                        image_id: g.image_id.clone(),
                        hoi_id: g.hoi_id,
                        human_box: g.human_box,
                        object_box: g.object_box,
                        score,
                    },
                    _ => ScoredDetection {
                        image_id: format!("i{}", img % anns.len()),
                        hoi_id: k,
                        human_box: h,
                        object_box: o,
                        score,
                    },
                }
            })
            .collect();
        let tax = Taxonomy::from_pairs(PAIRS).unwrap();
        (Dataset::new(Arc::new(tax), Split::Test, anns, ImageStore::empty()).unwrap(), dets)
    })
}

fn report(ds: &Dataset, dets: &[ScoredDetection], setting: EvalSetting) -> hoidet::eval::EvalReport {
    evaluate(dets, ds, setting, &rare_split(ds, 2), ApMethod::AllPoints, MATCH_IOU).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn known_object_never_lowers_ap((ds, dets) in arb_case()) {
        let d = report(&ds, &dets, EvalSetting::Default);
        let k = report(&ds, &dets, EvalSetting::KnownObject);
        for (a, b) in d.per_class.iter().zip(&k.per_class) {
            prop_assert_eq!(a.is_some(), b.is_some());
            if let (Some(a), Some(b)) = (a, b) {
                prop_assert!(a <= b, "Default {} above Known-object {}", a, b);
            }
        }
    }

    #[test]
    fn ap_bounded_and_order_free((ds, mut dets) in arb_case(), method in prop_oneof![Just(ApMethod::AllPoints), Just(ApMethod::ElevenPoint)]) {
        let split = rare_split(&ds, 2);
        let a = evaluate(&dets, &ds, EvalSetting::Default, &split, method, MATCH_IOU).unwrap();
        for ap in a.per_class.iter().flatten() {
            prop_assert!((0.0..=1.0).contains(ap));
        }
        dets.reverse();
        let b = evaluate(&dets, &ds, EvalSetting::Default, &split, method, MATCH_IOU).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn ttest_antisymmetric(a in prop::collection::vec(0.0..1.0f64, 2..30), shift in -0.5..0.5f64) {
        let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| v + shift + 0.01 * (i % 3) as f64).collect();
        let ab = paired_ttest(&a, &b).unwrap();
        let ba = paired_ttest(&b, &a).unwrap();
        prop_assert!((ab.t + ba.t).abs() < 1e-9 * ab.t.abs().max(1.0));
        prop_assert!((ab.p - ba.p).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab.p));
    }
}
