use proptest::prelude::*;
use splatgen_core::annotator::Annotation;
use splatgen_core::dataset::{
    assign_splits, coco_document, encode_image, read_coco, read_yolo_labels, split_counts, write_coco,
    write_yolo_labels, DatasetRecord, Split, YoloLabel,
};
use splatgen_core::rasterizer::{rasterize, Backdrop, RasterConfig};
use splatgen_core::BBox;

fn arb_pixel_box(w: f64, h: f64) -> impl Strategy<Value = BBox> {
    (0.0..w - 1.0, 0.0..h - 1.0, 0.0f64..1.0, 0.0f64..1.0).prop_map(move |(x0, y0, fw, fh)| {
        let x1 = x0 + 1.0 + fw * (w - x0 - 1.0);
        let y1 = y0 + 1.0 + fh * (h - y0 - 1.0);
        BBox::new(x0, y0, x1, y1)
    })
}

fn annotation(class_id: u32, instance_id: u32, bbox: BBox) -> Annotation {
    Annotation {
        class_id,
        instance_id,
        bbox,
        visibility: 1.0,
        truncated: false,
        pixel_area: 100,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn yolo_round_trip_within_half_pixel(
        boxes in proptest::collection::vec(arb_pixel_box(1280.0, 720.0), 0..8),
        class in 0u32..5,
    ) {
        let labels: Vec<YoloLabel> = boxes.iter().map(|b| YoloLabel { class_id: class, bbox: *b, confidence: None }).collect();
        let text = write_yolo_labels(&labels, 1280, 720);
        let back = read_yolo_labels(&text, 1280, 720).unwrap();
        prop_assert_eq!(back.len(), labels.len());
        for (a, b) in labels.iter().zip(&back) {
            prop_assert_eq!(a.class_id, b.class_id);
            for (x, y) in [(a.bbox.x_min, b.bbox.x_min), (a.bbox.y_min, b.bbox.y_min), (a.bbox.x_max, b.bbox.x_max), (a.bbox.y_max, b.bbox.y_max)] {
                prop_assert!((x - y).abs() <= 0.5, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn coco_and_yolo_agree(boxes in proptest::collection::vec(arb_pixel_box(640.0, 480.0), 1..6)) {
        let anns: Vec<Annotation> = boxes.iter().enumerate().map(|(i, b)| annotation((i % 2) as u32, i as u32 + 1, *b)).collect();
        let record = DatasetRecord {
            image_path: "images/train/frame_000000.png".into(),
            width: 640,
            height: 480,
            annotations: anns.clone(),
            split: Split::Train,
            master_seed: 1,
            frame_index: 0,
        };
        let doc = read_coco(&write_coco(&[record], &["ball".into(), "robot".into()])).unwrap();
        let from_coco = write_yolo_labels(&doc.labels_for(doc.images[0].id), 640, 480);
        let labels: Vec<YoloLabel> = anns.iter().map(YoloLabel::from).collect();
        prop_assert_eq!(from_coco, write_yolo_labels(&labels, 640, 480));
    }

    #[test]
    fn split_counts_sum_and_stay_near_ratio(n in 0usize..500, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let ratios = [lo, hi - lo, 1.0 - hi];
        let counts = split_counts(n, &ratios).unwrap();
        prop_assert_eq!(counts.iter().sum::<usize>(), n);
        for k in 0..3 {
            prop_assert!((counts[k] as f64 - ratios[k] * n as f64).abs() < 1.0 + 1e-9);
        }
    }
}

#[test]
fn split_assignment_is_seeded() {
    let r = [0.8, 0.1, 0.1];
    let a = assign_splits(200, &r, 42).unwrap();
    assert_eq!(a, assign_splits(200, &r, 42).unwrap());
    assert_ne!(a, assign_splits(200, &r, 43).unwrap());
    assert_eq!(a.iter().filter(|s| **s == Split::Val).count(), 20);
}

#[test]
fn coco_document_numbers_from_one() {
    let rec = |i: u64| DatasetRecord {
        image_path: format!("images/train/frame_{i:06}.png"),
        width: 10,
        height: 10,
        annotations: vec![annotation(0, 1, BBox::new(1.0, 1.0, 4.0, 5.0))],
        split: Split::Train,
        master_seed: 0,
        frame_index: i,
    };
    let doc = coco_document(&[rec(0), rec(1)], &["ball".into()]);
    assert_eq!(doc.images.iter().map(|i| i.id).collect::<Vec<_>>(), [1, 2]);
    assert_eq!(doc.annotations.iter().map(|a| a.id).collect::<Vec<_>>(), [1, 2]);
    assert_eq!(doc.annotations[0].bbox, [1.0, 1.0, 3.0, 4.0]);
    assert_eq!(doc.annotations[0].area, 12.0);
}

#[test]
fn encoded_image_is_deterministic_and_gamma_corrected() {
    let cfg = RasterConfig::default();
    let target = rasterize(&[], 32, 24, 0.01, 100.0, &Backdrop::Solid([0.5; 3]), 1.0, &cfg).unwrap();
    let png = encode_image(&target, 2.2).unwrap();
    assert_eq!(png, encode_image(&target, 2.2).unwrap());
    let img = image::load_from_memory(&png).unwrap().to_rgb8();
    assert_eq!(img.dimensions(), (32, 24));
    assert!(img.pixels().all(|p| p.0 == [186, 186, 186]));
}
