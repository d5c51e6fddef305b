mod support;

use gmf_core::data::{ClassLabel, PixelGrid};
use gmf_core::gradcam::{grad_cam, overlay, triptych};
use gmf_core::model::{Model, ModelSpec};
use support::camcheck::{cam_properties, oracle_cam, toy_input, toy_model};

#[test]
fn property_suite() {
    let r = cam_properties(3, 4);
    assert!(r.maps_checked > 100);
    assert!(r.nonzero > 36);
    assert_eq!(r.negative, 0);
    assert_eq!(r.bad_peak, 0);
    assert_eq!(r.disconnected_max, 0.0);
    assert!(r.scale_dev < 1e-6, "{}", r.scale_dev);
    assert!(r.oracle_dev < 1e-3, "{}", r.oracle_dev);
}

#[test]
fn predicted_class_is_default_target() {
    let mut model = toy_model(9);
    let x = toy_input(9);
    let auto = grad_cam(&mut model, &x, None).unwrap();
    let pred = gmf_core::nn::argmax(&auto.logits);
    assert_eq!(auto.map.target.id(), pred);
    let oracle = oracle_cam(&model, &x, pred);
    assert!(auto.map.values.iter().zip(&oracle).all(|(a, b)| (a - b).abs() < 1e-3));
}

#[test]
fn rejects_batches_and_renders_panels() {
    let mut model = toy_model(1);
    let batch = gmf_core::Tensor::zeros(&[2, 3, 8, 8]);
    assert!(grad_cam(&mut model, &batch, None).is_err());
    let r = grad_cam(&mut model, &toy_input(1), Some(ClassLabel::Sadness)).unwrap();
    let img = PixelGrid::from_fn_rgb(8, 8, |x, y| [(x * 30) as u8, (y * 30) as u8, 90]);
    let t = triptych(&img, &r, 32, 0.5).unwrap();
    assert_eq!((t.width(), t.height()), (96, 32));
    let o = overlay(&img, &r.map, 0.3).unwrap();
    assert_eq!((o.width(), o.height()), (8, 8));
}

#[test]
fn full_size_model_explains() {
    let spec = ModelSpec::from_arch("gimefive15").unwrap();
    let mut model = Model::<f32>::build(&spec, 0).unwrap();
    let x = gmf_core::Tensor::full(&[1, 3, 64, 64], 0.25f32);
    let r = grad_cam(&mut model, &x, Some(ClassLabel::Fear)).unwrap();
    assert_eq!((r.map.width, r.map.height), (4, 4));
    assert!(r.map.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
}
