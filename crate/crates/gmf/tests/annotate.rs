mod common;

use gmf::annotate::{annotate_frames, annotated_name, list_frames};
use gmf::codec::{decode_image, save_image};
use gmf_core::data::{ClassLabel, PixelGrid};
use gmf_core::detect::{Cascade, DetectParams, Detection, HaarRect, Stage, WeakClassifier};
use gmf_core::eval::Classifier;
use gmf_core::frames::{AnnotateOptions, CascadeDetector, FaceDetector};
use gmf_core::raster::BLACK;
use gmf_core::{Result, Tensor};

struct NoFaces;

impl FaceDetector for NoFaces {
    fn detect(&self, _: &PixelGrid) -> Vec<Detection> {
        Vec::new()
    }
}

struct WholeFrame;

impl FaceDetector for WholeFrame {
    fn detect(&self, img: &PixelGrid) -> Vec<Detection> {
        vec![Detection { x: 0, y: 0, width: img.width(), height: img.height(), neighbors: 1 }]
    }
}

/// Happiness for bright crops, surprise for dark ones.
#[derive(Clone)]
struct Brightness;

impl Classifier for Brightness {
    fn logits(&mut self, batch: &Tensor<f32>) -> Result<Tensor<f32>> {
        let m = batch.data().iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        Tensor::from_vec(&[1, 6], vec![4.0 * m, -4.0 * m, 0.0, 0.0, 0.0, 0.0])
    }
}

fn edge_cascade() -> Cascade {
    let wc = WeakClassifier {
        rects: vec![HaarRect { x: 0, y: 0, w: 4, h: 2, weight: 1.0 }, HaarRect { x: 0, y: 2, w: 4, h: 2, weight: -1.0 }],
        threshold: 0.1,
        left: -1.0,
        right: 1.0,
    };
    Cascade { width: 4, height: 4, stages: vec![Stage { threshold: 0.0, classifiers: vec![wc] }] }
}

fn lines(path: &std::path::Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().map(String::from).collect()
}

#[test]
fn frames_without_faces_are_copied() {
    let dir = tempfile::tempdir().unwrap();
    let (frames, out) = (dir.path().join("frames"), dir.path().join("out"));
    for i in 0..2 {
        save_image(&common::class_image(i, i, 20), &frames.join(format!("f{i}.png"))).unwrap();
    }
    let report = annotate_frames(&frames, &out, &NoFaces, &mut [common::Fixed([0.0; 6])], &AnnotateOptions::default(), 5).unwrap();
    assert_eq!((report.frames, report.failed), (2, 0));
    assert_eq!(report.top, [None, None]);
    for i in 0..2 {
        let a = decode_image(&frames.join(format!("f{i}.png"))).unwrap();
        let b = decode_image(&out.join(format!("f{i}_annotated.png"))).unwrap();
        assert_eq!(a, b);
    }
    let csv = lines(&out.join("results.csv"));
    assert_eq!(csv.len(), 3);
    assert_eq!(csv[0], "frame,face_idx,x,y,w,h,pred,score_0,score_1,score_2,score_3,score_4,score_5,status");
    assert_eq!(csv[1], "f0.png,,,,,,,,,,,,,no_face");
}

#[test]
fn whole_frame_face_has_closed_form_scores() {
    let dir = tempfile::tempdir().unwrap();
    let (frames, out) = (dir.path().join("frames"), dir.path().join("out"));
    save_image(&PixelGrid::filled(40, 30, 3, 200), &frames.join("only.png")).unwrap();
    let logits = [0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
    let report = annotate_frames(&frames, &out, &WholeFrame, &mut [common::Fixed(logits)], &AnnotateOptions::default(), 1).unwrap();
    assert_eq!(report.top, [Some(ClassLabel::Surprise)]);
    let csv = lines(&out.join("results.csv"));
    assert_eq!(csv.len(), 2);
    let fields: Vec<&str> = csv[1].split(',').collect();
    assert_eq!(fields[..7], ["only.png", "0", "0", "0", "40", "30", "surprise"]);
    let e = std::f64::consts::E;
    let denom = 5.0 + e;
    for (k, f) in fields[7..13].iter().enumerate() {
        let want = if k == 1 { e / denom } else { 1.0 / denom };
        assert!((f.parse::<f64>().unwrap() - want).abs() < 1e-6, "score {k}: {f}");
    }
    assert_eq!(fields[13], "ok");
    let img = decode_image(&out.join("only_annotated.png")).unwrap();
    assert_eq!((img.width(), img.height()), (40, 30));
    assert_eq!(img.pixel(0, 29), BLACK);
}

fn sequence(dir: &std::path::Path) -> std::path::PathBuf {
    let frames = dir.join("frames");
    for (i, light) in [250u8, 250, 90, 90, 90].into_iter().enumerate() {
        let img = PixelGrid::from_fn_rgb(24, 24, |_, y| if y < 12 { [light; 3] } else { [10; 3] });
        save_image(&img, &frames.join(format!("frame_{i:03}.png"))).unwrap();
    }
    frames
}

#[test]
fn five_frame_sequence_is_smoothed() {
    let dir = tempfile::tempdir().unwrap();
    let frames = sequence(dir.path());
    let detector = CascadeDetector { cascade: edge_cascade(), params: DetectParams { min_neighbors: 1, ..Default::default() } };
    let out = dir.path().join("out");
    let report = annotate_frames(&frames, &out, &detector, &mut [Brightness], &AnnotateOptions::default(), 5).unwrap();
    assert_eq!(report.rows.len(), 5);
    assert!(report.rows.iter().all(|r| r.status == "ok"));
    let raw: Vec<ClassLabel> = report.rows.iter().map(|r| r.face.as_ref().unwrap().2.pred).collect();
    use ClassLabel::{Happiness as H, Surprise as S};
    assert_eq!(raw, [H, H, S, S, S]);
    // running mode over the frames seen so far; ties go to the lower class id
    assert_eq!(report.top, [Some(H), Some(H), Some(H), Some(H), Some(S)]);

    let out4 = dir.path().join("out4");
    let parallel = annotate_frames(&frames, &out4, &detector, &mut vec![Brightness; 4], &AnnotateOptions::default(), 5).unwrap();
    assert_eq!(parallel, report);
    for f in list_frames(&frames).unwrap() {
        let name = annotated_name(&f);
        assert_eq!(std::fs::read(out.join(&name)).unwrap(), std::fs::read(out4.join(&name)).unwrap());
    }
    assert_eq!(std::fs::read(out.join("results.csv")).unwrap(), std::fs::read(out4.join("results.csv")).unwrap());
}

#[test]
fn unreadable_frame_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let frames = sequence(dir.path());
    std::fs::write(frames.join("frame_001.png"), b"broken").unwrap();
    let detector = CascadeDetector { cascade: edge_cascade(), params: DetectParams { min_neighbors: 1, ..Default::default() } };
    let out = dir.path().join("out");
    let report = annotate_frames(&frames, &out, &detector, &mut [Brightness], &AnnotateOptions::default(), 3).unwrap();
    assert_eq!((report.frames, report.failed), (5, 1));
    assert_eq!(report.top.len(), 4);
    assert!(report.rows[1].status.starts_with("error: "));
    assert!(!out.join("frame_001_annotated.png").exists());
    assert!(out.join("frame_004_annotated.png").exists());
    assert_eq!(lines(&out.join("results.csv")).len(), 6);
}

#[test]
fn missing_directory_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let r = annotate_frames(
        &dir.path().join("none"),
        &dir.path().join("out"),
        &NoFaces,
        &mut [common::Fixed([0.0; 6])],
        &AnnotateOptions::default(),
        5,
    );
    assert!(r.is_err());
}
