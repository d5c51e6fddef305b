//! Cascade files: the JSON schema read by the detector and a converter for
//! OpenCV's XML Haar cascades (both the `opencv-haar-classifier` layout and
//! the newer `<cascade>` layout; stumps only, no tilted features).

use std::path::Path;

use gmf_core::detect::{Cascade, HaarRect, Stage, WeakClassifier};
use roxmltree::{Document, Node};

use crate::error::{self, Error, Result};

/// Reads a cascade. Files ending in `.xml` go through the converter,
/// anything else is parsed as JSON.
pub fn load_cascade(path: &Path) -> Result<Cascade> {
    let text = error::read_string(path)?;
    let is_xml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("xml"));
    let cascade = if is_xml {
        cascade_from_xml(&text).map_err(|e| Error::format(path, e))?
    } else {
        serde_json::from_str::<Cascade>(&text).map_err(|e| Error::format(path, e))?
    };
    cascade.validate().map_err(|e| Error::format(path, e))?;
    Ok(cascade)
}

pub fn cascade_json(cascade: &Cascade) -> String {
    let mut s = serde_json::to_string_pretty(cascade).expect("cascade is plain data");
    s.push('\n');
    s
}

fn child<'a, 'i>(node: Node<'a, 'i>, name: &str) -> std::result::Result<Node<'a, 'i>, String> {
    node.children().find(|c| c.has_tag_name(name)).ok_or_else(|| format!("<{}> has no <{name}>", node.tag_name().name()))
}

fn items<'a, 'i>(node: Node<'a, 'i>) -> impl Iterator<Item = Node<'a, 'i>> {
    node.children().filter(|c| c.has_tag_name("_"))
}

fn numbers<T: std::str::FromStr>(node: Node<'_, '_>) -> std::result::Result<Vec<T>, String> {
    let text = node.text().unwrap_or("");
    text.split_whitespace().map(|t| t.parse().map_err(|_| format!("<{}>: cannot parse {t:?}", node.tag_name().name()))).collect()
}

fn number<T: std::str::FromStr>(node: Node<'_, '_>, name: &str) -> std::result::Result<T, String> {
    let c = child(node, name)?;
    let mut v = numbers::<T>(c)?;
    if v.len() != 1 {
        return Err(format!("<{name}> should hold one number"));
    }
    Ok(v.remove(0))
}

/// `<rects>` of a feature; a `<tilted>1</tilted>` feature is rejected.
fn feature_rects(feature: Node<'_, '_>) -> std::result::Result<Vec<HaarRect>, String> {
    if let Ok(t) = child(feature, "tilted") {
        if numbers::<i64>(t)?.first().is_some_and(|&v| v != 0) {
            return Err("tilted Haar features are not supported".into());
        }
    }
    items(child(feature, "rects")?)
        .map(|r| {
            let v = numbers::<f64>(r)?;
            if v.len() != 5 || v[..4].iter().any(|&c| c < 0.0 || c.fract() != 0.0) {
                return Err(format!("bad rectangle {:?}", r.text().unwrap_or("")));
            }
            Ok(HaarRect { x: v[0] as usize, y: v[1] as usize, w: v[2] as usize, h: v[3] as usize, weight: v[4] })
        })
        .collect()
}

fn new_format(root: Node<'_, '_>) -> std::result::Result<Cascade, String> {
    if let Ok(t) = child(root, "featureType") {
        let kind = t.text().unwrap_or("").trim();
        if kind != "HAAR" {
            return Err(format!("feature type {kind} is not supported"));
        }
    }
    let features = items(child(root, "features")?).map(feature_rects).collect::<std::result::Result<Vec<_>, _>>()?;
    let mut stages = Vec::new();
    for stage in items(child(root, "stages")?) {
        let threshold = number(stage, "stageThreshold")?;
        let mut classifiers = Vec::new();
        for wc in items(child(stage, "weakClassifiers")?) {
            let nodes = numbers::<f64>(child(wc, "internalNodes")?)?;
            let leaves = numbers::<f64>(child(wc, "leafValues")?)?;
            if nodes.len() != 4 || leaves.len() != 2 {
                return Err("only single-split weak classifiers are supported".into());
            }
            let idx = nodes[2] as usize;
            let rects = features.get(idx).ok_or_else(|| format!("feature index {idx} out of range"))?.clone();
            classifiers.push(WeakClassifier { rects, threshold: nodes[3], left: leaves[0], right: leaves[1] });
        }
        stages.push(Stage { threshold, classifiers });
    }
    Ok(Cascade { width: number(root, "width")?, height: number(root, "height")?, stages })
}

fn old_format(root: Node<'_, '_>) -> std::result::Result<Cascade, String> {
    let size = numbers::<usize>(child(root, "size")?)?;
    if size.len() != 2 {
        return Err("<size> should hold width and height".into());
    }
    let mut stages = Vec::new();
    for stage in items(child(root, "stages")?) {
        let mut classifiers = Vec::new();
        for tree in items(child(stage, "trees")?) {
            let nodes: Vec<_> = items(tree).collect();
            if nodes.len() != 1 || child(nodes[0], "left_val").is_err() || child(nodes[0], "right_val").is_err() {
                return Err("only single-node trees are supported".into());
            }
            let node = nodes[0];
            classifiers.push(WeakClassifier {
                rects: feature_rects(child(node, "feature")?)?,
                threshold: number(node, "threshold")?,
                left: number(node, "left_val")?,
                right: number(node, "right_val")?,
            });
        }
        stages.push(Stage { threshold: number(stage, "stage_threshold")?, classifiers });
    }
    Ok(Cascade { width: size[0], height: size[1], stages })
}

/// Converts the text of an OpenCV Haar cascade XML file.
pub fn cascade_from_xml(text: &str) -> std::result::Result<Cascade, String> {
    let doc = Document::parse(text).map_err(|e| e.to_string())?;
    let root = doc.root_element().children().find(Node::is_element).ok_or("empty cascade file")?;
    let cascade = if child(root, "features").is_ok() { new_format(root)? } else { old_format(root)? };
    cascade.validate().map_err(|e| e.to_string())?;
    Ok(cascade)
}
