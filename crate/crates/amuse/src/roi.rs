//! Highway for musical regions of interest: a pluggable frame detector plus
//! pooled box statistics delivered straight to the fusion head.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{AmuseError, Result};
use crate::tensor::Tensor;

/// Row-major RGB8 image.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    rgb: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, rgb: Vec<u8>) -> Result<Self> {
        if rgb.len() != width * height * 3 {
            return Err(AmuseError::invalid(
                "frame",
                format!("{}x{} frame needs {} bytes, got {}", width, height, width * height * 3, rgb.len()),
            ));
        }
        Ok(Frame { width, height, rgb })
    }

    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Self {
        let mut rgb = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            rgb.extend_from_slice(&color);
        }
        Frame { width, height, rgb }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn rgb(&self) -> &[u8] {
        &self.rgb
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, color: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.rgb[i..i + 3].copy_from_slice(&color);
    }
}

/// Axis-aligned box in normalized [0,1] coordinates (top-left origin).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let x1 = self.x.max(other.x);
        let y1 = self.y.max(other.y);
        let x2 = (self.x + self.w).min(other.x + other.w);
        let y2 = (self.y + self.h).min(other.y + other.h);
        let inter = (x2 - x1).max(0.0) * (y2 - y1).max(0.0);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    pub fn overlaps(&self, other: &BBox) -> bool {
        self.x < other.x + other.w
            && other.x < self.x + self.w
            && self.y < other.y + other.h
            && other.y < self.y + self.h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class: String,
    pub bbox: BBox,
    pub confidence: f64,
}

/// Per-frame object detection over a fixed class list. A trained detector
/// can replace the glyph stub without touching the pooling below.
pub trait RoiDetector {
    fn classes(&self) -> &[String];
    fn detect(&self, frame: &Frame) -> Result<Vec<Detection>>;
}

/// Detects the solid-color glyphs the synthetic generator plants: pixels
/// matching a class color (within a small tolerance) are grouped into
/// connected components and each component becomes one detection.
pub struct GlyphDetector {
    classes: Vec<String>,
    colors: Vec<[u8; 3]>,
    expected_size: (usize, usize),
    tolerance: u8,
    min_pixels: usize,
}

impl GlyphDetector {
    pub fn new(entries: Vec<(String, [u8; 3])>, expected_size: (usize, usize)) -> Self {
        GlyphDetector {
            classes: entries.iter().map(|(n, _)| n.clone()).collect(),
            colors: entries.iter().map(|(_, c)| *c).collect(),
            expected_size,
            tolerance: 6,
            min_pixels: 4,
        }
    }

    fn matches(&self, px: [u8; 3], color: [u8; 3]) -> bool {
        px.iter()
            .zip(color.iter())
            .all(|(a, b)| a.abs_diff(*b) <= self.tolerance)
    }
}

impl RoiDetector for GlyphDetector {
    fn classes(&self) -> &[String] {
        &self.classes
    }

    fn detect(&self, frame: &Frame) -> Result<Vec<Detection>> {
        if (frame.width(), frame.height()) != self.expected_size {
            return Err(AmuseError::invalid(
                "detect_rois",
                format!(
                    "frame is {}x{}, detector expects {}x{}",
                    frame.width(),
                    frame.height(),
                    self.expected_size.0,
                    self.expected_size.1
                ),
            ));
        }
        let (w, h) = (frame.width(), frame.height());
        let mut detections = Vec::new();
        for (ci, color) in self.colors.iter().enumerate() {
            let mut mask: Vec<bool> = (0..w * h)
                .map(|i| self.matches(frame.pixel(i % w, i / w), *color))
                .collect();
            // flood-fill 4-connected components
            for start in 0..w * h {
                if !mask[start] {
                    continue;
                }
                let mut stack = vec![start];
                mask[start] = false;
                let (mut min_x, mut max_x, mut min_y, mut max_y) = (w, 0usize, h, 0usize);
                let mut count = 0usize;
                while let Some(p) = stack.pop() {
                    let (x, y) = (p % w, p / w);
                    min_x = min_x.min(x);
                    max_x = max_x.max(x);
                    min_y = min_y.min(y);
                    max_y = max_y.max(y);
                    count += 1;
                    if x > 0 && mask[p - 1] {
                        mask[p - 1] = false;
                        stack.push(p - 1);
                    }
                    if x + 1 < w && mask[p + 1] {
                        mask[p + 1] = false;
                        stack.push(p + 1);
                    }
                    if y > 0 && mask[p - w] {
                        mask[p - w] = false;
                        stack.push(p - w);
                    }
                    if y + 1 < h && mask[p + w] {
                        mask[p + w] = false;
                        stack.push(p + w);
                    }
                }
                if count < self.min_pixels {
                    continue;
                }
                detections.push(Detection {
                    class: self.classes[ci].clone(),
                    bbox: BBox {
                        x: min_x as f64 / w as f64,
                        y: min_y as f64 / h as f64,
                        w: (max_x - min_x + 1) as f64 / w as f64,
                        h: (max_y - min_y + 1) as f64 / h as f64,
                    },
                    confidence: 1.0,
                });
            }
        }
        Ok(detections)
    }
}

/// Slots per class in the pooled feature vector: mean detections per frame,
/// mean center x, mean center y, mean box area.
pub const ROI_SLOTS_PER_CLASS: usize = 4;

#[derive(Debug, Clone)]
pub struct RoiFeatures {
    pub per_frame: Vec<Vec<Detection>>,
    pub pooled: Tensor,
}

/// Pools detections over all frames into a fixed-length vector:
/// `[count_0, cx_0, cy_0, area_0, count_1, ...]` in class-list order, with
/// zeros for absent classes. Count slots are exact detections-per-frame
/// ratios; center and area slots are means over a class's detections.
pub fn roi_features(per_frame: Vec<Vec<Detection>>, classes: &[String]) -> Result<RoiFeatures> {
    if per_frame.is_empty() {
        return Err(AmuseError::invalid("roi_features", "no frames"));
    }
    let n_frames = per_frame.len() as f64;
    let index: BTreeMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let mut count = vec![0.0; classes.len()];
    let mut cx = vec![0.0; classes.len()];
    let mut cy = vec![0.0; classes.len()];
    let mut area = vec![0.0; classes.len()];
    for frame in &per_frame {
        for det in frame {
            let ci = *index.get(det.class.as_str()).ok_or_else(|| {
                AmuseError::invalid("roi_features", format!("unknown class '{}'", det.class))
            })?;
            count[ci] += 1.0;
            let (x, y) = det.bbox.center();
            cx[ci] += x;
            cy[ci] += y;
            area[ci] += det.bbox.area();
        }
    }
    let mut pooled = vec![0.0; classes.len() * ROI_SLOTS_PER_CLASS];
    for ci in 0..classes.len() {
        let n = count[ci];
        pooled[ci * ROI_SLOTS_PER_CLASS] = n / n_frames;
        if n > 0.0 {
            pooled[ci * ROI_SLOTS_PER_CLASS + 1] = cx[ci] / n;
            pooled[ci * ROI_SLOTS_PER_CLASS + 2] = cy[ci] / n;
            pooled[ci * ROI_SLOTS_PER_CLASS + 3] = area[ci] / n;
        }
    }
    Ok(RoiFeatures {
        per_frame,
        pooled: Tensor::vector(pooled),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn detector() -> GlyphDetector {
        GlyphDetector::new(
            vec![
                ("violin".into(), [200, 60, 40]),
                ("flute".into(), [60, 200, 220]),
            ],
            (64, 64),
        )
    }

    fn plant(frame: &mut Frame, bbox: BBox, color: [u8; 3]) {
        let (w, h) = (frame.width() as f64, frame.height() as f64);
        let x0 = (bbox.x * w) as usize;
        let y0 = (bbox.y * h) as usize;
        let x1 = ((bbox.x + bbox.w) * w) as usize;
        let y1 = ((bbox.y + bbox.h) * h) as usize;
        for y in y0..y1 {
            for x in x0..x1 {
                frame.set_pixel(x, y, color);
            }
        }
    }

    #[test]
    fn planted_glyphs_detected_with_high_iou() {
        let mut frame = Frame::filled(64, 64, [40, 40, 46]);
        let b1 = BBox { x: 0.125, y: 0.125, w: 0.125, h: 0.1875 };
        let b2 = BBox { x: 0.625, y: 0.5, w: 0.1875, h: 0.125 };
        plant(&mut frame, b1, [200, 60, 40]);
        plant(&mut frame, b2, [60, 200, 220]);
        let dets = detector().detect(&frame).unwrap();
        assert_eq!(dets.len(), 2);
        let violin = dets.iter().find(|d| d.class == "violin").unwrap();
        let flute = dets.iter().find(|d| d.class == "flute").unwrap();
        assert!(violin.bbox.iou(&b1) >= 0.9, "iou {}", violin.bbox.iou(&b1));
        assert!(flute.bbox.iou(&b2) >= 0.9, "iou {}", flute.bbox.iou(&b2));
    }

    #[test]
    fn blank_frame_has_no_detections() {
        let frame = Frame::filled(64, 64, [40, 40, 46]);
        assert!(detector().detect(&frame).unwrap().is_empty());
    }

    #[test]
    fn duplicate_glyphs_give_two_detections() {
        let mut frame = Frame::filled(64, 64, [40, 40, 46]);
        plant(&mut frame, BBox { x: 0.1, y: 0.1, w: 0.15, h: 0.15 }, [200, 60, 40]);
        plant(&mut frame, BBox { x: 0.6, y: 0.6, w: 0.15, h: 0.15 }, [200, 60, 40]);
        let dets = detector().detect(&frame).unwrap();
        assert_eq!(dets.len(), 2);
        assert!(dets.iter().all(|d| d.class == "violin"));
        let feats = roi_features(vec![dets], &["violin".into(), "flute".into()]).unwrap();
        assert_eq!(feats.pooled.data()[0], 2.0); // two violins per frame
    }

    #[test]
    fn wrong_frame_size_is_an_error() {
        let frame = Frame::filled(32, 32, [0, 0, 0]);
        assert!(detector().detect(&frame).is_err());
    }

    #[test]
    fn empty_detections_pool_to_zero_vector() {
        let classes = vec!["violin".to_string(), "flute".to_string()];
        let feats = roi_features(vec![vec![], vec![]], &classes).unwrap();
        assert!(feats.pooled.data().iter().all(|&v| v == 0.0));
        assert_eq!(feats.pooled.len(), 8);
    }

    #[test]
    fn centered_detection_pools_to_half_half() {
        let classes = vec!["violin".to_string()];
        let det = Detection {
            class: "violin".into(),
            bbox: BBox { x: 0.45, y: 0.45, w: 0.1, h: 0.1 },
            confidence: 1.0,
        };
        let feats = roi_features(vec![vec![det.clone()], vec![det]], &classes).unwrap();
        let d = feats.pooled.data();
        assert_eq!(d[0], 1.0);
        assert!((d[1] - 0.5).abs() < 1e-12);
        assert!((d[2] - 0.5).abs() < 1e-12);
        assert!((d[3] - 0.01).abs() < 1e-12);
    }

    #[test]
    fn mixed_sequence_matches_hand_stats() {
        let classes = vec!["violin".to_string(), "flute".to_string()];
        let v = |x: f64| Detection {
            class: "violin".into(),
            bbox: BBox { x, y: 0.2, w: 0.2, h: 0.2 },
            confidence: 1.0,
        };
        // three frames: violin in two of them, at x-centers 0.3 and 0.5
        let frames = vec![vec![v(0.2)], vec![], vec![v(0.4)]];
        let feats = roi_features(frames.clone(), &classes).unwrap();
        let d = feats.pooled.data();
        assert!((d[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((d[1] - 0.4).abs() < 1e-12);
        assert!((d[3] - 0.04).abs() < 1e-12);
        assert_eq!(d[4], 0.0);

        // pooling is invariant to frame order
        let mut rev = frames;
        rev.reverse();
        let feats2 = roi_features(rev, &classes).unwrap();
        assert_eq!(feats.pooled, feats2.pooled);
    }
}
