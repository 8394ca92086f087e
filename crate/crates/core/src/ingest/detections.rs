use std::io::BufRead;

use serde::Deserialize;

use super::{BBox, CropRect, Detection, DistressClass, IngestError};

#[derive(Deserialize)]
struct RawDetection {
    image_id: String,
    class_id: i64,
    bbox: [f64; 4],
    #[serde(default)]
    confidence: Option<f64>,
}

/// Parses newline-delimited JSON detections. Blank lines are skipped;
/// line numbers in errors are 1-based.
pub fn parse_detections<R: BufRead>(reader: R) -> Result<Vec<Detection>, IngestError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        out.push(parse_line(trimmed, line_no)?);
    }
    Ok(out)
}

fn parse_line(text: &str, line: usize) -> Result<Detection, IngestError> {
    let raw: RawDetection =
        serde_json::from_str(text).map_err(|e| IngestError::MalformedLine { line, reason: e.to_string() })?;
    if raw.image_id.is_empty() {
        return Err(IngestError::MalformedLine { line, reason: "empty image_id".into() });
    }
    let class = u8::try_from(raw.class_id)
        .ok()
        .and_then(DistressClass::new)
        .ok_or(IngestError::ClassOutOfRange { line, class_id: raw.class_id })?;

    let mut coords = [0u32; 4];
    for (slot, (&v, name)) in coords.iter_mut().zip(raw.bbox.iter().zip(["x", "y", "w", "h"])) {
        if !v.is_finite() || v.fract() != 0.0 {
            return Err(IngestError::InvalidBox {
                line,
                reason: format!("{name}={v} is not an integer pixel coordinate"),
            });
        }
        if v < 0.0 || v > u32::MAX as f64 {
            return Err(IngestError::InvalidBox { line, reason: format!("{name}={v} out of range") });
        }
        *slot = v as u32;
    }
    let [x, y, w, h] = coords;
    if w == 0 || h == 0 {
        return Err(IngestError::InvalidBox { line, reason: format!("non-positive box dims {w}x{h}") });
    }

    let confidence = raw.confidence.unwrap_or(1.0);
    if !(0.0..=1.0).contains(&confidence) {
        return Err(IngestError::MalformedLine { line, reason: format!("confidence {confidence} outside [0,1]") });
    }

    Ok(Detection { image_id: raw.image_id, class, bbox: BBox::new(x, y, w, h), confidence })
}

/// Serializes a detection back into its JSONL form (no trailing newline).
pub fn write_detection_line(det: &Detection) -> String {
    serde_json::json!({
        "image_id": det.image_id,
        "class_id": det.class.id(),
        "bbox": [det.bbox.x, det.bbox.y, det.bbox.w, det.bbox.h],
        "confidence": det.confidence,
    })
    .to_string()
}

/// Intersects the detection box with `rect` and re-expresses it in
/// rect-local coordinates. Returns `None` when nothing of the box is left.
pub fn clip_detection(det: &Detection, rect: &CropRect) -> Option<Detection> {
    let inter = det.bbox.intersect(&rect.as_bbox())?;
    Some(Detection { bbox: BBox::new(inter.x - rect.x, inter.y - rect.y, inter.w, inter.h), ..det.clone() })
}
