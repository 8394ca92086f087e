use std::collections::{HashMap, HashSet};
use std::io::Read;

use serde::Deserialize;

use super::{CropRect, IngestError};

pub const DEFAULT_SPACING_M: f64 = 15.0;
pub const DEFAULT_VIEW_M: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestImage {
    pub image_id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub spacing_m: f64,
    pub view_m: f64,
    pub crop: Option<CropRect>,
}

/// A surveyed road section: an ordered run of images sharing one
/// (optional) measured PASER rating.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionManifest {
    pub section_id: String,
    pub measured_paser: Option<f64>,
    pub images: Vec<ManifestImage>,
}

#[derive(Deserialize)]
struct Row {
    section_id: String,
    image_id: String,
    lat: f64,
    lon: f64,
    spacing_m: Option<f64>,
    view_m: Option<f64>,
    crop_x: Option<u32>,
    crop_y: Option<u32>,
    crop_w: Option<u32>,
    crop_h: Option<u32>,
    measured_paser: Option<f64>,
}

/// Parses `manifest.csv`. Sections keep the order of their first row and
/// images keep file order within a section.
pub fn parse_manifest<R: Read>(reader: R) -> Result<Vec<SectionManifest>, IngestError> {
    parse_manifest_with_defaults(reader, DEFAULT_SPACING_M, DEFAULT_VIEW_M)
}

/// As [`parse_manifest`], filling empty spacing/view cells with the given values.
pub fn parse_manifest_with_defaults<R: Read>(
    reader: R,
    default_spacing_m: f64,
    default_view_m: f64,
) -> Result<Vec<SectionManifest>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut sections: Vec<SectionManifest> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();

    for (idx, rec) in rdr.deserialize::<Row>().enumerate() {
        // header occupies line 1
        let line = idx + 2;
        let row = rec.map_err(|e| IngestError::Manifest(format!("line {line}: {e}")))?;
        let err = |msg: String| IngestError::Manifest(format!("line {line}: {msg}"));

        if row.section_id.is_empty() || row.image_id.is_empty() {
            return Err(err("empty section_id or image_id".into()));
        }
        if !(-90.0..=90.0).contains(&row.lat) || !(-180.0..=180.0).contains(&row.lon) {
            return Err(err(format!("coordinate out of range: {},{}", row.lat, row.lon)));
        }
        let spacing_m = row.spacing_m.unwrap_or(default_spacing_m);
        let view_m = row.view_m.unwrap_or(default_view_m);
        if !(spacing_m.is_finite() && spacing_m > 0.0) || !(view_m.is_finite() && view_m > 0.0) {
            return Err(err("spacing_m and view_m must be positive".into()));
        }
        let crop = match (row.crop_x, row.crop_y, row.crop_w, row.crop_h) {
            (None, None, None, None) => None,
            (Some(x), Some(y), Some(w), Some(h)) if w > 0 && h > 0 => Some(CropRect::new(x, y, w, h)),
            (Some(_), Some(_), Some(_), Some(_)) => return Err(err("crop must have positive size".into())),
            _ => return Err(err("crop columns must be all set or all empty".into())),
        };
        if let Some(p) = row.measured_paser {
            if !(0.0..=10.0).contains(&p) {
                return Err(err(format!("measured_paser {p} outside [0,10]")));
            }
        }
        if !seen.insert((row.section_id.clone(), row.image_id.clone())) {
            return Err(err(format!("duplicate image_id {} in section {}", row.image_id, row.section_id)));
        }

        let slot = *by_id.entry(row.section_id.clone()).or_insert_with(|| {
            sections.push(SectionManifest {
                section_id: row.section_id.clone(),
                measured_paser: None,
                images: Vec::new(),
            });
            sections.len() - 1
        });
        let section = &mut sections[slot];
        match (section.measured_paser, row.measured_paser) {
            (Some(a), Some(b)) if a != b => {
                return Err(err(format!("conflicting measured_paser for section {}: {a} vs {b}", section.section_id)))
            }
            (None, Some(b)) => section.measured_paser = Some(b),
            _ => {}
        }
        section.images.push(ManifestImage {
            image_id: row.image_id,
            latitude: row.lat,
            longitude: row.lon,
            spacing_m,
            view_m,
            crop,
        });
    }
    Ok(sections)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "section_id,image_id,lat,lon,spacing_m,view_m,crop_x,crop_y,crop_w,crop_h,measured_paser\n";

    #[test]
    fn groups_rows_and_applies_defaults() {
        let text =
            format!("{HEADER}S1,a,38.9,-92.3,,,,,,,7\nS2,c,38.0,-92.0,10,4,1,2,3,4,\nS1,b,38.91,-92.31,,,,,,,\n");
        let secs = parse_manifest(text.as_bytes()).unwrap();
        assert_eq!(secs.len(), 2);
        assert_eq!(secs[0].section_id, "S1");
        assert_eq!(secs[0].measured_paser, Some(7.0));
        assert_eq!(secs[0].images.len(), 2);
        assert_eq!(secs[0].images[1].image_id, "b");
        assert_eq!(secs[0].images[0].spacing_m, DEFAULT_SPACING_M);
        assert_eq!(secs[0].images[0].view_m, DEFAULT_VIEW_M);
        assert_eq!(secs[1].images[0].crop, Some(CropRect::new(1, 2, 3, 4)));
        assert_eq!(secs[1].measured_paser, None);
        assert_eq!(secs[1].images[0].spacing_m, 10.0);
    }

    #[test]
    fn rejects_duplicates_partial_crops_and_conflicts() {
        let dup = format!("{HEADER}S1,a,0,0,,,,,,,\nS1,a,0,0,,,,,,,\n");
        assert!(parse_manifest(dup.as_bytes()).unwrap_err().to_string().contains("line 3"));
        let partial = format!("{HEADER}S1,a,0,0,,,1,,,,\n");
        assert!(parse_manifest(partial.as_bytes()).is_err());
        let conflict = format!("{HEADER}S1,a,0,0,,,,,,,5\nS1,b,0,0,,,,,,,6\n");
        assert!(parse_manifest(conflict.as_bytes()).is_err());
        let lat = format!("{HEADER}S1,a,95,0,,,,,,,\n");
        assert!(parse_manifest(lat.as_bytes()).is_err());
        let paser = format!("{HEADER}S1,a,0,0,,,,,,,11\n");
        assert!(parse_manifest(paser.as_bytes()).is_err());
    }
}
