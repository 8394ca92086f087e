use url::Url;

use super::IngestError;

pub const DEFAULT_STREETVIEW_BASE_URL: &str = "https://maps.googleapis.com/maps/api/streetview";

/// Wide-view capture pitch in degrees.
pub const PITCH_WIDE_VIEW: f64 = -70.0;
/// Top-down (birds-eye) capture pitch in degrees.
pub const PITCH_TOP_DOWN: f64 = -90.0;

#[derive(Debug, Clone, PartialEq)]
pub struct StreetViewRequest {
    pub latitude: f64,
    pub longitude: f64,
    pub pitch: f64,
    pub heading: f64,
    pub image_size: (u32, u32),
    pub api_key: String,
}

impl StreetViewRequest {
    pub fn has_standard_pitch(&self) -> bool {
        self.pitch == PITCH_WIDE_VIEW || self.pitch == PITCH_TOP_DOWN
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreetViewUrl {
    pub url: String,
    /// Set when the pitch is neither the wide-view nor the top-down angle.
    pub nonstandard_pitch: bool,
}

/// Builds the static street-view query. Parameters are always emitted in
/// the order size, location, heading, pitch, key.
pub fn build_streetview_url(req: &StreetViewRequest, base_url: &str) -> Result<StreetViewUrl, IngestError> {
    if !(-90.0..=90.0).contains(&req.latitude) {
        return Err(IngestError::CoordinateOutOfRange(format!("latitude {}", req.latitude)));
    }
    if !(-180.0..=180.0).contains(&req.longitude) {
        return Err(IngestError::CoordinateOutOfRange(format!("longitude {}", req.longitude)));
    }
    if !req.pitch.is_finite() || !req.heading.is_finite() {
        return Err(IngestError::CoordinateOutOfRange("non-finite pitch or heading".into()));
    }
    let mut url = Url::parse(base_url).map_err(|e| IngestError::Url(format!("{base_url}: {e}")))?;
    url.query_pairs_mut()
        .clear()
        .append_pair("size", &format!("{}x{}", req.image_size.0, req.image_size.1))
        .append_pair("location", &format!("{},{}", req.latitude, req.longitude))
        .append_pair("heading", &format!("{}", req.heading))
        .append_pair("pitch", &format!("{}", req.pitch))
        .append_pair("key", &req.api_key);
    Ok(StreetViewUrl { url: url.into(), nonstandard_pitch: !req.has_standard_pitch() })
}

/// Initial great-circle bearing from the first point to the second, in [0, 360).
pub fn bearing_deg(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dl = (lon2 - lon1).to_radians();
    let y = dl.sin() * p2.cos();
    let x = p1.cos() * p2.sin() - p1.sin() * p2.cos() * dl.cos();
    let b = y.atan2(x).to_degrees();
    (b + 360.0) % 360.0
}
