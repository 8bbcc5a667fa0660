//! Geographic coordinates and great-circle distance.

use serde::{Deserialize, Serialize};

use super::KgError;

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// A latitude/longitude pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    lat_deg: f64,
    lon_deg: f64,
}

impl GeoPoint {
    pub fn new(lat_deg: f64, lon_deg: f64) -> Result<Self, KgError> {
        let ok = lat_deg.is_finite()
            && lon_deg.is_finite()
            && (-90.0..=90.0).contains(&lat_deg)
            && (-180.0..=180.0).contains(&lon_deg);
        if ok {
            Ok(Self { lat_deg, lon_deg })
        } else {
            Err(KgError::InvalidGeo { lat: lat_deg, lon: lon_deg })
        }
    }

    pub fn lat(&self) -> f64 {
        self.lat_deg
    }

    pub fn lon(&self) -> f64 {
        self.lon_deg
    }
}

/// Great-circle distance between two points on a sphere of radius [`EARTH_RADIUS_KM`].
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat_deg.to_radians(), b.lat_deg.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon_deg - a.lon_deg).to_radians();
    let s_lat = (dlat / 2.0).sin();
    let s_lon = (dlon / 2.0).sin();
    let h = (s_lat * s_lat + lat1.cos() * lat2.cos() * s_lon * s_lon).clamp(0.0, 1.0);
    2.0 * EARTH_RADIUS_KM * h.sqrt().atan2((1.0 - h).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn p(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    // Spherical law of cosines, written independently of the haversine path.
    fn law_of_cosines_km(a: GeoPoint, b: GeoPoint) -> f64 {
        let (p1, p2) = (a.lat() * PI / 180.0, b.lat() * PI / 180.0);
        let dl = (b.lon() - a.lon()) * PI / 180.0;
        let c = p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos();
        EARTH_RADIUS_KM * c.clamp(-1.0, 1.0).acos()
    }

    #[test]
    fn identical_points_are_zero() {
        assert_eq!(haversine_km(p(41.38, 2.17), p(41.38, 2.17)), 0.0);
    }

    #[test]
    fn antipodal_is_half_circumference() {
        let d = haversine_km(p(0.0, 0.0), p(0.0, 180.0));
        assert!((d - PI * EARTH_RADIUS_KM).abs() <= 1e-9 * d);
        assert!((d - 20015.0869).abs() < 1e-3);
    }

    #[test]
    fn one_degree_on_equator_matches_law_of_cosines() {
        let (a, b) = (p(0.0, 0.0), p(0.0, 1.0));
        let d = haversine_km(a, b);
        let oracle = law_of_cosines_km(a, b);
        assert!((d - oracle).abs() <= 1e-9 * oracle, "{d} vs {oracle}");
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(matches!(GeoPoint::new(91.0, 0.0), Err(KgError::InvalidGeo { .. })));
        assert!(GeoPoint::new(0.0, -180.5).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
        assert!(GeoPoint::new(-90.0, 180.0).is_ok());
    }
}
