//! Great-circle distance.

use crate::error::Error;
use crate::Result;

/// Mean Earth radius in kilometers.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// A (lat, lon) pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coordinates {
    pub lat: f64,
    pub lon: f64,
}

impl Coordinates {
    fn validate(self) -> Result<Self> {
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..=180.0).contains(&self.lon) {
            return Err(Error::invalid(format!(
                "coordinates ({}, {}) out of range",
                self.lat, self.lon
            )));
        }
        Ok(self)
    }
}

/// Haversine distance in kilometers on a 6371 km sphere.
pub fn haversine_km(a: Coordinates, b: Coordinates) -> Result<f64> {
    let a = a.validate()?;
    let b = b.validate()?;
    let (lat1, lon1) = (a.lat.to_radians(), a.lon.to_radians());
    let (lat2, lon2) = (b.lat.to_radians(), b.lon.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    Ok(2.0 * EARTH_RADIUS_KM * h.sqrt().asin())
}
