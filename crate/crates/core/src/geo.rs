//! Geographic proximity between nodes using the equirectangular
//! approximation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Error, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} outside (-180, 180]")]
    Longitude(f64),
}

/// A position in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat_deg: f64,
    pub lon_deg: f64,
}

impl GeoPoint {
    pub fn new(lat_deg: f64, lon_deg: f64) -> Result<Self, GeoError> {
        if !(lat_deg.is_finite() && (-90.0..=90.0).contains(&lat_deg)) {
            return Err(GeoError::Latitude(lat_deg));
        }
        if !(lon_deg.is_finite() && lon_deg > -180.0 && lon_deg <= 180.0) {
            return Err(GeoError::Longitude(lon_deg));
        }
        Ok(Self { lat_deg, lon_deg })
    }
}

/// Longitude difference folded onto the shorter arc, in degrees within [-180, 180].
fn wrapped_delta_lon(a: f64, b: f64) -> f64 {
    let mut d = b - a;
    if d > 180.0 {
        d -= 360.0;
    } else if d < -180.0 {
        d += 360.0;
    }
    d
}

/// Distance in kilometres: `R * sqrt(dphi^2 + (cos(mean phi) * dlambda)^2)`.
pub fn equirectangular_distance(p: GeoPoint, q: GeoPoint) -> f64 {
    let phi1 = p.lat_deg.to_radians();
    let phi2 = q.lat_deg.to_radians();
    let d_phi = phi2 - phi1;
    let d_lambda = wrapped_delta_lon(p.lon_deg, q.lon_deg).to_radians();
    // |d| keeps the expression symmetric bit-for-bit.
    let x = ((phi1 + phi2) / 2.0).cos() * d_lambda.abs();
    EARTH_RADIUS_KM * (d_phi.abs().powi(2) + x.powi(2)).sqrt()
}
