//! Great-circle distances.

use crate::{Error, Result};

/// Mean Earth radius in kilometers.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Haversine distance between two `(lat, lon)` points given in degrees.
pub fn haversine_km(p1: (f64, f64), p2: (f64, f64)) -> Result<f64> {
    let (lat1, lon1) = p1;
    let (lat2, lon2) = p2;
    if ![lat1, lon1, lat2, lon2].iter().all(|v| v.is_finite()) {
        return Err(Error::invalid(format!("non-finite coordinates {p1:?} / {p2:?}")));
    }
    let (phi1, phi2) = (lat1.to_radians(), lat2.to_radians());
    let dphi = (lat2 - lat1).to_radians();
    let dlambda = (lon2 - lon1).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    Ok(2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin())
}
