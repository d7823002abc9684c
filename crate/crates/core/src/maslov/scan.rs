use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grassmann::detection_p6;
use crate::maslov::bundle::{bundle_ode, stable_bundle, unstable_bundle};
use crate::wave::WaveProfile;

#[derive(Clone, Debug, Serialize)]
pub struct ScanPoint {
    pub lambda: f64,
    /// det[E^u(lambda, z0), E^s(lambda, z0)] on unit Plücker vectors.
    pub detection: f64,
    pub max_lagrangian_defect: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanReport {
    pub z_match: f64,
    pub points: Vec<ScanPoint>,
    pub sign_changes: usize,
}

/// Evenly spaced grid on [lo, hi].
pub fn lambda_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Evaluates the detection form between E^u(lambda, z_match) and E^s(lambda, z_match) over
/// the grid and counts its sign changes. An eigenvalue in the grid range shows up as a
/// zero of this function.
pub fn eigenvalue_scan(profile: &WaveProfile, grid: &[f64], z_match: f64) -> Result<ScanReport> {
    if grid.iter().any(|&l| !(l > 0.0)) || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Precondition("lambda grid must be positive and increasing".into()));
    }
    let ode = bundle_ode();
    let points: Vec<ScanPoint> = grid
        .par_iter()
        .map(|&lambda| -> Result<ScanPoint> {
            let tag = |e: Error| Error::Integration { z: z_match, reason: format!("lambda = {lambda}: {e}") };
            let u = unstable_bundle(profile, lambda, z_match, &ode).map_err(tag)?;
            let s = stable_bundle(profile, lambda, z_match, &ode).map_err(tag)?;
            let (_, pu) = u.last().expect("nonempty");
            let (_, ps) = s.last().expect("nonempty");
            let detection = detection_p6(&(pu / pu.norm()), &(ps / ps.norm()));
            Ok(ScanPoint { lambda, detection, max_lagrangian_defect: u.max_lagrangian_defect.max(s.max_lagrangian_defect) })
        })
        .collect::<Result<_>>()?;
    let sign_changes = points.windows(2).filter(|w| w[0].detection.signum() != w[1].detection.signum()).count();
    Ok(ScanReport { z_match, points, sign_changes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints() {
        let g = lambda_grid(0.01, 1.0, 50);
        assert_eq!(g.len(), 50);
        assert_eq!(g[0], 0.01);
        assert!((g[49] - 1.0).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }
}
