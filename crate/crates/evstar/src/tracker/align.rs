//! Relative-rotation alignment between two attitude series.
//!
//! Finds the fixed rotation q_r minimizing Σ‖(q_ref·q_r) ⊟ q_est‖² over
//! temporally matched samples — the calibration that relates two rigidly
//! mounted trackers (or an estimated track to a differently-referenced
//! truth).

use nalgebra::{Matrix3, Vector3};

use super::TrackerError;
use crate::geometry::{boxminus, exp_map, UnitQuat};

/// Maximum timestamp separation for a matched pair, µs.
const MATCH_WINDOW_US: u64 = 5_000;
/// Minimum matched pairs.
const MIN_MATCHES: usize = 10;

/// Nearest-neighbor timestamp matching within 5 ms, then Gauss–Newton on
/// the rotation-vector parametrization of q_r. Converges when the step norm
/// drops below 1e-10 rad.
pub fn align_relative_rotation(
    est: &[(u64, UnitQuat)],
    reference: &[(u64, UnitQuat)],
) -> Result<UnitQuat, TrackerError> {
    let mut pairs: Vec<(UnitQuat, UnitQuat)> = Vec::new();
    for &(t, q_est) in est {
        // Nearest reference sample by time.
        let i = reference.partition_point(|&(rt, _)| rt < t);
        let mut best: Option<(u64, UnitQuat)> = None;
        for cand in [i.checked_sub(1), Some(i)].into_iter().flatten() {
            if let Some(&(rt, rq)) = reference.get(cand) {
                let gap = rt.abs_diff(t);
                if gap <= MATCH_WINDOW_US && best.map(|(bg, _)| gap < bg).unwrap_or(true) {
                    best = Some((gap, rq));
                }
            }
        }
        if let Some((_, rq)) = best {
            pairs.push((q_est, rq));
        }
    }
    if pairs.len() < MIN_MATCHES {
        return Err(TrackerError::NoOverlap { matches: pairs.len(), required: MIN_MATCHES });
    }

    // Initialize from the first pair: q_ref·q_r = q_est.
    let mut q_r = pairs[0].1.inverse().mul(&pairs[0].0);
    let residual = |q_r: &UnitQuat, pair: &(UnitQuat, UnitQuat)| -> Vector3<f64> {
        boxminus(&pair.1.mul(q_r), &pair.0)
    };

    for _ in 0..50 {
        // Gauss–Newton step on the right-perturbation q_r·exp(δ), with a
        // central-difference Jacobian per pair.
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        let h = 1e-6;
        for pair in &pairs {
            let r0 = residual(&q_r, pair);
            let mut j = Matrix3::zeros();
            for k in 0..3 {
                let mut d = Vector3::zeros();
                d[k] = h;
                let plus = residual(&q_r.mul(&exp_map(&d)), pair);
                let minus = residual(&q_r.mul(&exp_map(&-d)), pair);
                j.set_column(k, &((plus - minus) / (2.0 * h)));
            }
            jtj += j.transpose() * j;
            jtr += j.transpose() * r0;
        }
        let Some(step) = jtj.lu().solve(&(-jtr)) else {
            return Err(TrackerError::DegenerateGeometry);
        };
        q_r = q_r.mul(&exp_map(&step));
        if step.norm() < 1e-10 {
            break;
        }
    }
    Ok(q_r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ARCSEC_PER_RAD;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn series(n: usize, seed: u64) -> Vec<(u64, UnitQuat)> {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut q = exp_map(&Vector3::new(0.3, -0.2, 0.1));
        (0..n)
            .map(|k| {
                q = exp_map(&Vector3::new(
                    rng.random::<f64>() * 2e-3,
                    rng.random::<f64>() * 2e-3,
                    rng.random::<f64>() * 2e-3,
                ))
                .mul(&q);
                (k as u64 * 1000, q)
            })
            .collect()
    }

    #[test]
    fn identical_series_align_at_identity() {
        let est = series(100, 81);
        let q_r = align_relative_rotation(&est, &est).unwrap();
        assert!(q_r.angle_to(&UnitQuat::IDENTITY) * ARCSEC_PER_RAD < 1e-3);
    }

    #[test]
    fn recovers_known_offset() {
        let reference = series(200, 82);
        let offset = exp_map(&Vector3::new(0.0, 1.0_f64.to_radians(), 0.0));
        let est: Vec<(u64, UnitQuat)> =
            reference.iter().map(|&(t, q)| (t, q.mul(&offset))).collect();
        let q_r = align_relative_rotation(&est, &reference).unwrap();
        let err = q_r.angle_to(&offset) * ARCSEC_PER_RAD;
        assert!(err < 0.1, "recovered offset off by {err} arcsec");
    }

    /// Per-sample noise averages out over many matches.
    #[test]
    fn noise_averages_out() {
        let mut rng = StdRng::seed_from_u64(83);
        let reference = series(1000, 84);
        let offset = exp_map(&Vector3::new(2e-3, -1e-3, 3e-3));
        let noise_rad = 30.0 / ARCSEC_PER_RAD;
        let est: Vec<(u64, UnitQuat)> = reference
            .iter()
            .map(|&(t, q)| {
                let n = Vector3::new(
                    rng.random::<f64>() * 2.0 - 1.0,
                    rng.random::<f64>() * 2.0 - 1.0,
                    rng.random::<f64>() * 2.0 - 1.0,
                ) * noise_rad;
                (t, exp_map(&n).mul(&q.mul(&offset)))
            })
            .collect();
        let q_r = align_relative_rotation(&est, &reference).unwrap();
        let err = q_r.angle_to(&offset) * ARCSEC_PER_RAD;
        assert!(err < 5.0, "aligned within {err} arcsec");
    }

    #[test]
    fn too_few_matches_rejected() {
        let est = series(5, 85);
        assert!(matches!(
            align_relative_rotation(&est, &est),
            Err(TrackerError::NoOverlap { matches: 5, required: 10 })
        ));
        // Disjoint time ranges match nothing.
        let late: Vec<(u64, UnitQuat)> =
            est.iter().map(|&(t, q)| (t + 10_000_000, q)).collect();
        let big = series(50, 86);
        let late_big: Vec<(u64, UnitQuat)> =
            big.iter().map(|&(t, q)| (t + 10_000_000, q)).collect();
        assert!(matches!(
            align_relative_rotation(&big, &late_big),
            Err(TrackerError::NoOverlap { .. })
        ));
        let _ = late;
    }
}
