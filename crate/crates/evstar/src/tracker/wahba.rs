//! Least-squares attitude from paired unit-vector observations
//! (Davenport's q-method).
//!
//! Finds the world-to-camera rotation minimizing Σ‖bᵢ − q(rᵢ)‖² over pairs
//! of (body, reference) unit vectors, via the dominant eigenvector of the
//! 4×4 attitude-profile matrix.

use nalgebra::{Matrix3, Matrix4, Vector3};

use super::TrackerError;
use crate::geometry::UnitQuat;

/// Solve for the rotation taking each reference direction to its paired
/// body-frame direction.
pub fn wahba_solve(pairs: &[(Vector3<f64>, Vector3<f64>)]) -> Result<UnitQuat, TrackerError> {
    if pairs.len() < 2 {
        return Err(TrackerError::DegenerateGeometry);
    }
    // Collinear reference directions leave a rotation about their common
    // axis unobservable.
    let max_cross = pairs
        .iter()
        .flat_map(|(_, r1)| pairs.iter().map(move |(_, r2)| r1.cross(r2).norm()))
        .fold(0.0f64, f64::max);
    if max_cross < 1e-9 {
        return Err(TrackerError::DegenerateGeometry);
    }

    let mut b_profile = Matrix3::zeros();
    let mut z = Vector3::zeros();
    let w = 1.0 / pairs.len() as f64;
    for (body, reference) in pairs {
        b_profile += body * reference.transpose() * w;
        z += body.cross(reference) * w;
    }
    let sigma = b_profile.trace();
    let s = b_profile + b_profile.transpose();

    let mut k = Matrix4::zeros();
    k.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(s - Matrix3::identity() * sigma));
    k.fixed_view_mut::<3, 1>(0, 3).copy_from(&z);
    k.fixed_view_mut::<1, 3>(3, 0).copy_from(&z.transpose());
    k[(3, 3)] = sigma;

    let eig = nalgebra::SymmetricEigen::new(k);
    let mut best = 0;
    for i in 1..4 {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    let v = eig.eigenvectors.column(best);
    // The eigenvector is the optimal quaternion up to handedness
    // conventions; pick the interpretation that actually minimizes the cost.
    let cand = UnitQuat::new(v[3], v[0], v[1], v[2]);
    let cost = |q: &UnitQuat| -> f64 {
        pairs.iter().map(|(b, r)| (b - q.rotate(r)).norm_squared()).sum()
    };
    let conj = cand.inverse();
    Ok(if cost(&cand) <= cost(&conj) { cand } else { conj })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::exp_map;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_quat(rng: &mut StdRng) -> UnitQuat {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random::<f64>() * std::f64::consts::TAU;
        let u3: f64 = rng.random::<f64>() * std::f64::consts::TAU;
        let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
        UnitQuat::new(a * u2.cos(), a * u2.sin(), b * u3.cos(), b * u3.sin())
    }

    fn random_unit(rng: &mut StdRng) -> Vector3<f64> {
        loop {
            let v = Vector3::new(
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 2.0 - 1.0,
            );
            if v.norm() > 1e-3 {
                return v.normalize();
            }
        }
    }

    #[test]
    fn exact_recovery_from_noiseless_pairs() {
        let mut rng = StdRng::seed_from_u64(61);
        for n in [2usize, 3, 5, 12] {
            let truth = random_quat(&mut rng);
            let pairs: Vec<_> = (0..n)
                .map(|_| {
                    let r = random_unit(&mut rng);
                    (truth.rotate(&r), r)
                })
                .collect();
            let got = wahba_solve(&pairs).unwrap();
            assert!(got.angle_to(&truth) < 1e-9, "n={n}: error {}", got.angle_to(&truth));
        }
    }

    #[test]
    fn two_orthogonal_pairs_recover_exactly() {
        let truth = exp_map(&Vector3::new(0.3, -0.8, 0.4));
        let pairs = vec![
            (truth.rotate(&Vector3::x()), Vector3::x()),
            (truth.rotate(&Vector3::z()), Vector3::z()),
        ];
        let got = wahba_solve(&pairs).unwrap();
        assert!(got.angle_to(&truth) < 1e-12);
    }

    #[test]
    fn collinear_and_underdetermined_inputs_rejected() {
        let r = Vector3::new(0.3, 0.4, 0.5).normalize();
        let pairs = vec![(r, r), (r * 1.0, r)];
        assert!(matches!(wahba_solve(&pairs), Err(TrackerError::DegenerateGeometry)));
        assert!(matches!(wahba_solve(&[]), Err(TrackerError::DegenerateGeometry)));
    }

    /// Monte-Carlo oracle: with per-axis noise σ on the body vectors the
    /// attitude error stays below 3× the two-vector small-angle bound
    /// σ·√(2/n).
    #[test]
    fn noisy_pairs_stay_near_the_crlb_scale() {
        let mut rng = StdRng::seed_from_u64(62);
        let sigma = 1e-4;
        let n = 8;
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let truth = random_quat(&mut rng);
            let pairs: Vec<_> = (0..n)
                .map(|_| {
                    let r = random_unit(&mut rng);
                    let noise = Vector3::new(
                        rng.random::<f64>() * 2.0 - 1.0,
                        rng.random::<f64>() * 2.0 - 1.0,
                        rng.random::<f64>() * 2.0 - 1.0,
                    ) * sigma;
                    ((truth.rotate(&r) + noise).normalize(), r)
                })
                .collect();
            let got = wahba_solve(&pairs).unwrap();
            worst = worst.max(got.angle_to(&truth));
        }
        let bound = 3.0 * sigma * (2.0 / n as f64).sqrt();
        assert!(worst < bound, "worst error {worst} vs bound {bound}");
    }
}
