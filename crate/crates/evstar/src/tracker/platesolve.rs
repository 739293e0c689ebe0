//! Lost-in-space plate solving by triangle matching.
//!
//! A precomputed table indexes catalog star triangles by their quantized
//! angular side lengths. Centroid triples from the image are converted to
//! unit rays through the focal length, looked up in the table, and each
//! candidate correspondence is verified by projecting the catalog at the
//! hypothesized attitude and counting centroid inliers within a pixel
//! tolerance. The hypothesis with the most inliers (ties: lower RMS
//! residual) wins; its inlier set is refined with a least-squares attitude
//! fit.

use nalgebra::Vector3;

use super::wahba::wahba_solve;
use super::TrackerError;
use crate::catalog::{stars_in_fov, StarCatalog};
use crate::geometry::{CameraIntrinsics, PixelPoint, UnitQuat};

/// Chord length between two unit vectors (≈ angle for small separations).
fn chord(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (a - b).norm()
}

/// Sorted triangle sides and the vertex order that realizes them.
///
/// `vertices[k]` is the vertex opposite `sides[k]`, so two triangles with
/// matching sorted sides correspond vertex-by-vertex through this ordering.
fn triangle_shape(d01: f64, d02: f64, d12: f64) -> ([f64; 3], [usize; 3]) {
    // Side opposite vertex 0 is d12, etc.
    let mut opp = [(d12, 0usize), (d02, 1), (d01, 2)];
    opp.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    ([opp[0].0, opp[1].0, opp[2].0], [opp[0].1, opp[1].1, opp[2].1])
}

/// Triangle table over a star catalog.
pub struct PlateSolver<'a> {
    catalog: &'a StarCatalog,
    /// Sorted (packed quantized sides, star indices in shape order).
    entries: Vec<(u64, [u32; 3])>,
    bin_rad: f64,
    max_side_chord: f64,
}

/// Verification tolerance: a centroid is an inlier when a projected catalog
/// star lies within this many pixels.
const INLIER_TOL_PX: f64 = 2.0;
/// Minimum inliers for an accepted solution.
const MIN_INLIERS: usize = 4;

impl<'a> PlateSolver<'a> {
    /// Build the triangle table. `max_side_deg` caps triangle side lengths
    /// (it must comfortably exceed typical in-frame star separations);
    /// `bin_arcsec` sets the quantization of the side-length index.
    pub fn build(catalog: &'a StarCatalog, max_side_deg: f64, bin_arcsec: f64) -> Self {
        let max_side_chord = 2.0 * (max_side_deg.to_radians() / 2.0).sin();
        let bin_rad = (bin_arcsec / 3600.0).to_radians();
        let stars = catalog.stars();
        let mut entries = Vec::new();
        for a in 0..stars.len() {
            // Neighbors of `a` with a larger index, within the side cap.
            let neighbors: Vec<usize> = (a + 1..stars.len())
                .filter(|&b| chord(&stars[a].direction, &stars[b].direction) <= max_side_chord)
                .collect();
            for (i, &b) in neighbors.iter().enumerate() {
                for &c in &neighbors[i + 1..] {
                    let dbc = chord(&stars[b].direction, &stars[c].direction);
                    if dbc > max_side_chord {
                        continue;
                    }
                    let dab = chord(&stars[a].direction, &stars[b].direction);
                    let dac = chord(&stars[a].direction, &stars[c].direction);
                    let (sides, order) = triangle_shape(dab, dac, dbc);
                    let ids = [a as u32, b as u32, c as u32];
                    let shaped = [ids[order[0]], ids[order[1]], ids[order[2]]];
                    entries.push((Self::pack(&sides, bin_rad), shaped));
                }
            }
        }
        entries.sort_unstable();
        PlateSolver { catalog, entries, bin_rad, max_side_chord }
    }

    /// Table with defaults suited to the camera: sides up to 80% of the
    /// field diagonal, bins of ~3 pixels.
    pub fn for_camera(catalog: &'a StarCatalog, intr: &CameraIntrinsics) -> Self {
        let diag_deg = (2.0 * intr.half_diagonal_rad()).to_degrees();
        let bin_arcsec = 3.0 * intr.pixel_ifov_arcsec();
        PlateSolver::build(catalog, 0.8 * diag_deg, bin_arcsec)
    }

    fn pack(sides: &[f64; 3], bin_rad: f64) -> u64 {
        let q = |s: f64| ((s / bin_rad).round() as u64) & 0x1F_FFFF;
        (q(sides[0]) << 42) | (q(sides[1]) << 21) | q(sides[2])
    }

    fn lookup(&self, sides: &[f64; 3]) -> Vec<[u32; 3]> {
        let mut out = Vec::new();
        let base = [sides[0] / self.bin_rad, sides[1] / self.bin_rad, sides[2] / self.bin_rad];
        for d0 in -1i64..=1 {
            for d1 in -1i64..=1 {
                for d2 in -1i64..=1 {
                    let q0 = (base[0].round() as i64 + d0).max(0) as u64 & 0x1F_FFFF;
                    let q1 = (base[1].round() as i64 + d1).max(0) as u64 & 0x1F_FFFF;
                    let q2 = (base[2].round() as i64 + d2).max(0) as u64 & 0x1F_FFFF;
                    let key = (q0 << 42) | (q1 << 21) | q2;
                    let lo = self.entries.partition_point(|e| e.0 < key);
                    let hi = self.entries.partition_point(|e| e.0 <= key);
                    out.extend(self.entries[lo..hi].iter().map(|e| e.1));
                }
            }
        }
        out
    }

    pub fn triangle_count(&self) -> usize {
        self.entries.len()
    }

    /// Solve for the camera attitude from image centroids (pixels relative
    /// to the principal point).
    pub fn solve(
        &self,
        centroids: &[PixelPoint],
        intr: &CameraIntrinsics,
    ) -> Result<PlateSolution, TrackerError> {
        if centroids.len() < 4 {
            return Err(TrackerError::NoSolution {
                reason: format!("need at least 4 centroids, got {}", centroids.len()),
            });
        }
        // Camera-frame unit rays of the centroids.
        let rays: Vec<Vector3<f64>> = centroids
            .iter()
            .map(|p| Vector3::new(p.x, p.y, intr.focal_length_px).normalize())
            .collect();
        let stars = self.catalog.stars();

        let mut best: Option<PlateSolution> = None;
        let n = rays.len();
        for i in 0..n {
            for j in i + 1..n {
                let dij = chord(&rays[i], &rays[j]);
                if dij > self.max_side_chord {
                    continue;
                }
                for k in j + 1..n {
                    let dik = chord(&rays[i], &rays[k]);
                    let djk = chord(&rays[j], &rays[k]);
                    if dik > self.max_side_chord || djk > self.max_side_chord {
                        continue;
                    }
                    let (sides, order) = triangle_shape(dij, dik, djk);
                    let verts = [i, j, k];
                    let shaped = [verts[order[0]], verts[order[1]], verts[order[2]]];
                    for candidate in self.lookup(&sides) {
                        let pairs: Vec<(Vector3<f64>, Vector3<f64>)> = shaped
                            .iter()
                            .zip(&candidate)
                            .map(|(&ci, &si)| (rays[ci], stars[si as usize].direction))
                            .collect();
                        let Ok(q) = wahba_solve(&pairs) else { continue };
                        if let Some(sol) = self.verify(&q, &rays, centroids, intr) {
                            let better = match &best {
                                None => true,
                                Some(b) => {
                                    sol.inliers > b.inliers
                                        || (sol.inliers == b.inliers && sol.rms_px < b.rms_px)
                                }
                            };
                            if better {
                                best = Some(sol);
                            }
                        }
                    }
                }
            }
        }
        best.ok_or_else(|| TrackerError::NoSolution {
            reason: format!("no hypothesis reached {MIN_INLIERS} inliers"),
        })
    }

    /// Project the catalog at `q`, match centroids to projected stars, and
    /// refine the attitude on the inlier set.
    fn verify(
        &self,
        q: &UnitQuat,
        rays: &[Vector3<f64>],
        centroids: &[PixelPoint],
        intr: &CameraIntrinsics,
    ) -> Option<PlateSolution> {
        let projected = stars_in_fov(q, intr, self.catalog, 4.0 * INLIER_TOL_PX);
        if projected.len() < MIN_INLIERS {
            return None;
        }
        let mut matches: Vec<(usize, u32)> = Vec::new();
        let mut pairs: Vec<(Vector3<f64>, Vector3<f64>)> = Vec::new();
        for (ci, c) in centroids.iter().enumerate() {
            let mut best: Option<(f64, &crate::catalog::ProjectedStar)> = None;
            for ps in &projected {
                let d = ps.point.distance(c);
                if d <= INLIER_TOL_PX && best.map(|(bd, _)| d < bd).unwrap_or(true) {
                    best = Some((d, ps));
                }
            }
            if let Some((_, ps)) = best {
                matches.push((ci, ps.star.id));
                pairs.push((rays[ci], ps.star.direction));
            }
        }
        if matches.len() < MIN_INLIERS {
            return None;
        }
        let refined = wahba_solve(&pairs).ok()?;
        // Residuals at the refined attitude.
        let mut sq_sum = 0.0;
        for (ray, dir) in &pairs {
            let cam = refined.rotate(dir);
            if cam.z <= 1e-9 {
                return None;
            }
            let proj = nalgebra::Vector2::new(
                intr.focal_length_px * cam.x / cam.z,
                intr.focal_length_px * cam.y / cam.z,
            );
            let obs = nalgebra::Vector2::new(
                ray.x / ray.z * intr.focal_length_px,
                ray.y / ray.z * intr.focal_length_px,
            );
            sq_sum += (proj - obs).norm_squared();
        }
        Some(PlateSolution {
            q: refined,
            matches,
            inliers: pairs.len(),
            rms_px: (sq_sum / pairs.len() as f64).sqrt(),
        })
    }
}

/// An accepted plate solution.
#[derive(Debug, Clone)]
pub struct PlateSolution {
    /// World-to-camera attitude.
    pub q: UnitQuat,
    /// (centroid index, star id) correspondences.
    pub matches: Vec<(usize, u32)>,
    pub inliers: usize,
    /// RMS pixel residual over the inliers.
    pub rms_px: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::gen_synthetic_catalog;
    use crate::geometry::{celestial_to_quat, CelestialAttitude};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn fov_centroids(
        q: &UnitQuat,
        catalog: &StarCatalog,
        intr: &CameraIntrinsics,
        noise_px: f64,
        rng: &mut StdRng,
    ) -> Vec<PixelPoint> {
        stars_in_fov(q, intr, catalog, 0.0)
            .iter()
            .map(|ps| {
                PixelPoint::new(
                    ps.point.x + noise_px * (rng.random::<f64>() * 2.0 - 1.0),
                    ps.point.y + noise_px * (rng.random::<f64>() * 2.0 - 1.0),
                )
            })
            .collect()
    }

    fn across_arcsec(q_est: &UnitQuat, q_true: &UnitQuat) -> f64 {
        let d = crate::geometry::boxminus(q_est, q_true);
        (d.x.hypot(d.y)) * crate::geometry::ARCSEC_PER_RAD
    }

    #[test]
    fn too_few_centroids_is_no_solution() {
        let catalog = gen_synthetic_catalog(9, 500, (1.0, 6.0), 0.5).unwrap();
        let intr = CameraIntrinsics::evk4_35mm();
        let solver = PlateSolver::for_camera(&catalog, &intr);
        let c = vec![
            PixelPoint::new(0.0, 0.0),
            PixelPoint::new(10.0, 0.0),
            PixelPoint::new(0.0, 10.0),
        ];
        assert!(matches!(solver.solve(&c, &intr), Err(TrackerError::NoSolution { .. })));
    }

    /// Oracle: centroids made by projecting catalog stars at a known
    /// attitude are solved back to that attitude.
    #[test]
    fn noiseless_round_trip() {
        let catalog = gen_synthetic_catalog(10, 6000, (1.0, 6.5), 0.3).unwrap();
        let intr = CameraIntrinsics::evk4_35mm();
        let solver = PlateSolver::for_camera(&catalog, &intr);
        let mut rng = StdRng::seed_from_u64(71);
        let mut solved = 0;
        let mut tried = 0;
        while tried < 20 {
            let att = CelestialAttitude::new(
                rng.random::<f64>() * 360.0,
                rng.random::<f64>() * 140.0 - 70.0,
                rng.random::<f64>() * 360.0 - 180.0,
            );
            let q = celestial_to_quat(&att);
            let centroids = fov_centroids(&q, &catalog, &intr, 0.0, &mut rng);
            if centroids.len() < 6 {
                continue;
            }
            tried += 1;
            let sol = solver.solve(&centroids, &intr).unwrap();
            assert!(
                across_arcsec(&sol.q, &q) < 5.0,
                "across error {} arcsec",
                across_arcsec(&sol.q, &q)
            );
            solved += 1;
        }
        assert_eq!(solved, tried);
    }

    /// Sanity on the verification path: a wrong attitude yields no solution
    /// when the projected stars cannot explain the centroids.
    #[test]
    fn wrong_field_rejected() {
        let catalog = gen_synthetic_catalog(11, 800, (1.0, 6.0), 1.0).unwrap();
        let intr = CameraIntrinsics::evk4_35mm();
        let solver = PlateSolver::for_camera(&catalog, &intr);
        // Random centroids that do not correspond to any star pattern.
        let mut rng = StdRng::seed_from_u64(72);
        let centroids: Vec<PixelPoint> = (0..8)
            .map(|_| {
                PixelPoint::new(
                    rng.random::<f64>() * 1000.0 - 500.0,
                    rng.random::<f64>() * 600.0 - 300.0,
                )
            })
            .collect();
        // With a sparse catalog this should nearly always fail to verify.
        match solver.solve(&centroids, &intr) {
            Ok(sol) => {
                // If it "solved", it must at least have real inliers.
                assert!(sol.inliers >= MIN_INLIERS);
            }
            Err(e) => assert!(matches!(e, TrackerError::NoSolution { .. })),
        }
    }
}
