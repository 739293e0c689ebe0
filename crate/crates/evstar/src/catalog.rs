//! Star catalog: representation, CSV I/O, field-of-view queries, and
//! synthetic catalog generation.
//!
//! The on-disk format is a UTF-8 CSV with header `id,ra_deg,dec_deg,mag`,
//! LF line endings, and `#` comment lines.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{
    project_star, radec_to_unit, unit_to_radec, CameraIntrinsics, PixelPoint, UnitQuat,
};

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("catalog contains no stars at or below the magnitude cutoff")]
    EmptyCatalog,
    #[error("could not place {placed} of {requested} stars with {min_separation_deg}° separation")]
    PackingFailure { placed: usize, requested: usize, min_separation_deg: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One catalog entry: a unit direction in the celestial frame plus apparent
/// magnitude (reverse-logarithmic brightness; smaller is brighter).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatalogStar {
    pub id: u32,
    pub direction: Vector3<f64>,
    pub magnitude: f64,
}

impl CatalogStar {
    pub fn new(id: u32, ra_deg: f64, dec_deg: f64, magnitude: f64) -> Self {
        CatalogStar { id, direction: radec_to_unit(ra_deg, dec_deg), magnitude }
    }
}

/// Immutable star catalog with a magnitude cutoff (default 7.0).
#[derive(Debug, Clone)]
pub struct StarCatalog {
    stars: Vec<CatalogStar>,
    cutoff: f64,
}

pub const DEFAULT_MAG_CUTOFF: f64 = 7.0;

impl StarCatalog {
    /// Build from explicit stars, dropping entries above the cutoff. An
    /// empty catalog is allowed here (unlike [`load_catalog`]).
    pub fn from_stars(stars: Vec<CatalogStar>, cutoff: f64) -> Self {
        let stars: Vec<_> = stars.into_iter().filter(|s| s.magnitude <= cutoff).collect();
        StarCatalog { stars, cutoff }
    }

    pub fn stars(&self) -> &[CatalogStar] {
        &self.stars
    }

    pub fn len(&self) -> usize {
        self.stars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stars.is_empty()
    }

    pub fn magnitude_cutoff(&self) -> f64 {
        self.cutoff
    }
}

/// A catalog star projected onto the image plane at some attitude.
#[derive(Debug, Clone, Copy)]
pub struct ProjectedStar {
    pub star: CatalogStar,
    pub point: PixelPoint,
}

/// Load a catalog CSV, dropping rows with magnitude above the cutoff.
/// Returns the catalog and the dropped-row count.
pub fn load_catalog(path: &Path, cutoff: f64) -> Result<(StarCatalog, usize), CatalogError> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut stars = Vec::new();
    let mut dropped = 0usize;
    let mut header_seen = false;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !header_seen {
            if trimmed != "id,ra_deg,dec_deg,mag" {
                return Err(CatalogError::Parse {
                    line: line_no,
                    message: format!("expected header `id,ra_deg,dec_deg,mag`, got `{trimmed}`"),
                });
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 4 {
            return Err(CatalogError::Parse {
                line: line_no,
                message: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let parse = |i: usize, name: &str| -> Result<f64, CatalogError> {
            fields[i].trim().parse::<f64>().map_err(|e| CatalogError::Parse {
                line: line_no,
                message: format!("bad {name} field `{}`: {e}", fields[i]),
            })
        };
        let id = fields[0].trim().parse::<u32>().map_err(|e| CatalogError::Parse {
            line: line_no,
            message: format!("bad id field `{}`: {e}", fields[0]),
        })?;
        let ra = parse(1, "ra_deg")?;
        let dec = parse(2, "dec_deg")?;
        let mag = parse(3, "mag")?;
        if !(-90.0..=90.0).contains(&dec) {
            return Err(CatalogError::Parse {
                line: line_no,
                message: format!("dec {dec} out of [-90, 90]"),
            });
        }
        if mag > cutoff {
            dropped += 1;
            continue;
        }
        stars.push(CatalogStar::new(id, ra, dec, mag));
    }
    if stars.is_empty() {
        return Err(CatalogError::EmptyCatalog);
    }
    Ok((StarCatalog { stars, cutoff }, dropped))
}

/// Write a catalog CSV (12 decimals on angles so directions round-trip
/// within 1e-9).
pub fn save_catalog(catalog: &StarCatalog, path: &Path) -> Result<(), CatalogError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "id,ra_deg,dec_deg,mag")?;
    for s in &catalog.stars {
        let (ra, dec) = unit_to_radec(&s.direction);
        writeln!(out, "{},{:.12},{:.12},{:.8}", s.id, ra, dec, s.magnitude)?;
    }
    out.flush()?;
    Ok(())
}

/// All catalog stars whose projection falls inside the image rectangle
/// expanded by `margin_px`, with their pixel points.
///
/// A dot-product cone prefilter narrows the candidates before projecting;
/// the result is defined by the brute-force predicate.
pub fn stars_in_fov(
    q: &UnitQuat,
    intr: &CameraIntrinsics,
    catalog: &StarCatalog,
    margin_px: f64,
) -> Vec<ProjectedStar> {
    let boresight_world = q.inverse().rotate(&Vector3::z());
    let margin_rad = (margin_px.max(0.0) / intr.focal_length_px).atan();
    let cos_cone = (intr.half_diagonal_rad() + margin_rad).cos();
    let mut out = Vec::new();
    for star in &catalog.stars {
        if star.direction.dot(&boresight_world) < cos_cone {
            continue;
        }
        if let Ok((p, _)) = project_star(q, &star.direction, intr) {
            if in_expanded_frame(&p, intr, margin_px) {
                out.push(ProjectedStar { star: *star, point: p });
            }
        }
    }
    out
}

/// The frame-rectangle predicate used by [`stars_in_fov`].
pub fn in_expanded_frame(p: &PixelPoint, intr: &CameraIntrinsics, margin_px: f64) -> bool {
    let xa = p.x + intr.principal_point.x;
    let ya = p.y + intr.principal_point.y;
    xa >= -margin_px
        && xa < intr.width as f64 + margin_px
        && ya >= -margin_px
        && ya < intr.height as f64 + margin_px
}

/// The projected star nearest to `p` if its pixel distance is ≤ `r`.
/// Ties break toward the lower star id.
pub fn nearest_projected_star<'a>(
    p: &PixelPoint,
    projections: &'a [ProjectedStar],
    r: f64,
) -> Option<&'a ProjectedStar> {
    assert!(r > 0.0, "search radius must be positive");
    let mut best: Option<(&ProjectedStar, f64)> = None;
    for ps in projections {
        let d = ps.point.distance(p);
        if d > r {
            continue;
        }
        let better = match best {
            None => true,
            Some((b, bd)) => d < bd || (d == bd && ps.star.id < b.star.id),
        };
        if better {
            best = Some((ps, d));
        }
    }
    best.map(|(ps, _)| ps)
}

/// Deterministic synthetic catalog: directions drawn uniformly on the sphere
/// subject to a minimum pairwise separation, magnitudes uniform in
/// `mag_range`. Ids are `1..=n` in generation order.
pub fn gen_synthetic_catalog(
    seed: u64,
    n_stars: usize,
    mag_range: (f64, f64),
    min_separation_deg: f64,
) -> Result<StarCatalog, CatalogError> {
    assert!(n_stars > 0, "n_stars must be positive");
    let (mag_lo, mag_hi) = mag_range;
    assert!(mag_lo <= mag_hi, "magnitude range must be ordered");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cos_min = min_separation_deg.to_radians().cos();
    let max_attempts = 10_000usize.saturating_mul(n_stars);
    let mut dirs: Vec<Vector3<f64>> = Vec::with_capacity(n_stars);
    let mut attempts = 0usize;
    while dirs.len() < n_stars {
        if attempts >= max_attempts {
            return Err(CatalogError::PackingFailure {
                placed: dirs.len(),
                requested: n_stars,
                min_separation_deg,
            });
        }
        attempts += 1;
        let z: f64 = rng.random::<f64>() * 2.0 - 1.0;
        let phi: f64 = rng.random::<f64>() * std::f64::consts::TAU;
        let r = (1.0 - z * z).max(0.0).sqrt();
        let d = Vector3::new(r * phi.cos(), r * phi.sin(), z);
        if min_separation_deg > 0.0 && dirs.iter().any(|e| e.dot(&d) > cos_min) {
            continue;
        }
        dirs.push(d);
    }
    let stars = dirs
        .into_iter()
        .enumerate()
        .map(|(i, direction)| CatalogStar {
            id: i as u32 + 1,
            direction,
            magnitude: mag_lo + rng.random::<f64>() * (mag_hi - mag_lo),
        })
        .collect();
    Ok(StarCatalog { stars, cutoff: DEFAULT_MAG_CUTOFF.max(mag_hi) })
}
