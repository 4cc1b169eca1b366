//! Seeded synthetic two-phase microstructures.
//!
//! All geometry is integer: a pixel belongs to a disk of radius `r` centred
//! at `(cy, cx)` iff `dy² + dx² <= floor(r²)`. Together with the ChaCha
//! stream this makes output identical across platforms for a given seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Micrograph;
use crate::error::{Error, Result};

/// Relative tolerance on the realized volume fraction.
pub const VF_TOLERANCE: f64 = 0.10;

/// Disk placements are capped at this multiple of the overlap-free count
/// `target_vf * area / disk_area`, plus [`CAP_SLACK`].
pub const CAP_FACTOR: f64 = 2.0;
const CAP_SLACK: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorKind {
    /// Overlapping disks with uniformly random centres.
    BooleanDisks,
    /// Left and right halves are independent boolean-disk fields.
    TwoRegion { region_vfs: (f64, f64) },
    /// Matérn-style clusters: each parent point spawns `offspring` disks whose
    /// centres fall uniformly within `cluster_radius` of the parent.
    Clustered { offspring: u32, cluster_radius: f64 },
}

impl GeneratorKind {
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorKind::BooleanDisks => "boolean-disks",
            GeneratorKind::TwoRegion { .. } => "two-region",
            GeneratorKind::Clustered { .. } => "clustered",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    /// Target particle fraction; ignored by [`GeneratorKind::TwoRegion`],
    /// which uses its per-half fractions instead.
    pub target_vf: f64,
    /// Disk radius in pixels.
    pub particle_radius: f64,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn boolean_disks(target_vf: f64, particle_radius: f64, seed: u64) -> Self {
        GeneratorSpec {
            kind: GeneratorKind::BooleanDisks,
            target_vf,
            particle_radius,
            seed,
        }
    }

    pub fn two_region(left_vf: f64, right_vf: f64, particle_radius: f64, seed: u64) -> Self {
        GeneratorSpec {
            kind: GeneratorKind::TwoRegion {
                region_vfs: (left_vf, right_vf),
            },
            target_vf: 0.5 * (left_vf + right_vf),
            particle_radius,
            seed,
        }
    }

    pub fn clustered(
        target_vf: f64,
        particle_radius: f64,
        offspring: u32,
        cluster_radius: f64,
        seed: u64,
    ) -> Self {
        GeneratorSpec {
            kind: GeneratorKind::Clustered {
                offspring,
                cluster_radius,
            },
            target_vf,
            particle_radius,
            seed,
        }
    }

    fn validate(&self, height: usize, width: usize) -> Result<()> {
        let fraction_ok = |f: f64| f > 0.0 && f < 1.0;
        if !fraction_ok(self.target_vf) {
            return Err(Error::InvalidInput(format!(
                "target volume fraction must lie in (0, 1), got {}",
                self.target_vf
            )));
        }
        if !(self.particle_radius.is_finite() && self.particle_radius > 0.0) {
            return Err(Error::InvalidInput(format!(
                "particle radius must be positive, got {}",
                self.particle_radius
            )));
        }
        let min_side = 4.0 * self.particle_radius;
        if (height.min(width) as f64) < min_side {
            return Err(Error::InvalidInput(format!(
                "{height}x{width} is too small for radius {}: each side must be >= {min_side}",
                self.particle_radius
            )));
        }
        match self.kind {
            GeneratorKind::BooleanDisks => {}
            GeneratorKind::TwoRegion { region_vfs: (a, b) } => {
                if !fraction_ok(a) || !fraction_ok(b) {
                    return Err(Error::InvalidInput(format!(
                        "region volume fractions must lie in (0, 1), got ({a}, {b})"
                    )));
                }
                if width < 2 {
                    return Err(Error::InvalidInput("two-region needs width >= 2".into()));
                }
            }
            GeneratorKind::Clustered {
                offspring,
                cluster_radius,
            } => {
                if offspring == 0 {
                    return Err(Error::InvalidInput("offspring count must be >= 1".into()));
                }
                if !(cluster_radius.is_finite() && cluster_radius > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "cluster radius must be positive, got {cluster_radius}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Generates a `height x width` micrograph at 1 µm/pixel.
pub fn generate(spec: &GeneratorSpec, height: usize, width: usize) -> Result<Micrograph> {
    spec.validate(height, width)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let disk = Disk::new(spec.particle_radius);
    let phases = match spec.kind {
        GeneratorKind::BooleanDisks => {
            let mut canvas = Canvas::new(height, width);
            fill_boolean(&mut canvas, &disk, spec.target_vf, &mut rng)?;
            canvas.cells
        }
        GeneratorKind::TwoRegion { region_vfs } => {
            let left_w = width / 2;
            let mut left = Canvas::new(height, left_w);
            let mut right = Canvas::new(height, width - left_w);
            fill_boolean(&mut left, &disk, region_vfs.0, &mut rng)
                .map_err(|e| region_error("left", e))?;
            fill_boolean(&mut right, &disk, region_vfs.1, &mut rng)
                .map_err(|e| region_error("right", e))?;
            let mut cells = Vec::with_capacity(height * width);
            for r in 0..height {
                cells.extend_from_slice(left.row(r));
                cells.extend_from_slice(right.row(r));
            }
            cells
        }
        GeneratorKind::Clustered {
            offspring,
            cluster_radius,
        } => {
            let mut canvas = Canvas::new(height, width);
            fill_clustered(
                &mut canvas,
                &disk,
                spec.target_vf,
                offspring,
                cluster_radius,
                &mut rng,
            )?;
            canvas.cells
        }
    };
    Micrograph::new(height, width, phases, 1.0)
}

fn region_error(which: &str, e: Error) -> Error {
    match e {
        Error::Generation(msg) => Error::Generation(format!("{which} region: {msg}")),
        other => other,
    }
}

struct Disk {
    reach: i64,
    radius_sq: i64,
    area: usize,
}

impl Disk {
    fn new(radius: f64) -> Self {
        let radius_sq = (radius * radius).floor() as i64;
        let reach = (radius_sq as f64).sqrt().floor() as i64;
        let mut area = 0;
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                if dy * dy + dx * dx <= radius_sq {
                    area += 1;
                }
            }
        }
        Disk {
            reach,
            radius_sq,
            area,
        }
    }
}

struct Canvas {
    height: usize,
    width: usize,
    cells: Vec<u8>,
    filled: usize,
}

impl Canvas {
    fn new(height: usize, width: usize) -> Self {
        Canvas {
            height,
            width,
            cells: vec![0; height * width],
            filled: 0,
        }
    }

    fn row(&self, r: usize) -> &[u8] {
        &self.cells[r * self.width..(r + 1) * self.width]
    }

    fn fraction(&self) -> f64 {
        self.filled as f64 / self.cells.len() as f64
    }

    fn paint(&mut self, disk: &Disk, cy: i64, cx: i64) {
        let (h, w) = (self.height as i64, self.width as i64);
        for y in (cy - disk.reach).max(0)..=(cy + disk.reach).min(h - 1) {
            let dy = y - cy;
            let rem = disk.radius_sq - dy * dy;
            for x in (cx - disk.reach).max(0)..=(cx + disk.reach).min(w - 1) {
                let dx = x - cx;
                if dx * dx <= rem {
                    let cell = &mut self.cells[(y * w + x) as usize];
                    if *cell == 0 {
                        *cell = 1;
                        self.filled += 1;
                    }
                }
            }
        }
    }

    fn placement_cap(&self, disk: &Disk, target_vf: f64) -> usize {
        let free_count = target_vf * self.cells.len() as f64 / disk.area as f64;
        (CAP_FACTOR * free_count).ceil() as usize + CAP_SLACK
    }

    /// Returns `Ok(true)` once the target is reached inside the tolerance band.
    fn check_target(&self, target_vf: f64) -> Result<bool> {
        let vf = self.fraction();
        if vf < target_vf {
            return Ok(false);
        }
        if vf > target_vf * (1.0 + VF_TOLERANCE) {
            return Err(Error::Generation(format!(
                "realized volume fraction {vf:.4} overshoots target {target_vf} by more than \
                 {:.0}%; use a smaller particle radius or a larger image",
                VF_TOLERANCE * 100.0
            )));
        }
        Ok(true)
    }
}

fn cap_error(cap: usize, vf: f64, target_vf: f64) -> Error {
    Error::Generation(format!(
        "iteration cap exceeded: {cap} disk placements reached volume fraction {vf:.4}, \
         short of target {target_vf}; the target is unreachable at this particle radius"
    ))
}

fn fill_boolean(canvas: &mut Canvas, disk: &Disk, target_vf: f64, rng: &mut ChaCha8Rng) -> Result<()> {
    let cap = canvas.placement_cap(disk, target_vf);
    for _ in 0..cap {
        let cy = rng.random_range(0..canvas.height as i64);
        let cx = rng.random_range(0..canvas.width as i64);
        canvas.paint(disk, cy, cx);
        if canvas.check_target(target_vf)? {
            return Ok(());
        }
    }
    Err(cap_error(cap, canvas.fraction(), target_vf))
}

fn fill_clustered(
    canvas: &mut Canvas,
    disk: &Disk,
    target_vf: f64,
    offspring: u32,
    cluster_radius: f64,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let cap = canvas.placement_cap(disk, target_vf);
    let spread = Disk::new(cluster_radius);
    let mut placed = 0;
    while placed < cap {
        let py = rng.random_range(0..canvas.height as i64);
        let px = rng.random_range(0..canvas.width as i64);
        for _ in 0..offspring {
            let (dy, dx) = loop {
                let dy = rng.random_range(-spread.reach..=spread.reach);
                let dx = rng.random_range(-spread.reach..=spread.reach);
                if dy * dy + dx * dx <= spread.radius_sq {
                    break (dy, dx);
                }
            };
            canvas.paint(disk, py + dy, px + dx);
            placed += 1;
            if canvas.check_target(target_vf)? {
                return Ok(());
            }
            if placed >= cap {
                break;
            }
        }
    }
    Err(cap_error(cap, canvas.fraction(), target_vf))
}
