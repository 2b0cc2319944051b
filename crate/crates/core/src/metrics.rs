//! Point-cloud distances and distribution metrics over sets of shapes.
//!
//! Chamfer here is the squared symmetric form: mean over each cloud of
//! the minimum squared distance into the other, summed both ways.
//! Coverage and minimum matching distance compare a set of generated
//! clouds against a reference set using that chamfer.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dmtet::TriMesh;
use crate::{Error, Result};

/// A non-empty set of finite 3D points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("point cloud may not be empty".into()));
        }
        if let Some(p) = points.iter().find(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidInput(format!("non-finite point {p:?}")));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false // enforced non-empty at construction
    }

    /// Writes one `x y z` line per point.
    pub fn write_text<W: Write>(&self, w: &mut W) -> Result<()> {
        for p in &self.points {
            writeln!(w, "{} {} {}", p[0], p[1], p[2])?;
        }
        Ok(())
    }

    /// Parses the format written by [`PointCloud::write_text`]; blank
    /// lines are ignored.
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut points = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let nums: Vec<f64> = line
                .split_whitespace()
                .map(|p| p.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| {
                    Error::Format(format!("line {}: bad point: {line:?}", lineno + 1))
                })?;
            if nums.len() != 3 {
                return Err(Error::Format(format!(
                    "line {}: expected 3 numbers, got {}",
                    lineno + 1,
                    nums.len()
                )));
            }
            points.push([nums[0], nums[1], nums[2]]);
        }
        Self::new(points)
    }
}

fn dist_sq(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

fn mean_min_sq(from: &PointCloud, to: &PointCloud) -> f64 {
    let total: f64 = from
        .points()
        .iter()
        .map(|&p| {
            to.points()
                .iter()
                .map(|&q| dist_sq(p, q))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / from.len() as f64
}

/// Squared symmetric chamfer distance between two clouds.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> f64 {
    mean_min_sq(a, b) + mean_min_sq(b, a)
}

/// Fraction of reference clouds that are the chamfer-nearest neighbor
/// of at least one generated cloud. Ties pick the lowest reference
/// index, so the result is deterministic.
pub fn coverage(generated: &[PointCloud], reference: &[PointCloud]) -> Result<f64> {
    if generated.is_empty() || reference.is_empty() {
        return Err(Error::InvalidInput("coverage needs non-empty cloud sets".into()));
    }
    let mut matched = HashSet::new();
    for gen in generated {
        let mut best = (f64::INFINITY, 0usize);
        for (i, r) in reference.iter().enumerate() {
            let d = chamfer(gen, r);
            if d < best.0 {
                best = (d, i);
            }
        }
        matched.insert(best.1);
    }
    Ok(matched.len() as f64 / reference.len() as f64)
}

/// Minimum matching distance: mean over reference clouds of the chamfer
/// to the nearest generated cloud.
pub fn mmd(generated: &[PointCloud], reference: &[PointCloud]) -> Result<f64> {
    if generated.is_empty() || reference.is_empty() {
        return Err(Error::InvalidInput("mmd needs non-empty cloud sets".into()));
    }
    let total: f64 = reference
        .iter()
        .map(|r| {
            generated
                .iter()
                .map(|g| chamfer(g, r))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    Ok(total / reference.len() as f64)
}

fn triangle_area(mesh: &TriMesh, t: usize) -> f64 {
    let n = mesh.triangle_normal(t);
    0.5 * (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt()
}

/// Draws `n` points uniformly over the mesh surface: triangles are
/// picked by area, positions by the square-root barycentric trick.
/// The same seed always produces the same cloud.
pub fn sample_mesh_surface(mesh: &TriMesh, n: usize, seed: u64) -> Result<PointCloud> {
    mesh.validate()?;
    if n == 0 {
        return Err(Error::InvalidInput("cannot sample 0 surface points".into()));
    }
    let mut cumulative = Vec::with_capacity(mesh.triangle_count());
    let mut total = 0.0;
    for t in 0..mesh.triangle_count() {
        total += triangle_area(mesh, t);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::InvalidInput("mesh has no surface area to sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let u = rng.random_range(0.0..total);
        let t = cumulative.partition_point(|&c| c <= u).min(mesh.triangle_count() - 1);
        let [ia, ib, ic] = mesh.triangles[t];
        let (a, b, c) = (mesh.vertices[ia], mesh.vertices[ib], mesh.vertices[ic]);
        let su = rng.random_range(0.0..1.0f64).sqrt();
        let v = rng.random_range(0.0..1.0f64);
        let (wa, wb, wc) = (1.0 - su, su * (1.0 - v), su * v);
        points.push([
            wa * a[0] + wb * b[0] + wc * c[0],
            wa * a[1] + wb * b[1] + wc * c[1],
            wa * a[2] + wb * b[2] + wc * c[2],
        ]);
    }
    PointCloud::new(points)
}
