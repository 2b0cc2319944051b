//! Orthographic z-buffer rasterizer for silhouette and color renders.
//!
//! The camera orbits the origin (azimuth about the y axis, then
//! elevation) and projects orthographically onto a square window of
//! half-width √3, which contains `[-1,1]³` from every direction.
//! Foreground is decided per pixel center; depth keeps the surface
//! nearest the camera.

use crate::dmtet::TriMesh;
use crate::harness::image::{GrayImage, RgbImage};
use crate::{Error, Result};

/// Half-width of the projection window; √3 covers the unit cube's
/// diagonal so nothing ever clips.
pub const VIEW_HALF_WIDTH: f64 = 1.732_050_807_568_877_2;

/// Pixel value used for silhouette foreground.
pub const FOREGROUND: u8 = 255;

struct Basis {
    right: [f64; 3],
    up: [f64; 3],
    toward_camera: [f64; 3],
}

fn view_basis(azimuth_deg: f64, elevation_deg: f64) -> Basis {
    let az = azimuth_deg.to_radians();
    let el = elevation_deg.to_radians();
    let toward_camera = [el.cos() * az.cos(), el.sin(), el.cos() * az.sin()];
    let right = [-az.sin(), 0.0, az.cos()];
    // right × toward_camera
    let up = [
        right[1] * toward_camera[2] - right[2] * toward_camera[1],
        right[2] * toward_camera[0] - right[0] * toward_camera[2],
        right[0] * toward_camera[1] - right[1] * toward_camera[0],
    ];
    Basis { right, up, toward_camera }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Signed doubled area of the screen triangle (a,b,c).
fn edge(ax: f64, ay: f64, bx: f64, by: f64, cx: f64, cy: f64) -> f64 {
    (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
}

struct Projected {
    u: Vec<f64>,
    v: Vec<f64>,
    depth: Vec<f64>,
}

fn project(mesh: &TriMesh, azimuth_deg: f64, elevation_deg: f64) -> Projected {
    let basis = view_basis(azimuth_deg, elevation_deg);
    let mut u = Vec::with_capacity(mesh.vertex_count());
    let mut v = Vec::with_capacity(mesh.vertex_count());
    let mut depth = Vec::with_capacity(mesh.vertex_count());
    for p in &mesh.vertices {
        u.push(dot(*p, basis.right));
        v.push(dot(*p, basis.up));
        depth.push(dot(*p, basis.toward_camera));
    }
    Projected { u, v, depth }
}

/// Column/row pixel-center coordinate, symmetric about the image
/// center so index `k` and `count-1-k` negate exactly.
fn pixel_center(k: usize, count: usize, step: f64) -> f64 {
    (k as f64 - (count as f64 - 1.0) / 2.0) * step
}

/// Rasterizes triangles, calling `shade(pixel_x, pixel_y, weights, t)`
/// for every covered pixel that wins the depth test.
fn rasterize<F: FnMut(usize, usize, [f64; 3], usize)>(
    mesh: &TriMesh,
    azimuth_deg: f64,
    elevation_deg: f64,
    resolution: usize,
    mut shade: F,
) {
    let proj = project(mesh, azimuth_deg, elevation_deg);
    let step = 2.0 * VIEW_HALF_WIDTH / resolution as f64;
    let mut zbuf = vec![f64::NEG_INFINITY; resolution * resolution];
    let to_col = |u: f64| (u / step + (resolution as f64 - 1.0) / 2.0).round();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let [ia, ib, ic] = *tri;
        let (ua, va) = (proj.u[ia], proj.v[ia]);
        let (ub, vb) = (proj.u[ib], proj.v[ib]);
        let (uc, vc) = (proj.u[ic], proj.v[ic]);
        let area = edge(ua, va, ub, vb, uc, vc);
        if area == 0.0 {
            continue;
        }
        let clamp = |c: f64| c.max(0.0).min(resolution as f64 - 1.0) as usize;
        let col_lo = clamp(to_col(ua.min(ub).min(uc)) - 1.0);
        let col_hi = clamp(to_col(ua.max(ub).max(uc)) + 1.0);
        // rows grow downward: high v is a low row index
        let row_lo = clamp(to_col(-(va.max(vb).max(vc))) - 1.0);
        let row_hi = clamp(to_col(-(va.min(vb).min(vc))) + 1.0);
        for row in row_lo..=row_hi {
            let pv = -pixel_center(row, resolution, step);
            for col in col_lo..=col_hi {
                let pu = pixel_center(col, resolution, step);
                let e_bc = edge(ub, vb, uc, vc, pu, pv);
                let e_ca = edge(uc, vc, ua, va, pu, pv);
                let e_ab = edge(ua, va, ub, vb, pu, pv);
                let all_nonneg = e_bc >= 0.0 && e_ca >= 0.0 && e_ab >= 0.0;
                let all_nonpos = e_bc <= 0.0 && e_ca <= 0.0 && e_ab <= 0.0;
                if !(all_nonneg || all_nonpos) {
                    continue;
                }
                let w = [e_bc / area, e_ca / area, e_ab / area];
                let depth =
                    w[0] * proj.depth[ia] + w[1] * proj.depth[ib] + w[2] * proj.depth[ic];
                let cell = &mut zbuf[row * resolution + col];
                if depth > *cell {
                    *cell = depth;
                    shade(col, row, w, t);
                }
            }
        }
    }
}

/// Renders the mesh as a foreground/background mask. An empty mesh
/// gives an all-background image.
pub fn render_silhouette(
    mesh: &TriMesh,
    azimuth_deg: f64,
    elevation_deg: f64,
    resolution: usize,
) -> Result<GrayImage> {
    mesh.validate()?;
    let mut img = GrayImage::new(resolution, resolution)?;
    rasterize(mesh, azimuth_deg, elevation_deg, resolution, |x, y, _, _| {
        img.set(x, y, FOREGROUND);
    });
    Ok(img)
}

/// Renders per-vertex colors with depth testing; the mesh must carry
/// colors. Background stays black.
pub fn render_shaded(
    mesh: &TriMesh,
    azimuth_deg: f64,
    elevation_deg: f64,
    resolution: usize,
) -> Result<RgbImage> {
    mesh.validate()?;
    let colors = mesh
        .colors
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("mesh has no vertex colors to shade".into()))?;
    let mut img = RgbImage::new(resolution, resolution)?;
    rasterize(mesh, azimuth_deg, elevation_deg, resolution, |x, y, w, t| {
        let [ia, ib, ic] = mesh.triangles[t];
        let mut px = [0u8; 3];
        for k in 0..3 {
            let c = w[0] * colors[ia][k] + w[1] * colors[ib][k] + w[2] * colors[ic][k];
            px[k] = (c.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
        img.set(x, y, px);
    });
    Ok(img)
}
