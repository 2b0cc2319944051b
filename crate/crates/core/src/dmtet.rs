//! Deformable tetrahedral grid over `[-1,1]³` and marching-tetrahedra
//! surface extraction.
//!
//! Each lattice cube splits into six path tetrahedra sharing a cube
//! diagonal, all positively oriented and conforming across cube
//! boundaries; cubes below `z = 0` use the z-mirrored split so that the
//! tessellation itself is symmetric under z-reflection. Vertices carry
//! an SDF value and a tanh-bounded deformation that is scaled by a
//! fraction of the cell size small enough that no tetrahedron can
//! invert (see [`DEFORM_CAP_FACTOR`]).

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::field::MlpDecoder;
use crate::triplane::{GeometryTriplane, Point3};
use crate::vsa::VsaModule;
use crate::{Error, Result};

/// Deformation cap as a fraction of the cell size.
///
/// A displaced vertex moves at most this fraction of a cell per axis.
/// The often-quoted 0.45 ("stay inside the half cell") is NOT safe for a
/// six-tet cube split: corner-displacement enumeration (exact, since the
/// tet volume is affine in each vertex) exhibits inverted tets from a
/// factor of 1/6 upward. 0.15 keeps every achievable tet strictly
/// positive with margin; the unit test enumerates both bounds.
pub const DEFORM_CAP_FACTOR: f64 = 0.15;

/// The six axis orders whose prefix-sum paths tile a cube with tets.
const AXIS_ORDERS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

fn permutation_parity_3(p: &[usize; 3]) -> i32 {
    let mut inversions = 0;
    for a in 0..3 {
        for b in a + 1..3 {
            if p[a] > p[b] {
                inversions += 1;
            }
        }
    }
    if inversions % 2 == 0 { 1 } else { -1 }
}

/// Local vertex offsets (in cube units) of the six path tets, already
/// reordered to positive orientation.
fn reference_tets() -> [[[f64; 3]; 4]; 6] {
    let mut out = [[[0.0; 3]; 4]; 6];
    for (t, order) in AXIS_ORDERS.iter().enumerate() {
        let mut corners = [[0.0; 3]; 4];
        let mut at = [0.0; 3];
        for (step, &axis) in order.iter().enumerate() {
            at[axis] += 1.0;
            corners[step + 1] = at;
        }
        if permutation_parity_3(order) < 0 {
            corners.swap(1, 2);
        }
        out[t] = corners;
    }
    out
}

/// The reference split reflected through the cube's z midplane, with a
/// vertex swap restoring positive orientation. Used for cubes below
/// `z = 0` so the whole tessellation is symmetric under z-reflection
/// (a single diagonal direction everywhere would not be). Both splits
/// place the same xy-diagonal on their top and bottom faces, so stacking
/// them keeps horizontal interfaces conforming.
fn reference_tets_mirrored() -> [[[f64; 3]; 4]; 6] {
    let mut out = reference_tets();
    for tet in &mut out {
        for corner in tet.iter_mut() {
            corner[2] = 1.0 - corner[2];
        }
        tet.swap(1, 2);
    }
    out
}

/// Regular tetrahedral lattice over `[-1,1]³` with optional per-vertex
/// SDF and deformation.
#[derive(Debug, Clone)]
pub struct TetGrid {
    resolution: usize,
    vertices: Vec<[f64; 3]>,
    tets: Vec<[usize; 4]>,
    sdf: Option<Vec<f64>>,
    deform: Option<Vec<[f64; 3]>>,
}

impl TetGrid {
    /// Builds the `(R+1)³`-vertex lattice and its `6R³` tets.
    pub fn new(resolution: usize) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::InvalidInput("tet grid resolution must be >= 1".into()));
        }
        let r = resolution;
        let n = r + 1;
        let coord = |i: usize| -1.0 + 2.0 * i as f64 / r as f64;
        let mut vertices = Vec::with_capacity(n * n * n);
        for ix in 0..n {
            for iy in 0..n {
                for iz in 0..n {
                    vertices.push([coord(ix), coord(iy), coord(iz)]);
                }
            }
        }
        let vid = |ix: usize, iy: usize, iz: usize| (ix * n + iy) * n + iz;
        let refs = reference_tets();
        let refs_lower = reference_tets_mirrored();
        let mut tets = Vec::with_capacity(6 * r * r * r);
        for cx in 0..r {
            for cy in 0..r {
                for cz in 0..r {
                    // cube center below z = 0 -> mirrored split
                    let split = if 2 * cz + 1 < r { &refs_lower } else { &refs };
                    for tet in split {
                        let mut ids = [0usize; 4];
                        for (slot, corner) in tet.iter().enumerate() {
                            ids[slot] = vid(
                                cx + corner[0] as usize,
                                cy + corner[1] as usize,
                                cz + corner[2] as usize,
                            );
                        }
                        tets.push(ids);
                    }
                }
            }
        }
        Ok(Self { resolution, vertices, tets, sdf: None, deform: None })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    pub fn sdf(&self) -> Option<&[f64]> {
        self.sdf.as_deref()
    }

    /// Lattice spacing along one axis.
    pub fn cell_size(&self) -> f64 {
        2.0 / self.resolution as f64
    }

    /// World-space displacement applied to a unit deformation component.
    pub fn deform_scale(&self) -> f64 {
        DEFORM_CAP_FACTOR * self.cell_size()
    }

    /// Fills per-vertex SDF and deformation by querying the (optionally
    /// attended) triplane at every lattice vertex and decoding.
    pub fn populate(
        &mut self,
        g: &GeometryTriplane,
        vsa: Option<&VsaModule>,
        decoder: &MlpDecoder,
    ) -> Result<()> {
        let attended_storage;
        let field = match vsa {
            Some(module) => {
                let (attended, _) = module.attend(g)?;
                attended_storage = attended;
                &attended_storage
            }
            None => g,
        };
        let mut sdf = Vec::with_capacity(self.vertices.len());
        let mut deform = Vec::with_capacity(self.vertices.len());
        for v in &self.vertices {
            let feature = field.query(Point3::new(v[0], v[1], v[2]))?;
            let (s, d) = decoder.decode_sdf_deform(&feature)?;
            sdf.push(s);
            deform.push(d);
        }
        self.sdf = Some(sdf);
        self.deform = Some(deform);
        Ok(())
    }

    /// Fills the SDF from an analytic field, with zero deformation.
    pub fn populate_analytic<F: Fn([f64; 3]) -> f64>(&mut self, f: F) {
        self.sdf = Some(self.vertices.iter().map(|&v| f(v)).collect());
        self.deform = Some(vec![[0.0; 3]; self.vertices.len()]);
    }

    /// Installs raw per-vertex values; deformation components must lie
    /// in `[-1,1]` (they are scaled by [`TetGrid::deform_scale`]).
    pub fn populate_raw(&mut self, sdf: Vec<f64>, deform: Vec<[f64; 3]>) -> Result<()> {
        if sdf.len() != self.vertices.len() || deform.len() != self.vertices.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} sdf / {} deform values for {} vertices",
                sdf.len(),
                deform.len(),
                self.vertices.len()
            )));
        }
        if let Some(v) = sdf.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite sdf value {v}")));
        }
        for d in &deform {
            if d.iter().any(|c| !(-1.0..=1.0).contains(c)) {
                return Err(Error::InvalidInput(format!(
                    "deformation components must lie in [-1,1], got {d:?}"
                )));
            }
        }
        self.sdf = Some(sdf);
        self.deform = Some(deform);
        Ok(())
    }

    /// Lattice positions displaced by the scaled deformation.
    pub fn deformed_positions(&self) -> Result<Vec<[f64; 3]>> {
        let deform = self
            .deform
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("grid has no deformation values".into()))?;
        let s = self.deform_scale();
        Ok(self
            .vertices
            .iter()
            .zip(deform)
            .map(|(v, d)| [v[0] + s * d[0], v[1] + s * d[1], v[2] + s * d[2]])
            .collect())
    }

    /// Extracts the SDF zero level set as a triangle mesh.
    ///
    /// Vertices with SDF exactly 0 count as +1e-12 (deterministic tie
    /// rule). Surface vertices sit on sign-crossing edges of the
    /// deformed lattice, deduplicated per edge so shared tet faces
    /// produce shared mesh edges; triangle winding makes normals point
    /// toward positive SDF.
    pub fn marching_tets(&self) -> Result<TriMesh> {
        let sdf = self
            .sdf
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("grid sdf is not populated".into()))?;
        let positions = self.deformed_positions()?;
        let eff = |i: usize| {
            let v = sdf[i];
            if v == 0.0 { 1e-12 } else { v }
        };

        let mut mesh = TriMesh::default();
        let mut edge_vertex: HashMap<(usize, usize), usize> = HashMap::new();
        let mut vertex_on_edge = |a: usize, b: usize, mesh: &mut TriMesh| -> usize {
            let key = (a.min(b), a.max(b));
            if let Some(&idx) = edge_vertex.get(&key) {
                return idx;
            }
            // always interpolate from the lower-index endpoint so shared
            // vertices are bit-identical across tets
            let (sa, sb) = (eff(key.0), eff(key.1));
            let t = sa / (sa - sb);
            let (pa, pb) = (positions[key.0], positions[key.1]);
            let p = [
                pa[0] + t * (pb[0] - pa[0]),
                pa[1] + t * (pb[1] - pa[1]),
                pa[2] + t * (pb[2] - pa[2]),
            ];
            let idx = mesh.vertices.len();
            mesh.vertices.push(p);
            edge_vertex.insert(key, idx);
            idx
        };

        for tet in &self.tets {
            let neg: Vec<usize> = (0..4).filter(|&k| eff(tet[k]) < 0.0).collect();
            // Reorder local indices to an even permutation of (0,1,2,3)
            // with the distinguished vertices first; even permutations
            // preserve the tet's positive orientation, so one fixed
            // emission rule per case gives outward-consistent winding.
            let order = match neg.len() {
                0 | 4 => continue,
                1 => even_order_with_first(&neg),
                3 => {
                    let pos: Vec<usize> =
                        (0..4).filter(|k| !neg.contains(k)).collect();
                    even_order_with_first(&pos)
                }
                2 => even_order_with_first_two(&neg),
                _ => unreachable!(),
            };
            let g = |slot: usize| tet[order[slot]];
            match neg.len() {
                1 => {
                    // negative apex: triangle on its three edges
                    let v1 = vertex_on_edge(g(0), g(1), &mut mesh);
                    let v2 = vertex_on_edge(g(0), g(2), &mut mesh);
                    let v3 = vertex_on_edge(g(0), g(3), &mut mesh);
                    mesh.push_triangle([v1, v2, v3]);
                }
                3 => {
                    // positive apex: same triangle, reversed winding
                    let v1 = vertex_on_edge(g(0), g(1), &mut mesh);
                    let v2 = vertex_on_edge(g(0), g(2), &mut mesh);
                    let v3 = vertex_on_edge(g(0), g(3), &mut mesh);
                    mesh.push_triangle([v1, v3, v2]);
                }
                2 => {
                    // quad between the negative edge pair (m,n) and the
                    // positive pair (p,q), split into two triangles
                    let mp = vertex_on_edge(g(0), g(2), &mut mesh);
                    let mq = vertex_on_edge(g(0), g(3), &mut mesh);
                    let np = vertex_on_edge(g(1), g(2), &mut mesh);
                    let nq = vertex_on_edge(g(1), g(3), &mut mesh);
                    mesh.push_triangle([mp, mq, nq]);
                    mesh.push_triangle([mp, nq, np]);
                }
                _ => unreachable!(),
            }
        }
        Ok(mesh)
    }
}

/// Even permutation of (0,1,2,3) starting with the given local index.
fn even_order_with_first(head: &[usize]) -> [usize; 4] {
    let mut order = [head[0], 0, 0, 0];
    let mut slot = 1;
    for k in 0..4 {
        if k != head[0] {
            order[slot] = k;
            slot += 1;
        }
    }
    fix_parity(&mut order);
    order
}

/// Even permutation of (0,1,2,3) starting with the two given indices.
fn even_order_with_first_two(head: &[usize]) -> [usize; 4] {
    let mut order = [head[0], head[1], 0, 0];
    let mut slot = 2;
    for k in 0..4 {
        if k != head[0] && k != head[1] {
            order[slot] = k;
            slot += 1;
        }
    }
    fix_parity(&mut order);
    order
}

/// Makes the permutation even by swapping the last two entries if
/// needed; callers only distinguish the leading entries.
fn fix_parity(order: &mut [usize; 4]) {
    let mut inversions = 0;
    for a in 0..4 {
        for b in a + 1..4 {
            if order[a] > order[b] {
                inversions += 1;
            }
        }
    }
    if inversions % 2 == 1 {
        order.swap(2, 3);
    }
}

/// A triangle mesh with optional per-vertex colors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
    pub colors: Option<Vec<[f64; 3]>>,
}

impl TriMesh {
    fn push_triangle(&mut self, tri: [usize; 3]) {
        // edge-degenerate triangles (two identical vertex indices) carry
        // no area; drop them
        if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
            return;
        }
        self.triangles.push(tri);
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn validate(&self) -> Result<()> {
        for tri in &self.triangles {
            if tri.iter().any(|&i| i >= self.vertices.len()) {
                return Err(Error::InvalidInput(format!(
                    "triangle {tri:?} indexes past {} vertices",
                    self.vertices.len()
                )));
            }
        }
        if let Some(colors) = &self.colors {
            if colors.len() != self.vertices.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} colors for {} vertices",
                    colors.len(),
                    self.vertices.len()
                )));
            }
        }
        Ok(())
    }

    /// Occurrence count of every undirected edge.
    fn edge_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut counts = HashMap::new();
        for tri in &self.triangles {
            for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    /// True when every edge borders exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        !self.is_empty() && self.edge_counts().values().all(|&c| c == 2)
    }

    /// `V - E + F` over referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for tri in &self.triangles {
            for &v in tri {
                used[v] = true;
            }
        }
        let v = used.iter().filter(|u| **u).count() as i64;
        let e = self.edge_counts().len() as i64;
        let f = self.triangles.len() as i64;
        v - e + f
    }

    /// Geometric normal of triangle `t` (not normalized).
    pub fn triangle_normal(&self, t: usize) -> [f64; 3] {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        let u = [pb[0] - pa[0], pb[1] - pa[1], pb[2] - pa[2]];
        let v = [pc[0] - pa[0], pc[1] - pa[1], pc[2] - pa[2]];
        [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ]
    }

    /// Mirrors the mesh through `z = 0`, flipping winding to keep
    /// outward normals outward.
    pub fn reflected_z(&self) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|v| [v[0], v[1], -v[2]]).collect(),
            triangles: self.triangles.iter().map(|t| [t[0], t[2], t[1]]).collect(),
            colors: self.colors.clone(),
        }
    }

    /// Writes Wavefront OBJ: `v x y z [r g b]` lines then 1-based
    /// `f i j k` lines. An empty mesh produces an empty file.
    pub fn write_obj<W: Write>(&self, w: &mut W) -> Result<()> {
        self.validate()?;
        for (i, v) in self.vertices.iter().enumerate() {
            match &self.colors {
                Some(colors) => {
                    let c = colors[i];
                    writeln!(w, "v {} {} {} {} {} {}", v[0], v[1], v[2], c[0], c[1], c[2])?
                }
                None => writeln!(w, "v {} {} {}", v[0], v[1], v[2])?,
            }
        }
        for t in &self.triangles {
            writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        Ok(())
    }

    /// Parses the subset of OBJ written by [`TriMesh::write_obj`];
    /// unknown line types are ignored.
    pub fn read_obj<R: BufRead>(r: R) -> Result<TriMesh> {
        let mut mesh = TriMesh::default();
        let mut colors = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let mut parts = line.split_whitespace();
            let bad = |what: &str| {
                Error::Format(format!("line {}: {what}: {line:?}", lineno + 1))
            };
            match parts.next() {
                Some("v") => {
                    let nums: Vec<f64> = parts
                        .map(|p| p.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad("bad vertex number"))?;
                    match nums.len() {
                        3 => mesh.vertices.push([nums[0], nums[1], nums[2]]),
                        6 => {
                            mesh.vertices.push([nums[0], nums[1], nums[2]]);
                            colors.push([nums[3], nums[4], nums[5]]);
                        }
                        _ => return Err(bad("vertex needs 3 or 6 numbers")),
                    }
                }
                Some("f") => {
                    let idx: Vec<usize> = parts
                        .map(|p| {
                            // tolerate "i/t/n" references, keep the vertex
                            p.split('/').next().unwrap_or(p).parse::<usize>()
                        })
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad("bad face index"))?;
                    if idx.len() != 3 {
                        return Err(bad("only triangle faces supported"));
                    }
                    if idx.iter().any(|&i| i == 0 || i > mesh.vertices.len()) {
                        return Err(bad("face index out of range"));
                    }
                    mesh.triangles.push([idx[0] - 1, idx[1] - 1, idx[2] - 1]);
                }
                _ => {}
            }
        }
        if !colors.is_empty() {
            if colors.len() != mesh.vertices.len() {
                return Err(Error::Format(
                    "either all or no vertices may carry colors".into(),
                ));
            }
            mesh.colors = Some(colors);
        }
        Ok(mesh)
    }
}
