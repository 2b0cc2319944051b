//! Feature planes: node-centered `N×N×C` grids over `[-1,1]²` with
//! differentiable bilinear sampling, z-flips, and channel-similarity
//! diagnostics.

use std::io::{Read, Write};

use crate::io;
use crate::{Error, Result};

/// World axis label for a plane dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn letter(self) -> char {
        match self {
            Axis::X => 'X',
            Axis::Y => 'Y',
            Axis::Z => 'Z',
        }
    }

    fn byte(self) -> u8 {
        self.letter() as u8
    }

    fn from_byte(b: u8) -> Result<Self> {
        match b {
            b'X' => Ok(Axis::X),
            b'Y' => Ok(Axis::Y),
            b'Z' => Ok(Axis::Z),
            other => Err(Error::Format(format!("unknown axis byte 0x{other:02x}"))),
        }
    }
}

/// An `N×N×C` feature grid over the square `[-1,1]²`.
///
/// The grid is node-centered: node `(i, j)` sits at normalized coordinate
/// `(-1 + 2i/(N-1), -1 + 2j/(N-1))`, which requires `N >= 2`. Data is
/// stored row-major in `(i, j, c)` order. The two axis labels say which
/// world axes index the first and second grid dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePlane {
    resolution: usize,
    channels: usize,
    axes: (Axis, Axis),
    data: Vec<f64>,
}

/// Gradient of one bilinear sample.
///
/// Only the four surrounding nodes receive nonzero plane-gradient; the
/// per-channel gradient at node `nodes[k]` is `node_weights[k] *
/// upstream[c]`. `du`/`dv` are the gradients with respect to the sample
/// coordinates (zero where the coordinate was clamped to the border).
#[derive(Debug, Clone)]
pub struct SampleGrad {
    pub nodes: [(usize, usize); 4],
    pub node_weights: [f64; 4],
    pub du: f64,
    pub dv: f64,
}

/// Where a 1D sample coordinate landed on the grid.
#[derive(Debug, Clone, Copy)]
struct GridPos {
    cell: usize,
    frac: f64,
    /// d(grid coordinate)/d(world coordinate); 0 when clamped outside.
    dgrid: f64,
}

impl FeaturePlane {
    pub fn new(
        resolution: usize,
        channels: usize,
        axes: (Axis, Axis),
        data: Vec<f64>,
    ) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::InvalidInput(format!(
                "plane resolution must be >= 2, got {resolution}"
            )));
        }
        if channels == 0 {
            return Err(Error::InvalidInput("plane needs at least one channel".into()));
        }
        if axes.0 == axes.1 {
            return Err(Error::InvalidInput(format!(
                "plane axes must be distinct, got ({}, {})",
                axes.0.letter(),
                axes.1.letter()
            )));
        }
        let expect = resolution * resolution * channels;
        if data.len() != expect {
            return Err(Error::ShapeMismatch(format!(
                "plane data length {} != N*N*C = {expect}",
                data.len()
            )));
        }
        Ok(Self { resolution, channels, axes, data })
    }

    pub fn zeros(resolution: usize, channels: usize, axes: (Axis, Axis)) -> Result<Self> {
        let data = vec![0.0; resolution * resolution * channels];
        Self::new(resolution, channels, axes, data)
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn axes(&self) -> (Axis, Axis) {
        self.axes
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, c: usize) -> usize {
        (i * self.resolution + j) * self.channels + c
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.data[self.index(i, j, c)]
    }

    pub fn set(&mut self, i: usize, j: usize, c: usize, v: f64) {
        let idx = self.index(i, j, c);
        self.data[idx] = v;
    }

    /// Normalized coordinate of grid node `i` along either dimension.
    #[inline]
    pub fn node_coord(&self, i: usize) -> f64 {
        -1.0 + 2.0 * i as f64 / (self.resolution - 1) as f64
    }

    /// Maps a world coordinate in `[-1,1]` to a grid cell and fraction,
    /// clamping out-of-range values to the border.
    #[inline]
    fn locate(&self, x: f64) -> GridPos {
        let n1 = (self.resolution - 1) as f64;
        let g = (x + 1.0) * 0.5 * n1;
        if g <= 0.0 {
            return GridPos { cell: 0, frac: 0.0, dgrid: if g < 0.0 { 0.0 } else { 0.5 * n1 } };
        }
        if g >= n1 {
            return GridPos {
                cell: self.resolution - 2,
                frac: 1.0,
                dgrid: if g > n1 { 0.0 } else { 0.5 * n1 },
            };
        }
        // Snap to the node when the caller passed a node coordinate
        // bit-exactly; plain arithmetic can be off by an ulp there.
        let r = g.round();
        if x == self.node_coord(r as usize) {
            let i = r as usize;
            if i == self.resolution - 1 {
                return GridPos { cell: i - 1, frac: 1.0, dgrid: 0.5 * n1 };
            }
            return GridPos { cell: i, frac: 0.0, dgrid: 0.5 * n1 };
        }
        let cell = (g.floor() as usize).min(self.resolution - 2);
        GridPos { cell, frac: g - cell as f64, dgrid: 0.5 * n1 }
    }

    /// Bilinear interpolation of the four nodes surrounding `(u, v)`,
    /// channel-wise. Coordinates outside `[-1,1]` clamp to the border.
    pub fn sample(&self, u: f64, v: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.channels];
        self.sample_into(u, v, &mut out)?;
        Ok(out)
    }

    /// [`FeaturePlane::sample`] writing into a caller buffer.
    pub fn sample_into(&self, u: f64, v: f64, out: &mut [f64]) -> Result<()> {
        if !u.is_finite() || !v.is_finite() {
            return Err(Error::InvalidInput(format!(
                "sample coordinates must be finite, got ({u}, {v})"
            )));
        }
        if out.len() != self.channels {
            return Err(Error::ShapeMismatch(format!(
                "output buffer has {} slots for {} channels",
                out.len(),
                self.channels
            )));
        }
        let pu = self.locate(u);
        let pv = self.locate(v);
        let (i0, fu) = (pu.cell, pu.frac);
        let (j0, fv) = (pv.cell, pv.frac);
        let w00 = (1.0 - fu) * (1.0 - fv);
        let w10 = fu * (1.0 - fv);
        let w01 = (1.0 - fu) * fv;
        let w11 = fu * fv;
        let c = self.channels;
        let b00 = self.index(i0, j0, 0);
        let b10 = self.index(i0 + 1, j0, 0);
        let b01 = self.index(i0, j0 + 1, 0);
        let b11 = self.index(i0 + 1, j0 + 1, 0);
        for k in 0..c {
            out[k] = w00 * self.data[b00 + k]
                + w10 * self.data[b10 + k]
                + w01 * self.data[b01 + k]
                + w11 * self.data[b11 + k];
        }
        Ok(())
    }

    /// Gradients of one bilinear sample under the chain rule.
    ///
    /// Given `upstream = dL/d(sample output)`, returns the sparse
    /// four-node plane contribution plus `dL/du` and `dL/dv`.
    pub fn sample_backward(&self, u: f64, v: f64, upstream: &[f64]) -> Result<SampleGrad> {
        if !u.is_finite() || !v.is_finite() {
            return Err(Error::InvalidInput(format!(
                "sample coordinates must be finite, got ({u}, {v})"
            )));
        }
        if upstream.len() != self.channels {
            return Err(Error::ShapeMismatch(format!(
                "upstream has {} entries for {} channels",
                upstream.len(),
                self.channels
            )));
        }
        let pu = self.locate(u);
        let pv = self.locate(v);
        let (i0, fu) = (pu.cell, pu.frac);
        let (j0, fv) = (pv.cell, pv.frac);
        let nodes = [(i0, j0), (i0 + 1, j0), (i0, j0 + 1), (i0 + 1, j0 + 1)];
        let node_weights = [
            (1.0 - fu) * (1.0 - fv),
            fu * (1.0 - fv),
            (1.0 - fu) * fv,
            fu * fv,
        ];
        // d out_k / d fu = (1-fv)*(d10-d00) + fv*(d11-d01), and the same
        // with roles swapped for fv; chain through dgrid.
        let mut dfu = 0.0;
        let mut dfv = 0.0;
        let c = self.channels;
        let b00 = self.index(i0, j0, 0);
        let b10 = self.index(i0 + 1, j0, 0);
        let b01 = self.index(i0, j0 + 1, 0);
        let b11 = self.index(i0 + 1, j0 + 1, 0);
        for k in 0..c {
            let d00 = self.data[b00 + k];
            let d10 = self.data[b10 + k];
            let d01 = self.data[b01 + k];
            let d11 = self.data[b11 + k];
            dfu += upstream[k] * ((1.0 - fv) * (d10 - d00) + fv * (d11 - d01));
            dfv += upstream[k] * ((1.0 - fu) * (d01 - d00) + fu * (d11 - d10));
        }
        Ok(SampleGrad {
            nodes,
            node_weights,
            du: dfu * pu.dgrid,
            dv: dfv * pv.dgrid,
        })
    }

    /// Reverses the second grid index: `out[i, j, :] = in[i, N-1-j, :]`.
    ///
    /// On the node-centered grid this realizes the world reflection
    /// `z -> -z` exactly, so it requires the plane's second axis to be Z.
    pub fn flip_z(&self) -> Result<FeaturePlane> {
        if self.axes.1 != Axis::Z {
            return Err(Error::AxisMismatch(format!(
                "flip_z needs a plane whose second axis is Z, got ({}, {})",
                self.axes.0.letter(),
                self.axes.1.letter()
            )));
        }
        let n = self.resolution;
        let c = self.channels;
        let mut data = vec![0.0; self.data.len()];
        for i in 0..n {
            for j in 0..n {
                let src = self.index(i, n - 1 - j, 0);
                let dst = self.index(i, j, 0);
                data[dst..dst + c].copy_from_slice(&self.data[src..src + c]);
            }
        }
        Ok(FeaturePlane { resolution: n, channels: c, axes: self.axes, data })
    }

    /// Serializes as `"STPL"`, version u32, N u32, C u32, two axis bytes,
    /// then `N*N*C` little-endian f64 in row-major `(i, j, c)` order.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        io::write_magic(w, b"STPL")?;
        io::write_u32(w, 1)?;
        io::write_u32(w, self.resolution as u32)?;
        io::write_u32(w, self.channels as u32)?;
        io::write_u8(w, self.axes.0.byte())?;
        io::write_u8(w, self.axes.1.byte())?;
        io::write_f64_slice(w, &self.data)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        io::expect_magic(r, b"STPL")?;
        let version = io::read_u32(r)?;
        if version != 1 {
            return Err(Error::Format(format!("unsupported plane version {version}")));
        }
        let n = io::read_u32(r)? as usize;
        let c = io::read_u32(r)? as usize;
        let a0 = Axis::from_byte(io::read_u8(r)?)?;
        let a1 = Axis::from_byte(io::read_u8(r)?)?;
        let data = io::read_f64_vec(r, n.checked_mul(n).and_then(|v| v.checked_mul(c)).ok_or_else(
            || Error::Format("plane dimensions overflow".into()),
        )?)?;
        FeaturePlane::new(n, c, (a0, a1), data)
    }
}

/// Pairwise cosine similarities between all `3C` channels of a triplane,
/// each channel flattened to its `N²` spatial values.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.entries[a * self.dim + b]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

/// Stacks the three planes' channels into a `3C × N²` matrix and returns
/// the cosine similarity of every row pair.
///
/// Rows follow plane order (first, second, third) with each plane's
/// channels in order. A zero-norm row has similarity 0 against every row,
/// including itself, so untrained all-zero planes produce an all-zero
/// matrix instead of NaN.
pub fn similarity_matrix(planes: [&FeaturePlane; 3]) -> Result<SimilarityMatrix> {
    let n = planes[0].resolution();
    let c = planes[0].channels();
    for p in &planes {
        if p.resolution() != n || p.channels() != c {
            return Err(Error::ShapeMismatch(format!(
                "similarity_matrix needs equal plane shapes, got {}x{} vs {}x{}",
                n,
                c,
                p.resolution(),
                p.channels()
            )));
        }
    }
    let dim = 3 * c;
    let spatial = n * n;
    // Row `t*C + k` is channel k of plane t over all N² nodes.
    let mut rows = vec![0.0; dim * spatial];
    for (t, plane) in planes.iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                for k in 0..c {
                    rows[(t * c + k) * spatial + i * n + j] = plane.get(i, j, k);
                }
            }
        }
    }
    let norms: Vec<f64> = (0..dim)
        .map(|r| {
            let row = &rows[r * spatial..(r + 1) * spatial];
            row.iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .collect();
    let mut entries = vec![0.0; dim * dim];
    for a in 0..dim {
        for b in a..dim {
            let sim = if norms[a] == 0.0 || norms[b] == 0.0 {
                0.0
            } else {
                let ra = &rows[a * spatial..(a + 1) * spatial];
                let rb = &rows[b * spatial..(b + 1) * spatial];
                let dot: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
                (dot / (norms[a] * norms[b])).clamp(-1.0, 1.0)
            };
            entries[a * dim + b] = sim;
            entries[b * dim + a] = sim;
        }
    }
    Ok(SimilarityMatrix { dim, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::{assert_grad_close, central_diff};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_plane(rng: &mut ChaCha8Rng, n: usize, c: usize, axes: (Axis, Axis)) -> FeaturePlane {
        let data = (0..n * n * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        FeaturePlane::new(n, c, axes, data).unwrap()
    }

    /// Random coordinate kept away from grid lines so central differences
    /// never straddle a bilinear kink.
    fn off_node_coord(rng: &mut ChaCha8Rng, n: usize) -> f64 {
        let spacing = 2.0 / (n - 1) as f64;
        loop {
            let x: f64 = rng.random_range(-0.98..0.98);
            let g = (x + 1.0) / spacing;
            if (g - g.round()).abs() * spacing > 1e-3 {
                return x;
            }
        }
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(FeaturePlane::new(1, 1, (Axis::X, Axis::Y), vec![0.0]).is_err());
        assert!(FeaturePlane::new(2, 1, (Axis::X, Axis::X), vec![0.0; 4]).is_err());
        assert!(FeaturePlane::new(2, 1, (Axis::X, Axis::Y), vec![0.0; 3]).is_err());
        assert!(FeaturePlane::new(2, 0, (Axis::X, Axis::Y), vec![]).is_err());
    }

    #[test]
    fn sample_midpoint_of_2x2_is_node_average() {
        let (a, b, c, d) = (1.0, 2.0, -3.0, 0.5);
        // data[(i,j)] with i,j in {0,1}: (0,0)=a, (0,1)=c, (1,0)=b, (1,1)=d
        let plane = FeaturePlane::new(2, 1, (Axis::X, Axis::Y), vec![a, c, b, d]).unwrap();
        let out = plane.sample(0.0, 0.0).unwrap();
        assert_eq!(out[0], (a + b + c + d) / 4.0);
    }

    #[test]
    fn sample_is_exact_at_nodes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let plane = random_plane(&mut rng, 5, 3, (Axis::X, Axis::Y));
        for i in 0..5 {
            for j in 0..5 {
                let out = plane.sample(plane.node_coord(i), plane.node_coord(j)).unwrap();
                for k in 0..3 {
                    assert_eq!(out[k], plane.get(i, j, k), "node ({i},{j}) channel {k}");
                }
            }
        }
    }

    #[test]
    fn sample_clamps_to_border() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let plane = random_plane(&mut rng, 4, 2, (Axis::X, Axis::Y));
        let inside = plane.sample(1.0, -0.25).unwrap();
        let outside = plane.sample(42.0, -0.25).unwrap();
        assert_eq!(inside, outside);
        assert!(plane.sample(f64::NAN, 0.0).is_err());
        assert!(plane.sample(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn sample_reproduces_affine_fields() {
        // An affine field sampled onto the grid interpolates exactly.
        let n = 6;
        let f = |u: f64, v: f64| 0.3 - 1.7 * u + 0.9 * v;
        let mut plane = FeaturePlane::zeros(n, 1, (Axis::X, Axis::Y)).unwrap();
        for i in 0..n {
            for j in 0..n {
                plane.set(i, j, 0, f(plane.node_coord(i), plane.node_coord(j)));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let u = rng.random_range(-1.0..1.0);
            let v = rng.random_range(-1.0..1.0);
            let out = plane.sample(u, v).unwrap();
            assert!((out[0] - f(u, v)).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 8;
        let c = 4;
        let plane = random_plane(&mut rng, n, c, (Axis::X, Axis::Y));
        let step = 1e-5;
        for _ in 0..20 {
            let u = off_node_coord(&mut rng, n);
            let v = off_node_coord(&mut rng, n);
            let upstream: Vec<f64> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
            let grad = plane.sample_backward(u, v, &upstream).unwrap();

            let loss = |p: &FeaturePlane, uu: f64, vv: f64| {
                let out = p.sample(uu, vv).unwrap();
                out.iter().zip(&upstream).map(|(o, g)| o * g).sum::<f64>()
            };
            let fd_u = central_diff(|x| loss(&plane, x, v), u, step);
            let fd_v = central_diff(|x| loss(&plane, u, x), v, step);
            assert_grad_close(grad.du, fd_u, 1e-6, "du");
            assert_grad_close(grad.dv, fd_v, 1e-6, "dv");

            // Plane-entry gradients: perturb each of the four support
            // nodes and one far-away node.
            for (slot, &(i, j)) in grad.nodes.iter().enumerate() {
                for k in 0..c {
                    let mut perturbed = plane.clone();
                    let fd = central_diff(
                        |x| {
                            perturbed.set(i, j, k, x);
                            loss(&perturbed, u, v)
                        },
                        plane.get(i, j, k),
                        step,
                    );
                    assert_grad_close(grad.node_weights[slot] * upstream[k], fd, 1e-6, "dplane");
                }
            }
        }
    }

    #[test]
    fn sample_backward_zero_upstream_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let plane = random_plane(&mut rng, 5, 2, (Axis::X, Axis::Y));
        let grad = plane.sample_backward(0.3, -0.2, &[0.0, 0.0]).unwrap();
        assert_eq!(grad.du, 0.0);
        assert_eq!(grad.dv, 0.0);
        // Node weights are the interpolation weights; the plane gradient
        // is weight * upstream = 0 for every channel.
    }

    #[test]
    fn sample_backward_at_node_routes_to_single_node() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 5;
        let plane = random_plane(&mut rng, n, 1, (Axis::X, Axis::Y));
        let (i, j) = (2, 3);
        let grad = plane
            .sample_backward(plane.node_coord(i), plane.node_coord(j), &[1.0])
            .unwrap();
        let mut total = 0.0;
        for (slot, &(ni, nj)) in grad.nodes.iter().enumerate() {
            if (ni, nj) == (i, j) {
                assert_eq!(grad.node_weights[slot], 1.0);
            } else {
                assert_eq!(grad.node_weights[slot], 0.0);
            }
            total += grad.node_weights[slot];
        }
        assert_eq!(total, 1.0);
        // Coordinate gradient equals the local finite slope along each axis.
        let du_expected = (plane.get(i + 1, j, 0) - plane.get(i, j, 0)) / (2.0 / (n - 1) as f64);
        assert!((grad.du - du_expected).abs() < 1e-12);
    }

    #[test]
    fn flip_z_reverses_rows_and_is_involutive() {
        let plane = FeaturePlane::new(3, 1, (Axis::X, Axis::Z), vec![
            1.0, 2.0, 3.0, // i = 0: z row [a, b, c]
            4.0, 5.0, 6.0,
            7.0, 8.0, 9.0,
        ])
        .unwrap();
        let flipped = plane.flip_z().unwrap();
        assert_eq!(&flipped.data()[0..3], &[3.0, 2.0, 1.0]);
        assert_eq!(flipped.flip_z().unwrap(), plane);
    }

    #[test]
    fn flip_z_fixed_point_on_symmetric_plane() {
        let mut plane = FeaturePlane::zeros(4, 2, (Axis::Y, Axis::Z)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for i in 0..4 {
            for j in 0..2 {
                for k in 0..2 {
                    let v = rng.random_range(-1.0..1.0);
                    plane.set(i, j, k, v);
                    plane.set(i, 3 - j, k, v);
                }
            }
        }
        assert_eq!(plane.flip_z().unwrap(), plane);
    }

    #[test]
    fn flip_z_requires_z_second_axis() {
        let plane = FeaturePlane::zeros(3, 1, (Axis::X, Axis::Y)).unwrap();
        assert!(matches!(plane.flip_z(), Err(Error::AxisMismatch(_))));
    }

    #[test]
    fn similarity_identical_channels_all_ones() {
        let n = 4;
        let base: Vec<f64> = (0..n * n).map(|v| v as f64 - 3.0).collect();
        let mk = |axes| FeaturePlane::new(n, 2, axes, base.iter().flat_map(|&v| [v, v]).collect()).unwrap();
        let p1 = mk((Axis::X, Axis::Y));
        let p2 = mk((Axis::X, Axis::Z));
        let p3 = mk((Axis::Y, Axis::Z));
        let sim = similarity_matrix([&p1, &p2, &p3]).unwrap();
        assert_eq!(sim.dim(), 6);
        for a in 0..6 {
            for b in 0..6 {
                assert!((sim.get(a, b) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn similarity_disjoint_supports_are_orthogonal() {
        let n = 2;
        // channel 0 lives on node (0,0), channel 1 on node (1,1)
        let mut p1 = FeaturePlane::zeros(n, 2, (Axis::X, Axis::Y)).unwrap();
        p1.set(0, 0, 0, 2.0);
        p1.set(1, 1, 1, -3.0);
        let p2 = p1.clone_with_axes((Axis::X, Axis::Z));
        let p3 = p1.clone_with_axes((Axis::Y, Axis::Z));
        let sim = similarity_matrix([&p1, &p2, &p3]).unwrap();
        assert_eq!(sim.get(0, 1), 0.0);
        assert_eq!(sim.get(0, 0), 1.0);
    }

    #[test]
    fn similarity_zero_rows_use_zero_convention() {
        let p1 = FeaturePlane::zeros(3, 2, (Axis::X, Axis::Y)).unwrap();
        let p2 = FeaturePlane::zeros(3, 2, (Axis::X, Axis::Z)).unwrap();
        let p3 = FeaturePlane::zeros(3, 2, (Axis::Y, Axis::Z)).unwrap();
        let sim = similarity_matrix([&p1, &p2, &p3]).unwrap();
        assert!(sim.entries().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn similarity_matches_direct_dot_product_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let n = 5;
        let c = 3;
        let p1 = random_plane(&mut rng, n, c, (Axis::X, Axis::Y));
        let p2 = random_plane(&mut rng, n, c, (Axis::X, Axis::Z));
        let p3 = random_plane(&mut rng, n, c, (Axis::Y, Axis::Z));
        let sim = similarity_matrix([&p1, &p2, &p3]).unwrap();

        // Independent recomputation with explicit loops.
        let planes = [&p1, &p2, &p3];
        let channel = |row: usize| -> Vec<f64> {
            let (t, k) = (row / c, row % c);
            let mut out = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    out.push(planes[t].get(i, j, k));
                }
            }
            out
        };
        for a in 0..3 * c {
            for b in 0..3 * c {
                let ra = channel(a);
                let rb = channel(b);
                let dot: f64 = ra.iter().zip(&rb).map(|(x, y)| x * y).sum();
                let na = ra.iter().map(|v| v * v).sum::<f64>().sqrt();
                let nb = rb.iter().map(|v| v * v).sum::<f64>().sqrt();
                let expect = dot / (na * nb);
                assert!((sim.get(a, b) - expect).abs() < 1e-12);
                assert!((sim.get(a, b) - sim.get(b, a)).abs() == 0.0);
                assert!(sim.get(a, b) >= -1.0 && sim.get(a, b) <= 1.0);
            }
            assert!((sim.get(a, a) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn plane_round_trips_through_binary_format() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let plane = random_plane(&mut rng, 6, 3, (Axis::Y, Axis::Z));
        let mut buf = Vec::new();
        plane.write_to(&mut buf).unwrap();
        assert_eq!(&buf[0..4], b"STPL");
        let parsed = FeaturePlane::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(parsed, plane);

        let mut corrupt = buf.clone();
        corrupt[0] = b'X';
        assert!(FeaturePlane::read_from(&mut corrupt.as_slice()).is_err());
    }
}

#[cfg(test)]
impl FeaturePlane {
    fn clone_with_axes(&self, axes: (Axis, Axis)) -> FeaturePlane {
        FeaturePlane::new(self.resolution, self.channels, axes, self.data.clone()).unwrap()
    }
}
