//! Triplane queries: a 3D point's feature is the sum of its three
//! axis-aligned plane samples, plus the mirror-averaged variant used for
//! texture shading.

use std::io::{Read, Write};

use crate::planes::{Axis, FeaturePlane};
use crate::{Error, Result};

/// A world-space point, nominally in `[-1,1]³`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Reflection through the `z = 0` plane.
    pub fn mirror_z(&self) -> Self {
        Self { x: self.x, y: self.y, z: -self.z }
    }
}

/// Sparse gradient of one triplane query.
///
/// Each `(i, j, w)` entry means the gradient with respect to plane entry
/// `(i, j, c)` is `w * upstream[c]`. `dx`/`dy`/`dz` are already
/// contracted with the upstream vector.
#[derive(Debug, Clone, Default)]
pub struct QueryGrad {
    pub xy_nodes: Vec<(usize, usize, f64)>,
    pub xz_nodes: Vec<(usize, usize, f64)>,
    pub yz_nodes: Vec<(usize, usize, f64)>,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

/// Three axis-aligned planes with matching shape: XY, XZ, YZ.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneTriple {
    xy: FeaturePlane,
    xz: FeaturePlane,
    yz: FeaturePlane,
}

impl PlaneTriple {
    fn new(xy: FeaturePlane, xz: FeaturePlane, yz: FeaturePlane) -> Result<Self> {
        for (plane, want) in [
            (&xy, (Axis::X, Axis::Y)),
            (&xz, (Axis::X, Axis::Z)),
            (&yz, (Axis::Y, Axis::Z)),
        ] {
            if plane.axes() != want {
                return Err(Error::AxisMismatch(format!(
                    "expected axes ({}, {}), got ({}, {})",
                    want.0.letter(),
                    want.1.letter(),
                    plane.axes().0.letter(),
                    plane.axes().1.letter()
                )));
            }
        }
        let (n, c) = (xy.resolution(), xy.channels());
        for plane in [&xz, &yz] {
            if plane.resolution() != n || plane.channels() != c {
                return Err(Error::ShapeMismatch(format!(
                    "triplane planes must share shape: {}x{} vs {}x{}",
                    n,
                    c,
                    plane.resolution(),
                    plane.channels()
                )));
            }
        }
        Ok(Self { xy, xz, yz })
    }

    fn zeros(resolution: usize, channels: usize) -> Result<Self> {
        Ok(Self {
            xy: FeaturePlane::zeros(resolution, channels, (Axis::X, Axis::Y))?,
            xz: FeaturePlane::zeros(resolution, channels, (Axis::X, Axis::Z))?,
            yz: FeaturePlane::zeros(resolution, channels, (Axis::Y, Axis::Z))?,
        })
    }

    fn check_point(p: Point3) -> Result<()> {
        if !p.is_finite() {
            return Err(Error::InvalidInput(format!(
                "query point must be finite, got ({}, {}, {})",
                p.x, p.y, p.z
            )));
        }
        Ok(())
    }

    /// Sum of the three plane samples, channel-wise.
    fn query_sum(&self, p: Point3) -> Result<Vec<f64>> {
        Self::check_point(p)?;
        let c = self.xy.channels();
        let mut out = self.xy.sample(p.x, p.y)?;
        let mut tmp = vec![0.0; c];
        self.xz.sample_into(p.x, p.z, &mut tmp)?;
        for (o, t) in out.iter_mut().zip(&tmp) {
            *o += *t;
        }
        self.yz.sample_into(p.y, p.z, &mut tmp)?;
        for (o, t) in out.iter_mut().zip(&tmp) {
            *o += *t;
        }
        Ok(out)
    }

    fn query_sum_backward(&self, p: Point3, upstream: &[f64]) -> Result<QueryGrad> {
        Self::check_point(p)?;
        let gxy = self.xy.sample_backward(p.x, p.y, upstream)?;
        let gxz = self.xz.sample_backward(p.x, p.z, upstream)?;
        let gyz = self.yz.sample_backward(p.y, p.z, upstream)?;
        let pack = |g: &crate::planes::SampleGrad| {
            g.nodes
                .iter()
                .zip(&g.node_weights)
                .map(|(&(i, j), &w)| (i, j, w))
                .collect::<Vec<_>>()
        };
        Ok(QueryGrad {
            xy_nodes: pack(&gxy),
            xz_nodes: pack(&gxz),
            yz_nodes: pack(&gyz),
            dx: gxy.du + gxz.du,
            dy: gxy.dv + gyz.du,
            dz: gxz.dv + gyz.dv,
        })
    }

    /// Mirror-averaged query: the xy sample plus, for each z-indexed
    /// plane, the average of the samples at `z` and `-z`.
    fn query_mirror_avg(&self, p: Point3) -> Result<Vec<f64>> {
        Self::check_point(p)?;
        let c = self.xy.channels();
        let mut out = self.xy.sample(p.x, p.y)?;
        let mut at = vec![0.0; c];
        let mut mirrored = vec![0.0; c];
        self.xz.sample_into(p.x, p.z, &mut at)?;
        self.xz.sample_into(p.x, -p.z, &mut mirrored)?;
        for k in 0..c {
            // `a + b` is commutative bitwise, so swapping z for -z leaves
            // this sum — and hence the whole output — bit-identical.
            out[k] += (at[k] + mirrored[k]) * 0.5;
        }
        self.yz.sample_into(p.y, p.z, &mut at)?;
        self.yz.sample_into(p.y, -p.z, &mut mirrored)?;
        for k in 0..c {
            out[k] += (at[k] + mirrored[k]) * 0.5;
        }
        Ok(out)
    }

    fn query_mirror_avg_backward(&self, p: Point3, upstream: &[f64]) -> Result<QueryGrad> {
        Self::check_point(p)?;
        let gxy = self.xy.sample_backward(p.x, p.y, upstream)?;
        let gxz = self.xz.sample_backward(p.x, p.z, upstream)?;
        let gxz_m = self.xz.sample_backward(p.x, -p.z, upstream)?;
        let gyz = self.yz.sample_backward(p.y, p.z, upstream)?;
        let gyz_m = self.yz.sample_backward(p.y, -p.z, upstream)?;
        let pack2 = |a: &crate::planes::SampleGrad, b: &crate::planes::SampleGrad| {
            let mut v = Vec::with_capacity(8);
            for (&(i, j), &w) in a.nodes.iter().zip(&a.node_weights) {
                v.push((i, j, 0.5 * w));
            }
            for (&(i, j), &w) in b.nodes.iter().zip(&b.node_weights) {
                v.push((i, j, 0.5 * w));
            }
            v
        };
        Ok(QueryGrad {
            xy_nodes: gxy
                .nodes
                .iter()
                .zip(&gxy.node_weights)
                .map(|(&(i, j), &w)| (i, j, w))
                .collect(),
            xz_nodes: pack2(&gxz, &gxz_m),
            yz_nodes: pack2(&gyz, &gyz_m),
            dx: gxy.du + 0.5 * (gxz.du + gxz_m.du),
            dy: gxy.dv + 0.5 * (gyz.du + gyz_m.du),
            // the mirrored branch sees -z, so its dv enters negated
            dz: 0.5 * (gxz.dv - gxz_m.dv) + 0.5 * (gyz.dv - gyz_m.dv),
        })
    }

    fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        self.xy.write_to(w)?;
        self.xz.write_to(w)?;
        self.yz.write_to(w)
    }

    fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let xy = FeaturePlane::read_from(r)?;
        let xz = FeaturePlane::read_from(r)?;
        let yz = FeaturePlane::read_from(r)?;
        Self::new(xy, xz, yz)
    }
}

macro_rules! triple_wrapper {
    ($name:ident) => {
        impl $name {
            pub fn new(xy: FeaturePlane, xz: FeaturePlane, yz: FeaturePlane) -> Result<Self> {
                Ok(Self(PlaneTriple::new(xy, xz, yz)?))
            }

            pub fn zeros(resolution: usize, channels: usize) -> Result<Self> {
                Ok(Self(PlaneTriple::zeros(resolution, channels)?))
            }

            pub fn resolution(&self) -> usize {
                self.0.xy.resolution()
            }

            pub fn channels(&self) -> usize {
                self.0.xy.channels()
            }

            pub fn xy(&self) -> &FeaturePlane {
                &self.0.xy
            }

            pub fn xz(&self) -> &FeaturePlane {
                &self.0.xz
            }

            pub fn yz(&self) -> &FeaturePlane {
                &self.0.yz
            }

            pub fn xy_mut(&mut self) -> &mut FeaturePlane {
                &mut self.0.xy
            }

            pub fn xz_mut(&mut self) -> &mut FeaturePlane {
                &mut self.0.xz
            }

            pub fn yz_mut(&mut self) -> &mut FeaturePlane {
                &mut self.0.yz
            }

            /// Planes in fixed (xy, xz, yz) order.
            pub fn planes(&self) -> [&FeaturePlane; 3] {
                [&self.0.xy, &self.0.xz, &self.0.yz]
            }

            /// Mutable planes in fixed (xy, xz, yz) order.
            pub fn planes_mut(&mut self) -> [&mut FeaturePlane; 3] {
                [&mut self.0.xy, &mut self.0.xz, &mut self.0.yz]
            }

            pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
                self.0.write_to(w)
            }

            pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
                Ok(Self(PlaneTriple::read_from(r)?))
            }
        }
    };
}

/// Shape triplane: queried with the plain three-plane sum.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryTriplane(PlaneTriple);

/// Appearance triplane: queried plainly or with mirror averaging.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureTriplane(PlaneTriple);

triple_wrapper!(GeometryTriplane);
triple_wrapper!(TextureTriplane);

impl GeometryTriplane {
    /// Feature at `p`: `xy(x,y) + xz(x,z) + yz(y,z)`, channel-wise.
    pub fn query(&self, p: Point3) -> Result<Vec<f64>> {
        self.0.query_sum(p)
    }

    pub fn query_backward(&self, p: Point3, upstream: &[f64]) -> Result<QueryGrad> {
        self.0.query_sum_backward(p, upstream)
    }
}

impl TextureTriplane {
    /// Plain three-plane sum, identical to the geometry query.
    pub fn query_plain(&self, p: Point3) -> Result<Vec<f64>> {
        self.0.query_sum(p)
    }

    pub fn query_plain_backward(&self, p: Point3, upstream: &[f64]) -> Result<QueryGrad> {
        self.0.query_sum_backward(p, upstream)
    }

    /// Mirror-averaged query, exactly even in z:
    /// `xy(x,y) + (xz(x,z)+xz(x,-z))/2 + (yz(y,z)+yz(y,-z))/2`.
    pub fn query_symmetric(&self, p: Point3) -> Result<Vec<f64>> {
        self.0.query_mirror_avg(p)
    }

    pub fn query_symmetric_backward(&self, p: Point3, upstream: &[f64]) -> Result<QueryGrad> {
        self.0.query_mirror_avg_backward(p, upstream)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::{assert_grad_close, central_diff};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_geometry(rng: &mut ChaCha8Rng, n: usize, c: usize) -> GeometryTriplane {
        let mut g = GeometryTriplane::zeros(n, c).unwrap();
        for plane in g.planes_mut() {
            for v in plane.data_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        g
    }

    fn random_texture(rng: &mut ChaCha8Rng, n: usize, c: usize) -> TextureTriplane {
        let mut t = TextureTriplane::zeros(n, c).unwrap();
        for plane in t.planes_mut() {
            for v in plane.data_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        t
    }

    fn constant_geometry(n: usize, c: usize, value: f64) -> GeometryTriplane {
        let mut g = GeometryTriplane::zeros(n, c).unwrap();
        for plane in g.planes_mut() {
            plane.data_mut().fill(value);
        }
        g
    }

    fn off_node(rng: &mut ChaCha8Rng, n: usize) -> f64 {
        let spacing = 2.0 / (n - 1) as f64;
        loop {
            let x: f64 = rng.random_range(-0.95..0.95);
            let g = (x + 1.0) / spacing;
            if (g - g.round()).abs() * spacing > 1e-3 && x.abs() > 1e-3 {
                return x;
            }
        }
    }

    #[test]
    fn rejects_mislabeled_or_mismatched_planes() {
        let xy = FeaturePlane::zeros(3, 2, (Axis::X, Axis::Y)).unwrap();
        let xz = FeaturePlane::zeros(3, 2, (Axis::X, Axis::Z)).unwrap();
        let yz = FeaturePlane::zeros(3, 2, (Axis::Y, Axis::Z)).unwrap();
        assert!(GeometryTriplane::new(xy.clone(), yz.clone(), xz.clone()).is_err());
        let small = FeaturePlane::zeros(4, 2, (Axis::Y, Axis::Z)).unwrap();
        assert!(GeometryTriplane::new(xy.clone(), xz.clone(), small).is_err());
        assert!(GeometryTriplane::new(xy, xz, yz).is_ok());
    }

    #[test]
    fn constant_planes_sum_to_three_c() {
        let g = constant_geometry(4, 3, 0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for _ in 0..10 {
            let p = Point3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            for v in g.query(p).unwrap() {
                assert!((v - 2.1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn query_at_shared_node_sums_node_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 5;
        let g = random_geometry(&mut rng, n, 2);
        let (i, j, k) = (1, 3, 2);
        let p = Point3::new(
            g.xy().node_coord(i),
            g.xy().node_coord(j),
            g.xy().node_coord(k),
        );
        let out = g.query(p).unwrap();
        for c in 0..2 {
            let expect = g.xy().get(i, j, c) + g.xz().get(i, k, c) + g.yz().get(j, k, c);
            assert_eq!(out[c], expect);
        }
    }

    #[test]
    fn query_rejects_non_finite_points() {
        let g = constant_geometry(3, 1, 0.0);
        assert!(g.query(Point3::new(f64::NAN, 0.0, 0.0)).is_err());
        assert!(g.query_backward(Point3::new(0.0, f64::INFINITY, 0.0), &[1.0]).is_err());
    }

    #[test]
    fn query_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let n = 6;
        let c = 3;
        let g = random_geometry(&mut rng, n, c);
        let step = 1e-5;
        for _ in 0..20 {
            let p = Point3::new(
                off_node(&mut rng, n),
                off_node(&mut rng, n),
                off_node(&mut rng, n),
            );
            let upstream: Vec<f64> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
            let grad = g.query_backward(p, &upstream).unwrap();
            assert_eq!(grad.xy_nodes.len() + grad.xz_nodes.len() + grad.yz_nodes.len(), 12);

            let loss = |gg: &GeometryTriplane, q: Point3| {
                gg.query(q)
                    .unwrap()
                    .iter()
                    .zip(&upstream)
                    .map(|(o, u)| o * u)
                    .sum::<f64>()
            };
            let fd_x = central_diff(|v| loss(&g, Point3::new(v, p.y, p.z)), p.x, step);
            let fd_y = central_diff(|v| loss(&g, Point3::new(p.x, v, p.z)), p.y, step);
            let fd_z = central_diff(|v| loss(&g, Point3::new(p.x, p.y, v)), p.z, step);
            assert_grad_close(grad.dx, fd_x, 1e-6, "dx");
            assert_grad_close(grad.dy, fd_y, 1e-6, "dy");
            assert_grad_close(grad.dz, fd_z, 1e-6, "dz");

            // Spot-check plane-entry gradients on the xz plane.
            for &(i, j, w) in &grad.xz_nodes {
                let ch = rng.random_range(0..c);
                let mut perturbed = g.clone();
                let base = g.xz().get(i, j, ch);
                let fd = central_diff(
                    |v| {
                        perturbed.xz_mut().set(i, j, ch, v);
                        loss(&perturbed, p)
                    },
                    base,
                    step,
                );
                assert_grad_close(w * upstream[ch], fd, 1e-6, "dxz");
            }
        }
    }

    #[test]
    fn superposition_in_plane_entries() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 4;
        let c = 2;
        let g1 = random_geometry(&mut rng, n, c);
        let g2 = random_geometry(&mut rng, n, c);
        let mut sum = g1.clone();
        for (a, b) in sum.planes_mut().into_iter().zip(g2.planes()) {
            for (v, w) in a.data_mut().iter_mut().zip(b.data()) {
                *v += *w;
            }
        }
        for _ in 0..10 {
            let p = Point3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let q1 = g1.query(p).unwrap();
            let q2 = g2.query(p).unwrap();
            let qs = sum.query(p).unwrap();
            for k in 0..c {
                assert!((qs[k] - (q1[k] + q2[k])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_query_equals_plain_at_z_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let t = random_texture(&mut rng, 5, 3);
        for _ in 0..10 {
            let p = Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0);
            assert_eq!(t.query_symmetric(p).unwrap(), t.query_plain(p).unwrap());
        }
    }

    #[test]
    fn symmetric_query_is_bitwise_even_in_z() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let t = random_texture(&mut rng, 6, 4);
        for _ in 0..10_000 {
            let p = Point3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let a = t.query_symmetric(p).unwrap();
            let b = t.query_symmetric(p.mirror_z()).unwrap();
            for k in 0..4 {
                assert_eq!(a[k].to_bits(), b[k].to_bits(), "channel {k} at z={}", p.z);
            }
        }
        // signed zero is its own mirror
        let p0 = Point3::new(0.3, -0.4, 0.0);
        let a = t.query_symmetric(p0).unwrap();
        let b = t.query_symmetric(p0.mirror_z()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn symmetric_query_constant_planes_give_three_c() {
        let mut t = TextureTriplane::zeros(4, 2).unwrap();
        for plane in t.planes_mut() {
            plane.data_mut().fill(0.25);
        }
        let out = t.query_symmetric(Point3::new(0.1, 0.7, -0.6)).unwrap();
        for v in out {
            assert!((v - 0.75).abs() < 1e-12);
        }
    }

    #[test]
    fn plain_equals_symmetric_on_already_symmetric_planes() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let n = 4;
        let mut t = random_texture(&mut rng, n, 2);
        let [_, xz, yz] = t.planes_mut();
        for plane in [xz, yz] {
            for i in 0..n {
                for j in 0..n / 2 {
                    for c in 0..2 {
                        let v = plane.get(i, j, c);
                        plane.set(i, n - 1 - j, c, v);
                    }
                }
            }
        }
        for _ in 0..20 {
            let p = Point3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let plain = t.query_plain(p).unwrap();
            let sym = t.query_symmetric(p).unwrap();
            for k in 0..2 {
                assert!((plain[k] - sym[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_query_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let n = 6;
        let c = 2;
        let t = random_texture(&mut rng, n, c);
        let step = 1e-5;
        for _ in 0..20 {
            let p = Point3::new(
                off_node(&mut rng, n),
                off_node(&mut rng, n),
                off_node(&mut rng, n),
            );
            let upstream: Vec<f64> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
            let grad = t.query_symmetric_backward(p, &upstream).unwrap();

            let loss = |tt: &TextureTriplane, q: Point3| {
                tt.query_symmetric(q)
                    .unwrap()
                    .iter()
                    .zip(&upstream)
                    .map(|(o, u)| o * u)
                    .sum::<f64>()
            };
            let fd_z = central_diff(|v| loss(&t, Point3::new(p.x, p.y, v)), p.z, step);
            assert_grad_close(grad.dz, fd_z, 1e-6, "sym dz");
            let fd_x = central_diff(|v| loss(&t, Point3::new(v, p.y, p.z)), p.x, step);
            assert_grad_close(grad.dx, fd_x, 1e-6, "sym dx");

            // Accumulate duplicate node entries before comparing: the two
            // mirrored samples can hit the same nodes.
            let mut acc = std::collections::HashMap::new();
            for &(i, j, w) in &grad.yz_nodes {
                *acc.entry((i, j)).or_insert(0.0) += w;
            }
            for (&(i, j), &w) in &acc {
                let ch = rng.random_range(0..c);
                let mut perturbed = t.clone();
                let base = t.yz().get(i, j, ch);
                let fd = central_diff(
                    |v| {
                        perturbed.yz_mut().set(i, j, ch, v);
                        loss(&perturbed, p)
                    },
                    base,
                    step,
                );
                assert_grad_close(w * upstream[ch], fd, 1e-6, "sym dyz");
            }
        }
    }

    #[test]
    fn triplane_round_trips_through_binary_format() {
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        let g = random_geometry(&mut rng, 4, 3);
        let mut buf = Vec::new();
        g.write_to(&mut buf).unwrap();
        let parsed = GeometryTriplane::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(parsed, g);
    }
}
