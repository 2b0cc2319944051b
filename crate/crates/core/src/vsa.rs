//! View-wise spatial attention: per-plane channel pooling, a 7×7
//! two-channel no-bias convolution, and a sigmoid produce an attention
//! map that is multiplied elementwise into the plane.

use std::io::{Read, Write};

use rand::Rng;

use crate::planes::FeaturePlane;
use crate::triplane::GeometryTriplane;
use crate::{io, Error, Result};

/// Kernel taps per attention kernel: 7×7 window × 2 pooled channels.
pub const KERNEL_PARAMS: usize = 98;
const KSIZE: usize = 7;
const PAD: isize = 3;

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One 7×7×2 convolution kernel, no bias. Weight layout is row-major
/// `(i, j, channel)` with channel 0 = mean map, channel 1 = max map.
#[derive(Debug, Clone, PartialEq)]
pub struct VsaKernel {
    weights: Vec<f64>,
}

impl VsaKernel {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() != KERNEL_PARAMS {
            return Err(Error::ShapeMismatch(format!(
                "attention kernel needs {KERNEL_PARAMS} weights, got {}",
                weights.len()
            )));
        }
        Ok(Self { weights })
    }

    pub fn zeros() -> Self {
        Self { weights: vec![0.0; KERNEL_PARAMS] }
    }

    /// Uniform init in `[-1/sqrt(98), 1/sqrt(98)]`.
    pub fn init<R: Rng>(rng: &mut R) -> Self {
        let bound = 1.0 / (KERNEL_PARAMS as f64).sqrt();
        Self {
            weights: (0..KERNEL_PARAMS).map(|_| rng.random_range(-bound..bound)).collect(),
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Attention map for one plane: sigmoid of the convolution of the
    /// channel-mean and channel-max maps.
    pub fn attention_map(&self, plane: &FeaturePlane) -> AttentionMap {
        self.attention_forward(plane).map
    }

    /// Forward pass keeping the intermediates the backward pass needs.
    pub fn attention_forward(&self, plane: &FeaturePlane) -> AttentionForward {
        let n = plane.resolution();
        let c = plane.channels();
        let mut mean = vec![0.0; n * n];
        let mut max = vec![0.0; n * n];
        let mut argmax = vec![0usize; n * n];
        for i in 0..n {
            for j in 0..n {
                let px = i * n + j;
                let mut sum = 0.0;
                let mut best = plane.get(i, j, 0);
                let mut best_c = 0;
                for k in 0..c {
                    let v = plane.get(i, j, k);
                    sum += v;
                    // strict '>' keeps the lowest channel on ties
                    if v > best {
                        best = v;
                        best_c = k;
                    }
                }
                mean[px] = sum / c as f64;
                max[px] = best;
                argmax[px] = best_c;
            }
        }
        let pre = self.conv(&mean, &max, n);
        let values: Vec<f64> = pre.iter().map(|&x| sigmoid(x)).collect();
        AttentionForward {
            mean,
            max,
            argmax,
            map: AttentionMap { resolution: n, values },
        }
    }

    /// 7×7 convolution of the 2-channel pooled input, zero padding 3.
    fn conv(&self, mean: &[f64], max: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for di in 0..KSIZE {
                    let a = i as isize + di as isize - PAD;
                    if a < 0 || a >= n as isize {
                        continue;
                    }
                    for dj in 0..KSIZE {
                        let b = j as isize + dj as isize - PAD;
                        if b < 0 || b >= n as isize {
                            continue;
                        }
                        let src = a as usize * n + b as usize;
                        let w = (di * KSIZE + dj) * 2;
                        acc += self.weights[w] * mean[src] + self.weights[w + 1] * max[src];
                    }
                }
                out[i * n + j] = acc;
            }
        }
        out
    }

    /// Chain rule from an attention-map gradient back to this kernel's
    /// weights and the plane entries. Mean pooling distributes `1/C`;
    /// max pooling routes to the argmax channel recorded in `fwd`.
    pub fn attention_backward(
        &self,
        plane: &FeaturePlane,
        fwd: &AttentionForward,
        d_map: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = plane.resolution();
        let c = plane.channels();
        if d_map.len() != n * n {
            return Err(Error::ShapeMismatch(format!(
                "attention gradient has {} entries for resolution {n}",
                d_map.len()
            )));
        }
        let mut d_kernel = vec![0.0; KERNEL_PARAMS];
        let mut d_mean = vec![0.0; n * n];
        let mut d_max = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let px = i * n + j;
                let s = fwd.map.values[px];
                let g = d_map[px] * s * (1.0 - s);
                if g == 0.0 {
                    continue;
                }
                for di in 0..KSIZE {
                    let a = i as isize + di as isize - PAD;
                    if a < 0 || a >= n as isize {
                        continue;
                    }
                    for dj in 0..KSIZE {
                        let b = j as isize + dj as isize - PAD;
                        if b < 0 || b >= n as isize {
                            continue;
                        }
                        let src = a as usize * n + b as usize;
                        let w = (di * KSIZE + dj) * 2;
                        d_kernel[w] += g * fwd.mean[src];
                        d_kernel[w + 1] += g * fwd.max[src];
                        d_mean[src] += g * self.weights[w];
                        d_max[src] += g * self.weights[w + 1];
                    }
                }
            }
        }
        let mut d_plane = vec![0.0; n * n * c];
        let inv_c = 1.0 / c as f64;
        for px in 0..n * n {
            let base = px * c;
            for k in 0..c {
                d_plane[base + k] += d_mean[px] * inv_c;
            }
            d_plane[base + fwd.argmax[px]] += d_max[px];
        }
        Ok((d_kernel, d_plane))
    }
}

/// An `N×N` map of attention weights in `(0,1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    resolution: usize,
    values: Vec<f64>,
}

impl AttentionMap {
    pub fn new(resolution: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != resolution * resolution {
            return Err(Error::ShapeMismatch(format!(
                "attention map has {} values for resolution {resolution}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!(
                "attention values must lie in [0,1], got {v}"
            )));
        }
        Ok(Self { resolution, values })
    }

    /// Constant map, handy for tests and for disabling attention.
    pub fn constant(resolution: usize, value: f64) -> Result<Self> {
        Self::new(resolution, vec![value; resolution * resolution])
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.resolution + j]
    }

    /// Reverses the second index, mirroring the map in z for planes whose
    /// second axis is Z.
    pub fn flip(&self) -> AttentionMap {
        let n = self.resolution;
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                values[i * n + j] = self.values[i * n + (n - 1 - j)];
            }
        }
        AttentionMap { resolution: n, values }
    }
}

/// Elementwise modulation: `out[i,j,c] = map[i,j] * plane[i,j,c]`.
pub fn apply_attention(map: &AttentionMap, plane: &FeaturePlane) -> Result<FeaturePlane> {
    let n = plane.resolution();
    if map.resolution() != n {
        return Err(Error::ShapeMismatch(format!(
            "attention map resolution {} != plane resolution {n}",
            map.resolution()
        )));
    }
    let c = plane.channels();
    let mut out = plane.clone();
    for i in 0..n {
        for j in 0..n {
            let a = map.get(i, j);
            for k in 0..c {
                out.set(i, j, k, a * plane.get(i, j, k));
            }
        }
    }
    Ok(out)
}

/// Backward of [`apply_attention`]: gradients with respect to the map
/// and the plane given `d_out` over the modulated plane (dense, plane
/// data order).
pub fn apply_attention_backward(
    map: &AttentionMap,
    plane: &FeaturePlane,
    d_out: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = plane.resolution();
    let c = plane.channels();
    if map.resolution() != n {
        return Err(Error::ShapeMismatch("attention map / plane resolution".into()));
    }
    if d_out.len() != n * n * c {
        return Err(Error::ShapeMismatch(format!(
            "upstream has {} entries for {}x{}x{} plane",
            d_out.len(),
            n,
            n,
            c
        )));
    }
    let mut d_map = vec![0.0; n * n];
    let mut d_plane = vec![0.0; n * n * c];
    for i in 0..n {
        for j in 0..n {
            let px = i * n + j;
            let a = map.get(i, j);
            for k in 0..c {
                let idx = px * c + k;
                d_map[px] += d_out[idx] * plane.get(i, j, k);
                d_plane[idx] = a * d_out[idx];
            }
        }
    }
    Ok((d_map, d_plane))
}

/// Cached intermediates of one kernel's attention forward pass; the
/// sigmoid derivative is recovered from the map itself.
#[derive(Debug, Clone)]
pub struct AttentionForward {
    mean: Vec<f64>,
    max: Vec<f64>,
    argmax: Vec<usize>,
    pub map: AttentionMap,
}

/// Three attention kernels, one per triplane plane. 294 parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct VsaModule {
    pub xy: VsaKernel,
    pub xz: VsaKernel,
    pub yz: VsaKernel,
}

/// Gradients of a full module forward: per-kernel weights plus dense
/// gradients over the three ORIGINAL plane data arrays.
#[derive(Debug, Clone)]
pub struct VsaGrad {
    pub kernels: [Vec<f64>; 3],
    pub planes: [Vec<f64>; 3],
}

/// Forward cache for [`VsaModule::attend`].
#[derive(Debug, Clone)]
pub struct VsaForward {
    pub per_plane: [AttentionForward; 3],
}

impl VsaForward {
    pub fn maps(&self) -> [&AttentionMap; 3] {
        [&self.per_plane[0].map, &self.per_plane[1].map, &self.per_plane[2].map]
    }
}

impl VsaModule {
    pub fn zeros() -> Self {
        Self { xy: VsaKernel::zeros(), xz: VsaKernel::zeros(), yz: VsaKernel::zeros() }
    }

    pub fn init<R: Rng>(rng: &mut R) -> Self {
        Self {
            xy: VsaKernel::init(rng),
            xz: VsaKernel::init(rng),
            yz: VsaKernel::init(rng),
        }
    }

    /// Total trainable parameters: 3 kernels × 98 = 294.
    pub fn param_count(&self) -> usize {
        3 * KERNEL_PARAMS
    }

    /// Multiply-accumulates of one module forward at plane resolution
    /// `n`, counting the three convolutions (98 taps per output pixel,
    /// boundary taps included in the budget). Pooling contributes only
    /// adds and compares, which are not MACs.
    pub fn mac_count(n: usize) -> usize {
        3 * KERNEL_PARAMS * n * n
    }

    pub fn kernels(&self) -> [&VsaKernel; 3] {
        [&self.xy, &self.xz, &self.yz]
    }

    pub fn kernels_mut(&mut self) -> [&mut VsaKernel; 3] {
        [&mut self.xy, &mut self.xz, &mut self.yz]
    }

    /// All 294 weights in fixed plane order xy, xz, yz.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * KERNEL_PARAMS);
        for k in self.kernels() {
            out.extend_from_slice(k.weights());
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != 3 * KERNEL_PARAMS {
            return Err(Error::ShapeMismatch(format!(
                "module takes {} params, got {}",
                3 * KERNEL_PARAMS,
                params.len()
            )));
        }
        for (slot, k) in self.kernels_mut().into_iter().enumerate() {
            k.weights_mut()
                .copy_from_slice(&params[slot * KERNEL_PARAMS..(slot + 1) * KERNEL_PARAMS]);
        }
        Ok(())
    }

    /// Attends every plane of a triplane with its own kernel. Returns the
    /// modulated triplane and the forward cache (whose maps feed the
    /// attention-symmetry loss).
    pub fn attend(&self, g: &GeometryTriplane) -> Result<(GeometryTriplane, VsaForward)> {
        let fxy = self.xy.attention_forward(g.xy());
        let fxz = self.xz.attention_forward(g.xz());
        let fyz = self.yz.attention_forward(g.yz());
        let axy = apply_attention(&fxy.map, g.xy())?;
        let axz = apply_attention(&fxz.map, g.xz())?;
        let ayz = apply_attention(&fyz.map, g.yz())?;
        Ok((
            GeometryTriplane::new(axy, axz, ayz)?,
            VsaForward { per_plane: [fxy, fxz, fyz] },
        ))
    }

    /// Backward of [`VsaModule::attend`].
    ///
    /// `d_attended` holds dense gradients over the three modulated
    /// planes' data; `d_maps`, when present, holds extra gradients
    /// arriving directly at the attention maps (the symmetry loss path).
    pub fn attend_backward(
        &self,
        g: &GeometryTriplane,
        fwd: &VsaForward,
        d_attended: &[Vec<f64>; 3],
        d_maps: Option<&[Vec<f64>; 3]>,
    ) -> Result<VsaGrad> {
        let n = g.resolution();
        let mut kernels: [Vec<f64>; 3] = Default::default();
        let mut planes: [Vec<f64>; 3] = Default::default();
        let kernel_refs = self.kernels();
        for (slot, plane) in g.planes().into_iter().enumerate() {
            let f = &fwd.per_plane[slot];
            let (d_map_prod, d_plane_direct) =
                apply_attention_backward(&f.map, plane, &d_attended[slot])?;
            let mut d_map = d_map_prod;
            if let Some(extra) = d_maps {
                if extra[slot].len() != n * n {
                    return Err(Error::ShapeMismatch(format!(
                        "map gradient {slot} has {} entries for resolution {n}",
                        extra[slot].len()
                    )));
                }
                for (d, e) in d_map.iter_mut().zip(&extra[slot]) {
                    *d += *e;
                }
            }
            let (d_kernel, mut d_plane) = kernel_refs[slot].attention_backward(plane, f, &d_map)?;
            for (d, direct) in d_plane.iter_mut().zip(&d_plane_direct) {
                *d += *direct;
            }
            kernels[slot] = d_kernel;
            planes[slot] = d_plane;
        }
        Ok(VsaGrad { kernels, planes })
    }

    /// Serializes as `"STVK"` plus 294 little-endian f64 in plane order
    /// xy, xz, yz, each kernel row-major `(i, j, channel)`.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        io::write_magic(w, b"STVK")?;
        for k in self.kernels() {
            io::write_f64_slice(w, k.weights())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        io::expect_magic(r, b"STVK")?;
        let xy = VsaKernel::new(io::read_f64_vec(r, KERNEL_PARAMS)?)?;
        let xz = VsaKernel::new(io::read_f64_vec(r, KERNEL_PARAMS)?)?;
        let yz = VsaKernel::new(io::read_f64_vec(r, KERNEL_PARAMS)?)?;
        Ok(Self { xy, xz, yz })
    }
}
