//! MLP decoders from triplane features to field values: a shared
//! two-hidden-layer softplus trunk with either an SDF+deformation head
//! (identity + tanh) or an RGB head (sigmoid).

use std::io::{Read, Write};

use rand::Rng;

use crate::{io, Error, Result};

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Numerically stable `ln(1 + e^x)`.
#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Output head of a decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    /// 4 outputs: raw SDF scalar plus three tanh deformation components.
    SdfDeform,
    /// 3 outputs: RGB through a sigmoid, strictly inside (0,1)³.
    Color,
}

impl HeadKind {
    pub fn output_dim(self) -> usize {
        match self {
            HeadKind::SdfDeform => 4,
            HeadKind::Color => 3,
        }
    }

    fn byte(self) -> u8 {
        match self {
            HeadKind::SdfDeform => b'S',
            HeadKind::Color => b'C',
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        match b {
            b'S' => Ok(HeadKind::SdfDeform),
            b'C' => Ok(HeadKind::Color),
            other => Err(Error::Format(format!("unknown decoder head byte 0x{other:02x}"))),
        }
    }
}

/// `input -> hidden -> hidden -> output` perceptron with softplus hidden
/// activations. Parameters live in one flat vector laid out as
/// `W1 (H×C row-major), b1, W2 (H×H), b2, W3 (K×H), b3`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpDecoder {
    head: HeadKind,
    input: usize,
    hidden: usize,
    params: Vec<f64>,
}

/// Cached activations of one decoder forward pass.
#[derive(Debug, Clone)]
pub struct DecoderForward {
    feature: Vec<f64>,
    pre1: Vec<f64>,
    h1: Vec<f64>,
    pre2: Vec<f64>,
    h2: Vec<f64>,
    pub output: Vec<f64>,
}

/// Gradients of one decoder pass: flat parameter gradient (same layout
/// as [`MlpDecoder::params`]) plus the input-feature gradient.
#[derive(Debug, Clone)]
pub struct DecoderGrad {
    pub params: Vec<f64>,
    pub feature: Vec<f64>,
}

impl MlpDecoder {
    fn check_dims(input: usize, hidden: usize) -> Result<()> {
        if input == 0 || hidden == 0 {
            return Err(Error::InvalidInput(format!(
                "decoder widths must be positive, got input {input}, hidden {hidden}"
            )));
        }
        Ok(())
    }

    pub fn zeros(head: HeadKind, input: usize, hidden: usize) -> Result<Self> {
        Self::check_dims(input, hidden)?;
        let k = head.output_dim();
        let count = hidden * input + hidden + hidden * hidden + hidden + k * hidden + k;
        Ok(Self { head, input, hidden, params: vec![0.0; count] })
    }

    /// Per-layer uniform init in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    /// The SDF output bias starts at +0.3 so the initial surface is a
    /// small blob instead of empty or full space.
    pub fn init<R: Rng>(head: HeadKind, input: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        let mut dec = Self::zeros(head, input, hidden)?;
        let (h, c, k) = (hidden, input, head.output_dim());
        let spans = [(h * c, c), (h, c), (h * h, h), (h, h), (k * h, h), (k, h)];
        let mut offset = 0;
        for (len, fan_in) in spans {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in &mut dec.params[offset..offset + len] {
                *v = rng.random_range(-bound..bound);
            }
            offset += len;
        }
        if head == HeadKind::SdfDeform {
            let b3 = dec.b3_offset();
            dec.params[b3] = 0.3;
        }
        Ok(dec)
    }

    pub fn head(&self) -> HeadKind {
        self.head
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    pub fn output_dim(&self) -> usize {
        self.head.output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "decoder takes {} params, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    // flat-layout offsets
    fn w1(&self) -> &[f64] {
        &self.params[..self.hidden * self.input]
    }
    fn b1_offset(&self) -> usize {
        self.hidden * self.input
    }
    fn w2_offset(&self) -> usize {
        self.b1_offset() + self.hidden
    }
    fn b2_offset(&self) -> usize {
        self.w2_offset() + self.hidden * self.hidden
    }
    fn w3_offset(&self) -> usize {
        self.b2_offset() + self.hidden
    }
    fn b3_offset(&self) -> usize {
        self.w3_offset() + self.output_dim() * self.hidden
    }

    /// Forward pass keeping the activations the backward pass needs.
    pub fn forward(&self, feature: &[f64]) -> Result<DecoderForward> {
        if feature.len() != self.input {
            return Err(Error::ShapeMismatch(format!(
                "decoder input has {} entries for width {}",
                feature.len(),
                self.input
            )));
        }
        let h = self.hidden;
        let k = self.output_dim();
        let w1 = self.w1();
        let b1 = &self.params[self.b1_offset()..self.w2_offset()];
        let mut pre1 = vec![0.0; h];
        for r in 0..h {
            let mut acc = b1[r];
            for (wv, fv) in w1[r * self.input..(r + 1) * self.input].iter().zip(feature) {
                acc += wv * fv;
            }
            pre1[r] = acc;
        }
        let h1: Vec<f64> = pre1.iter().map(|&x| softplus(x)).collect();

        let w2 = &self.params[self.w2_offset()..self.b2_offset()];
        let b2 = &self.params[self.b2_offset()..self.w3_offset()];
        let mut pre2 = vec![0.0; h];
        for r in 0..h {
            let mut acc = b2[r];
            for (wv, hv) in w2[r * h..(r + 1) * h].iter().zip(&h1) {
                acc += wv * hv;
            }
            pre2[r] = acc;
        }
        let h2: Vec<f64> = pre2.iter().map(|&x| softplus(x)).collect();

        let w3 = &self.params[self.w3_offset()..self.b3_offset()];
        let b3 = &self.params[self.b3_offset()..];
        let mut raw = vec![0.0; k];
        for r in 0..k {
            let mut acc = b3[r];
            for (wv, hv) in w3[r * h..(r + 1) * h].iter().zip(&h2) {
                acc += wv * hv;
            }
            raw[r] = acc;
        }
        let output = match self.head {
            HeadKind::SdfDeform => {
                let mut out = raw;
                for v in &mut out[1..] {
                    *v = v.tanh();
                }
                out
            }
            HeadKind::Color => raw.iter().map(|&x| sigmoid(x)).collect(),
        };
        Ok(DecoderForward { feature: feature.to_vec(), pre1, h1, pre2, h2, output })
    }

    /// Head outputs without the cached intermediates.
    pub fn decode(&self, feature: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(feature)?.output)
    }

    /// SDF value and (pre-scaling) deformation vector. Head must be
    /// [`HeadKind::SdfDeform`].
    pub fn decode_sdf_deform(&self, feature: &[f64]) -> Result<(f64, [f64; 3])> {
        if self.head != HeadKind::SdfDeform {
            return Err(Error::InvalidInput("decoder head is not sdf+deform".into()));
        }
        let out = self.decode(feature)?;
        Ok((out[0], [out[1], out[2], out[3]]))
    }

    /// RGB in (0,1)³. Head must be [`HeadKind::Color`].
    pub fn decode_color(&self, feature: &[f64]) -> Result<[f64; 3]> {
        if self.head != HeadKind::Color {
            return Err(Error::InvalidInput("decoder head is not color".into()));
        }
        let out = self.decode(feature)?;
        Ok([out[0], out[1], out[2]])
    }

    /// Chain rule from `upstream = dL/d(head output)` to every parameter
    /// and the input feature.
    pub fn backward(&self, fwd: &DecoderForward, upstream: &[f64]) -> Result<DecoderGrad> {
        let h = self.hidden;
        let c = self.input;
        let k = self.output_dim();
        if upstream.len() != k {
            return Err(Error::ShapeMismatch(format!(
                "upstream has {} entries for {k} outputs",
                upstream.len()
            )));
        }
        let mut d_raw = vec![0.0; k];
        match self.head {
            HeadKind::SdfDeform => {
                d_raw[0] = upstream[0];
                for r in 1..k {
                    let t = fwd.output[r];
                    d_raw[r] = upstream[r] * (1.0 - t * t);
                }
            }
            HeadKind::Color => {
                for r in 0..k {
                    let s = fwd.output[r];
                    d_raw[r] = upstream[r] * s * (1.0 - s);
                }
            }
        }

        let mut grad = vec![0.0; self.params.len()];
        let w3 = &self.params[self.w3_offset()..self.b3_offset()];
        let (g_w3_base, g_b3_base) = (self.w3_offset(), self.b3_offset());
        let mut d_h2 = vec![0.0; h];
        for r in 0..k {
            let g = d_raw[r];
            grad[g_b3_base + r] = g;
            for j in 0..h {
                grad[g_w3_base + r * h + j] = g * fwd.h2[j];
                d_h2[j] += g * w3[r * h + j];
            }
        }

        let d_pre2: Vec<f64> = d_h2
            .iter()
            .zip(&fwd.pre2)
            .map(|(&d, &x)| d * sigmoid(x))
            .collect();
        let w2 = &self.params[self.w2_offset()..self.b2_offset()];
        let (g_w2_base, g_b2_base) = (self.w2_offset(), self.b2_offset());
        let mut d_h1 = vec![0.0; h];
        for r in 0..h {
            let g = d_pre2[r];
            grad[g_b2_base + r] = g;
            if g == 0.0 {
                continue;
            }
            for j in 0..h {
                grad[g_w2_base + r * h + j] = g * fwd.h1[j];
                d_h1[j] += g * w2[r * h + j];
            }
        }

        let d_pre1: Vec<f64> = d_h1
            .iter()
            .zip(&fwd.pre1)
            .map(|(&d, &x)| d * sigmoid(x))
            .collect();
        let w1 = self.w1();
        let g_b1_base = self.b1_offset();
        let mut d_feature = vec![0.0; c];
        for r in 0..h {
            let g = d_pre1[r];
            grad[g_b1_base + r] = g;
            if g == 0.0 {
                continue;
            }
            for j in 0..c {
                grad[r * c + j] = g * fwd.feature[j];
                d_feature[j] += g * w1[r * c + j];
            }
        }

        Ok(DecoderGrad { params: grad, feature: d_feature })
    }

    /// Serializes as `"STMD"`, head byte, input/hidden/output widths as
    /// u32, then the flat parameter vector little-endian.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        io::write_magic(w, b"STMD")?;
        io::write_u8(w, self.head.byte())?;
        io::write_u32(w, self.input as u32)?;
        io::write_u32(w, self.hidden as u32)?;
        io::write_u32(w, self.output_dim() as u32)?;
        io::write_f64_slice(w, &self.params)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        io::expect_magic(r, b"STMD")?;
        let head = HeadKind::from_byte(io::read_u8(r)?)?;
        let input = io::read_u32(r)? as usize;
        let hidden = io::read_u32(r)? as usize;
        let output = io::read_u32(r)? as usize;
        if output != head.output_dim() {
            return Err(Error::Format(format!(
                "decoder header output width {output} does not match head"
            )));
        }
        let mut dec = Self::zeros(head, input, hidden)?;
        dec.params = io::read_f64_vec(r, dec.params.len())?;
        Ok(dec)
    }
}
