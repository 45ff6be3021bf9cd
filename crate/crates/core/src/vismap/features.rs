use std::ops::Range;

use rand::Rng;

use super::{HolderLayout, VisualMap};
use crate::autodiff::Tape;
use crate::error::{contract, Result};
use crate::frame::Frame;
use crate::tensor::Tensor;

/// A small ConvNet (one convolution, one dense layer, ReLU after each)
/// mapping a single-channel image to a feature vector.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureEncoder {
    pub input_height: usize,
    pub input_width: usize,
    pub stride: usize,
    /// `[kernels, conv bias, dense weights, dense bias]`.
    pub params: Vec<Tensor<f32>>,
}

impl FeatureEncoder {
    pub fn new<R: Rng>(
        input_height: usize,
        input_width: usize,
        filters: usize,
        kernel: usize,
        stride: usize,
        output_len: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if kernel == 0 || stride == 0 || kernel > input_height || kernel > input_width {
            return Err(contract(format!(
                "encoder: kernel {kernel}, stride {stride} on {input_height}x{input_width} input"
            )));
        }
        let oh = (input_height - kernel) / stride + 1;
        let ow = (input_width - kernel) / stride + 1;
        let mut uniform = |shape: &[usize], fan_in: usize| {
            let bound = 1.0 / (fan_in as f32).sqrt();
            let n = shape.iter().product();
            Tensor::new(
                shape.to_vec(),
                (0..n).map(|_| rng.gen_range(-bound..bound)).collect(),
            )
        };
        let conv_fan = kernel * kernel;
        let fc_fan = filters * oh * ow;
        Ok(Self {
            input_height,
            input_width,
            stride,
            params: vec![
                uniform(&[filters, 1, kernel, kernel], conv_fan)?,
                uniform(&[filters], conv_fan)?,
                uniform(&[output_len, fc_fan], fc_fan)?,
                uniform(&[output_len], fc_fan)?,
            ],
        })
    }

    pub fn output_len(&self) -> usize {
        self.params[3].len()
    }

    pub fn encode(&self, image: &Frame) -> Result<Vec<f32>> {
        if (image.height(), image.width()) != (self.input_height, self.input_width) {
            return Err(contract(format!(
                "encoder expects {}x{} input, got {}x{}",
                self.input_width,
                self.input_height,
                image.width(),
                image.height()
            )));
        }
        let mut tape = Tape::new(&self.params);
        let x = tape.constant(Tensor::new(
            vec![1, self.input_height, self.input_width],
            image.pixels().iter().map(|&p| p as f32 / 255.0).collect(),
        )?);
        let (k, b, w, c) = (tape.param(0)?, tape.param(1)?, tape.param(2)?, tape.param(3)?);
        let h = tape.conv2d(x, k, Some(b), self.stride)?;
        let h = tape.relu(h);
        let out = tape.dense(h, w, Some(c))?;
        let out = tape.relu(out);
        Ok(tape.value(out).data().to_vec())
    }
}

/// Segment of each encoder's output in the concatenated feature vector.
/// Depends only on the encoders, never on statuses.
pub fn feature_segments(encoders: &[FeatureEncoder]) -> Vec<Range<usize>> {
    let mut start = 0;
    encoders
        .iter()
        .map(|e| {
            let r = start..start + e.output_len();
            start = r.end;
            r
        })
        .collect()
}

/// Encodes the environment region with `encoders[0]` and the glyph of the
/// `i`-th mapped agent with `encoders[i + 1]`, then concatenates. An agent
/// showing no glyph is encoded from a blank image.
pub fn compose_features(
    frame: &Frame,
    map: &VisualMap,
    encoders: &[FeatureEncoder],
    holder: &HolderLayout,
) -> Result<Vec<f32>> {
    if encoders.len() != map.len() + 1 {
        return Err(contract(format!(
            "{} encoders for {} mapped agents, need {}",
            encoders.len(),
            map.len(),
            map.len() + 1
        )));
    }
    let total = feature_segments(encoders).last().map_or(0, |r| r.end);
    let mut out = Vec::with_capacity(total);
    out.extend(encoders[0].encode(&frame.crop(holder.frame_region)?)?);
    for (entry, enc) in map.entries.iter().zip(&encoders[1..]) {
        let image = match &entry.glyph {
            Some(g) => Frame::from_pixels(g.stencil.width, g.stencil.height, g.stencil.pixels.clone())?,
            None => Frame::new(enc.input_width, enc.input_height),
        };
        out.extend(enc.encode(&image)?);
    }
    Ok(out)
}
