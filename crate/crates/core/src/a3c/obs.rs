use std::collections::VecDeque;

use crate::error::{contract, Result};
use crate::frame::Frame;
use crate::tensor::Tensor;

/// Pixel bytes scaled to `[0, 1]`.
pub fn frame_to_input(frame: &Frame) -> Vec<f32> {
    frame.pixels().iter().map(|&p| p as f32 / 255.0).collect()
}

/// The last `depth` observations, oldest first. After a reset the first
/// observation fills every slot.
#[derive(Clone, Debug)]
pub struct ObservationStack {
    depth: usize,
    frames: VecDeque<Frame>,
}

impl ObservationStack {
    pub fn new(depth: usize, first: Frame) -> Result<Self> {
        if depth == 0 {
            return Err(contract("observation stack depth must be positive"));
        }
        Ok(Self {
            depth,
            frames: std::iter::repeat_n(first, depth).collect(),
        })
    }

    pub fn reset(&mut self, first: Frame) {
        self.frames.clear();
        self.frames.extend(std::iter::repeat_n(first, self.depth));
    }

    pub fn push(&mut self, frame: Frame) {
        self.frames.pop_front();
        self.frames.push_back(frame);
    }

    pub fn frames(&self) -> impl Iterator<Item = &Frame> {
        self.frames.iter()
    }

    /// `[depth, height, width]` network input.
    pub fn to_tensor(&self) -> Result<Tensor<f32>> {
        let f = &self.frames[0];
        let (w, h) = (f.width(), f.height());
        let mut data = Vec::with_capacity(self.depth * w * h);
        for frame in &self.frames {
            if (frame.width(), frame.height()) != (w, h) {
                return Err(contract("stacked frames differ in size"));
            }
            data.extend(frame.pixels().iter().map(|&p| p as f32 / 255.0));
        }
        Tensor::new(vec![self.depth, h, w], data)
    }
}
