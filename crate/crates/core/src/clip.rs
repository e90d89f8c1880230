//! Frame stacks shared by the body and proficiency models.

use crate::error::{Error, Result};

/// `T × H × W × 3` video in `[0, 1]`, frames oldest first.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoClip {
    frames: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl VideoClip {
    pub fn new(frames: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if frames == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidInput("video clip dimensions must be positive".into()));
        }
        if data.len() != frames * height * width * 3 {
            return Err(Error::Shape(format!(
                "{frames}x{height}x{width}x3 clip needs {} values, got {}",
                frames * height * width * 3,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite() || !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput("video values must be finite and in [0, 1]".into()));
        }
        Ok(Self {
            frames,
            height,
            width,
            data,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.height * self.width * 3;
        &self.data[t * n..(t + 1) * n]
    }

    /// The last `n` frames, or every `step`-th counting back from the last.
    pub fn tail(&self, n: usize, step: usize) -> Result<VideoClip> {
        let picked = tail_indices(self.frames, n, step)?;
        let data = picked.iter().flat_map(|&t| self.frame(t).iter().copied()).collect();
        Ok(VideoClip {
            frames: n,
            height: self.height,
            width: self.width,
            data,
        })
    }

    pub fn reversed(&self) -> VideoClip {
        let data = (0..self.frames).rev().flat_map(|t| self.frame(t).iter().copied()).collect();
        VideoClip { data, ..self.clone() }
    }
}

/// `T × H × W` nonnegative relative depth, frames oldest first.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthSequence {
    frames: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl DepthSequence {
    pub fn new(frames: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if frames == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidInput("depth dimensions must be positive".into()));
        }
        if data.len() != frames * height * width {
            return Err(Error::Shape(format!(
                "{frames}x{height}x{width} depth needs {} values, got {}",
                frames * height * width,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput("depth values must be finite and nonnegative".into()));
        }
        Ok(Self {
            frames,
            height,
            width,
            data,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[t * n..(t + 1) * n]
    }

    pub fn tail(&self, n: usize, step: usize) -> Result<DepthSequence> {
        let picked = tail_indices(self.frames, n, step)?;
        let data = picked.iter().flat_map(|&t| self.frame(t).iter().copied()).collect();
        Ok(DepthSequence {
            frames: n,
            height: self.height,
            width: self.width,
            data,
        })
    }

    pub fn reversed(&self) -> DepthSequence {
        let data = (0..self.frames).rev().flat_map(|t| self.frame(t).iter().copied()).collect();
        DepthSequence { data, ..self.clone() }
    }
}

/// Indices of `n` frames ending at the last one, `step` apart, oldest first.
pub(crate) fn tail_indices(frames: usize, n: usize, step: usize) -> Result<Vec<usize>> {
    if n == 0 || step == 0 || (n - 1) * step >= frames {
        return Err(Error::Range(format!(
            "cannot take {n} frames at step {step} from {frames}"
        )));
    }
    Ok((0..n).map(|i| frames - 1 - (n - 1 - i) * step).collect())
}
