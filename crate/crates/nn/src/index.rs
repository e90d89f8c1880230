//! Index builders for [`crate::Tape::gather`].
//!
//! Spatial tensors are stored as `positions × channels` with positions in
//! row-major `(batch, time, y, x)` order. Every builder returns the flat
//! source index of each output element, with [`GATHER_ZERO`] for padding.

use std::rc::Rc;

pub use crate::tape::GATHER_ZERO;

/// Geometry of a 3-D (time × height × width) sliding window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window3 {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl Window3 {
    pub fn new(kernel: [usize; 3], stride: [usize; 3], padding: [usize; 3]) -> Self {
        Self {
            kernel,
            stride,
            padding,
        }
    }

    /// Non-overlapping 2-D patches of side `size`.
    pub fn patches2d(size: usize) -> Self {
        Self::new([1, size, size], [1, size, size], [0, 0, 0])
    }

    pub fn output_dims(&self, dims: [usize; 3]) -> [usize; 3] {
        let mut out = [0; 3];
        for a in 0..3 {
            let padded = dims[a] + 2 * self.padding[a];
            assert!(padded >= self.kernel[a], "window larger than padded input");
            out[a] = (padded - self.kernel[a]) / self.stride[a] + 1;
        }
        out
    }

    pub fn patch_len(&self, channels: usize) -> usize {
        self.kernel.iter().product::<usize>() * channels
    }
}

/// im2col over a batch of `(t, h, w)` volumes with `channels` columns.
///
/// Output rows enumerate `(batch, ot, oy, ox)`; columns enumerate
/// `(kt, ky, kx, channel)`.
pub fn im2col(batch: usize, dims: [usize; 3], channels: usize, win: Window3) -> (Rc<[u32]>, [usize; 3]) {
    let out = win.output_dims(dims);
    let [t, h, w] = dims;
    let mut idx = Vec::with_capacity(batch * out.iter().product::<usize>() * win.patch_len(channels));
    for b in 0..batch {
        for ot in 0..out[0] {
            for oy in 0..out[1] {
                for ox in 0..out[2] {
                    for kt in 0..win.kernel[0] {
                        let st = (ot * win.stride[0] + kt).checked_sub(win.padding[0]).filter(|v| *v < t);
                        for ky in 0..win.kernel[1] {
                            let sy = (oy * win.stride[1] + ky).checked_sub(win.padding[1]).filter(|v| *v < h);
                            for kx in 0..win.kernel[2] {
                                let sx = (ox * win.stride[2] + kx).checked_sub(win.padding[2]).filter(|v| *v < w);
                                match (st, sy, sx) {
                                    (Some(st), Some(sy), Some(sx)) => {
                                        let base = (((b * t + st) * h + sy) * w + sx) * channels;
                                        idx.extend((0..channels).map(|c| (base + c) as u32));
                                    }
                                    _ => idx.extend(std::iter::repeat_n(GATHER_ZERO, channels)),
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (idx.into(), out)
}

/// Tiles an `rows × cols` matrix `times` times vertically.
pub fn repeat_rows(rows: usize, cols: usize, times: usize) -> Rc<[u32]> {
    (0..times)
        .flat_map(|_| 0..(rows * cols) as u32)
        .collect::<Vec<_>>()
        .into()
}

/// Selects whole rows (in the given order) from a matrix with `cols` columns.
pub fn select_rows(cols: usize, rows: &[usize]) -> Rc<[u32]> {
    rows.iter()
        .flat_map(|r| (r * cols..(r + 1) * cols).map(|i| i as u32))
        .collect::<Vec<_>>()
        .into()
}

/// Mirrors each `(h, w)` image of a batch along the width axis.
pub fn hflip(batch: usize, height: usize, width: usize, channels: usize) -> Rc<[u32]> {
    let mut idx = Vec::with_capacity(batch * height * width * channels);
    for b in 0..batch {
        for y in 0..height {
            for x in 0..width {
                let base = ((b * height + y) * width + (width - 1 - x)) * channels;
                idx.extend((0..channels).map(|c| (base + c) as u32));
            }
        }
    }
    idx.into()
}
