use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, Axis};
use rand::Rng;

use super::{Parameters, Tensor2};
use crate::error::{Error, Result};

/// Centered ("same"-padded) dilated 1-D convolution over the time axis.
///
/// `weight[j]` is the `in × out` matrix applied to the input sample at
/// offset `(j - (k-1)/2) * dilation`. Out-of-range taps read zeros, so the
/// output has as many rows as the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub kernel_size: usize,
    pub dilation: usize,
    pub weight: Array3<f64>,
    pub bias: Array1<f64>,
}

impl Conv1d {
    pub fn zeros(
        kernel_size: usize,
        in_channels: usize,
        out_channels: usize,
        dilation: usize,
    ) -> Result<Self> {
        if kernel_size.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "kernel_size must be odd, got {kernel_size}"
            )));
        }
        if dilation == 0 {
            return Err(Error::invalid("dilation must be >= 1"));
        }
        Ok(Conv1d {
            kernel_size,
            dilation,
            weight: Array3::zeros((kernel_size, in_channels, out_channels)),
            bias: Array1::zeros(out_channels),
        })
    }

    /// Uniform ±1/√fan_in initialization, fan_in = kernel_size · in_channels.
    pub fn init_uniform<R: Rng>(&mut self, rng: &mut R) {
        let fan_in = (self.kernel_size * self.in_channels()).max(1) as f64;
        let bound = 1.0 / fan_in.sqrt();
        self.weight
            .iter_mut()
            .chain(self.bias.iter_mut())
            .for_each(|w| *w = rng.gen_range(-bound..bound));
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dim().1
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dim().2
    }

    fn check_input(&self, input: &Tensor2) -> Result<()> {
        if input.ncols() != self.in_channels() {
            return Err(Error::dim(format!(
                "conv expects {} input channels, got {}",
                self.in_channels(),
                input.ncols()
            )));
        }
        Ok(())
    }

    /// Valid output-row range and the matching input-row start for tap `j`.
    fn tap_span(&self, j: usize, len: usize) -> Option<(usize, usize, usize)> {
        let half = (self.kernel_size - 1) / 2;
        let shift = (j as isize - half as isize) * self.dilation as isize;
        let out_lo = (-shift).max(0) as usize;
        let out_hi = (len as isize - shift.max(0)).max(0) as usize;
        if out_lo >= out_hi {
            return None;
        }
        let in_lo = (out_lo as isize + shift) as usize;
        Some((out_lo, out_hi, in_lo))
    }

    pub fn forward(&self, input: &Tensor2) -> Result<Tensor2> {
        self.check_input(input)?;
        let len = input.nrows();
        let mut out = Array2::zeros((len, self.out_channels()));
        out.rows_mut()
            .into_iter()
            .for_each(|mut r| r.assign(&self.bias));
        for j in 0..self.kernel_size {
            if let Some((lo, hi, in_lo)) = self.tap_span(j, len) {
                let n = hi - lo;
                let x = input.slice(s![in_lo..in_lo + n, ..]);
                let w = self.weight.index_axis(Axis(0), j);
                general_mat_mul(1.0, &x, &w, 1.0, &mut out.slice_mut(s![lo..hi, ..]));
            }
        }
        Ok(out)
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to `input`.
    pub fn backward(
        &self,
        input: &Tensor2,
        grad_out: &Tensor2,
        grad: &mut Conv1d,
    ) -> Result<Tensor2> {
        self.check_input(input)?;
        let len = input.nrows();
        if grad_out.dim() != (len, self.out_channels()) {
            return Err(Error::dim(format!(
                "conv upstream gradient has shape {:?}, expected ({len}, {})",
                grad_out.dim(),
                self.out_channels()
            )));
        }
        grad.bias += &grad_out.sum_axis(Axis(0));
        let mut grad_in = Array2::zeros(input.raw_dim());
        for j in 0..self.kernel_size {
            if let Some((lo, hi, in_lo)) = self.tap_span(j, len) {
                let n = hi - lo;
                let x = input.slice(s![in_lo..in_lo + n, ..]);
                let g = grad_out.slice(s![lo..hi, ..]);
                let w = self.weight.index_axis(Axis(0), j);
                general_mat_mul(
                    1.0,
                    &x.t(),
                    &g,
                    1.0,
                    &mut grad.weight.index_axis_mut(Axis(0), j),
                );
                general_mat_mul(
                    1.0,
                    &g,
                    &w.t(),
                    1.0,
                    &mut grad_in.slice_mut(s![in_lo..in_lo + n, ..]),
                );
            }
        }
        Ok(grad_in)
    }
}

impl Parameters for Conv1d {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(self.weight.as_slice().expect("standard layout"));
        f(self.bias.as_slice().expect("standard layout"));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(self.weight.as_slice_mut().expect("standard layout"));
        f(self.bias.as_slice_mut().expect("standard layout"));
    }
}
