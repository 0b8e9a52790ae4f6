//! Linear convolution through zero-padded 2D FFTs.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{Image, Kernel};
use crate::{Error, Result};

/// Smallest `2^a 3^b 5^c >= n`.
pub fn fft_size(n: usize) -> usize {
    let mut candidate = n.max(1);
    loop {
        let mut m = candidate;
        for p in [2, 3, 5] {
            while m.is_multiple_of(p) {
                m /= p;
            }
        }
        if m == 1 {
            return candidate;
        }
        candidate += 1;
    }
}

struct Plan2d {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Plan2d {
    fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            width,
            height,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    fn forward(&self, buf: &mut [Complex<f64>], scratch: &mut Vec<Complex<f64>>) {
        self.transform(buf, scratch, &self.row_fwd, &self.col_fwd);
    }

    fn inverse(&self, buf: &mut [Complex<f64>], scratch: &mut Vec<Complex<f64>>) {
        self.transform(buf, scratch, &self.row_inv, &self.col_inv);
    }

    fn transform(
        &self,
        buf: &mut [Complex<f64>],
        transposed: &mut Vec<Complex<f64>>,
        rows: &Arc<dyn Fft<f64>>,
        cols: &Arc<dyn Fft<f64>>,
    ) {
        let (w, h) = (self.width, self.height);
        run_lines(buf, w, rows);
        transposed.resize(w * h, Complex::default());
        transpose(buf, transposed, w, h);
        run_lines(transposed, h, cols);
        transpose(transposed, buf, h, w);
    }
}

fn run_lines(buf: &mut [Complex<f64>], len: usize, fft: &Arc<dyn Fft<f64>>) {
    let scratch_len = fft.get_inplace_scratch_len();
    buf.par_chunks_mut(len).for_each_init(
        || vec![Complex::default(); scratch_len],
        |scratch, line| fft.process_with_scratch(line, scratch),
    );
}

/// `dst[x * h + y] = src[y * w + x]` for a `w`-wide, `h`-tall source.
fn transpose(src: &[Complex<f64>], dst: &mut [Complex<f64>], w: usize, h: usize) {
    dst.par_chunks_mut(h).enumerate().for_each(|(x, column)| {
        for (y, out) in column.iter_mut().enumerate() {
            *out = src[y * w + x];
        }
    });
}

/// Convolves every channel of `image` with `kernel`.
///
/// The image is zero-padded by `size / 2` on each side, so the result is the
/// linear convolution cropped back to the input frame. Kernel pixel
/// `(cx + dx, cy + dy)` carries light from a source at `p` to `p + (dx, dy)`.
/// Two channels share one complex transform (real and imaginary parts).
///
/// When image and kernel are both non-negative the output is clamped at zero,
/// removing FFT round-off below the true (non-negative) result.
pub fn fft_convolve(image: &Image, kernel: &Kernel) -> Result<Image> {
    let (w, h) = (image.width(), image.height());
    let r = kernel.radius();
    let (pw, ph) = (w + 2 * r, h + 2 * r);
    if w == 0 || h == 0 || kernel.size() > pw || kernel.size() > ph {
        return Err(Error::KernelTooLarge {
            kernel: kernel.size(),
            width: w,
            height: h,
        });
    }

    let mut out = Image::zeros(w, h, image.channels());
    let planes: Vec<usize> = (0..image.channels())
        .filter(|&c| image.plane(c).iter().any(|&v| v != 0.0))
        .collect();
    if planes.is_empty() {
        return Ok(out);
    }

    let (nw, nh) = (fft_size(pw), fft_size(ph));
    let plan = Plan2d::new(nw, nh);
    let mut scratch = Vec::new();

    let mut spectrum = vec![Complex::default(); nw * nh];
    let s = kernel.size();
    for y in 0..s {
        for x in 0..s {
            spectrum[y * nw + x].re = kernel.at(x, y);
        }
    }
    plan.forward(&mut spectrum, &mut scratch);

    let scale = 1.0 / (nw * nh) as f64;
    let mut buf = vec![Complex::default(); nw * nh];
    for pair in planes.chunks(2) {
        buf.fill(Complex::default());
        let (re, im) = (pair[0], pair.get(1).copied());
        for y in 0..h {
            let row = &mut buf[y * nw..y * nw + w];
            for (x, z) in row.iter_mut().enumerate() {
                z.re = image.get(x, y, re);
                if let Some(im) = im {
                    z.im = image.get(x, y, im);
                }
            }
        }
        plan.forward(&mut buf, &mut scratch);
        buf.par_iter_mut()
            .zip(spectrum.par_iter())
            .for_each(|(z, k)| *z = *z * *k * scale);
        plan.inverse(&mut buf, &mut scratch);

        let mut write = |c: usize, pick: fn(&Complex<f64>) -> f64| {
            let plane = out.plane_mut(c);
            for y in 0..h {
                let src = &buf[(y + r) * nw + r..(y + r) * nw + r + w];
                for (dst, z) in plane[y * w..(y + 1) * w].iter_mut().zip(src) {
                    *dst = pick(z);
                }
            }
        };
        write(re, |z| z.re);
        if let Some(im) = im {
            write(im, |z| z.im);
        }
    }

    if image.min_value() >= 0.0 {
        out.clamp_negative();
    }
    Ok(out)
}

impl Image {
    fn clamp_negative(&mut self) {
        for c in 0..self.channels() {
            for v in self.plane_mut(c) {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
    }
}
