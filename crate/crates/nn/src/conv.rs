//! Grouped 2-D cross-correlation (no kernel flip), forward and backward.
//!
//! Depthwise convolution is the `groups == in_channels` case and pointwise
//! convolution is `k == 1, groups == 1`; both go through the same kernels.

use rayon::prelude::*;

use crate::{axpy, dot, Error, Result, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub groups: usize,
}

impl ConvGeometry {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride: 1,
            pad: kernel / 2,
            groups: 1,
        }
    }

    pub fn pointwise(in_channels: usize, out_channels: usize) -> Self {
        Self {
            pad: 0,
            ..Self::new(in_channels, out_channels, 1)
        }
    }

    pub fn depthwise(channels: usize, kernel: usize) -> Self {
        Self {
            groups: channels,
            ..Self::new(channels, channels, kernel)
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_pad(mut self, pad: usize) -> Self {
        self.pad = pad;
        self
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.stride == 0 || self.groups == 0 {
            return Err(Error::Invalid(format!(
                "kernel, stride and groups must be positive: {self:?}"
            )));
        }
        if !self.in_channels.is_multiple_of(self.groups) || !self.out_channels.is_multiple_of(self.groups) {
            return Err(Error::Invalid(format!(
                "groups {} must divide in-channels {} and out-channels {}",
                self.groups, self.in_channels, self.out_channels
            )));
        }
        Ok(())
    }

    pub fn in_per_group(&self) -> usize {
        self.in_channels / self.groups
    }

    pub fn out_per_group(&self) -> usize {
        self.out_channels / self.groups
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_per_group(), self.kernel, self.kernel]
    }

    pub fn weight_len(&self) -> usize {
        self.weight_shape().iter().product()
    }

    pub fn out_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (hp, wp) = (h + 2 * self.pad, w + 2 * self.pad);
        if hp < self.kernel || wp < self.kernel {
            return Err(Error::Shape(format!(
                "input {h}x{w} with pad {} is smaller than kernel {}",
                self.pad, self.kernel
            )));
        }
        Ok((
            (hp - self.kernel) / self.stride + 1,
            (wp - self.kernel) / self.stride + 1,
        ))
    }

    /// Multiply-accumulates per input item: out elements times taps per output.
    pub fn macs(&self, h: usize, w: usize) -> Result<u64> {
        let (ho, wo) = self.out_size(h, w)?;
        Ok((ho * wo * self.out_channels) as u64 * (self.kernel * self.kernel * self.in_per_group()) as u64)
    }

    fn check_input<T: Scalar>(&self, x: &Tensor<T>) -> Result<[usize; 4]> {
        self.validate()?;
        let dims = x.dims4()?;
        if dims[1] != self.in_channels {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {}",
                self.in_channels, dims[1]
            )));
        }
        Ok(dims)
    }

    fn check_weight<T: Scalar>(&self, w: &Tensor<T>) -> Result<()> {
        if w.shape() != self.weight_shape() {
            return Err(Error::Shape(format!(
                "conv weight shape {:?} does not match {:?}",
                w.shape(),
                self.weight_shape()
            )));
        }
        Ok(())
    }

    /// Output columns `[lo, hi)` whose input column `ox*stride + kx - pad`
    /// falls inside `[0, width)`.
    fn col_range(&self, wo: usize, width: usize, kx: usize) -> (usize, usize) {
        let (s, p) = (self.stride, self.pad);
        let lo = if kx >= p { 0 } else { (p - kx).div_ceil(s) };
        let last = width as isize - 1 + p as isize - kx as isize;
        let hi = if last < 0 { 0 } else { (last as usize / s + 1).min(wo) };
        (lo, hi.max(lo))
    }

    fn in_row(&self, oy: usize, ky: usize, height: usize) -> Option<usize> {
        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
        (iy >= 0 && (iy as usize) < height).then_some(iy as usize)
    }
}

pub struct ConvGrads<T> {
    pub x: Tensor<T>,
    pub w: Tensor<T>,
    pub b: Option<Tensor<T>>,
}

pub fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
    g: &ConvGeometry,
) -> Result<Tensor<T>> {
    let [batch, _, h, wd] = g.check_input(x)?;
    g.check_weight(w)?;
    if let Some(b) = b {
        if b.len() != g.out_channels {
            return Err(Error::Shape(format!(
                "conv bias has {} entries for {} channels",
                b.len(),
                g.out_channels
            )));
        }
    }
    let (ho, wo) = g.out_size(h, wd)?;
    let (cin_g, cout_g, k) = (g.in_per_group(), g.out_per_group(), g.kernel);
    let mut out = Tensor::zeros(&[batch, g.out_channels, ho, wo]);
    let wdata = w.data();
    out.data_mut()
        .par_chunks_mut(ho * wo)
        .enumerate()
        .for_each(|(idx, plane)| {
            let (bi, oc) = (idx / g.out_channels, idx % g.out_channels);
            let group = oc / cout_g;
            for icl in 0..cin_g {
                let xp = x.plane(bi, group * cin_g + icl);
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = wdata[((oc * cin_g + icl) * k + ky) * k + kx];
                        let (lo, hi) = g.col_range(wo, wd, kx);
                        if lo >= hi {
                            continue;
                        }
                        for oy in 0..ho {
                            let Some(iy) = g.in_row(oy, ky, h) else {
                                continue;
                            };
                            let xrow = &xp[iy * wd..(iy + 1) * wd];
                            let orow = &mut plane[oy * wo..(oy + 1) * wo];
                            if g.stride == 1 {
                                let off = lo + kx - g.pad;
                                axpy(wv, &xrow[off..off + hi - lo], &mut orow[lo..hi]);
                            } else {
                                for ox in lo..hi {
                                    orow[ox] += wv * xrow[ox * g.stride + kx - g.pad];
                                }
                            }
                        }
                    }
                }
            }
            if let Some(b) = b {
                let bv = b.data()[oc];
                plane.iter_mut().for_each(|v| *v += bv);
            }
        });
    Ok(out)
}

pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    grad_out: &Tensor<T>,
    with_bias: bool,
    g: &ConvGeometry,
) -> Result<ConvGrads<T>> {
    let [batch, cin, h, wd] = g.check_input(x)?;
    g.check_weight(w)?;
    let (ho, wo) = g.out_size(h, wd)?;
    if grad_out.shape() != [batch, g.out_channels, ho, wo] {
        return Err(Error::Shape(format!(
            "conv grad_out shape {:?}, expected {:?}",
            grad_out.shape(),
            [batch, g.out_channels, ho, wo]
        )));
    }
    let (cin_g, cout_g, k) = (g.in_per_group(), g.out_per_group(), g.kernel);
    let wdata = w.data();

    let mut grad_w = Tensor::zeros(&g.weight_shape());
    grad_w
        .data_mut()
        .par_chunks_mut(cin_g * k * k)
        .enumerate()
        .for_each(|(oc, gw)| {
            let group = oc / cout_g;
            for bi in 0..batch {
                let gop = grad_out.plane(bi, oc);
                for icl in 0..cin_g {
                    let xp = x.plane(bi, group * cin_g + icl);
                    for ky in 0..k {
                        for kx in 0..k {
                            let (lo, hi) = g.col_range(wo, wd, kx);
                            if lo >= hi {
                                continue;
                            }
                            let mut acc = T::zero();
                            for oy in 0..ho {
                                let Some(iy) = g.in_row(oy, ky, h) else {
                                    continue;
                                };
                                let xrow = &xp[iy * wd..(iy + 1) * wd];
                                let grow = &gop[oy * wo..(oy + 1) * wo];
                                if g.stride == 1 {
                                    let off = lo + kx - g.pad;
                                    acc += dot(&grow[lo..hi], &xrow[off..off + hi - lo]);
                                } else {
                                    for ox in lo..hi {
                                        acc += grow[ox] * xrow[ox * g.stride + kx - g.pad];
                                    }
                                }
                            }
                            gw[(icl * k + ky) * k + kx] += acc;
                        }
                    }
                }
            }
        });

    let grad_b = with_bias.then(|| {
        let mut gb = Tensor::zeros(&[g.out_channels]);
        for bi in 0..batch {
            for oc in 0..g.out_channels {
                gb.data_mut()[oc] += grad_out.plane(bi, oc).iter().copied().sum::<T>();
            }
        }
        gb
    });

    let mut grad_x = Tensor::zeros(&[batch, cin, h, wd]);
    grad_x
        .data_mut()
        .par_chunks_mut(h * wd)
        .enumerate()
        .for_each(|(idx, gx)| {
            let (bi, ic) = (idx / cin, idx % cin);
            let (group, icl) = (ic / cin_g, ic % cin_g);
            for oc in group * cout_g..(group + 1) * cout_g {
                let gop = grad_out.plane(bi, oc);
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = wdata[((oc * cin_g + icl) * k + ky) * k + kx];
                        let (lo, hi) = g.col_range(wo, wd, kx);
                        if lo >= hi {
                            continue;
                        }
                        for oy in 0..ho {
                            let Some(iy) = g.in_row(oy, ky, h) else {
                                continue;
                            };
                            let grow = &gop[oy * wo..(oy + 1) * wo];
                            let xrow = &mut gx[iy * wd..(iy + 1) * wd];
                            if g.stride == 1 {
                                let off = lo + kx - g.pad;
                                axpy(wv, &grow[lo..hi], &mut xrow[off..off + hi - lo]);
                            } else {
                                for ox in lo..hi {
                                    xrow[ox * g.stride + kx - g.pad] += wv * grow[ox];
                                }
                            }
                        }
                    }
                }
            }
        });

    Ok(ConvGrads {
        x: grad_x,
        w: grad_w,
        b: grad_b,
    })
}
