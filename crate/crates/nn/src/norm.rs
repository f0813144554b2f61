//! Batch normalization over `(batch, height, width)` per channel.

use crate::{Error, Result, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchNormConfig {
    pub eps: f64,
    pub momentum: f64,
}

impl Default for BatchNormConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            momentum: 0.1,
        }
    }
}

/// Values kept from the forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
    training: bool,
}

fn check<T: Scalar>(x: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>) -> Result<[usize; 4]> {
    let dims = x.dims4()?;
    if gamma.len() != dims[1] || beta.len() != dims[1] {
        return Err(Error::Shape(format!(
            "batchnorm over {} channels got gamma {} / beta {}",
            dims[1],
            gamma.len(),
            beta.len()
        )));
    }
    Ok(dims)
}

/// Normalizes `x`. In training mode batch statistics are used and the
/// running statistics are updated with `momentum`; in eval mode the running
/// statistics are used unchanged.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm_forward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &mut [T],
    running_var: &mut [T],
    cfg: BatchNormConfig,
    training: bool,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    let [b, c, h, w] = check(x, gamma, beta)?;
    if running_mean.len() != c || running_var.len() != c {
        return Err(Error::Shape("batchnorm running stats length".into()));
    }
    let plane = h * w;
    let count = b * plane;
    let mut xhat = Tensor::zeros(x.shape());
    let mut y = Tensor::zeros(x.shape());
    let mut inv_std = vec![T::zero(); c];
    for ch in 0..c {
        let (mean, var) = if training {
            let mut sum = 0.0;
            for bi in 0..b {
                sum += x.plane(bi, ch).iter().map(|v| v.as_f64()).sum::<f64>();
            }
            let mean = sum / count as f64;
            let mut ss = 0.0;
            for bi in 0..b {
                ss += x.plane(bi, ch).iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>();
            }
            let var = ss / count as f64;
            let unbiased = if count > 1 { ss / (count - 1) as f64 } else { var };
            let m = cfg.momentum;
            running_mean[ch] = T::lit((1.0 - m) * running_mean[ch].as_f64() + m * mean);
            running_var[ch] = T::lit((1.0 - m) * running_var[ch].as_f64() + m * unbiased);
            (mean, var)
        } else {
            (running_mean[ch].as_f64(), running_var[ch].as_f64())
        };
        let istd = 1.0 / (var + cfg.eps).sqrt();
        inv_std[ch] = T::lit(istd);
        let (mean, istd) = (T::lit(mean), T::lit(istd));
        let (gm, bt) = (gamma.data()[ch], beta.data()[ch]);
        for bi in 0..b {
            let off = (bi * c + ch) * plane;
            let src = &x.data()[off..off + plane];
            let xh = &mut xhat.data_mut()[off..off + plane];
            for (d, &s) in xh.iter_mut().zip(src) {
                *d = (s - mean) * istd;
            }
            let xh = &xhat.data()[off..off + plane];
            for (d, &s) in y.data_mut()[off..off + plane].iter_mut().zip(xh) {
                *d = gm * s + bt;
            }
        }
    }
    Ok((
        y,
        BatchNormCache {
            xhat,
            inv_std,
            training,
        },
    ))
}

/// Returns `(grad_x, grad_gamma, grad_beta)`.
pub fn batchnorm_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    gamma: &Tensor<T>,
    cache: &BatchNormCache<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    if grad_out.shape() != cache.xhat.shape() {
        return Err(Error::Shape(format!(
            "batchnorm grad_out {:?} vs forward {:?}",
            grad_out.shape(),
            cache.xhat.shape()
        )));
    }
    let [b, c, h, w] = grad_out.dims4()?;
    let plane = h * w;
    let m = T::lit((b * plane) as f64);
    let mut gx = Tensor::zeros(grad_out.shape());
    let mut ggamma = Tensor::zeros(&[c]);
    let mut gbeta = Tensor::zeros(&[c]);
    for ch in 0..c {
        let mut sum_dy = T::zero();
        let mut sum_dy_xhat = T::zero();
        for bi in 0..b {
            let dy = grad_out.plane(bi, ch);
            let xh = cache.xhat.plane(bi, ch);
            sum_dy += dy.iter().copied().sum::<T>();
            sum_dy_xhat += crate::dot(dy, xh);
        }
        ggamma.data_mut()[ch] = sum_dy_xhat;
        gbeta.data_mut()[ch] = sum_dy;
        let scale = gamma.data()[ch] * cache.inv_std[ch];
        for bi in 0..b {
            let off = (bi * c + ch) * plane;
            let dy = &grad_out.data()[off..off + plane];
            let xh = &cache.xhat.data()[off..off + plane];
            let dst = &mut gx.data_mut()[off..off + plane];
            if cache.training {
                let k = scale / m;
                for ((d, &g), &xv) in dst.iter_mut().zip(dy).zip(xh) {
                    *d = k * (m * g - sum_dy - xv * sum_dy_xhat);
                }
            } else {
                for (d, &g) in dst.iter_mut().zip(dy) {
                    *d = scale * g;
                }
            }
        }
    }
    Ok((gx, ggamma, gbeta))
}
